//! Configuration counts, rule counts, cost bounds and the duration model.

use serde::Serialize;
use thiserror::Error;

use crate::lang::{AdviceRule, AspectOfAssembly, Atom};
use crate::orchestrator::{union, Cascade, CascadeError};

/// `2^n × (1 + p_a)`.
pub fn count_mono_configurations(n: u32, p_a: f64) -> f64 {
    2f64.powi(n as i32) * (1.0 + p_a)
}

/// Per-cycle aspect counts `m` and, per cycle, how many of them create a
/// component later cycles depend on (`r`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CascadeShape {
    pub m: Vec<u32>,
    pub r: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("M has {m} cycles but R has {r}")]
    LengthMismatch { m: usize, r: usize },
    #[error("cycle {cycle}: R = {r} exceeds M = {m}")]
    RExceedsM { cycle: usize, m: u32, r: u32 },
}

impl CascadeShape {
    pub fn new(m: Vec<u32>, r: Vec<u32>) -> Result<Self, ShapeError> {
        if m.len() != r.len() {
            return Err(ShapeError::LengthMismatch {
                m: m.len(),
                r: r.len(),
            });
        }
        if let Some((cycle, (&m, &r))) = m.iter().zip(&r).enumerate().find(|(_, (m, r))| r > m) {
            return Err(ShapeError::RExceedsM { cycle, m, r });
        }
        Ok(CascadeShape { m, r })
    }

    pub fn k(&self) -> usize {
        self.m.len()
    }
}

/// `∏ 2^(M(i) − R(i))`, saturating.
pub fn count_cascade_configurations(shape: &CascadeShape) -> u128 {
    let exp: u32 = shape.m.iter().zip(&shape.r).map(|(m, r)| m - r).sum();
    pow2(exp)
}

fn pow2(exp: u32) -> u128 {
    1u128.checked_shl(exp).unwrap_or(u128::MAX)
}

/// Number of rules of all advices, every rule kind counted.
pub fn nb_rules<'a>(aas: impl IntoIterator<Item = &'a AspectOfAssembly>) -> usize {
    aas.into_iter().map(AspectOfAssembly::rule_count).sum()
}

pub fn nb_rules_per_cycle(cascade: &Cascade) -> Vec<usize> {
    cascade.cycles.iter().map(nb_rules).collect()
}

/// `(2^nbRule − (nbRule + 1)) × card(App0)`: pairwise merges, per unit
/// merge cost.
pub fn merge_upper_bound_mono(nb_rule: u32, card_app0: u64) -> u128 {
    let subsets = pow2(nb_rule).saturating_sub(nb_rule as u128 + 1);
    subsets.saturating_mul(card_app0 as u128)
}

/// `Σ (2^nbRule_i − (nbRule_i + 1)) × card(App_i)`.
pub fn merge_upper_bound_multi(per_cycle: &[(u32, u64)]) -> u128 {
    per_cycle.iter().fold(0u128, |acc, &(n, app)| {
        acc.saturating_add(merge_upper_bound_mono(n, app))
    })
}

fn pow(base: u64, exp: u32) -> u128 {
    (base as u128).checked_pow(exp).unwrap_or(u128::MAX)
}

/// Combinations when every pointcut is matched against the same
/// `nb_jpoint` joinpoints at once: `∏ nbJPoint^card(pointcut_i)`.
pub fn combination_count_mono(nb_jpoint: u64, pointcut_sizes: &[u32]) -> u128 {
    pointcut_sizes
        .iter()
        .fold(1u128, |acc, &s| acc.saturating_mul(pow(nb_jpoint, s)))
}

/// `Σ nbJPoint_j^card(pointcut_j)` over `(nbJPoint_j, card(pointcut_j))`.
pub fn combination_count_multi(per_pointcut: &[(u64, u32)]) -> u128 {
    per_pointcut
        .iter()
        .fold(0u128, |acc, &(n, s)| acc.saturating_add(pow(n, s)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostModelParams {
    pub a1: f64,
    pub a2: f64,
    /// Cost of one merge.
    pub m_cost: f64,
    /// Rules in the base assembly.
    pub g0: f64,
    /// `(w_i, p_i)`: advice rules and merging probability per instance.
    pub instances: Vec<(f64, f64)>,
}

impl CostModelParams {
    /// `g0 × Σ w_i · p_i · M`.
    pub fn regressor(&self) -> f64 {
        self.g0
            * self
                .instances
                .iter()
                .map(|(w, p)| w * p * self.m_cost)
                .sum::<f64>()
    }
}

/// `F = a1 · g0 × Σ w_i · p_i · M + a2`.
pub fn evaluate_cost_model(params: &CostModelParams) -> f64 {
    params.a1 * params.regressor() + params.a2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fit {
    pub a1: f64,
    pub a2: f64,
    /// Root mean square of the residuals.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FitError {
    #[error("degenerate fit: need at least 2 samples with distinct regressor values")]
    DegenerateFit,
}

/// Least squares of `y = a1 · x + a2` over `(x, y)` samples.
pub fn fit_cost_model(samples: &[(f64, f64)]) -> Result<Fit, FitError> {
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return Err(FitError::DegenerateFit);
    }
    let mean_x = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let mean_y = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxx: f64 = samples.iter().map(|(x, _)| (x - mean_x).powi(2)).sum();
    let sxy: f64 = samples
        .iter()
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let scale = samples
        .iter()
        .map(|s| s.0.abs())
        .fold(0.0, f64::max)
        .max(1.0);
    if sxx <= f64::EPSILON * scale * scale * n {
        return Err(FitError::DegenerateFit);
    }
    let a1 = sxy / sxx;
    let a2 = mean_y - a1 * mean_x;
    let sse: f64 = samples
        .iter()
        .map(|(x, y)| (y - (a1 * x + a2)).powi(2))
        .sum();
    Ok(Fit {
        a1,
        a2,
        residual: (sse / n).sqrt(),
    })
}

/// Whether `aa` instantiates a component that a pointcut of `later` can
/// only find among fresh components: the pattern starts with a literal and
/// matches the first fresh id of one of `aa`'s local names.
fn feeds(aa: &AspectOfAssembly, later: &AspectOfAssembly) -> bool {
    let locals: Vec<String> = aa
        .rules
        .iter()
        .filter_map(|r| match r {
            AdviceRule::Instantiate { local_name, .. } => Some(format!("{local_name}1")),
            _ => None,
        })
        .collect();
    later.pointcut.iter().any(|rule| {
        matches!(rule.pattern.component.first(), Some(Atom::Literal(_)))
            && locals.iter().any(|id| rule.pattern.matches_component(id))
    })
}

/// Shape of the union of `cascades`, with R derived from which aspects
/// create components that later-cycle pointcuts look for.
pub fn derive_shape(cascades: &[Cascade]) -> Result<CascadeShape, CascadeError> {
    let mut merged: Option<Cascade> = None;
    for c in cascades {
        merged = Some(match merged {
            None => union(c, c)?,
            Some(acc) => union(&acc, c)?,
        });
    }
    let cycles = merged.map(|c| c.cycles).unwrap_or_default();
    let m = cycles.iter().map(|c| c.len() as u32).collect();
    let r = cycles
        .iter()
        .enumerate()
        .map(|(i, cycle)| {
            cycle
                .iter()
                .filter(|aa| {
                    cycles[i + 1..]
                        .iter()
                        .flatten()
                        .any(|later| feeds(aa, later))
                })
                .count() as u32
        })
        .collect();
    Ok(CascadeShape { m, r })
}
