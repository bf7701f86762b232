use std::fmt::Write as _;

use serde::Serialize;

use crate::orchestrator::weave_cascade;

use super::workload::{generate_workload, WorkloadSpec};

pub const CSV_HEADER: &str =
    "joinpoints,p_i,rep,match_us,combine_us,factory_us,merge_us,lower_us,total_us,merge_ops,conflict_groups";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchConfig {
    pub joinpoints: Vec<usize>,
    pub p_values: Vec<f64>,
    pub repetitions: usize,
    pub warmup: usize,
    pub seed: u64,
    pub aa_count: usize,
    pub rules_per_aa: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            joinpoints: (0..=120).step_by(20).collect(),
            p_values: vec![0.0, 0.33, 0.5],
            repetitions: 5,
            warmup: 1,
            seed: 1,
            aa_count: 8,
            rules_per_aa: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub joinpoints: usize,
    pub p_i: f64,
    pub rep: usize,
    pub match_us: u64,
    pub combine_us: u64,
    pub factory_us: u64,
    pub merge_us: u64,
    pub lower_us: u64,
    pub total_us: u64,
    pub merge_ops: usize,
    pub conflict_groups: usize,
}

/// Weaves one generated workload per grid point and repetition. Warm-up
/// weaves of the same workload run first and are discarded.
pub fn run_bench(config: &BenchConfig) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    for &p in &config.p_values {
        for &j in &config.joinpoints {
            for rep in 0..config.repetitions {
                let spec = WorkloadSpec {
                    seed: config
                        .seed
                        .wrapping_add(rep as u64)
                        .wrapping_mul(1_000_003)
                        .wrapping_add(j as u64),
                    joinpoint_count: j,
                    aa_count: config.aa_count,
                    rules_per_aa: config.rules_per_aa,
                    conflict_probability: p,
                    cycles: 1,
                    extra_components: 0,
                };
                let w = generate_workload(&spec);
                for _ in 0..config.warmup {
                    let _ = weave_cascade(&w.base, &w.cascades, &w.catalog);
                }
                let out = weave_cascade(&w.base, &w.cascades, &w.catalog)
                    .expect("generated cascade is consistent");
                let mut row = BenchRow {
                    joinpoints: j,
                    p_i: p,
                    rep,
                    match_us: 0,
                    combine_us: 0,
                    factory_us: 0,
                    merge_us: 0,
                    lower_us: 0,
                    total_us: 0,
                    merge_ops: 0,
                    conflict_groups: 0,
                };
                for r in &out.reports {
                    row.match_us += r.durations.match_us;
                    row.combine_us += r.durations.combine_us;
                    row.factory_us += r.durations.factory_us;
                    row.merge_us += r.durations.merge_us;
                    row.lower_us += r.durations.lower_us;
                    row.total_us += r.durations.total_us();
                    row.merge_ops += r.merge_ops;
                    row.conflict_groups += r.conflict_groups;
                }
                rows.push(row);
            }
        }
    }
    rows
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.joinpoints,
            r.p_i,
            r.rep,
            r.match_us,
            r.combine_us,
            r.factory_us,
            r.merge_us,
            r.lower_us,
            r.total_us,
            r.merge_ops,
            r.conflict_groups
        );
    }
    out
}

/// Rows of a CSV written by [`to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<BenchRow>, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 11 {
                return Err(format!(
                    "row {}: expected 11 fields, found {}",
                    i + 1,
                    f.len()
                ));
            }
            let u = |k: usize| {
                f[k].parse::<u64>()
                    .map_err(|e| format!("row {}: field {}: {e}", i + 1, k + 1))
            };
            Ok(BenchRow {
                joinpoints: u(0)? as usize,
                p_i: f[1]
                    .parse()
                    .map_err(|e| format!("row {}: p_i: {e}", i + 1))?,
                rep: u(2)? as usize,
                match_us: u(3)?,
                combine_us: u(4)?,
                factory_us: u(5)?,
                merge_us: u(6)?,
                lower_us: u(7)?,
                total_us: u(8)?,
                merge_ops: u(9)? as usize,
                conflict_groups: u(10)? as usize,
            })
        })
        .collect()
}

/// Spearman rank correlation, average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}
