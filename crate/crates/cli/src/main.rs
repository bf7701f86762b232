use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aa_weave::analysis::{
    combination_count_mono, combination_count_multi, count_cascade_configurations,
    count_mono_configurations, derive_shape, fit_cost_model, merge_upper_bound_mono,
    merge_upper_bound_multi, nb_rules, CascadeShape,
};
use aa_weave::assembly::Assembly;
use aa_weave::export::{to_dot, to_json, to_json_value};
use aa_weave::lang::AdviceRule;
use aa_weave::manifest::{load_aa, load_assembly, load_catalog, load_manifest, Loaded};
use aa_weave::orchestrator::{union, weave_cascade, Cascade};
use aa_weave::sim::{
    parse_csv, parse_script, run_bench, run_scenario, spearman, to_csv, BenchConfig, SimConfig,
};
use aa_weave::weaving::TypeCatalog;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "aaweave",
    version,
    about = "Weave aspects of assembly into component assemblies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Weave aspects into a base assembly.
    Weave(WeaveArgs),
    /// Play an environment script and trace every weave.
    Simulate(SimulateArgs),
    /// Time generated workloads over a joinpoint sweep.
    Bench(BenchArgs),
    /// Configuration counts, cost bounds and duration model fits.
    Analyze(AnalyzeArgs),
    /// Parse aspects and manifests and report lints.
    Validate(ValidateArgs),
}

#[derive(Args)]
#[group(id = "source", required = true, multiple = false, args = ["aa", "cascade"])]
struct Sources {
    /// Aspect files woven together in a single cycle.
    #[arg(long, num_args = 1..)]
    aa: Vec<PathBuf>,
    /// Cascade manifest, or an array of manifests.
    #[arg(long)]
    cascade: Option<PathBuf>,
}

#[derive(Args)]
struct WeaveArgs {
    #[arg(long)]
    base: PathBuf,
    #[command(flatten)]
    sources: Sources,
    /// Type catalog used with --aa.
    #[arg(long, requires = "aa")]
    types: Option<PathBuf>,
    /// Weave only these aspects.
    #[arg(long, num_args = 1..)]
    select: Vec<String>,
    /// Woven assembly JSON; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dot: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    base: Option<PathBuf>,
    #[arg(long)]
    cascade: PathBuf,
    #[arg(long)]
    script: PathBuf,
    /// Trace JSON; stdout when absent.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Logical duration of one weave in milliseconds.
    #[arg(long, default_value_t = SimConfig::default().weave_ms)]
    weave_ms: u64,
    /// Unused: the simulation has no random choices.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    /// Joinpoint sweep as START:END:STEP.
    #[arg(long, default_value = "0:120:20", value_parser = parse_sweep)]
    sweep: Sweep,
    /// Conflict probabilities.
    #[arg(long = "p", num_args = 1.., value_delimiter = ',', default_values_t = [0.0, 0.33, 0.5])]
    p: Vec<f64>,
    #[arg(long, default_value_t = BenchConfig::default().repetitions)]
    reps: usize,
    #[arg(long, default_value_t = BenchConfig::default().warmup)]
    warmup: usize,
    #[arg(long, default_value_t = BenchConfig::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = BenchConfig::default().aa_count)]
    aas: usize,
    #[arg(long, default_value_t = BenchConfig::default().rules_per_aa)]
    rules: usize,
    /// CSV output; stdout when absent.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
#[group(id = "input", required = true, args = ["cascade", "shape", "fit"])]
struct AnalyzeArgs {
    #[arg(long)]
    cascade: Option<PathBuf>,
    /// JSON object `{"m": [...], "r": [...]}`.
    #[arg(long, conflicts_with = "cascade")]
    shape: Option<PathBuf>,
    /// Benchmark CSV to fit the duration model against.
    #[arg(long)]
    fit: Option<PathBuf>,
    /// Probability that an aspect duplicates an advice instance.
    #[arg(long, default_value_t = 0.0)]
    p_a: f64,
    /// Joinpoints per pointcut; defaults to the ports of --base, else 10.
    #[arg(long)]
    joinpoints: Option<u64>,
    #[arg(long)]
    base: Option<PathBuf>,
    /// Advice instances per cycle used in the merge bounds.
    #[arg(long, default_value_t = 1)]
    instances: u64,
}

#[derive(Args)]
#[group(id = "files", required = true, multiple = true, args = ["aa", "cascade"])]
struct ValidateArgs {
    #[arg(long, num_args = 1..)]
    aa: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    cascade: Vec<PathBuf>,
    /// Catalog to check instantiated types against.
    #[arg(long)]
    types: Option<PathBuf>,
}

#[derive(Clone)]
struct Sweep(Vec<usize>);

fn parse_sweep(s: &str) -> Result<Sweep, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
    match parts.as_slice() {
        [one] => Ok(Sweep(vec![num(one)?])),
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if step == 0 || a > b {
                return Err("expected START <= END and STEP > 0".into());
            }
            Ok(Sweep((a..=b).step_by(step).collect()))
        }
        _ => Err("expected START:END:STEP".into()),
    }
}

/// Exit codes.
const USAGE: u8 = 1;
const INVALID: u8 = 2;
const WEAVE_FAILED: u8 = 3;

struct Failure(u8, String);

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure(INVALID, e.to_string())
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => {
            fs::write(p, text).map_err(|e| Failure(INVALID, format!("{}: {e}", p.display())))
        }
        None => {
            // a closed pipe downstream is not an error
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            Ok(())
        }
    }
}

fn load_sources(s: &Sources, types: Option<&Path>) -> Result<Loaded, Failure> {
    if let Some(path) = &s.cascade {
        return load_manifest(path).map_err(invalid);
    }
    let aas =
        s.aa.iter()
            .map(|p| load_aa(p))
            .collect::<Result<Vec<_>, _>>()
            .map_err(invalid)?;
    let catalog = match types {
        Some(p) => load_catalog(p).map_err(invalid)?,
        None => TypeCatalog::default(),
    };
    Ok(Loaded {
        cascades: vec![Cascade::mono(aas)],
        catalog,
    })
}

fn select(cascades: Vec<Cascade>, names: &[String]) -> Result<Vec<Cascade>, Failure> {
    if names.is_empty() {
        return Ok(cascades);
    }
    let known: BTreeSet<String> = cascades.iter().flat_map(Cascade::aa_names).collect();
    if let Some(missing) = names.iter().find(|n| !known.contains(*n)) {
        return Err(Failure(
            USAGE,
            format!("--select: no aspect named `{missing}`"),
        ));
    }
    let wanted: BTreeSet<String> = names.iter().cloned().collect();
    Ok(cascades.iter().map(|c| c.select(&wanted)).collect())
}

fn cmd_weave(args: WeaveArgs) -> Result<(), Failure> {
    let base = load_assembly(&args.base).map_err(invalid)?;
    let loaded = load_sources(&args.sources, args.types.as_deref())?;
    let cascades = select(loaded.cascades, &args.select)?;
    let out = weave_cascade(&base, &cascades, &loaded.catalog).map_err(invalid)?;
    write_or_print(args.out.as_deref(), &to_json(&out.assembly))?;
    if let Some(p) = &args.dot {
        write_or_print(Some(p), &to_dot(&out.assembly))?;
    }
    if let Some(p) = &args.report {
        let doc = json!({
            "reports": out.reports,
            "instructions": out.instructions.iter().map(ToString::to_string).collect::<Vec<_>>(),
            "error": out.error.as_ref().map(ToString::to_string),
        });
        write_or_print(
            Some(p),
            &serde_json::to_string_pretty(&doc).expect("report serializes"),
        )?;
    }
    match out.error {
        Some(e) => Err(Failure(WEAVE_FAILED, e.to_string())),
        None => Ok(()),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let base = match &args.base {
        Some(p) => load_assembly(p).map_err(invalid)?,
        None => Assembly::new(),
    };
    let loaded = load_manifest(&args.cascade).map_err(invalid)?;
    let text = fs::read_to_string(&args.script)
        .map_err(|e| invalid(format!("{}: {e}", args.script.display())))?;
    let script =
        parse_script(&text).map_err(|e| invalid(format!("{}:{e}", args.script.display())))?;
    let config = SimConfig {
        weave_ms: args.weave_ms,
    };
    let trace = run_scenario(&base, &loaded.cascades, &loaded.catalog, &script, &config)
        .map_err(invalid)?;
    let doc = json!({
        "weaves": trace.weaves,
        "records": trace.records,
        "selection": trace.selection,
        "assembly": to_json_value(&trace.assembly),
    });
    write_or_print(
        args.trace.as_deref(),
        &serde_json::to_string_pretty(&doc).expect("trace serializes"),
    )?;
    let failed = trace
        .records
        .iter()
        .flat_map(|r| &r.reports)
        .find_map(|r| r.failure.as_ref());
    match failed {
        Some(f) => Err(Failure(WEAVE_FAILED, f.clone())),
        None => Ok(()),
    }
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    if args.p.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Failure(USAGE, "--p values must lie in [0, 1]".into()));
    }
    let config = BenchConfig {
        joinpoints: args.sweep.0,
        p_values: args.p,
        repetitions: args.reps,
        warmup: args.warmup,
        seed: args.seed,
        aa_count: args.aas,
        rules_per_aa: args.rules,
    };
    let rows = run_bench(&config);
    write_or_print(args.csv.as_deref(), to_csv(&rows).trim_end())
}

fn print_fit(path: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let rows = parse_csv(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let samples: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.joinpoints as f64 * r.p_i, r.merge_us as f64))
        .collect();
    let fit = fit_cost_model(&samples).map_err(invalid)?;
    println!("fit merge_us = a1 * joinpoints * p_i + a2");
    println!("a1: {:.4}", fit.a1);
    println!("a2: {:.4}", fit.a2);
    println!("rms residual: {:.4}", fit.residual);
    for p in rows.iter().map(|r| r.p_i).collect::<Vec<_>>().iter().fold(
        Vec::<f64>::new(),
        |mut acc, &p| {
            if !acc.contains(&p) {
                acc.push(p);
            }
            acc
        },
    ) {
        let (xs, ys): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.p_i == p)
            .map(|r| (r.joinpoints as f64, r.total_us as f64))
            .unzip();
        println!(
            "spearman(joinpoints, total_us) at p_i={p}: {:.3}",
            spearman(&xs, &ys)
        );
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    if let Some(p) = &args.fit {
        print_fit(p)?;
    }
    if let Some(p) = &args.shape {
        let text = fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
        let doc: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
        let list = |k: &str| -> Result<Vec<u32>, Failure> {
            serde_json::from_value(doc.get(k).cloned().unwrap_or_default())
                .map_err(|e| invalid(format!("{}: field `{k}`: {e}", p.display())))
        };
        let shape = CascadeShape::new(list("m")?, list("r")?).map_err(invalid)?;
        println!("M: {:?}", shape.m);
        println!("R: {:?}", shape.r);
        println!(
            "multi-cycle configurations: {}",
            count_cascade_configurations(&shape)
        );
    }
    let Some(path) = &args.cascade else {
        return Ok(());
    };
    let loaded = load_manifest(path).map_err(invalid)?;
    let shape = derive_shape(&loaded.cascades).map_err(invalid)?;
    let merged = loaded.cascades.iter().try_fold(None::<Cascade>, |acc, c| {
        Ok::<_, Failure>(Some(match acc {
            None => c.clone(),
            Some(a) => union(&a, c).map_err(invalid)?,
        }))
    })?;
    let cycles = merged.map(|c| c.cycles).unwrap_or_default();
    let nb_jpoint = match (args.joinpoints, &args.base) {
        (Some(n), _) => n,
        (None, Some(b)) => {
            let base = load_assembly(b).map_err(invalid)?;
            base.components().map(|c| c.ports.len() as u64).sum()
        }
        (None, None) => 10,
    };
    let rules: Vec<u32> = cycles.iter().map(|c| nb_rules(c) as u32).collect();
    let pointcuts: Vec<u32> = cycles
        .iter()
        .flatten()
        .map(|aa| aa.pointcut.len() as u32)
        .collect();
    let per_cycle: Vec<(u32, u64)> = rules.iter().map(|&r| (r, args.instances)).collect();
    let per_pointcut: Vec<(u64, u32)> = pointcuts.iter().map(|&s| (nb_jpoint, s)).collect();
    println!("cascades: {}", loaded.cascades.len());
    println!("M: {:?}", shape.m);
    println!("R: {:?}", shape.r);
    println!(
        "multi-cycle configurations: {}",
        count_cascade_configurations(&shape)
    );
    println!(
        "mono-cycle configurations: {}",
        count_mono_configurations(loaded.cascades.len() as u32, args.p_a)
    );
    println!("rules per cycle: {rules:?}");
    println!(
        "merge upper bound (mono): {}",
        merge_upper_bound_mono(rules.iter().sum(), args.instances)
    );
    println!(
        "merge upper bound (multi): {}",
        merge_upper_bound_multi(&per_cycle)
    );
    println!("joinpoints: {nb_jpoint}");
    println!(
        "combination count (mono): {}",
        combination_count_mono(nb_jpoint, &pointcuts)
    );
    println!(
        "combination count (multi): {}",
        combination_count_multi(&per_pointcut)
    );
    Ok(())
}

fn lint(
    path: &Path,
    aa: &aa_weave::lang::AspectOfAssembly,
    catalog: Option<&TypeCatalog>,
) -> Vec<String> {
    let mut out = Vec::new();
    if aa.rules.is_empty() {
        out.push("advice has no rules".to_string());
    }
    for v in aa.variables() {
        let used = aa.rules.iter().any(|r| {
            r.to_string()
                .split(|c: char| !c.is_alphanumeric() && c != '_')
                .any(|t| t == v)
        });
        if !used {
            out.push(format!(
                "pointcut variable `{v}` is never used by the advice"
            ));
        }
    }
    if let Some(catalog) = catalog {
        for r in &aa.rules {
            if let AdviceRule::Instantiate { type_name, .. } = r {
                if !catalog.0.contains_key(type_name) {
                    out.push(format!("type `{type_name}` is not in the catalog"));
                }
            }
        }
    }
    out.into_iter()
        .map(|w| format!("{}: warning: {w}", path.display()))
        .collect()
}

fn cmd_validate(args: ValidateArgs) -> Result<(), Failure> {
    let catalog = args
        .types
        .as_deref()
        .map(load_catalog)
        .transpose()
        .map_err(invalid)?;
    let mut errors = Vec::new();
    for path in &args.aa {
        match load_aa(path) {
            Ok(aa) => {
                for w in lint(path, &aa, catalog.as_ref()) {
                    eprintln!("{w}");
                }
                println!("{}: ok ({} rules)", path.display(), aa.rule_count());
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    for path in &args.cascade {
        match load_manifest(path) {
            Ok(loaded) => {
                let aspects: usize = loaded.cascades.iter().map(|c| c.aa_names().len()).sum();
                println!(
                    "{}: ok ({} cascades, {aspects} aspects)",
                    path.display(),
                    loaded.cascades.len()
                );
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Failure(INVALID, errors.join("\n")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Weave(a) => cmd_weave(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("aaweave: {msg}");
            ExitCode::from(code)
        }
    }
}
