//! The `pbnco` command line.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::baselines::{self, brute_force, ga_run, pso_run, random_walk};
use crate::cnc::cnc_construct;
use crate::cni::DecodeMode;
use crate::config::{self, KvConfig, SolveSettings};
use crate::error::{Error, Result};
use crate::experiments::{diversity_protocol, pareto_sweep, random_conditioning, DiversityProtocol};
use crate::gnn::{hex_digest, PolicyKind, PolicyParameters};
use crate::graphs::{generate_er, generate_rb, Family, GraphInstance, RbParams};
use crate::pbnco::{pbnco_run, AnytimeTrace, RunManifest, RunMode, TraceRow};
use crate::problems::{Problem, Solution};
use crate::rng;
use crate::trainer::{train_from, write_metrics_jsonl};

#[derive(Debug, Parser)]
#[command(name = "pbnco", version, about = "Population-based neural combinatorial optimization for Max-Cut and MIS")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write random instance files.
    Gen(GenArgs),
    /// Train a cNI or cNC policy.
    Train(TrainArgs),
    /// Run a solver over a directory of instances.
    Solve(SolveArgs),
    /// Diversity of a growing history of cNC constructions.
    Diversity(DiversityArgs),
    /// Sweep the exploration weight of a cNC policy.
    Pareto(ParetoArgs),
    /// Exact optima of small instances.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value = "er")]
    pub family: Family,
    /// Node count (ER).
    #[arg(long, default_value_t = 30)]
    pub nodes: usize,
    /// Edge probability (ER).
    #[arg(long, default_value_t = 0.15)]
    pub p: f64,
    /// Number of cliques (RB).
    #[arg(long, default_value_t = 8)]
    pub groups: usize,
    /// Clique size (RB).
    #[arg(long, default_value_t = 4)]
    pub group_size: usize,
    /// Fraction of cross pairs per constraint round (RB).
    #[arg(long, default_value_t = 0.25)]
    pub tightness: f64,
    /// Constraint rounds per `n_g ln n_g` (RB).
    #[arg(long, default_value_t = 0.8)]
    pub constraint_factor: f64,
    #[arg(long, default_value_t = 0)]
    pub seed_start: u64,
    #[arg(long, default_value_t = 1)]
    pub count: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set lr=0.001`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Print every key with its default and exit.
    #[arg(long)]
    pub print_defaults: bool,
}

impl ConfigArgs {
    fn load(&self) -> Result<KvConfig> {
        let mut kv = match &self.config {
            Some(p) => KvConfig::from_file(p)?,
            None => KvConfig::new(),
        };
        for o in &self.overrides {
            kv.set_override(o)?;
        }
        Ok(kv)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `cni` or `cnc`.
    pub kind: PolicyKind,
    #[arg(long, default_value = "mc")]
    pub problem: Problem,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Continue from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub init_checkpoint: Option<PathBuf>,
    #[arg(long, required_unless_present = "print_defaults")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    Search(RunMode),
    CncGreedy,
    Greedy,
    Ga,
    Pso,
    RandomWalk,
}

impl std::str::FromStr for SolveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "cnc_greedy" => Ok(SolveMode::CncGreedy),
            "greedy" => Ok(SolveMode::Greedy),
            "ga" => Ok(SolveMode::Ga),
            "pso" => Ok(SolveMode::Pso),
            "random_walk" => Ok(SolveMode::RandomWalk),
            other => other.parse().map(SolveMode::Search).map_err(|_| {
                Error::Param(format!(
                    "unknown mode {s:?}; expected pbnco, cni_only, level1_mem, random_restarts, cnc_pop, \
                     cnc_greedy, greedy, ga, pso or random_walk"
                ))
            }),
        }
    }
}

impl std::fmt::Display for SolveMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolveMode::Search(m) => write!(f, "{m}"),
            SolveMode::CncGreedy => f.write_str("cnc_greedy"),
            SolveMode::Greedy => f.write_str("greedy"),
            SolveMode::Ga => f.write_str("ga"),
            SolveMode::Pso => f.write_str("pso"),
            SolveMode::RandomWalk => f.write_str("random_walk"),
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// An instance file or a directory of `.graph` files.
    #[arg(long, required_unless_present = "print_defaults")]
    pub instances: Option<PathBuf>,
    #[arg(long, default_value = "mc")]
    pub problem: Problem,
    /// Overrides the `mode` config key.
    #[arg(long)]
    pub mode: Option<SolveMode>,
    #[arg(long)]
    pub cni: Option<PathBuf>,
    #[arg(long)]
    pub cnc: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Population steps (generations / iterations / moves for the baselines).
    #[arg(long)]
    pub budget_steps: Option<usize>,
    #[arg(long)]
    pub budget_seconds: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV (or whitespace-separated) file mapping instance names to reference values.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Column of the reference file holding the values.
    #[arg(long, default_value = "optimum")]
    pub reference_column: String,
    /// Record elapsed times (default: only under a wall-clock budget).
    #[arg(long)]
    pub timing: Option<bool>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, required_unless_present = "print_defaults")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiversityArgs {
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long, default_value = "mc")]
    pub problem: Problem,
    #[arg(long)]
    pub cnc: PathBuf,
    /// Exploration weights to run (repeatable).
    #[arg(long = "omega", num_args = 1.., value_delimiter = ',')]
    pub omegas: Vec<f64>,
    /// Also run the unconditioned baseline (empty K, ω = 0).
    #[arg(long)]
    pub unconditioned: bool,
    #[arg(long, default_value_t = 20)]
    pub initial: usize,
    #[arg(long, default_value_t = 100)]
    pub generated: usize,
    #[arg(long, default_value = "sample")]
    pub decode: DecodeMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ParetoArgs {
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long, default_value = "mc")]
    pub problem: Problem,
    #[arg(long)]
    pub cnc: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    pub omegas: Vec<f64>,
    /// Size of the random conditioning set per instance (default `K_max`).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value = "greedy")]
    pub decode: DecodeMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long, default_value = "mc")]
    pub problem: Problem,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => gen(&a),
        Command::Train(a) => train(&a),
        Command::Solve(a) => solve(&a),
        Command::Diversity(a) => diversity(&a),
        Command::Pareto(a) => pareto(&a),
        Command::Oracle(a) => oracle(&a),
    }
}

/// Process entry point: clap handles `--help`/`--version`, errors exit 1.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn gen(a: &GenArgs) -> Result<()> {
    fs::create_dir_all(&a.out)?;
    for seed in a.seed_start..a.seed_start + a.count {
        let (g, name) = match a.family {
            Family::Er => (generate_er(a.nodes, a.p, seed)?, format!("er-n{}-p{}-s{seed}.graph", a.nodes, a.p)),
            Family::Rb => {
                let params = RbParams {
                    groups: a.groups,
                    group_size: a.group_size,
                    tightness: a.tightness,
                    constraint_factor: a.constraint_factor,
                };
                (generate_rb(&params, seed)?, format!("rb-g{}x{}-s{seed}.graph", a.groups, a.group_size))
            }
            Family::Custom => return Err(Error::Config("`gen` produces er or rb instances".into())),
        };
        fs::write(a.out.join(name), g.to_bytes())?;
    }
    Ok(())
}

/// `(name, path)` of one instance file or every `.graph` file of a directory.
pub fn list_instances(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let stem = |p: &Path| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if path.is_file() {
        return Ok(vec![(stem(path), path.to_path_buf())]);
    }
    let dir = fs::read_dir(path)
        .map_err(|e| Error::Config(format!("cannot read instance directory {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for entry in dir {
        let p = entry?.path();
        if p.is_file() && p.extension().is_some_and(|e| e == "graph") {
            out.push((stem(&p), p));
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::Config(format!("no .graph files in {}", path.display())));
    }
    Ok(out)
}

struct Loaded {
    name: String,
    graph: GraphInstance,
    digest: String,
}

fn load_instances(path: &Path) -> Result<Vec<Loaded>> {
    list_instances(path)?
        .into_iter()
        .map(|(name, p)| {
            let bytes = fs::read(&p)?;
            let graph = GraphInstance::parse(&bytes)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            Ok(Loaded {
                name,
                graph,
                digest: hex_digest(&bytes),
            })
        })
        .collect()
}

fn load_checkpoint(path: &Path, kind: PolicyKind, problem: Problem) -> Result<(PolicyParameters, String)> {
    let p = PolicyParameters::load(path)
        .map_err(|e| Error::Config(format!("cannot load checkpoint {}: {e}", path.display())))?;
    p.expect(kind, problem)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let h = p.hash();
    Ok((p, h))
}

fn train(a: &TrainArgs) -> Result<()> {
    if a.config.print_defaults {
        print!("{}", config::train_defaults_text(a.kind, a.problem));
        return Ok(());
    }
    let kv = a.config.load()?;
    let cfg = config::train_config(&kv, a.kind, a.problem)?;
    kv.ensure_all_used()?;
    let out = a.out.as_ref().expect("required by clap");
    fs::create_dir_all(out)?;
    let params = match &a.init_checkpoint {
        Some(p) => load_checkpoint(p, cfg.kind, cfg.problem)?.0,
        None => PolicyParameters::init(cfg.hyperparameters(), rng::derive_seed(cfg.seed, u64::MAX))?,
    };
    let mut manifest = RunManifest::new(&format!("train {}", kind_name(cfg.kind)), cfg.seed, serde_json::to_value(&cfg)?);
    if let Some(p) = &a.init_checkpoint {
        manifest.checkpoints.push((p.display().to_string(), params.hash()));
    }
    let mut metrics_file = create_file(&out.join("metrics.jsonl"))?;
    let mut io_err = None;
    let outcome = train_from(&cfg, params, |m| {
        if io_err.is_none() {
            if let Err(e) = write_metrics_jsonl(std::slice::from_ref(m), &mut metrics_file) {
                io_err = Some(e);
            }
        }
    })?;
    if let Some(e) = io_err {
        return Err(e);
    }
    metrics_file.flush()?;
    outcome.params.save(&out.join("policy.ckpt"))?;
    manifest.checkpoints.push(("policy.ckpt".into(), outcome.params.hash()));
    manifest.write(create_file(&out.join("manifest.json"))?)?;
    Ok(())
}

fn kind_name(k: PolicyKind) -> &'static str {
    match k {
        PolicyKind::Cni => "cni",
        PolicyKind::Cnc => "cnc",
    }
}

/// Reference values keyed by instance name. Accepts a header row naming an
/// `instance` column and `column`, or headerless `name value` lines.
pub fn read_reference(path: &Path, column: &str) -> Result<std::collections::BTreeMap<String, f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read reference file {}: {e}", path.display())))?;
    let split = |l: &str| -> Vec<String> {
        l.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect()
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let mut out = std::collections::BTreeMap::new();
    let Some(first) = lines.next() else {
        return Ok(out);
    };
    let head = split(first);
    let (name_col, value_col, pending) = match head.iter().position(|h| h == column) {
        Some(v) => (head.iter().position(|h| h == "instance").unwrap_or(0), v, None),
        None => (0, 1, Some(first)),
    };
    for (i, line) in pending.into_iter().chain(lines).enumerate() {
        let f = split(line);
        let (Some(name), Some(value)) = (f.get(name_col), f.get(value_col)) else {
            return Err(Error::Config(format!("{}: line {} is missing columns", path.display(), i + 1)));
        };
        let v: f64 = value
            .parse()
            .map_err(|_| Error::Config(format!("{}: bad reference value {value:?}", path.display())))?;
        out.insert(name.clone(), v);
    }
    Ok(out)
}

struct SolveOutcome {
    best: Solution,
    trace: AnytimeTrace,
    seconds: f64,
}

fn single_row_trace(s: &Solution, seconds: f64) -> AnytimeTrace {
    AnytimeTrace {
        rows: vec![TraceRow {
            step: 0,
            elapsed_seconds: seconds,
            best_objective: s.objective(),
            population_mean_objective: s.objective(),
            diversity: 0.0,
        }],
    }
}

struct SolveContext<'a> {
    mode: SolveMode,
    problem: Problem,
    settings: &'a SolveSettings,
    cni: Option<&'a PolicyParameters>,
    cnc: Option<&'a PolicyParameters>,
    seed: u64,
}

fn solve_one(cx: &SolveContext<'_>, index: usize, g: &GraphInstance) -> Result<SolveOutcome> {
    let mut r = rng::stream(cx.seed, index as u64);
    let start = Instant::now();
    let budget = cx.settings.search.budget;
    let (best, trace) = match cx.mode {
        SolveMode::Search(_) => {
            let res = pbnco_run(g, cx.problem, cx.cni, cx.cnc, &cx.settings.search, &mut r)?;
            (res.best, res.trace)
        }
        SolveMode::Ga => {
            let res = ga_run(g, cx.problem, &cx.settings.ga, budget, &mut r)?;
            (res.best, res.trace)
        }
        SolveMode::Pso => {
            let res = pso_run(g, cx.problem, &cx.settings.pso, budget, &mut r)?;
            (res.best, res.trace)
        }
        SolveMode::Greedy => {
            let s = baselines::greedy(g, cx.problem);
            let t = single_row_trace(&s, start.elapsed().as_secs_f64());
            (s, t)
        }
        SolveMode::CncGreedy => {
            let params = cx.cnc.expect("checked");
            let (s, _) = cnc_construct(params, g, cx.problem, &[], 0.0, &mut r, DecodeMode::Greedy)?;
            let t = single_row_trace(&s, start.elapsed().as_secs_f64());
            (s, t)
        }
        SolveMode::RandomWalk => {
            let steps = budget
                .steps
                .ok_or_else(|| Error::Config("random_walk needs a step budget".into()))?;
            let s = random_walk(g, cx.problem, steps, &mut r)?;
            let t = single_row_trace(&s, start.elapsed().as_secs_f64());
            (s, t)
        }
    };
    Ok(SolveOutcome {
        best,
        trace,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn solve(a: &SolveArgs) -> Result<()> {
    if a.config.print_defaults {
        print!("{}", config::solve_defaults_text());
        return Ok(());
    }
    let mut kv = a.config.load()?;
    if let Some(m) = a.mode {
        if let SolveMode::Search(rm) = m {
            kv.set_override(&format!("mode={rm}"))?;
        }
    }
    if let Some(s) = a.budget_steps {
        kv.set_override(&format!("budget_steps={s}"))?;
        if a.budget_seconds.is_none() {
            kv.set_override("budget_seconds=none")?;
        }
    }
    if let Some(s) = a.budget_seconds {
        kv.set_override(&format!("budget_seconds={s}"))?;
        if a.budget_steps.is_none() {
            kv.set_override("budget_steps=none")?;
        }
    }
    let settings = config::solve_settings(&kv)?;
    kv.ensure_all_used()?;
    let mode = a.mode.unwrap_or(SolveMode::Search(settings.search.mode));
    let timing = a.timing.unwrap_or(settings.search.budget.seconds.is_some());
    if a.workers == 0 {
        return Err(Error::Config("--workers must be at least 1".into()));
    }

    let needs_cni = matches!(mode, SolveMode::Search(m) if m.needs_cni());
    let needs_cnc = matches!(mode, SolveMode::Search(m) if m.needs_cnc(settings.search.init)) || mode == SolveMode::CncGreedy;
    let mut manifest = RunManifest::new(
        &format!("solve {mode}"),
        a.seed,
        serde_json::json!({ "mode": mode.to_string(), "problem": a.problem.to_string(), "timing": timing, "settings": settings }),
    );
    let load = |path: &Option<PathBuf>, kind: PolicyKind, flag: &str| -> Result<Option<(PolicyParameters, String)>> {
        match path {
            Some(p) => load_checkpoint(p, kind, a.problem).map(Some),
            None => Err(Error::Config(format!("mode {mode} needs --{flag} <checkpoint>"))),
        }
    };
    let cni = if needs_cni { load(&a.cni, PolicyKind::Cni, "cni")? } else { None };
    let cnc = if needs_cnc { load(&a.cnc, PolicyKind::Cnc, "cnc")? } else { None };
    for (label, c) in [("cni", &cni), ("cnc", &cnc)] {
        if let Some((_, h)) = c {
            manifest.checkpoints.push((label.into(), h.clone()));
        }
    }
    let reference = match &a.reference {
        Some(p) => Some(read_reference(p, &a.reference_column)?),
        None => None,
    };
    let instances = load_instances(a.instances.as_ref().expect("required by clap"))?;
    for inst in &instances {
        manifest.instances.push((inst.name.clone(), inst.digest.clone()));
    }
    let cx = SolveContext {
        mode,
        problem: a.problem,
        settings: &settings,
        cni: cni.as_ref().map(|c| &c.0),
        cnc: cnc.as_ref().map(|c| &c.0),
        seed: a.seed,
    };

    let results = run_parallel(instances.len(), a.workers, |i| solve_one(&cx, i, &instances[i].graph));

    let out = a.out.as_ref().expect("required by clap");
    fs::create_dir_all(out.join("traces"))?;
    let mut summary = create_file(&out.join("summary.csv"))?;
    writeln!(summary, "instance,objective,reference,ratio,runtime_seconds")?;
    let mut failures = Vec::new();
    let (mut sum_obj, mut sum_ratio, mut n_ratio, mut sum_time, mut n_ok) = (0.0, 0.0, 0usize, 0.0, 0usize);
    for (inst, res) in instances.iter().zip(results) {
        let res = match res {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("{}: {e}", inst.name));
                continue;
            }
        };
        let refv = reference.as_ref().and_then(|m| m.get(&inst.name)).copied();
        let trace_file = create_file(&out.join("traces").join(format!("{}.csv", inst.name)))?;
        res.trace.write_csv(trace_file, refv, timing)?;
        let obj = res.best.objective();
        let ratio = refv.filter(|&r| r != 0.0).map(|r| obj / r);
        writeln!(
            summary,
            "{},{},{},{},{}",
            inst.name,
            obj,
            refv.map_or(String::new(), |r| r.to_string()),
            ratio.map_or(String::new(), |r| format!("{r:.3}")),
            if timing { format!("{:.3}", res.seconds) } else { String::new() },
        )?;
        sum_obj += obj;
        sum_time += res.seconds;
        n_ok += 1;
        if let Some(r) = ratio {
            sum_ratio += r;
            n_ratio += 1;
        }
    }
    if n_ok > 0 {
        writeln!(
            summary,
            "mean,{},,{},{}",
            sum_obj / n_ok as f64,
            if n_ratio > 0 { format!("{:.3}", sum_ratio / n_ratio as f64) } else { String::new() },
            if timing { format!("{:.3}", sum_time / n_ok as f64) } else { String::new() },
        )?;
    }
    summary.flush()?;
    manifest.write(create_file(&out.join("manifest.json"))?)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!("{} run(s) failed: {}", failures.len(), failures.join("; "))))
    }
}

/// Evaluates `f(0..n)` on up to `workers` threads; results keep index order.
fn run_parallel<T: Send>(n: usize, workers: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    if workers <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<T>>> = (0..n).map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.min(n) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let v = f(i);
                *slots[i].lock().expect("unpoisoned") = Some(v);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("unpoisoned").expect("filled"))
        .collect()
}

fn diversity(a: &DiversityArgs) -> Result<()> {
    let (params, hash) = load_checkpoint(&a.cnc, PolicyKind::Cnc, a.problem)?;
    if a.omegas.is_empty() && !a.unconditioned {
        return Err(Error::Config("give at least one --omega or --unconditioned".into()));
    }
    if let Some(w) = a.omegas.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::Config(format!("omega {w} outside [0, 1]")));
    }
    let instances = load_instances(&a.instances)?;
    let mut curves: Vec<(String, Option<f64>)> = a.omegas.iter().map(|&w| (format!("omega={w}"), Some(w))).collect();
    if a.unconditioned {
        curves.push(("unconditioned".into(), None));
    }
    let mut w = create_file(&a.out)?;
    writeln!(w, "instance,curve,index,diversity")?;
    for (i, inst) in instances.iter().enumerate() {
        for (label, omega) in &curves {
            // identical initial population across curves of one instance
            let mut r = rng::stream(a.seed, i as u64);
            let proto = DiversityProtocol {
                initial: a.initial,
                generated: a.generated,
                omega: *omega,
                k_max: params.hyper().k_max,
                mode: a.decode,
            };
            let trace = diversity_protocol(&inst.graph, a.problem, &params, &proto, &mut r)?;
            for (j, d) in trace.iter().enumerate() {
                writeln!(w, "{},{label},{j},{d:.12}", inst.name)?;
            }
        }
    }
    w.flush()?;
    let mut manifest = RunManifest::new(
        "diversity",
        a.seed,
        serde_json::json!({ "omegas": a.omegas, "unconditioned": a.unconditioned, "initial": a.initial,
                            "generated": a.generated, "decode": a.decode, "problem": a.problem.to_string() }),
    );
    manifest.checkpoints.push(("cnc".into(), hash));
    manifest.instances = instances.iter().map(|x| (x.name.clone(), x.digest.clone())).collect();
    manifest.write(create_file(&a.out.with_extension("manifest.json"))?)
}

fn pareto(a: &ParetoArgs) -> Result<()> {
    let (params, hash) = load_checkpoint(&a.cnc, PolicyKind::Cnc, a.problem)?;
    let k = a.k.unwrap_or(params.hyper().k_max);
    if k > params.hyper().k_max {
        return Err(Error::Config(format!("--k {k} exceeds the checkpoint's K_max {}", params.hyper().k_max)));
    }
    let instances = load_instances(&a.instances)?;
    let mut r = rng::seeded(a.seed);
    let sets: Vec<(GraphInstance, Vec<crate::bits::Bits>)> = instances
        .iter()
        .map(|x| (x.graph.clone(), random_conditioning(&x.graph, a.problem, k, &mut r)))
        .collect();
    let points = pareto_sweep(&params, a.problem, &sets, &a.omegas, a.decode, &mut r)?;
    let mut w = create_file(&a.out)?;
    writeln!(w, "omega,mean_distance,se_distance,mean_quality,se_quality")?;
    for p in &points {
        writeln!(
            w,
            "{},{:.12},{:.12},{:.12},{:.12}",
            p.omega, p.mean_distance, p.se_distance, p.mean_quality, p.se_quality
        )?;
    }
    w.flush()?;
    let mut manifest = RunManifest::new(
        "pareto",
        a.seed,
        serde_json::json!({ "omegas": a.omegas, "k": k, "decode": a.decode, "problem": a.problem.to_string() }),
    );
    manifest.checkpoints.push(("cnc".into(), hash));
    manifest.instances = instances.iter().map(|x| (x.name.clone(), x.digest.clone())).collect();
    manifest.write(create_file(&a.out.with_extension("manifest.json"))?)
}

fn oracle(a: &OracleArgs) -> Result<()> {
    let instances = load_instances(&a.instances)?;
    let mut text = String::from("instance,optimum,solution\n");
    for inst in &instances {
        let s = brute_force(&inst.graph, a.problem).map_err(|e| Error::Config(format!("{}: {e}", inst.name)))?;
        text.push_str(&format!("{},{},{}\n", inst.name, s.objective(), s.bits().to_bitstring()));
    }
    match &a.out {
        Some(p) => {
            let mut w = create_file(p)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => print!("{text}"),
    }
    Ok(())
}
