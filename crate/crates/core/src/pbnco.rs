//! The population search loop: cNI local moves over a shared memory, with
//! cNC restarts once an individual stalls, plus the ablation run modes.

use std::io::Write;
use std::time::Instant;

use crate::bits::Bits;
use crate::cnc::{cnc_construct, omega_schedule, DEFAULT_K_MAX};
use crate::cni::{cni_step, CniConfig, DecodeMode};
use crate::error::{Error, Result};
use crate::gnn::{PolicyKind, PolicyParameters};
use crate::graphs::GraphInstance;
use crate::memory::{select_k, SelectK, SharedMemory, StepBuffer, DEFAULT_CAPACITY};
use crate::problems::{random_solution, reward_scale, LogBase, Problem, Solution};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunMode {
    #[default]
    Pbnco,
    CniOnly,
    Level1Mem,
    RandomRestarts,
    CncPop,
}

impl RunMode {
    pub fn needs_cni(self) -> bool {
        self != RunMode::CncPop
    }

    pub fn needs_cnc(self, init: InitMode) -> bool {
        matches!(self, RunMode::Pbnco | RunMode::Level1Mem | RunMode::CncPop) || init == InitMode::Constructive
    }

    fn restarts(self) -> bool {
        matches!(self, RunMode::Pbnco | RunMode::Level1Mem | RunMode::RandomRestarts)
    }
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunMode::Pbnco => "pbnco",
            RunMode::CniOnly => "cni_only",
            RunMode::Level1Mem => "level1_mem",
            RunMode::RandomRestarts => "random_restarts",
            RunMode::CncPop => "cnc_pop",
        })
    }
}

impl std::str::FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "pbnco" => Ok(RunMode::Pbnco),
            "cni_only" | "cni" => Ok(RunMode::CniOnly),
            "level1_mem" => Ok(RunMode::Level1Mem),
            "random_restarts" => Ok(RunMode::RandomRestarts),
            "cnc_pop" => Ok(RunMode::CncPop),
            other => Err(Error::Param(format!("unknown run mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    #[default]
    Random,
    Constructive,
}

impl std::str::FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(InitMode::Random),
            "constructive" => Ok(InitMode::Constructive),
            other => Err(Error::Param(format!("unknown init mode {other:?}"))),
        }
    }
}

/// Consecutive non-improving steps before a restart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Patience {
    Steps(usize),
    /// `|V|` of the instance being solved.
    Auto,
    Never,
}

impl Default for Patience {
    fn default() -> Self {
        Patience::Steps(500)
    }
}

impl Patience {
    pub fn resolve(self, g: &GraphInstance) -> Option<usize> {
        match self {
            Patience::Steps(n) => Some(n),
            Patience::Auto => Some(g.node_count().max(1)),
            Patience::Never => None,
        }
    }
}

impl std::str::FromStr for Patience {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Patience::Auto),
            "never" | "inf" | "infinity" => Ok(Patience::Never),
            n => n
                .parse()
                .map(Patience::Steps)
                .map_err(|_| Error::Param(format!("patience must be a count, auto or never, got {n:?}"))),
        }
    }
}

impl std::fmt::Display for Patience {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Patience::Steps(n) => write!(f, "{n}"),
            Patience::Auto => f.write_str("auto"),
            Patience::Never => f.write_str("never"),
        }
    }
}

/// Population steps and/or wall-clock seconds; the run stops at whichever
/// is exhausted first.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Budget {
    pub steps: Option<usize>,
    pub seconds: Option<f64>,
}

impl Budget {
    pub fn steps(n: usize) -> Self {
        Self { steps: Some(n), seconds: None }
    }

    pub fn seconds(s: f64) -> Self {
        Self { steps: None, seconds: Some(s) }
    }

    fn validate(&self) -> Result<()> {
        match (self.steps, self.seconds) {
            (None, None) => Err(Error::Config("a step or wall-clock budget is required".into())),
            (_, Some(s)) if !(s > 0.0) => Err(Error::Config(format!("wall-clock budget {s} must be positive"))),
            _ => Ok(()),
        }
    }

    /// Schedule position in `[0, 1]` (may exceed 1 in wall-clock mode).
    fn progress(&self, t: usize, elapsed: f64) -> (f64, f64) {
        match (self.steps, self.seconds) {
            (Some(n), _) => (t as f64, n as f64),
            (None, Some(s)) => (elapsed, s),
            (None, None) => (0.0, 1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SearchConfig {
    pub population: usize,
    pub budget: Budget,
    pub patience: Patience,
    pub omega_start: f64,
    pub phi: f64,
    pub select_k: SelectK,
    pub k_max: usize,
    pub init: InitMode,
    pub mode: RunMode,
    pub cni: CniConfig,
    pub cni_decode: DecodeMode,
    pub cnc_decode: DecodeMode,
    pub memory_capacity: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            population: 20,
            budget: Budget::steps(1000),
            patience: Patience::default(),
            omega_start: 1.0,
            phi: 1.0,
            select_k: SelectK::Last,
            k_max: DEFAULT_K_MAX,
            init: InitMode::Random,
            mode: RunMode::Pbnco,
            cni: CniConfig::default(),
            cni_decode: DecodeMode::Sample,
            cnc_decode: DecodeMode::Sample,
            memory_capacity: DEFAULT_CAPACITY,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 {
            return Err(Error::Config("population must be at least 1".into()));
        }
        if self.patience == Patience::Steps(0) {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.omega_start) || !(self.phi >= 0.0) {
            return Err(Error::Config(format!(
                "omega_start {} must lie in [0, 1] and phi {} be non-negative",
                self.omega_start, self.phi
            )));
        }
        if self.memory_capacity == 0 {
            return Err(Error::Config("memory capacity must be at least 1".into()));
        }
        self.budget.validate()
    }
}

/// Incremental mean pairwise normalized Hamming distance of a growing
/// solution history.
#[derive(Clone, Debug, Default)]
pub struct DiversityTracker {
    ones: Vec<u64>,
    count: u64,
    pair_distance: u128,
}

impl DiversityTracker {
    pub fn new(n: usize) -> Self {
        Self {
            ones: vec![0; n],
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.count as usize
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn push(&mut self, s: &Bits) -> Result<f64> {
        if s.len() != self.ones.len() {
            return Err(Error::Length {
                expected: self.ones.len(),
                got: s.len(),
            });
        }
        let mut added = 0u64;
        for (j, c) in self.ones.iter_mut().enumerate() {
            if s.get(j) {
                added += self.count - *c;
                *c += 1;
            } else {
                added += *c;
            }
        }
        self.pair_distance += added as u128;
        self.count += 1;
        Ok(self.value())
    }

    /// 0 for fewer than two solutions.
    pub fn value(&self) -> f64 {
        if self.count < 2 || self.ones.is_empty() {
            return 0.0;
        }
        let pairs = self.count as f64 * (self.count - 1) as f64 / 2.0;
        self.pair_distance as f64 / (pairs * self.ones.len() as f64)
    }
}

/// Diversity after each appended solution.
pub fn diversity_trace(history: &[Bits]) -> Result<Vec<f64>> {
    let Some(first) = history.first() else {
        return Err(Error::Param("diversity of an empty history".into()));
    };
    let mut t = DiversityTracker::new(first.len());
    history.iter().map(|s| t.push(s)).collect()
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub elapsed_seconds: f64,
    pub best_objective: f64,
    pub population_mean_objective: f64,
    pub diversity: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnytimeTrace {
    pub rows: Vec<TraceRow>,
}

impl AnytimeTrace {
    pub fn final_best(&self) -> Option<f64> {
        self.rows.last().map(|r| r.best_objective)
    }

    /// `timing = false` leaves the elapsed column blank so that step-budget
    /// traces are byte-reproducible.
    pub fn write_csv<W: Write>(&self, mut w: W, reference: Option<f64>, timing: bool) -> Result<()> {
        writeln!(
            w,
            "step,elapsed_seconds,best_objective,best_ratio,population_mean_objective,diversity"
        )?;
        for r in &self.rows {
            let elapsed = if timing { format!("{:.6}", r.elapsed_seconds) } else { String::new() };
            let ratio = match reference {
                Some(x) if x != 0.0 => format!("{:.6}", r.best_objective / x),
                _ => String::new(),
            };
            writeln!(
                w,
                "{},{},{},{},{},{:.12}",
                r.step, elapsed, r.best_objective, ratio, r.population_mean_objective, r.diversity
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RestartEvent {
    pub step: usize,
    pub individual: usize,
    pub omega: f64,
}

#[derive(Clone, Debug)]
pub struct Individual {
    pub current: Solution,
    /// Best objective along this individual's whole history.
    pub best_value: f64,
    pub best_ever: Solution,
    pub best_since_restart: Solution,
    pub patience: usize,
    pub restarts: usize,
}

impl Individual {
    fn new(s: Solution) -> Self {
        Self {
            best_value: s.objective(),
            best_ever: s.clone(),
            best_since_restart: s.clone(),
            current: s,
            patience: 0,
            restarts: 0,
        }
    }

    /// Improvement-step bookkeeping; returns whether `B` increased.
    fn after_move(&mut self, s: Solution) -> bool {
        let improved = s.objective() > self.best_value;
        if improved {
            self.best_value = s.objective();
            self.best_ever = s.clone();
            self.patience = 0;
        } else {
            self.patience += 1;
        }
        if s.objective() > self.best_since_restart.objective() {
            self.best_since_restart = s.clone();
        }
        self.current = s;
        improved
    }

    fn after_restart(&mut self, s: Solution) {
        if s.objective() > self.best_value {
            self.best_value = s.objective();
            self.best_ever = s.clone();
        }
        self.best_since_restart = s.clone();
        self.patience = 0;
        self.restarts += 1;
        self.current = s;
    }
}

pub struct PopulationState {
    pub individuals: Vec<Individual>,
    pub best: Solution,
    pub step: usize,
    /// One shared memory, or one private memory per individual.
    pub memories: Vec<SharedMemory>,
}

impl PopulationState {
    fn memory_for(&self, i: usize) -> &SharedMemory {
        if self.memories.len() == 1 {
            &self.memories[0]
        } else {
            &self.memories[i]
        }
    }

    fn commit(&mut self, buf: &mut StepBuffer) {
        if self.memories.len() == 1 {
            buf.commit(&mut self.memories[0]);
        } else {
            buf.commit_private(&mut self.memories);
        }
    }

    fn offer_best(&mut self, s: &Solution) {
        if s.objective() > self.best.objective() {
            self.best = s.clone();
        }
    }

    fn mean_objective(&self) -> f64 {
        self.individuals.iter().map(|x| x.current.objective()).sum::<f64>() / self.individuals.len() as f64
    }
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub best: Solution,
    pub trace: AnytimeTrace,
    pub restarts: Vec<usize>,
    pub restart_events: Vec<RestartEvent>,
    pub steps: usize,
    pub cni_calls: usize,
    pub cnc_calls: usize,
}

fn check_policy(p: Option<&PolicyParameters>, kind: PolicyKind, problem: Problem, what: &str) -> Result<()> {
    match p {
        Some(p) => p.expect(kind, problem),
        None => Err(Error::Config(format!("run mode needs a {what} checkpoint"))),
    }
}

/// Runs the population search on `g`. Checkpoints that the configured mode
/// never calls may be `None`.
pub fn pbnco_run(
    g: &GraphInstance,
    problem: Problem,
    cni_params: Option<&PolicyParameters>,
    cnc_params: Option<&PolicyParameters>,
    cfg: &SearchConfig,
    rng: &mut Rng,
) -> Result<SearchResult> {
    cfg.validate()?;
    if cfg.mode.needs_cni() {
        check_policy(cni_params, PolicyKind::Cni, problem, "cNI")?;
    }
    if cfg.mode.needs_cnc(cfg.init) {
        check_policy(cnc_params, PolicyKind::Cnc, problem, "cNC")?;
    }
    let start = Instant::now();
    let scale = reward_scale(g, problem, LogBase::Natural);
    let n_pat = if cfg.mode.restarts() { cfg.patience.resolve(g) } else { None };
    let p = cfg.population;
    let mut cnc_calls = 0usize;
    let mut cni_calls = 0usize;
    let mut diversity = DiversityTracker::new(g.node_count());

    // initialization
    let mut init = Vec::with_capacity(p);
    for i in 0..p {
        let s = match cfg.init {
            InitMode::Random => random_solution(g, problem, rng),
            InitMode::Constructive => {
                let omega = if p > 1 { 0.5 * i as f64 / (p - 1) as f64 } else { 0.0 };
                let from = init.len().saturating_sub(cfg.k_max);
                let k: Vec<Bits> = init[from..].iter().map(|s: &Solution| s.bits().clone()).collect();
                cnc_calls += 1;
                cnc_construct(cnc_params.expect("checked"), g, problem, &k, omega, rng, cfg.cnc_decode)?.0
            }
        };
        init.push(s);
    }
    let mems = if cfg.mode == RunMode::Level1Mem { p } else { 1 };
    let mut state = PopulationState {
        best: init[0].clone(),
        individuals: Vec::with_capacity(p),
        step: 0,
        memories: (0..mems).map(|_| SharedMemory::new(cfg.memory_capacity)).collect(),
    };
    let mut buf = StepBuffer::new();
    for (i, s) in init.into_iter().enumerate() {
        buf.push(i, s.bits().clone(), s.objective());
        diversity.push(s.bits())?;
        state.offer_best(&s);
        state.individuals.push(Individual::new(s));
    }
    state.commit(&mut buf);

    let mut trace = AnytimeTrace::default();
    let record = |state: &PopulationState, diversity: &DiversityTracker, trace: &mut AnytimeTrace| {
        trace.rows.push(TraceRow {
            step: state.step,
            elapsed_seconds: start.elapsed().as_secs_f64(),
            best_objective: state.best.objective(),
            population_mean_objective: state.mean_objective(),
            diversity: diversity.value(),
        });
    };
    record(&state, &diversity, &mut trace);
    let mut events = Vec::new();

    loop {
        let elapsed = start.elapsed().as_secs_f64();
        if cfg.budget.steps.is_some_and(|n| state.step >= n) || cfg.budget.seconds.is_some_and(|s| elapsed >= s) {
            break;
        }
        let (t, t_max) = cfg.budget.progress(state.step, elapsed);
        let omega = omega_schedule(t, t_max, cfg.omega_start, cfg.phi);
        let mut buf = StepBuffer::new();
        let mut produced = Vec::with_capacity(p);

        if cfg.mode == RunMode::CncPop {
            let current: Vec<Solution> = state.individuals.iter().map(|x| x.current.clone()).collect();
            let k = select_k(state.memory_for(0), &[], &current, SelectK::BestCurrent, cfg.k_max);
            for i in 0..p {
                cnc_calls += 1;
                let (s, _) = cnc_construct(cnc_params.expect("checked"), g, problem, &k, omega, rng, cfg.cnc_decode)?;
                state.individuals[i].after_move(s.clone());
                produced.push((i, s));
            }
        } else {
            for i in 0..p {
                let stalled = n_pat.is_some_and(|n| state.individuals[i].patience >= n);
                if stalled {
                    let s = if cfg.mode == RunMode::RandomRestarts {
                        random_solution(g, problem, rng)
                    } else {
                        let (globals, currents): (Vec<Solution>, Vec<Solution>) = if cfg.mode == RunMode::Level1Mem {
                            let x = &state.individuals[i];
                            (vec![x.best_ever.clone()], vec![x.best_since_restart.clone()])
                        } else {
                            state
                                .individuals
                                .iter()
                                .map(|x| (x.best_ever.clone(), x.best_since_restart.clone()))
                                .unzip()
                        };
                        let k = select_k(state.memory_for(i), &globals, &currents, cfg.select_k, cfg.k_max);
                        cnc_calls += 1;
                        cnc_construct(cnc_params.expect("checked"), g, problem, &k, omega, rng, cfg.cnc_decode)?.0
                    };
                    events.push(RestartEvent {
                        step: state.step,
                        individual: i,
                        omega,
                    });
                    state.individuals[i].after_restart(s.clone());
                    produced.push((i, s));
                } else {
                    let x = &state.individuals[i];
                    cni_calls += 1;
                    let (s, _) = cni_step(
                        cni_params.expect("checked"),
                        g,
                        &x.current,
                        x.best_value,
                        state.memory_for(i),
                        &cfg.cni,
                        &scale,
                        rng,
                        cfg.cni_decode,
                    )?;
                    state.individuals[i].after_move(s.clone());
                    produced.push((i, s));
                }
            }
        }
        for (i, s) in produced {
            buf.push(i, s.bits().clone(), s.objective());
            diversity.push(s.bits())?;
            state.offer_best(&s);
        }
        state.commit(&mut buf);
        state.step += 1;
        record(&state, &diversity, &mut trace);
    }

    Ok(SearchResult {
        restarts: state.individuals.iter().map(|x| x.restarts).collect(),
        best: state.best,
        trace,
        restart_events: events,
        steps: state.step,
        cni_calls,
        cnc_calls,
    })
}

/// Everything needed to re-run a search or training run bit-identically.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub checkpoints: Vec<(String, String)>,
    pub instances: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config,
            checkpoints: Vec::new(),
            instances: Vec::new(),
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::Hyperparameters;
    use crate::graphs::{generate_er, named};
    use crate::rng;
    use proptest::prelude::*;

    fn policies(problem: Problem) -> (PolicyParameters, PolicyParameters) {
        let a = PolicyParameters::init(Hyperparameters::desk(PolicyKind::Cni, problem, 4).with_size(1, 8, 2, 16), 1).unwrap();
        let b = PolicyParameters::init(Hyperparameters::desk(PolicyKind::Cnc, problem, 4).with_size(1, 8, 2, 16), 2).unwrap();
        (a, b)
    }

    fn cfg(mode: RunMode, steps: usize) -> SearchConfig {
        SearchConfig {
            population: 4,
            budget: Budget::steps(steps),
            patience: Patience::Steps(3),
            k_max: 4,
            mode,
            ..SearchConfig::default()
        }
    }

    fn run(g: &GraphInstance, problem: Problem, c: &SearchConfig, seed: u64) -> SearchResult {
        let (a, b) = policies(problem);
        pbnco_run(g, problem, Some(&a), Some(&b), c, &mut rng::seeded(seed)).unwrap()
    }

    #[test]
    fn diversity_examples() {
        let h: Vec<Bits> = ["000", "110", "011"].iter().map(|s| Bits::parse_bitstring(s).unwrap()).collect();
        let d = diversity_trace(&h).unwrap();
        assert_eq!(d[0], 0.0);
        assert!((d[2] - 2.0 / 3.0).abs() < 1e-15);
        let s = Bits::parse_bitstring("10110").unwrap();
        assert_eq!(diversity_trace(&[s.clone(), s.complement()]).unwrap()[1], 1.0);
        assert_eq!(diversity_trace(&[s.clone(), s.clone(), s]).unwrap(), vec![0.0; 3]);
        assert!(diversity_trace(&[]).is_err());
    }

    proptest! {
        #[test]
        fn incremental_diversity_matches_direct(raw in prop::collection::vec(prop::collection::vec(any::<bool>(), 7), 1..30)) {
            let h: Vec<Bits> = raw.iter().map(|v| Bits::from_bools(v)).collect();
            let inc = diversity_trace(&h).unwrap();
            for m in 1..=h.len() {
                let mut sum = 0.0;
                let mut pairs = 0.0;
                for i in 0..m {
                    for j in i + 1..m {
                        sum += crate::problems::hamming_normalized(&h[i], &h[j]).unwrap();
                        pairs += 1.0;
                    }
                }
                let direct = if pairs > 0.0 { sum / pairs } else { 0.0 };
                prop_assert!((inc[m - 1] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mc_k3_reaches_optimum() {
        let g = named::complete(3);
        let r = run(&g, Problem::MaxCut, &cfg(RunMode::Pbnco, 10), 0);
        assert_eq!(r.best.objective(), 2.0);
        assert_eq!(r.trace.final_best(), Some(2.0));
    }

    #[test]
    fn zero_budget_returns_initial_best() {
        let g = generate_er(12, 0.3, 5).unwrap();
        let c = cfg(RunMode::Pbnco, 0);
        let r = run(&g, Problem::MaxCut, &c, 3);
        assert_eq!(r.steps, 0);
        assert_eq!(r.trace.rows.len(), 1);
        let mut rr = rng::seeded(3);
        let best = (0..4)
            .map(|_| random_solution(&g, Problem::MaxCut, &mut rr).objective())
            .fold(f64::MIN, f64::max);
        assert_eq!(r.best.objective(), best);
    }

    #[test]
    fn restarts_fire_on_patience() {
        let g = generate_er(10, 0.3, 2).unwrap();
        let r = run(&g, Problem::Mis, &cfg(RunMode::Pbnco, 40), 1);
        assert!(!r.restart_events.is_empty());
        assert_eq!(r.restarts.iter().sum::<usize>(), r.restart_events.len());
        assert_eq!(r.cnc_calls, r.restart_events.len());
        assert_eq!(r.cni_calls + r.cnc_calls, 4 * 40);
        let rows = &r.trace.rows;
        assert!(rows.windows(2).all(|w| w[1].best_objective >= w[0].best_objective));
        assert_eq!(rows.last().unwrap().best_objective, r.best.objective());
        for e in &r.restart_events {
            assert!((e.omega - (1.0 - e.step as f64 / 40.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn never_patience_equals_cni_only() {
        let g = generate_er(12, 0.3, 9).unwrap();
        let mut a = cfg(RunMode::Pbnco, 25);
        a.patience = Patience::Never;
        let ra = run(&g, Problem::MaxCut, &a, 4);
        let rb = run(&g, Problem::MaxCut, &cfg(RunMode::CniOnly, 25), 4);
        assert!(ra.restart_events.is_empty() && rb.restart_events.is_empty());
        let csv = |r: &SearchResult| {
            let mut v = Vec::new();
            r.trace.write_csv(&mut v, None, false).unwrap();
            v
        };
        assert_eq!(csv(&ra), csv(&rb));
    }

    #[test]
    fn random_restarts_never_construct() {
        let g = generate_er(10, 0.3, 2).unwrap();
        let (a, _) = policies(Problem::Mis);
        let r = pbnco_run(&g, Problem::Mis, Some(&a), None, &cfg(RunMode::RandomRestarts, 40), &mut rng::seeded(1)).unwrap();
        assert_eq!(r.cnc_calls, 0);
        assert!(!r.restart_events.is_empty());
    }

    #[test]
    fn cnc_pop_constructs_once_per_individual() {
        let g = generate_er(10, 0.3, 2).unwrap();
        let (_, b) = policies(Problem::MaxCut);
        let r = pbnco_run(&g, Problem::MaxCut, None, Some(&b), &cfg(RunMode::CncPop, 7), &mut rng::seeded(1)).unwrap();
        assert_eq!(r.cnc_calls, 4 * 7);
        assert_eq!(r.cni_calls, 0);
    }

    #[test]
    fn level1_single_individual_matches_shared() {
        let g = generate_er(10, 0.3, 4).unwrap();
        let mut a = cfg(RunMode::Level1Mem, 30);
        a.population = 1;
        let mut b = a.clone();
        b.mode = RunMode::Pbnco;
        let ra = run(&g, Problem::MaxCut, &a, 8);
        let rb = run(&g, Problem::MaxCut, &b, 8);
        let untimed = |r: &SearchResult| {
            let mut v = Vec::new();
            r.trace.write_csv(&mut v, None, false).unwrap();
            v
        };
        assert_eq!(untimed(&ra), untimed(&rb));
        assert_eq!(ra.restart_events, rb.restart_events);
    }

    #[test]
    fn runs_are_reproducible() {
        let g = generate_er(12, 0.3, 1).unwrap();
        for mode in [RunMode::Pbnco, RunMode::Level1Mem, RunMode::CncPop] {
            let c = SearchConfig { init: InitMode::Constructive, ..cfg(mode, 20) };
            let a = run(&g, Problem::Mis, &c, 6);
            let b = run(&g, Problem::Mis, &c, 6);
            assert_eq!(a.best.bits(), b.best.bits());
            assert_eq!(a.restart_events, b.restart_events);
        }
    }

    #[test]
    fn config_errors() {
        let g = named::path(4);
        let (a, b) = policies(Problem::MaxCut);
        let mut c = cfg(RunMode::Pbnco, 5);
        c.budget = Budget::seconds(0.0);
        assert!(pbnco_run(&g, Problem::MaxCut, Some(&a), Some(&b), &c, &mut rng::seeded(0)).is_err());
        let c = cfg(RunMode::Pbnco, 5);
        assert!(pbnco_run(&g, Problem::MaxCut, Some(&a), None, &c, &mut rng::seeded(0)).is_err());
        assert!(pbnco_run(&g, Problem::Mis, Some(&a), Some(&b), &c, &mut rng::seeded(0)).is_err());
        assert!("bogus".parse::<RunMode>().is_err());
        assert_eq!("auto".parse::<Patience>().unwrap(), Patience::Auto);
        assert_eq!("7".parse::<Patience>().unwrap(), Patience::Steps(7));
    }
}
