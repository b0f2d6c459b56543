//! Flat `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored; `include <path>` splices in
//! another file (relative to the including file). Later assignments win, so
//! an including file can override what it includes. Every key must be
//! consumed by the command reading the file; leftovers are reported as
//! unknown.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::baselines::{GaConfig, PsoConfig};
use crate::error::{Error, Result};
use crate::gnn::PolicyKind;
use crate::pbnco::{Budget, SearchConfig};
use crate::problems::Problem;
use crate::trainer::TrainConfig;

#[derive(Clone, Debug, Default)]
pub struct KvConfig {
    values: BTreeMap<String, (String, String)>,
    used: std::cell::RefCell<BTreeSet<String>>,
}

const MAX_INCLUDE_DEPTH: usize = 16;

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut c = Self::new();
        c.load_file(path, &mut Vec::new())?;
        Ok(c)
    }

    /// Parses `text`; includes resolve against `base`.
    pub fn from_str_with_base(text: &str, origin: &str, base: &Path) -> Result<Self> {
        let mut c = Self::new();
        c.load_text(text, origin, base, &mut Vec::new())?;
        Ok(c)
    }

    fn load_file(&mut self, path: &Path, stack: &mut Vec<PathBuf>) -> Result<()> {
        let canonical = path.canonicalize().map_err(|e| {
            Error::Config(format!("cannot open config file {}: {e}", path.display()))
        })?;
        if stack.contains(&canonical) {
            return Err(Error::Config(format!("include cycle through {}", path.display())));
        }
        if stack.len() >= MAX_INCLUDE_DEPTH {
            return Err(Error::Config(format!("includes nested deeper than {MAX_INCLUDE_DEPTH}")));
        }
        let text = std::fs::read_to_string(&canonical)?;
        let base = canonical.parent().map(Path::to_path_buf).unwrap_or_default();
        stack.push(canonical);
        self.load_text(&text, &path.display().to_string(), &base, stack)?;
        stack.pop();
        Ok(())
    }

    fn load_text(&mut self, text: &str, origin: &str, base: &Path, stack: &mut Vec<PathBuf>) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = || format!("{origin}:{}", i + 1);
            if let Some(rest) = line.strip_prefix("include") {
                if rest.starts_with(char::is_whitespace) {
                    let target = rest.trim();
                    if target.is_empty() {
                        return Err(Error::Config(format!("{}: include without a path", at())));
                    }
                    self.load_file(&base.join(target), stack)?;
                    continue;
                }
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("{}: expected `key = value`, got {line:?}", at())));
            };
            let key = k.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::Config(format!("{}: invalid key {key:?}", at())));
            }
            self.values.insert(key.to_string(), (v.trim().to_string(), at()));
        }
        Ok(())
    }

    /// Command-line style `key=value` override.
    pub fn set_override(&mut self, assignment: &str) -> Result<()> {
        let Some((k, v)) = assignment.split_once('=') else {
            return Err(Error::Config(format!("override {assignment:?} is not key=value")));
        };
        self.values
            .insert(k.trim().to_string(), (v.trim().to_string(), "command line".into()));
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.used.borrow_mut().insert(key.to_string());
        match self.values.get(key) {
            None => Ok(None),
            Some((v, at)) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::Config(format!("{at}: bad value {v:?} for {key}: {e}"))),
        }
    }

    /// Overwrites `slot` if `key` is present.
    pub fn read<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// `auto` maps to `None`.
    fn read_auto<T: FromStr>(&self, key: &str, slot: &mut Option<T>) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if self.raw(key) == Some("auto") {
            *slot = None;
            return Ok(());
        }
        if let Some(v) = self.get(key)? {
            *slot = Some(v);
        }
        Ok(())
    }

    /// Errors on keys no reader asked for.
    pub fn ensure_all_used(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<String> = self
            .values
            .iter()
            .filter(|(k, _)| !used.contains(*k))
            .map(|(k, (_, at))| format!("{k} ({at})"))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown config keys: {}", unknown.join(", "))))
        }
    }
}

/// Training configuration; `problem` in the file may override the default.
pub fn train_config(kv: &KvConfig, kind: PolicyKind, problem: Problem) -> Result<TrainConfig> {
    let mut problem = problem;
    kv.read("problem", &mut problem)?;
    let mut c = TrainConfig::desk(kind, problem);
    kv.read("family", &mut c.family)?;
    kv.read("n_min", &mut c.n_min)?;
    kv.read("n_max", &mut c.n_max)?;
    kv.read("er_p", &mut c.er_p)?;
    kv.read("rb_group_size", &mut c.rb.group_size)?;
    kv.read("rb_tightness", &mut c.rb.tightness)?;
    kv.read("rb_constraint_factor", &mut c.rb.constraint_factor)?;
    kv.read("episodes", &mut c.episodes)?;
    kv.read("seed", &mut c.seed)?;
    kv.read("lr", &mut c.lr)?;
    kv.read("layers", &mut c.layers)?;
    kv.read("d_model", &mut c.d_model)?;
    kv.read("heads", &mut c.heads)?;
    kv.read("d_ff", &mut c.d_ff)?;
    kv.read("dense_attention", &mut c.dense_attention)?;
    kv.read("batch_instances", &mut c.batch_instances)?;
    kv.read("entropy_coef", &mut c.entropy_coef)?;
    kv.read("log_base", &mut c.log_base)?;
    kv.read("population", &mut c.population)?;
    kv.read_auto("t_train", &mut c.t_train)?;
    kv.read("gamma", &mut c.gamma)?;
    kv.read("knn", &mut c.cni.knn)?;
    kv.read("knn_eps", &mut c.cni.eps)?;
    kv.read("w_rep", &mut c.cni.w_rep)?;
    kv.read("reward_mode", &mut c.cni.reward_mode)?;
    kv.read("memory_capacity", &mut c.memory_capacity)?;
    kv.read("candidates", &mut c.candidates)?;
    kv.read("k_max", &mut c.k_max)?;
    kv.read("beta_alpha", &mut c.beta_alpha)?;
    kv.read("beta_beta", &mut c.beta_beta)?;
    kv.read("validate_every", &mut c.validate_every)?;
    kv.read("validation_instances", &mut c.validation_instances)?;
    c.validate()?;
    Ok(c)
}

/// Settings for `solve`: the population search plus the classical baselines.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct SolveSettings {
    pub search: SearchConfig,
    pub ga: GaConfig,
    pub pso: PsoConfig,
}

pub fn solve_settings(kv: &KvConfig) -> Result<SolveSettings> {
    let mut s = SearchConfig::default();
    kv.read("population", &mut s.population)?;
    let mut steps = s.budget.steps;
    let mut seconds = s.budget.seconds;
    if let Some(v) = kv.raw("budget_steps") {
        steps = if v == "none" { None } else { Some(kv.get("budget_steps")?.expect("present")) };
    }
    if let Some(v) = kv.raw("budget_seconds") {
        seconds = if v == "none" { None } else { Some(kv.get("budget_seconds")?.expect("present")) };
    }
    s.budget = Budget { steps, seconds };
    kv.read("patience", &mut s.patience)?;
    kv.read("omega_start", &mut s.omega_start)?;
    kv.read("phi", &mut s.phi)?;
    kv.read("select_k", &mut s.select_k)?;
    kv.read("k_max", &mut s.k_max)?;
    kv.read("init", &mut s.init)?;
    kv.read("mode", &mut s.mode)?;
    kv.read("knn", &mut s.cni.knn)?;
    kv.read("knn_eps", &mut s.cni.eps)?;
    kv.read("w_rep", &mut s.cni.w_rep)?;
    kv.read("cni_decode", &mut s.cni_decode)?;
    kv.read("cnc_decode", &mut s.cnc_decode)?;
    kv.read("memory_capacity", &mut s.memory_capacity)?;
    s.validate()?;

    let mut ga = GaConfig::default();
    kv.read("ga_population", &mut ga.population)?;
    kv.read("ga_tournament", &mut ga.tournament)?;
    kv.read("ga_crossover_rate", &mut ga.crossover_rate)?;
    kv.read_auto("ga_mutation_rate", &mut ga.mutation_rate)?;
    kv.read("ga_elitism", &mut ga.elitism)?;
    let mut pso = PsoConfig::default();
    kv.read("pso_swarm", &mut pso.swarm)?;
    kv.read("pso_inertia", &mut pso.inertia)?;
    kv.read("pso_c1", &mut pso.c1)?;
    kv.read("pso_c2", &mut pso.c2)?;
    kv.read("pso_velocity_clamp", &mut pso.velocity_clamp)?;
    Ok(SolveSettings { search: s, ga, pso })
}

/// Every training key with its default, as a config file.
pub fn train_defaults_text(kind: PolicyKind, problem: Problem) -> String {
    let c = TrainConfig::desk(kind, problem);
    let t_train = c.t_train.map_or("auto".to_string(), |t| t.to_string());
    let log_base = match c.log_base {
        crate::problems::LogBase::Natural => "natural",
        crate::problems::LogBase::Two => "two",
    };
    let reward_mode = match c.cni.reward_mode {
        crate::cni::RewardMode::Normalized => "normalized",
        crate::cni::RewardMode::Raw => "raw",
    };
    let problem = match problem {
        Problem::MaxCut => "mc",
        Problem::Mis => "mis",
    };
    format!(
        "# instances\nproblem = {problem}\nfamily = {}\nn_min = {}\nn_max = {}\ner_p = {}\n\
         rb_group_size = {}\nrb_tightness = {}\nrb_constraint_factor = {}\n\
         # optimization\nepisodes = {}\nseed = {}\nlr = {}\nbatch_instances = {}\nentropy_coef = {}\nlog_base = {log_base}\n\
         # network\nlayers = {}\nd_model = {}\nheads = {}\nd_ff = {}\ndense_attention = {}\n\
         # cNI\npopulation = {}\nt_train = {t_train}   # auto = 2|V|\ngamma = {}\nknn = {}\nknn_eps = {}\nw_rep = {}\n\
         reward_mode = {reward_mode}\nmemory_capacity = {}\n\
         # cNC\ncandidates = {}\nk_max = {}\nbeta_alpha = {}\nbeta_beta = {}\n\
         # validation\nvalidate_every = {}\nvalidation_instances = {}\n",
        c.family,
        c.n_min,
        c.n_max,
        c.er_p,
        c.rb.group_size,
        c.rb.tightness,
        c.rb.constraint_factor,
        c.episodes,
        c.seed,
        c.lr,
        c.batch_instances,
        c.entropy_coef,
        c.layers,
        c.d_model,
        c.heads,
        c.d_ff,
        c.dense_attention,
        c.population,
        c.gamma,
        c.cni.knn,
        c.cni.eps,
        c.cni.w_rep,
        c.memory_capacity,
        c.candidates,
        c.k_max,
        c.beta_alpha,
        c.beta_beta,
        c.validate_every,
        c.validation_instances,
    )
}

/// Every `solve` key with its default, as a config file.
pub fn solve_defaults_text() -> String {
    let s = SearchConfig::default();
    let ga = GaConfig::default();
    let pso = PsoConfig::default();
    format!(
        "# population search\nmode = {}\npopulation = {}\nbudget_steps = {}\nbudget_seconds = none\n\
         patience = {}   # count, auto (= |V|) or never\nomega_start = {}\nphi = {}\nselect_k = last\nk_max = {}\n\
         init = random\nknn = {}\nknn_eps = {}\nw_rep = {}\ncni_decode = sample\ncnc_decode = sample\nmemory_capacity = {}\n\
         # genetic algorithm\nga_population = {}\nga_tournament = {}\nga_crossover_rate = {}\nga_mutation_rate = auto   # auto = 1/|V|\nga_elitism = {}\n\
         # binary particle swarm\npso_swarm = {}\npso_inertia = {}\npso_c1 = {}\npso_c2 = {}\npso_velocity_clamp = {}\n",
        s.mode,
        s.population,
        s.budget.steps.unwrap_or(0),
        s.patience,
        s.omega_start,
        s.phi,
        s.k_max,
        s.cni.knn,
        s.cni.eps,
        s.cni.w_rep,
        s.memory_capacity,
        ga.population,
        ga.tournament,
        ga.crossover_rate,
        ga.elitism,
        pso.swarm,
        pso.inertia,
        pso.c1,
        pso.c2,
        pso.velocity_clamp,
    )
}
