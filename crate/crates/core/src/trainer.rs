//! REINFORCE training for both policies.
//!
//! cNI: every episode samples one instance, rolls `P` improvement
//! trajectories in lock-step over a shared memory, and uses the per-timestep
//! population mean return as baseline. cNC: every episode samples one
//! instance, a synthetic conditioning set and ω, decodes `G` candidates from
//! a single forward pass, and uses their mean reward as baseline.

use std::io::Write;

use pbnco_autodiff::{adam_step, AdamConfig, AdamState, GradBuffer, Gradients, Tape, Var};
use rand::Rng as _;

use crate::bits::Bits;
use crate::cnc::{self, cnc_logits, cnc_reward, decode, log_prob_var, sample_omega};
use crate::cni::{self, choose_action, score_move, CniConfig, DecodeMode};
use crate::error::{Error, Result};
use crate::gnn::{Hyperparameters, PolicyKind, PolicyParameters};
use crate::graphs::{generate_er, generate_rb, Family, GraphInstance, RbParams};
use crate::memory::{SharedMemory, StepBuffer, DEFAULT_CAPACITY};
use crate::problems::{random_solution, reward_scale, LogBase, Problem, Solution};
use crate::rng::{self, derive_seed, Rng};

/// `Ĝ_t = Σ_{t' ≥ t} γ^{t'-t} r_{t'}`.
pub fn compute_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Rewards minus their mean.
pub fn mean_baseline_advantages(rewards: &[f64]) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    rewards.iter().map(|r| r - mean).collect()
}

/// Per-timestep population-mean baseline over equal-length return sequences.
pub fn timestep_mean_advantages(returns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let Some(len) = returns.first().map(Vec::len) else {
        return Vec::new();
    };
    let p = returns.len() as f64;
    let baseline: Vec<f64> = (0..len)
        .map(|t| returns.iter().map(|g| g[t]).sum::<f64>() / p)
        .collect();
    returns
        .iter()
        .map(|g| g.iter().zip(&baseline).map(|(x, b)| x - b).collect())
        .collect()
}

/// `−Σ_t log π(a_t|x_t)·A_t`, with the advantages entering as constants.
pub fn pg_loss(tape: &mut Tape<'_>, log_probs: &[Var], advantages: &[f64]) -> Result<Var> {
    if log_probs.is_empty() {
        return Err(Error::Param("policy-gradient loss over an empty batch".into()));
    }
    if log_probs.len() != advantages.len() {
        return Err(Error::Length {
            expected: log_probs.len(),
            got: advantages.len(),
        });
    }
    let mut total: Option<Var> = None;
    for (&lp, &a) in log_probs.iter().zip(advantages) {
        let term = tape.scale(lp, -a);
        total = Some(match total {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    Ok(total.expect("nonempty"))
}

/// Everything one training run needs.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub kind: PolicyKind,
    pub problem: Problem,
    pub family: Family,
    pub n_min: usize,
    pub n_max: usize,
    pub er_p: f64,
    pub rb: RbParams,
    pub episodes: usize,
    pub seed: u64,
    pub lr: f64,
    pub layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub dense_attention: bool,
    /// Instances per parameter update.
    pub batch_instances: usize,
    pub entropy_coef: f64,
    pub log_base: LogBase,
    // cNI
    pub population: usize,
    /// Steps per trajectory; `None` means `2·|V|`.
    pub t_train: Option<usize>,
    pub gamma: f64,
    pub cni: CniConfig,
    pub memory_capacity: usize,
    // cNC
    pub candidates: usize,
    pub k_max: usize,
    pub beta_alpha: f64,
    pub beta_beta: f64,
    // validation
    pub validate_every: usize,
    pub validation_instances: usize,
}

impl TrainConfig {
    /// Desk-scale defaults: ER graphs with 20–60 nodes, `L=3, d=32, h=4`.
    pub fn desk(kind: PolicyKind, problem: Problem) -> Self {
        Self {
            kind,
            problem,
            family: Family::Er,
            n_min: 20,
            n_max: 60,
            er_p: 0.15,
            rb: RbParams::default(),
            episodes: 1000,
            seed: 0,
            lr: 1e-4,
            layers: 3,
            d_model: 32,
            heads: 4,
            d_ff: 128,
            dense_attention: false,
            batch_instances: 1,
            entropy_coef: 0.0,
            log_base: LogBase::Natural,
            population: 8,
            t_train: None,
            gamma: 0.95,
            cni: CniConfig::default(),
            memory_capacity: DEFAULT_CAPACITY,
            candidates: 8,
            k_max: cnc::DEFAULT_K_MAX,
            beta_alpha: cnc::DEFAULT_BETA_ALPHA,
            beta_beta: cnc::DEFAULT_BETA_ALPHA,
            validate_every: 50,
            validation_instances: 8,
        }
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        let mut h = Hyperparameters::desk(self.kind, self.problem, self.k_max).with_size(
            self.layers,
            self.d_model,
            self.heads,
            self.d_ff,
        );
        h.dense_attention = self.dense_attention;
        h
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_min == 0 || self.n_min > self.n_max {
            return bad(format!("invalid size range {}..={}", self.n_min, self.n_max));
        }
        if !(0.0..=1.0).contains(&self.er_p) {
            return bad(format!("er_p {} outside [0, 1]", self.er_p));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.lr > 0.0) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if self.batch_instances == 0 {
            return bad("batch_instances must be at least 1".into());
        }
        match self.kind {
            PolicyKind::Cni if self.population < 2 => {
                bad("cNI training needs population >= 2 for the mean baseline".into())
            }
            PolicyKind::Cnc if self.candidates < 2 => {
                bad("cNC training needs candidates >= 2 for the mean baseline".into())
            }
            PolicyKind::Cnc if !(self.beta_alpha > 0.0 && self.beta_beta > 0.0) => {
                bad("Beta parameters must be positive".into())
            }
            _ => self.hyperparameters().validate(),
        }
    }

    /// The training instance of one episode.
    pub fn sample_instance(&self, stream: u64) -> Result<GraphInstance> {
        let seed = derive_seed(self.seed, stream);
        let mut r = rng::seeded(seed);
        let n = r.random_range(self.n_min..=self.n_max);
        match self.family {
            Family::Er | Family::Custom => generate_er(n, self.er_p, seed),
            Family::Rb => {
                let groups = (n / self.rb.group_size).max(2);
                generate_rb(&RbParams { groups, ..self.rb.clone() }, seed)
            }
        }
    }

    fn validation_set(&self) -> Result<Vec<GraphInstance>> {
        (0..self.validation_instances)
            .map(|i| self.sample_instance(VALIDATION_STREAM + i as u64))
            .collect()
    }
}

const VALIDATION_STREAM: u64 = 1 << 40;
const ROLLOUT_STREAM: u64 = 1 << 41;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub mean_reward: f64,
    pub loss: f64,
    pub grad_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<f64>,
}

pub fn write_metrics_jsonl<W: Write>(metrics: &[EpisodeMetrics], mut w: W) -> Result<()> {
    for m in metrics {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: PolicyParameters,
    pub metrics: Vec<EpisodeMetrics>,
}

/// Gradient contribution of one instance.
struct EpisodeGrad {
    grad: GradBuffer,
    loss: f64,
    mean_reward: f64,
}

fn check_finite(episode: usize, g: &EpisodeGrad) -> Result<()> {
    if !g.loss.is_finite() || !g.grad.is_finite() {
        return Err(Error::Diverged {
            episode,
            detail: format!(
                "loss {} mean reward {} gradient norm {}",
                g.loss,
                g.mean_reward,
                g.grad.l2_norm()
            ),
        });
    }
    Ok(())
}

fn accumulate(buf: &mut GradBuffer, g: &Gradients) {
    // loss gradient -> ascent direction
    buf.accumulate(g, -1.0);
}

/// Rolls `P` trajectories on one instance and returns the gradient of the
/// batch objective (already in ascent orientation).
pub fn cni_episode_gradient(
    params: &PolicyParameters,
    cfg: &TrainConfig,
    g: &GraphInstance,
    rng: &mut Rng,
) -> Result<(GradBuffer, f64, f64)> {
    let problem = cfg.problem;
    let scale = reward_scale(g, problem, cfg.log_base);
    let steps = cfg.t_train.unwrap_or(2 * g.node_count()).max(1);
    let p = cfg.population;

    let mut tapes: Vec<Tape<'_>> = (0..p).map(|_| Tape::with_params(params.tensors())).collect();
    let mut states: Vec<Solution> = (0..p).map(|_| random_solution(g, problem, rng)).collect();
    let mut best: Vec<f64> = states.iter().map(Solution::objective).collect();
    let mut mem = SharedMemory::new(cfg.memory_capacity);
    for s in &states {
        mem.insert_solution(s);
    }
    let mut log_probs: Vec<Vec<Var>> = vec![Vec::with_capacity(steps); p];
    let mut entropies: Vec<Vec<Var>> = vec![Vec::new(); p];
    let mut rewards: Vec<Vec<f64>> = vec![Vec::with_capacity(steps); p];

    for _ in 0..steps {
        let mut buf = StepBuffer::new();
        for i in 0..p {
            let choice = choose_action(
                &mut tapes[i],
                params,
                g,
                &states[i],
                &mem,
                &cfg.cni,
                rng,
                DecodeMode::Sample,
            )?;
            if cfg.entropy_coef != 0.0 {
                entropies[i].push(cni::action_entropy(&mut tapes[i], &choice)?);
            }
            let (next, reward, _) =
                score_move(g, &states[i], choice.action, best[i], &mem, &cfg.cni, &scale)?;
            best[i] = reward.new_best;
            log_probs[i].push(choice.log_prob);
            rewards[i].push(reward.total);
            buf.push(i, next.bits().clone(), next.objective());
            states[i] = next;
        }
        buf.commit(&mut mem);
    }

    let returns: Vec<Vec<f64>> = rewards.iter().map(|r| compute_returns(r, cfg.gamma)).collect();
    let adv = timestep_mean_advantages(&returns);
    let mut grad = GradBuffer::zeros_like(params.tensors());
    let mut loss = 0.0;
    let norm = 1.0 / p as f64;
    for i in 0..p {
        let tape = &mut tapes[i];
        let mut l = pg_loss(tape, &log_probs[i], &adv[i])?;
        if !entropies[i].is_empty() {
            let w = vec![cfg.entropy_coef; entropies[i].len()];
            let e = pg_loss(tape, &entropies[i], &w)?;
            l = tape.add(l, e)?;
        }
        let l = tape.scale(l, norm);
        loss += tape.scalar(l);
        let grads = tape.backward(l)?;
        accumulate(&mut grad, &grads);
    }
    let mean_reward = rewards.iter().flatten().sum::<f64>() / (p * steps) as f64;
    Ok((grad, loss, mean_reward))
}

/// Synthetic conditioning set: uniform size in `0..=k_max`, random members.
pub fn synthetic_conditioning(
    g: &GraphInstance,
    problem: Problem,
    k_max: usize,
    rng: &mut Rng,
) -> Vec<Bits> {
    let size = rng.random_range(0..=k_max);
    (0..size)
        .map(|_| random_solution(g, problem, rng).into_bits())
        .collect()
}

/// One cNC instance: `G` candidates under a shared `(K, ω)`.
pub fn cnc_episode_gradient(
    params: &PolicyParameters,
    cfg: &TrainConfig,
    g: &GraphInstance,
    rng: &mut Rng,
) -> Result<(GradBuffer, f64, f64)> {
    let problem = cfg.problem;
    let scale = reward_scale(g, problem, cfg.log_base);
    let k = synthetic_conditioning(g, problem, cfg.k_max, rng);
    let omega = sample_omega(rng, cfg.beta_alpha, cfg.beta_beta)?;

    let mut tape = Tape::with_params(params.tensors());
    let logits = cnc_logits(&mut tape, params, g, problem, &k, omega)?;
    let values = tape.value(logits).data().to_vec();
    let mut log_probs = Vec::with_capacity(cfg.candidates);
    let mut rewards = Vec::with_capacity(cfg.candidates);
    for _ in 0..cfg.candidates {
        let (s, counts) = decode(g, problem, &values, rng, DecodeMode::Sample)?;
        rewards.push(cnc_reward(&s, &k, omega, &scale)?);
        log_probs.push(log_prob_var(&mut tape, logits, &counts)?);
    }
    let adv = mean_baseline_advantages(&rewards);
    let mut l = pg_loss(&mut tape, &log_probs, &adv)?;
    if cfg.entropy_coef != 0.0 {
        let h = bernoulli_entropy(&mut tape, logits, problem)?;
        let h = tape.scale(h, -cfg.entropy_coef);
        l = tape.add(l, h)?;
    }
    let l = tape.scale(l, 1.0 / cfg.candidates as f64);
    let loss = tape.scalar(l);
    let grads = tape.backward(l)?;
    let mut grad = GradBuffer::zeros_like(params.tensors());
    accumulate(&mut grad, &grads);
    let mean_reward = rewards.iter().sum::<f64>() / rewards.len() as f64;
    Ok((grad, loss, mean_reward))
}

/// Summed per-node Bernoulli entropy (anchor excluded for Max-Cut).
fn bernoulli_entropy(tape: &mut Tape<'_>, logits: Var, problem: Problem) -> Result<Var> {
    let (n, _) = tape.shape(logits);
    let rows: Vec<usize> = match problem {
        Problem::MaxCut => (1..n).collect(),
        Problem::Mis => (0..n).collect(),
    };
    if rows.is_empty() {
        let zero = tape.input(pbnco_autodiff::Matrix::scalar(0.0));
        return Ok(zero);
    }
    let l = tape.select_rows(logits, &rows)?;
    let p = tape.sigmoid(l);
    let lp = tape.log_sigmoid(l);
    let nl = tape.neg(l);
    let lq = tape.log_sigmoid(nl);
    let q = tape.neg(p);
    let q = tape.add_scalar(q, 1.0);
    let a = tape.mul(p, lp)?;
    let b = tape.mul(q, lq)?;
    let s = tape.add(a, b)?;
    let s = tape.sum(s);
    Ok(tape.neg(s))
}

/// Mean normalized objective on the validation instances: greedy ω=0
/// construction for cNC, best of a `2·|V|`-step sampled rollout for cNI.
pub fn validation_score(
    params: &PolicyParameters,
    cfg: &TrainConfig,
    instances: &[GraphInstance],
) -> Result<f64> {
    if instances.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for (i, g) in instances.iter().enumerate() {
        let scale = reward_scale(g, cfg.problem, cfg.log_base);
        let mut r = rng::stream(cfg.seed ^ VALIDATION_STREAM, i as u64);
        let best = match cfg.kind {
            PolicyKind::Cnc => {
                let (s, _) = cnc::cnc_construct(params, g, cfg.problem, &[], 0.0, &mut r, DecodeMode::Greedy)?;
                s.objective()
            }
            PolicyKind::Cni => {
                let steps = cfg.t_train.unwrap_or(2 * g.node_count());
                cni_rollout_best(params, g, cfg.problem, &cfg.cni, steps, &mut r, DecodeMode::Sample)?
            }
        };
        total += scale.normalize(best);
    }
    Ok(total / instances.len() as f64)
}

/// Best objective along one trajectory from a random start, with a private
/// memory receiving every visited solution.
pub fn cni_rollout_best(
    params: &PolicyParameters,
    g: &GraphInstance,
    problem: Problem,
    cni_cfg: &CniConfig,
    steps: usize,
    rng: &mut Rng,
    mode: DecodeMode,
) -> Result<f64> {
    let scale = reward_scale(g, problem, LogBase::Natural);
    let mut s = random_solution(g, problem, rng);
    let mut best = s.objective();
    let mut mem = SharedMemory::new(DEFAULT_CAPACITY);
    mem.insert_solution(&s);
    for _ in 0..steps {
        let (next, rec) = cni::cni_step(params, g, &s, best, &mem, cni_cfg, &scale, rng, mode)?;
        best = best.max(rec.objective);
        mem.insert_solution(&next);
        s = next;
    }
    Ok(best)
}

/// Trains from a fresh initialization.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let params = PolicyParameters::init(cfg.hyperparameters(), derive_seed(cfg.seed, u64::MAX))?;
    train_from(cfg, params, |_| {})
}

pub fn train_cni(cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.kind != PolicyKind::Cni {
        return Err(Error::Config("train_cni called with a cNC config".into()));
    }
    train(cfg)
}

pub fn train_cnc(cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.kind != PolicyKind::Cnc {
        return Err(Error::Config("train_cnc called with a cNI config".into()));
    }
    train(cfg)
}

/// Continues training `params`; `on_episode` sees every metrics record as it
/// is produced.
pub fn train_from(
    cfg: &TrainConfig,
    mut params: PolicyParameters,
    mut on_episode: impl FnMut(&EpisodeMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    params.expect(cfg.kind, cfg.problem)?;
    let validation = cfg.validation_set()?;
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(params.tensors());
    let mut metrics = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        let mut total = GradBuffer::zeros_like(params.tensors());
        let mut loss = 0.0;
        let mut mean_reward = 0.0;
        for b in 0..cfg.batch_instances {
            let stream = (episode * cfg.batch_instances + b) as u64;
            let g = cfg.sample_instance(stream)?;
            let mut r = rng::stream(cfg.seed ^ ROLLOUT_STREAM, stream);
            let (grad, l, mr) = match cfg.kind {
                PolicyKind::Cni => cni_episode_gradient(&params, cfg, &g, &mut r)?,
                PolicyKind::Cnc => cnc_episode_gradient(&params, cfg, &g, &mut r)?,
            };
            let eg = EpisodeGrad {
                grad,
                loss: l,
                mean_reward: mr,
            };
            check_finite(episode, &eg)?;
            total.merge(&eg.grad);
            loss += eg.loss;
            mean_reward += eg.mean_reward;
        }
        let inv = 1.0 / cfg.batch_instances as f64;
        total.scale(inv);
        adam_step(params.tensors_mut(), total.as_slice(), &mut state, &adam);
        if !params.tensors().iter().all(|m| m.is_finite()) {
            return Err(Error::Diverged {
                episode,
                detail: "parameters became non-finite after the update".into(),
            });
        }
        let is_last = episode + 1 == cfg.episodes;
        let validate = cfg.validate_every > 0 && ((episode + 1) % cfg.validate_every == 0 || is_last);
        let m = EpisodeMetrics {
            episode,
            mean_reward: mean_reward * inv,
            loss: loss * inv,
            grad_norm: total.l2_norm(),
            validation: if validate {
                Some(validation_score(&params, cfg, &validation)?)
            } else {
                None
            },
        };
        on_episode(&m);
        metrics.push(m);
    }
    Ok(TrainOutcome { params, metrics })
}
