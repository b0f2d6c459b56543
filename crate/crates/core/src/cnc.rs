//! Conditioned neural construction: build a whole solution from one forward
//! pass, conditioned on a set of reference solutions and an exploration
//! weight ω.
//!
//! Max-Cut decodes every node independently from `σ(logit)`, with node 0
//! pinned to side 1. MIS scans nodes by descending logit and decides each
//! still-free node; the scan repeats until the set is maximal.

use pbnco_autodiff::{Matrix, Tape, Var};
use rand::Rng as _;
use rand_distr::{Beta, Distribution};

use crate::bits::Bits;
use crate::cni::DecodeMode;
use crate::error::{Error, Result};
use crate::gnn::{self, PolicyKind, PolicyParameters};
use crate::graphs::GraphInstance;
use crate::problems::{build_cnc_features, hamming_normalized, Problem, RewardScale, Solution};
use crate::rng::Rng;

pub const DEFAULT_K_MAX: usize = 20;
pub const DEFAULT_BETA_ALPHA: f64 = 0.2;
/// Sampling passes over the free MIS nodes before the rest is filled greedily.
pub const MIS_MAX_PASSES: usize = 32;

/// How many times each node was decided as 1 and as 0 during decoding.
/// The log-probability of a construction is
/// `Σ_u ones[u]·log σ(l_u) + zeros[u]·log σ(−l_u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionCounts {
    pub ones: Vec<f64>,
    pub zeros: Vec<f64>,
}

impl DecisionCounts {
    fn new(n: usize) -> Self {
        Self {
            ones: vec![0.0; n],
            zeros: vec![0.0; n],
        }
    }

    pub fn log_prob(&self, logits: &[f64]) -> f64 {
        logits
            .iter()
            .enumerate()
            .map(|(u, &l)| {
                let mut t = 0.0;
                if self.ones[u] != 0.0 {
                    t += self.ones[u] * pbnco_autodiff::log_sigmoid(l);
                }
                if self.zeros[u] != 0.0 {
                    t += self.zeros[u] * pbnco_autodiff::log_sigmoid(-l);
                }
                t
            })
            .sum()
    }
}

/// Per-node logits of the constructive policy, `|V| x 1`.
pub fn cnc_logits(
    tape: &mut Tape<'_>,
    params: &PolicyParameters,
    g: &GraphInstance,
    problem: Problem,
    k: &[Bits],
    omega: f64,
) -> Result<Var> {
    params.expect(PolicyKind::Cnc, problem)?;
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::Param(format!("omega {omega} outside [0, 1]")));
    }
    let features = build_cnc_features(g, problem, k, omega, params.hyper().k_max)?;
    gnn::node_logits(tape, params, g, &features)
}

/// Decodes one solution from fixed logits.
pub fn decode(
    g: &GraphInstance,
    problem: Problem,
    logits: &[f64],
    rng: &mut Rng,
    mode: DecodeMode,
) -> Result<(Solution, DecisionCounts)> {
    let n = g.node_count();
    if logits.len() != n {
        return Err(Error::Length {
            expected: n,
            got: logits.len(),
        });
    }
    let mut counts = DecisionCounts::new(n);
    let mut bits = Bits::zeros(n);
    match problem {
        Problem::MaxCut => {
            bits.set(0, true);
            for u in 1..n {
                let b = match mode {
                    DecodeMode::Greedy => logits[u] >= 0.0,
                    DecodeMode::Sample => rng.random::<f64>() < pbnco_autodiff::sigmoid(logits[u]),
                };
                bits.set(u, b);
                if b {
                    counts.ones[u] += 1.0;
                } else {
                    counts.zeros[u] += 1.0;
                }
            }
        }
        Problem::Mis => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
            let mut blocked = vec![false; n];
            let mut pass = 0;
            loop {
                let mut any_free = false;
                for &u in &order {
                    if bits.get(u) || blocked[u] {
                        continue;
                    }
                    any_free = true;
                    let take = match mode {
                        DecodeMode::Greedy => true,
                        DecodeMode::Sample if pass >= MIS_MAX_PASSES => true,
                        DecodeMode::Sample => {
                            let b = rng.random::<f64>() < pbnco_autodiff::sigmoid(logits[u]);
                            if b {
                                counts.ones[u] += 1.0;
                            } else {
                                counts.zeros[u] += 1.0;
                            }
                            b
                        }
                    };
                    if take {
                        if mode == DecodeMode::Greedy {
                            counts.ones[u] += 1.0;
                        }
                        bits.set(u, true);
                        for &v in g.neighbors(u) {
                            blocked[v] = true;
                        }
                    }
                }
                if !any_free {
                    break;
                }
                pass += 1;
            }
        }
    }
    Ok((Solution::new(g, problem, bits)?, counts))
}

/// Differentiable log-probability of a decoded construction.
pub fn log_prob_var(tape: &mut Tape<'_>, logits: Var, counts: &DecisionCounts) -> Result<Var> {
    let n = counts.ones.len();
    let pos = tape.log_sigmoid(logits);
    let neg_l = tape.neg(logits);
    let neg = tape.log_sigmoid(neg_l);
    let c1 = tape.input(Matrix::from_vec(n, 1, counts.ones.clone()));
    let c0 = tape.input(Matrix::from_vec(n, 1, counts.zeros.clone()));
    let a = tape.mul(pos, c1)?;
    let b = tape.mul(neg, c0)?;
    let s = tape.add(a, b)?;
    Ok(tape.sum(s))
}

/// One construction and its log-probability.
pub fn cnc_construct(
    params: &PolicyParameters,
    g: &GraphInstance,
    problem: Problem,
    k: &[Bits],
    omega: f64,
    rng: &mut Rng,
    mode: DecodeMode,
) -> Result<(Solution, f64)> {
    let logits = cnc_logit_values(params, g, problem, k, omega)?;
    let (s, counts) = decode(g, problem, &logits, rng, mode)?;
    let lp = counts.log_prob(&logits);
    Ok((s, lp))
}

pub fn cnc_logit_values(
    params: &PolicyParameters,
    g: &GraphInstance,
    problem: Problem,
    k: &[Bits],
    omega: f64,
) -> Result<Vec<f64>> {
    let mut tape = Tape::with_params(params.tensors());
    let l = cnc_logits(&mut tape, params, g, problem, k, omega)?;
    Ok(tape.value(l).data().to_vec())
}

/// Mean normalized Hamming distance from `s` to the members of `k`
/// (0 for an empty set).
pub fn mean_distance(s: &Bits, k: &[Bits]) -> Result<f64> {
    if k.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for m in k {
        total += hamming_normalized(s, m)?;
    }
    Ok(total / k.len() as f64)
}

/// `(1−ω)·f̃(s) + ω·mean_distance(s, K)`.
pub fn cnc_reward(s: &Solution, k: &[Bits], omega: f64, scale: &RewardScale) -> Result<f64> {
    let quality = scale.normalize(s.objective());
    let diversity = mean_distance(s.bits(), k)?;
    Ok((1.0 - omega) * quality + omega * diversity)
}

pub fn sample_omega(rng: &mut Rng, alpha: f64, beta: f64) -> Result<f64> {
    let dist = Beta::new(alpha, beta)
        .map_err(|e| Error::Param(format!("Beta({alpha}, {beta}): {e}")))?;
    Ok(dist.sample(rng))
}

/// `ω_start·(1 − t/T_max)^φ`, clamped to `[0, 1]` (also past `T_max`).
pub fn omega_schedule(t: f64, t_max: f64, omega_start: f64, phi: f64) -> f64 {
    if t_max <= 0.0 {
        return if t <= 0.0 { omega_start.clamp(0.0, 1.0) } else { 0.0 };
    }
    let frac = (1.0 - t / t_max).max(0.0);
    (omega_start * frac.powf(phi)).clamp(0.0, 1.0)
}
