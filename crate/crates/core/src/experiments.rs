//! Diversity and quality/diversity trade-off studies for the constructive
//! policy.

use crate::bits::Bits;
use crate::cnc::{cnc_construct, mean_distance};
use crate::cni::DecodeMode;
use crate::error::{Error, Result};
use crate::gnn::PolicyParameters;
use crate::graphs::GraphInstance;
use crate::pbnco::DiversityTracker;
use crate::problems::{random_solution, reward_scale, LogBase, Problem};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiversityProtocol {
    /// Random solutions seeding the history.
    pub initial: usize,
    /// Solutions generated one at a time afterwards.
    pub generated: usize,
    /// `None` runs the unconditioned baseline: empty `K` and `ω = 0`.
    pub omega: Option<f64>,
    pub k_max: usize,
    pub mode: DecodeMode,
}

/// Diversity of the whole history after every appended solution. Each new
/// solution is conditioned on the last `k_max` solutions of the history.
pub fn diversity_protocol(
    g: &GraphInstance,
    problem: Problem,
    params: &PolicyParameters,
    proto: &DiversityProtocol,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if proto.initial + proto.generated == 0 {
        return Err(Error::Param("diversity protocol needs at least one solution".into()));
    }
    let mut history: Vec<Bits> = Vec::with_capacity(proto.initial + proto.generated);
    let mut tracker = DiversityTracker::new(g.node_count());
    let mut trace = Vec::with_capacity(history.capacity());
    for _ in 0..proto.initial {
        let s = random_solution(g, problem, rng).into_bits();
        trace.push(tracker.push(&s)?);
        history.push(s);
    }
    for _ in 0..proto.generated {
        let (k, omega) = match proto.omega {
            Some(w) => (&history[history.len().saturating_sub(proto.k_max)..], w),
            None => (&history[..0], 0.0),
        };
        let (s, _) = cnc_construct(params, g, problem, k, omega, rng, proto.mode)?;
        let s = s.into_bits();
        trace.push(tracker.push(&s)?);
        history.push(s);
    }
    Ok(trace)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ParetoPoint {
    pub omega: f64,
    pub mean_distance: f64,
    pub se_distance: f64,
    pub mean_quality: f64,
    pub se_quality: f64,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One construction per instance at each ω against that instance's fixed
/// conditioning set; reports the diversity term (mean distance to `K`) and
/// the quality term (normalized objective).
pub fn pareto_sweep(
    params: &PolicyParameters,
    problem: Problem,
    instances: &[(GraphInstance, Vec<Bits>)],
    omegas: &[f64],
    mode: DecodeMode,
    rng: &mut Rng,
) -> Result<Vec<ParetoPoint>> {
    if instances.is_empty() {
        return Err(Error::Param("pareto sweep needs at least one instance".into()));
    }
    let mut out = Vec::with_capacity(omegas.len());
    for &omega in omegas {
        let mut dist = Vec::with_capacity(instances.len());
        let mut qual = Vec::with_capacity(instances.len());
        for (g, k) in instances {
            let scale = reward_scale(g, problem, LogBase::Natural);
            let (s, _) = cnc_construct(params, g, problem, k, omega, rng, mode)?;
            dist.push(mean_distance(s.bits(), k)?);
            qual.push(scale.normalize(s.objective()));
        }
        let (mean_distance, se_distance) = mean_se(&dist);
        let (mean_quality, se_quality) = mean_se(&qual);
        out.push(ParetoPoint {
            omega,
            mean_distance,
            se_distance,
            mean_quality,
            se_quality,
        });
    }
    Ok(out)
}

/// `k` random solutions of `g`.
pub fn random_conditioning(g: &GraphInstance, problem: Problem, k: usize, rng: &mut Rng) -> Vec<Bits> {
    (0..k).map(|_| random_solution(g, problem, rng).into_bits()).collect()
}
