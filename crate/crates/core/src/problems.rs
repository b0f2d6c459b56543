//! Max-Cut and Maximum Independent Set: objectives, feasibility, move sets,
//! reward normalization, distances, random solutions and node features.

use std::fmt;
use std::str::FromStr;

use pbnco_autodiff::Matrix;
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::graphs::GraphInstance;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Problem {
    #[serde(rename = "mc")]
    MaxCut,
    #[serde(rename = "mis")]
    Mis,
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Problem::MaxCut => "mc",
            Problem::Mis => "mis",
        })
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mc" | "maxcut" | "max-cut" => Ok(Problem::MaxCut),
            "mis" => Ok(Problem::Mis),
            other => Err(Error::Param(format!("unknown problem {other:?} (expected mc or mis)"))),
        }
    }
}

/// A node assignment together with its objective value on one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    bits: Bits,
    objective: f64,
    problem: Problem,
}

impl Solution {
    /// Checks length (and independence for MIS) and computes the objective.
    pub fn new(g: &GraphInstance, problem: Problem, bits: Bits) -> Result<Self> {
        check_len(g, &bits)?;
        if problem == Problem::Mis {
            if let Some((u, v)) = mis_violation(g, &bits) {
                return Err(Error::Infeasible(u, v));
            }
        }
        let objective = objective(g, problem, &bits)?;
        Ok(Self {
            bits,
            objective,
            problem,
        })
    }

    pub fn bits(&self) -> &Bits {
        &self.bits
    }

    pub fn into_bits(self) -> Bits {
        self.bits
    }

    #[inline]
    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn problem(&self) -> Problem {
        self.problem
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

fn check_len(g: &GraphInstance, bits: &Bits) -> Result<()> {
    if bits.len() != g.node_count() {
        return Err(Error::Length {
            expected: g.node_count(),
            got: bits.len(),
        });
    }
    Ok(())
}

/// Total weight of edges crossing the bipartition.
pub fn mc_objective(g: &GraphInstance, bits: &Bits) -> Result<f64> {
    check_len(g, bits)?;
    Ok(g
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, &(u, v))| bits.get(u) != bits.get(v))
        .map(|(i, _)| g.weight(i))
        .sum())
}

pub fn mis_objective(bits: &Bits) -> f64 {
    bits.count_ones() as f64
}

/// First edge with both endpoints active, in canonical edge order.
pub fn mis_violation(g: &GraphInstance, bits: &Bits) -> Option<(usize, usize)> {
    g.edges()
        .iter()
        .copied()
        .find(|&(u, v)| bits.get(u) && bits.get(v))
}

pub fn mis_is_feasible(g: &GraphInstance, bits: &Bits) -> bool {
    bits.len() == g.node_count() && mis_violation(g, bits).is_none()
}

/// No inactive node could be added without breaking independence.
pub fn mis_is_maximal(g: &GraphInstance, bits: &Bits) -> bool {
    (0..g.node_count())
        .all(|u| bits.get(u) || g.neighbors(u).iter().any(|&v| bits.get(v)))
}

pub fn objective(g: &GraphInstance, problem: Problem, bits: &Bits) -> Result<f64> {
    match problem {
        Problem::MaxCut => mc_objective(g, bits),
        Problem::Mis => {
            check_len(g, bits)?;
            Ok(mis_objective(bits))
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

impl FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "natural" | "ln" | "e" => Ok(LogBase::Natural),
            "two" | "log2" | "2" => Ok(LogBase::Two),
            other => Err(Error::Param(format!("unknown log base {other:?} (expected natural or two)"))),
        }
    }
}

/// Affine normalization `f~ = (f - baseline) / scale`.
///
/// For Max-Cut `baseline` is the expected random cut; for MIS it is the
/// Caro-Wei bound `lower_l` and `scale = upper_u - lower_l`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardScale {
    pub baseline: f64,
    pub scale: f64,
    pub lower_l: f64,
    pub upper_u: f64,
}

impl RewardScale {
    #[inline]
    pub fn normalize(&self, f: f64) -> f64 {
        (f - self.baseline) / self.scale
    }

    #[inline]
    pub fn denormalize(&self, f_tilde: f64) -> f64 {
        f_tilde * self.scale + self.baseline
    }
}

pub fn mc_reward_scale(g: &GraphInstance) -> RewardScale {
    mc_reward_scale_with(g, LogBase::Natural)
}

pub fn mc_reward_scale_with(g: &GraphInstance, log_base: LogBase) -> RewardScale {
    let m = g.edge_count() as f64;
    let n = g.node_count() as f64;
    let log2 = match log_base {
        LogBase::Natural => std::f64::consts::LN_2,
        LogBase::Two => 1.0,
    };
    let scale = if g.edge_count() == 0 {
        1.0
    } else {
        (m * n * log2 / 2.0).sqrt()
    };
    RewardScale {
        baseline: m / 2.0,
        scale,
        lower_l: 0.0,
        upper_u: m,
    }
}

/// Greedy maximal matching over edges in canonical order.
pub fn greedy_matching_size(g: &GraphInstance) -> usize {
    let mut matched = vec![false; g.node_count()];
    let mut size = 0;
    for &(u, v) in g.edges() {
        if !matched[u] && !matched[v] {
            matched[u] = true;
            matched[v] = true;
            size += 1;
        }
    }
    size
}

pub fn caro_wei_bound(g: &GraphInstance) -> f64 {
    (0..g.node_count())
        .map(|u| 1.0 / (g.degree(u) as f64 + 1.0))
        .sum()
}

pub fn mis_reward_scale(g: &GraphInstance) -> RewardScale {
    let lower = caro_wei_bound(g);
    let upper = (g.node_count() - greedy_matching_size(g)) as f64;
    let denom = upper - lower;
    RewardScale {
        baseline: lower,
        scale: if denom > 0.0 { denom } else { 1.0 },
        lower_l: lower,
        upper_u: upper,
    }
}

pub fn reward_scale(g: &GraphInstance, problem: Problem, log_base: LogBase) -> RewardScale {
    match problem {
        Problem::MaxCut => mc_reward_scale_with(g, log_base),
        Problem::Mis => mis_reward_scale(g),
    }
}

/// Fraction of positions at which the two vectors differ.
pub fn hamming_normalized(a: &Bits, b: &Bits) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Length {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(a.hamming(b) as f64 / a.len() as f64)
}

/// Max-Cut: a fair coin per node. MIS: activate nodes in uniformly random
/// order whenever they are still free, which yields a maximal independent set.
pub fn random_solution(g: &GraphInstance, problem: Problem, rng: &mut Rng) -> Solution {
    let n = g.node_count();
    let bits = match problem {
        Problem::MaxCut => {
            let mut b = Bits::zeros(n);
            for u in 0..n {
                b.set(u, rng.random::<bool>());
            }
            b
        }
        Problem::Mis => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            greedy_fill_mis(g, Bits::zeros(n), &order)
        }
    };
    Solution::new(g, problem, bits).expect("random solutions are valid")
}

/// Activates each node of `order` that has no active neighbor.
pub fn greedy_fill_mis(g: &GraphInstance, mut bits: Bits, order: &[usize]) -> Bits {
    for &u in order {
        if !bits.get(u) && g.neighbors(u).iter().all(|&v| !bits.get(v)) {
            bits.set(u, true);
        }
    }
    bits
}

/// One local move. Every node owns exactly one action slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Flip(usize),
    Activate(usize),
    Deactivate(usize),
}

impl Action {
    pub fn node(self) -> usize {
        match self {
            Action::Flip(u) | Action::Activate(u) | Action::Deactivate(u) => u,
        }
    }
}

/// The action that node `u`'s slot denotes in state `bits`.
pub fn action_for_node(problem: Problem, bits: &Bits, u: usize) -> Action {
    match problem {
        Problem::MaxCut => Action::Flip(u),
        Problem::Mis if bits.get(u) => Action::Deactivate(u),
        Problem::Mis => Action::Activate(u),
    }
}

/// Legality of each node's action slot.
pub fn action_mask(g: &GraphInstance, bits: &Bits, problem: Problem) -> Vec<bool> {
    match problem {
        Problem::MaxCut => vec![true; g.node_count()],
        Problem::Mis => (0..g.node_count())
            .map(|u| bits.get(u) || g.neighbors(u).iter().all(|&v| !bits.get(v)))
            .collect(),
    }
}

pub fn legal_actions(g: &GraphInstance, bits: &Bits, problem: Problem) -> Vec<Action> {
    action_mask(g, bits, problem)
        .into_iter()
        .enumerate()
        .filter(|&(_, legal)| legal)
        .map(|(u, _)| action_for_node(problem, bits, u))
        .collect()
}

pub fn is_legal(g: &GraphInstance, bits: &Bits, problem: Problem, a: Action) -> bool {
    let u = a.node();
    if u >= g.node_count() {
        return false;
    }
    match (problem, a) {
        (Problem::MaxCut, Action::Flip(_)) => true,
        (Problem::Mis, Action::Deactivate(_)) => bits.get(u),
        (Problem::Mis, Action::Activate(_)) => {
            !bits.get(u) && g.neighbors(u).iter().all(|&v| !bits.get(v))
        }
        _ => false,
    }
}

pub fn apply_action(g: &GraphInstance, s: &Solution, a: Action) -> Result<Solution> {
    if s.len() != g.node_count() {
        return Err(Error::Length {
            expected: g.node_count(),
            got: s.len(),
        });
    }
    if !is_legal(g, s.bits(), s.problem(), a) {
        return Err(Error::IllegalAction(a));
    }
    let mut bits = s.bits().clone();
    match a {
        Action::Flip(u) => bits.flip(u),
        Action::Activate(u) => bits.set(u, true),
        Action::Deactivate(u) => bits.set(u, false),
    }
    Solution::new(g, s.problem(), bits)
}

/// Node and edge feature matrices fed to the encoder.
///
/// `edge` has one row per edge in canonical order and one column per edge
/// channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    pub node: Matrix,
    pub edge: Matrix,
}

pub const CNI_CHANNELS: usize = 2;
pub const EDGE_CHANNELS: usize = 1;

fn edge_presence(g: &GraphInstance) -> Matrix {
    Matrix::filled(g.edge_count(), EDGE_CHANNELS, 1.0)
}

/// `[s_u, z_u]` per node.
pub fn build_cni_features(g: &GraphInstance, bits: &Bits, z: &[f64]) -> Result<Features> {
    let n = g.node_count();
    check_len(g, bits)?;
    if z.len() != n {
        return Err(Error::Length {
            expected: n,
            got: z.len(),
        });
    }
    let mut node = Matrix::zeros(n, CNI_CHANNELS);
    for u in 0..n {
        node.set(u, 0, if bits.get(u) { 1.0 } else { 0.0 });
        node.set(u, 1, z[u]);
    }
    Ok(Features {
        node,
        edge: edge_presence(g),
    })
}

/// `k_max` reference channels, then ω; Max-Cut adds an anchor indicator.
pub fn cnc_channels(problem: Problem, k_max: usize) -> usize {
    match problem {
        Problem::MaxCut => k_max + 2,
        Problem::Mis => k_max + 1,
    }
}

pub fn build_cnc_features(
    g: &GraphInstance,
    problem: Problem,
    k: &[Bits],
    omega: f64,
    k_max: usize,
) -> Result<Features> {
    if k.len() > k_max {
        return Err(Error::ConditioningTooLarge {
            got: k.len(),
            max: k_max,
        });
    }
    let n = g.node_count();
    let channels = cnc_channels(problem, k_max);
    let mut node = Matrix::zeros(n, channels);
    for (c, m) in k.iter().enumerate() {
        check_len(g, m)?;
        for u in m.ones_iter() {
            node.set(u, c, 1.0);
        }
    }
    for u in 0..n {
        node.set(u, k_max, omega);
    }
    if problem == Problem::MaxCut {
        node.set(0, k_max + 1, 1.0);
    }
    Ok(Features {
        node,
        edge: edge_presence(g),
    })
}
