//! Contextual neural improvement: one local move chosen by a policy that sees
//! the current solution and a k-NN summary of the shared memory.

use pbnco_autodiff::{Mask, Tape, Var};

use crate::error::{Error, Result};
use crate::gnn::{self, PolicyKind, PolicyParameters};
use crate::graphs::GraphInstance;
use crate::memory::{SharedMemory, DEFAULT_KNN, DESCRIPTOR_EPS};
use crate::problems::{
    action_for_node, action_mask, apply_action, build_cni_features, Action, RewardScale, Solution,
};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Sample,
    Greedy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    #[default]
    Normalized,
    Raw,
}

impl std::str::FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(DecodeMode::Sample),
            "greedy" => Ok(DecodeMode::Greedy),
            other => Err(Error::Param(format!("unknown decode mode {other:?} (expected sample or greedy)"))),
        }
    }
}

impl std::str::FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(RewardMode::Normalized),
            "raw" => Ok(RewardMode::Raw),
            other => Err(Error::Param(format!("unknown reward mode {other:?} (expected normalized or raw)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CniConfig {
    pub knn: usize,
    pub eps: f64,
    pub w_rep: f64,
    pub reward_mode: RewardMode,
}

impl Default for CniConfig {
    fn default() -> Self {
        Self {
            knn: DEFAULT_KNN,
            eps: DESCRIPTOR_EPS,
            w_rep: 0.1,
            reward_mode: RewardMode::Normalized,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CniReward {
    pub total: f64,
    pub obj: f64,
    pub rep: f64,
    pub new_best: f64,
}

/// Clipped improvement over the running best plus the repetition penalty.
/// `scale = None` computes the improvement on raw objectives.
pub fn cni_reward(
    prev_best: f64,
    new_objective: f64,
    revisited: bool,
    w_rep: f64,
    scale: Option<&RewardScale>,
) -> CniReward {
    let gain = match scale {
        Some(rs) => rs.normalize(new_objective) - rs.normalize(prev_best),
        None => new_objective - prev_best,
    };
    let obj = gain.max(0.0);
    let rep = if revisited { -1.0 } else { 0.0 };
    CniReward {
        total: obj + w_rep * rep,
        obj,
        rep,
        new_best: prev_best.max(new_objective),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImprovementStepRecord {
    pub action: Action,
    pub log_prob: f64,
    pub r_obj: f64,
    pub r_rep: f64,
    pub r_total: f64,
    pub revisited: bool,
    pub objective: f64,
}

/// A move chosen on a tape, with the nodes needed for training.
#[derive(Clone, Debug)]
pub struct PolicyChoice {
    pub action: Action,
    /// `1 x 1` log-probability of the chosen move.
    pub log_prob: Var,
    /// `1 x |V|` action logits.
    pub logits: Var,
    pub legal: Vec<bool>,
}

/// Chooses one move on `tape`.
#[allow(clippy::too_many_arguments)]
pub fn choose_action(
    tape: &mut Tape<'_>,
    params: &PolicyParameters,
    g: &GraphInstance,
    s: &Solution,
    mem: &SharedMemory,
    cfg: &CniConfig,
    rng: &mut Rng,
    mode: DecodeMode,
) -> Result<PolicyChoice> {
    params.expect(PolicyKind::Cni, s.problem())?;
    let legal = action_mask(g, s.bits(), s.problem());
    if !legal.iter().any(|&x| x) {
        return Err(Error::NoLegalAction);
    }
    let z = mem.knn_descriptor(s.bits(), cfg.knn, cfg.eps);
    let features = build_cni_features(g, s.bits(), &z)?;
    let logits = gnn::node_logits(tape, params, g, &features)?;
    let row = tape.transpose(logits);
    let n = g.node_count();
    let logp = tape.log_softmax_rows(row, Some(Mask::new(1, n, legal.clone())))?;
    let dist = gnn::action_distribution(tape.value(row).data(), &legal)?;
    let u = match mode {
        DecodeMode::Sample => gnn::sample_action(&dist, rng),
        DecodeMode::Greedy => gnn::greedy_action(&dist),
    };
    let lp = tape.slice_cols(logp, u, 1)?;
    Ok(PolicyChoice {
        action: action_for_node(s.problem(), s.bits(), u),
        log_prob: lp,
        logits: row,
        legal,
    })
}

/// Entropy of the masked action distribution, as a `1 x 1` node.
pub fn action_entropy(tape: &mut Tape<'_>, choice: &PolicyChoice) -> Result<Var> {
    let legal: Vec<usize> = (0..choice.legal.len()).filter(|&u| choice.legal[u]).collect();
    let col = tape.transpose(choice.logits);
    let sub = tape.select_rows(col, &legal)?;
    let row = tape.transpose(sub);
    let logp = tape.log_softmax_rows(row, None)?;
    let p = tape.exp(logp);
    let plogp = tape.mul(p, logp)?;
    let s = tape.sum(plogp);
    Ok(tape.neg(s))
}

/// Applies a chosen move and scores it against the step-start memory.
pub fn score_move(
    g: &GraphInstance,
    s: &Solution,
    action: Action,
    prev_best: f64,
    mem: &SharedMemory,
    cfg: &CniConfig,
    scale: &RewardScale,
) -> Result<(Solution, CniReward, bool)> {
    let next = apply_action(g, s, action)?;
    let revisited = mem.contains(next.bits());
    let scale = match cfg.reward_mode {
        RewardMode::Normalized => Some(scale),
        RewardMode::Raw => None,
    };
    let reward = cni_reward(prev_best, next.objective(), revisited, cfg.w_rep, scale);
    Ok((next, reward, revisited))
}

/// One improvement step. The memory is only read; inserting the new solution
/// is the caller's job at the step barrier.
#[allow(clippy::too_many_arguments)]
pub fn cni_step(
    params: &PolicyParameters,
    g: &GraphInstance,
    s: &Solution,
    prev_best: f64,
    mem: &SharedMemory,
    cfg: &CniConfig,
    scale: &RewardScale,
    rng: &mut Rng,
    mode: DecodeMode,
) -> Result<(Solution, ImprovementStepRecord)> {
    let mut tape = Tape::with_params(params.tensors());
    let choice = choose_action(&mut tape, params, g, s, mem, cfg, rng, mode)?;
    let (next, reward, revisited) = score_move(g, s, choice.action, prev_best, mem, cfg, scale)?;
    let record = ImprovementStepRecord {
        action: choice.action,
        log_prob: tape.scalar(choice.log_prob),
        r_obj: reward.obj,
        r_rep: reward.rep,
        r_total: reward.total,
        revisited,
        objective: next.objective(),
    };
    Ok((next, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::Bits;
    use crate::gnn::Hyperparameters;
    use crate::graphs::named;
    use crate::problems::{mc_reward_scale, mis_reward_scale, Problem};
    use crate::rng;

    fn policy(problem: Problem) -> PolicyParameters {
        let h = Hyperparameters::desk(PolicyKind::Cni, problem, 20).with_size(1, 8, 2, 16);
        PolicyParameters::init(h, 3).unwrap()
    }

    #[test]
    fn reward_examples() {
        let rs = mc_reward_scale(&named::complete(3));
        assert_eq!(cni_reward(2.0, 1.0, false, 0.1, Some(&rs)).total, 0.0);
        let r = cni_reward(2.0, 2.0, true, 0.1, Some(&rs));
        assert_eq!((r.total, r.rep), (-0.1, -1.0));
        let r = cni_reward(1.0, 2.0, false, 0.1, Some(&rs));
        assert!((r.obj - 0.566_214_533_525_346).abs() < 1e-12);
        assert_eq!(r.new_best, 2.0);
        assert_eq!(cni_reward(1.0, 3.0, false, 0.1, None).obj, 2.0);
    }

    #[test]
    fn mc_step_flips_one_bit() {
        let g = named::cycle(6);
        let p = policy(Problem::MaxCut);
        let s = Solution::new(&g, Problem::MaxCut, Bits::zeros(6)).unwrap();
        let rs = mc_reward_scale(&g);
        let mem = SharedMemory::new(10);
        let mut r = rng::seeded(1);
        for mode in [DecodeMode::Sample, DecodeMode::Greedy] {
            let (t, rec) = cni_step(&p, &g, &s, 0.0, &mem, &CniConfig::default(), &rs, &mut r, mode).unwrap();
            assert_eq!(t.bits().hamming(s.bits()), 1);
            assert!(rec.log_prob <= 0.0);
            assert_eq!(rec.objective, t.objective());
        }
    }

    #[test]
    fn mis_k3_forced_deactivation() {
        let g = named::complete(3);
        let p = policy(Problem::Mis);
        let s = Solution::new(&g, Problem::Mis, Bits::parse_bitstring("100").unwrap()).unwrap();
        let rs = mis_reward_scale(&g);
        let mem = SharedMemory::new(10);
        let (t, rec) = cni_step(
            &p, &g, &s, 1.0, &mem, &CniConfig::default(), &rs, &mut rng::seeded(0), DecodeMode::Sample,
        )
        .unwrap();
        assert_eq!(t.bits().to_bitstring(), "000");
        assert_eq!(rec.action, Action::Deactivate(0));
        assert!(rec.log_prob.abs() < 1e-12);
    }

    #[test]
    fn greedy_is_deterministic_and_revisits_count() {
        let g = named::path(5);
        let p = policy(Problem::MaxCut);
        let s = Solution::new(&g, Problem::MaxCut, Bits::parse_bitstring("01100").unwrap()).unwrap();
        let rs = mc_reward_scale(&g);
        let mut mem = SharedMemory::new(10);
        mem.insert(Bits::zeros(5), 0.0);
        let cfg = CniConfig::default();
        let a = cni_step(&p, &g, &s, 2.0, &mem, &cfg, &rs, &mut rng::seeded(1), DecodeMode::Greedy).unwrap();
        let b = cni_step(&p, &g, &s, 2.0, &mem, &cfg, &rs, &mut rng::seeded(99), DecodeMode::Greedy).unwrap();
        assert_eq!(a, b);
        for u in 0..5 {
            mem.insert(
                {
                    let mut x = s.bits().clone();
                    x.flip(u);
                    x
                },
                0.0,
            );
        }
        let (_, rec) = cni_step(&p, &g, &s, 9.0, &mem, &cfg, &rs, &mut rng::seeded(1), DecodeMode::Sample).unwrap();
        assert!(rec.revisited);
        assert_eq!(rec.r_total, -0.1);
    }

    #[test]
    fn entropy_of_uniform_choice() {
        let g = named::complete(4);
        let p = policy(Problem::MaxCut);
        let s = Solution::new(&g, Problem::MaxCut, Bits::zeros(4)).unwrap();
        let mem = SharedMemory::new(2);
        let mut tape = Tape::with_params(p.tensors());
        let c = choose_action(&mut tape, &p, &g, &s, &mem, &CniConfig::default(), &mut rng::seeded(0), DecodeMode::Greedy).unwrap();
        let h = action_entropy(&mut tape, &c).unwrap();
        assert!((tape.scalar(h) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn wrong_policy_kind_rejected() {
        let g = named::path(3);
        let p = policy(Problem::Mis);
        let s = Solution::new(&g, Problem::MaxCut, Bits::zeros(3)).unwrap();
        let rs = mc_reward_scale(&g);
        let mem = SharedMemory::new(2);
        assert!(cni_step(&p, &g, &s, 0.0, &mem, &CniConfig::default(), &rs, &mut rng::seeded(0), DecodeMode::Greedy).is_err());
    }
}
