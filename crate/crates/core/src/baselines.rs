//! Classical comparison methods and exact oracles for small instances.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::graphs::GraphInstance;
use crate::pbnco::{AnytimeTrace, Budget, DiversityTracker, TraceRow};
use crate::problems::{greedy_fill_mis, legal_actions, apply_action, random_solution, Problem, Solution};
use crate::rng::Rng;

pub const BRUTE_FORCE_MC_MAX: usize = 22;
pub const BRUTE_FORCE_MIS_MAX: usize = 26;

/// `(neighbor, weight)` lists.
fn weighted_adjacency(g: &GraphInstance) -> Vec<Vec<(usize, f64)>> {
    let mut adj = vec![Vec::new(); g.node_count()];
    for (i, &(u, v)) in g.edges().iter().enumerate() {
        let w = g.weight(i);
        adj[u].push((v, w));
        adj[v].push((u, w));
    }
    adj
}

/// Change in cut weight from flipping `u`.
fn flip_gain(adj: &[Vec<(usize, f64)>], bits: &Bits, u: usize) -> f64 {
    let side = bits.get(u);
    adj[u]
        .iter()
        .map(|&(v, w)| if bits.get(v) == side { w } else { -w })
        .sum()
}

/// From all-zeros, flip the best positive-gain node until none remains.
pub fn greedy_mc(g: &GraphInstance) -> Solution {
    let adj = weighted_adjacency(g);
    let mut bits = Bits::zeros(g.node_count());
    loop {
        let mut best: Option<(usize, f64)> = None;
        for u in 0..g.node_count() {
            let gain = flip_gain(&adj, &bits, u);
            if gain > 1e-12 && best.is_none_or(|(_, b)| gain > b) {
                best = Some((u, gain));
            }
        }
        match best {
            Some((u, _)) => bits.flip(u),
            None => break,
        }
    }
    Solution::new(g, Problem::MaxCut, bits).expect("valid cut")
}

/// Repeatedly adds the free node with fewest free neighbors.
pub fn greedy_mis(g: &GraphInstance) -> Solution {
    let n = g.node_count();
    let mut free = vec![true; n];
    let mut bits = Bits::zeros(n);
    loop {
        let pick = (0..n)
            .filter(|&u| free[u])
            .min_by_key(|&u| (g.neighbors(u).iter().filter(|&&v| free[v]).count(), u));
        let Some(u) = pick else { break };
        bits.set(u, true);
        free[u] = false;
        for &v in g.neighbors(u) {
            free[v] = false;
        }
    }
    Solution::new(g, Problem::Mis, bits).expect("greedy set is independent")
}

pub fn greedy(g: &GraphInstance, problem: Problem) -> Solution {
    match problem {
        Problem::MaxCut => greedy_mc(g),
        Problem::Mis => greedy_mis(g),
    }
}

/// Drops violating nodes in random order, then saturates to a maximal set
/// in a fresh random order.
pub fn repair_mis(g: &GraphInstance, mut bits: Bits, rng: &mut Rng) -> Bits {
    let mut order: Vec<usize> = (0..g.node_count()).collect();
    order.shuffle(rng);
    for &u in &order {
        if bits.get(u) && g.neighbors(u).iter().any(|&v| bits.get(v)) {
            bits.set(u, false);
        }
    }
    order.shuffle(rng);
    greedy_fill_mis(g, bits, &order)
}

fn make_solution(g: &GraphInstance, problem: Problem, bits: Bits, rng: &mut Rng) -> Solution {
    let bits = match problem {
        Problem::MaxCut => bits,
        Problem::Mis => repair_mis(g, bits, rng),
    };
    Solution::new(g, problem, bits).expect("repaired solutions are valid")
}

#[derive(Clone, Debug)]
pub struct BaselineResult {
    pub best: Solution,
    pub trace: AnytimeTrace,
}

struct Tracker {
    start: Instant,
    budget: Budget,
    best: Option<Solution>,
    diversity: DiversityTracker,
    trace: AnytimeTrace,
}

impl Tracker {
    fn new(g: &GraphInstance, budget: Budget) -> Result<Self> {
        if budget.steps.is_none() && budget.seconds.is_none() {
            return Err(Error::Config("a step or wall-clock budget is required".into()));
        }
        Ok(Self {
            start: Instant::now(),
            budget,
            best: None,
            diversity: DiversityTracker::new(g.node_count()),
            trace: AnytimeTrace::default(),
        })
    }

    fn done(&self, step: usize) -> bool {
        self.budget.steps.is_some_and(|n| step >= n)
            || self.budget.seconds.is_some_and(|s| self.start.elapsed().as_secs_f64() >= s)
    }

    fn observe(&mut self, step: usize, pop: &[Solution]) -> Result<()> {
        for s in pop {
            self.diversity.push(s.bits())?;
            if self.best.as_ref().is_none_or(|b| s.objective() > b.objective()) {
                self.best = Some(s.clone());
            }
        }
        self.trace.rows.push(TraceRow {
            step,
            elapsed_seconds: self.start.elapsed().as_secs_f64(),
            best_objective: self.best.as_ref().map_or(f64::NEG_INFINITY, Solution::objective),
            population_mean_objective: pop.iter().map(Solution::objective).sum::<f64>() / pop.len() as f64,
            diversity: self.diversity.value(),
        });
        Ok(())
    }

    fn finish(self) -> BaselineResult {
        BaselineResult {
            best: self.best.expect("at least one observation"),
            trace: self.trace,
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub tournament: usize,
    pub crossover_rate: f64,
    /// Per-bit rate; `None` means `1/|V|`.
    pub mutation_rate: Option<f64>,
    pub elitism: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 20,
            tournament: 2,
            crossover_rate: 0.9,
            mutation_rate: None,
            elitism: 1,
        }
    }
}

fn tournament<'a>(pop: &'a [Solution], size: usize, rng: &mut Rng) -> &'a Solution {
    let mut best = &pop[rng.random_range(0..pop.len())];
    for _ in 1..size {
        let c = &pop[rng.random_range(0..pop.len())];
        if c.objective() > best.objective() {
            best = c;
        }
    }
    best
}

/// Generational GA; one budget step is one generation.
pub fn ga_run(g: &GraphInstance, problem: Problem, cfg: &GaConfig, budget: Budget, rng: &mut Rng) -> Result<BaselineResult> {
    if cfg.population < 2 || cfg.tournament == 0 || cfg.elitism > cfg.population {
        return Err(Error::Config(format!(
            "GA needs population >= 2, tournament >= 1 and elitism <= population (got {}, {}, {})",
            cfg.population, cfg.tournament, cfg.elitism
        )));
    }
    let n = g.node_count();
    let mutation = cfg.mutation_rate.unwrap_or(if n > 0 { 1.0 / n as f64 } else { 0.0 });
    let mut tracker = Tracker::new(g, budget)?;
    let mut pop: Vec<Solution> = (0..cfg.population).map(|_| random_solution(g, problem, rng)).collect();
    tracker.observe(0, &pop)?;
    let mut generation = 0;
    while !tracker.done(generation) {
        let mut ranked: Vec<usize> = (0..pop.len()).collect();
        ranked.sort_by(|&a, &b| pop[b].objective().total_cmp(&pop[a].objective()).then(a.cmp(&b)));
        let mut next: Vec<Solution> = ranked[..cfg.elitism].iter().map(|&i| pop[i].clone()).collect();
        while next.len() < cfg.population {
            let a = tournament(&pop, cfg.tournament, rng).bits().clone();
            let b = tournament(&pop, cfg.tournament, rng).bits();
            let mut child = a;
            if rng.random::<f64>() < cfg.crossover_rate {
                for u in 0..n {
                    if rng.random::<bool>() {
                        child.set(u, b.get(u));
                    }
                }
            }
            for u in 0..n {
                if rng.random::<f64>() < mutation {
                    child.flip(u);
                }
            }
            next.push(make_solution(g, problem, child, rng));
        }
        pop = next;
        generation += 1;
        tracker.observe(generation, &pop)?;
    }
    Ok(tracker.finish())
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PsoConfig {
    pub swarm: usize,
    pub inertia: f64,
    pub c1: f64,
    pub c2: f64,
    pub velocity_clamp: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm: 20,
            inertia: 0.7,
            c1: 1.5,
            c2: 1.5,
            velocity_clamp: 4.0,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Binary PSO; one budget step is one swarm update.
pub fn pso_run(g: &GraphInstance, problem: Problem, cfg: &PsoConfig, budget: Budget, rng: &mut Rng) -> Result<BaselineResult> {
    if cfg.swarm < 2 {
        return Err(Error::Config(format!("PSO needs a swarm of at least 2, got {}", cfg.swarm)));
    }
    let n = g.node_count();
    let mut tracker = Tracker::new(g, budget)?;
    let mut pos: Vec<Solution> = (0..cfg.swarm).map(|_| random_solution(g, problem, rng)).collect();
    let mut vel = vec![vec![0.0; n]; cfg.swarm];
    let mut pbest = pos.clone();
    let mut gbest = best_of(&pos).clone();
    tracker.observe(0, &pos)?;
    let mut it = 0;
    while !tracker.done(it) {
        for i in 0..cfg.swarm {
            let mut bits = Bits::zeros(n);
            for u in 0..n {
                let x = f64::from(u8::from(pos[i].bits().get(u)));
                let pb = f64::from(u8::from(pbest[i].bits().get(u)));
                let gb = f64::from(u8::from(gbest.bits().get(u)));
                let (r1, r2): (f64, f64) = (rng.random(), rng.random());
                let v = cfg.inertia * vel[i][u] + cfg.c1 * r1 * (pb - x) + cfg.c2 * r2 * (gb - x);
                let v = v.clamp(-cfg.velocity_clamp, cfg.velocity_clamp);
                vel[i][u] = v;
                bits.set(u, rng.random::<f64>() < sigmoid(v));
            }
            pos[i] = make_solution(g, problem, bits, rng);
            if pos[i].objective() > pbest[i].objective() {
                pbest[i] = pos[i].clone();
            }
        }
        let b = best_of(&pos);
        if b.objective() > gbest.objective() {
            gbest = b.clone();
        }
        it += 1;
        tracker.observe(it, &pos)?;
    }
    Ok(tracker.finish())
}

fn best_of(pop: &[Solution]) -> &Solution {
    pop.iter()
        .reduce(|a, b| if b.objective() > a.objective() { b } else { a })
        .expect("nonempty population")
}

/// Uniformly random legal moves from a random start; `steps` moves in total.
pub fn random_walk(g: &GraphInstance, problem: Problem, steps: usize, rng: &mut Rng) -> Result<Solution> {
    let mut s = random_solution(g, problem, rng);
    let mut best = s.clone();
    for _ in 0..steps {
        let moves = legal_actions(g, s.bits(), problem);
        let Some(&a) = moves.get(rng.random_range(0..moves.len().max(1))) else {
            break;
        };
        s = apply_action(g, &s, a)?;
        if s.objective() > best.objective() {
            best = s.clone();
        }
    }
    Ok(best)
}

/// Exact optimum. Max-Cut enumerates every cut with node 0 on side 0 in
/// Gray-code order; MIS branches on include/exclude with a size bound.
pub fn brute_force(g: &GraphInstance, problem: Problem) -> Result<Solution> {
    let n = g.node_count();
    match problem {
        Problem::MaxCut if n > BRUTE_FORCE_MC_MAX => Err(Error::TooLarge(format!(
            "exact Max-Cut is limited to {BRUTE_FORCE_MC_MAX} nodes, instance has {n}"
        ))),
        Problem::Mis if n > BRUTE_FORCE_MIS_MAX => Err(Error::TooLarge(format!(
            "exact MIS is limited to {BRUTE_FORCE_MIS_MAX} nodes, instance has {n}"
        ))),
        Problem::MaxCut => Ok(brute_force_mc(g)),
        Problem::Mis => Ok(brute_force_mis(g)),
    }
}

fn brute_force_mc(g: &GraphInstance) -> Solution {
    let n = g.node_count();
    let adj = weighted_adjacency(g);
    let mut bits = Bits::zeros(n);
    let mut cut = 0.0;
    let mut best = (0.0, bits.clone());
    let free = n.saturating_sub(1);
    for k in 1u64..(1u64 << free) {
        // node 1 + (index of the bit that changes in the Gray code)
        let u = 1 + k.trailing_zeros() as usize;
        cut += flip_gain(&adj, &bits, u);
        bits.flip(u);
        if cut > best.0 + 1e-9 {
            best = (cut, bits.clone());
        }
    }
    Solution::new(g, Problem::MaxCut, best.1).expect("valid cut")
}

fn brute_force_mis(g: &GraphInstance) -> Solution {
    let n = g.node_count();
    let nbr: Vec<u32> = (0..n)
        .map(|u| g.neighbors(u).iter().fold(0u32, |m, &v| m | (1 << v)))
        .collect();
    let all = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let mut best = (0u32, 0u32);
    mis_branch(&nbr, all, 0, &mut best);
    let bits = Bits::from_bools(&(0..n).map(|u| best.1 & (1 << u) != 0).collect::<Vec<_>>());
    Solution::new(g, Problem::Mis, bits).expect("branch result is independent")
}

fn mis_branch(nbr: &[u32], cand: u32, chosen: u32, best: &mut (u32, u32)) {
    let size = chosen.count_ones();
    if cand == 0 {
        if size > best.0 {
            *best = (size, chosen);
        }
        return;
    }
    if size + cand.count_ones() <= best.0 {
        return;
    }
    let mut min = (u32::MAX, 0usize);
    let mut max = (0u32, 0usize);
    let mut rest = cand;
    while rest != 0 {
        let u = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        let d = (nbr[u] & cand).count_ones();
        if d < min.0 {
            min = (d, u);
        }
        if d > max.0 {
            max = (d, u);
        }
    }
    if min.0 <= 1 {
        // a node of degree <= 1 is always in some maximum set
        let u = min.1;
        mis_branch(nbr, cand & !(nbr[u] | (1 << u)), chosen | (1 << u), best);
        return;
    }
    let u = max.1;
    mis_branch(nbr, cand & !(nbr[u] | (1 << u)), chosen | (1 << u), best);
    mis_branch(nbr, cand & !(1 << u), chosen, best);
}
