//! Shared population memory: a bounded FIFO of visited solutions with
//! multiset membership and k-nearest-neighbor descriptors.

use std::collections::{HashMap, VecDeque};
use std::io::Write;

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::problems::Solution;

pub const DEFAULT_CAPACITY: usize = 10_000;
pub const DEFAULT_KNN: usize = 20;
pub const DESCRIPTOR_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct MemoryEntry {
    #[serde(serialize_with = "bits_as_string")]
    pub bits: Bits,
    pub objective: f64,
    pub insertion_index: u64,
}

fn bits_as_string<S: serde::Serializer>(b: &Bits, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&b.to_bitstring())
}

#[derive(Clone, Debug)]
pub struct SharedMemory {
    entries: VecDeque<MemoryEntry>,
    capacity: usize,
    counts: HashMap<Bits, usize>,
    next_index: u64,
}

impl Default for SharedMemory {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

impl SharedMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "memory capacity must be positive");
        Self {
            entries: VecDeque::new(),
            capacity,
            counts: HashMap::new(),
            next_index: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Oldest first.
    pub fn entries(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.entries.iter()
    }

    /// Total number of insertions ever made.
    pub fn insertions(&self) -> u64 {
        self.next_index
    }

    pub fn insert(&mut self, bits: Bits, objective: f64) {
        if self.entries.len() == self.capacity {
            let old = self.entries.pop_front().expect("full memory is nonempty");
            match self.counts.get_mut(&old.bits) {
                Some(c) if *c > 1 => *c -= 1,
                _ => {
                    self.counts.remove(&old.bits);
                }
            }
        }
        *self.counts.entry(bits.clone()).or_insert(0) += 1;
        self.entries.push_back(MemoryEntry {
            bits,
            objective,
            insertion_index: self.next_index,
        });
        self.next_index += 1;
    }

    pub fn insert_solution(&mut self, s: &Solution) {
        self.insert(s.bits().clone(), s.objective());
    }

    pub fn contains(&self, bits: &Bits) -> bool {
        self.counts.contains_key(bits)
    }

    /// Number of stored copies of `bits`.
    pub fn multiplicity(&self, bits: &Bits) -> usize {
        self.counts.get(bits).copied().unwrap_or(0)
    }

    /// The `k` stored entries nearest to `s` in Hamming distance, older
    /// entries first among equal distances, with their descriptor weights.
    /// Returned in (distance, age) order.
    pub fn knn_weights(&self, s: &Bits, k: usize, eps: f64) -> Vec<(&MemoryEntry, f64)> {
        if self.entries.is_empty() || k == 0 {
            return Vec::new();
        }
        let n = s.len();
        let dist: Vec<usize> = self.entries.iter().map(|e| e.bits.hamming(s)).collect();
        let chosen: Vec<usize> = if k >= dist.len() {
            let mut all: Vec<usize> = (0..dist.len()).collect();
            all.sort_by_key(|&i| dist[i]);
            all
        } else {
            // counting selection over integer distances, stable in age
            let mut hist = vec![0usize; n + 1];
            for &d in &dist {
                hist[d] += 1;
            }
            let mut cutoff = 0;
            let mut below = 0;
            while below + hist[cutoff] < k {
                below += hist[cutoff];
                cutoff += 1;
            }
            let mut at_cutoff = k - below;
            let mut picked = Vec::with_capacity(k);
            for (i, &d) in dist.iter().enumerate() {
                if d < cutoff {
                    picked.push(i);
                } else if d == cutoff && at_cutoff > 0 {
                    picked.push(i);
                    at_cutoff -= 1;
                }
            }
            picked.sort_by_key(|&i| dist[i]);
            picked
        };
        let norm = |d: usize| if n == 0 { 0.0 } else { d as f64 / n as f64 };
        let d_min = norm(dist[chosen[0]]);
        let d_max = norm(dist[*chosen.last().expect("nonempty")]);
        let w: Vec<f64> = chosen
            .iter()
            .map(|&i| 1.0 - (norm(dist[i]) - d_min) / (d_max - d_min + eps))
            .collect();
        let total: f64 = w.iter().sum();
        chosen
            .iter()
            .zip(w)
            .map(|(&i, wi)| (&self.entries[i], wi / total))
            .collect()
    }

    /// Distance-weighted mean of the `k` nearest stored solutions; all zeros
    /// when the memory is empty.
    pub fn knn_descriptor(&self, s: &Bits, k: usize, eps: f64) -> Vec<f64> {
        let mut z = vec![0.0; s.len()];
        for (e, alpha) in self.knn_weights(s, k, eps) {
            for u in e.bits.ones_iter() {
                z[u] += alpha;
            }
        }
        z
    }

    /// The `k` most recent insertions, oldest first.
    pub fn last_k(&self, k: usize) -> Vec<Bits> {
        let skip = self.entries.len().saturating_sub(k);
        self.entries.iter().skip(skip).map(|e| e.bits.clone()).collect()
    }

    /// One JSON object per line: bitstring, objective, insertion index.
    pub fn dump_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// How the conditioning set is chosen at restart time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectK {
    #[default]
    Last,
    BestGlobal,
    BestCurrent,
}

impl std::str::FromStr for SelectK {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last" => Ok(SelectK::Last),
            "best_global" | "best-global" => Ok(SelectK::BestGlobal),
            "best_current" | "best-current" => Ok(SelectK::BestCurrent),
            other => Err(Error::Param(format!("unknown select_k strategy {other:?}"))),
        }
    }
}

/// `Last` reads the memory; the other strategies take one solution per
/// individual (`global_bests[i]` over its whole history, `current_bests[i]`
/// since its last restart). At most `k` members are returned; when there are
/// more individuals than `k`, the highest objectives win, lower index first.
pub fn select_k(
    mem: &SharedMemory,
    global_bests: &[Solution],
    current_bests: &[Solution],
    strategy: SelectK,
    k: usize,
) -> Vec<Bits> {
    let per_individual = |sols: &[Solution]| {
        let mut order: Vec<usize> = (0..sols.len()).collect();
        if sols.len() > k {
            order.sort_by(|&a, &b| sols[b].objective().total_cmp(&sols[a].objective()));
            order.truncate(k);
            order.sort_unstable();
        }
        order.into_iter().map(|i| sols[i].bits().clone()).collect()
    };
    match strategy {
        SelectK::Last => mem.last_k(k),
        SelectK::BestGlobal => per_individual(global_bests),
        SelectK::BestCurrent => per_individual(current_bests),
    }
}

/// Writes produced during one population step. They become visible only when
/// committed, and are applied in individual order regardless of the order in
/// which they were recorded.
#[derive(Clone, Debug, Default)]
pub struct StepBuffer {
    writes: Vec<(usize, Bits, f64)>,
}

impl StepBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, individual: usize, bits: Bits, objective: f64) {
        self.writes.push((individual, bits, objective));
    }

    pub fn len(&self) -> usize {
        self.writes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.writes.is_empty()
    }

    pub fn commit(&mut self, mem: &mut SharedMemory) {
        self.writes.sort_by_key(|w| w.0);
        for (_, bits, obj) in self.writes.drain(..) {
            mem.insert(bits, obj);
        }
    }

    /// Commits each individual's writes into its own memory.
    pub fn commit_private(&mut self, mems: &mut [SharedMemory]) {
        self.writes.sort_by_key(|w| w.0);
        for (i, bits, obj) in self.writes.drain(..) {
            mems[i].insert(bits, obj);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(s: &str) -> Bits {
        Bits::parse_bitstring(s).unwrap()
    }

    #[test]
    fn fifo_eviction() {
        let mut m = SharedMemory::new(2);
        for s in ["001", "010", "100"] {
            m.insert(b(s), 0.0);
        }
        let kept: Vec<String> = m.entries().map(|e| e.bits.to_bitstring()).collect();
        assert_eq!(kept, ["010", "100"]);
        assert!(!m.contains(&b("001")));
        assert!(m.contains(&b("100")));
    }

    #[test]
    fn default_capacity_evicts_first() {
        let mut m = SharedMemory::default();
        for i in 0..10_001u32 {
            let bits = Bits::from_bools(&(0..16).map(|j| (i >> j) & 1 == 1).collect::<Vec<_>>());
            m.insert(bits, 0.0);
        }
        assert_eq!(m.len(), 10_000);
        assert_eq!(m.entries().next().unwrap().insertion_index, 1);
        assert!(!m.contains(&Bits::zeros(16)));
    }

    #[test]
    fn duplicates_are_counted() {
        let mut m = SharedMemory::new(3);
        m.insert(b("11"), 2.0);
        m.insert(b("11"), 2.0);
        m.insert(b("00"), 0.0);
        assert_eq!(m.multiplicity(&b("11")), 2);
        m.insert(b("01"), 1.0);
        assert!(m.contains(&b("11")));
        m.insert(b("10"), 1.0);
        assert!(!m.contains(&b("11")));
    }

    #[test]
    fn empty_memory_descriptor_is_zero() {
        let m = SharedMemory::new(4);
        assert!(!m.contains(&b("0")));
        assert_eq!(m.knn_descriptor(&b("0101"), 20, DESCRIPTOR_EPS), vec![0.0; 4]);
    }

    #[test]
    fn single_neighbor_is_identity() {
        let mut m = SharedMemory::new(4);
        m.insert(b("0110"), 2.0);
        assert_eq!(m.knn_descriptor(&b("1111"), 20, DESCRIPTOR_EPS), vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn two_neighbors_nearest_dominates() {
        // distances 1/n and 3/n: d~ = (0, 1/(1+eps n/2)), alpha_1 = 1/(1 + w_2)
        let n = 8;
        let s = Bits::zeros(n);
        let near = b("10000000");
        let far = b("01110000");
        let mut m = SharedMemory::new(4);
        m.insert(far.clone(), 0.0);
        m.insert(near.clone(), 0.0);
        let w = m.knn_weights(&s, 2, DESCRIPTOR_EPS);
        assert_eq!(w[0].0.bits, near);
        let d_span = 2.0 / n as f64;
        let w2 = 1.0 - d_span / (d_span + DESCRIPTOR_EPS);
        assert!((w[0].1 - 1.0 / (1.0 + w2)).abs() < 1e-15);
        assert!((w[0].1 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn equidistant_neighbors_are_uniform() {
        let mut m = SharedMemory::new(8);
        for s in ["1000", "0100", "0010", "0001"] {
            m.insert(b(s), 0.0);
        }
        let z = m.knn_descriptor(&b("0000"), 4, DESCRIPTOR_EPS);
        assert!(z.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn ties_prefer_older_entries() {
        let mut m = SharedMemory::new(8);
        for s in ["1000", "0100", "0010"] {
            m.insert(b(s), 0.0);
        }
        let picked: Vec<u64> = m
            .knn_weights(&b("0000"), 2, DESCRIPTOR_EPS)
            .iter()
            .map(|(e, _)| e.insertion_index)
            .collect();
        assert_eq!(picked, [0, 1]);
    }

    #[test]
    fn select_k_strategies() {
        use crate::graphs::named;
        use crate::problems::Problem;
        let mut m = SharedMemory::new(8);
        for s in ["100", "010", "001"] {
            m.insert(b(s), 0.0);
        }
        assert_eq!(select_k(&m, &[], &[], SelectK::Last, 2), vec![b("010"), b("001")]);
        assert_eq!(select_k(&m, &[], &[], SelectK::Last, 10).len(), 3);
        let g = named::path(3);
        let sol = |s: &str| Solution::new(&g, Problem::MaxCut, b(s)).unwrap();
        let global = vec![sol("010"), sol("100"), sol("000")];
        let current = vec![sol("000"), sol("110")];
        assert_eq!(
            select_k(&m, &global, &current, SelectK::BestGlobal, 20),
            vec![b("010"), b("100"), b("000")]
        );
        assert_eq!(
            select_k(&m, &global, &current, SelectK::BestGlobal, 2),
            vec![b("010"), b("100")]
        );
        assert_eq!(
            select_k(&m, &global, &current, SelectK::BestCurrent, 20),
            vec![b("000"), b("110")]
        );
    }

    #[test]
    fn jsonl_dump() {
        let mut m = SharedMemory::new(2);
        m.insert(b("01"), 1.0);
        let mut out = Vec::new();
        m.dump_jsonl(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "{\"bits\":\"01\",\"objective\":1.0,\"insertion_index\":0}\n"
        );
    }

    fn bits_strategy(n: usize) -> impl Strategy<Value = Bits> {
        proptest::collection::vec(any::<bool>(), n).prop_map(|v| Bits::from_bools(&v))
    }

    /// Reference k-NN: full stable sort over (distance, age).
    fn knn_oracle(entries: &[Bits], s: &Bits, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..entries.len()).collect();
        idx.sort_by_key(|&i| (entries[i].hamming(s), i));
        idx.truncate(k);
        idx
    }

    proptest! {
        #[test]
        fn descriptor_weights_are_convex_and_monotone(
            stored in proptest::collection::vec(bits_strategy(12), 1..40),
            s in bits_strategy(12),
            k in 1usize..25,
        ) {
            let mut m = SharedMemory::new(64);
            for x in &stored {
                m.insert(x.clone(), 0.0);
            }
            let w = m.knn_weights(&s, k, DESCRIPTOR_EPS);
            prop_assert_eq!(w.len(), k.min(stored.len()));
            let total: f64 = w.iter().map(|x| x.1).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|x| x.1 >= 0.0));
            for pair in w.windows(2) {
                prop_assert!(pair[0].1 >= pair[1].1 - 1e-15);
            }
            let got: Vec<usize> = w.iter().map(|(e, _)| e.insertion_index as usize).collect();
            prop_assert_eq!(got, knn_oracle(&stored, &s, k));
            let z = m.knn_descriptor(&s, k, DESCRIPTOR_EPS);
            prop_assert!(z.iter().all(|&x| (-1e-12..=1.0 + 1e-12).contains(&x)));
        }

        #[test]
        fn membership_matches_contents(
            ops in proptest::collection::vec(0u8..16, 1..200),
            cap in 1usize..10,
        ) {
            let mut m = SharedMemory::new(cap);
            let mut reference: VecDeque<u8> = VecDeque::new();
            for &x in &ops {
                let bits = Bits::from_bools(&(0..4).map(|j| (x >> j) & 1 == 1).collect::<Vec<_>>());
                m.insert(bits, 0.0);
                reference.push_back(x);
                if reference.len() > cap {
                    reference.pop_front();
                }
                prop_assert!(m.len() <= cap);
            }
            for x in 0u8..16 {
                let bits = Bits::from_bools(&(0..4).map(|j| (x >> j) & 1 == 1).collect::<Vec<_>>());
                prop_assert_eq!(m.contains(&bits), reference.contains(&x));
                prop_assert_eq!(m.multiplicity(&bits), reference.iter().filter(|&&y| y == x).count());
            }
        }

        #[test]
        fn step_buffer_is_order_independent(
            writes in proptest::collection::vec((0usize..6, bits_strategy(5)), 1..30),
            shuffle_seed in any::<u64>(),
            cap in 1usize..20,
        ) {
            use rand::seq::SliceRandom;
            // one write per individual per step, as in the search loop
            let mut steps: Vec<Vec<(usize, Bits)>> = Vec::new();
            for (i, bits) in writes {
                match steps.last_mut() {
                    Some(step) if !step.iter().any(|w| w.0 == i) => step.push((i, bits)),
                    _ => steps.push(vec![(i, bits)]),
                }
            }
            let mut ordered = SharedMemory::new(cap);
            let mut shuffled = SharedMemory::new(cap);
            let mut r = crate::rng::seeded(shuffle_seed);
            for step in &steps {
                let mut sorted = step.clone();
                sorted.sort_by_key(|w| w.0);
                for (_, bits) in &sorted {
                    ordered.insert(bits.clone(), 0.0);
                }
                let mut perm = step.clone();
                perm.shuffle(&mut r);
                let mut buf = StepBuffer::new();
                let snapshot_len = shuffled.len();
                for (i, bits) in perm {
                    buf.push(i, bits, 0.0);
                    prop_assert_eq!(shuffled.len(), snapshot_len);
                }
                buf.commit(&mut shuffled);
            }
            let a: Vec<_> = ordered.entries().cloned().collect();
            let c: Vec<_> = shuffled.entries().cloned().collect();
            prop_assert_eq!(a, c);
        }
    }
}
