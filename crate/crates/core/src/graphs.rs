//! Problem instances: undirected graphs, their random generators, and the
//! line-oriented instance file format.
//!
//! ```text
//! c family er
//! c seed 7
//! p graph 4 3
//! e 0 1
//! e 0 2
//! e 2 3
//! ```
//!
//! Nodes are 0-indexed. Edges are written in canonical order (`u < v`,
//! lexicographic); an optional third field on `e` lines carries a positive
//! weight. The `p` line's problem word may be `graph`, `mc` or `mis`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Er,
    Rb,
    Custom,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Er => "er",
            Family::Rb => "rb",
            Family::Custom => "custom",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "er" => Ok(Family::Er),
            "rb" => Ok(Family::Rb),
            "custom" => Ok(Family::Custom),
            other => Err(Error::Param(format!("unknown graph family {other:?}"))),
        }
    }
}

/// An undirected simple graph defining one problem instance.
#[derive(Clone, Debug)]
pub struct GraphInstance {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    edge_weights: Option<Vec<f64>>,
    family: Family,
    seed: u64,
    adjacency: Vec<Vec<usize>>,
}

impl PartialEq for GraphInstance {
    fn eq(&self, other: &Self) -> bool {
        self.node_count == other.node_count
            && self.edges == other.edges
            && self.edge_weights == other.edge_weights
            && self.family == other.family
            && self.seed == other.seed
    }
}

impl GraphInstance {
    /// Validates and canonicalizes an edge list.
    pub fn new(
        node_count: usize,
        edges: Vec<(usize, usize)>,
        edge_weights: Option<Vec<f64>>,
        family: Family,
        seed: u64,
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::Param("graph needs at least one node".into()));
        }
        if let Some(w) = &edge_weights {
            if w.len() != edges.len() {
                return Err(Error::Length {
                    expected: edges.len(),
                    got: w.len(),
                });
            }
            if let Some(bad) = w.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::Param(format!("edge weight {bad} is not positive")));
            }
        }
        let mut tagged: Vec<((usize, usize), f64)> = Vec::with_capacity(edges.len());
        for (i, &(a, b)) in edges.iter().enumerate() {
            if a >= node_count || b >= node_count {
                return Err(Error::Param(format!(
                    "edge ({a}, {b}) out of range for {node_count} nodes"
                )));
            }
            if a == b {
                return Err(Error::Param(format!("self-loop on node {a}")));
            }
            let w = edge_weights.as_ref().map_or(1.0, |w| w[i]);
            tagged.push(((a.min(b), a.max(b)), w));
        }
        tagged.sort_by(|x, y| x.0.cmp(&y.0));
        if let Some(pair) = tagged.windows(2).find(|p| p[0].0 == p[1].0) {
            return Err(Error::Param(format!("duplicate edge {:?}", pair[0].0)));
        }
        let edges: Vec<(usize, usize)> = tagged.iter().map(|t| t.0).collect();
        let edge_weights = edge_weights.map(|_| tagged.iter().map(|t| t.1).collect());
        let mut adjacency = vec![Vec::new(); node_count];
        for &(u, v) in &edges {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges,
            edge_weights,
            family,
            seed,
            adjacency,
        })
    }

    /// An unweighted custom graph.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::new(node_count, edges.to_vec(), None, Family::Custom, 0)
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Canonically ordered edges, `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_weights(&self) -> Option<&[f64]> {
        self.edge_weights.as_deref()
    }

    #[inline]
    pub fn weight(&self, edge_index: usize) -> f64 {
        self.edge_weights.as_ref().map_or(1.0, |w| w[edge_index])
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }

    #[inline]
    pub fn degree(&self, u: usize) -> usize {
        self.adjacency[u].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Applies a node relabeling: node `u` becomes `perm[u]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.node_count {
            return Err(Error::Length {
                expected: self.node_count,
                got: perm.len(),
            });
        }
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        Self::new(
            self.node_count,
            edges,
            self.edge_weights.clone(),
            self.family,
            self.seed,
        )
    }

    /// Writes the instance in the text format described in the module docs.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("c family {}\n", self.family));
        out.push_str(&format!("c seed {}\n", self.seed));
        out.push_str(&format!("p graph {} {}\n", self.node_count, self.edges.len()));
        for (i, &(u, v)) in self.edges.iter().enumerate() {
            match &self.edge_weights {
                Some(w) => out.push_str(&format!("e {u} {v} {}\n", w[i])),
                None => out.push_str(&format!("e {u} {v}\n")),
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_text().into_bytes()
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
            offset: e.valid_up_to(),
            message: "invalid UTF-8".into(),
        })?;
        let mut family = Family::Custom;
        let mut seed = 0u64;
        let mut header: Option<(usize, usize)> = None;
        let mut edges = Vec::new();
        let mut weights: Vec<Option<f64>> = Vec::new();
        let mut offset = 0usize;

        for line in text.split_inclusive('\n') {
            let at = offset;
            offset += line.len();
            let err = |message: String| Error::Parse {
                offset: at,
                message,
            };
            let mut tok = line.split_whitespace();
            let Some(kind) = tok.next() else { continue };
            let fields: Vec<&str> = tok.collect();
            match kind {
                "c" => match fields.as_slice() {
                    ["family", f] => family = f.parse().map_err(|e: Error| err(e.to_string()))?,
                    ["seed", s] => {
                        seed = s.parse().map_err(|_| err(format!("bad seed {s:?}")))?;
                    }
                    _ => {}
                },
                "p" => {
                    if header.is_some() {
                        return Err(err("duplicate problem line".into()));
                    }
                    let [problem, n, m] = fields.as_slice() else {
                        return Err(err("expected `p <problem> <n> <m>`".into()));
                    };
                    if !matches!(*problem, "graph" | "mc" | "mis") {
                        return Err(err(format!("unknown problem {problem:?}")));
                    }
                    let n: usize = n.parse().map_err(|_| err(format!("bad node count {n:?}")))?;
                    let m: usize = m.parse().map_err(|_| err(format!("bad edge count {m:?}")))?;
                    header = Some((n, m));
                }
                "e" => {
                    let Some((n, _)) = header else {
                        return Err(err("edge before problem line".into()));
                    };
                    let (u, v, w) = match fields.as_slice() {
                        [u, v] => (*u, *v, None),
                        [u, v, w] => (*u, *v, Some(*w)),
                        _ => return Err(err("expected `e <u> <v> [w]`".into())),
                    };
                    let u: usize = u.parse().map_err(|_| err(format!("bad node {u:?}")))?;
                    let v: usize = v.parse().map_err(|_| err(format!("bad node {v:?}")))?;
                    if u >= n || v >= n {
                        return Err(err(format!("edge ({u}, {v}) out of range for {n} nodes")));
                    }
                    let w = w
                        .map(|w| w.parse::<f64>().map_err(|_| err(format!("bad weight {w:?}"))))
                        .transpose()?;
                    edges.push((u, v));
                    weights.push(w);
                }
                other => return Err(err(format!("unknown line type {other:?}"))),
            }
        }

        let Some((n, m)) = header else {
            return Err(Error::Parse {
                offset,
                message: "missing problem line".into(),
            });
        };
        if edges.len() != m {
            return Err(Error::Parse {
                offset,
                message: format!("header declares {m} edges, found {}", edges.len()),
            });
        }
        let edge_weights = if weights.iter().all(Option::is_none) {
            None
        } else if weights.iter().all(Option::is_some) {
            Some(weights.into_iter().flatten().collect())
        } else {
            return Err(Error::Parse {
                offset,
                message: "either all or no edges must carry weights".into(),
            });
        };
        Self::new(n, edges, edge_weights, family, seed)
    }
}

/// Erdős–Rényi G(n, p): each of the n(n-1)/2 pairs independently with
/// probability `p`, drawn in lexicographic pair order.
pub fn generate_er(n: usize, p: f64, seed: u64) -> Result<GraphInstance> {
    if n == 0 {
        return Err(Error::Param("ER graph needs n >= 1".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Param(format!("edge probability {p} outside [0, 1]")));
    }
    let mut r = rng::seeded(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    GraphInstance::new(n, edges, None, Family::Er, seed)
}

/// Parameters of the clique-group RB-style generator.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RbParams {
    pub groups: usize,
    pub group_size: usize,
    pub tightness: f64,
    pub constraint_factor: f64,
}

impl Default for RbParams {
    /// Desk-scale defaults: 8 groups of 4 nodes.
    fn default() -> Self {
        Self {
            groups: 8,
            group_size: 4,
            tightness: 0.25,
            constraint_factor: 0.8,
        }
    }
}

/// `groups` disjoint cliques of `group_size` nodes, then
/// `round(a * groups * ln(groups))` rounds, each adding `round(p * d^2)`
/// distinct cross edges between a random pair of distinct groups.
pub fn generate_rb(params: &RbParams, seed: u64) -> Result<GraphInstance> {
    let RbParams {
        groups,
        group_size: d,
        tightness,
        constraint_factor,
    } = *params;
    if groups < 2 || d < 2 {
        return Err(Error::Param("RB graph needs groups >= 2 and group_size >= 2".into()));
    }
    if !(tightness > 0.0 && tightness < 1.0) {
        return Err(Error::Param(format!("tightness {tightness} outside (0, 1)")));
    }
    if !(constraint_factor > 0.0) {
        return Err(Error::Param(format!(
            "constraint factor {constraint_factor} must be positive"
        )));
    }
    let mut r = rng::seeded(seed);
    let mut edges = BTreeSet::new();
    for g in 0..groups {
        let base = g * d;
        for a in 0..d {
            for b in a + 1..d {
                edges.insert((base + a, base + b));
            }
        }
    }
    let rounds = (constraint_factor * groups as f64 * (groups as f64).ln()).round() as usize;
    let per_round = ((tightness * (d * d) as f64).round() as usize).min(d * d);
    for _ in 0..rounds {
        let gi = r.random_range(0..groups);
        let mut gj = r.random_range(0..groups - 1);
        if gj >= gi {
            gj += 1;
        }
        for k in index::sample(&mut r, d * d, per_round) {
            let (x, y) = (gi * d + k / d, gj * d + k % d);
            edges.insert((x.min(y), x.max(y)));
        }
    }
    GraphInstance::new(groups * d, edges.into_iter().collect(), None, Family::Rb, seed)
}

/// Small named graphs used by tests and examples.
pub mod named {
    use super::GraphInstance;

    pub fn complete(n: usize) -> GraphInstance {
        let mut e = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                e.push((u, v));
            }
        }
        GraphInstance::from_edges(n, &e).expect("valid complete graph")
    }

    pub fn path(n: usize) -> GraphInstance {
        let e: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
        GraphInstance::from_edges(n, &e).expect("valid path")
    }

    pub fn cycle(n: usize) -> GraphInstance {
        let mut e: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
        e.push((n - 1, 0));
        GraphInstance::from_edges(n, &e).expect("valid cycle")
    }

    /// Center 0 with `leaves` leaves.
    pub fn star(leaves: usize) -> GraphInstance {
        let e: Vec<_> = (1..=leaves).map(|v| (0, v)).collect();
        GraphInstance::from_edges(leaves + 1, &e).expect("valid star")
    }

    pub fn empty(n: usize) -> GraphInstance {
        GraphInstance::from_edges(n, &[]).expect("valid empty graph")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn er_extremes() {
        let k3 = generate_er(3, 1.0, 42).unwrap();
        assert_eq!(k3.edges(), &[(0, 1), (0, 2), (1, 2)]);
        assert_eq!(generate_er(5, 0.0, 42).unwrap().edge_count(), 0);
    }

    #[test]
    fn er_edge_count_near_mean() {
        // Binomial(19900, 0.15): mean 2985, sd ~50.4, 4 sd ~ 202
        let g = generate_er(200, 0.15, 7).unwrap();
        let m = g.edge_count() as f64;
        assert!((m - 2985.0).abs() < 202.0, "edge count {m}");
    }

    #[test]
    fn er_rejects_bad_probability() {
        assert!(matches!(generate_er(5, 1.5, 0), Err(Error::Param(_))));
        assert!(matches!(generate_er(5, -0.1, 0), Err(Error::Param(_))));
    }

    #[test]
    fn rb_without_rounds_is_disjoint_cliques() {
        let p = RbParams {
            groups: 2,
            group_size: 2,
            tightness: 0.5,
            constraint_factor: 1e-9,
        };
        let g = generate_rb(&p, 3).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (2, 3)]);
    }

    #[test]
    fn rb_groups_are_cliques() {
        let p = RbParams {
            groups: 5,
            group_size: 4,
            tightness: 0.3,
            constraint_factor: 1.0,
        };
        let g = generate_rb(&p, 11).unwrap();
        assert_eq!(g.node_count(), 20);
        for grp in 0..5 {
            for a in 0..4 {
                for b in a + 1..4 {
                    assert!(g.has_edge(grp * 4 + a, grp * 4 + b));
                }
            }
        }
        assert!(g.edge_count() > 5 * 6);
    }

    #[test]
    fn rb_rejects_degenerate_params() {
        let mut p = RbParams::default();
        p.groups = 1;
        assert!(generate_rb(&p, 0).is_err());
    }

    #[test]
    fn invalid_graphs_rejected() {
        assert!(GraphInstance::from_edges(3, &[(0, 0)]).is_err());
        assert!(GraphInstance::from_edges(3, &[(0, 1), (1, 0)]).is_err());
        assert!(GraphInstance::from_edges(3, &[(0, 3)]).is_err());
        assert!(GraphInstance::new(2, vec![(0, 1)], Some(vec![0.0]), Family::Custom, 0).is_err());
        assert!(GraphInstance::new(2, vec![(0, 1)], Some(vec![]), Family::Custom, 0).is_err());
    }

    #[test]
    fn text_roundtrip_k3_and_singleton() {
        for g in [named::complete(3), named::empty(1)] {
            assert_eq!(GraphInstance::parse(&g.to_bytes()).unwrap(), g);
        }
    }

    #[test]
    fn text_roundtrip_er_is_canonical() {
        let g = generate_er(50, 0.15, 3).unwrap();
        let text = g.to_text();
        let back = GraphInstance::parse(text.as_bytes()).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_text(), text);
        assert!(back.edges().windows(2).all(|w| w[0] < w[1]));
        assert!(back.edges().iter().all(|&(u, v)| u < v));
    }

    #[test]
    fn weighted_roundtrip() {
        let g = GraphInstance::new(
            3,
            vec![(2, 0), (1, 2)],
            Some(vec![0.1, 2.5]),
            Family::Custom,
            9,
        )
        .unwrap();
        assert_eq!(g.edges(), &[(0, 2), (1, 2)]);
        assert_eq!(g.edge_weights().unwrap(), &[0.1, 2.5]);
        assert_eq!(GraphInstance::parse(&g.to_bytes()).unwrap(), g);
    }

    #[test]
    fn parse_errors_report_offsets() {
        let text = b"p graph 3 1\ne 0 5\n";
        match GraphInstance::parse(text) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 12),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            GraphInstance::parse(b"e 0 1\n"),
            Err(Error::Parse { offset: 0, .. })
        ));
        assert!(GraphInstance::parse(b"p graph 3 2\ne 0 1\n").is_err());
        assert!(GraphInstance::parse(b"").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn generation_is_deterministic(n in 1usize..40, p in 0.0f64..1.0, seed in any::<u64>()) {
            let a = generate_er(n, p, seed).unwrap();
            let b = generate_er(n, p, seed).unwrap();
            prop_assert_eq!(a.to_bytes(), b.to_bytes());
            prop_assert_eq!(GraphInstance::parse(&a.to_bytes()).unwrap(), a);
        }

        #[test]
        fn rb_deterministic(groups in 2usize..6, d in 2usize..5, seed in any::<u64>()) {
            let p = RbParams { groups, group_size: d, tightness: 0.4, constraint_factor: 1.0 };
            prop_assert_eq!(generate_rb(&p, seed).unwrap().to_bytes(), generate_rb(&p, seed).unwrap().to_bytes());
        }
    }
}
