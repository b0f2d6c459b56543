//! Encoder-decoder policy network: feature projection, graph-transformer
//! layers with attention restricted to graph neighborhoods, and a shared MLP
//! that maps every node embedding to one logit.
//!
//! All trainable tensors live in [`PolicyParameters`] in a fixed order, so a
//! [`Tape`] can borrow them and the optimizer can update them in place.

use std::io::{BufRead, Write};
use std::path::Path;

use pbnco_autodiff::{Mask, Matrix, Tape, Var};
use rand::Rng as _;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graphs::GraphInstance;
use crate::problems::{Features, Problem};
use crate::rng::{self, Rng};

const CHECKPOINT_MAGIC: &str = "PBNCO-CHECKPOINT";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Cni,
    Cnc,
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cni" => Ok(PolicyKind::Cni),
            "cnc" => Ok(PolicyKind::Cnc),
            other => Err(Error::Param(format!("unknown policy kind {other:?} (expected cni or cnc)"))),
        }
    }
}

/// Architecture sizes and what the policy was built for.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Hyperparameters {
    pub kind: PolicyKind,
    pub problem: Problem,
    pub layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub node_channels: usize,
    pub edge_channels: usize,
    /// Attend over all node pairs instead of graph neighborhoods.
    pub dense_attention: bool,
    /// Learned embedding added to node 0 (Max-Cut symmetry anchor).
    pub anchor: bool,
    /// Size of the conditioning set a cNC policy was built for.
    pub k_max: usize,
}

impl Hyperparameters {
    /// `L=3, d=32, h=4, d_ff=128`.
    pub fn desk(kind: PolicyKind, problem: Problem, k_max: usize) -> Self {
        let node_channels = match kind {
            PolicyKind::Cni => crate::problems::CNI_CHANNELS,
            PolicyKind::Cnc => crate::problems::cnc_channels(problem, k_max),
        };
        Self {
            kind,
            problem,
            layers: 3,
            d_model: 32,
            heads: 4,
            d_ff: 128,
            node_channels,
            edge_channels: crate::problems::EDGE_CHANNELS,
            dense_attention: false,
            anchor: kind == PolicyKind::Cnc && problem == Problem::MaxCut,
            k_max,
        }
    }

    /// `L=3, d=64, h=8, d_ff=256`.
    pub fn full(kind: PolicyKind, problem: Problem, k_max: usize) -> Self {
        Self {
            d_model: 64,
            heads: 8,
            d_ff: 256,
            ..Self::desk(kind, problem, k_max)
        }
    }

    pub fn with_size(mut self, layers: usize, d_model: usize, heads: usize, d_ff: usize) -> Self {
        self.layers = layers;
        self.d_model = d_model;
        self.heads = heads;
        self.d_ff = d_ff;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || self.d_ff == 0 {
            return Err(Error::Param("model sizes must be positive".into()));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::Param(format!(
                "heads ({}) must divide d_model ({})",
                self.heads, self.d_model
            )));
        }
        if self.node_channels == 0 {
            return Err(Error::Param("policy needs at least one node channel".into()));
        }
        Ok(())
    }

    fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

const GLOBAL_PREFIX: usize = 2;
const PER_LAYER: usize = 14;
const DECODER: usize = 4;

// per-layer tensor offsets
const EDGE_W: usize = 0;
const WQ: usize = 1;
const WK: usize = 2;
const WV: usize = 3;
const WO: usize = 4;
const BO: usize = 5;
const LN1_G: usize = 6;
const LN1_B: usize = 7;
const FF1_W: usize = 8;
const FF1_B: usize = 9;
const FF2_W: usize = 10;
const FF2_B: usize = 11;
const LN2_G: usize = 12;
const LN2_B: usize = 13;

enum Init {
    Uniform { fan_in: usize },
    Zeros,
    Ones,
}

fn layout(h: &Hyperparameters) -> Vec<(String, usize, usize, Init)> {
    let d = h.d_model;
    let mut specs = vec![
        ("input.w".to_string(), h.node_channels, d, Init::Uniform { fan_in: h.node_channels }),
        ("input.b".to_string(), 1, d, Init::Zeros),
    ];
    for l in 0..h.layers {
        let p = |s: &str| format!("layer{l}.{s}");
        specs.extend([
            (p("edge_bias"), h.edge_channels, h.heads, Init::Uniform { fan_in: h.edge_channels.max(1) }),
            (p("wq"), d, d, Init::Uniform { fan_in: d }),
            (p("wk"), d, d, Init::Uniform { fan_in: d }),
            (p("wv"), d, d, Init::Uniform { fan_in: d }),
            (p("wo"), d, d, Init::Uniform { fan_in: d }),
            (p("bo"), 1, d, Init::Zeros),
            (p("ln1.gamma"), 1, d, Init::Ones),
            (p("ln1.beta"), 1, d, Init::Zeros),
            (p("ff1.w"), d, h.d_ff, Init::Uniform { fan_in: d }),
            (p("ff1.b"), 1, h.d_ff, Init::Zeros),
            (p("ff2.w"), h.d_ff, d, Init::Uniform { fan_in: h.d_ff }),
            (p("ff2.b"), 1, d, Init::Zeros),
            (p("ln2.gamma"), 1, d, Init::Ones),
            (p("ln2.beta"), 1, d, Init::Zeros),
        ]);
    }
    specs.extend([
        ("decoder.w1".to_string(), d, d, Init::Uniform { fan_in: d }),
        ("decoder.b1".to_string(), 1, d, Init::Zeros),
        ("decoder.w2".to_string(), d, 1, Init::Uniform { fan_in: d }),
        ("decoder.b2".to_string(), 1, 1, Init::Zeros),
    ]);
    if h.anchor {
        specs.push(("anchor".to_string(), 1, d, Init::Uniform { fan_in: 1 }));
    }
    specs
}

/// All trainable weights of one policy plus its hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParameters {
    hyper: Hyperparameters,
    names: Vec<String>,
    tensors: Vec<Matrix>,
}

impl PolicyParameters {
    /// Uniform(±1/sqrt(fan_in)) weights, zero biases, unit layer-norm gains.
    pub fn init(hyper: Hyperparameters, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let mut r = rng::seeded(seed);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, rows, cols, init) in layout(&hyper) {
            let m = match init {
                Init::Zeros => Matrix::zeros(rows, cols),
                Init::Ones => Matrix::filled(rows, cols, 1.0),
                Init::Uniform { fan_in } => {
                    let a = 1.0 / (fan_in as f64).sqrt();
                    Matrix::from_vec(
                        rows,
                        cols,
                        (0..rows * cols).map(|_| r.random_range(-a..=a)).collect(),
                    )
                }
            };
            names.push(name);
            tensors.push(m);
        }
        Ok(Self {
            hyper,
            names,
            tensors,
        })
    }

    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn tensors(&self) -> &[Matrix] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix] {
        &mut self.tensors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Matrix::len).sum()
    }

    fn layer_index(&self, layer: usize, offset: usize) -> usize {
        GLOBAL_PREFIX + layer * PER_LAYER + offset
    }

    fn decoder_index(&self, offset: usize) -> usize {
        GLOBAL_PREFIX + self.hyper.layers * PER_LAYER + offset
    }

    fn anchor_index(&self) -> Option<usize> {
        self.hyper
            .anchor
            .then(|| GLOBAL_PREFIX + self.hyper.layers * PER_LAYER + DECODER)
    }

    /// Fails unless the policy matches the expected role and problem.
    pub fn expect(&self, kind: PolicyKind, problem: Problem) -> Result<()> {
        if self.hyper.kind != kind || self.hyper.problem != problem {
            return Err(Error::Checkpoint(format!(
                "expected a {kind:?} policy for {problem}, found {:?} for {}",
                self.hyper.kind, self.hyper.problem
            )));
        }
        Ok(())
    }

    /// Versioned header, hyperparameter JSON line, then each tensor as a
    /// `name rows cols` line followed by raw little-endian `f64` data.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}")?;
        writeln!(w, "{}", serde_json::to_string(&self.hyper)?)?;
        writeln!(w, "{}", self.tensors.len())?;
        for (name, m) in self.names.iter().zip(&self.tensors) {
            writeln!(w, "{name} {} {}", m.rows(), m.cols())?;
            for x in m.data() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_checkpoint(&mut out).expect("writing to memory cannot fail");
        out
    }

    pub fn read_checkpoint<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = String::new();
        let mut next_line = |r: &mut R, what: &str| -> Result<String> {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(Error::Checkpoint(format!("truncated before {what}")));
            }
            Ok(line.trim_end_matches('\n').to_string())
        };
        let header = next_line(&mut r, "header")?;
        let version = header
            .strip_prefix(CHECKPOINT_MAGIC)
            .map(str::trim)
            .ok_or_else(|| Error::Checkpoint("not a policy checkpoint".into()))?;
        if version != CHECKPOINT_VERSION.to_string() {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hyper: Hyperparameters = serde_json::from_str(&next_line(&mut r, "hyperparameters")?)?;
        hyper.validate()?;
        let count: usize = next_line(&mut r, "tensor count")?
            .parse()
            .map_err(|_| Error::Checkpoint("bad tensor count".into()))?;
        let expected = layout(&hyper);
        if count != expected.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {count}",
                expected.len()
            )));
        }
        let mut names = Vec::with_capacity(count);
        let mut tensors = Vec::with_capacity(count);
        for (name, rows, cols, _) in expected {
            let desc = next_line(&mut r, &name)?;
            if desc != format!("{name} {rows} {cols}") {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} ({rows}x{cols}) does not match record {desc:?}"
                )));
            }
            let mut raw = vec![0u8; rows * cols * 8];
            r.read_exact(&mut raw)
                .map_err(|_| Error::Checkpoint(format!("truncated data for {name}")))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            names.push(name);
            tensors.push(Matrix::from_vec(rows, cols, data));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
        }
        Ok(Self {
            hyper,
            names,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_checkpoint(bytes.as_slice())
    }

    /// SHA-256 of the serialized checkpoint, hex encoded.
    pub fn hash(&self) -> String {
        hex_digest(&self.to_checkpoint_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Per-graph constants shared by every layer of one forward pass.
struct GraphContext {
    mask: Mask,
    edge_channels: Vec<Var>,
}

fn graph_context(
    tape: &mut Tape<'_>,
    hyper: &Hyperparameters,
    g: &GraphInstance,
    edge_features: &Matrix,
) -> Result<GraphContext> {
    let n = g.node_count();
    if edge_features.shape() != (g.edge_count(), hyper.edge_channels) {
        return Err(Error::Param(format!(
            "edge features have shape {:?}, expected ({}, {})",
            edge_features.shape(),
            g.edge_count(),
            hyper.edge_channels
        )));
    }
    let keep = if hyper.dense_attention {
        vec![true; n * n]
    } else {
        let mut keep = vec![false; n * n];
        for u in 0..n {
            keep[u * n + u] = true;
            for &v in g.neighbors(u) {
                keep[u * n + v] = true;
            }
        }
        keep
    };
    let mut edge_channels = Vec::with_capacity(hyper.edge_channels);
    for c in 0..hyper.edge_channels {
        let mut e = Matrix::zeros(n, n);
        for (i, &(u, v)) in g.edges().iter().enumerate() {
            let x = edge_features.get(i, c);
            e.set(u, v, x);
            e.set(v, u, x);
        }
        edge_channels.push(tape.input(e));
    }
    Ok(GraphContext {
        mask: Mask::new(n, n, keep),
        edge_channels,
    })
}

/// Node embeddings after all layers, `|V| x d`.
pub fn encode(
    tape: &mut Tape<'_>,
    params: &PolicyParameters,
    g: &GraphInstance,
    features: &Features,
) -> Result<Var> {
    let hp = &params.hyper;
    let n = g.node_count();
    if features.node.shape() != (n, hp.node_channels) {
        return Err(Error::Param(format!(
            "node features have shape {:?}, expected ({n}, {})",
            features.node.shape(),
            hp.node_channels
        )));
    }
    let ctx = graph_context(tape, hp, g, &features.edge)?;

    let x = tape.input(features.node.clone());
    let w = tape.param(0)?;
    let b = tape.param(1)?;
    let mut h = tape.matmul(x, w)?;
    h = tape.add_row(h, b)?;
    if let Some(ai) = params.anchor_index() {
        let mut sel = Matrix::zeros(n, 1);
        sel.set(0, 0, 1.0);
        let sel = tape.input(sel);
        let anchor = tape.param(ai)?;
        let a = tape.matmul(sel, anchor)?;
        h = tape.add(h, a)?;
    }

    let dh = hp.head_dim();
    let inv_sqrt = 1.0 / (dh as f64).sqrt();
    for l in 0..hp.layers {
        let p = |t: &mut Tape<'_>, off: usize| t.param(params.layer_index(l, off));
        let q = {
            let w = p(tape, WQ)?;
            tape.matmul(h, w)?
        };
        let k = {
            let w = p(tape, WK)?;
            tape.matmul(h, w)?
        };
        let v = {
            let w = p(tape, WV)?;
            tape.matmul(h, w)?
        };
        let edge_w = p(tape, EDGE_W)?;
        let mut heads = Vec::with_capacity(hp.heads);
        for head in 0..hp.heads {
            let qh = tape.slice_cols(q, head * dh, dh)?;
            let kh = tape.slice_cols(k, head * dh, dh)?;
            let vh = tape.slice_cols(v, head * dh, dh)?;
            let kt = tape.transpose(kh);
            let mut scores = tape.matmul(qh, kt)?;
            scores = tape.scale(scores, inv_sqrt);
            let col = tape.slice_cols(edge_w, head, 1)?;
            for (c, &e) in ctx.edge_channels.iter().enumerate() {
                let coef = tape.select_rows(col, &[c])?;
                let bias = tape.scale_by(e, coef)?;
                scores = tape.add(scores, bias)?;
            }
            let attn = tape.row_softmax(scores, Some(ctx.mask.clone()))?;
            heads.push(tape.matmul(attn, vh)?);
        }
        let cat = if heads.len() == 1 {
            heads[0]
        } else {
            tape.concat_cols(&heads)?
        };
        let wo = p(tape, WO)?;
        let bo = p(tape, BO)?;
        let mut a = tape.matmul(cat, wo)?;
        a = tape.add_row(a, bo)?;
        h = tape.add(h, a)?;
        let (gamma, beta) = (p(tape, LN1_G)?, p(tape, LN1_B)?);
        h = affine_layer_norm(tape, h, gamma, beta)?;

        let w1 = p(tape, FF1_W)?;
        let b1 = p(tape, FF1_B)?;
        let w2 = p(tape, FF2_W)?;
        let b2 = p(tape, FF2_B)?;
        let mut f = tape.matmul(h, w1)?;
        f = tape.add_row(f, b1)?;
        f = tape.gelu(f);
        f = tape.matmul(f, w2)?;
        f = tape.add_row(f, b2)?;
        h = tape.add(h, f)?;
        let (gamma, beta) = (p(tape, LN2_G)?, p(tape, LN2_B)?);
        h = affine_layer_norm(tape, h, gamma, beta)?;
    }
    Ok(h)
}

fn affine_layer_norm(tape: &mut Tape<'_>, x: Var, gamma: Var, beta: Var) -> Result<Var> {
    let y = tape.layer_norm(x);
    let y = tape.mul_row(y, gamma)?;
    Ok(tape.add_row(y, beta)?)
}

/// Shared two-layer MLP, `|V| x d -> |V| x 1`.
pub fn decode_node_logits(
    tape: &mut Tape<'_>,
    params: &PolicyParameters,
    embeddings: Var,
) -> Result<Var> {
    let w1 = tape.param(params.decoder_index(0))?;
    let b1 = tape.param(params.decoder_index(1))?;
    let w2 = tape.param(params.decoder_index(2))?;
    let b2 = tape.param(params.decoder_index(3))?;
    let mut x = tape.matmul(embeddings, w1)?;
    x = tape.add_row(x, b1)?;
    x = tape.gelu(x);
    x = tape.matmul(x, w2)?;
    Ok(tape.add_row(x, b2)?)
}

/// `encode` followed by `decode_node_logits`.
pub fn node_logits(
    tape: &mut Tape<'_>,
    params: &PolicyParameters,
    g: &GraphInstance,
    features: &Features,
) -> Result<Var> {
    let h = encode(tape, params, g, features)?;
    decode_node_logits(tape, params, h)
}

/// Forward pass without keeping the tape.
pub fn logits_values(
    params: &PolicyParameters,
    g: &GraphInstance,
    features: &Features,
) -> Result<Vec<f64>> {
    let mut tape = Tape::with_params(params.tensors());
    let out = node_logits(&mut tape, params, g, features)?;
    Ok(tape.value(out).data().to_vec())
}

/// Softmax over the legal entries; illegal entries get exactly 0.
pub fn action_distribution(logits: &[f64], legal: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != legal.len() {
        return Err(Error::Length {
            expected: logits.len(),
            got: legal.len(),
        });
    }
    let max = logits
        .iter()
        .zip(legal)
        .filter(|(_, &ok)| ok)
        .map(|(&x, _)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::NoLegalAction);
    }
    let mut p: Vec<f64> = logits
        .iter()
        .zip(legal)
        .map(|(&x, &ok)| if ok { (x - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    Ok(p)
}

/// Inverse-CDF sampling. Zero-probability entries are never returned.
pub fn sample_action(dist: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (i, &p) in dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = Some(i);
        if u < acc {
            return i;
        }
    }
    last.expect("distribution has positive mass")
}

/// Argmax, lowest index on ties.
pub fn greedy_action(dist: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = i;
        }
    }
    best
}
