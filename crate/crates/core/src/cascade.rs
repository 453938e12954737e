//! Weighting schemes, Ruelle probability cascades and branchingales.
//!
//! Tree nodes are addressed by level and mixed-radix index, first level most
//! significant. Every non-root node of a branchingale owns an independent
//! digit block of the uniform point `t`; a node's function depends only on
//! the blocks of its ancestors and itself, so sibling subtrees are
//! conditionally independent given the parent by construction.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp1, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::erm::{AtomKernel, AtomicGamma, BlockKernel, DirectingRandomMeasure};
use crate::error::{validation, Error, Result};
use crate::rng::SeedContext;

/// `Φ(x) = e^x / (e^x + e^-x)`, used as the probability of `+1`.
pub fn phi(x: f64) -> f64 {
    0.5 * (1.0 + x.tanh())
}

/// Inverse of [`phi`] on `(0, 1)`.
pub fn phi_inv(p: f64) -> f64 {
    0.5 * (p / (1.0 - p)).ln()
}

/// Minimum number of Poisson points kept per node.
pub const MIN_TRUNCATION: usize = 64;

/// Block id offset for branchingale nodes, far from weighting-scheme ids.
const NODE_ID_BASE: u64 = 1 << 48;

pub type QuantileFn = dyn Fn(usize, f64) -> f64 + Send + Sync;
pub type XSampler = dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync;

/// Law of the sequence `(X_k)_k`.
#[derive(Clone)]
pub enum XLaw {
    Constant(f64),
    /// Uniform on `{-c, +c}`, i.i.d.
    TwoPoint(f64),
    Normal { mean: f64, sd: f64 },
    Finite { values: Vec<f64>, probs: Vec<f64> },
    /// Independent across `k` with explicit quantile functions `(k, u) ↦ x`.
    Quantiles(Arc<QuantileFn>),
    /// Sampler only; usable when the components are i.i.d.
    Sampled { sampler: Arc<XSampler>, iid: bool },
}

impl std::fmt::Debug for XLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            XLaw::Constant(c) => write!(f, "Constant({c})"),
            XLaw::TwoPoint(c) => write!(f, "TwoPoint({c})"),
            XLaw::Normal { mean, sd } => write!(f, "Normal({mean}, {sd})"),
            XLaw::Finite { values, probs } => write!(f, "Finite({values:?}, {probs:?})"),
            XLaw::Quantiles(_) => write!(f, "Quantiles"),
            XLaw::Sampled { iid, .. } => write!(f, "Sampled(iid = {iid})"),
        }
    }
}

impl XLaw {
    /// Quantile table of `X_k` at the `2^bits` cell midpoints.
    fn quantile_table(&self, k: usize, bits: u32, ctx: &SeedContext) -> Result<Vec<f64>> {
        let cells = 1usize << bits;
        let mid = |c: usize| (c as f64 + 0.5) / cells as f64;
        Ok(match self {
            XLaw::Constant(c) => vec![*c; cells],
            XLaw::TwoPoint(c) => (0..cells).map(|i| if mid(i) < 0.5 { -c } else { *c }).collect(),
            XLaw::Normal { mean, sd } => {
                let n = statrs::distribution::Normal::new(*mean, *sd)
                    .map_err(|e| Error::Validation(e.to_string()))?;
                use statrs::distribution::ContinuousCDF;
                (0..cells).map(|i| n.inverse_cdf(mid(i))).collect()
            }
            XLaw::Finite { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return validation("finite law needs one probability per value");
                }
                (0..cells)
                    .map(|i| {
                        let u = mid(i);
                        let mut acc = 0.0;
                        for (v, p) in values.iter().zip(probs) {
                            acc += p;
                            if u < acc {
                                return *v;
                            }
                        }
                        *values.last().unwrap()
                    })
                    .collect()
            }
            XLaw::Quantiles(q) => (0..cells).map(|i| q(k, mid(i))).collect(),
            XLaw::Sampled { sampler, iid } => {
                if !iid {
                    return Err(Error::Capability(
                        "a non-i.i.d. sequence needs explicit conditional quantiles".into(),
                    ));
                }
                // empirical quantiles, shared by every k
                let mut rng = ctx.substream("x-law").rng();
                let mut xs: Vec<f64> = (0..cells).map(|_| sampler(&mut rng)).collect();
                xs.sort_by(f64::total_cmp);
                xs
            }
        })
    }

    /// One draw of `X_k`, for checking pushforwards.
    pub fn sample(&self, k: usize, rng: &mut dyn RngCore) -> f64 {
        match self {
            XLaw::Constant(c) => *c,
            XLaw::TwoPoint(c) => {
                if rng.random::<bool>() {
                    *c
                } else {
                    -c
                }
            }
            XLaw::Normal { mean, sd } => Normal::new(*mean, *sd).map_or(*mean, |n| n.sample(rng)),
            XLaw::Finite { values, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().unwrap()
            }
            XLaw::Quantiles(q) => q(k, rng.random()),
            XLaw::Sampled { sampler, .. } => sampler(rng),
        }
    }
}

/// Generator of random weights `(v_k)_k` with `Σ v_k = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightsGen {
    Fixed { weights: Vec<f64> },
    /// Normalized top points of a Poisson process with intensity
    /// `m x^(-1-m) dx`, sorted decreasingly.
    PoissonDirichlet { m: f64, truncation: usize },
}

impl WeightsGen {
    pub fn len(&self) -> usize {
        match self {
            WeightsGen::Fixed { weights } => weights.len(),
            WeightsGen::PoissonDirichlet { truncation, .. } => *truncation,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        match self {
            WeightsGen::Fixed { weights } => {
                if weights.is_empty()
                    || weights.iter().any(|&w| !(w >= 0.0))
                    || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12
                {
                    return validation("fixed weights must be non-negative and sum to 1");
                }
            }
            WeightsGen::PoissonDirichlet { m, truncation } => {
                check_m(&[*m])?;
                if *truncation < MIN_TRUNCATION {
                    return validation(format!("truncation must be at least {MIN_TRUNCATION}"));
                }
            }
        }
        Ok(())
    }

    pub fn draw(&self, ctx: &SeedContext) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(match self {
            WeightsGen::Fixed { weights } => weights.clone(),
            WeightsGen::PoissonDirichlet { m, truncation } => {
                let logs = poisson_log_points(*m, *truncation, &mut ctx.rng());
                normalize_logs(&logs)
            }
        })
    }
}

#[derive(Clone, Debug)]
pub struct WeightingScheme {
    pub x_law: XLaw,
    pub weights: WeightsGen,
}

/// Builds `γ = Σ_k v_k δ_{f_k}` with `f_k = Φ ∘ Q_k` read from digit block
/// `k` of `t`, so `(f_k(t))_k` has the law of `(Φ(X_k))_k` up to the
/// quantile grid of `2^grid_depth` cells.
pub fn weighting_to_gamma(
    ws: &WeightingScheme,
    grid_depth: u32,
    ctx: &SeedContext,
) -> Result<DirectingRandomMeasure> {
    if grid_depth > 24 {
        return validation("grid depth must be at most 24");
    }
    ws.weights.validate()?;
    let atoms: Vec<AtomKernel> = (0..ws.weights.len())
        .map(|k| {
            let q = ws.x_law.quantile_table(k, grid_depth, ctx)?;
            let p = q.iter().map(|&x| phi(x)).collect();
            Ok(AtomKernel::Blocks(BlockKernel::new(vec![(k as u64, grid_depth)], p)?))
        })
        .collect::<Result<_>>()?;
    match &ws.weights {
        WeightsGen::Fixed { weights } => {
            Ok(DirectingRandomMeasure::Atomic(AtomicGamma::new(weights.clone(), atoms)?))
        }
        gen => {
            let gen = gen.clone();
            Ok(DirectingRandomMeasure::generative(move |c| {
                let w = gen.draw(&c.substream("weights"))?;
                AtomicGamma::new(w, atoms.clone())
            }))
        }
    }
}

/// `ln x_j` for the `count` largest points `x_j = Γ_j^(-1/m)` of a Poisson
/// process with intensity `m x^(-1-m) dx`.
fn poisson_log_points<R: Rng + ?Sized>(m: f64, count: usize, rng: &mut R) -> Vec<f64> {
    let mut gamma = 0.0;
    (0..count)
        .map(|_| {
            let e: f64 = Exp1.sample(rng);
            gamma += e;
            -gamma.ln() / m
        })
        .collect()
}

fn normalize_logs(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn check_m(m: &[f64]) -> Result<()> {
    if m.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
        return validation("cascade parameters must lie in (0, 1)");
    }
    if m.windows(2).any(|w| w[0] >= w[1]) {
        return validation("cascade parameters must be strictly increasing");
    }
    Ok(())
}

/// Finite rooted tree with all leaves at depth `branching.len()`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub branching: Vec<usize>,
}

impl TreeSpec {
    pub fn new(branching: Vec<usize>) -> Result<Self> {
        if branching.is_empty() {
            return validation("tree depth must be at least 1");
        }
        if branching.iter().any(|&b| b < 2) {
            return validation("branching factors must be at least 2");
        }
        Ok(Self { branching })
    }

    pub fn uniform(depth: usize, b: usize) -> Result<Self> {
        Self::new(vec![b; depth])
    }

    /// The tree consisting of the root alone.
    pub fn root_only() -> Self {
        Self { branching: vec![] }
    }

    pub fn depth(&self) -> usize {
        self.branching.len()
    }

    /// Number of nodes at `level`.
    pub fn width(&self, level: usize) -> usize {
        self.branching[..level].iter().product()
    }

    pub fn leaves(&self) -> usize {
        self.width(self.depth())
    }

    /// Index of the ancestor at `level` of node `index` at `from`.
    pub fn ancestor(&self, from: usize, index: usize, level: usize) -> usize {
        let below: usize = self.branching[level..from].iter().product();
        index / below
    }

    /// Path of child positions from the root to the given leaf.
    pub fn leaf_path(&self, leaf: usize) -> Vec<usize> {
        let r = self.depth();
        (1..=r)
            .map(|s| self.ancestor(r, leaf, s) % self.branching[s - 1])
            .collect()
    }
}

/// Ruelle cascade weights on the leaves of a tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeWeights {
    pub tree: TreeSpec,
    pub m: Vec<f64>,
    pub leaf_weights: Vec<f64>,
}

/// Samples a Ruelle probability cascade.
///
/// Each node at level `s - 1` keeps the largest `b_s` points of a Poisson
/// process with intensity `m_s x^(-1-m_s) dx`, one per child, so the
/// truncation is the branching factor. A leaf's weight is the product of the
/// points along its path, normalized over all leaves.
pub fn sample_cascade(tree: &TreeSpec, m: &[f64], ctx: &SeedContext) -> Result<CascadeWeights> {
    if tree.depth() == 0 {
        return validation("cascade needs a tree of depth at least 1");
    }
    if m.len() != tree.depth() {
        return validation(format!("expected {} cascade parameters, got {}", tree.depth(), m.len()));
    }
    check_m(m)?;
    if let Some(b) = tree.branching.iter().find(|&&b| b < MIN_TRUNCATION) {
        return validation(format!("truncation {b} below the minimum of {MIN_TRUNCATION} points per node"));
    }
    let r = tree.depth();
    // log points per level, indexed by child node
    let levels: Vec<Vec<f64>> = (1..=r)
        .map(|s| {
            let parents = tree.width(s - 1);
            let b = tree.branching[s - 1];
            let lctx = ctx.substream("level").index(s as u64);
            (0..parents)
                .into_par_iter()
                .flat_map_iter(|p| poisson_log_points(m[s - 1], b, &mut lctx.index(p as u64).rng()))
                .collect()
        })
        .collect();
    let leaves = tree.leaves();
    let logs: Vec<f64> = (0..leaves)
        .map(|leaf| (1..=r).map(|s| levels[s - 1][tree.ancestor(r, leaf, s)]).sum())
        .collect();
    Ok(CascadeWeights { tree: tree.clone(), m: m.to_vec(), leaf_weights: normalize_logs(&logs) })
}

/// Quantum of branchingale values; sums of such values are exact.
pub const VALUE_QUANTUM: f64 = 1.0 / 65536.0;
pub const MAX_BLOCK_BITS: u32 = 4;
pub const MAX_BRANCHINGALE_DEPTH: usize = 4;

/// Refinement law at one level: a child's value is its parent's plus
/// `pattern[π(c)]`, where `c` is the child's block value and `π` a uniformly
/// random permutation drawn per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelIncrement {
    pub bits: u32,
    pub pattern: Vec<f64>,
}

impl LevelIncrement {
    pub fn zero(bits: u32) -> Self {
        Self { bits, pattern: vec![0.0; 1 << bits] }
    }

    /// `[-δ, +δ]` on one bit.
    pub fn balanced(delta: f64) -> Self {
        Self { bits: 1, pattern: vec![-delta, delta] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementSpec {
    pub root: f64,
    pub levels: Vec<LevelIncrement>,
}

/// One node: its own block and its value table indexed by the concatenated
/// block values of its path, first level most significant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchNode {
    pub level: usize,
    pub index: usize,
    pub block_id: u64,
    pub table: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branchingale {
    pub tree: TreeSpec,
    /// Bits of the digit block owned by each node at levels `1..=r`.
    pub partition_bits: Vec<u32>,
    /// Nodes by level, then index.
    pub nodes: Vec<Vec<BranchNode>>,
}

fn quantize(x: f64) -> Result<f64> {
    let q = (x / VALUE_QUANTUM).round() * VALUE_QUANTUM;
    if (q - x).abs() > 1e-12 {
        return validation(format!("value {x} is not a multiple of 2^-16"));
    }
    Ok(q)
}

pub fn node_block_id(level: usize, index: usize) -> u64 {
    NODE_ID_BASE + ((level as u64) << 32) + index as u64
}

/// Builds a homogeneous branchingale on `[0, 1]`.
///
/// Values are multiples of `2^-16`, so cell averages are computed exactly.
pub fn build_branchingale(tree: &TreeSpec, spec: &IncrementSpec, ctx: &SeedContext) -> Result<Branchingale> {
    let r = tree.depth();
    if spec.levels.len() != r {
        return validation(format!("expected {r} increment levels, got {}", spec.levels.len()));
    }
    if r > MAX_BRANCHINGALE_DEPTH {
        return validation(format!("branchingale depth is limited to {MAX_BRANCHINGALE_DEPTH}"));
    }
    let root = quantize(spec.root)?;
    if !(0.0..=1.0).contains(&root) {
        return validation("root value must lie in [0, 1]");
    }
    let mut patterns = Vec::with_capacity(r);
    for (s, inc) in spec.levels.iter().enumerate() {
        if inc.bits == 0 || inc.bits > MAX_BLOCK_BITS || inc.pattern.len() != 1 << inc.bits {
            return validation(format!(
                "level {}: pattern needs 2^bits entries with 1 <= bits <= {MAX_BLOCK_BITS}",
                s + 1
            ));
        }
        let p: Vec<f64> = inc.pattern.iter().map(|&x| quantize(x)).collect::<Result<_>>()?;
        if p.iter().sum::<f64>() != 0.0 {
            return validation(format!("level {}: increments do not preserve the mean", s + 1));
        }
        patterns.push(p);
    }
    let mut nodes = vec![vec![BranchNode { level: 0, index: 0, block_id: 0, table: vec![root] }]];
    for s in 1..=r {
        let bits = spec.levels[s - 1].bits;
        let b = tree.branching[s - 1];
        let prev = &nodes[s - 1];
        let level: Vec<BranchNode> = (0..tree.width(s))
            .into_par_iter()
            .map(|i| {
                let parent = &prev[i / b];
                let mut perm: Vec<usize> = (0..1 << bits).collect();
                perm.shuffle(&mut ctx.substream("node").index(s as u64).index(i as u64).rng());
                let mut table = Vec::with_capacity(parent.table.len() << bits);
                for &pv in &parent.table {
                    for &pc in &perm {
                        table.push(pv + patterns[s - 1][pc]);
                    }
                }
                BranchNode { level: s, index: i, block_id: node_block_id(s, i), table }
            })
            .collect();
        if let Some(v) = level.iter().flat_map(|n| &n.table).find(|v| !(0.0..=1.0).contains(*v)) {
            return validation(format!("increments leave the range [0, 1] (value {v})"));
        }
        nodes.push(level);
    }
    Ok(Branchingale {
        tree: tree.clone(),
        partition_bits: spec.levels.iter().map(|l| l.bits).collect(),
        nodes,
    })
}

impl Branchingale {
    /// Root-only branchingale with constant value.
    pub fn constant_root(value: f64) -> Self {
        Self {
            tree: TreeSpec::root_only(),
            partition_bits: vec![],
            nodes: vec![vec![BranchNode { level: 0, index: 0, block_id: 0, table: vec![value] }]],
        }
    }

    pub fn leaves(&self) -> &[BranchNode] {
        &self.nodes[self.tree.depth()]
    }

    /// Blocks read by a node, from level 1 down to the node itself.
    pub fn blocks_of(&self, level: usize, index: usize) -> Vec<(u64, u32)> {
        (1..=level)
            .map(|s| {
                let a = self.tree.ancestor(level, index, s);
                (self.nodes[s][a].block_id, self.partition_bits[s - 1])
            })
            .collect()
    }

    /// The node function as a `{-1, +1}` block kernel.
    pub fn kernel(&self, level: usize, index: usize) -> Result<BlockKernel> {
        BlockKernel::new(self.blocks_of(level, index), self.nodes[level][index].table.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchingaleReport {
    pub max_martingale_defect: f64,
    pub homogeneous: bool,
    pub structurally_independent: bool,
}

/// Checks the martingale property edge by edge, homogeneity by comparing the
/// exact joint laws of path values across all root-leaf paths, and that node
/// blocks are distinct with tables refining their parents'.
pub fn check_branchingale(b: &Branchingale) -> BranchingaleReport {
    let r = b.tree.depth();
    let mut defect: f64 = 0.0;
    let mut structural = b.nodes.len() == r + 1;
    let mut ids = std::collections::BTreeSet::new();
    for s in 1..=r.min(b.nodes.len().saturating_sub(1)) {
        let cells = 1usize << b.partition_bits[s - 1];
        let br = b.tree.branching[s - 1];
        structural &= b.nodes[s].len() == b.tree.width(s);
        for node in &b.nodes[s] {
            structural &= ids.insert(node.block_id);
            let parent = &b.nodes[s - 1][node.index / br];
            if node.table.len() != parent.table.len() * cells {
                structural = false;
                continue;
            }
            for (pc, pv) in parent.table.iter().enumerate() {
                let chunk = &node.table[pc * cells..(pc + 1) * cells];
                let avg = chunk.iter().sum::<f64>() / cells as f64;
                defect = defect.max((avg - pv).abs());
            }
        }
    }
    let homogeneous = structural && {
        let laws: Vec<Vec<Vec<u64>>> = (0..b.tree.leaves()).map(|leaf| path_law(b, leaf)).collect();
        laws.windows(2).all(|w| w[0] == w[1])
    };
    BranchingaleReport { max_martingale_defect: defect, homogeneous, structurally_independent: structural }
}

/// Sorted multiset of `(f_root, f_1, ..., f_leaf)` over the leaf's cells.
fn path_law(b: &Branchingale, leaf: usize) -> Vec<Vec<u64>> {
    let r = b.tree.depth();
    let leaf_cells = b.nodes[r][leaf].table.len();
    let mut tuples: Vec<Vec<u64>> = (0..leaf_cells)
        .map(|c| {
            (0..=r)
                .map(|s| {
                    let node = &b.nodes[s][b.tree.ancestor(r, leaf, s)];
                    let shift: u32 = b.partition_bits[s..].iter().sum();
                    node.table[c >> shift].to_bits()
                })
                .collect()
        })
        .collect();
    tuples.sort();
    tuples
}

/// Values `(f_root, ..., f_leaf)` along one root-leaf path at the point `t`.
pub fn path_values(b: &Branchingale, leaf: usize, t: &crate::rng::UnitPoint) -> Vec<f64> {
    let r = b.tree.depth();
    (0..=r)
        .map(|s| {
            let i = b.tree.ancestor(r, leaf, s);
            let idx = b
                .blocks_of(s, i)
                .iter()
                .fold(0usize, |acc, &(id, bits)| (acc << bits) | t.block(id, bits));
            b.nodes[s][i].table[idx]
        })
        .collect()
}

/// Leaf functions of a homogeneous branchingale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalSet {
    pub depth: usize,
    pub leaves: Vec<BlockKernel>,
}

impl HierarchicalSet {
    pub fn from_branchingale(b: &Branchingale) -> Result<Self> {
        if !check_branchingale(b).homogeneous {
            return validation("branchingale is not homogeneous");
        }
        let r = b.tree.depth();
        let leaves = (0..b.tree.leaves()).map(|i| b.kernel(r, i)).collect::<Result<_>>()?;
        Ok(Self { depth: r, leaves })
    }
}

/// Atomic `γ` with the branchingale's leaf functions as kernel means (after
/// the `Φ` convention, probabilities of `+1`) and cascade weights.
///
/// Leaves with a constant table become block-free kernels, and identical
/// kernels are merged.
pub fn rsb_gamma(cascade: &CascadeWeights, b: &Branchingale) -> Result<DirectingRandomMeasure> {
    if cascade.tree != b.tree {
        return validation("cascade and branchingale trees differ");
    }
    let r = b.tree.depth();
    let mut merged: BTreeMap<Vec<u64>, (f64, BlockKernel)> = BTreeMap::new();
    for (i, &w) in cascade.leaf_weights.iter().enumerate() {
        let table = &b.nodes[r][i].table;
        let kernel = if table.iter().all(|&v| v == table[0]) {
            BlockKernel::new(vec![], vec![table[0]])?
        } else {
            b.kernel(r, i)?
        };
        let mut key: Vec<u64> = kernel.blocks.iter().flat_map(|&(id, bits)| [id, bits as u64]).collect();
        key.push(u64::MAX);
        key.extend(kernel.p_plus.iter().map(|p| p.to_bits()));
        merged.entry(key).or_insert((0.0, kernel)).0 += w;
    }
    let mut entries: Vec<(f64, BlockKernel)> = merged.into_values().collect();
    if entries.len() == 1 {
        entries[0].0 = 1.0;
    }
    let (weights, atoms): (Vec<f64>, Vec<AtomKernel>) =
        entries.into_iter().map(|(w, k)| (w, AtomKernel::Blocks(k))).unzip();
    Ok(DirectingRandomMeasure::Atomic(AtomicGamma::new(weights, atoms)?))
}
