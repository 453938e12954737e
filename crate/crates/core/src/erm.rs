//! Exchangeable arrays and exchangeable random measures.
//!
//! A [`TheoremADirecting`] tuple consumes a pair `(U_e, V_e)` per subset.
//! Freezing the `U` layer ([`quench`]) leaves a random measure whose draws
//! differ only through fresh `V` uniforms; independent draws from it are the
//! replicas. [`sample_theorem_b`] implements the sequence case directly from a
//! directing random measure `γ` on kernels, and [`sample_rce`] samples
//! row-column exchangeable matrices `f(Z, U_i, V_n, W_in)`.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::rng::{uniform_at, SeedContext, SubsetKey, UnitPoint};
use crate::skewprod::{ArraySlice, Component, LayerInput, SkewProductTuple, Space};

const PROB_TOL: f64 = 1e-12;

/// Skew-product tuple reading `(u, v)` pairs: coordinate 0 is `U_e`, 1 is `V_e`.
#[derive(Clone, Debug)]
pub struct TheoremADirecting {
    tuple: SkewProductTuple,
}

impl TheoremADirecting {
    pub fn new(tuple: SkewProductTuple) -> Result<Self> {
        if tuple.input_arity() != 2 {
            return validation(format!(
                "directing tuple must read (u, v) pairs, got arity {}",
                tuple.input_arity()
            ));
        }
        Ok(Self { tuple })
    }

    pub fn tuple(&self) -> &SkewProductTuple {
        &self.tuple
    }

    pub fn k(&self) -> usize {
        self.tuple.k()
    }

    fn slice_with(&self, n: u32, u: &SeedContext, v: &SeedContext) -> ArraySlice {
        self.tuple
            .evaluate_array(n, |e| vec![uniform_at(u, e), uniform_at(v, e)])
    }
}

/// Draws all `U_e, V_e` for `|e| <= k` and applies `f̂`.
pub fn sample_slice(directing: &TheoremADirecting, n: u32, ctx: &SeedContext) -> Result<ArraySlice> {
    if n == 0 {
        return validation("n must be at least 1");
    }
    Ok(directing.slice_with(n, &ctx.substream("U"), &ctx.substream("V")))
}

/// A directing tuple with its `U` layer frozen.
#[derive(Clone, Debug)]
pub struct QuenchedErm {
    directing: TheoremADirecting,
    u_context: SeedContext,
    n: u32,
}

pub fn quench(directing: &TheoremADirecting, n: u32, u_seed: u64) -> QuenchedErm {
    QuenchedErm {
        directing: directing.clone(),
        u_context: SeedContext::new(u_seed, "U"),
        n,
    }
}

impl QuenchedErm {
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn u_context(&self) -> &SeedContext {
        &self.u_context
    }

    /// One draw from the quenched measure, with `V` uniforms from `v_ctx`.
    pub fn draw(&self, v_ctx: &SeedContext) -> ArraySlice {
        self.directing.slice_with(self.n, &self.u_context, v_ctx)
    }
}

/// `r` conditionally i.i.d. draws sharing the frozen `U` layer.
pub fn draw_replicas(q: &QuenchedErm, r: usize, ctx: &SeedContext) -> Result<Vec<ArraySlice>> {
    if r == 0 {
        return validation("replica count must be at least 1");
    }
    Ok((0..r)
        .into_par_iter()
        .map(|l| q.draw(&ctx.index(l as u64)))
        .collect())
}

/// Fraction of positions `n` whose replica column matches the cylinder.
///
/// `replicas[l][n]` is replica `l` at position `n + 1`; the cylinder lists
/// `(replica index, required value)` pairs.
pub fn empirical_measure(replicas: &[Vec<f64>], cylinder: &[(usize, f64)]) -> Result<f64> {
    let Some(first) = replicas.first() else {
        return validation("empirical measure needs at least one replica");
    };
    let n = first.len();
    if n == 0 || replicas.iter().any(|r| r.len() != n) {
        return validation("replicas must be non-empty and of equal length");
    }
    if let Some((l, _)) = cylinder.iter().find(|(l, _)| *l >= replicas.len()) {
        return Err(Error::Range(format!("replica index {l} out of range")));
    }
    let hits = (0..n)
        .filter(|&pos| cylinder.iter().all(|&(l, a)| replicas[l][pos] == a))
        .count();
    Ok(hits as f64 / n as f64)
}

/// Per-cell probability vectors over a finite alphabet: `λ(t, ·)` on the
/// dyadic grid of depth `grid_depth`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub alphabet: Vec<f64>,
    pub grid_depth: u32,
    pub table: Vec<Vec<f64>>,
}

impl Kernel {
    pub fn new(alphabet: Vec<f64>, grid_depth: u32, table: Vec<Vec<f64>>) -> Result<Self> {
        if alphabet.is_empty() {
            return validation("kernel alphabet is empty");
        }
        if grid_depth > 30 || table.len() != 1usize << grid_depth {
            return validation(format!(
                "kernel at depth {grid_depth} needs {} cells, got {}",
                1u64 << grid_depth.min(62),
                table.len()
            ));
        }
        for (c, p) in table.iter().enumerate() {
            if p.len() != alphabet.len() {
                return validation(format!("cell {c} has {} probabilities", p.len()));
            }
            if p.iter().any(|&x| !(x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > PROB_TOL {
                return validation(format!("cell {c} is not a probability vector: {p:?}"));
            }
        }
        Ok(Self { alphabet, grid_depth, table })
    }

    /// A `{-1, +1}` kernel from per-cell probabilities of `+1`.
    pub fn spin(grid_depth: u32, p_plus: &[f64]) -> Result<Self> {
        if let Some(p) = p_plus.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return validation(format!("probability {p} outside [0,1]"));
        }
        Self::new(
            vec![-1.0, 1.0],
            grid_depth,
            p_plus.iter().map(|&p| vec![1.0 - p, p]).collect(),
        )
    }

    /// A `{-1, +1}` kernel from per-cell means in `[-1, 1]`.
    pub fn spin_from_means(grid_depth: u32, means: &[f64]) -> Result<Self> {
        let p: Vec<f64> = means.iter().map(|m| (1.0 + m) / 2.0).collect();
        Self::spin(grid_depth, &p)
    }

    /// Tabulates a function of `t` at cell midpoints.
    pub fn spin_from_mean_fn(grid_depth: u32, m: impl Fn(f64) -> f64) -> Result<Self> {
        let cells = 1usize << grid_depth;
        let means: Vec<f64> = (0..cells).map(|c| m((c as f64 + 0.5) / cells as f64)).collect();
        Self::spin_from_means(grid_depth, &means)
    }

    /// The same law in every cell.
    pub fn constant(alphabet: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        Self::new(alphabet, 0, vec![probs])
    }

    pub fn cells(&self) -> usize {
        self.table.len()
    }

    pub fn probs(&self, cell: usize) -> &[f64] {
        &self.table[cell]
    }

    pub fn mean(&self, cell: usize) -> f64 {
        self.alphabet.iter().zip(&self.table[cell]).map(|(a, p)| a * p).sum()
    }

    pub fn second_moment(&self, cell: usize) -> f64 {
        self.alphabet.iter().zip(&self.table[cell]).map(|(a, p)| a * a * p).sum()
    }

    /// Inverse-CDF draw from the cell law using the uniform `u`.
    pub fn sample_cell(&self, cell: usize, u: f64) -> f64 {
        inverse_cdf(&self.alphabet, &self.table[cell], u)
    }
}

fn inverse_cdf(alphabet: &[f64], probs: &[f64], u: f64) -> f64 {
    let mut acc = 0.0;
    for (a, p) in alphabet.iter().zip(probs) {
        acc += p;
        if u < acc {
            return *a;
        }
    }
    // rounding can leave acc slightly below 1
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1);
    alphabet[last]
}

/// A `{-1, +1}` kernel whose probability of `+1` depends on independent
/// digit blocks of `t` rather than on its leading digits.
///
/// `blocks` lists `(block id, bits)`; the table is indexed by the block values
/// concatenated in list order, first block most significant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockKernel {
    pub blocks: Vec<(u64, u32)>,
    pub p_plus: Vec<f64>,
}

impl BlockKernel {
    pub fn new(blocks: Vec<(u64, u32)>, p_plus: Vec<f64>) -> Result<Self> {
        let bits: u32 = blocks.iter().map(|b| b.1).sum();
        if bits > 24 || p_plus.len() != 1usize << bits {
            return validation(format!(
                "block kernel with {bits} bits needs {} entries, got {}",
                1u64 << bits.min(62),
                p_plus.len()
            ));
        }
        if let Some(p) = p_plus.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return validation(format!("probability {p} outside [0,1]"));
        }
        Ok(Self { blocks, p_plus })
    }

    #[inline]
    pub fn index(&self, t: &UnitPoint) -> usize {
        self.blocks
            .iter()
            .fold(0usize, |acc, &(id, bits)| (acc << bits) | t.block(id, bits))
    }

    #[inline]
    pub fn p_plus_at(&self, t: &UnitPoint) -> f64 {
        self.p_plus[self.index(t)]
    }
}

/// One atom of a directing random measure: a kernel `t ↦ λ(t, ·)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum AtomKernel {
    Grid(Kernel),
    Blocks(BlockKernel),
}

impl AtomKernel {
    pub fn alphabet(&self) -> &[f64] {
        match self {
            AtomKernel::Grid(k) => &k.alphabet,
            AtomKernel::Blocks(_) => &[-1.0, 1.0],
        }
    }

    /// Probability of `+1` at `t` for `{-1, +1}` kernels.
    #[inline]
    pub fn p_plus(&self, t: &UnitPoint) -> f64 {
        match self {
            AtomKernel::Grid(k) => {
                let c = t.cell(k.grid_depth);
                let pos = k.alphabet.iter().position(|&a| a == 1.0);
                pos.map_or(0.0, |j| k.table[c][j])
            }
            AtomKernel::Blocks(b) => b.p_plus_at(t),
        }
    }

    pub fn is_spin(&self) -> bool {
        match self {
            AtomKernel::Grid(k) => {
                k.alphabet.len() == 2 && k.alphabet.contains(&-1.0) && k.alphabet.contains(&1.0)
            }
            AtomKernel::Blocks(_) => true,
        }
    }

    /// Draw from `λ(t, ·)` with the uniform `u`.
    pub fn sample(&self, t: &UnitPoint, u: f64) -> f64 {
        match self {
            AtomKernel::Grid(k) => k.sample_cell(t.cell(k.grid_depth), u),
            AtomKernel::Blocks(b) => {
                if u < b.p_plus_at(t) {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

/// A realized atomic measure `Σ v_k δ_{λ_k}` on kernels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicGamma {
    pub weights: Vec<f64>,
    pub atoms: Vec<AtomKernel>,
}

impl AtomicGamma {
    pub fn new(weights: Vec<f64>, atoms: Vec<AtomKernel>) -> Result<Self> {
        if weights.is_empty() || weights.len() != atoms.len() {
            return validation("atomic measure needs one weight per atom");
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > PROB_TOL
        {
            return validation("atom weights must be non-negative and sum to 1");
        }
        let alpha = atoms[0].alphabet().to_vec();
        if atoms.iter().any(|a| a.alphabet() != alpha.as_slice()) {
            return validation("all atoms must share one alphabet");
        }
        Ok(Self { weights, atoms })
    }

    pub fn point_mass(kernel: AtomKernel) -> Self {
        Self { weights: vec![1.0], atoms: vec![kernel] }
    }

    pub fn alphabet(&self) -> &[f64] {
        self.atoms[0].alphabet()
    }

    /// Index of the atom selected by the uniform `u` (cumulative weights).
    pub fn pick(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        self.weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }
}

pub type GammaGenerator = dyn Fn(&SeedContext) -> Result<AtomicGamma> + Send + Sync;

/// A directing random measure `γ`: fixed atoms, or a seeded generator of
/// random atomic measures.
#[derive(Clone)]
pub enum DirectingRandomMeasure {
    Atomic(AtomicGamma),
    Generative(Arc<GammaGenerator>),
}

impl std::fmt::Debug for DirectingRandomMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DirectingRandomMeasure::Atomic(g) => write!(f, "Atomic({} atoms)", g.atoms.len()),
            DirectingRandomMeasure::Generative(_) => write!(f, "Generative"),
        }
    }
}

impl DirectingRandomMeasure {
    pub fn generative(
        f: impl Fn(&SeedContext) -> Result<AtomicGamma> + Send + Sync + 'static,
    ) -> Self {
        DirectingRandomMeasure::Generative(Arc::new(f))
    }

    /// One realization of `γ`.
    pub fn realize(&self, ctx: &SeedContext) -> Result<AtomicGamma> {
        match self {
            DirectingRandomMeasure::Atomic(g) => Ok(g.clone()),
            DirectingRandomMeasure::Generative(f) => {
                let g = f(ctx)?;
                AtomicGamma::new(g.weights.clone(), g.atoms.clone())
            }
        }
    }
}

/// Samples `Samp(γ)` in the sequence case.
///
/// Kernels `λ_1..λ_n` are drawn once, i.i.d. from a single realization of
/// `γ`; every replica then draws its own `t` and independent entries
/// `X_i ~ λ_i(t, ·)`. Each returned slice has `k = 1` with the empty set
/// mapped to an empty value.
pub fn sample_theorem_b(
    gamma: &DirectingRandomMeasure,
    n: u32,
    r: usize,
    ctx: &SeedContext,
) -> Result<Vec<ArraySlice>> {
    let rows = sample_theorem_b_matrix(gamma, n, r, ctx)?;
    Ok(rows
        .into_iter()
        .map(|row| {
            let mut values = std::collections::BTreeMap::new();
            values.insert(SubsetKey::empty(), Vec::new());
            for (i, x) in row.into_iter().enumerate() {
                values.insert(SubsetKey::singleton(i as u32 + 1), vec![x]);
            }
            ArraySlice { n, k: 1, values }
        })
        .collect())
}

/// As [`sample_theorem_b`], returning an `r × n` matrix.
pub fn sample_theorem_b_matrix(
    gamma: &DirectingRandomMeasure,
    n: u32,
    r: usize,
    ctx: &SeedContext,
) -> Result<Vec<Vec<f64>>> {
    if n == 0 || r == 0 {
        return validation("n and r must be at least 1");
    }
    let g = gamma.realize(&ctx.substream("gamma"))?;
    let mut lrng = ctx.substream("lambda").rng();
    let lambda: Vec<usize> = (0..n).map(|_| g.pick(lrng.random())).collect();
    let rep = ctx.substream("replica");
    Ok((0..r)
        .map(|l| {
            let mut rng = rep.index(l as u64).rng();
            let t = UnitPoint::sample(&mut rng);
            lambda.iter().map(|&k| g.atoms[k].sample(&t, rng.random())).collect()
        })
        .collect())
}

/// Exact probability, under `Samp(γ)` for a fixed atomic `γ`, that every
/// `(replica, position, value)` constraint holds. Sums over atom assignments
/// of the constrained positions and over the dyadic `t` cells of each
/// replica. Grid atoms only.
pub fn theorem_b_cylinder_probability(
    gamma: &AtomicGamma,
    constraints: &[(usize, u32, f64)],
) -> Result<f64> {
    let kernels: Vec<&Kernel> = gamma
        .atoms
        .iter()
        .map(|a| match a {
            AtomKernel::Grid(k) => Ok(k),
            AtomKernel::Blocks(_) => Err(Error::Capability("grid atoms required".into())),
        })
        .collect::<Result<_>>()?;
    let mut positions: Vec<u32> = constraints.iter().map(|c| c.1).collect();
    positions.sort_unstable();
    positions.dedup();
    let mut replicas: Vec<usize> = constraints.iter().map(|c| c.0).collect();
    replicas.sort_unstable();
    replicas.dedup();
    let n_atoms = kernels.len();
    // each replica integrates its own t over the finest grid
    let depth = kernels.iter().map(|k| k.grid_depth).max().unwrap_or(0);
    let cells = 1usize << depth;
    let mut total = 0.0;
    let assignments = n_atoms.pow(positions.len() as u32);
    for code in 0..assignments {
        let mut rem = code;
        let mut weight = 1.0;
        let mut assign = Vec::with_capacity(positions.len());
        for _ in &positions {
            let a = rem % n_atoms;
            rem /= n_atoms;
            weight *= gamma.weights[a];
            assign.push(a);
        }
        if weight == 0.0 {
            continue;
        }
        for &l in &replicas {
            let mut integral = 0.0;
            for c in 0..cells {
                let mut p = 1.0;
                for &(_, pos, val) in constraints.iter().filter(|c| c.0 == l) {
                    let j = positions.binary_search(&pos).expect("position listed");
                    let k = kernels[assign[j]];
                    let cell = c >> (depth - k.grid_depth);
                    let idx = k.alphabet.iter().position(|&a| a == val);
                    p *= idx.map_or(0.0, |i| k.table[cell][i]);
                }
                integral += p;
            }
            weight *= integral / cells as f64;
        }
        total += weight;
    }
    Ok(total)
}

pub type RceFn = dyn Fn([f64; 4]) -> f64 + Send + Sync;

/// Directing function `[0,1)^4 → A` of a row-column exchangeable array.
#[derive(Clone)]
pub enum RceDirecting {
    Callable(Arc<RceFn>),
    /// Row-major table over the four coordinate cells `(z, u, v, w)`.
    Grid { depth: u32, alphabet: Vec<f64>, table: Vec<f64> },
}

impl RceDirecting {
    pub fn callable(f: impl Fn([f64; 4]) -> f64 + Send + Sync + 'static) -> Self {
        RceDirecting::Callable(Arc::new(f))
    }

    pub fn grid(depth: u32, alphabet: Vec<f64>, table: Vec<f64>) -> Result<Self> {
        if 4 * depth > 24 || table.len() != 1usize << (4 * depth) {
            return validation("grid directing function needs 2^(4·depth) cells");
        }
        if table.iter().any(|x| !alphabet.contains(x)) {
            return validation("grid table values must lie in the alphabet");
        }
        Ok(RceDirecting::Grid { depth, alphabet, table })
    }

    pub fn eval(&self, x: [f64; 4]) -> f64 {
        match self {
            RceDirecting::Callable(f) => f(x),
            RceDirecting::Grid { depth, table, .. } => {
                let cells = 1usize << depth;
                let idx = x.iter().fold(0usize, |acc, &c| {
                    acc * cells + ((c * cells as f64) as usize).min(cells - 1)
                });
                table[idx]
            }
        }
    }

    /// Reads off `λ(z, u)(t, ·) = P_W(f(z, u, t, W) ∈ ·)` by summing over the
    /// `W` cells of a grid directing function.
    pub fn kernel_at(&self, z: f64, u: f64) -> Result<Kernel> {
        let RceDirecting::Grid { depth, alphabet, table } = self else {
            return Err(Error::Capability("kernel read-off needs a grid directing function".into()));
        };
        let cells = 1usize << depth;
        let zc = ((z * cells as f64) as usize).min(cells - 1);
        let uc = ((u * cells as f64) as usize).min(cells - 1);
        let rows = (0..cells)
            .map(|vc| {
                let mut p = vec![0.0; alphabet.len()];
                for wc in 0..cells {
                    let idx = ((zc * cells + uc) * cells + vc) * cells + wc;
                    let a = alphabet.iter().position(|&a| a == table[idx]).expect("validated");
                    p[a] += 1.0 / cells as f64;
                }
                p
            })
            .collect();
        Kernel::new(alphabet.clone(), *depth, rows)
    }
}

/// `rows × cols` matrix `f(Z, U_i, V_n, W_in)`.
pub fn sample_rce(f: &RceDirecting, rows: u32, cols: u32, ctx: &SeedContext) -> Result<Vec<Vec<f64>>> {
    if rows == 0 || cols == 0 {
        return validation("rows and cols must be at least 1");
    }
    let z = uniform_at(&ctx.substream("Z"), &SubsetKey::empty());
    let uc = ctx.substream("U");
    let vc = ctx.substream("V");
    let wc = ctx.substream("W");
    let v: Vec<f64> = (1..=cols).map(|n| uniform_at(&vc, &SubsetKey::singleton(n))).collect();
    Ok((1..=rows)
        .map(|i| {
            let u = uniform_at(&uc, &SubsetKey::singleton(i));
            (1..=cols)
                .map(|n| {
                    let w = crate::rng::to_unit(wc.hash_u64((i as u64) << 32 | n as u64));
                    f.eval([z, u, v[n as usize - 1], w])
                })
                .collect()
        })
        .collect())
}

/// Built-in directing tuples.
pub mod builtins {
    use super::*;

    fn empty_component() -> Component {
        Component::callable(0, |_: &LayerInput<'_>| Vec::new())
    }

    /// ERPM: entry `i` is drawn from `kernel(U_i, ·)` with `V_i`; the U layer
    /// fixes the product measure.
    pub fn erpm(kernel: Kernel) -> Result<TheoremADirecting> {
        let alphabet = kernel.alphabet.clone();
        let f1 = Component::callable(1, move |x: &LayerInput<'_>| {
            let [u, v] = [x.at(1)[0], x.at(1)[1]];
            let cell = ((u * kernel.cells() as f64) as usize).min(kernel.cells() - 1);
            vec![kernel.sample_cell(cell, v)]
        });
        let tuple = SkewProductTuple::new(
            Space::unit_cube(2),
            vec![Space(vec![]), Space::finite(alphabet)],
            vec![empty_component(), f1],
        )?;
        TheoremADirecting::new(tuple)
    }

    /// Uniform random bipartition `(A, B)` of the ground set by `U_{i} < 1/2`;
    /// a single coin `V_∅` picks the all-ones edge indicator of `A` or of `B`.
    pub fn bipartition() -> TheoremADirecting {
        let zero = || Component::callable(1, |_: &LayerInput<'_>| vec![0.0]);
        let f2 = Component::callable(1, |x: &LayerInput<'_>| {
            let in_a = |mask| x.at(mask)[0] < 0.5;
            let pick_a = x.at(0)[1] < 0.5;
            let both = if pick_a { in_a(1) && in_a(2) } else { !in_a(1) && !in_a(2) };
            vec![if both { 1.0 } else { 0.0 }]
        });
        let tuple = SkewProductTuple::new(
            Space::unit_cube(2),
            vec![Space::finite(vec![0.0]), Space::finite(vec![0.0]), Space::finite(vec![0.0, 1.0])],
            vec![zero(), zero(), f2],
        )
        .expect("static tuple");
        TheoremADirecting::new(tuple).expect("arity 2")
    }

    /// Entries `1{V_i < p}` i.i.d. Bernoulli(p), ignoring `U`.
    pub fn iid_bernoulli(p: f64) -> TheoremADirecting {
        let f1 = Component::callable(1, move |x: &LayerInput<'_>| {
            vec![if x.at(1)[1] < p { 1.0 } else { 0.0 }]
        });
        let tuple = SkewProductTuple::new(
            Space::unit_cube(2),
            vec![Space(vec![]), Space::finite(vec![0.0, 1.0])],
            vec![empty_component(), f1],
        )
        .expect("static tuple");
        TheoremADirecting::new(tuple).expect("arity 2")
    }

    /// Constant tuple at every level.
    pub fn constant(k: usize, value: f64) -> TheoremADirecting {
        let comps = (0..=k)
            .map(|_| Component::callable(1, move |_: &LayerInput<'_>| vec![value]))
            .collect();
        let tuple = SkewProductTuple::new(
            Space::unit_cube(2),
            vec![Space::finite(vec![value]); k + 1],
            comps,
        )
        .expect("static tuple");
        TheoremADirecting::new(tuple).expect("arity 2")
    }
}
