//! Skew-product tuples `(f_0, ..., f_k)` of middle-symmetric functions.
//!
//! Component `f_i` consumes one input point for every subset `a` of `[i]`.
//! Inputs are passed as a [`LayerInput`], a flat buffer indexed by the bitmask
//! of `a` over positions `0..i`. Evaluating at a finite set `e` relabels `e`
//! onto `[|e|]` in increasing order before dispatch.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::rng::{SeedContext, SubsetKey};

/// Largest supported array dimension.
pub const MAX_K: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Axis {
    Finite(Vec<f64>),
    Interval { lo: f64, hi: f64 },
}

impl Axis {
    pub fn unit() -> Self {
        Axis::Interval { lo: 0.0, hi: 1.0 }
    }

    fn contains(&self, other: &Axis) -> bool {
        match (self, other) {
            (Axis::Interval { lo, hi }, Axis::Interval { lo: a, hi: b }) => lo <= a && b <= hi,
            (Axis::Interval { lo, hi }, Axis::Finite(vs)) => vs.iter().all(|v| lo <= v && v <= hi),
            (Axis::Finite(vs), Axis::Finite(ws)) => ws.iter().all(|w| vs.contains(w)),
            (Axis::Finite(_), Axis::Interval { .. }) => false,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Axis::Interval { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Axis::Finite(vs) => vs[rng.random_range(0..vs.len())],
        }
    }
}

/// A product of axes; the value space of one array entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Space(pub Vec<Axis>);

impl Space {
    pub fn unit_cube(dim: usize) -> Self {
        Space(vec![Axis::unit(); dim])
    }

    pub fn finite(values: Vec<f64>) -> Self {
        Space(vec![Axis::Finite(values)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, other: &Space) -> bool {
        self.dim() == other.dim() && self.0.iter().zip(&other.0).all(|(a, b)| a.contains(b))
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.0.iter().map(|a| a.sample(rng)).collect()
    }
}

/// Inputs to component `f_i`: one point per subset of `[i]`, by bitmask.
#[derive(Clone, Copy, Debug)]
pub struct LayerInput<'a> {
    level: usize,
    arity: usize,
    data: &'a [f64],
}

impl<'a> LayerInput<'a> {
    pub fn new(level: usize, arity: usize, data: &'a [f64]) -> Result<Self> {
        if data.len() != (1 << level) * arity {
            return validation(format!(
                "level {level} with arity {arity} needs {} values, got {}",
                (1 << level) * arity,
                data.len()
            ));
        }
        Ok(Self { level, arity, data })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Point attached to the subset with bitmask `mask`.
    #[inline]
    pub fn at(&self, mask: usize) -> &'a [f64] {
        &self.data[mask * self.arity..(mask + 1) * self.arity]
    }

    /// Point attached to the full set `[i]`.
    pub fn top(&self) -> &'a [f64] {
        self.at((1 << self.level) - 1)
    }

    pub fn raw(&self) -> &'a [f64] {
        self.data
    }
}

pub type LayerFn = dyn Fn(&LayerInput<'_>) -> Vec<f64> + Send + Sync;

/// Piecewise-constant function on dyadic cells of every input coordinate.
///
/// Coordinates are ordered by subset bitmask, then by arity component; the
/// table is row-major over their cell indices. Evaluation reads the table at
/// the lexicographically smallest relabeling of the input, so the function is
/// middle-symmetric whatever the table holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub level_k: usize,
    pub arity: usize,
    pub grid_depth: u32,
    pub table: Vec<f64>,
}

impl GridFunction {
    pub fn new(level_k: usize, arity: usize, grid_depth: u32, table: Vec<f64>) -> Result<Self> {
        if level_k > MAX_K {
            return Err(Error::Range(format!("level {level_k} exceeds {MAX_K}")));
        }
        let coords = (1usize << level_k) * arity;
        let bits = coords as u32 * grid_depth;
        if bits > 24 {
            return Err(Error::Range(format!(
                "grid with {coords} coordinates at depth {grid_depth} is too large"
            )));
        }
        if table.len() != 1usize << bits {
            return validation(format!(
                "grid table needs {} cells, got {}",
                1usize << bits,
                table.len()
            ));
        }
        Ok(Self { level_k, arity, grid_depth, table })
    }

    /// Tabulates `f` at cell midpoints.
    pub fn tabulate(
        level_k: usize,
        arity: usize,
        grid_depth: u32,
        f: impl Fn(&LayerInput<'_>) -> f64,
    ) -> Result<Self> {
        let coords = (1usize << level_k) * arity;
        let cells = 1usize << grid_depth;
        let total = 1usize << (coords as u32 * grid_depth);
        let mut table = Vec::with_capacity(total);
        let mut point = vec![0.0; coords];
        for idx in 0..total {
            let mut rem = idx;
            for c in (0..coords).rev() {
                point[c] = ((rem % cells) as f64 + 0.5) / cells as f64;
                rem /= cells;
            }
            table.push(f(&LayerInput { level: level_k, arity, data: &point }));
        }
        Self::new(level_k, arity, grid_depth, table)
    }

    fn cell_of(&self, x: f64) -> usize {
        let cells = 1usize << self.grid_depth;
        ((x.clamp(0.0, 1.0) * cells as f64) as usize).min(cells - 1)
    }

    pub fn eval(&self, input: &LayerInput<'_>) -> f64 {
        let cells: Vec<usize> = input.raw().iter().map(|&x| self.cell_of(x)).collect();
        let canon = canonical_cells(&cells, self.level_k, self.arity);
        let width = 1usize << self.grid_depth;
        let idx = canon.iter().fold(0usize, |acc, &c| acc * width + c);
        self.table[idx]
    }
}

/// Permutations of `0..n` (n <= 4), identity first.
pub(crate) fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    fn rec(k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == cur.len() {
            out.push(cur.clone());
            return;
        }
        for j in k..cur.len() {
            cur.swap(k, j);
            rec(k + 1, cur, out);
            cur.swap(k, j);
        }
    }
    rec(0, &mut cur, &mut out);
    out
}

/// Image of a position bitmask under a permutation of positions.
#[inline]
pub(crate) fn permute_mask(mask: usize, perm: &[usize]) -> usize {
    perm.iter()
        .enumerate()
        .filter(|(j, _)| mask >> j & 1 == 1)
        .fold(0, |acc, (_, &p)| acc | 1 << p)
}

fn canonical_cells(cells: &[usize], level: usize, arity: usize) -> Vec<usize> {
    if level < 2 {
        return cells.to_vec();
    }
    let mut best: Option<Vec<usize>> = None;
    let mut cand = vec![0; cells.len()];
    for perm in permutations(level) {
        for mask in 0..1usize << level {
            let src = permute_mask(mask, &perm);
            cand[mask * arity..(mask + 1) * arity]
                .copy_from_slice(&cells[src * arity..(src + 1) * arity]);
        }
        if best.as_ref().is_none_or(|b| cand < *b) {
            best = Some(cand.clone());
        }
    }
    best.expect("at least one permutation")
}

#[derive(Clone)]
pub enum Component {
    Callable { f: Arc<LayerFn>, out_dim: usize },
    Grid(GridFunction),
}

impl Component {
    pub fn callable(
        out_dim: usize,
        f: impl Fn(&LayerInput<'_>) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Component::Callable { f: Arc::new(f), out_dim }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Component::Callable { out_dim, .. } => *out_dim,
            Component::Grid(_) => 1,
        }
    }

    pub fn eval(&self, input: &LayerInput<'_>) -> Vec<f64> {
        match self {
            Component::Callable { f, .. } => f(input),
            Component::Grid(g) => vec![g.eval(input)],
        }
    }
}

impl fmt::Debug for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Component::Callable { out_dim, .. } => write!(f, "Callable(out_dim={out_dim})"),
            Component::Grid(g) => write!(f, "Grid(level={}, depth={})", g.level_k, g.grid_depth),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SkewProductTuple {
    k: usize,
    input: Space,
    codomains: Vec<Space>,
    components: Vec<Component>,
}

impl SkewProductTuple {
    pub fn new(input: Space, codomains: Vec<Space>, components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return validation("a skew-product tuple needs at least f_0");
        }
        let k = components.len() - 1;
        if k > MAX_K {
            return Err(Error::Range(format!("k = {k} exceeds the cap {MAX_K}")));
        }
        if codomains.len() != components.len() {
            return validation("one codomain per component is required");
        }
        for (i, (c, cod)) in components.iter().zip(&codomains).enumerate() {
            if c.out_dim() != cod.dim() {
                return validation(format!(
                    "component {i} outputs {} values but its codomain has dimension {}",
                    c.out_dim(),
                    cod.dim()
                ));
            }
            if let Component::Grid(g) = c {
                if g.level_k != i || g.arity != input.dim() {
                    return validation(format!(
                        "grid component {i} has level {} and arity {}",
                        g.level_k, g.arity
                    ));
                }
            }
        }
        Ok(Self { k, input, codomains, components })
    }

    /// Each `f_i` returns its top argument `x_[i]`.
    pub fn identity(k: usize, space: Space) -> Result<Self> {
        let d = space.dim();
        let comps = (0..=k)
            .map(|_| Component::callable(d, |x: &LayerInput<'_>| x.top().to_vec()))
            .collect();
        Self::new(space.clone(), vec![space; k + 1], comps)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn input(&self) -> &Space {
        &self.input
    }

    pub fn input_arity(&self) -> usize {
        self.input.dim()
    }

    pub fn codomains(&self) -> &[Space] {
        &self.codomains
    }

    pub fn component(&self, i: usize) -> &Component {
        &self.components[i]
    }

    #[inline]
    pub fn eval_level(&self, input: &LayerInput<'_>) -> Vec<f64> {
        self.components[input.level()].eval(input)
    }

    /// `f_{|e|}((x_a)_{a ⊆ e})` with `e` relabeled increasingly onto `[|e|]`.
    pub fn evaluate(
        &self,
        e: &SubsetKey,
        inputs: &BTreeMap<SubsetKey, Vec<f64>>,
    ) -> Result<Vec<f64>> {
        if e.len() > self.k {
            return Err(Error::Range(format!("|e| = {} exceeds k = {}", e.len(), self.k)));
        }
        let d = self.input_arity();
        let mut data = Vec::with_capacity((1 << e.len()) * d);
        for a in e.subsets() {
            let x = inputs
                .get(&a)
                .ok_or_else(|| Error::Validation(format!("missing input for subset {a}")))?;
            if x.len() != d {
                return validation(format!("input for {a} has dimension {}, want {d}", x.len()));
            }
            data.extend_from_slice(x);
        }
        let layer = LayerInput { level: e.len(), arity: d, data: &data };
        Ok(self.eval_level(&layer))
    }

    /// Applies `f̂` to every subset of `[n]` of size at most `k`.
    pub fn evaluate_array(
        &self,
        n: u32,
        point: impl Fn(&SubsetKey) -> Vec<f64>,
    ) -> ArraySlice {
        let keys = SubsetKey::all_up_to(n, self.k);
        let points: BTreeMap<SubsetKey, Vec<f64>> =
            keys.iter().map(|e| (e.clone(), point(e))).collect();
        let d = self.input_arity();
        let mut values = BTreeMap::new();
        let mut data = Vec::new();
        for e in keys {
            data.clear();
            for a in e.subsets() {
                data.extend_from_slice(&points[&a]);
            }
            let layer = LayerInput { level: e.len(), arity: d, data: &data };
            values.insert(e, self.eval_level(&layer));
        }
        ArraySlice { n, k: self.k, values }
    }
}

/// `h_i((x_a)) = g_i((f_{|a|}((x_b)_{b ⊆ a}))_{a ⊆ [i]})`.
pub fn compose(g: &SkewProductTuple, f: &SkewProductTuple) -> Result<SkewProductTuple> {
    if g.k != f.k {
        return validation(format!("cannot compose k = {} with k = {}", g.k, f.k));
    }
    for (j, cod) in f.codomains.iter().enumerate() {
        if !g.input.contains(cod) {
            return validation(format!(
                "codomain of f_{j} is not contained in the input space of g"
            ));
        }
    }
    let d_in = f.input_arity();
    let d_mid = g.input_arity();
    let mut comps = Vec::with_capacity(g.k + 1);
    for i in 0..=g.k {
        let g = g.clone();
        let f = f.clone();
        let out_dim = g.codomains[i].dim();
        comps.push(Component::callable(out_dim, move |x: &LayerInput<'_>| {
            let level = x.level();
            let mut mid = vec![0.0; (1 << level) * d_mid];
            let mut sub = Vec::with_capacity((1 << level) * d_in);
            for a in 0..1usize << level {
                let positions: Vec<usize> = (0..level).filter(|j| a >> j & 1 == 1).collect();
                sub.clear();
                for b in 0..1usize << positions.len() {
                    let full = positions
                        .iter()
                        .enumerate()
                        .filter(|(t, _)| b >> t & 1 == 1)
                        .fold(0usize, |acc, (_, &p)| acc | 1 << p);
                    sub.extend_from_slice(x.at(full));
                }
                let inner = LayerInput { level: positions.len(), arity: d_in, data: &sub };
                let y = f.eval_level(&inner);
                mid[a * d_mid..(a + 1) * d_mid].copy_from_slice(&y);
            }
            g.eval_level(&LayerInput { level, arity: d_mid, data: &mid })
        }));
    }
    SkewProductTuple::new(f.input.clone(), g.codomains.clone(), comps)
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelSymmetry {
    pub level: usize,
    pub probes: usize,
    pub max_deviation: f64,
    /// Probes with any differing output (meaningful for discrete codomains).
    pub disagreements: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SymmetryReport {
    pub levels: Vec<LevelSymmetry>,
}

impl SymmetryReport {
    pub fn max_deviation(&self) -> f64 {
        self.levels.iter().map(|l| l.max_deviation).fold(0.0, f64::max)
    }
}

/// Probes every component with random inputs and random relabelings of `[i]`.
pub fn check_middle_symmetry(
    tuple: &SkewProductTuple,
    probes: usize,
    seed: u64,
) -> Result<SymmetryReport> {
    if probes == 0 {
        return validation("at least one probe is required");
    }
    let mut rng = SeedContext::new(seed, "middle-symmetry").rng();
    let d = tuple.input_arity();
    let mut levels = Vec::with_capacity(tuple.k + 1);
    for i in 0..=tuple.k {
        let perms = permutations(i);
        let mut max_dev = 0.0f64;
        let mut disagreements = 0;
        let mut permuted = vec![0.0; (1 << i) * d];
        for _ in 0..probes {
            let data: Vec<f64> = (0..1usize << i)
                .flat_map(|_| tuple.input.sample(&mut rng))
                .collect();
            let perm = &perms[rng.random_range(0..perms.len())];
            for mask in 0..1usize << i {
                let src = permute_mask(mask, perm);
                permuted[mask * d..(mask + 1) * d].copy_from_slice(&data[src * d..(src + 1) * d]);
            }
            let a = tuple.eval_level(&LayerInput { level: i, arity: d, data: &data });
            let b = tuple.eval_level(&LayerInput { level: i, arity: d, data: &permuted });
            let dev = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            if dev > 0.0 {
                disagreements += 1;
            }
            max_dev = max_dev.max(dev);
        }
        levels.push(LevelSymmetry { level: i, probes, max_deviation: max_dev, disagreements });
    }
    Ok(SymmetryReport { levels })
}

/// Values of an array on all subsets of `[n]` of size at most `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArraySlice {
    pub n: u32,
    pub k: usize,
    pub values: BTreeMap<SubsetKey, Vec<f64>>,
}

impl ArraySlice {
    /// Scalar entry at `e`; panics if absent.
    pub fn scalar(&self, e: &SubsetKey) -> f64 {
        self.values[e][0]
    }

    /// The slice relabeled by a permutation of `[n]`: entry `e` becomes the
    /// original entry at `pi(e)`.
    pub fn relabel(&self, pi: impl Fn(u32) -> u32) -> Result<ArraySlice> {
        let mut values = BTreeMap::new();
        for e in self.values.keys() {
            let img = SubsetKey::from_unsorted(e.elements().iter().map(|&x| pi(x)).collect())?;
            let v = self
                .values
                .get(&img)
                .ok_or_else(|| Error::Validation(format!("relabeling leaves [n] at {e}")))?;
            values.insert(e.clone(), v.clone());
        }
        Ok(ArraySlice { n: self.n, k: self.k, values })
    }

    /// Entries on singletons `{1}, ..., {n}` (k = 1 sequences).
    pub fn sequence(&self) -> Vec<f64> {
        (1..=self.n).map(|i| self.scalar(&SubsetKey::singleton(i))).collect()
    }

    pub fn csv_header(&self) -> String {
        self.values.keys().map(|k| format!("\"{k}\"")).collect::<Vec<_>>().join(",")
    }

    pub fn csv_row(&self) -> String {
        self.values
            .values()
            .map(|v| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";"))
            .collect::<Vec<_>>()
            .join(",")
    }
}
