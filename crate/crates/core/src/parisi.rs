//! The limiting free-energy functional `P(σ)` of the Viana-Bray model.
//!
//! ```text
//! P(σ) = log 2 + E¹ log E² cosh(β Σ_{i≤K₁} J_i σ(W,U,V_i,X_i))
//!              − E¹ log E² exp(β Σ_{i≤K₂} J_i σ(W,U,V_i,X_i) σ(W,U,V'_i,X'_i))
//! ```
//!
//! with `K₁ ~ Poisson(2α)`, `K₂ ~ Poisson(α)`. Given `(W, U, V_i)` the spins
//! are independent with means `m_i`, so the inner expectations factorize:
//! `E² cosh(...) = ½[Π(cosh a_i + m_i sinh a_i) + Π(cosh a_i − m_i sinh a_i)]`
//! and `E² exp(...) = Π(cosh a_i + m_i m'_i sinh a_i)` with `a_i = β J_i`,
//! averaged exactly over the finitely many `U` cells.

use std::cell::RefCell;
use std::sync::Arc;

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{DiscreteCDF, Poisson as PoissonLaw};

use crate::cascade::phi_inv;
use crate::erm::{AtomicGamma, DirectingRandomMeasure};
use crate::error::{validation, Error, Result};
use crate::rng::{SeedContext, UnitPoint};
use crate::stats::mean_se;
use crate::vianabray::{free_energy_mc, CouplingLaw, MAX_EXACT_N};

/// Outer samples per substream.
pub const CHUNK: usize = 1024;
/// `U` depth of the [`NamedSigma::RsbField`] family.
pub const RSB_U_DEPTH: u32 = 4;

pub type SigmaCallable = dyn Fn([f64; 4]) -> i8 + Send + Sync;

/// `σ` given by its `±1` values on a dyadic grid over `(w, u, v, x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaGrid {
    pub w_depth: u32,
    pub u_depth: u32,
    pub v_depth: u32,
    pub x_depth: u32,
    /// Row-major over `(w, u, v, x)` cells.
    pub table: Vec<i8>,
    #[serde(skip)]
    means: Vec<f64>,
}

impl SigmaGrid {
    pub fn new(w_depth: u32, u_depth: u32, v_depth: u32, x_depth: u32, table: Vec<i8>) -> Result<Self> {
        let bits = w_depth + u_depth + v_depth + x_depth;
        if bits > 24 || table.len() != 1usize << bits {
            return validation(format!("sigma grid with {bits} bits needs {} entries", 1u64 << bits.min(62)));
        }
        if table.iter().any(|&s| s != 1 && s != -1) {
            return validation("sigma values must be -1 or +1");
        }
        let xc = 1usize << x_depth;
        let means = table
            .chunks(xc)
            .map(|c| c.iter().map(|&s| s as f64).sum::<f64>() / xc as f64)
            .collect();
        Ok(Self { w_depth, u_depth, v_depth, x_depth, table, means })
    }

    /// Rebuilds derived data after deserialization.
    pub fn validated(self) -> Result<Self> {
        Self::new(self.w_depth, self.u_depth, self.v_depth, self.x_depth, self.table)
    }

    fn wuv(&self, w: &UnitPoint, u_cell: usize, v: &UnitPoint) -> usize {
        ((w.cell(self.w_depth) << self.u_depth | u_cell) << self.v_depth) | v.cell(self.v_depth)
    }
}

/// Parametric families, with `σ = +1` iff `x < (1 + m) / 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum NamedSigma {
    /// `m ≡ 0`.
    RsCoin,
    /// `σ ≡ +1`.
    RsConst,
    /// `m ≡ tanh h`.
    RsTilt { h: f64 },
    /// `m(v) = tanh(a + b Φ⁻¹(v))`.
    RsField { a: f64, b: f64 },
    /// `m(u, v) = tanh(a + b Φ⁻¹(v) + c Φ⁻¹(u))`, `u` at the midpoints of
    /// `2^4` cells.
    RsbField { a: f64, b: f64, c: f64 },
}

impl NamedSigma {
    /// Parses `rs_coin`, `rs_const`, `rs_tilt:h`, `rs_field:a,b`,
    /// `rsb_field:a,b,c`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let p: Vec<f64> = if args.is_empty() {
            vec![]
        } else {
            args.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| Error::Validation(format!("{x}: {e}"))))
                .collect::<Result<_>>()?
        };
        let want = match name {
            "rs_coin" | "rs_const" => 0,
            "rs_tilt" => 1,
            "rs_field" => 2,
            "rsb_field" => 3,
            _ => return validation(format!("unknown sigma family '{name}'")),
        };
        if p.len() != want {
            return validation(format!("{name} takes {want} parameters, got {}", p.len()));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return validation("parameters must be finite");
        }
        Ok(match name {
            "rs_coin" => NamedSigma::RsCoin,
            "rs_const" => NamedSigma::RsConst,
            "rs_tilt" => NamedSigma::RsTilt { h: p[0] },
            "rs_field" => NamedSigma::RsField { a: p[0], b: p[1] },
            _ => NamedSigma::RsbField { a: p[0], b: p[1], c: p[2] },
        })
    }

    fn u_depth(&self) -> u32 {
        match self {
            NamedSigma::RsbField { .. } => RSB_U_DEPTH,
            _ => 0,
        }
    }

    fn mean(&self, u_cell: usize, v: &UnitPoint) -> f64 {
        match *self {
            NamedSigma::RsCoin => 0.0,
            NamedSigma::RsConst => 1.0,
            NamedSigma::RsTilt { h } => h.tanh(),
            NamedSigma::RsField { a, b } => (a + b * phi_inv(open_value(v))).tanh(),
            NamedSigma::RsbField { a, b, c } => {
                let u = (u_cell as f64 + 0.5) / (1u32 << RSB_U_DEPTH) as f64;
                (a + b * phi_inv(open_value(v)) + c * phi_inv(u)).tanh()
            }
        }
    }
}

/// The point's value shifted half a unit in the last place, in `(0, 1)`.
fn open_value(v: &UnitPoint) -> f64 {
    v.value() + f64::EPSILON / 4.0
}

/// A directing function `σ : [0,1)^4 → {-1, +1}`.
#[derive(Clone)]
pub enum SigmaFunction {
    /// Opaque; only the Monte Carlo inner mode applies.
    Callable(Arc<SigmaCallable>),
    Grid(SigmaGrid),
    Named(NamedSigma),
    /// `σ` read off a directing random measure: `W` realizes `γ`, `U` picks
    /// an atom by cumulative weight, and `σ = +1` iff `X < f(V)`.
    FromGamma(DirectingRandomMeasure),
}

impl std::fmt::Debug for SigmaFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SigmaFunction::Callable(_) => write!(f, "Callable"),
            SigmaFunction::Grid(g) => write!(f, "Grid({:?})", [g.w_depth, g.u_depth, g.v_depth, g.x_depth]),
            SigmaFunction::Named(n) => write!(f, "{n:?}"),
            SigmaFunction::FromGamma(g) => write!(f, "FromGamma({g:?})"),
        }
    }
}

impl SigmaFunction {
    pub fn callable(f: impl Fn([f64; 4]) -> i8 + Send + Sync + 'static) -> Self {
        SigmaFunction::Callable(Arc::new(f))
    }

    fn is_opaque(&self) -> bool {
        matches!(self, SigmaFunction::Callable(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InnerMode {
    ExactGrid,
    Mc { inner_samples: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PEvalConfig {
    pub alpha: f64,
    pub beta: f64,
    pub coupling: CouplingLaw,
    pub outer_samples: usize,
    pub inner: InnerMode,
    pub k_max: usize,
}

/// `⌈2α + 12√(2α) + 30⌉`.
pub fn default_k_max(alpha: f64) -> usize {
    (2.0 * alpha + 12.0 * (2.0 * alpha).sqrt() + 30.0).ceil() as usize
}

impl PEvalConfig {
    pub fn new(alpha: f64, beta: f64, outer_samples: usize) -> Self {
        Self {
            alpha,
            beta,
            coupling: CouplingLaw::Pm1,
            outer_samples,
            inner: InnerMode::ExactGrid,
            k_max: default_k_max(alpha),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return validation("alpha must be finite and non-negative");
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return validation("beta must be finite and non-negative");
        }
        if self.outer_samples == 0 {
            return validation("outer_samples must be at least 1");
        }
        if let InnerMode::Mc { inner_samples } = self.inner {
            if inner_samples < 2 {
                return validation("inner_samples must be at least 2");
            }
        }
        if self.alpha > 0.0 {
            let law = PoissonLaw::new(2.0 * self.alpha).map_err(|e| Error::Validation(e.to_string()))?;
            if law.sf(self.k_max as u64) >= 1e-12 {
                return validation(format!(
                    "k_max = {} leaves Poisson tail mass above 1e-12; use at least {}",
                    self.k_max,
                    default_k_max(self.alpha)
                ));
            }
        }
        self.coupling.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PEstimate {
    pub value: f64,
    pub std_error: f64,
    pub log2: f64,
    pub first: f64,
    pub first_se: f64,
    pub second: f64,
    pub second_se: f64,
    pub outer_samples: usize,
    pub warnings: Vec<String>,
}

/// The outer randomness `(W, K₁, K₂, V, V', J)` of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct OuterDraw {
    pub index: u64,
    pub w: UnitPoint,
    /// `(V_i, J_i)` for `i ≤ K₁`.
    pub first: Vec<(UnitPoint, f64)>,
    /// `(V_i, V'_i, J_i)` for `i ≤ K₂`.
    pub second: Vec<(UnitPoint, UnitPoint, f64)>,
}

struct OuterSampler {
    k1: Option<Poisson<f64>>,
    k2: Option<Poisson<f64>>,
    k_max: usize,
    law: CouplingLaw,
}

impl OuterSampler {
    fn new(cfg: &PEvalConfig) -> Result<Self> {
        let mk = |l: f64| -> Result<Option<Poisson<f64>>> {
            if l > 0.0 {
                Ok(Some(Poisson::new(l).map_err(|e| Error::Validation(e.to_string()))?))
            } else {
                Ok(None)
            }
        };
        Ok(Self { k1: mk(2.0 * cfg.alpha)?, k2: mk(cfg.alpha)?, k_max: cfg.k_max, law: cfg.coupling.clone() })
    }

    fn count<R: Rng + ?Sized>(&self, p: &Option<Poisson<f64>>, rng: &mut R) -> usize {
        p.as_ref().map_or(0, |p| (p.sample(rng) as usize).min(self.k_max))
    }

    fn draw<R: Rng + ?Sized>(&self, index: u64, rng: &mut R) -> OuterDraw {
        let w = UnitPoint::sample(rng);
        let k1 = self.count(&self.k1, rng);
        let first = (0..k1).map(|_| (UnitPoint::sample(rng), self.law.sample(rng))).collect();
        let k2 = self.count(&self.k2, rng);
        let second = (0..k2)
            .map(|_| (UnitPoint::sample(rng), UnitPoint::sample(rng), self.law.sample(rng)))
            .collect();
        OuterDraw { index, w, first, second }
    }
}

/// Outer draws exactly as the evaluators see them.
pub fn outer_draws(cfg: &PEvalConfig, ctx: &SeedContext) -> Result<Vec<OuterDraw>> {
    cfg.validate()?;
    let sampler = OuterSampler::new(cfg)?;
    for_each_outer(cfg.outer_samples, ctx, |i, rng| Ok(sampler.draw(i, rng)))
}

/// Runs `f` over `count` outer samples in chunks of [`CHUNK`], each chunk on
/// its own substream, collecting in index order.
fn for_each_outer<T: Send>(
    count: usize,
    ctx: &SeedContext,
    f: impl Fn(u64, &mut rand_chacha::ChaCha8Rng) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let outer = ctx.substream("outer");
    let chunks = count.div_ceil(CHUNK);
    let nested: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = outer.index(c as u64).rng();
            let start = c * CHUNK;
            (start..count.min(start + CHUNK)).map(|i| f(i as u64, &mut rng)).collect()
        })
        .collect::<Result<_>>()?;
    Ok(nested.into_iter().flatten().collect())
}

/// `σ` with `W` fixed: finitely many weighted `U` cells, each giving spin
/// means as a function of `V`.
struct Ready<'a> {
    sigma: &'a SigmaFunction,
    w: UnitPoint,
    gamma: Option<AtomicGamma>,
    weights: Vec<f64>,
}

fn gamma_context(ctx: &SeedContext, index: u64) -> SeedContext {
    ctx.substream("W").index(index)
}

impl<'a> Ready<'a> {
    fn new(sigma: &'a SigmaFunction, draw: &OuterDraw, ctx: &SeedContext) -> Result<Self> {
        let (gamma, weights) = match sigma {
            SigmaFunction::FromGamma(g) => {
                let g = g.realize(&gamma_context(ctx, draw.index))?;
                if g.atoms.iter().any(|a| !a.is_spin()) {
                    return validation("directing measure atoms must be {-1, +1} kernels");
                }
                let w = g.weights.clone();
                (Some(g), w)
            }
            SigmaFunction::Grid(g) => (None, vec![1.0; 1 << g.u_depth]),
            SigmaFunction::Named(n) => (None, vec![1.0; 1 << n.u_depth()]),
            SigmaFunction::Callable(_) => (None, vec![1.0]),
        };
        Ok(Self { sigma, w: draw.w, gamma, weights })
    }

    fn mean(&self, cell: usize, v: &UnitPoint) -> f64 {
        match self.sigma {
            SigmaFunction::Grid(g) => g.means[g.wuv(&self.w, cell, v)],
            SigmaFunction::Named(n) => n.mean(cell, v),
            SigmaFunction::FromGamma(_) => {
                let g = self.gamma.as_ref().expect("realized");
                2.0 * g.atoms[cell].p_plus(v) - 1.0
            }
            SigmaFunction::Callable(_) => unreachable!("opaque sigma has no exact means"),
        }
    }

    fn eval(&self, u: f64, v: &UnitPoint, x: f64) -> Result<f64> {
        let s = match self.sigma {
            SigmaFunction::Callable(f) => {
                let s = f([self.w.value(), u, v.value(), x]);
                if s != 1 && s != -1 {
                    return validation(format!("sigma returned {s}, expected -1 or +1"));
                }
                s as f64
            }
            SigmaFunction::Grid(g) => {
                let uc = (u * (1u64 << g.u_depth) as f64) as usize;
                let xc = (x * (1u64 << g.x_depth) as f64) as usize;
                g.table[(g.wuv(&self.w, uc, v) << g.x_depth) | xc] as f64
            }
            SigmaFunction::Named(n) => {
                let uc = (u * (1u64 << n.u_depth()) as f64) as usize;
                if x < 0.5 * (1.0 + n.mean(uc, v)) {
                    1.0
                } else {
                    -1.0
                }
            }
            SigmaFunction::FromGamma(_) => {
                let g = self.gamma.as_ref().expect("realized");
                if x < g.atoms[g.pick(u)].p_plus(v) {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        Ok(s)
    }
}

/// `ln(cosh a + m sinh a)`, stable for `|m| ≤ 1`; exactly 0 when `a = 0`.
#[inline]
fn ln_tilt(a: f64, m: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let ms = if a > 0.0 { m } else { -m };
    let e = (-2.0 * a.abs()).exp();
    a.abs() + (0.5 * ((1.0 + ms) + (1.0 - ms) * e)).ln()
}

/// `ln(½(e^x + e^y))`, exactly 0 when both are 0.
#[inline]
fn ln_half_sum(x: f64, y: f64) -> f64 {
    let m = x.max(y);
    m + (0.5 * ((x - m).exp() + (y - m).exp())).ln()
}

/// `ln(Σ w_c e^{x_c} / Σ w_c)`.
fn ln_weighted_mean(ws: &[f64], xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let num: f64 = ws.iter().zip(xs).map(|(w, x)| w * (x - m).exp()).sum();
    let den: f64 = ws.iter().sum();
    m + (num / den).ln()
}

/// Logs of the two inner expectations for one outer draw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerLogs {
    pub first: f64,
    pub second: f64,
}

fn inner_exact_ready(r: &Ready, draw: &OuterDraw, beta: f64) -> InnerLogs {
    let cells = r.weights.len();
    let mut lf = Vec::with_capacity(cells);
    let mut ls = Vec::with_capacity(cells);
    for c in 0..cells {
        let (mut la, mut lb) = (0.0, 0.0);
        for (v, j) in &draw.first {
            let a = beta * j;
            let m = r.mean(c, v);
            la += ln_tilt(a, m);
            lb += ln_tilt(a, -m);
        }
        lf.push(ln_half_sum(la, lb));
        let mut l2 = 0.0;
        for (v, vp, j) in &draw.second {
            l2 += ln_tilt(beta * j, r.mean(c, v) * r.mean(c, vp));
        }
        ls.push(l2);
    }
    InnerLogs { first: ln_weighted_mean(&r.weights, &lf), second: ln_weighted_mean(&r.weights, &ls) }
}

/// Exact inner expectations by the product formulas.
pub fn inner_exact(sigma: &SigmaFunction, draw: &OuterDraw, beta: f64, ctx: &SeedContext) -> Result<InnerLogs> {
    if sigma.is_opaque() {
        return Err(Error::Capability("exact inner expectations need a grid, named or gamma sigma".into()));
    }
    Ok(inner_exact_ready(&Ready::new(sigma, draw, ctx)?, draw, beta))
}

/// Inner expectations by direct simulation of `(U, X, X')`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerMc {
    pub first: f64,
    pub first_se: f64,
    pub second: f64,
    pub second_se: f64,
}

fn inner_mc_ready(r: &Ready, draw: &OuterDraw, beta: f64, n: usize, ctx: &SeedContext) -> Result<InnerMc> {
    let mut rng = ctx.rng();
    let mut f = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut h1 = 0.0;
        for (v, j) in &draw.first {
            h1 += j * r.eval(u, v, rng.random())?;
        }
        let mut h2 = 0.0;
        for (v, vp, j) in &draw.second {
            h2 += j * r.eval(u, v, rng.random())? * r.eval(u, vp, rng.random())?;
        }
        f.push((beta * h1).cosh());
        s.push((beta * h2).exp());
    }
    let (first, first_se) = mean_se(&f);
    let (second, second_se) = mean_se(&s);
    Ok(InnerMc { first, first_se, second, second_se })
}

pub fn inner_mc(
    sigma: &SigmaFunction,
    draw: &OuterDraw,
    beta: f64,
    inner_samples: usize,
    ctx: &SeedContext,
) -> Result<InnerMc> {
    let r = Ready::new(sigma, draw, ctx)?;
    inner_mc_ready(&r, draw, beta, inner_samples, &ctx.substream("inner").index(draw.index))
}

const MC_BIAS_WARNING: &str =
    "inner Monte Carlo: the log of an inner mean is biased by O(1/inner_samples)";

fn finish(terms: Vec<(f64, f64)>, warnings: Vec<String>) -> PEstimate {
    let t1: Vec<f64> = terms.iter().map(|t| t.0).collect();
    let t2: Vec<f64> = terms.iter().map(|t| t.1).collect();
    let d: Vec<f64> = terms.iter().map(|t| t.0 - t.1).collect();
    let (first, first_se) = mean_se(&t1);
    let (second, second_se) = mean_se(&t2);
    let (diff, std_error) = mean_se(&d);
    let log2 = std::f64::consts::LN_2;
    PEstimate {
        value: log2 + diff,
        std_error: if terms.len() < 2 { 0.0 } else { std_error },
        log2,
        first,
        first_se,
        second,
        second_se,
        outer_samples: terms.len(),
        warnings,
    }
}

/// Estimates `P(σ)` by outer Monte Carlo with exact or simulated inner
/// expectations.
pub fn evaluate_p(sigma: &SigmaFunction, cfg: &PEvalConfig, ctx: &SeedContext) -> Result<PEstimate> {
    cfg.validate()?;
    if cfg.inner == InnerMode::ExactGrid && sigma.is_opaque() {
        return Err(Error::Capability(
            "an opaque sigma cannot be evaluated in exact-grid mode; use the mc inner mode".into(),
        ));
    }
    let sampler = OuterSampler::new(cfg)?;
    let inner_ctx = ctx.substream("inner");
    let terms = for_each_outer(cfg.outer_samples, ctx, |i, rng| {
        let draw = sampler.draw(i, rng);
        let r = Ready::new(sigma, &draw, ctx)?;
        match cfg.inner {
            InnerMode::ExactGrid => {
                let l = inner_exact_ready(&r, &draw, cfg.beta);
                Ok((l.first, l.second))
            }
            InnerMode::Mc { inner_samples } => {
                let m = inner_mc_ready(&r, &draw, cfg.beta, inner_samples, &inner_ctx.index(i))?;
                Ok((m.first.ln(), m.second.ln()))
            }
        }
    })?;
    let warnings = match cfg.inner {
        InnerMode::Mc { .. } => vec![MC_BIAS_WARNING.to_string()],
        InnerMode::ExactGrid => vec![],
    };
    Ok(finish(terms, warnings))
}

/// `ln(f₊ e^a + f₋ e^{-a})` with `f₊ + f₋ = 1`; 0 when `a = 0`.
#[inline]
fn ln_two_point(a: f64, f_plus: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    let (hi, lo) = if a > 0.0 { (f_plus, 1.0 - f_plus) } else { (1.0 - f_plus, f_plus) };
    a.abs() + (hi + lo * (-2.0 * a.abs()).exp()).ln()
}

/// Estimates `P` in its directing-measure form: per atom, the sums over sign
/// patterns `ε` collapse to products of two-point averages
/// `f(V_i, {+1}) e^{±a} + f(V_i, {-1}) e^{∓a}`.
pub fn evaluate_p_gamma(gamma: &DirectingRandomMeasure, cfg: &PEvalConfig, ctx: &SeedContext) -> Result<PEstimate> {
    cfg.validate()?;
    if cfg.inner != InnerMode::ExactGrid {
        return validation("the gamma form is always evaluated exactly");
    }
    let sampler = OuterSampler::new(cfg)?;
    let beta = cfg.beta;
    let terms = for_each_outer(cfg.outer_samples, ctx, |i, rng| {
        let draw = sampler.draw(i, rng);
        let g = gamma.realize(&gamma_context(ctx, i))?;
        if g.atoms.iter().any(|a| !a.is_spin()) {
            return validation("directing measure atoms must be {-1, +1} kernels");
        }
        let mut lf = Vec::with_capacity(g.atoms.len());
        let mut ls = Vec::with_capacity(g.atoms.len());
        for atom in &g.atoms {
            let (mut plus, mut minus) = (0.0, 0.0);
            for (v, j) in &draw.first {
                let p = atom.p_plus(v);
                plus += ln_two_point(beta * j, p);
                minus += ln_two_point(-beta * j, p);
            }
            lf.push(ln_half_sum(plus, minus));
            let mut l2 = 0.0;
            for (v, vp, j) in &draw.second {
                let (p, q) = (atom.p_plus(v), atom.p_plus(vp));
                // P(ε ε' = +1)
                l2 += ln_two_point(beta * j, p * q + (1.0 - p) * (1.0 - q));
            }
            ls.push(l2);
        }
        Ok((ln_weighted_mean(&g.weights, &lf), ln_weighted_mean(&g.weights, &ls)))
    })?;
    Ok(finish(terms, vec![]))
}

/// Parametric families for minimization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    RsTilt,
    RsField,
    RsbField,
}

impl Family {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rs_tilt" => Ok(Family::RsTilt),
            "rs_field" => Ok(Family::RsField),
            "rsb_field" => Ok(Family::RsbField),
            _ => validation(format!("unknown family '{s}'")),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Family::RsTilt => 1,
            Family::RsField => 2,
            Family::RsbField => 3,
        }
    }

    pub fn default_bounds(&self) -> Vec<(f64, f64)> {
        vec![(-3.0, 3.0); self.dim()]
    }

    pub fn sigma(&self, p: &[f64]) -> SigmaFunction {
        SigmaFunction::Named(match self {
            Family::RsTilt => NamedSigma::RsTilt { h: p[0] },
            Family::RsField => NamedSigma::RsField { a: p[0], b: p[1] },
            Family::RsbField => NamedSigma::RsbField { a: p[0], b: p[1], c: p[2] },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizeResult {
    pub family: Family,
    pub params: Vec<f64>,
    pub estimate: PEstimate,
    pub evaluations: usize,
    /// Incumbent value after each evaluation.
    pub incumbent_trace: Vec<f64>,
}

struct Objective<'a> {
    family: Family,
    bounds: &'a [(f64, f64)],
    cfg: &'a PEvalConfig,
    ctx: &'a SeedContext,
    budget: usize,
    log: &'a RefCell<Log>,
}

#[derive(Default)]
struct Log {
    evaluations: usize,
    best: Option<(Vec<f64>, PEstimate)>,
    trace: Vec<f64>,
    error: Option<Error>,
}

impl Objective<'_> {
    fn project(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(self.bounds).map(|(x, (lo, hi))| x.clamp(*lo, *hi)).collect()
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let mut log = self.log.borrow_mut();
        if log.evaluations >= self.budget || log.error.is_some() {
            return Ok(f64::INFINITY);
        }
        let q = self.project(p);
        // common random numbers: every candidate sees the same context
        let est = match evaluate_p(&self.family.sigma(&q), self.cfg, self.ctx) {
            Ok(e) => e,
            Err(e) => {
                log.error = Some(e);
                return Ok(f64::INFINITY);
            }
        };
        log.evaluations += 1;
        let v = est.value;
        if log.best.as_ref().is_none_or(|(_, b)| v < b.value) {
            log.best = Some((q, est));
        }
        let inc = log.best.as_ref().map(|b| b.1.value).unwrap_or(v);
        log.trace.push(inc);
        Ok(v)
    }
}

/// Nelder-Mead over a box with common random numbers across candidates.
///
/// The result bounds the infimum over the family from above up to Monte
/// Carlo error; it is not a global optimum.
pub fn minimize_p(
    family: Family,
    bounds: &[(f64, f64)],
    cfg: &PEvalConfig,
    budget: usize,
    ctx: &SeedContext,
) -> Result<MinimizeResult> {
    let d = family.dim();
    if bounds.len() != d {
        return validation(format!("{family:?} needs {d} bounds"));
    }
    if bounds.iter().any(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
        return validation("bounds must be finite with lo <= hi");
    }
    if budget < d + 2 {
        return validation(format!("budget {budget} is below dimension + 2 = {}", d + 2));
    }
    cfg.validate()?;
    let center: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    let mut simplex = vec![center.clone()];
    for j in 0..d {
        let mut p = center.clone();
        let (lo, hi) = bounds[j];
        p[j] += 0.25 * (hi - lo);
        if hi == lo {
            p[j] += 1e-3;
        }
        simplex.push(p);
    }
    let log = RefCell::new(Log::default());
    let obj = Objective { family, bounds, cfg, ctx, budget, log: &log };
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(1e-10)
        .map_err(|e| Error::Validation(e.to_string()))?;
    Executor::new(obj, solver)
        .configure(|s| s.max_iters(budget as u64))
        .run()
        .map_err(|e| Error::Validation(format!("minimizer failed: {e}")))?;
    let log = log.into_inner();
    if let Some(e) = log.error {
        return Err(e);
    }
    let (params, estimate) = log.best.expect("at least one evaluation");
    Ok(MinimizeResult { family, params, estimate, evaluations: log.evaluations, incumbent_trace: log.trace })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub n: usize,
    pub f_hat: f64,
    pub f_se: f64,
    pub gap: f64,
    pub gap_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub alpha: f64,
    pub beta: f64,
    pub instances: usize,
    pub p_star: f64,
    pub p_star_se: f64,
    pub best: MinimizeResult,
    pub rows: Vec<CompareRow>,
}

/// Finite-`N` free energies against the best value found in a family.
///
/// Tolerances on the gap are empirical; no finite-`N` rate is assumed.
#[allow(clippy::too_many_arguments)]
pub fn compare_to_finite_n(
    ns: &[usize],
    instances: usize,
    family: Family,
    bounds: &[(f64, f64)],
    cfg: &PEvalConfig,
    budget: usize,
    ctx: &SeedContext,
) -> Result<CompareReport> {
    if let Some(n) = ns.iter().find(|&&n| n > MAX_EXACT_N || n == 0) {
        return validation(format!("N = {n} outside 1..={MAX_EXACT_N}"));
    }
    let best = minimize_p(family, bounds, cfg, budget, &ctx.substream("P"))?;
    let (p_star, p_star_se) = (best.estimate.value, best.estimate.std_error);
    let rows = ns
        .iter()
        .map(|&n| {
            let f = free_energy_mc(n, cfg.alpha, cfg.beta, instances, &cfg.coupling, &ctx.substream("F").index(n as u64))?;
            Ok(CompareRow {
                n,
                f_hat: f.mean,
                f_se: f.std_error,
                gap: f.mean - p_star,
                gap_se: (f.std_error.powi(2) + p_star_se.powi(2)).sqrt(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(CompareReport { alpha: cfg.alpha, beta: cfg.beta, instances, p_star, p_star_se, best, rows })
}
