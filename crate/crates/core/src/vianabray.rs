//! The Viana-Bray dilute spin glass.
//!
//! `H_N(σ) = Σ_k J_k σ_{i_k} σ_{j_k}` with `M ~ Poisson(αN)` couplings whose
//! endpoints are drawn uniformly and independently from `[N]` (self-loops and
//! repeated pairs are kept). Partition functions are computed by Gray-code
//! enumeration with O(degree) energy updates per step.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::rng::SeedContext;
use crate::stats::mean_se;

/// Largest `N` handled by exact enumeration.
pub const MAX_EXACT_N: usize = 24;

/// Symmetric law of the coupling constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingLaw {
    /// Uniform on `{-1, +1}`.
    Pm1,
    /// Finite law; must be symmetric under `J ↦ -J`.
    Finite { values: Vec<f64>, probs: Vec<f64> },
}

impl CouplingLaw {
    pub fn validate(&self) -> Result<()> {
        if let CouplingLaw::Finite { values, probs } = self {
            if values.is_empty() || values.len() != probs.len() {
                return validation("coupling law needs one probability per value");
            }
            if probs.iter().any(|&p| !(p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return validation("coupling probabilities must be non-negative and sum to 1");
            }
            for (v, p) in values.iter().zip(probs) {
                let mirror: f64 = values
                    .iter()
                    .zip(probs)
                    .filter(|(w, _)| (**w + v).abs() <= 1e-12)
                    .map(|(_, q)| q)
                    .sum();
                let same: f64 = values
                    .iter()
                    .zip(probs)
                    .filter(|(w, _)| (**w - v).abs() <= 1e-12)
                    .map(|(_, q)| q)
                    .sum();
                if (mirror - same).abs() > 1e-12 {
                    return validation(format!("coupling law is not symmetric at J = {v} (p = {p})"));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            CouplingLaw::Pm1 => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            CouplingLaw::Finite { values, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                values[probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)]
            }
        }
    }

    /// Support with probabilities.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match self {
            CouplingLaw::Pm1 => vec![(-1.0, 0.5), (1.0, 0.5)],
            CouplingLaw::Finite { values, probs } => {
                values.iter().copied().zip(probs.iter().copied()).collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    /// 1-based endpoints.
    pub i: u32,
    pub j: u32,
    #[serde(rename = "J")]
    pub value: f64,
}

/// One quenched Hamiltonian. The coupling order is the generation order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VbInstance {
    pub n: usize,
    pub alpha: f64,
    pub couplings: Vec<Coupling>,
}

impl VbInstance {
    pub fn new(n: usize, alpha: f64, couplings: Vec<Coupling>) -> Result<Self> {
        if n == 0 {
            return validation("N must be at least 1");
        }
        if let Some(c) = couplings
            .iter()
            .find(|c| c.i == 0 || c.j == 0 || c.i as usize > n || c.j as usize > n)
        {
            return Err(Error::Range(format!("coupling ({}, {}) outside [{n}]", c.i, c.j)));
        }
        Ok(Self { n, alpha, couplings })
    }

    pub fn m(&self) -> usize {
        self.couplings.len()
    }

    /// Per-spin neighbour lists `(other, J)` without self-loops, and the
    /// constant energy of the self-loops.
    fn adjacency(&self) -> (Vec<Vec<(usize, f64)>>, f64) {
        let mut adj = vec![Vec::new(); self.n];
        let mut constant = 0.0;
        for c in &self.couplings {
            let (a, b) = (c.i as usize - 1, c.j as usize - 1);
            if a == b {
                constant += c.value;
            } else {
                adj[a].push((b, c.value));
                adj[b].push((a, c.value));
            }
        }
        (adj, constant)
    }
}

pub fn sample_instance(n: usize, alpha: f64, law: &CouplingLaw, ctx: &SeedContext) -> Result<VbInstance> {
    if n == 0 {
        return validation("N must be at least 1");
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return validation(format!("alpha must be a finite non-negative number, got {alpha}"));
    }
    law.validate()?;
    let mut rng = ctx.rng();
    let mean = alpha * n as f64;
    let m = if mean > 0.0 {
        Poisson::new(mean)
            .map_err(|e| Error::Validation(e.to_string()))?
            .sample(&mut rng) as usize
    } else {
        0
    };
    let couplings = (0..m)
        .map(|_| {
            let i = rng.random_range(1..=n as u32);
            let j = rng.random_range(1..=n as u32);
            Coupling { i, j, value: law.sample(&mut rng) }
        })
        .collect();
    VbInstance::new(n, alpha, couplings)
}

/// Exact energy of a `±1` configuration.
pub fn energy(inst: &VbInstance, sigma: &[i8]) -> f64 {
    inst.couplings
        .iter()
        .map(|c| c.value * (sigma[c.i as usize - 1] * sigma[c.j as usize - 1]) as f64)
        .sum()
}

/// Spin `n` of configuration bitmask `s` (bit set means `-1`).
#[inline]
pub fn spin_of(s: u32, n: usize) -> i8 {
    if s >> n & 1 == 1 {
        -1
    } else {
        1
    }
}

pub fn config_to_spins(s: u32, n: usize) -> Vec<i8> {
    (0..n).map(|k| spin_of(s, k)).collect()
}

/// Walks the `2^free` configurations of the first `free` spins in Gray-code
/// order (remaining spins fixed at `+1`), calling `visit(config, energy)`.
fn gray_walk(inst: &VbInstance, free: usize, mut visit: impl FnMut(u32, f64)) {
    let (adj, constant) = inst.adjacency();
    let mut spins = vec![1i8; inst.n];
    let mut h: f64 = constant
        + inst
            .couplings
            .iter()
            .filter(|c| c.i != c.j)
            .map(|c| c.value)
            .sum::<f64>();
    let mut s = 0u32;
    visit(s, h);
    for t in 1u64..(1u64 << free) {
        let k = t.trailing_zeros() as usize;
        let field: f64 = adj[k].iter().map(|&(o, j)| j * spins[o] as f64).sum();
        h -= 2.0 * spins[k] as f64 * field;
        spins[k] = -spins[k];
        s ^= 1 << k;
        visit(s, h);
    }
}

/// Energies of all `2^N` configurations, indexed by bitmask.
pub fn energy_table(inst: &VbInstance) -> Result<Vec<f64>> {
    check_exact(inst.n)?;
    let mut table = vec![0.0; 1usize << inst.n];
    gray_walk(inst, inst.n, |s, h| table[s as usize] = h);
    Ok(table)
}

fn check_exact(n: usize) -> Result<()> {
    if n > MAX_EXACT_N {
        return Err(Error::Capability(format!(
            "exact enumeration supports N <= {MAX_EXACT_N}, got {n}; Monte Carlo over larger N is not provided"
        )));
    }
    Ok(())
}

/// Neumaier-compensated sum of `exp(-β (H - ref))` with the reference
/// tracking the lowest energy seen.
struct LogSumExp {
    beta: f64,
    reference: Option<f64>,
    sum: f64,
    comp: f64,
}

impl LogSumExp {
    fn new(beta: f64) -> Self {
        Self { beta, reference: None, sum: 0.0, comp: 0.0 }
    }

    #[inline]
    fn add_raw(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn push(&mut self, h: f64) {
        match self.reference {
            None => {
                self.reference = Some(h);
                self.add_raw(1.0);
            }
            Some(r) if h < r && self.beta > 0.0 => {
                let scale = (-self.beta * (r - h)).exp();
                self.sum *= scale;
                self.comp *= scale;
                self.reference = Some(h);
                self.add_raw(1.0);
            }
            Some(r) => self.add_raw((-self.beta * (h - r)).exp()),
        }
    }

    /// `(ln Σ, reference)` with `Σ = sum · exp(-β ref)`.
    fn finish(&self) -> (f64, f64) {
        ((self.sum + self.comp).ln(), self.reference.unwrap_or(0.0))
    }
}

/// `log Z_N(β)` by exact enumeration.
///
/// `H(-σ) = H(σ)`, so only configurations with spin `N` fixed to `+1` are
/// visited and the sum is doubled.
pub fn log_partition_exact(inst: &VbInstance, beta: f64) -> Result<f64> {
    Ok(specific_log_partition(inst, beta)? * inst.n as f64)
}

/// `(1/N) log Z_N(β)`, exactly `log 2` when `β = 0`.
pub fn specific_log_partition(inst: &VbInstance, beta: f64) -> Result<f64> {
    check_exact(inst.n)?;
    if !(beta >= 0.0) {
        return validation("beta must be non-negative");
    }
    let free = inst.n - 1;
    let mut acc = LogSumExp::new(beta);
    gray_walk(inst, free, |_, h| acc.push(h));
    let (ln_sum, reference) = acc.finish();
    // Z = 2^N · (Σ / 2^(N-1)) · exp(-β ref) / 2^N · 2
    let ln_mean = ln_sum - free as f64 * std::f64::consts::LN_2;
    let shift = if beta == 0.0 { 0.0 } else { -beta * reference };
    Ok(std::f64::consts::LN_2 + (ln_mean + shift) / inst.n as f64)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FreeEnergyEstimate {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub instances: usize,
    pub mean: f64,
    pub std_error: f64,
    pub per_instance_log_z: Vec<f64>,
}

/// Mean and standard error of `(1/N) log Z_N(β)` over independent instances.
pub fn free_energy_mc(
    n: usize,
    alpha: f64,
    beta: f64,
    instances: usize,
    law: &CouplingLaw,
    ctx: &SeedContext,
) -> Result<FreeEnergyEstimate> {
    check_exact(n)?;
    if instances < 2 {
        return validation("at least two instances are required");
    }
    let specific: Vec<f64> = (0..instances)
        .into_par_iter()
        .map(|k| {
            let inst = sample_instance(n, alpha, law, &ctx.index(k as u64))?;
            specific_log_partition(&inst, beta)
        })
        .collect::<Result<_>>()?;
    let (mean, std_error) = mean_se(&specific);
    Ok(FreeEnergyEstimate {
        n,
        alpha,
        beta,
        instances,
        mean,
        std_error,
        per_instance_log_z: specific.iter().map(|f| f * n as f64).collect(),
    })
}

/// Walker/Vose alias table over a discrete distribution.
#[derive(Clone, Debug)]
pub struct AliasTable {
    threshold: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    pub fn new(probs: &[f64]) -> Self {
        let n = probs.len();
        let mut scaled: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
        let mut alias = vec![0u32; n];
        let mut small: Vec<usize> = Vec::new();
        let mut large: Vec<usize> = Vec::new();
        for (i, &p) in scaled.iter().enumerate() {
            if p < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            alias[s] = l as u32;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        for i in small.into_iter().chain(large) {
            scaled[i] = 1.0;
        }
        Self { threshold: scaled, alias }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.threshold.len());
        if rng.random::<f64>() < self.threshold[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }
}

#[derive(Clone, Debug)]
pub enum GibbsMode {
    /// Probability of every configuration, indexed by bitmask.
    Exact(Vec<f64>),
    SamplerOnly,
}

/// The Gibbs law `exp(-β H) / Z` of one instance.
#[derive(Clone, Debug)]
pub struct GibbsDistribution {
    pub instance: VbInstance,
    pub beta: f64,
    pub log_z: Option<f64>,
    pub mode: GibbsMode,
}

impl GibbsDistribution {
    /// Exact table for `N <= 24`, sampler-only beyond.
    pub fn new(instance: VbInstance, beta: f64) -> Result<Self> {
        if !(beta >= 0.0) {
            return validation("beta must be non-negative");
        }
        if instance.n > MAX_EXACT_N {
            return Ok(Self { instance, beta, log_z: None, mode: GibbsMode::SamplerOnly });
        }
        let energies = energy_table(&instance)?;
        let hmin = energies.iter().copied().fold(f64::INFINITY, f64::min);
        let mut w: Vec<f64> = energies.iter().map(|h| (-beta * (h - hmin)).exp()).collect();
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= z);
        let log_z = z.ln() - beta * hmin;
        Ok(Self { instance, beta, log_z: Some(log_z), mode: GibbsMode::Exact(w) })
    }

    pub fn probabilities(&self) -> Result<&[f64]> {
        match &self.mode {
            GibbsMode::Exact(p) => Ok(p),
            GibbsMode::SamplerOnly => Err(Error::Capability(
                "exact probabilities unavailable for N > 24".into(),
            )),
        }
    }

    /// Exact single-site means `<σ_n>`.
    pub fn magnetizations(&self) -> Result<Vec<f64>> {
        let p = self.probabilities()?;
        let n = self.instance.n;
        let mut m = vec![0.0; n];
        for (s, &w) in p.iter().enumerate() {
            for (k, mk) in m.iter_mut().enumerate() {
                *mk += w * spin_of(s as u32, k) as f64;
            }
        }
        Ok(m)
    }

    /// Exact `E[q_12^2]` for two independent replicas, from the two-point
    /// correlations: `(1/N^2) Σ_{n,m} <σ_n σ_m>^2`.
    pub fn mean_squared_overlap(&self) -> Result<f64> {
        let p = self.probabilities()?;
        let n = self.instance.n;
        let mut corr = vec![0.0; n * n];
        for (s, &w) in p.iter().enumerate() {
            for a in 0..n {
                let sa = spin_of(s as u32, a) as f64;
                for b in 0..n {
                    corr[a * n + b] += w * sa * spin_of(s as u32, b) as f64;
                }
            }
        }
        Ok(corr.iter().map(|c| c * c).sum::<f64>() / (n * n) as f64)
    }
}

/// `r × N` matrix of replica spins `σ^l_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaMatrix {
    pub spins: Vec<Vec<i8>>,
}

impl ReplicaMatrix {
    pub fn new(spins: Vec<Vec<i8>>) -> Result<Self> {
        let n = spins.first().map_or(0, Vec::len);
        if spins.iter().any(|r| r.len() != n || r.iter().any(|&s| s != 1 && s != -1)) {
            return validation("replica rows must have equal length and entries in {-1, +1}");
        }
        Ok(Self { spins })
    }

    pub fn replicas(&self) -> usize {
        self.spins.len()
    }

    pub fn sites(&self) -> usize {
        self.spins.first().map_or(0, Vec::len)
    }

    pub fn as_f64(&self) -> Vec<Vec<f64>> {
        self.spins.iter().map(|r| r.iter().map(|&s| s as f64).collect()).collect()
    }
}

impl crate::exchtest::Observation for ReplicaMatrix {
    fn value(&self, key: &crate::exchtest::CylinderKey) -> Option<f64> {
        match key {
            crate::exchtest::CylinderKey::Cell { replica, position } => self
                .spins
                .get(*replica)?
                .get((*position as usize).checked_sub(1)?)
                .map(|&s| s as f64),
            crate::exchtest::CylinderKey::Subset(_) => None,
        }
    }
}

/// `r` i.i.d. exact draws from the Gibbs table.
pub fn gibbs_replicas(g: &GibbsDistribution, r: usize, ctx: &SeedContext) -> Result<ReplicaMatrix> {
    let p = match &g.mode {
        GibbsMode::Exact(p) => p,
        GibbsMode::SamplerOnly => {
            return Err(Error::Capability(
                "replica sampling needs the exact Gibbs table (N <= 24); MCMC is not provided".into(),
            ))
        }
    };
    let table = AliasTable::new(p);
    let mut rng = ctx.rng();
    let n = g.instance.n;
    let spins = (0..r)
        .map(|_| config_to_spins(table.sample(&mut rng) as u32, n))
        .collect();
    ReplicaMatrix::new(spins)
}

/// Fraction of sites whose replica column matches `(replica, spin)` pairs.
pub fn empirical_erm(reps: &ReplicaMatrix, cylinder: &[(usize, i8)]) -> Result<f64> {
    let c: Vec<(usize, f64)> = cylinder.iter().map(|&(l, s)| (l, s as f64)).collect();
    crate::erm::empirical_measure(&reps.as_f64(), &c)
}

/// `(1/N) Σ_n Π_{l ∈ S} σ^l_n`.
pub fn multi_overlap(reps: &ReplicaMatrix, subset: &[usize]) -> Result<f64> {
    if subset.is_empty() {
        return validation("replica subset must be non-empty");
    }
    if let Some(l) = subset.iter().find(|&&l| l >= reps.replicas()) {
        return Err(Error::Range(format!("replica index {l} out of range")));
    }
    let n = reps.sites();
    if n == 0 {
        return validation("no sites");
    }
    let total: i64 = (0..n)
        .map(|k| subset.iter().map(|&l| reps.spins[l][k] as i64).product::<i64>())
        .sum();
    Ok(total as f64 / n as f64)
}
