//! Gram matrices of exchangeable arrays and their Gaussian counterparts.
//!
//! The Hilbert space `L²([0,1))` is represented by dyadic step functions on
//! `2^m` cells, so inner products are exact finite sums.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::erm::Kernel;
use crate::error::{validation, Error, Result};
use crate::rng::SeedContext;

/// Tolerance on moment consistency `E[x²] >= E[x]²`.
const MOMENT_TOL: f64 = 1e-12;

/// Symmetric PSD matrix, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    pub n: usize,
    pub entries: Vec<f64>,
}

impl GramMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return validation(format!("expected {} entries, got {}", n * n, entries.len()));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return validation("Gram entries must be finite");
        }
        let g = Self { n, entries };
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (g.get(i, j), g.get(j, i));
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return validation(format!("matrix is not symmetric at ({i}, {j})"));
                }
            }
        }
        let min = g.min_eigenvalue();
        if min < -g.slack() {
            return validation(format!("matrix is not positive semi-definite (eigenvalue {min:e})"));
        }
        Ok(g)
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, entries: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut g = Self::zeros(n);
        for i in 0..n {
            g.entries[i * n + i] = 1.0;
        }
        g
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        Self::new(n, (0..n * n).map(|k| f(k / n, k % n)).collect())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Eigenvalue slack `1e-9 · max(1, trace / n)`.
    pub fn slack(&self) -> f64 {
        if self.n == 0 {
            return 1e-9;
        }
        1e-9 * (self.trace().abs() / self.n as f64).max(1.0)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.entries)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        SymmetricEigen::new(self.to_matrix()).eigenvalues.min()
    }

    pub fn max_abs_diff(&self, other: &GramMatrix) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `R_ij = <ξ_i, ξ_j> + δ_ij a_i` with each `ξ_i` a step function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DsDecomposition {
    pub grid_depth: u32,
    pub xi: Vec<Vec<f64>>,
    pub a: Vec<f64>,
}

impl DsDecomposition {
    pub fn new(grid_depth: u32, xi: Vec<Vec<f64>>, a: Vec<f64>) -> Result<Self> {
        let cells = 1usize << grid_depth;
        if xi.len() != a.len() {
            return validation("xi and a must have the same length");
        }
        if xi.iter().any(|x| x.len() != cells) {
            return validation(format!("each xi must have {cells} cell values"));
        }
        if a.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return validation("a must be finite and non-negative");
        }
        if xi.iter().flatten().any(|v| !v.is_finite()) {
            return validation("xi values must be finite");
        }
        Ok(Self { grid_depth, xi, a })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Grid inner product `∫ ξ_i ξ_j dt`.
    pub fn inner(&self, i: usize, j: usize) -> f64 {
        let cells = self.xi[i].len() as f64;
        self.xi[i].iter().zip(&self.xi[j]).map(|(x, y)| x * y).sum::<f64>() / cells
    }
}

/// Reads `ξ_i(t) = ∫ x λ_i(t, dx)` and `a_i = ∫ Var λ_i(t, ·) dt` off
/// real-alphabet kernels on a common grid.
pub fn decompose_from_kernels(kernels: &[Kernel]) -> Result<DsDecomposition> {
    let Some(first) = kernels.first() else {
        return DsDecomposition::new(0, vec![], vec![]);
    };
    let depth = first.grid_depth;
    if kernels.iter().any(|k| k.grid_depth != depth) {
        return validation("all kernels must share one grid depth");
    }
    let cells = first.cells();
    let mut xi = Vec::with_capacity(kernels.len());
    let mut a = Vec::with_capacity(kernels.len());
    for (i, k) in kernels.iter().enumerate() {
        let means: Vec<f64> = (0..cells).map(|c| k.mean(c)).collect();
        let mut var = 0.0;
        for (c, m) in means.iter().enumerate() {
            let v = k.second_moment(c) - m * m;
            if v < -MOMENT_TOL {
                return validation(format!("kernel {i}, cell {c}: second moment below squared mean"));
            }
            var += v;
        }
        xi.push(means);
        a.push((var / cells as f64).max(0.0));
    }
    DsDecomposition::new(depth, xi, a)
}

pub fn reconstruct(d: &DsDecomposition) -> GramMatrix {
    let n = d.len();
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let mut r = d.inner(i, j);
            if i == j {
                r += d.a[i];
            }
            entries[i * n + j] = r;
            entries[j * n + i] = r;
        }
    }
    GramMatrix { n, entries }
}

/// Centered Gaussian vectors with covariance `R = F Fᵀ`.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    factor: DMatrix<f64>,
    ctx: SeedContext,
}

/// Samples per substream in [`GaussianSampler::sample_many`].
const CHUNK: usize = 1024;

impl GaussianSampler {
    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.dim();
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        (0..n)
            .map(|i| (0..n).map(|j| self.factor[(i, j)] * z[j]).sum())
            .collect()
    }

    /// `count` draws, chunked over substreams and reduced in order.
    pub fn sample_many(&self, count: usize) -> Vec<Vec<f64>> {
        let chunks = count.div_ceil(CHUNK);
        (0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut rng = self.ctx.index(c as u64).rng();
                let take = CHUNK.min(count - c * CHUNK);
                (0..take).map(move |_| self.sample(&mut rng)).collect::<Vec<_>>()
            })
            .collect()
    }
}

/// Symmetric factor from the eigendecomposition; eigenvalues at or below the
/// slack are set to zero.
pub fn gaussian_sampler(r: &GramMatrix, ctx: &SeedContext) -> Result<GaussianSampler> {
    let n = r.n;
    if n == 0 {
        return Ok(GaussianSampler { factor: DMatrix::zeros(0, 0), ctx: ctx.clone() });
    }
    let eig = SymmetricEigen::new(r.to_matrix());
    let tol = r.slack();
    if let Some(&l) = eig.eigenvalues.iter().find(|&&l| l < -tol) {
        return Err(Error::Validation(format!("matrix is indefinite (eigenvalue {l:e})")));
    }
    let roots = eig.eigenvalues.map(|l| if l <= tol { 0.0 } else { l.sqrt() });
    let factor = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    Ok(GaussianSampler { factor, ctx: ctx.clone() })
}

/// Entrywise second moments `(1/S) Σ_s x_i x_j`, without centering.
pub fn estimate_gram(samples: &[Vec<f64>]) -> Result<GramMatrix> {
    if samples.len() < 2 {
        return validation("at least two samples are required");
    }
    let n = samples[0].len();
    if samples.iter().any(|s| s.len() != n) {
        return validation("samples must have equal length");
    }
    let mut entries = vec![0.0; n * n];
    for s in samples {
        for i in 0..n {
            for j in i..n {
                entries[i * n + j] += s[i] * s[j];
            }
        }
    }
    let count = samples.len() as f64;
    for i in 0..n {
        for j in i..n {
            let v = entries[i * n + j] / count;
            entries[i * n + j] = v;
            entries[j * n + i] = v;
        }
    }
    Ok(GramMatrix { n, entries })
}
