//! Frequency tests of distributional invariance on finite cylinders.
//!
//! Each arm draws its own fresh samples. For every cylinder the two empirical
//! frequencies are compared with a pooled two-proportion z statistic and the
//! family is judged at level 0.01 with a Bonferroni correction over the
//! non-degenerate cylinders.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::rng::{SeedContext, SubsetKey};
use crate::skewprod::ArraySlice;
use crate::stats::z_critical;

pub const DEFAULT_LEVEL: f64 = 0.01;

/// Coordinate addressed by a cylinder constraint.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CylinderKey {
    /// Array entry at a subset of the ground set.
    Subset(SubsetKey),
    /// Entry of replica `replica` at 1-based `position`.
    Cell { replica: usize, position: u32 },
}

impl CylinderKey {
    pub fn cell(replica: usize, position: u32) -> Self {
        CylinderKey::Cell { replica, position }
    }

    fn relabel(&self, pi: &Permutation) -> Result<CylinderKey> {
        Ok(match self {
            CylinderKey::Subset(e) => CylinderKey::Subset(SubsetKey::from_unsorted(
                e.elements().iter().map(|&x| pi.apply(x)).collect(),
            )?),
            CylinderKey::Cell { replica, position } => CylinderKey::Cell {
                replica: *replica,
                position: pi.apply(*position),
            },
        })
    }
}

/// A finite cylinder: every listed coordinate takes the listed value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderSpec {
    constraints: Vec<(CylinderKey, f64)>,
}

impl CylinderSpec {
    pub fn new(constraints: Vec<(CylinderKey, f64)>) -> Result<Self> {
        let mut keys: Vec<&CylinderKey> = constraints.iter().map(|c| &c.0).collect();
        keys.sort();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return validation("cylinder constraint keys must be distinct");
        }
        Ok(Self { constraints })
    }

    pub fn constraints(&self) -> &[(CylinderKey, f64)] {
        &self.constraints
    }

    pub fn matches<O: Observation + ?Sized>(&self, obs: &O) -> bool {
        self.constraints.iter().all(|(k, v)| obs.value(k) == Some(*v))
    }

    /// The cylinder seen through the relabeling `T^π`: coordinate `e` of the
    /// relabeled sample is coordinate `π(e)` of the original.
    pub fn relabeled(&self, pi: &Permutation) -> Result<CylinderSpec> {
        let constraints = self
            .constraints
            .iter()
            .map(|(k, v)| Ok((k.relabel(pi)?, *v)))
            .collect::<Result<_>>()?;
        CylinderSpec::new(constraints)
    }
}

/// Something a cylinder can be evaluated on.
pub trait Observation {
    fn value(&self, key: &CylinderKey) -> Option<f64>;
}

impl Observation for ArraySlice {
    fn value(&self, key: &CylinderKey) -> Option<f64> {
        match key {
            CylinderKey::Subset(e) => self.values.get(e).and_then(|v| v.first().copied()),
            CylinderKey::Cell { .. } => None,
        }
    }
}

/// Replica-major matrix: `self[l][n - 1]` is replica `l` at position `n`.
impl Observation for Vec<Vec<f64>> {
    fn value(&self, key: &CylinderKey) -> Option<f64> {
        match key {
            CylinderKey::Cell { replica, position } => self
                .get(*replica)
                .and_then(|row| row.get((*position as usize).checked_sub(1)?))
                .copied(),
            CylinderKey::Subset(_) => None,
        }
    }
}

/// Replicas of `k = 1` slices.
impl Observation for Vec<ArraySlice> {
    fn value(&self, key: &CylinderKey) -> Option<f64> {
        match key {
            CylinderKey::Cell { replica, position } => self
                .get(*replica)?
                .values
                .get(&SubsetKey::singleton(*position))
                .and_then(|v| v.first().copied()),
            CylinderKey::Subset(e) => self.first()?.value(&CylinderKey::Subset(e.clone())),
        }
    }
}

/// A permutation of the positive integers with finite support.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    map: BTreeMap<u32, u32>,
}

impl Permutation {
    pub fn identity() -> Self {
        Self { map: BTreeMap::new() }
    }

    /// From explicit images: `images[j]` is the image of `j + 1`.
    pub fn from_images(images: &[u32]) -> Result<Self> {
        let mut sorted = images.to_vec();
        sorted.sort_unstable();
        if sorted.iter().enumerate().any(|(j, &x)| x != j as u32 + 1) {
            return validation(format!("{images:?} is not a permutation of 1..={}", images.len()));
        }
        Ok(Self {
            map: images
                .iter()
                .enumerate()
                .map(|(j, &x)| (j as u32 + 1, x))
                .filter(|(a, b)| a != b)
                .collect(),
        })
    }

    pub fn transposition(a: u32, b: u32) -> Result<Self> {
        if a == 0 || b == 0 {
            return validation("permutations act on positive integers");
        }
        let mut map = BTreeMap::new();
        if a != b {
            map.insert(a, b);
            map.insert(b, a);
        }
        Ok(Self { map })
    }

    pub fn apply(&self, i: u32) -> u32 {
        self.map.get(&i).copied().unwrap_or(i)
    }

    /// Largest moved point, 0 for the identity.
    pub fn support_max(&self) -> u32 {
        self.map.keys().next_back().copied().unwrap_or(0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CylinderResult {
    pub freq_a: f64,
    pub freq_b: f64,
    pub z: f64,
    /// Probability 0 or 1 in both arms; excluded from the correction count.
    pub degenerate: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: String,
    pub samples: usize,
    pub level: f64,
    pub corrected_level: f64,
    pub threshold: f64,
    pub cylinders: Vec<CylinderResult>,
    pub pass: bool,
}

impl TestReport {
    pub fn max_abs_z(&self) -> f64 {
        self.cylinders
            .iter()
            .filter(|c| !c.degenerate)
            .map(|c| c.z.abs())
            .fold(0.0, f64::max)
    }
}

fn frequencies<O, F>(sampler: &F, cylinders: &[CylinderSpec], samples: usize, ctx: &SeedContext) -> Vec<f64>
where
    O: Observation,
    F: Fn(&SeedContext) -> O + Sync,
{
    let counts = (0..samples)
        .into_par_iter()
        .map(|s| {
            let obs = sampler(&ctx.index(s as u64));
            cylinders.iter().map(|c| c.matches(&obs) as u64).collect::<Vec<u64>>()
        })
        .reduce(
            || vec![0; cylinders.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    counts.into_iter().map(|c| c as f64 / samples as f64).collect()
}

fn compare(statistic: &str, samples: usize, pa: Vec<f64>, pb: Vec<f64>, level: f64) -> TestReport {
    let n = samples as f64;
    let cylinders: Vec<CylinderResult> = pa
        .into_iter()
        .zip(pb)
        .map(|(a, b)| {
            let pooled = (a + b) / 2.0;
            let degenerate = pooled == 0.0 || pooled == 1.0;
            let z = if degenerate {
                0.0
            } else {
                (a - b) / (pooled * (1.0 - pooled) * 2.0 / n).sqrt()
            };
            CylinderResult { freq_a: a, freq_b: b, z, degenerate }
        })
        .collect();
    let m = cylinders.iter().filter(|c| !c.degenerate).count().max(1);
    let corrected_level = level / m as f64;
    let threshold = z_critical(corrected_level);
    let pass = cylinders.iter().all(|c| c.z.abs() < threshold);
    TestReport {
        statistic: statistic.into(),
        samples,
        level,
        corrected_level,
        threshold,
        cylinders,
        pass,
    }
}

/// Compares cylinder frequencies of the sampler against its `π`-relabeled
/// version, each from independent fresh samples.
pub fn permutation_invariance_test<O, F>(
    sampler: F,
    pi: &Permutation,
    cylinders: &[CylinderSpec],
    samples: usize,
    ctx: &SeedContext,
) -> Result<TestReport>
where
    O: Observation,
    F: Fn(&SeedContext) -> O + Sync,
{
    if samples < 100 {
        return validation("at least 100 samples per arm are required");
    }
    let relabeled: Vec<CylinderSpec> =
        cylinders.iter().map(|c| c.relabeled(pi)).collect::<Result<_>>()?;
    let pa = frequencies(&sampler, cylinders, samples, &ctx.substream("arm-a"));
    let pb = frequencies(&sampler, &relabeled, samples, &ctx.substream("arm-b"));
    Ok(compare("two-proportion z, permutation invariance", samples, pa, pb, DEFAULT_LEVEL))
}

/// Compares cylinder frequencies of two samplers.
pub fn two_sample_cylinder_test<O1, O2, F1, F2>(
    sampler_a: F1,
    sampler_b: F2,
    cylinders: &[CylinderSpec],
    samples: usize,
    ctx: &SeedContext,
) -> Result<TestReport>
where
    O1: Observation,
    O2: Observation,
    F1: Fn(&SeedContext) -> O1 + Sync,
    F2: Fn(&SeedContext) -> O2 + Sync,
{
    if samples < 100 {
        return validation("at least 100 samples per arm are required");
    }
    let pa = frequencies(&sampler_a, cylinders, samples, &ctx.substream("arm-a"));
    let pb = frequencies(&sampler_b, cylinders, samples, &ctx.substream("arm-b"));
    Ok(compare("two-proportion z, two samples", samples, pa, pb, DEFAULT_LEVEL))
}

/// Every single-coordinate and pairwise cylinder over `keys` with values
/// drawn from `alphabet`, truncated to `limit` cylinders.
pub fn standard_cylinders(keys: &[CylinderKey], alphabet: &[f64], limit: usize) -> Vec<CylinderSpec> {
    let mut out = Vec::new();
    for k in keys {
        for &a in alphabet.iter().skip(1) {
            out.push(CylinderSpec::new(vec![(k.clone(), a)]).expect("single key"));
        }
    }
    for (i, k1) in keys.iter().enumerate() {
        for k2 in &keys[i + 1..] {
            for &a in alphabet {
                for &b in alphabet {
                    out.push(CylinderSpec::new(vec![(k1.clone(), a), (k2.clone(), b)]).expect("distinct"));
                }
            }
        }
    }
    out.truncate(limit);
    out
}

/// Samplers used in tests and by the CLI.
pub mod samplers {
    use rand::Rng;

    use crate::erm::{draw_replicas, quench, sample_slice, TheoremADirecting};
    use crate::rng::SeedContext;
    use crate::skewprod::ArraySlice;
    use crate::vianabray::{gibbs_replicas, sample_instance, CouplingLaw, GibbsDistribution, ReplicaMatrix};

    /// `n` fair coins in `{0, 1}`, one replica.
    pub fn iid_coins(n: u32) -> impl Fn(&SeedContext) -> Vec<Vec<f64>> + Sync {
        move |ctx| {
            let mut rng = ctx.rng();
            vec![(0..n).map(|_| if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 }).collect()]
        }
    }

    /// Position 1 is a `p`-coin; the rest are fair.
    pub fn biased_first(n: u32, p: f64) -> impl Fn(&SeedContext) -> Vec<Vec<f64>> + Sync {
        move |ctx| {
            let mut rng = ctx.rng();
            vec![(0..n)
                .map(|i| {
                    let q = if i == 0 { p } else { 0.5 };
                    if rng.random::<f64>() < q { 1.0 } else { 0.0 }
                })
                .collect()]
        }
    }

    pub fn bernoulli(p: f64) -> impl Fn(&SeedContext) -> Vec<Vec<f64>> + Sync {
        move |ctx| vec![vec![if ctx.rng().random::<f64>() < p { 1.0 } else { 0.0 }]]
    }

    /// One slice `X_{[n]}` of the exchangeable array.
    pub fn array(d: TheoremADirecting, n: u32) -> impl Fn(&SeedContext) -> ArraySlice + Sync {
        move |ctx| sample_slice(&d, n, ctx).expect("arity checked at construction")
    }

    /// `r` replicas from one quenched measure, freshly quenched per sample.
    pub fn erm_replicas(d: TheoremADirecting, n: u32, r: usize) -> impl Fn(&SeedContext) -> Vec<ArraySlice> + Sync {
        move |ctx| {
            let q = quench(&d, n, ctx.substream("U").hash_u64(0));
            draw_replicas(&q, r, &ctx.substream("V")).expect("replica draw")
        }
    }

    /// `r` exact Gibbs replicas of a fresh Viana-Bray instance per sample.
    pub fn vb_replicas(n: usize, alpha: f64, beta: f64, r: usize) -> impl Fn(&SeedContext) -> ReplicaMatrix + Sync {
        move |ctx| {
            let inst = sample_instance(n, alpha, &CouplingLaw::Pm1, &ctx.substream("instance")).expect("valid parameters");
            let g = GibbsDistribution::new(inst, beta).expect("valid beta");
            gibbs_replicas(&g, r, &ctx.substream("replicas")).expect("exact table")
        }
    }
}
