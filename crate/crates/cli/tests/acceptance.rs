//! Acceptance suite: one line per criterion, non-zero exit if a gating
//! criterion fails. Tolerances are fixed below.

use std::f64::consts::LN_2;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;

use exlab::cascade::{
    build_branchingale, check_branchingale, path_values, rsb_gamma, sample_cascade, weighting_to_gamma, IncrementSpec,
    LevelIncrement, TreeSpec, WeightingScheme, WeightsGen, XLaw,
};
use exlab::dovsud::{decompose_from_kernels, estimate_gram, gaussian_sampler, reconstruct, GramMatrix};
use exlab::erm::{builtins, AtomKernel, AtomicGamma, DirectingRandomMeasure, Kernel};
use exlab::exchtest::{
    permutation_invariance_test, samplers, standard_cylinders, two_sample_cylinder_test, CylinderKey, CylinderSpec,
    Permutation,
};
use exlab::parisi::{
    compare_to_finite_n, default_k_max, evaluate_p, evaluate_p_gamma, inner_exact, outer_draws, Family, NamedSigma,
    OuterDraw, PEvalConfig, SigmaFunction, SigmaGrid,
};
use exlab::rng::{SeedContext, SubsetKey, UnitPoint};
use exlab::stats::{binomial_band, mean_se, ols_slope};
use exlab::vianabray::{free_energy_mc, log_partition_exact, Coupling, CouplingLaw, VbInstance};

type Outcome = exlab::Result<(bool, String)>;

struct Criterion {
    id: u32,
    name: &'static str,
    gating: bool,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "exact collapses at beta = 0 or alpha = 0", gating: true, run: c1 },
        Criterion { id: 2, name: "closed-form free energy anchors", gating: true, run: c2 },
        Criterion { id: 3, name: "annealed bound", gating: true, run: c3 },
        Criterion { id: 4, name: "Gram round trip and CLT rate", gating: true, run: c4 },
        Criterion { id: 5, name: "exchangeability suite", gating: true, run: c5 },
        Criterion { id: 6, name: "cascade and branchingale properties", gating: true, run: c6 },
        Criterion { id: 7, name: "exact inner expectations", gating: true, run: c7 },
        Criterion { id: 8, name: "finite-N consistency (soft)", gating: false, run: c8 },
        Criterion { id: 9, name: "byte-identical CLI output across threads", gating: true, run: c9 },
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| filter.is_empty() || filter.contains(&c.id)) {
        let start = Instant::now();
        let (pass, detail) = match (c.run)() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let verdict = match (pass, c.gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (soft, reported only)",
        };
        println!(
            "criterion {}: {verdict} [{}] {detail} ({:.1}s)",
            c.id,
            c.name,
            start.elapsed().as_secs_f64()
        );
        if !pass && c.gating {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} gating criteria failed");
        std::process::exit(1);
    }
}

fn c1() -> Outcome {
    let mut bad = Vec::new();
    for seed in [0u64, 1, 12345] {
        for (n, alpha, beta) in [(1, 1.0, 0.0), (2, 2.0, 0.0), (7, 1.0, 0.0), (16, 3.0, 0.0), (5, 0.0, 1.0), (12, 0.0, 2.0)] {
            let f = free_energy_mc(n, alpha, beta, 3, &CouplingLaw::Pm1, &SeedContext::new(seed, "c1"))?;
            if f.mean != LN_2 || f.std_error != 0.0 {
                bad.push(format!("F N={n} a={alpha} b={beta} seed={seed}: {} +- {}", f.mean, f.std_error));
            }
        }
    }
    for (alpha, beta) in [(1.0, 0.0), (0.0, 1.0)] {
        let f = free_energy_mc(24, alpha, beta, 2, &CouplingLaw::Pm1, &SeedContext::new(7, "c1-24"))?;
        if f.mean != LN_2 || f.std_error != 0.0 {
            bad.push(format!("F N=24 a={alpha} b={beta}: {} +- {}", f.mean, f.std_error));
        }
    }

    let cfg = PEvalConfig::new(1.5, 0.0, 2000);
    let named = [
        NamedSigma::RsCoin,
        NamedSigma::RsConst,
        NamedSigma::RsTilt { h: 0.7 },
        NamedSigma::RsField { a: -0.3, b: 1.2 },
        NamedSigma::RsbField { a: 0.2, b: -0.8, c: 1.1 },
    ];
    for s in named {
        let e = evaluate_p(&SigmaFunction::Named(s.clone()), &cfg, &SeedContext::new(3, "c1-p"))?;
        if e.value != LN_2 || e.std_error != 0.0 {
            bad.push(format!("P {s:?}: {} +- {}", e.value, e.std_error));
        }
    }
    let ctx = SeedContext::new(3, "c1-gamma");
    let tree = TreeSpec::uniform(2, 64)?;
    let branch = build_branchingale(
        &tree,
        &IncrementSpec { root: 0.5, levels: vec![LevelIncrement::balanced(0.25), LevelIncrement::balanced(0.125)] },
        &ctx.substream("branch"),
    )?;
    let gammas = vec![
        ("fair coin", DirectingRandomMeasure::Atomic(AtomicGamma::point_mass(AtomKernel::Grid(Kernel::spin(0, &[0.5])?)))),
        (
            "weighting scheme",
            weighting_to_gamma(
                &WeightingScheme {
                    x_law: XLaw::Normal { mean: 0.3, sd: 1.0 },
                    weights: WeightsGen::PoissonDirichlet { m: 0.5, truncation: 64 },
                },
                8,
                &ctx.substream("ws"),
            )?,
        ),
        ("cascade", rsb_gamma(&sample_cascade(&tree, &[0.3, 0.7], &ctx.substream("cascade"))?, &branch)?),
    ];
    for (name, g) in &gammas {
        let e = evaluate_p_gamma(g, &PEvalConfig::new(1.5, 0.0, 300), &SeedContext::new(3, "c1-pg"))?;
        if e.value != LN_2 || e.std_error != 0.0 {
            bad.push(format!("P gamma {name}: {} +- {}", e.value, e.std_error));
        }
    }
    Ok((bad.is_empty(), if bad.is_empty() { "all estimates exactly log 2, zero spread".into() } else { bad.join("; ") }))
}

fn ln_cosh(x: f64) -> f64 {
    x.abs() + (0.5 * (1.0 + (-2.0 * x.abs()).exp())).ln()
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

/// `E log cosh(β Σ_{i ≤ K} J_i)` with `K ~ Poisson(λ)` and fair `±1` signs.
fn const_oracle(lambda: f64, beta: f64, k_max: usize) -> f64 {
    (0..=k_max)
        .map(|k| {
            let pk = (-lambda + k as f64 * lambda.ln() - ln_factorial(k)).exp();
            let inner: f64 = (0..=k)
                .map(|s| {
                    let w = (ln_factorial(k) - ln_factorial(s) - ln_factorial(k - s) - k as f64 * LN_2).exp();
                    w * ln_cosh(beta * (2.0 * s as f64 - k as f64))
                })
                .sum();
            pk * inner
        })
        .sum()
}

fn c2() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut worst = 0.0f64;
    for (n, i, j, value, beta) in [(2, 1, 2, 1.0, 0.7), (7, 3, 6, -1.0, 1.3), (13, 13, 1, 0.4, 2.0), (20, 5, 17, -0.8, 0.9)] {
        let inst = VbInstance::new(n, 1.0, vec![Coupling { i, j, value }])?;
        let exact = n as f64 * LN_2 + ln_cosh(beta * value);
        let err = (log_partition_exact(&inst, beta)? - exact).abs();
        worst = worst.max(err);
    }
    if worst > 1e-12 {
        ok = false;
    }
    notes.push(format!("single coupling max err {worst:.1e}"));

    let (alpha, beta) = (1.0, 1.0);
    let cfg = PEvalConfig::new(alpha, beta, 100_000);
    let coin = evaluate_p(&SigmaFunction::Named(NamedSigma::RsCoin), &cfg, &SeedContext::new(11, "c2-coin"))?;
    let coin_oracle = LN_2 + alpha * ln_cosh(beta);
    let coin_z = (coin.value - coin_oracle) / coin.std_error;
    let cst = evaluate_p(&SigmaFunction::Named(NamedSigma::RsConst), &cfg, &SeedContext::new(11, "c2-const"))?;
    let cst_oracle = LN_2 + const_oracle(2.0 * alpha, beta, default_k_max(alpha));
    let cst_z = (cst.value - cst_oracle) / cst.std_error;
    ok &= coin_z.abs() <= 3.0 && cst_z.abs() <= 3.0;
    notes.push(format!(
        "rs_coin {:.5}+-{:.5} vs {coin_oracle:.5} (z {coin_z:.2}); rs_const {:.5}+-{:.5} vs {cst_oracle:.5} (z {cst_z:.2})",
        coin.value, coin.std_error, cst.value, cst.std_error
    ));
    Ok((ok, notes.join("; ")))
}

fn c3() -> Outcome {
    let grid = [0.25, 0.5, 1.0];
    let rows: Vec<(f64, f64, f64, f64, f64)> = grid
        .iter()
        .flat_map(|&a| grid.iter().map(move |&b| (a, b)))
        .map(|(a, b)| {
            let f = free_energy_mc(16, a, b, 200, &CouplingLaw::Pm1, &SeedContext::new(5, "c3").index((a * 100.0 + b * 10.0) as u64))?;
            Ok((a, b, f.mean, f.std_error, LN_2 + a * (b.cosh() - 1.0)))
        })
        .collect::<exlab::Result<_>>()?;
    let violations: Vec<String> = rows
        .iter()
        .filter(|r| r.2 > r.4 + 3.0 * r.3)
        .map(|r| format!("(a={}, b={}) F={:.4}+-{:.4} > {:.4}", r.0, r.1, r.2, r.3, r.4))
        .collect();
    let slack = rows.iter().map(|r| r.4 - r.2).fold(f64::INFINITY, f64::min);
    Ok((
        violations.is_empty(),
        if violations.is_empty() {
            format!("9/9 points below the bound, smallest margin {slack:.4}")
        } else {
            violations.join("; ")
        },
    ))
}

/// `∫ x_i x_j dμ` by summing over cells and alphabet letters.
fn covariance_oracle(kernels: &[Kernel]) -> GramMatrix {
    let n = kernels.len();
    let cells = kernels[0].cells();
    let mut r = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (ki, kj) = (&kernels[i], &kernels[j]);
            let mut s = 0.0;
            for c in 0..cells {
                if i == j {
                    for (x, p) in ki.alphabet.iter().zip(&ki.table[c]) {
                        s += x * x * p;
                    }
                } else {
                    for (x, p) in ki.alphabet.iter().zip(&ki.table[c]) {
                        for (y, q) in kj.alphabet.iter().zip(&kj.table[c]) {
                            s += x * y * p * q;
                        }
                    }
                }
            }
            r[i * n + j] = s / cells as f64;
        }
    }
    GramMatrix { n, entries: r }
}

fn random_kernel(rng: &mut impl Rng, depth: u32) -> exlab::Result<Kernel> {
    let table = (0..1usize << depth)
        .map(|_| {
            let w: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 0.05).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect()
        })
        .collect();
    Kernel::new(vec![-1.0, 0.5, 2.0], depth, table)
}

fn c4() -> Outcome {
    let mut rng = std_rng(41);
    let atoms = [random_kernel(&mut rng, 8)?, random_kernel(&mut rng, 8)?];
    // indices draw their kernel from γ = 0.4 δ_0 + 0.6 δ_1
    let kernels: Vec<Kernel> = (0..6).map(|_| atoms[(rng.random::<f64>() >= 0.4) as usize].clone()).collect();
    let gram = reconstruct(&decompose_from_kernels(&kernels)?);
    let err = gram.max_abs_diff(&covariance_oracle(&kernels));

    let sizes = [1_000usize, 3_000, 10_000, 30_000, 100_000];
    let reps = 12;
    let base = SeedContext::new(41, "c4-clt");
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &s in &sizes {
        let sq: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let g = gaussian_sampler(&gram, &base.index(s as u64).index(r))?;
                let est = estimate_gram(&g.sample_many(s))?;
                Ok(est.entries.iter().zip(&gram.entries).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            })
            .collect::<exlab::Result<_>>()?;
        xs.push((s as f64).ln());
        ys.push((sq.iter().sum::<f64>() / reps as f64).sqrt().ln());
    }
    let slope = ols_slope(&xs, &ys);
    let ok = err <= 1e-6 && (slope + 0.5).abs() <= 0.1;
    Ok((ok, format!("round-trip max err {err:.1e} (tol 1e-6); log-log slope {slope:.3} (target -0.5 +- 0.1)")))
}

fn std_rng(seed: u64) -> rand::rngs::StdRng {
    rand::rngs::StdRng::seed_from_u64(seed)
}

fn cells(r: usize, n: u32) -> Vec<CylinderKey> {
    (0..r).flat_map(|l| (1..=n).map(move |i| CylinderKey::cell(l, i))).collect()
}

fn rejections<F>(reps: u64, test: F) -> exlab::Result<u64>
where
    F: Fn(&SeedContext) -> exlab::Result<bool> + Sync,
{
    let base = SeedContext::new(2024, "c5");
    let passes: Vec<bool> = (0..reps).into_par_iter().map(|r| test(&base.index(r))).collect::<exlab::Result<_>>()?;
    Ok(passes.iter().filter(|p| !**p).count() as u64)
}

fn c5() -> Outcome {
    const REPS: u64 = 200;
    const SAMPLES: usize = 400;
    let (lo, hi) = binomial_band(REPS, 0.01, 0.99);
    let n = 4;
    let pi = Permutation::transposition(1, 3)?;
    let kernel = Kernel::spin_from_mean_fn(4, |t| 2.0 * t - 1.0)?;
    let pairs: Vec<CylinderKey> = SubsetKey::all_up_to(n, 2)
        .into_iter()
        .filter(|e| e.len() == 2)
        .map(CylinderKey::Subset)
        .collect();
    let coin_cyl = standard_cylinders(&cells(1, n), &[0.0, 1.0], 64);
    let spin_cyl = standard_cylinders(&cells(2, n), &[-1.0, 1.0], 64);
    let pair_cyl = standard_cylinders(&pairs, &[0.0, 1.0], 64);

    let mut counts = Vec::new();
    counts.push((
        "iid",
        rejections(REPS, |c| Ok(permutation_invariance_test(samplers::iid_coins(n), &pi, &coin_cyl, SAMPLES, c)?.pass))?,
    ));
    counts.push((
        "erpm",
        rejections(REPS, |c| {
            let d = builtins::erpm(kernel.clone())?;
            Ok(permutation_invariance_test(samplers::erm_replicas(d, n, 2), &pi, &spin_cyl, SAMPLES, c)?.pass)
        })?,
    ));
    counts.push((
        "bipartition",
        rejections(REPS, |c| {
            Ok(permutation_invariance_test(samplers::array(builtins::bipartition(), n), &pi, &pair_cyl, SAMPLES, c)?.pass)
        })?,
    ));
    counts.push((
        "vb",
        rejections(REPS, |c| {
            Ok(permutation_invariance_test(samplers::vb_replicas(n as usize, 1.0, 1.0, 2), &pi, &spin_cyl, SAMPLES, c)?.pass)
        })?,
    ));
    let biased = rejections(REPS, |c| {
        Ok(permutation_invariance_test(samplers::biased_first(n, 0.8), &pi, &coin_cyl, SAMPLES, c)?.pass)
    })?;
    let power = biased as f64 / REPS as f64;
    let ok = counts.iter().all(|(_, k)| (lo..=hi).contains(k)) && power >= 0.99;
    let detail = counts.iter().map(|(s, k)| format!("{s} {k}/{REPS}")).collect::<Vec<_>>().join(", ");
    Ok((ok, format!("rejections {detail} (band [{lo}, {hi}]); biased power {power:.3} (>= 0.99)")))
}

/// `Σ w_i²` for GEM(m) stick-breaking, stopping once the unbroken mass is
/// below `1e-2`.
fn gem_sum_sq(m: f64, rng: &mut impl Rng) -> f64 {
    let mut rest = 1.0;
    let mut s = 0.0;
    let mut i = 1.0;
    while rest > 1e-2 {
        let v = Beta::new(1.0 - m, i * m).unwrap().sample(rng);
        s += (rest * v).powi(2);
        rest *= 1.0 - v;
        i += 1.0;
    }
    s
}

fn c6() -> Outcome {
    const DRAWS: u64 = 1000;
    const B: usize = 1 << 15;
    let tree = TreeSpec::uniform(1, B)?;
    let mut ok = true;
    let mut notes = Vec::new();
    let mut worst_sum = 0.0f64;
    for m in [0.3, 0.5, 0.7] {
        let base = SeedContext::new(6, "c6").index((m * 10.0) as u64);
        let draws: Vec<(f64, f64)> = (0..DRAWS)
            .into_par_iter()
            .map(|d| {
                let c = sample_cascade(&tree, &[m], &base.index(d))?;
                Ok((c.leaf_weights.iter().sum::<f64>(), c.leaf_weights.iter().map(|w| w * w).sum::<f64>()))
            })
            .collect::<exlab::Result<_>>()?;
        worst_sum = draws.iter().map(|d| (d.0 - 1.0).abs()).fold(worst_sum, f64::max);
        let sq: Vec<f64> = draws.iter().map(|d| d.1).collect();
        let gem: Vec<f64> = (0..DRAWS)
            .into_par_iter()
            .map(|d| gem_sum_sq(m, &mut std_rng(1_000_000 * (m * 10.0) as u64 + d)))
            .collect();
        let (a, sa) = mean_se(&sq);
        let (g, sg) = mean_se(&gem);
        let z = (a - g) / (sa * sa + sg * sg).sqrt();
        ok &= z.abs() <= 3.0;
        notes.push(format!("m={m}: cascade {a:.4}+-{sa:.4}, GEM {g:.4}+-{sg:.4} (1-m = {:.1}), z {z:.2}", 1.0 - m));
    }
    ok &= worst_sum <= 1e-12;
    notes.push(format!("max |sum - 1| {worst_sum:.1e}"));

    let btree = TreeSpec::uniform(2, 3)?;
    let spec = IncrementSpec {
        root: 0.5,
        levels: vec![
            LevelIncrement { bits: 2, pattern: vec![-0.25, -0.125, 0.125, 0.25] },
            LevelIncrement::balanced(0.0625),
        ],
    };
    let b = build_branchingale(&btree, &spec, &SeedContext::new(6, "c6-branch"))?;
    let report = check_branchingale(&b);

    ok &= report.max_martingale_defect == 0.0 && report.homogeneous && report.structurally_independent;

    let b = &b;
    let values: Vec<f64> = {
        let mut v: Vec<f64> = (0..b.leaves().len())
            .flat_map(|leaf| {
                let mut r = std_rng(leaf as u64);
                (0..64).flat_map(move |_| path_values(b, leaf, &UnitPoint::sample(&mut r))).collect::<Vec<_>>()
            })
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let keys = cells(1, 3);
    let cyl: Vec<CylinderSpec> = standard_cylinders(&keys, &values, 4096);
    let last = b.leaves().len() - 1;
    let path = |leaf: usize| {
        move |c: &SeedContext| vec![path_values(b, leaf, &UnitPoint::sample(&mut c.rng()))]
    };
    let homog = two_sample_cylinder_test(path(0), path(last), &cyl, 4000, &SeedContext::new(6, "c6-homog"))?;
    ok &= homog.pass;
    notes.push(format!(
        "branchingale defect {}, exact homogeneity {}, path two-sample max|z| {:.2} (threshold {:.2})",
        report.max_martingale_defect,
        report.homogeneous,
        homog.max_abs_z(),
        homog.threshold
    ));
    Ok((ok, notes.join("; ")))
}

fn random_grid(rng: &mut impl Rng) -> exlab::Result<SigmaGrid> {
    let (w, u, v, x) = (1, 2, 2, 3);
    let cells = 1usize << (w + u + v);
    let mut table = Vec::with_capacity(cells << x);
    for _ in 0..cells {
        let p: f64 = rng.random();
        for _ in 0..1 << x {
            table.push(if rng.random::<f64>() < p { 1 } else { -1 });
        }
    }
    SigmaGrid::new(w, u, v, x, table)
}

/// Direct simulation of the two inner expectations from the table.
fn brute_inner(g: &SigmaGrid, d: &OuterDraw, beta: f64, samples: usize, seed: u64) -> [(f64, f64); 2] {
    let mut rng = std_rng(seed);
    let cell = |p: f64, depth: u32| (p * (1u64 << depth) as f64) as usize;
    let sigma = |u: f64, v: &UnitPoint, x: f64| -> f64 {
        let idx = ((((d.w.cell(g.w_depth) << g.u_depth) | cell(u, g.u_depth)) << g.v_depth | v.cell(g.v_depth))
            << g.x_depth)
            | cell(x, g.x_depth);
        g.table[idx] as f64
    };
    let mut a = Vec::with_capacity(samples);
    let mut b = Vec::with_capacity(samples);
    for _ in 0..samples {
        let u: f64 = rng.random();
        let h1: f64 = d.first.iter().map(|(v, j)| j * sigma(u, v, rng.random())).sum();
        let h2: f64 =
            d.second.iter().map(|(v, vp, j)| j * sigma(u, v, rng.random()) * sigma(u, vp, rng.random())).sum();
        a.push((beta * h1).cosh());
        b.push((beta * h2).exp());
    }
    [mean_se(&a), mean_se(&b)]
}

fn c7() -> Outcome {
    const INNER: usize = 1_000_000;
    let beta = 1.0;
    let cfg = PEvalConfig::new(1.0, beta, 256);
    let draws: Vec<OuterDraw> = outer_draws(&cfg, &SeedContext::new(7, "c7-outer"))?
        .into_iter()
        .filter(|d| d.first.len() >= 2 && !d.second.is_empty())
        .take(2)
        .collect();
    let mut rng = std_rng(77);
    let grids: Vec<SigmaGrid> = (0..10).map(|_| random_grid(&mut rng)).collect::<exlab::Result<_>>()?;
    let zs: Vec<f64> = grids
        .par_iter()
        .enumerate()
        .map(|(k, g)| {
            let sigma = SigmaFunction::Grid(g.clone());
            let mut z = Vec::new();
            for (t, d) in draws.iter().enumerate() {
                let exact = inner_exact(&sigma, d, beta, &SeedContext::new(7, "c7"))?;
                let mc = brute_inner(g, d, beta, INNER, (k * 10 + t) as u64);
                z.push((exact.first.exp() - mc[0].0) / mc[0].1);
                z.push((exact.second.exp() - mc[1].0) / mc[1].1);
            }
            Ok(z)
        })
        .collect::<exlab::Result<Vec<Vec<f64>>>>()?
        .into_iter()
        .flatten()
        .collect();
    let worst = zs.iter().map(|z| z.abs()).fold(0.0, f64::max);
    Ok((worst <= 4.0, format!("{} comparisons, max |z| {worst:.2} (tol 4)", zs.len())))
}

fn c8() -> Outcome {
    let cfg = PEvalConfig::new(0.5, 0.5, 20_000);
    let family = Family::RsField;
    let r = compare_to_finite_n(
        &[12, 14, 16, 18, 20],
        200,
        family,
        &family.default_bounds(),
        &cfg,
        40,
        &SeedContext::new(8, "c8"),
    )?;
    let last = r.rows.last().expect("rows");
    let close = last.gap.abs() <= 0.05;
    let monotone = r.rows.windows(2).all(|w| {
        let slack = 2.0 * (w[0].f_se.powi(2) + w[1].f_se.powi(2)).sqrt();
        w[1].gap.abs() <= w[0].gap.abs() + slack
    });
    let gaps = r.rows.iter().map(|row| format!("N={}: {:+.4}+-{:.4}", row.n, row.gap, row.gap_se)).collect::<Vec<_>>();
    Ok((
        close && monotone,
        format!(
            "P* = {:.4}+-{:.4}; gaps {}; |gap_20| <= 0.05: {close}; non-increasing: {monotone}",
            r.p_star,
            r.p_star_se,
            gaps.join(", ")
        ),
    ))
}

fn c9() -> Outcome {
    let runs: [&[&str]; 8] = [
        &["erm-sample", "--n", "5", "--replicas", "3"],
        &["exch-test", "--sampler", "erpm", "--samples", "300"],
        &["ds", "--decomposition", "DECOMP", "--samples", "3000"],
        &["vb-fn", "--n", "10", "--alpha", "1", "--beta", "1", "--instances", "40"],
        &["parisi-eval", "--sigma", "rsb_field:0.1,0.5,0.3", "--alpha", "1", "--beta", "1", "--outer", "5000"],
        &["parisi-min", "--family", "rs_tilt", "--alpha", "0.5", "--beta", "0.5", "--outer", "3000", "--budget", "10"],
        &["compare", "--n", "8,10", "--instances", "20", "--family", "rs_tilt", "--alpha", "0.5", "--beta", "0.5", "--outer", "2000", "--budget", "6"],
        &["cascade", "--depth", "2", "--m", "0.3,0.6", "--trunc", "64"],
    ];
    let dir = std::env::temp_dir().join(format!("exlab-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let decomp = dir.join("d.json");
    std::fs::write(&decomp, r#"{"grid_depth":2,"xi":[[1,0,0.5,0],[0,1,0,0.25]],"a":[0.5,0.25]}"#)?;
    let mut mismatched = Vec::new();
    for args in runs {
        let args: Vec<&str> = args.iter().map(|a| if *a == "DECOMP" { decomp.to_str().unwrap() } else { a }).collect();
        let outputs: Vec<Vec<u8>> = ["1", "2", "7"]
            .iter()
            .map(|t| {
                let out = Command::new(env!("CARGO_BIN_EXE_exlab"))
                    .args(["--seed", "99", "--threads", t])
                    .args(&args)
                    .output()
                    .expect("binary runs");
                assert!(out.status.code().is_some_and(|c| c <= 1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
                out.stdout
            })
            .collect();
        if outputs.iter().any(|o| o != &outputs[0]) || outputs[0].is_empty() {
            mismatched.push(args[0].to_string());
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok((
        mismatched.is_empty(),
        if mismatched.is_empty() {
            "8 subcommands identical at --threads 1, 2, 7".into()
        } else {
            format!("differs: {}", mismatched.join(", "))
        },
    ))
}
