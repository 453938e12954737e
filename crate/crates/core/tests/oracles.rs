use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use exlab::cascade::{phi, weighting_to_gamma, WeightingScheme, WeightsGen, XLaw};
use exlab::dovsud::{estimate_gram, gaussian_sampler, GramMatrix};
use exlab::erm::{builtins, draw_replicas, quench, sample_theorem_b_matrix, AtomKernel, AtomicGamma, DirectingRandomMeasure, Kernel};
use exlab::parisi::{
    evaluate_p, evaluate_p_gamma, minimize_p, Family, InnerMode, NamedSigma, PEvalConfig, SigmaFunction,
};
use exlab::rng::{SeedContext, SubsetKey, UnitPoint};
use exlab::stats::mean_se;
use exlab::vianabray::{
    gibbs_replicas, multi_overlap, sample_instance, specific_log_partition, CouplingLaw, GibbsDistribution,
};

fn rng(seed: u64) -> rand::rngs::StdRng {
    rand::rngs::StdRng::seed_from_u64(seed)
}

#[test]
fn log_partition_matches_naive_sum() {
    let law = CouplingLaw::Finite { values: vec![-1.5, -0.5, 0.5, 1.5], probs: vec![0.25; 4] };
    for k in 0..20u64 {
        let n = 2 + (k % 9) as usize;
        let inst = sample_instance(n, 1.3, &law, &SeedContext::new(k, "naive")).unwrap();
        let beta = 0.3 + 0.2 * k as f64;
        let mut z = 0.0;
        for s in 0..1u32 << n {
            let spin = |i: u32| if s >> (i - 1) & 1 == 1 { -1.0 } else { 1.0 };
            let h: f64 = inst.couplings.iter().map(|c| c.value * spin(c.i) * spin(c.j)).sum();
            z += (-beta * h).exp();
        }
        let lib = specific_log_partition(&inst, beta).unwrap();
        assert!((lib - z.ln() / n as f64).abs() < 1e-12, "n={n}: {lib} vs {}", z.ln() / n as f64);
    }
}

#[test]
fn replica_overlap_matches_exact_second_moment() {
    let inst = sample_instance(8, 1.5, &CouplingLaw::Pm1, &SeedContext::new(3, "q")).unwrap();
    let g = GibbsDistribution::new(inst, 1.2).unwrap();
    let exact = g.mean_squared_overlap().unwrap();
    let q2: Vec<f64> = (0..20_000u64)
        .map(|i| {
            let r = gibbs_replicas(&g, 2, &SeedContext::new(3, "rep").index(i)).unwrap();
            multi_overlap(&r, &[0, 1]).unwrap().powi(2)
        })
        .collect();
    let (m, se) = mean_se(&q2);
    assert!((m - exact).abs() < 4.0 * se, "{m} +- {se} vs {exact}");
}

#[test]
fn identity_gram_sampling_in_clt_band() {
    let n = 4;
    let samples = 100_000;
    let s = gaussian_sampler(&GramMatrix::identity(n), &SeedContext::new(1, "id")).unwrap();
    let est = estimate_gram(&s.sample_many(samples)).unwrap();
    let band = 3.0 / (samples as f64).sqrt();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                assert!(est.get(i, j).abs() < band, "{i},{j}: {}", est.get(i, j));
            }
        }
    }
}

#[test]
fn mixture_of_covariances_averages() {
    let r1 = GramMatrix::new(2, vec![1.0, 0.8, 0.8, 1.0]).unwrap();
    let r2 = GramMatrix::new(2, vec![2.0, -0.5, -0.5, 0.5]).unwrap();
    let runs = 400;
    let mut avg = [0.0; 4];
    let mut pick = rng(4);
    for run in 0..runs {
        let r = if pick.random::<bool>() { &r1 } else { &r2 };
        let s = gaussian_sampler(r, &SeedContext::new(4, "mix").index(run)).unwrap();
        let est = estimate_gram(&s.sample_many(500)).unwrap();
        avg.iter_mut().zip(&est.entries).for_each(|(a, e)| *a += e / runs as f64);
    }
    let target = [1.5, 0.15, 0.15, 0.75];
    for (a, t) in avg.iter().zip(target) {
        assert!((a - t).abs() < 0.08, "{avg:?}");
    }
}

#[test]
fn erpm_matched_entries_across_replicas_have_second_moment_one_third() {
    let d = builtins::erpm(Kernel::spin_from_mean_fn(6, |t| 2.0 * t - 1.0).unwrap()).unwrap();
    let mut prods = Vec::new();
    for q in 0..4000u64 {
        let quenched = quench(&d, 3, SeedContext::new(8, "u").hash_u64(q));
        let reps = draw_replicas(&quenched, 2, &SeedContext::new(8, "v").index(q)).unwrap();
        let x = |l: usize, i| reps[l].values[&SubsetKey::singleton(i)][0];
        prods.extend((1..=3).map(|i| x(0, i) * x(1, i)));
    }
    let (m, se) = mean_se(&prods);
    // midpoint rule on 64 cells: 1/3 - 1/(3 * 64^2)
    let target = 1.0 / 3.0 - 1.0 / (3.0 * 4096.0);
    assert!((m - target).abs() < 4.0 * se, "{m} +- {se}");
}

#[test]
fn theorem_b_positions_share_t_within_a_replica() {
    let kernel = Kernel::spin_from_mean_fn(6, |t| 2.0 * t - 1.0).unwrap();
    let g = DirectingRandomMeasure::Atomic(AtomicGamma::point_mass(AtomKernel::Grid(kernel)));
    let mut within = Vec::new();
    let mut across = Vec::new();
    for q in 0..3000u64 {
        let rows = sample_theorem_b_matrix(&g, 2, 2, &SeedContext::new(9, "b").index(q)).unwrap();
        within.push(rows[0][0] * rows[0][1]);
        across.push(rows[0][0] * rows[1][0]);
    }
    let target = 1.0 / 3.0 - 1.0 / (3.0 * 4096.0);
    let (m, se) = mean_se(&within);
    assert!((m - target).abs() < 4.0 * se, "within {m} +- {se}");
    let (m, se) = mean_se(&across);
    assert!(m.abs() < 4.0 * se, "across {m} +- {se}");
}

/// Two-sample Kolmogorov-Smirnov distance.
fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn weighting_kernel_pushes_forward_to_phi_of_x() {
    let ws = WeightingScheme {
        x_law: XLaw::Normal { mean: 0.4, sd: 1.3 },
        weights: WeightsGen::Fixed { weights: vec![0.5, 0.5] },
    };
    let DirectingRandomMeasure::Atomic(g) = weighting_to_gamma(&ws, 10, &SeedContext::new(2, "w")).unwrap() else {
        panic!("fixed weights give an atomic measure")
    };
    let n = 100_000;
    let mut r = rng(12);
    let f: Vec<f64> = (0..n).map(|_| g.atoms[1].p_plus(&UnitPoint::sample(&mut r))).collect();
    let normal = Normal::new(0.4, 1.3).unwrap();
    let x: Vec<f64> = (0..n).map(|_| phi(normal.sample(&mut r))).collect();
    let d = ks_two_sample(f, x);
    // 0.001 critical value 1.95 sqrt(2/n), plus one quantile cell
    assert!(d < 1.95 * (2.0 / n as f64).sqrt() + 1.0 / 1024.0, "D = {d}");
}

fn coin_atom(p: f64) -> AtomKernel {
    AtomKernel::Grid(Kernel::spin(0, &[p]).unwrap())
}

#[test]
fn fair_coin_gamma_matches_rs_coin_closed_form() {
    let (alpha, beta) = (1.0, 0.8);
    let g = DirectingRandomMeasure::Atomic(AtomicGamma::point_mass(coin_atom(0.5)));
    let e = evaluate_p_gamma(&g, &PEvalConfig::new(alpha, beta, 50_000), &SeedContext::new(1, "coin")).unwrap();
    let oracle = std::f64::consts::LN_2 + alpha * beta.cosh().ln();
    assert!((e.value - oracle).abs() < 3.0 * e.std_error, "{} +- {} vs {oracle}", e.value, e.std_error);
}

#[test]
fn gamma_form_agrees_with_sigma_from_gamma() {
    let kernel = Kernel::spin(3, &[0.1, 0.3, 0.5, 0.9, 0.2, 0.6, 0.7, 0.95]).unwrap();
    let g = DirectingRandomMeasure::Atomic(AtomicGamma::new(vec![0.3, 0.7], vec![coin_atom(0.8), AtomKernel::Grid(kernel)]).unwrap());
    let cfg = PEvalConfig::new(1.0, 1.0, 40_000);
    let a = evaluate_p_gamma(&g, &cfg, &SeedContext::new(5, "g")).unwrap();
    let b = evaluate_p(&SigmaFunction::FromGamma(g), &cfg, &SeedContext::new(6, "s")).unwrap();
    let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
    assert!((a.value - b.value).abs() < 3.0 * se, "{} vs {} (se {se})", a.value, b.value);
}

#[test]
fn coin_beats_constant_at_high_temperature() {
    let cfg = PEvalConfig::new(1.0, 0.3, 20_000);
    let ctx = SeedContext::new(2, "ht");
    let best = minimize_p(Family::RsTilt, &[(-2.0, 2.0)], &cfg, 20, &ctx).unwrap();
    let cst = evaluate_p(&SigmaFunction::Named(NamedSigma::RsConst), &cfg, &ctx).unwrap();
    assert!(best.estimate.value <= cst.value, "{} > {}", best.estimate.value, cst.value);
    assert!(best.incumbent_trace.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn inner_mc_close_to_exact_and_flagged() {
    let sigma = SigmaFunction::Named(NamedSigma::RsField { a: 0.3, b: 0.8 });
    let mut cfg = PEvalConfig::new(0.7, 0.9, 4000);
    let exact = evaluate_p(&sigma, &cfg, &SeedContext::new(3, "m")).unwrap();
    cfg.inner = InnerMode::Mc { inner_samples: 2000 };
    let mc = evaluate_p(&sigma, &cfg, &SeedContext::new(3, "m")).unwrap();
    assert!(exact.warnings.is_empty());
    assert_eq!(mc.warnings.len(), 1);
    assert!((mc.value - exact.value).abs() < 0.01, "{} vs {}", mc.value, exact.value);
}
