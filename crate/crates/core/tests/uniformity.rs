use exlab::rng::{uniform_at, SeedContext, SubsetKey, UnitPoint};
use exlab::stats::{ks_critical, ks_uniform};
use rand::Rng;

#[test]
fn subset_uniforms_pass_ks_at_one_million() {
    let ctx = SeedContext::new(2718, "ks");
    let mut xs: Vec<f64> = (0..1_000_000u32)
        .map(|i| uniform_at(&ctx, &SubsetKey::new(vec![i / 1000 + 1, 2000 + i % 1000]).unwrap()))
        .collect();
    let d = ks_uniform(&mut xs);
    assert!(d < ks_critical(xs.len(), 0.001), "D = {d}");
}

#[test]
fn stream_uniforms_pass_ks() {
    let mut rng = SeedContext::new(5, "stream").rng();
    let mut xs: Vec<f64> = (0..200_000).map(|_| rng.random()).collect();
    assert!(ks_uniform(&mut xs) < ks_critical(xs.len(), 0.001));
}

#[test]
fn digit_blocks_are_uniform_and_unrelated_to_head() {
    let mut rng = SeedContext::new(9, "blocks").rng();
    let mut counts = [[0u32; 4]; 2];
    let n = 80_000;
    for _ in 0..n {
        let t = UnitPoint::sample(&mut rng);
        counts[t.cell(1)][t.block(77, 2)] += 1;
    }
    // chi-square with 7 degrees of freedom, 0.999 quantile 24.32
    let e = n as f64 / 8.0;
    let chi: f64 = counts.iter().flatten().map(|&c| (c as f64 - e).powi(2) / e).sum();
    assert!(chi < 24.32, "chi2 = {chi}");
}
