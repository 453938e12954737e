use proptest::prelude::*;

use exlab::cascade::{phi, phi_inv, sample_cascade, TreeSpec};
use exlab::dovsud::{decompose_from_kernels, reconstruct};
use exlab::erm::Kernel;
use exlab::exchtest::Permutation;
use exlab::rng::{uniform_at, SeedContext, SubsetKey};
use exlab::vianabray::{config_to_spins, energy, specific_log_partition, Coupling, VbInstance};

fn instance(n: usize, edges: Vec<(u32, u32, f64)>) -> VbInstance {
    let couplings = edges
        .into_iter()
        .map(|(i, j, v)| Coupling { i: i % n as u32 + 1, j: j % n as u32 + 1, value: v })
        .collect();
    VbInstance::new(n, 1.0, couplings).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn uniforms_are_deterministic_and_in_range(seed in any::<u64>(), mut e in prop::collection::vec(1u32..1000, 0..5)) {
        e.sort();
        e.dedup();
        let key = SubsetKey::new(e).unwrap();
        let ctx = SeedContext::new(seed, "p");
        let u = uniform_at(&ctx, &key);
        prop_assert!((0.0..1.0).contains(&u));
        prop_assert_eq!(u, uniform_at(&SeedContext::new(seed, "p"), &key));
    }

    #[test]
    fn unsorted_keys_canonicalize(e in prop::collection::btree_set(1u32..500, 1..6)) {
        let sorted: Vec<u32> = e.iter().copied().collect();
        let rev: Vec<u32> = sorted.iter().rev().copied().collect();
        prop_assert_eq!(SubsetKey::from_unsorted(rev).unwrap(), SubsetKey::new(sorted).unwrap());
    }

    #[test]
    fn transpositions_are_involutions(a in 1u32..50, b in 1u32..50, i in 1u32..60) {
        prop_assume!(a != b);
        let p = Permutation::transposition(a, b).unwrap();
        prop_assert_eq!(p.apply(p.apply(i)), i);
    }

    #[test]
    fn energy_is_flip_symmetric(
        n in 1usize..10,
        edges in prop::collection::vec((0u32..20, 0u32..20, -2.0f64..2.0), 0..15),
        s in any::<u32>(),
    ) {
        let inst = instance(n, edges);
        let s = s & ((1u32 << n) - 1);
        let flipped = !s & ((1u32 << n) - 1);
        let a = energy(&inst, &config_to_spins(s, n));
        let b = energy(&inst, &config_to_spins(flipped, n));
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn free_energy_bounded_by_ground_state(
        n in 1usize..9,
        edges in prop::collection::vec((0u32..20, 0u32..20, -1.0f64..1.0), 0..12),
        beta in 0.0f64..3.0,
    ) {
        // log 2 - β min H / N >= (1/N) log Z >= -β min H / N
        let inst = instance(n, edges);
        let hmin = (0..1u32 << n).map(|s| energy(&inst, &config_to_spins(s, n))).fold(f64::INFINITY, f64::min);
        let f = specific_log_partition(&inst, beta).unwrap();
        let lo = -beta * hmin / n as f64;
        prop_assert!(f >= lo - 1e-12);
        prop_assert!(f <= lo + std::f64::consts::LN_2 + 1e-12);
    }

    #[test]
    fn reconstructed_gram_is_psd(
        probs in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 1..5),
    ) {
        let kernels: Vec<Kernel> = probs
            .iter()
            .map(|p| {
                let s: f64 = p.iter().sum();
                Kernel::new(vec![-1.0, 0.0, 3.0], 0, vec![p.iter().map(|x| x / s).collect()]).unwrap()
            })
            .collect();
        let d = decompose_from_kernels(&kernels).unwrap();
        prop_assert!(d.a.iter().all(|&a| a >= 0.0));
        let g = reconstruct(&d);
        prop_assert!(g.min_eigenvalue() >= -1e-9);
    }

    #[test]
    fn cascade_weights_normalized(seed in any::<u64>(), m1 in 0.05f64..0.5, dm in 0.05f64..0.45) {
        let c = sample_cascade(&TreeSpec::uniform(2, 64).unwrap(), &[m1, m1 + dm], &SeedContext::new(seed, "c")).unwrap();
        prop_assert!(c.leaf_weights.iter().all(|&w| w >= 0.0));
        prop_assert!((c.leaf_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phi_inverts(x in -8.0f64..8.0) {
        prop_assert!((phi_inv(phi(x)) - x).abs() < 1e-6);
        prop_assert!((0.0..=1.0).contains(&phi(x)));
    }
}
