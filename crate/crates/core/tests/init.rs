mod common;

use common::random_config;
use deepesn::init::{derive_layer_seed, linearized_layer_map, rescale_spectral_radius, spectral_radius, SeedStream};
use deepesn::{build_reservoir, InitConfig, PerLayer};
use nalgebra::DMatrix;
use ndarray_linalg::Eig;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Spectral radius from the LAPACK eigensolver, independent of nalgebra.
fn lapack_radius(m: &DMatrix<f64>) -> f64 {
    let a = ndarray::Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)]);
    let (eigs, _) = a.eig().unwrap();
    eigs.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_layer_hits_its_radius_target(seed in any::<u64>()) {
        let cfg = random_config(seed, 4, 5..=40);
        let res = build_reservoir(&cfg).unwrap();
        for (i, layer) in res.layers().iter().enumerate() {
            let target = cfg.spectral_radius_targets.get(i);
            let measured = lapack_radius(&linearized_layer_map(layer));
            prop_assert!((measured - target).abs() <= 1e-8, "layer {i}: {measured} vs {target}");
        }
    }

    #[test]
    fn weights_respect_scalings(seed in any::<u64>()) {
        let cfg = random_config(seed, 3, 3..=15);
        let res = build_reservoir(&cfg).unwrap();
        for (i, layer) in res.layers().iter().enumerate() {
            let scale = if i == 0 { cfg.input_scaling } else { cfg.inter_layer_scaling };
            prop_assert!(layer.input_weights().to_dense().amax() <= scale);
            if let Some(b) = layer.bias() {
                prop_assert!(b.amax() <= cfg.bias_scaling);
            }
            prop_assert_eq!(layer.bias().is_some(), cfg.bias);
        }
    }

    #[test]
    fn builds_are_bitwise_deterministic(seed in any::<u64>()) {
        let cfg = random_config(seed, 3, 3..=20);
        prop_assert_eq!(build_reservoir(&cfg).unwrap(), build_reservoir(&cfg).unwrap());
    }

    #[test]
    fn rescaling_matches_a_fresh_build(seed in any::<u64>(), target in 0.3f64..1.4) {
        let cfg = InitConfig { leak_rates: 1.0.into(), ..random_config(seed, 3, 3..=20) };
        let mut res = build_reservoir(&cfg).unwrap();
        rescale_spectral_radius(&mut res, &PerLayer::Shared(target)).unwrap();
        for layer in res.layers() {
            let measured = spectral_radius(&linearized_layer_map(layer)).unwrap();
            prop_assert!((measured - target).abs() <= 1e-8);
        }
    }
}

#[test]
fn non_leaky_radius_is_the_recurrent_radius() {
    let cfg = InitConfig {
        units_per_layer: 60,
        ..Default::default()
    };
    let res = build_reservoir(&cfg).unwrap();
    let measured = lapack_radius(&res.layers()[0].recurrent_weights().to_dense());
    assert!((measured - 0.9).abs() <= 1e-8, "{measured}");
}

#[test]
fn spectral_radius_matches_lapack_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [1, 2, 7, 50, 120] {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..=1.0));
        let ours = spectral_radius(&m).unwrap();
        assert!((ours - lapack_radius(&m)).abs() <= 1e-8, "n={n}");
    }
}

#[test]
fn density_stays_within_sampling_band() {
    let n = 100;
    for d in [0.05, 0.1, 0.3, 0.7] {
        let se = (d * (1.0 - d) / (n * n) as f64).sqrt();
        let band = 2.0 / ((n * n) as f64 * d * (1.0 - d)).sqrt();
        let mut within_two_se = 0;
        for seed in 0..20 {
            let cfg = InitConfig {
                units_per_layer: n,
                recurrent_density: d,
                master_seed: seed,
                ..Default::default()
            };
            let res = build_reservoir(&cfg).unwrap();
            let w = res.layers()[0].recurrent_weights();
            assert!(w.is_sparse());
            let frac = w.stored_entries() as f64 / (n * n) as f64;
            assert!((frac - d).abs() <= band, "density {d} seed {seed}: {frac}");
            if (frac - d).abs() <= 2.0 * se {
                within_two_se += 1;
            }
        }
        // about 95% expected; 16 of 20 leaves room for sampling luck
        assert!(within_two_se >= 16, "density {d}: {within_two_se}/20 within 2 SE");
    }
}

#[test]
fn seed_streams_do_not_collide() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10_000 {
        let m: u64 = rng.random();
        let base = derive_layer_seed(m, 1, SeedStream::Input);
        assert_eq!(base, derive_layer_seed(m, 1, SeedStream::Input));
        assert_ne!(base, derive_layer_seed(m, 2, SeedStream::Input));
        assert_ne!(base, derive_layer_seed(m, 1, SeedStream::Recurrent));
        assert_ne!(base, derive_layer_seed(m, 1, SeedStream::Bias));
    }
}

#[test]
fn per_layer_settings_apply_to_their_layer() {
    let cfg = InitConfig {
        n_layers: 3,
        units_per_layer: 20,
        leak_rates: PerLayer::Each(vec![1.0, 0.5, 0.3]),
        spectral_radius_targets: PerLayer::Each(vec![0.5, 0.8, 1.1]),
        ..Default::default()
    };
    let res = build_reservoir(&cfg).unwrap();
    for (i, layer) in res.layers().iter().enumerate() {
        assert_eq!(layer.leak_rate(), [1.0, 0.5, 0.3][i]);
        let measured = lapack_radius(&linearized_layer_map(layer));
        assert!((measured - [0.5, 0.8, 1.1][i]).abs() <= 1e-8);
    }
}

#[test]
fn unreachable_target_is_a_config_error() {
    let cfg = InitConfig {
        leak_rates: 0.5.into(),
        spectral_radius_targets: 0.4.into(),
        ..Default::default()
    };
    assert!(matches!(
        build_reservoir(&cfg).unwrap_err().root(),
        deepesn::Error::Config(_)
    ));
}
