use deepesn::analysis::signal_centroid;
use deepesn::readout::train_ridge;
use deepesn::tasks::{
    gen_frequency_classification, gen_mackey_glass, gen_memory_capacity, gen_mso, mackey_glass_series, mso_series,
    score_memory_capacity, ItemSplit, Split, CLASS_FREQUENCIES, MC_INPUT_BOUND,
};
use deepesn::{build_reservoir, Activation, InitConfig, RegressionProblem};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};

fn split(washout: usize, train: usize, validation: usize, test: usize) -> Split {
    Split {
        washout,
        train,
        validation,
        test,
    }
}

#[test]
fn mackey_glass_is_bounded_and_aperiodic() {
    for seed in 0..10 {
        let x = mackey_glass_series(10_000, 17, 0.1, seed).unwrap();
        assert!(x.iter().all(|&v| v > 0.0 && v < 2.0), "seed {seed}");
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let lag1: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        assert!(lag1 / var < 1.0, "seed {seed}");
    }
}

#[test]
fn mackey_glass_targets_are_next_inputs() {
    let d = gen_mackey_glass(600, 17, 0.1, 4, split(50, 300, 100, 100)).unwrap();
    assert_eq!(d, gen_mackey_glass(600, 17, 0.1, 4, split(50, 300, 100, 100)).unwrap());
    for t in 0..d.len() - 1 {
        assert_eq!(d.targets[t][0], d.inputs[t + 1][0]);
    }
    assert_eq!(d.generator_params["seed"], "4");
}

#[test]
fn single_oscillator_centroid() {
    let x = mso_series(4096, 1).unwrap();
    let f = 0.2 / std::f64::consts::TAU;
    let c = signal_centroid(&x, 256).unwrap();
    assert!((c - f).abs() <= 1.0 / 256.0, "{c} vs {f}");
}

#[test]
fn eight_oscillators_never_repeat_a_window() {
    let x = mso_series(1400, 8).unwrap();
    let w = 400;
    for shift in 1..=x.len() - w {
        let gap = (0..w).map(|t| (x[t] - x[t + shift]).abs()).fold(0.0, f64::max);
        assert!(gap > 1e-9, "window repeats after {shift}");
    }
}

#[test]
fn mso_dataset_layout() {
    let d = gen_mso(900, 8, split(100, 400, 100, 300)).unwrap();
    assert_eq!(d.inputs[0][0], 0.0);
    assert!(gen_mso(900, 9, split(100, 400, 100, 300)).is_err());
    assert!(gen_mso(900, 0, split(100, 400, 100, 300)).is_err());
}

#[test]
fn memory_input_is_centered() {
    let d = gen_memory_capacity(20_000, 5, 3, split(0, 10_000, 5_000, 5_000)).unwrap();
    let u: Vec<f64> = d.inputs.iter().map(|v| v[0]).collect();
    let t = u.len() as f64;
    let mean = u.iter().sum::<f64>() / t;
    let sigma = MC_INPUT_BOUND / 3f64.sqrt();
    assert!(mean.abs() <= 3.0 * sigma / t.sqrt(), "{mean}");
    assert!(u.iter().all(|v| v.abs() <= MC_INPUT_BOUND));
    assert_eq!(
        d,
        gen_memory_capacity(20_000, 5, 3, split(0, 10_000, 5_000, 5_000)).unwrap()
    );
}

#[test]
fn unrelated_predictions_score_near_zero() {
    let t = 2000;
    let d = gen_memory_capacity(t + 10, 3, 1, split(0, t, 5, 5)).unwrap();
    let target = d.target_matrix(0..t);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let pred = DMatrix::from_fn(t, 3, |_, _| rng.random_range(-1.0..=1.0));
    let rep = score_memory_capacity(&pred, &target).unwrap();
    assert!(rep.per_delay_r2.iter().all(|&r| r < 0.05), "{:?}", rep.per_delay_r2);
    assert_eq!(rep.total_mc, rep.per_delay_r2.iter().sum::<f64>());
    let perfect = score_memory_capacity(&target, &target).unwrap();
    assert!(perfect.per_delay_r2.iter().all(|&r| (r - 1.0).abs() < 1e-12));
}

#[test]
fn linear_reservoir_memory_is_bounded_by_its_size() {
    let n = 20;
    for seed in 0..5 {
        let cfg = InitConfig {
            units_per_layer: n,
            activation: Activation::Identity,
            bias: false,
            spectral_radius_targets: 0.95.into(),
            input_scaling: 0.1,
            master_seed: seed,
            ..Default::default()
        };
        let res = build_reservoir(&cfg).unwrap();
        let d = gen_memory_capacity(5000, 2 * n, seed, split(200, 4000, 0, 1000)).unwrap();
        let traj = res.run(&d.inputs, None, 0).unwrap();
        let train = d.split.train_range();
        let p = RegressionProblem::new(traj.state_matrix(train.clone()), d.target_matrix(train)).unwrap();
        let r = train_ridge(&p, 1e-12, true).unwrap();
        let test = d.split.test_range();
        let pred = r.apply(&traj.state_matrix(test.clone())).unwrap();
        let mc = score_memory_capacity(&pred, &d.target_matrix(test)).unwrap().total_mc;
        assert!(mc <= n as f64 + 0.5, "seed {seed}: MC {mc}");
        assert!(mc > 1.0, "seed {seed}: MC {mc}");
    }
}

/// Nearest-centroid classifier on FFT magnitude features.
fn fft_features(item: &[f64]) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = item.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf[..item.len() / 2 + 1].iter().map(|z| z.norm()).collect()
}

#[test]
fn noiseless_classes_are_separable_by_spectrum() {
    let len = 200;
    let d = gen_frequency_classification(
        len,
        120,
        8,
        0.0,
        9,
        ItemSplit {
            train: 60,
            validation: 20,
            test: 40,
        },
    )
    .unwrap();
    let layout = d.items.as_ref().unwrap();
    let items: Vec<Vec<f64>> = d.inputs.chunks(len).map(|c| c.iter().map(|v| v[0]).collect()).collect();
    let feats: Vec<Vec<f64>> = items.iter().map(|i| fft_features(i)).collect();
    let mut centroids = vec![vec![0.0; len / 2 + 1]; 8];
    let mut counts = [0usize; 8];
    for (f, &l) in feats.iter().zip(&layout.labels).take(80) {
        counts[l] += 1;
        centroids[l].iter_mut().zip(f).for_each(|(c, v)| *c += v);
    }
    for (c, &k) in centroids.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|v| *v /= k.max(1) as f64);
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let correct = feats[80..]
        .iter()
        .zip(&layout.labels[80..])
        .filter(|(f, &l)| {
            let guess = (0..8)
                .filter(|&k| counts[k] > 0)
                .min_by(|&a, &b| dist(f, &centroids[a]).total_cmp(&dist(f, &centroids[b])))
                .unwrap();
            guess == l
        })
        .count();
    assert_eq!(correct, 40);
    assert_eq!(CLASS_FREQUENCIES.len(), 8);
}

#[test]
fn labels_are_uniform_over_classes() {
    let (n_items, k) = (4000, 4);
    let d = gen_frequency_classification(
        10,
        n_items,
        k,
        0.1,
        21,
        ItemSplit {
            train: 2000,
            validation: 1000,
            test: 1000,
        },
    )
    .unwrap();
    let labels = &d.items.as_ref().unwrap().labels;
    let p = 1.0 / k as f64;
    let sd = (n_items as f64 * p * (1.0 - p)).sqrt();
    for class in 0..k {
        let count = labels.iter().filter(|&&l| l == class).count() as f64;
        assert!((count - n_items as f64 * p).abs() <= 3.0 * sd, "class {class}: {count}");
    }
    assert_eq!(
        d,
        gen_frequency_classification(
            10,
            n_items,
            k,
            0.1,
            21,
            ItemSplit {
                train: 2000,
                validation: 1000,
                test: 1000
            }
        )
        .unwrap()
    );
}
