use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use svr_core::embedding::{Embedding, EmbeddingSet};
use svr_core::svr::*;
use svr_core::Error;

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn random_sample(rng: &mut ChaCha8Rng, d: usize) -> PairSample {
    PairSample {
        x1_low: gaussian(rng, d),
        x1_high: gaussian(rng, d),
        x2_low: gaussian(rng, d),
        x2_high: gaussian(rng, d),
        same_speaker: rng.random_bool(0.5),
    }
}

/// Central differences of the total loss over every flattened parameter.
fn numeric_grad(params: &MlpParameters, s: &PairSample, w: LossWeights, h: f64) -> Vec<f64> {
    let flat = params.to_flat();
    (0..flat.len())
        .map(|i| {
            let mut plus = flat.clone();
            let mut minus = flat.clone();
            plus[i] += h;
            minus[i] -= h;
            let lp = svr_pair_loss(&params.with_flat(&plus).unwrap(), s, w).unwrap().total;
            let lm = svr_pair_loss(&params.with_flat(&minus).unwrap(), s, w).unwrap().total;
            (lp - lm) / (2.0 * h)
        })
        .collect()
}

/// Smallest |pre-activation| of any hidden unit over both branches.
fn min_hidden_preactivation(params: &MlpParameters, s: &PairSample) -> f64 {
    let mut m = f64::INFINITY;
    for x in [&s.x1_low, &s.x2_low] {
        let mut a = nalgebra::DVector::from_column_slice(x);
        let layers = params.layers();
        for layer in &layers[..layers.len() - 1] {
            let z = &layer.weights * &a + &layer.bias;
            m = z.iter().fold(m, |acc, v| acc.min(v.abs()));
            a = z.map(|v| v.max(0.0));
        }
    }
    m
}

fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-5))
        .fold(0.0, f64::max)
}

#[test]
fn gradient_matches_central_differences_tanh() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let params = MlpParameters::init(8, &[16, 16], Activation::Tanh, &mut rng).unwrap();
        let s = random_sample(&mut rng, 8);
        let w = LossWeights {
            recon: rng.random_range(0.1..2.0),
            cos: rng.random_range(0.1..5.0),
        };
        let analytic = svr_pair_grad(&params, &s, w).unwrap().to_flat();
        let numeric = numeric_grad(&params, &s, w, 1e-5);
        worst = worst.max(max_rel_err(&analytic, &numeric));
    }
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

#[test]
fn gradient_matches_central_differences_relu_away_from_kinks() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut checked = 0;
    while checked < 100 {
        let params = MlpParameters::init(8, &[16, 16], Activation::Relu, &mut rng).unwrap();
        let s = random_sample(&mut rng, 8);
        // Finite differences are only valid where no unit crosses zero within h.
        if min_hidden_preactivation(&params, &s) < 1e-3 {
            continue;
        }
        let w = LossWeights::default();
        let analytic = svr_pair_grad(&params, &s, w).unwrap().to_flat();
        let numeric = numeric_grad(&params, &s, w, 1e-5);
        let err = max_rel_err(&analytic, &numeric);
        assert!(err < 1e-4, "instance {checked}: max relative error {err:e}");
        checked += 1;
    }
}

#[test]
fn batch_gradient_is_mean_of_pair_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = MlpParameters::init(5, &[7], Activation::Tanh, &mut rng).unwrap();
    let batch: Vec<PairSample> = (0..6).map(|_| random_sample(&mut rng, 5)).collect();
    let w = LossWeights::default();
    let (loss, grad) = batch_loss_and_grad(&params, &batch, w).unwrap();
    let mut mean = MlpGradient::zeros_like(&params);
    let mut mean_loss = 0.0;
    for s in &batch {
        mean.add_assign(&svr_pair_grad(&params, s, w).unwrap());
        mean_loss += svr_pair_loss(&params, s, w).unwrap().total;
    }
    mean.scale(1.0 / batch.len() as f64);
    mean_loss /= batch.len() as f64;
    assert!((loss - mean_loss).abs() < 1e-12 * mean_loss.max(1.0));
    for (a, b) in grad.to_flat().iter().zip(mean.to_flat()) {
        assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn swapping_branches_leaves_loss_and_gradient_unchanged(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = MlpParameters::init(6, &[9, 4], Activation::Tanh, &mut rng).unwrap();
        let s = random_sample(&mut rng, 6);
        let w = LossWeights::default();
        let a = svr_pair_loss(&params, &s, w).unwrap();
        let b = svr_pair_loss(&params, &s.swapped(), w).unwrap();
        prop_assert!((a.total - b.total).abs() <= 1e-12 * a.total.max(1.0));
        let ga = svr_pair_grad(&params, &s, w).unwrap().to_flat();
        let gb = svr_pair_grad(&params, &s.swapped(), w).unwrap().to_flat();
        for (x, y) in ga.iter().zip(&gb) {
            prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn loss_is_non_negative(seed in any::<u64>(), recon in 0.0..5.0f64, cos in 0.0..5.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = MlpParameters::init(4, &[8], Activation::Tanh, &mut rng).unwrap();
        let s = random_sample(&mut rng, 4);
        let l = svr_pair_loss(&params, &s, LossWeights { recon, cos }).unwrap();
        prop_assert!(l.total >= 0.0);
        prop_assert!(l.recon1 >= 0.0 && l.recon2 >= 0.0 && l.cos_term >= 0.0);
    }
}

#[test]
fn identity_network_on_clean_same_speaker_pair_has_zero_loss() {
    let v = vec![1.0, 2.0, -0.5];
    let s = PairSample {
        x1_low: v.clone(),
        x1_high: v.clone(),
        x2_low: v.clone(),
        x2_high: v,
        same_speaker: true,
    };
    let l = svr_pair_loss(&MlpParameters::identity(3), &s, LossWeights::default()).unwrap();
    assert!(l.total.abs() < 1e-15);
}

#[test]
fn zero_output_is_rejected() {
    let mut p = MlpParameters::identity(2);
    let flat = vec![0.0; p.num_params()];
    p = p.with_flat(&flat).unwrap();
    let s = PairSample {
        x1_low: vec![1.0, 0.0],
        x1_high: vec![1.0, 0.0],
        x2_low: vec![0.0, 1.0],
        x2_high: vec![0.0, 1.0],
        same_speaker: false,
    };
    assert!(matches!(svr_pair_loss(&p, &s, LossWeights::default()), Err(Error::ZeroVector)));
}

/// Labeled pair sets where the low view is `f(high)`.
fn paired_task(n_spk: usize, per: usize, d: usize, seed: u64, f: impl Fn(&[f64]) -> Vec<f64>) -> PairedData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut high = Vec::new();
    let mut low = Vec::new();
    for s in 0..n_spk {
        let mean = gaussian(&mut rng, d);
        for u in 0..per {
            let x: Vec<f64> = mean.iter().map(|m| m + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
            let id = format!("s{s}/u{u}");
            low.push(Embedding::new(id.clone(), Some(format!("s{s}")), f(&x)));
            high.push(Embedding::new(id, Some(format!("s{s}")), x));
        }
    }
    PairedData::new(EmbeddingSet::new(d, low).unwrap(), EmbeddingSet::new(d, high).unwrap()).unwrap()
}

#[test]
fn identity_task_loss_drops_tenfold() {
    let data = paired_task(20, 5, 8, 1, |x| x.to_vec());
    let cfg = TrainConfig {
        hidden_dims: vec![32, 32],
        steps: 500,
        batch_size: 32,
        seed: 42,
        ..Default::default()
    };
    let out = train(&data, &cfg).unwrap();
    let first = out.loss_curve[0];
    let last = out.loss_curve[out.loss_curve.len() - 1];
    assert_eq!(out.loss_curve.len(), 500);
    assert!(last < 0.1 * first, "loss {first} -> {last}");
}

#[test]
fn training_is_deterministic() {
    let data = paired_task(6, 3, 4, 2, |x| x.iter().map(|v| 2.0 * v).collect());
    let cfg = TrainConfig {
        hidden_dims: vec![8],
        steps: 40,
        batch_size: 8,
        seed: 5,
        ..Default::default()
    };
    let a = train(&data, &cfg).unwrap();
    let b = train(&data, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(
        a.loss_curve.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.loss_curve.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn affine_task_beats_untrained_network_on_held_out_speakers() {
    let a = |x: &[f64]| -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let j = (i + 1) % x.len();
                0.6 * x[i] + 0.4 * x[j] + 0.2 * i as f64
            })
            .collect()
    };
    let train_data = paired_task(40, 6, 6, 10, a);
    let held_out = paired_task(10, 4, 6, 11, a);
    let cfg = TrainConfig {
        hidden_dims: vec![32, 32],
        steps: 2000,
        batch_size: 32,
        seed: 9,
        ..Default::default()
    };
    let out = train(&train_data, &cfg).unwrap();
    let untrained = {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        MlpParameters::init(6, &cfg.hidden_dims, cfg.activation, &mut rng).unwrap()
    };
    let recon_err = |p: &MlpParameters| -> f64 {
        let rec = reconstruct(p, held_out.low()).unwrap();
        rec.iter()
            .zip(held_out.high().iter())
            .map(|(r, h)| r.vector.iter().zip(&h.vector).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
            .sum()
    };
    let (trained, base) = (recon_err(&out.params), recon_err(&untrained));
    assert!(trained < 0.2 * base, "held-out error {trained} vs untrained {base}");
}

#[test]
fn empty_training_set_is_insufficient() {
    let empty = EmbeddingSet::new(3, vec![]).unwrap();
    let data = PairedData::new(empty.clone(), empty).unwrap();
    let err = train(&data, &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, Error::InsufficientData(_)), "{err}");
}

#[test]
fn reconstruct_keeps_ids_and_applies_network() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = MlpParameters::init(3, &[5], Activation::Relu, &mut rng).unwrap();
    let set = EmbeddingSet::new(
        3,
        vec![
            Embedding::new("a", Some("x".into()), vec![1.0, 0.0, 2.0]),
            Embedding::new("b", None, vec![-1.0, 3.0, 0.5]),
        ],
    )
    .unwrap();
    let out = reconstruct(&params, &set).unwrap();
    for (o, i) in out.iter().zip(set.iter()) {
        assert_eq!(o.utterance_id, i.utterance_id);
        assert_eq!(o.speaker_id, i.speaker_id);
        assert_eq!(o.vector, params.forward(&i.vector).unwrap());
    }
    let wrong = EmbeddingSet::new(2, vec![Embedding::new("c", None, vec![1.0, 1.0])]).unwrap();
    assert!(matches!(reconstruct(&params, &wrong), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn model_file_round_trip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = MlpParameters::init(4, &[6, 3], Activation::Tanh, &mut rng).unwrap();
    let mut buf = Vec::new();
    save_model(&params, &mut buf).unwrap();
    let back = load_model(buf.as_slice()).unwrap();
    assert_eq!(back, params);
}
