use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use svr_core::embedding::{cosine_similarity, Embedding, EmbeddingSet, Label, ScoreEntry, ScoreSet, Trial};
use svr_core::scoring::*;
use svr_core::svr::{Activation, MlpParameters};
use svr_core::Error;

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

/// `G G^T / d + shift I`.
fn random_spd(rng: &mut ChaCha8Rng, d: usize, shift: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    &g * g.transpose() / d as f64 + DMatrix::identity(d, d) * shift
}

/// `log N(z; m, s)` through an explicit Cholesky factor.
fn log_density(z: &DVector<f64>, m: &DVector<f64>, s: &DMatrix<f64>) -> f64 {
    let n = z.len() as f64;
    let chol = s.clone().cholesky().unwrap();
    let diff = z - m;
    let sol = chol.solve(&diff);
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + logdet + diff.dot(&sol))
}

/// LLR from the two 2d-dimensional joint Gaussians.
fn direct_llr(model: &PldaModel, e: &DVector<f64>, t: &DVector<f64>) -> f64 {
    let d = model.mu.len();
    let tot = &model.b + &model.w;
    let mut same = DMatrix::zeros(2 * d, 2 * d);
    let mut diff = DMatrix::zeros(2 * d, 2 * d);
    for k in [0, d] {
        same.view_mut((k, k), (d, d)).copy_from(&tot);
        diff.view_mut((k, k), (d, d)).copy_from(&tot);
    }
    same.view_mut((0, d), (d, d)).copy_from(&model.b);
    same.view_mut((d, 0), (d, d)).copy_from(&model.b);
    let mut z = DVector::zeros(2 * d);
    z.rows_mut(0, d).copy_from(e);
    z.rows_mut(d, d).copy_from(t);
    let mut m = DVector::zeros(2 * d);
    m.rows_mut(0, d).copy_from(&model.mu);
    m.rows_mut(d, d).copy_from(&model.mu);
    log_density(&z, &m, &same) - log_density(&z, &m, &diff)
}

#[test]
fn llr_matches_direct_joint_gaussian_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..500 {
        let d = rng.random_range(1..=4);
        let model = PldaModel::new(
            gaussian_vec(&mut rng, d),
            random_spd(&mut rng, d, 0.05),
            random_spd(&mut rng, d, 0.1),
        )
        .unwrap();
        let e = gaussian_vec(&mut rng, d) * 1.5;
        let t = gaussian_vec(&mut rng, d) * 1.5;
        let got = model.score(e.as_slice(), t.as_slice()).unwrap();
        let want = direct_llr(&model, &e, &t);
        assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn scalar_closed_form_and_symmetry() {
    let one = DMatrix::from_element(1, 1, 1.0);
    let model = PldaModel::new(DVector::zeros(1), one.clone(), one).unwrap();
    let s = model.score(&[0.0], &[0.0]).unwrap();
    assert!((s - 0.5 * (4.0f64 / 3.0).ln()).abs() < 1e-12);
    assert!((s - 0.143841).abs() < 1e-6);
    assert!(model.score(&[5.0], &[-5.0]).unwrap() < 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = PldaModel::new(gaussian_vec(&mut rng, 3), random_spd(&mut rng, 3, 0.1), random_spd(&mut rng, 3, 0.1)).unwrap();
    let scorer = m.scorer().unwrap();
    for _ in 0..50 {
        let e = gaussian_vec(&mut rng, 3);
        let t = gaussian_vec(&mut rng, 3);
        assert_eq!(
            scorer.score(e.as_slice(), t.as_slice()).unwrap().to_bits(),
            scorer.score(t.as_slice(), e.as_slice()).unwrap().to_bits()
        );
    }
}

fn sample_world(mu: &DVector<f64>, b: &DMatrix<f64>, w: &DMatrix<f64>, n_spk: usize, per: usize, seed: u64) -> EmbeddingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = mu.len();
    let lb = b.clone().cholesky().unwrap().l();
    let lw = w.clone().cholesky().unwrap().l();
    let mut items = Vec::new();
    for s in 0..n_spk {
        let y = &lb * gaussian_vec(&mut rng, d);
        for u in 0..per {
            let x = mu + &y + &lw * gaussian_vec(&mut rng, d);
            items.push(Embedding::new(format!("s{s}/u{u}"), Some(format!("s{s}")), x.as_slice().to_vec()));
        }
    }
    EmbeddingSet::new(d, items).unwrap()
}

fn rel_frobenius(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    (est - truth).norm() / truth.norm()
}

#[test]
fn em_recovers_generating_covariances() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = 8;
    let mu = gaussian_vec(&mut rng, d);
    let b = random_spd(&mut rng, d, 0.5);
    let w = random_spd(&mut rng, d, 0.2) * 0.5;
    let data = sample_world(&mu, &b, &w, 500, 10, 6);
    let fit = plda_train_em(&data, 50).unwrap();
    assert_eq!(fit.objective.len(), 50);
    for pair in fit.objective.windows(2) {
        assert!(pair[1] >= pair[0] - 1e-8 * pair[0].abs().max(1.0), "{pair:?}");
    }
    let eb = rel_frobenius(&fit.model.b, &b);
    let ew = rel_frobenius(&fit.model.w, &w);
    assert!(eb < 0.15 && ew < 0.15, "B err {eb}, W err {ew}");
}

#[test]
fn near_zero_within_variance_is_recognised() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d = 4;
    let b = random_spd(&mut rng, d, 0.5);
    let w = DMatrix::identity(d, d) * 1e-6;
    let data = sample_world(&DVector::zeros(d), &b, &w, 100, 5, 10);
    let m = plda_train_em(&data, 20).unwrap().model;
    assert!(m.w.trace() / m.b.trace() < 0.05);
}

#[test]
fn em_needs_two_speakers() {
    let one = EmbeddingSet::new(
        2,
        vec![
            Embedding::new("a", Some("s".into()), vec![1.0, 0.0]),
            Embedding::new("b", Some("s".into()), vec![0.0, 1.0]),
        ],
    )
    .unwrap();
    assert!(matches!(plda_train_em(&one, 5), Err(Error::InsufficientData(_))));
}

#[test]
fn plda_file_round_trip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let m = PldaModel::new(gaussian_vec(&mut rng, 3), random_spd(&mut rng, 3, 0.1), random_spd(&mut rng, 3, 0.1)).unwrap();
    let mut buf = Vec::new();
    save_plda(&m, &mut buf).unwrap();
    assert_eq!(load_plda(buf.as_slice()).unwrap(), m);
}

fn unlabeled(rng: &mut ChaCha8Rng, d: usize, n: usize) -> EmbeddingSet {
    EmbeddingSet::new(
        d,
        (0..n)
            .map(|i| Embedding::new(format!("a{i}"), None, gaussian_vec(rng, d).as_slice().to_vec()))
            .collect(),
    )
    .unwrap()
}

#[test]
fn adaptation_endpoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let m = PldaModel::new(gaussian_vec(&mut rng, 3), random_spd(&mut rng, 3, 0.1), random_spd(&mut rng, 3, 0.1)).unwrap();
    let adapt = unlabeled(&mut rng, 3, 40);
    assert_eq!(plda_adapt(&m, &adapt, 0.0).unwrap(), m);

    let full = plda_adapt(&m, &adapt, 1.0).unwrap();
    let n = adapt.len() as f64;
    let mut mean = DVector::zeros(3);
    for e in &adapt {
        mean += DVector::from_column_slice(&e.vector);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(3, 3);
    for e in &adapt {
        let x = DVector::from_column_slice(&e.vector) - &mean;
        cov += &x * x.transpose() / n;
    }
    let r = m.b.trace() / (m.b.trace() + m.w.trace());
    assert!((&full.mu - &mean).amax() < 1e-12);
    assert!((&full.b - &cov * r).amax() < 1e-12);
    assert!((&full.w - &cov * (1.0 - r)).amax() < 1e-12);
    assert!(matches!(plda_adapt(&m, &unlabeled(&mut rng, 3, 1), 0.5), Err(Error::InsufficientData(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adaptation_is_linear_in_alpha(seed in any::<u64>(), alpha in 0.0..=1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = PldaModel::new(gaussian_vec(&mut rng, 3), random_spd(&mut rng, 3, 0.1), random_spd(&mut rng, 3, 0.1)).unwrap();
        let adapt = unlabeled(&mut rng, 3, 20);
        let end = plda_adapt(&m, &adapt, 1.0).unwrap();
        let mid = plda_adapt(&m, &adapt, alpha).unwrap();
        let lerp = |a: f64, b: f64| (1.0 - alpha) * a + alpha * b;
        for (got, (a, b)) in mid.mu.iter().zip(m.mu.iter().zip(end.mu.iter())) {
            prop_assert!((got - lerp(*a, *b)).abs() < 1e-12 * (1.0 + got.abs()));
        }
        for (mid_m, orig, e) in [(&mid.b, &m.b, &end.b), (&mid.w, &m.w, &end.w)] {
            for ((got, a), b) in mid_m.iter().zip(orig.iter()).zip(e.iter()) {
                prop_assert!((got - lerp(*a, *b)).abs() < 1e-12 * (1.0 + got.abs()));
            }
        }
    }

    #[test]
    fn snorm_is_invariant_to_positive_affine_maps(
        seed in any::<u64>(),
        a in 0.01..100.0f64,
        b in -50.0..50.0f64,
        top_k in prop_oneof![Just(0usize), 2usize..12],
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enroll = unlabeled(&mut rng, 4, 3);
        let test = EmbeddingSet::new(4, (0..3).map(|i| Embedding::new(format!("t{i}"), None, gaussian_vec(&mut rng, 4).as_slice().to_vec())).collect()).unwrap();
        let cohort = Cohort::new(EmbeddingSet::new(4, (0..10).map(|i| Embedding::new(format!("c{i}"), None, gaussian_vec(&mut rng, 4).as_slice().to_vec())).collect()).unwrap(), top_k).unwrap();
        let base = |x: &[f64], y: &[f64]| cosine_similarity(x, y);
        let mapped = |x: &[f64], y: &[f64]| cosine_similarity(x, y).map(|s| a * s + b);
        let mut raw = Vec::new();
        let mut raw_mapped = Vec::new();
        for e in &enroll {
            for t in &test {
                let s = base(&e.vector, &t.vector).unwrap();
                raw.push(ScoreEntry { enroll_utt: e.utterance_id.clone(), test_utt: t.utterance_id.clone(), score: s, label: None });
                raw_mapped.push(ScoreEntry { enroll_utt: e.utterance_id.clone(), test_utt: t.utterance_id.clone(), score: a * s + b, label: None });
            }
        }
        let n1 = snorm(&ScoreSet::new(raw).unwrap(), base, &enroll, &test, &cohort).unwrap();
        let n2 = snorm(&ScoreSet::new(raw_mapped).unwrap(), mapped, &enroll, &test, &cohort).unwrap();
        for (x, y) in n1.entries().iter().zip(n2.entries()) {
            prop_assert!((x.score - y.score).abs() <= 1e-10 * (1.0 + x.score.abs()), "{} vs {}", x.score, y.score);
        }
    }
}

#[test]
fn snorm_identity_and_degenerate_cohort() {
    let unit = CohortStats { mean: 0.0, std: 1.0 };
    assert_eq!(snorm_score(0.37, unit, unit), 0.37);
    assert!(matches!(
        CohortStats::from_scores(vec![0.5; 10], 0, "u"),
        Err(Error::DegenerateCohort(_))
    ));
    let stats = CohortStats::from_scores(vec![0.0, 10.0, 1.0, 3.0], 2, "u").unwrap();
    assert_eq!((stats.mean, stats.std), (6.5, 3.5));
}

fn toy_sets() -> (EmbeddingSet, EmbeddingSet, Vec<Trial>) {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mk = |rng: &mut ChaCha8Rng, p: &str| {
        EmbeddingSet::new(
            5,
            (0..6)
                .map(|i| Embedding::new(format!("{p}{i}"), Some(format!("s{}", i % 3)), gaussian_vec(rng, 5).as_slice().to_vec()))
                .collect(),
        )
        .unwrap()
    };
    let enroll = mk(&mut rng, "e");
    let test = mk(&mut rng, "t");
    let mut trials = Vec::new();
    for i in 0..6 {
        for j in 0..6 {
            trials.push(Trial::new(format!("e{i}"), format!("t{j}"), Some(Label::from_same_speaker(i % 3 == j % 3))));
        }
    }
    (enroll, test, trials)
}

#[test]
fn scores_do_not_depend_on_trial_order() {
    let (enroll, test, trials) = toy_sets();
    let cohort = Cohort::new(enroll.concat(&test).unwrap().filter(|e| e.utterance_id.ends_with(['0', '1', '2'])), 3).unwrap();
    let opts = ScoreOptions { snorm: Some(&cohort), ..Default::default() };
    let a = score_trials(&Backend::Cosine, &enroll, &test, &trials, &opts).unwrap();
    let mut reversed = trials.clone();
    reversed.reverse();
    let b = score_trials(&Backend::Cosine, &enroll, &test, &reversed, &opts).unwrap();
    let key = |s: &ScoreSet| {
        let mut v: Vec<(String, String, u64)> =
            s.entries().iter().map(|e| (e.enroll_utt.clone(), e.test_utt.clone(), e.score.to_bits())).collect();
        v.sort();
        v
    };
    assert_eq!(key(&a), key(&b));
    assert!(a.entries().iter().zip(&trials).all(|(e, t)| e.label == t.label && e.enroll_utt == t.enroll_utt));
}

#[test]
fn score_trials_examples() {
    let (enroll, test, _) = toy_sets();
    let same = vec![Trial::new("e0", "e0", None)];
    let s = score_trials(&Backend::Cosine, &enroll, &enroll, &same, &ScoreOptions::default()).unwrap();
    assert!((s.entries()[0].score - 1.0).abs() < 1e-15);

    let missing = vec![Trial::new("e0", "nope", None)];
    let err = score_trials(&Backend::Cosine, &enroll, &test, &missing, &ScoreOptions::default()).unwrap_err();
    assert!(matches!(err, Error::MissingUtterance(ref u) if u == "nope"));

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = MlpParameters::init(5, &[7], Activation::Tanh, &mut rng).unwrap();
    let trials = vec![Trial::new("e1", "t2", None), Trial::new("e3", "t0", None)];
    let opts = ScoreOptions { reconstruct_test: true, svr: Some(&net), ..Default::default() };
    let got = score_trials(&Backend::Cosine, &enroll, &test, &trials, &opts).unwrap();
    for (entry, t) in got.entries().iter().zip(&trials) {
        let want = cosine_similarity(
            enroll.vector(&t.enroll_utt).unwrap(),
            &net.forward(test.vector(&t.test_utt).unwrap()).unwrap(),
        )
        .unwrap();
        assert_eq!(entry.score, want);
    }
}
