//! Two-covariance PLDA: `x = mu + y + e`, `y ~ N(0, B)`, `e ~ N(0, W)`.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::embedding::EmbeddingSet;
use crate::util::join_exact;
use crate::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
/// Relative diagonal loading applied to near-singular covariances.
const REGULARIZATION: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct PldaModel {
    pub mu: DVector<f64>,
    /// Between-speaker covariance.
    pub b: DMatrix<f64>,
    /// Within-speaker covariance.
    pub w: DMatrix<f64>,
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..m.nrows() {
        for c in (r + 1)..m.ncols() {
            worst = worst.max((m[(r, c)] - m[(c, r)]).abs());
        }
    }
    worst
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Cholesky factor plus derived inverse and log-determinant.
struct SpdFactor {
    inverse: DMatrix<f64>,
    log_det: f64,
}

fn factor(m: &DMatrix<f64>, what: &str) -> Result<SpdFactor> {
    let chol: Cholesky<f64, Dyn> = Cholesky::new(m.clone())
        .ok_or_else(|| Error::SingularCovariance(format!("{what} is not positive definite")))?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    if !log_det.is_finite() {
        return Err(Error::SingularCovariance(format!("{what} has a degenerate determinant")));
    }
    Ok(SpdFactor {
        inverse: symmetrize(&chol.inverse()),
        log_det,
    })
}

/// Adds `1e-8 * scale / d` to the diagonal when `m` is near-singular relative
/// to `scale` (a trace), and fails if that is still not enough.
fn regularize(m: DMatrix<f64>, scale: f64, what: &str) -> Result<DMatrix<f64>> {
    let d = m.nrows() as f64;
    let m = symmetrize(&m);
    let load = REGULARIZATION * scale / d;
    if !(load > 0.0 && load.is_finite()) {
        return Err(Error::SingularCovariance(format!("{what}: data has no variance")));
    }
    if min_eigenvalue(&m) >= load && Cholesky::new(m.clone()).is_some() {
        return Ok(m);
    }
    let mut loaded = m;
    for i in 0..loaded.nrows() {
        loaded[(i, i)] += load;
    }
    if Cholesky::new(loaded.clone()).is_none() {
        return Err(Error::SingularCovariance(format!(
            "{what} remains singular after regularization"
        )));
    }
    Ok(loaded)
}

impl PldaModel {
    pub fn new(mu: DVector<f64>, b: DMatrix<f64>, w: DMatrix<f64>) -> Result<Self> {
        let model = PldaModel { mu, b, w };
        model.validate()?;
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for (m, name) in [(&self.b, "B"), (&self.w, "W")] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: m.nrows(),
                });
            }
            if !m.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} has non-finite entries")));
            }
            if max_asymmetry(m) > SYMMETRY_TOL {
                return Err(Error::InvalidConfig(format!("{name} is not symmetric")));
            }
        }
        if min_eigenvalue(&self.b) < -SYMMETRY_TOL {
            return Err(Error::InvalidConfig("B is not positive semi-definite".into()));
        }
        if min_eigenvalue(&self.w) <= 0.0 {
            return Err(Error::SingularCovariance("W is not positive definite".into()));
        }
        Ok(())
    }

    pub fn scorer(&self) -> Result<PldaScorer> {
        PldaScorer::new(self)
    }

    /// Log-likelihood ratio of same- vs different-speaker hypotheses.
    pub fn score(&self, e: &[f64], t: &[f64]) -> Result<f64> {
        self.scorer()?.score(e, t)
    }
}

/// Precomputed quadratic form for fast trial scoring.
///
/// With `T = B + W`, `S = T - B T^-1 B`:
/// `llr = -1/2 (e'Qe + t'Qt + e'Pt + t'Pe) + 1/2 (log|T| - log|S|)` on
/// mean-removed vectors, where `Q = S^-1 - T^-1` and `P = -T^-1 B S^-1`.
#[derive(Debug, Clone)]
pub struct PldaScorer {
    mu: DVector<f64>,
    q: DMatrix<f64>,
    p: DMatrix<f64>,
    constant: f64,
}

impl PldaScorer {
    pub fn new(model: &PldaModel) -> Result<Self> {
        let total = &model.b + &model.w;
        let t = factor(&total, "B + W")?;
        let schur = symmetrize(&(&total - &model.b * &t.inverse * &model.b));
        let s = factor(&schur, "B + W - B (B + W)^-1 B")?;
        let q = symmetrize(&(&s.inverse - &t.inverse));
        let p = symmetrize(&(-(&t.inverse * &model.b * &s.inverse)));
        Ok(PldaScorer {
            mu: model.mu.clone(),
            q,
            p,
            constant: 0.5 * (t.log_det - s.log_det),
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn score(&self, e: &[f64], t: &[f64]) -> Result<f64> {
        let d = self.dim();
        for v in [e, t] {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: v.len(),
                });
            }
        }
        let e = DVector::from_column_slice(e) - &self.mu;
        let t = DVector::from_column_slice(t) - &self.mu;
        // Terms are paired before summing so that swapping e and t is bit-exact.
        let quad = self.q.dot_quad(&e) + self.q.dot_quad(&t);
        let cross = e.dot(&(&self.p * &t)) + t.dot(&(&self.p * &e));
        Ok(-0.5 * (quad + cross) + self.constant)
    }
}

trait QuadForm {
    fn dot_quad(&self, x: &DVector<f64>) -> f64;
}

impl QuadForm for DMatrix<f64> {
    fn dot_quad(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(self * x))
    }
}

/// Sufficient statistics of a labeled, mean-removed training set.
struct SpeakerStats {
    /// (utterance count, sum of centered vectors) per speaker.
    speakers: Vec<(usize, DVector<f64>)>,
    /// Sum of x x^T over all centered vectors.
    scatter: DMatrix<f64>,
    n_total: usize,
}

fn collect_stats(data: &EmbeddingSet) -> Result<(DVector<f64>, SpeakerStats)> {
    let d = data.dim();
    let n = data.len();
    if n == 0 {
        return Err(Error::InsufficientData("empty PLDA training set".into()));
    }
    let mut mu = DVector::zeros(d);
    for e in data {
        mu += DVector::from_column_slice(&e.vector);
    }
    mu /= n as f64;

    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut speakers: Vec<(usize, DVector<f64>)> = Vec::new();
    let mut scatter = DMatrix::zeros(d, d);
    for e in data {
        let spk = e.speaker_id.as_deref().ok_or_else(|| {
            Error::InsufficientData(format!("utterance {} has no speaker id", e.utterance_id))
        })?;
        let x = DVector::from_column_slice(&e.vector) - &mu;
        scatter.ger(1.0, &x, &x, 1.0);
        let next = speakers.len();
        let s = *index.entry(spk).or_insert(next);
        if s == next {
            speakers.push((0, DVector::zeros(d)));
        }
        speakers[s].0 += 1;
        speakers[s].1 += x;
    }
    if speakers.len() < 2 {
        return Err(Error::InsufficientData("PLDA training needs at least two speakers".into()));
    }
    if speakers.iter().all(|(c, _)| *c < 2) {
        return Err(Error::InsufficientData(
            "PLDA training needs a speaker with at least two utterances".into(),
        ));
    }
    Ok((
        mu,
        SpeakerStats {
            speakers,
            scatter,
            n_total: n,
        },
    ))
}

/// Posterior precision inverse `(B^-1 + n W^-1)^-1` and its log-determinant
/// (of the precision), cached per utterance count.
fn posterior_covs(
    stats: &SpeakerStats,
    b_inv: &DMatrix<f64>,
    w_inv: &DMatrix<f64>,
) -> Result<HashMap<usize, SpdFactor>> {
    let mut out = HashMap::new();
    for (n, _) in &stats.speakers {
        if out.contains_key(n) {
            continue;
        }
        let precision = symmetrize(&(b_inv + w_inv * (*n as f64)));
        out.insert(*n, factor(&precision, "posterior precision")?);
    }
    Ok(out)
}

/// Exact marginal log-likelihood of the training data under `(0, B, W)`.
fn log_likelihood(stats: &SpeakerStats, b: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<f64> {
    let d = b.nrows() as f64;
    let bf = factor(b, "B")?;
    let wf = factor(w, "W")?;
    let post = posterior_covs(stats, &bf.inverse, &wf.inverse)?;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut ll = -0.5 * wf.inverse.component_mul(&stats.scatter).sum();
    for (n, f) in &stats.speakers {
        let nf = *n as f64;
        let pf = &post[n];
        let ft = &wf.inverse * f;
        ll += -0.5 * nf * d * ln2pi - 0.5 * nf * wf.log_det - 0.5 * bf.log_det - 0.5 * pf.log_det
            + 0.5 * ft.dot(&(&pf.inverse * &ft));
    }
    Ok(ll)
}

#[derive(Debug, Clone)]
pub struct PldaTraining {
    pub model: PldaModel,
    /// Marginal log-likelihood after each EM iteration.
    pub objective: Vec<f64>,
}

/// Fits `(mu, B, W)` by EM. `mu` is the global mean; `B`, `W` start from the
/// between-class and within-class scatter of the speaker means.
pub fn plda_train_em(data: &EmbeddingSet, iters: usize) -> Result<PldaTraining> {
    if iters == 0 {
        return Err(Error::InvalidConfig("EM needs at least one iteration".into()));
    }
    let (mu, stats) = collect_stats(data)?;
    let d = data.dim();
    let n_spk = stats.speakers.len() as f64;
    let n_tot = stats.n_total as f64;
    let scale = stats.scatter.trace() / n_tot;

    let mut b = DMatrix::zeros(d, d);
    let mut means_scatter = DMatrix::zeros(d, d);
    for (n, f) in &stats.speakers {
        let m = f / (*n as f64);
        b.ger(1.0 / n_spk, &m, &m, 1.0);
        means_scatter.ger(*n as f64, &m, &m, 1.0);
    }
    let mut w = (&stats.scatter - &means_scatter) / n_tot;
    b = regularize(b, scale, "between-speaker covariance")?;
    w = regularize(w, scale, "within-speaker covariance")?;

    let mut objective = Vec::with_capacity(iters);
    for _ in 0..iters {
        let bf = factor(&b, "B")?;
        let wf = factor(&w, "W")?;
        let post = posterior_covs(&stats, &bf.inverse, &wf.inverse)?;

        let mut b_acc = DMatrix::zeros(d, d);
        let mut w_acc = stats.scatter.clone();
        for (n, f) in &stats.speakers {
            let cov = &post[n].inverse;
            let y = cov * (&wf.inverse * f);
            let mut second = cov.clone();
            second.ger(1.0, &y, &y, 1.0);
            b_acc += &second;
            w_acc.ger(-1.0, f, &y, 1.0);
            w_acc.ger(-1.0, &y, f, 1.0);
            w_acc += second * (*n as f64);
        }
        b = regularize(b_acc / n_spk, scale, "between-speaker covariance")?;
        w = regularize(w_acc / n_tot, scale, "within-speaker covariance")?;
        objective.push(log_likelihood(&stats, &b, &w)?);
    }
    Ok(PldaTraining {
        model: PldaModel { mu, b, w },
        objective,
    })
}

/// Shifts `model` toward the statistics of an unlabeled adaptation set.
///
/// The adaptation covariance `T_a` is split into between/within parts with the
/// model's own ratio `r = tr(B) / tr(B + W)`; every parameter is then
/// `(1 - alpha) * original + alpha * adapted`.
pub fn plda_adapt(model: &PldaModel, adaptation: &EmbeddingSet, alpha: f64) -> Result<PldaModel> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("alpha {alpha} outside [0, 1]")));
    }
    if adaptation.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: adaptation.dim(),
        });
    }
    if adaptation.len() < 2 {
        return Err(Error::InsufficientData("adaptation needs at least two embeddings".into()));
    }
    if alpha == 0.0 {
        return Ok(model.clone());
    }
    let d = model.dim();
    let n = adaptation.len() as f64;
    let mut mu_a = DVector::zeros(d);
    for e in adaptation {
        mu_a += DVector::from_column_slice(&e.vector);
    }
    mu_a /= n;
    let mut t_a = DMatrix::zeros(d, d);
    for e in adaptation {
        let x = DVector::from_column_slice(&e.vector) - &mu_a;
        t_a.ger(1.0 / n, &x, &x, 1.0);
    }
    let t_a = symmetrize(&t_a);
    let tr_b = model.b.trace();
    let r = tr_b / (tr_b + model.w.trace());
    let b_a = &t_a * r;
    let w_a = &t_a * (1.0 - r);

    let mix = |orig: &DMatrix<f64>, adapted: &DMatrix<f64>| {
        orig.zip_map(adapted, |o, a| (1.0 - alpha) * o + alpha * a)
    };
    Ok(PldaModel {
        mu: model.mu.zip_map(&mu_a, |o, a| (1.0 - alpha) * o + alpha * a),
        b: mix(&model.b, &b_a),
        w: mix(&model.w, &w_a),
    })
}

const PLDA_HEADER: &str = "# plda v1";

pub fn save_plda<W: Write>(model: &PldaModel, mut sink: W) -> Result<()> {
    writeln!(sink, "{PLDA_HEADER} dim={}", model.dim())?;
    writeln!(sink, "mu {}", join_exact(model.mu.iter().copied()))?;
    for (tag, m) in [("b", &model.b), ("w", &model.w)] {
        for r in 0..m.nrows() {
            writeln!(sink, "{tag} {}", join_exact(m.row(r).iter().copied()))?;
        }
    }
    sink.flush()?;
    Ok(())
}

pub fn load_plda<R: BufRead>(source: R) -> Result<PldaModel> {
    let lines: Vec<String> = source
        .lines()
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|l| !l.trim().is_empty())
        .collect();
    let header = lines.first().ok_or_else(|| Error::format(1, "empty PLDA file"))?;
    let d = header
        .strip_prefix(PLDA_HEADER)
        .and_then(|rest| rest.trim().strip_prefix("dim="))
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::format(1, format!("bad PLDA header {header:?}")))?;
    if lines.len() != 2 + 2 * d {
        return Err(Error::format(0, format!("expected {} lines, found {}", 2 + 2 * d, lines.len())));
    }
    let row = |i: usize, tag: &str| -> Result<Vec<f64>> {
        let mut tokens = lines[i].split_whitespace();
        if tokens.next() != Some(tag) {
            return Err(Error::format(i + 1, format!("expected `{tag} ...`")));
        }
        let v = tokens
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::format(i + 1, format!("bad value {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if v.len() != d {
            return Err(Error::format(i + 1, format!("expected {d} values")));
        }
        Ok(v)
    };
    let mu = DVector::from_vec(row(1, "mu")?);
    let mut b = DMatrix::zeros(d, d);
    let mut w = DMatrix::zeros(d, d);
    for r in 0..d {
        b.row_mut(r).copy_from_slice(&row(2 + r, "b")?);
        w.row_mut(r).copy_from_slice(&row(2 + d + r, "w")?);
    }
    PldaModel::new(mu, b, w)
}
