//! Fully connected network with a linear output layer.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::util::join_exact;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Activation> {
        match s {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// `weights` is out x in; the layer computes `weights * x + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer {
            weights: DMatrix::zeros(out_dim, in_dim),
            bias: DVector::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// Parameters of the reconstruction network. Input and output dimension are equal.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParameters {
    layers: Vec<DenseLayer>,
    activation: Activation,
}

/// Gradient with the same layout as [`MlpParameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub layers: Vec<DenseLayer>,
}

impl MlpGradient {
    pub fn zeros_like(params: &MlpParameters) -> Self {
        MlpGradient {
            layers: params
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.in_dim(), l.out_dim()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGradient) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights *= factor;
            l.bias *= factor;
        }
    }

    /// Flattened in the order of [`MlpParameters::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }
}

fn flatten(layers: &[DenseLayer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        for r in 0..l.out_dim() {
            out.extend(l.weights.row(r).iter());
        }
        out.extend(l.bias.iter());
    }
    out
}

/// Cached intermediate values of a batched forward pass (one column per sample).
pub(crate) struct ForwardCache {
    pre: Vec<DMatrix<f64>>,
    post: Vec<DMatrix<f64>>,
}

impl ForwardCache {
    pub(crate) fn output(&self) -> &DMatrix<f64> {
        self.post.last().expect("network has at least one layer")
    }
}

impl MlpParameters {
    pub fn from_layers(layers: Vec<DenseLayer>, activation: Activation) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidConfig("network needs at least one layer".into()))?;
        let d = first.in_dim();
        if d == 0 {
            return Err(Error::InvalidConfig("network input dimension is 0".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].out_dim(),
                    found: pair[1].in_dim(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.out_dim() {
                return Err(Error::DimensionMismatch {
                    expected: l.out_dim(),
                    found: l.bias.len(),
                });
            }
            if !l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::InvalidConfig("non-finite network parameter".into()));
            }
        }
        let out = layers.last().map(DenseLayer::out_dim).unwrap_or(d);
        if out != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: out,
            });
        }
        Ok(MlpParameters { layers, activation })
    }

    /// Glorot-uniform weights, zero biases. `hidden` lists the hidden widths.
    pub fn init<R: Rng + ?Sized>(
        dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dim == 0 || hidden.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        let widths: Vec<usize> = std::iter::once(dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(dim))
            .collect();
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
                // Row-major draw order so the stream does not depend on storage layout.
                let mut weights = DMatrix::zeros(fan_out, fan_in);
                for r in 0..fan_out {
                    for c in 0..fan_in {
                        weights[(r, c)] = dist.sample(rng);
                    }
                }
                DenseLayer {
                    weights,
                    bias: DVector::zeros(fan_out),
                }
            })
            .collect();
        MlpParameters::from_layers(layers, activation)
    }

    /// A single linear layer computing the identity map.
    pub fn identity(dim: usize) -> Self {
        MlpParameters {
            layers: vec![DenseLayer {
                weights: DMatrix::identity(dim, dim),
                bias: DVector::zeros(dim),
            }],
            activation: Activation::Relu,
        }
    }

    pub fn dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    /// Layer widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.dim())
            .chain(self.layers.iter().map(DenseLayer::out_dim))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// All parameters, layer by layer: weights row-major, then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    /// Inverse of [`to_flat`](Self::to_flat) on a network of the same shape.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                found: flat.len(),
            });
        }
        let mut out = self.clone();
        let mut it = flat.iter().copied();
        for l in &mut out.layers {
            for r in 0..l.out_dim() {
                for c in 0..l.in_dim() {
                    l.weights[(r, c)] = it.next().expect("length checked");
                }
            }
            for b in l.bias.iter_mut() {
                *b = it.next().expect("length checked");
            }
        }
        Ok(out)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let mut h = DVector::from_column_slice(x);
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.weights * &h;
            z += &layer.bias;
            if k != last {
                z.apply(|v| *v = self.activation.apply(*v));
            }
            h = z;
        }
        Ok(h.as_slice().to_vec())
    }

    /// Forward pass over the columns of `inputs` (dim x n).
    pub(crate) fn forward_batch(&self, inputs: DMatrix<f64>) -> ForwardCache {
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len() + 1);
        post.push(inputs);
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = &layer.weights * post.last().expect("input pushed");
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            let a = if k != last {
                z.map(|v| self.activation.apply(v))
            } else {
                z.clone()
            };
            pre.push(z);
            post.push(a);
        }
        ForwardCache { pre, post }
    }

    /// Backpropagates `d_output` (dim x n, gradient of the objective w.r.t. each
    /// output column) and returns the parameter gradient summed over columns.
    pub(crate) fn backward_batch(&self, cache: &ForwardCache, d_output: DMatrix<f64>) -> MlpGradient {
        let n_layers = self.layers.len();
        let mut grads = Vec::with_capacity(n_layers);
        let mut delta = d_output;
        for k in (0..n_layers).rev() {
            if k != n_layers - 1 {
                let act = self.activation;
                delta.zip_zip_apply(&cache.pre[k], &cache.post[k + 1], |d, z, a| {
                    *d *= act.derivative(z, a);
                });
            }
            let a_prev = &cache.post[k];
            let d_weights = &delta * a_prev.transpose();
            let d_bias = delta.column_sum();
            if k > 0 {
                let next = self.layers[k].weights.tr_mul(&delta);
                grads.push(DenseLayer {
                    weights: d_weights,
                    bias: d_bias,
                });
                delta = next;
            } else {
                grads.push(DenseLayer {
                    weights: d_weights,
                    bias: d_bias,
                });
            }
        }
        grads.reverse();
        MlpGradient { layers: grads }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }
}

const MODEL_HEADER: &str = "# svr-mlp v1";

/// Text model file: header, activation, widths, then one `weight <layer>` line
/// per matrix row and one `bias <layer>` line per layer. Values are written in
/// shortest round-trip form so a reload is bit-exact.
pub fn save_model<W: Write>(params: &MlpParameters, mut sink: W) -> Result<()> {
    writeln!(sink, "{MODEL_HEADER}")?;
    writeln!(sink, "activation {}", params.activation.as_str())?;
    let widths: Vec<String> = params.widths().iter().map(|w| w.to_string()).collect();
    writeln!(sink, "widths {}", widths.join(" "))?;
    for (k, l) in params.layers.iter().enumerate() {
        for r in 0..l.out_dim() {
            writeln!(sink, "weight {k} {}", join_exact(l.weights.row(r).iter().copied()))?;
        }
        writeln!(sink, "bias {k} {}", join_exact(l.bias.iter().copied()))?;
    }
    sink.flush()?;
    Ok(())
}

pub fn load_model<R: BufRead>(source: R) -> Result<MlpParameters> {
    let mut lines = source
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)))
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty()));
    let mut next = |what: &str| -> Result<(usize, String)> {
        lines
            .next()
            .ok_or_else(|| Error::format(0, format!("unexpected end of model file, expected {what}")))?
            .map_err(Error::from)
    };

    let (_, header) = next("header")?;
    if header.trim() != MODEL_HEADER {
        return Err(Error::format(1, format!("bad model header {header:?}")));
    }
    let (ln, line) = next("activation")?;
    let activation = match line.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["activation", a] => Activation::parse(a)
            .ok_or_else(|| Error::format(ln, format!("unknown activation {a:?}")))?,
        _ => return Err(Error::format(ln, "expected `activation <relu|tanh>`")),
    };
    let (ln, line) = next("widths")?;
    let mut tokens = line.split_whitespace();
    if tokens.next() != Some("widths") {
        return Err(Error::format(ln, "expected `widths ...`"));
    }
    let widths = tokens
        .map(|t| t.parse::<usize>().map_err(|_| Error::format(ln, format!("bad width {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if widths.len() < 2 {
        return Err(Error::format(ln, "need at least two widths"));
    }

    let parse_row = |ln: usize, line: &str, tag: &str, k: usize, len: usize| -> Result<Vec<f64>> {
        let mut tokens = line.split_whitespace();
        if tokens.next() != Some(tag) || tokens.next() != Some(k.to_string().as_str()) {
            return Err(Error::format(ln, format!("expected `{tag} {k} ...`")));
        }
        let values = tokens
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::format(ln, format!("bad value {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != len {
            return Err(Error::format(ln, format!("expected {len} values, found {}", values.len())));
        }
        Ok(values)
    };

    let mut layers = Vec::with_capacity(widths.len() - 1);
    for (k, w) in widths.windows(2).enumerate() {
        let (in_dim, out_dim) = (w[0], w[1]);
        let mut weights = DMatrix::zeros(out_dim, in_dim);
        for r in 0..out_dim {
            let (ln, line) = next("weight row")?;
            let row = parse_row(ln, &line, "weight", k, in_dim)?;
            for (c, v) in row.into_iter().enumerate() {
                weights[(r, c)] = v;
            }
        }
        let (ln, line) = next("bias")?;
        let bias = DVector::from_vec(parse_row(ln, &line, "bias", k, out_dim)?);
        layers.push(DenseLayer { weights, bias });
    }
    MlpParameters::from_layers(layers, activation)
}
