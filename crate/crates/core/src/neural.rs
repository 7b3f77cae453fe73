//! Dense ReLU networks with exact reverse-mode gradients, an Adam optimiser,
//! the tanh-squashed Gaussian policy head, and a binary weights format.
//!
//! Everything runs on row-major batches: a forward pass maps a `(batch, in)`
//! matrix to `(batch, out)`. Weights are stored `(in, out)` so a layer is
//! `x · W + b`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("bad checkpoint: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NeuralError> = std::result::Result<T, E>;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Keeps `log(1 - tanh(u)^2)` finite when the squashed action saturates.
pub const SQUASH_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `(in, out)`
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((inputs, outputs)),
            biases: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }
}

/// Multilayer perceptron: ReLU on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations kept by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer; `layer_inputs[0]` is the network input.
    layer_inputs: Vec<Array2<f64>>,
}

/// Parameter gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net.layers.iter().map(|l| Dense::zeros(l.inputs(), l.outputs())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.biases += &b.biases;
        }
    }
}

impl Mlp {
    /// Layers sized `sizes[0] -> sizes[1] -> ...`, weights and biases uniform
    /// in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_simple_fn((w[0], w[1]), || rng.random_range(-bound..bound)),
                    biases: Array1::from_shape_simple_fn(w[1], || rng.random_range(-bound..bound)),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(NeuralError::ShapeMismatch("network has no layers".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(NeuralError::ShapeMismatch(format!(
                    "layer {i} outputs {} but layer {} takes {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        if let Some(i) = layers.iter().position(|l| l.biases.len() != l.outputs()) {
            return Err(NeuralError::ShapeMismatch(format!("layer {i} bias length")));
        }
        Ok(Self { layers })
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_size(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_size()];
        sizes.extend(self.layers.iter().map(Dense::outputs));
        sizes
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn forward(&self, input: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if input.ncols() != self.input_size() {
            return Err(NeuralError::ShapeMismatch(format!(
                "input has {} columns, network expects {}",
                input.ncols(),
                self.input_size()
            )));
        }
        let last = self.layers.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut activation = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = activation.dot(&layer.weights);
            z += &layer.biases;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            layer_inputs.push(std::mem::replace(&mut activation, z));
        }
        Ok((activation, ForwardCache { layer_inputs }))
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.forward(input).map(|(out, _)| out)
    }

    /// Single-sample convenience wrapper around [`Mlp::predict`].
    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| NeuralError::ShapeMismatch(e.to_string()))?;
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    /// Reverse-mode pass. Returns parameter gradients and the gradient with
    /// respect to the network input, for `loss` whose gradient with respect
    /// to the output is `output_grad`.
    pub fn backward(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)> {
        self.backward_impl(cache, output_grad, true)
            .map(|(g, d)| (g.expect("parameter gradients requested"), d))
    }

    /// Gradient with respect to the input only; skips parameter gradients.
    pub fn input_gradient(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.backward_impl(cache, output_grad, false).map(|(_, d)| d)
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<f64>,
        with_params: bool,
    ) -> Result<(Option<Gradients>, Array2<f64>)> {
        if cache.layer_inputs.len() != self.layers.len() {
            return Err(NeuralError::ShapeMismatch("cache belongs to a different network".into()));
        }
        let batch = cache.layer_inputs[0].nrows();
        if output_grad.dim() != (batch, self.output_size()) {
            return Err(NeuralError::ShapeMismatch(format!(
                "output gradient is {:?}, expected ({batch}, {})",
                output_grad.dim(),
                self.output_size()
            )));
        }
        let mut grads = with_params.then(|| Vec::with_capacity(self.layers.len()));
        let mut delta = output_grad.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.layer_inputs[i];
            if let Some(grads) = grads.as_mut() {
                grads.push(Dense {
                    weights: input.t().dot(&delta),
                    biases: delta.sum_axis(Axis(0)),
                });
            }
            let mut upstream = delta.dot(&layer.weights.t());
            if i > 0 {
                // ReLU derivative: the layer input is the previous ReLU output.
                Zip::from(&mut upstream).and(input).for_each(|g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            delta = upstream;
        }
        let grads = grads.map(|mut layers| {
            layers.reverse();
            Gradients { layers }
        });
        Ok((grads, delta))
    }

    /// Polyak average toward `source`: `self <- tau * source + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) -> Result<()> {
        self.check_same_shape(source)?;
        for (dst, src) in self.layers.iter_mut().zip(&source.layers) {
            Zip::from(&mut dst.weights)
                .and(&src.weights)
                .for_each(|d, &s| *d = tau * s + (1.0 - tau) * *d);
            Zip::from(&mut dst.biases)
                .and(&src.biases)
                .for_each(|d, &s| *d = tau * s + (1.0 - tau) * *d);
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: &Mlp) -> Result<()> {
        if self.sizes() != other.sizes() {
            return Err(NeuralError::ShapeMismatch(format!(
                "network sizes {:?} vs {:?}",
                self.sizes(),
                other.sizes()
            )));
        }
        Ok(())
    }

    /// Flattened parameters, layer by layer, weights row-major then biases.
    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.biases.iter());
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.biases.iter()).all(|v| v.is_finite()))
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(MLP_MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        self.write_body(out)
    }

    fn write_body<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for l in &self.layers {
            out.write_all(&(l.inputs() as u32).to_le_bytes())?;
            out.write_all(&(l.outputs() as u32).to_le_bytes())?;
        }
        for l in &self.layers {
            for v in l.weights.iter().chain(l.biases.iter()) {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(input: &mut R) -> Result<Self> {
        expect_header(input, MLP_MAGIC)?;
        Self::read_body(input)
    }

    fn read_body<R: Read>(input: &mut R) -> Result<Self> {
        let n_layers = read_u32(input)? as usize;
        if n_layers == 0 || n_layers > 64 {
            return Err(NeuralError::Format(format!("implausible layer count {n_layers}")));
        }
        let mut shapes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            shapes.push((read_u32(input)? as usize, read_u32(input)? as usize));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (rows, cols) in shapes {
            let weights = (0..rows * cols).map(|_| read_f64(input)).collect::<Result<Vec<_>>>()?;
            let biases = (0..cols).map(|_| read_f64(input)).collect::<Result<Vec<_>>>()?;
            layers.push(Dense {
                weights: Array2::from_shape_vec((rows, cols), weights)
                    .map_err(|e| NeuralError::Format(e.to_string()))?,
                biases: Array1::from(biases),
            });
        }
        Self::from_layers(layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

const MLP_MAGIC: &[u8; 4] = b"DSMW";
const ADAM_MAGIC: &[u8; 4] = b"DSMA";
const FORMAT_VERSION: u32 = 1;

fn expect_header<R: Read>(input: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut found = [0u8; 4];
    input.read_exact(&mut found)?;
    if &found != magic {
        return Err(NeuralError::Format(format!("bad magic {found:?}")));
    }
    let version = read_u32(input)?;
    if version != FORMAT_VERSION {
        return Err(NeuralError::Format(format!("unsupported version {version}")));
    }
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Adam optimiser state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    first_moment: Gradients,
    second_moment: Gradients,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Adam {
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        Self {
            first_moment: Gradients::zeros_like(net),
            second_moment: Gradients::zeros_like(net),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// One bias-corrected Adam update of `params` along `grads`.
    pub fn step(&mut self, params: &mut Mlp, grads: &Gradients) -> Result<()> {
        let shapes_match = params.layers.len() == grads.layers.len()
            && params.layers.len() == self.first_moment.layers.len()
            && params
                .layers
                .iter()
                .zip(&grads.layers)
                .zip(&self.first_moment.layers)
                .all(|((p, g), m)| p.weights.dim() == g.weights.dim() && p.weights.dim() == m.weights.dim());
        if !shapes_match {
            return Err(NeuralError::ShapeMismatch("gradients, moments and parameters differ".into()));
        }
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let t = self.step as i32;
        let bias1 = 1.0 - b1.powi(t);
        let bias2 = 1.0 - b2.powi(t);
        let lr = self.learning_rate;
        let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((p, g), m), v) in params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first_moment.layers)
            .zip(&mut self.second_moment.layers)
        {
            Zip::from(&mut p.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(update);
            Zip::from(&mut p.biases)
                .and(&g.biases)
                .and(&mut m.biases)
                .and(&mut v.biases)
                .for_each(update);
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(ADAM_MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&self.step.to_le_bytes())?;
        for v in [self.learning_rate, self.beta1, self.beta2, self.epsilon] {
            out.write_all(&v.to_le_bytes())?;
        }
        Mlp {
            layers: self.first_moment.layers.clone(),
        }
        .write_body(out)?;
        Mlp {
            layers: self.second_moment.layers.clone(),
        }
        .write_body(out)
    }

    pub fn read_from<R: Read>(input: &mut R) -> Result<Self> {
        expect_header(input, ADAM_MAGIC)?;
        let step = read_u64(input)?;
        let learning_rate = read_f64(input)?;
        let beta1 = read_f64(input)?;
        let beta2 = read_f64(input)?;
        let epsilon = read_f64(input)?;
        let first = Mlp::read_body(input)?;
        let second = Mlp::read_body(input)?;
        first.check_same_shape(&second)?;
        Ok(Self {
            first_moment: Gradients { layers: first.layers },
            second_moment: Gradients { layers: second.layers },
            step,
            learning_rate,
            beta1,
            beta2,
            epsilon,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

/// A reparameterised draw from the tanh-squashed diagonal Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct SquashedSample {
    pub action: Vec<f64>,
    pub log_prob: f64,
}

pub fn clamp_log_std(log_std: f64) -> f64 {
    log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

/// `u = mean + exp(log_std) * noise`, `action = tanh(u)`, with the
/// change-of-variables log density. `log_std` is clamped first.
pub fn squashed_gaussian_sample(mean: &[f64], log_std: &[f64], noise: &[f64]) -> SquashedSample {
    assert!(
        mean.len() == log_std.len() && mean.len() == noise.len(),
        "mean, log_std and noise must have equal length"
    );
    let half_log_two_pi = 0.5 * (2.0 * PI).ln();
    let mut log_prob = 0.0;
    let action = mean
        .iter()
        .zip(log_std)
        .zip(noise)
        .map(|((&mu, &ls), &eps)| {
            let ls = clamp_log_std(ls);
            let u = mu + ls.exp() * eps;
            let a = u.tanh();
            log_prob += -0.5 * eps * eps - ls - half_log_two_pi - (1.0 - a * a + SQUASH_EPS).ln();
            a
        })
        .collect();
    SquashedSample { action, log_prob }
}
