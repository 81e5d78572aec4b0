//! Dense feed-forward feature extractor.
//!
//! Each layer computes `post = act(W · input + b)`, with `W` stored row-major
//! as `output_dim × input_dim`. Gradients are derived by hand; there is no
//! autodiff machinery. All math is `f64`.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::error::{DncmError, Result};
use crate::{fmt_real, seeding};

const WEIGHTS_MAGIC: &str = "DNCM-WEIGHTS";
const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    /// Linear pass-through; only meant for tests and exact-equation checks.
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative w.r.t. the pre-activation. ReLU'(0) is taken as 0.
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Elementwise `max(0, x)`.
pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| Activation::Relu.apply(v)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn relu(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            activation: Activation::Relu,
        }
    }
}

/// Build a ReLU layer chain `input → hidden[0] → … → hidden[n-1]`.
pub fn chain_spec(input_dim: usize, widths: &[usize]) -> Vec<LayerSpec> {
    let mut prev = input_dim;
    widths
        .iter()
        .map(|&w| {
            let spec = LayerSpec::relu(prev, w);
            prev = w;
            spec
        })
        .collect()
}

fn validate_spec(spec: &[LayerSpec]) -> Result<()> {
    if spec.is_empty() {
        return Err(DncmError::input("network spec has no layers"));
    }
    for (i, layer) in spec.iter().enumerate() {
        if layer.input_dim == 0 || layer.output_dim == 0 {
            return Err(DncmError::input(format!("layer {i} has a zero dimension")));
        }
        if i > 0 && spec[i - 1].output_dim != layer.input_dim {
            return Err(DncmError::input(format!(
                "layer {i} expects input {} but layer {} outputs {}",
                layer.input_dim,
                i - 1,
                spec[i - 1].output_dim
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    /// Row-major `output_dim × input_dim`.
    pub weights: Vec<f64>,
    /// Empty when biases are disabled for the stack.
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.spec.input_dim + col]
    }

    fn affine(&self, input: &[f64]) -> Vec<f64> {
        let n_in = self.spec.input_dim;
        self.weights
            .chunks_exact(n_in)
            .enumerate()
            .map(|(r, row)| {
                let dot: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum();
                dot + self.bias.get(r).copied().unwrap_or(0.0)
            })
            .collect()
    }
}

/// Ordered layer parameters of the extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStack {
    layers: Vec<Layer>,
    bias_enabled: bool,
}

impl WeightStack {
    /// Assemble a stack from explicit layers, checking shape chaining and finiteness.
    pub fn from_layers(layers: Vec<Layer>, bias_enabled: bool) -> Result<Self> {
        let spec: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        validate_spec(&spec)?;
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.spec.input_dim * l.spec.output_dim {
                return Err(DncmError::input(format!("layer {i} weight count mismatch")));
            }
            let want_bias = if bias_enabled { l.spec.output_dim } else { 0 };
            if l.bias.len() != want_bias {
                return Err(DncmError::input(format!("layer {i} bias length mismatch")));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(DncmError::input(format!(
                    "layer {i} has non-finite parameters"
                )));
            }
        }
        Ok(Self {
            layers,
            bias_enabled,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn bias_enabled(&self) -> bool {
        self.bias_enabled
    }

    pub fn spec(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.output_dim
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }

    /// Feature vector only; see [`forward`] for the cached variant.
    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let act = layer.spec.activation;
            cur = layer
                .affine(&cur)
                .into_iter()
                .map(|v| act.apply(v))
                .collect();
        }
        Ok(cur)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(DncmError::input(format!(
                "input has {} values, extractor expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Versioned text encoding; values carry 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{WEIGHTS_MAGIC} {WEIGHTS_VERSION} {} {}",
            self.layers.len(),
            u8::from(self.bias_enabled)
        )
        .unwrap();
        for layer in &self.layers {
            let s = layer.spec;
            writeln!(
                out,
                "{} {} {}",
                s.input_dim,
                s.output_dim,
                s.activation.name()
            )
            .unwrap();
            for row in layer.weights.chunks_exact(s.input_dim) {
                writeln!(out, "{}", join_reals(row)).unwrap();
            }
            if self.bias_enabled {
                writeln!(out, "{}", join_reals(&layer.bias)).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        const WHAT: &str = "weights";
        let mut lines = text.lines();
        let mut next = || {
            lines
                .next()
                .ok_or_else(|| DncmError::format(WHAT, "truncated"))
        };
        let header: Vec<&str> = next()?.split_whitespace().collect();
        if header.len() != 4 || header[0] != WEIGHTS_MAGIC {
            return Err(DncmError::format(WHAT, "bad header"));
        }
        if header[1] != WEIGHTS_VERSION.to_string() {
            return Err(DncmError::format(
                WHAT,
                format!("unsupported version {}", header[1]),
            ));
        }
        let n_layers: usize = parse_tok(WHAT, header[2])?;
        let bias_enabled = match header[3] {
            "0" => false,
            "1" => true,
            other => return Err(DncmError::format(WHAT, format!("bad bias flag {other}"))),
        };
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let dims: Vec<&str> = next()?.split_whitespace().collect();
            if dims.len() != 3 {
                return Err(DncmError::format(WHAT, "bad layer dimension line"));
            }
            let input_dim: usize = parse_tok(WHAT, dims[0])?;
            let output_dim: usize = parse_tok(WHAT, dims[1])?;
            let activation = Activation::parse(dims[2]).ok_or_else(|| {
                DncmError::format(WHAT, format!("unknown activation {}", dims[2]))
            })?;
            let mut weights = Vec::with_capacity(input_dim * output_dim);
            for _ in 0..output_dim {
                let row = parse_reals(WHAT, next()?)?;
                if row.len() != input_dim {
                    return Err(DncmError::format(WHAT, "weight row length mismatch"));
                }
                weights.extend(row);
            }
            let bias = if bias_enabled {
                let b = parse_reals(WHAT, next()?)?;
                if b.len() != output_dim {
                    return Err(DncmError::format(WHAT, "bias length mismatch"));
                }
                b
            } else {
                Vec::new()
            };
            layers.push(Layer {
                spec: LayerSpec {
                    input_dim,
                    output_dim,
                    activation,
                },
                weights,
                bias,
            });
        }
        Self::from_layers(layers, bias_enabled)
    }
}

pub(crate) fn join_reals(values: &[f64]) -> String {
    values
        .iter()
        .map(|&v| fmt_real(v))
        .collect::<Vec<_>>()
        .join(" ")
}

pub(crate) fn parse_tok<T: std::str::FromStr>(what: &'static str, tok: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| DncmError::format(what, format!("cannot parse `{tok}`")))
}

pub(crate) fn parse_reals(what: &'static str, line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| parse_tok(what, t))
        .collect()
}

/// Fan-in scaled uniform initialization, `U(-√(6/fan_in), √(6/fan_in))`, zero biases.
pub fn init_weights(spec: &[LayerSpec], seed: u64, bias_enabled: bool) -> Result<WeightStack> {
    validate_spec(spec)?;
    let mut rng = seeding::rng(seed);
    let layers = spec
        .iter()
        .map(|&s| {
            let bound = (6.0 / s.input_dim as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let weights = (0..s.input_dim * s.output_dim)
                .map(|_| rng.sample(dist))
                .collect();
            let bias = if bias_enabled {
                vec![0.0; s.output_dim]
            } else {
                Vec::new()
            };
            Layer {
                spec: s,
                weights,
                bias,
            }
        })
        .collect();
    WeightStack::from_layers(layers, bias_enabled)
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationCache {
    pub input: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

impl ActivationCache {
    pub fn feature(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&self.input)
    }
}

pub fn forward(params: &WeightStack, x: &[f64]) -> Result<(Vec<f64>, ActivationCache)> {
    params.check_input(x)?;
    let mut pre = Vec::with_capacity(params.layers.len());
    let mut post: Vec<Vec<f64>> = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let input = post.last().map(Vec::as_slice).unwrap_or(x);
        let z = layer.affine(input);
        let act = layer.spec.activation;
        post.push(z.iter().map(|&v| act.apply(v)).collect());
        pre.push(z);
    }
    let feature = post.last().cloned().unwrap_or_default();
    Ok((
        feature,
        ActivationCache {
            input: x.to_vec(),
            pre,
            post,
        },
    ))
}

/// Per-parameter loss derivatives, shaped like the [`WeightStack`] they differentiate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientStack {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl GradientStack {
    pub fn zeros_like(params: &WeightStack) -> Self {
        Self {
            weights: params
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            bias: params
                .layers
                .iter()
                .map(|l| vec![0.0; l.bias.len()])
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GradientStack) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += b;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| w.iter().chain(b))
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .zip(self.bias.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    fn congruent_with(&self, params: &WeightStack) -> bool {
        self.weights.len() == params.layers.len()
            && self.bias.len() == params.layers.len()
            && params.layers.iter().enumerate().all(|(i, l)| {
                self.weights[i].len() == l.weights.len() && self.bias[i].len() == l.bias.len()
            })
    }
}

/// Backpropagate `∂L/∂feature` through the network recorded in `cache`.
pub fn backward(
    params: &WeightStack,
    cache: &ActivationCache,
    grad_wrt_feature: &[f64],
) -> Result<GradientStack> {
    let n = params.layers.len();
    if cache.pre.len() != n || cache.post.len() != n || cache.input.len() != params.input_dim() {
        return Err(DncmError::input(
            "activation cache does not match the network",
        ));
    }
    for (i, l) in params.layers.iter().enumerate() {
        if cache.pre[i].len() != l.spec.output_dim || cache.post[i].len() != l.spec.output_dim {
            return Err(DncmError::input(format!(
                "activation cache layer {i} has wrong width"
            )));
        }
    }
    if grad_wrt_feature.len() != params.output_dim() {
        return Err(DncmError::input(format!(
            "feature gradient has {} values, network outputs {}",
            grad_wrt_feature.len(),
            params.output_dim()
        )));
    }

    let mut grads = GradientStack::zeros_like(params);
    // delta = ∂L/∂pre for the current layer
    let mut delta: Vec<f64> = grad_wrt_feature
        .iter()
        .zip(&cache.pre[n - 1])
        .map(|(g, &z)| g * params.layers[n - 1].spec.activation.derivative(z))
        .collect();

    for i in (0..n).rev() {
        let layer = &params.layers[i];
        let n_in = layer.spec.input_dim;
        let input = if i == 0 {
            &cache.input
        } else {
            &cache.post[i - 1]
        };

        for (r, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &mut grads.weights[i][r * n_in..(r + 1) * n_in];
            for (g, &x) in row.iter_mut().zip(input) {
                *g = d * x;
            }
        }
        if params.bias_enabled {
            grads.bias[i].copy_from_slice(&delta);
        }

        if i > 0 {
            let prev_act = params.layers[i - 1].spec.activation;
            let mut upstream = vec![0.0; n_in];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[r * n_in..(r + 1) * n_in];
                for (u, &w) in upstream.iter_mut().zip(row) {
                    *u += w * d;
                }
            }
            delta = upstream
                .iter()
                .zip(&cache.pre[i - 1])
                .map(|(u, &z)| u * prev_act.derivative(z))
                .collect();
        }
    }
    Ok(grads)
}

/// Momentum SGD state: the velocity `t`, momentum `γ` and learning rate `δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: GradientStack,
    pub momentum: f64,
    pub learning_rate: f64,
}

impl OptimizerState {
    pub fn new(params: &WeightStack, momentum: f64, learning_rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(DncmError::input(format!(
                "momentum {momentum} outside [0, 1)"
            )));
        }
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(DncmError::input(format!(
                "learning rate {learning_rate} must be positive"
            )));
        }
        Ok(Self {
            velocity: GradientStack::zeros_like(params),
            momentum,
            learning_rate,
        })
    }
}

/// `t ← γ·t + δ·g`, then `W ← W − t`.
pub fn sgd_momentum_step(
    params: &mut WeightStack,
    grads: &GradientStack,
    state: &mut OptimizerState,
) -> Result<()> {
    if !grads.congruent_with(params) || !state.velocity.congruent_with(params) {
        return Err(DncmError::input(
            "gradient or velocity shape does not match parameters",
        ));
    }
    if !grads.is_finite() {
        return Err(DncmError::TrainingDivergence {
            epoch: 0,
            batch: 0,
            detail: "non-finite gradient entry".into(),
        });
    }
    let (gamma, delta) = (state.momentum, state.learning_rate);
    for (i, layer) in params.layers.iter_mut().enumerate() {
        let pairs = layer
            .weights
            .iter_mut()
            .zip(state.velocity.weights[i].iter_mut().zip(&grads.weights[i]))
            .chain(
                layer
                    .bias
                    .iter_mut()
                    .zip(state.velocity.bias[i].iter_mut().zip(&grads.bias[i])),
            );
        for (w, (t, &g)) in pairs {
            *t = gamma * *t + delta * g;
            *w -= *t;
        }
    }
    if !params.is_finite() {
        return Err(DncmError::TrainingDivergence {
            epoch: 0,
            batch: 0,
            detail: "parameter update produced a non-finite value".into(),
        });
    }
    Ok(())
}
