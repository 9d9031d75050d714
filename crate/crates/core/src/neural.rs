// SPDX-License-Identifier: Apache-2.0

//! Perceptron and MLP forward/backward passes over a pluggable numeric backend.
//!
//! The input layer is a pass-through; every other neuron computes
//! `O_j = f(sigma_j)` with `sigma_j = b_j + sum_i O_i * W_ij` and `f` the
//! logistic sigmoid. The last layer is a single neuron whose output is the
//! Q estimate. A [`Backend`] supplies the arithmetic: [`FloatBackend`] runs
//! in `f64` (exact sigmoid by default), [`FixedBackend`] runs the saturating
//! fixed-point datapath with ROM activation tables.

use crate::activation::{exact_sigmoid, exact_sigmoid_derivative, LutError, LutPair, LutParams};
use crate::fixedpoint::{FxError, FxUnit, FxValue, QFormat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("input has {got} components, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("initialization scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("deltas do not match the network shape")]
    ShapeMismatch,
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Lut(#[from] LutError),
    #[error(transparent)]
    Fx(#[from] FxError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Fixed,
    Float,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Fixed => "fixed",
            BackendKind::Float => "float",
        })
    }
}

/// How weight increments are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// `dW_ij = C * O_i * delta_j` on every layer.
    #[default]
    Textbook,
    /// Perceptron weights move by `C * delta` with no input factor; MLPs
    /// behave as `Textbook`.
    #[serde(alias = "paper-literal")]
    PaperLiteral,
}

impl std::str::FromStr for UpdateRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "textbook" => Ok(UpdateRule::Textbook),
            "paper-literal" | "paper_literal" => Ok(UpdateRule::PaperLiteral),
            _ => Err(format!("unknown rule {s:?} (expected textbook or paper-literal)")),
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fixed" => Ok(BackendKind::Fixed),
            "float" => Ok(BackendKind::Float),
            _ => Err(format!("unknown backend {s:?} (expected fixed or float)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
}

impl Topology {
    pub fn perceptron(input_dim: usize) -> Self {
        Topology {
            input_dim,
            hidden_sizes: Vec::new(),
        }
    }

    pub fn mlp(input_dim: usize, hidden_sizes: Vec<usize>) -> Self {
        Topology {
            input_dim,
            hidden_sizes,
        }
    }

    pub fn output_dim(&self) -> usize {
        1
    }

    pub fn is_perceptron(&self) -> bool {
        self.hidden_sizes.is_empty()
    }

    /// Sizes of every layer, input first.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.hidden_sizes.len() + 2);
        v.push(self.input_dim);
        v.extend_from_slice(&self.hidden_sizes);
        v.push(self.output_dim());
        v
    }

    /// Input pass-throughs plus hidden plus output neurons.
    pub fn neuron_count(&self) -> usize {
        self.layer_sizes().iter().sum()
    }

    /// Weighted layers (everything after the input layer).
    pub fn weighted_layers(&self) -> usize {
        self.hidden_sizes.len() + 1
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_sizes().windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.input_dim == 0 {
            return Err(NetError::InvalidTopology("input_dim is zero".into()));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(NetError::InvalidTopology("empty hidden layer".into()));
        }
        Ok(())
    }
}

/// One weighted layer. `weights[j * inputs + i]` is `W_ij`, from neuron `i`
/// of the previous layer to neuron `j` of this one.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<S> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<S>,
    pub biases: Vec<S>,
}

impl<S: Copy> Layer<S> {
    pub fn weight(&self, i: usize, j: usize) -> S {
        self.weights[j * self.inputs + i]
    }

    pub fn row(&self, j: usize) -> &[S] {
        &self.weights[j * self.inputs..(j + 1) * self.inputs]
    }

    fn map<T>(&self, mut f: impl FnMut(S) -> T) -> Layer<T> {
        Layer {
            inputs: self.inputs,
            outputs: self.outputs,
            weights: self.weights.iter().map(|&w| f(w)).collect(),
            biases: self.biases.iter().map(|&b| f(b)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<S> {
    topology: Topology,
    layers: Vec<Layer<S>>,
}

impl<S: Copy> Network<S> {
    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<S>] {
        &mut self.layers
    }

    /// All parameters in storage order (per layer: weights, then biases).
    pub fn parameters(&self) -> impl Iterator<Item = S> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
    }

    pub fn map<T>(&self, mut f: impl FnMut(S) -> T) -> Network<T> {
        Network {
            topology: self.topology.clone(),
            layers: self.layers.iter().map(|l| l.map(&mut f)).collect(),
        }
    }

    pub fn filled(topology: Topology, value: S) -> Result<Self, NetError> {
        topology.validate()?;
        let layers = topology
            .layer_sizes()
            .windows(2)
            .map(|w| Layer {
                inputs: w[0],
                outputs: w[1],
                weights: vec![value; w[0] * w[1]],
                biases: vec![value; w[1]],
            })
            .collect();
        Ok(Network { topology, layers })
    }
}

impl Network<f64> {
    /// Weights and biases i.i.d. uniform in `[-scale, scale]` from a ChaCha8
    /// stream seeded with `seed`, drawn layer by layer (weights row-major,
    /// then biases).
    pub fn init(topology: Topology, seed: u64, scale: f64) -> Result<Self, NetError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(NetError::InvalidScale(scale));
        }
        let mut net = Network::filled(topology, 0.0)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = rng.gen_range(-scale..=scale);
            }
        }
        Ok(net)
    }

    pub fn zeros(topology: Topology) -> Result<Self, NetError> {
        Network::filled(topology, 0.0)
    }

    /// Re-express every parameter in a backend's scalar type.
    pub fn convert<B: Backend>(&self, backend: &mut B) -> Network<B::Scalar> {
        self.map(|w| backend.from_f64(w))
    }
}

/// Arithmetic used by the forward and backward passes.
pub trait Backend {
    type Scalar: Copy + PartialEq + fmt::Debug + SnapshotScalar;

    fn kind(&self) -> BackendKind;
    fn from_f64(&mut self, x: f64) -> Self::Scalar;
    fn to_f64(&self, v: Self::Scalar) -> f64;
    fn add(&mut self, a: Self::Scalar, b: Self::Scalar) -> Self::Scalar;
    fn sub(&mut self, a: Self::Scalar, b: Self::Scalar) -> Self::Scalar;
    fn mul(&mut self, a: Self::Scalar, b: Self::Scalar) -> Self::Scalar;
    /// `bias + sum a_k * b_k`.
    fn dot<I>(&mut self, terms: I, bias: Self::Scalar) -> Self::Scalar
    where
        I: IntoIterator<Item = (Self::Scalar, Self::Scalar)>;
    fn sigmoid(&mut self, x: Self::Scalar) -> Self::Scalar;
    fn sigmoid_derivative(&mut self, x: Self::Scalar) -> Self::Scalar;

    fn zero(&mut self) -> Self::Scalar {
        self.from_f64(0.0)
    }

    /// Saturation events so far (always zero for floating point).
    fn overflow_count(&self) -> u64 {
        0
    }
}

/// `f64` arithmetic; optionally routes activations through real-valued tables.
#[derive(Debug, Clone, Default)]
pub struct FloatBackend {
    luts: Option<Arc<LutPair>>,
}

impl FloatBackend {
    pub fn exact() -> Self {
        FloatBackend { luts: None }
    }

    pub fn with_luts(params: LutParams) -> Result<Self, NetError> {
        Ok(FloatBackend {
            luts: Some(Arc::new(LutPair::real(params)?)),
        })
    }

    pub fn uses_lut(&self) -> bool {
        self.luts.is_some()
    }
}

impl Backend for FloatBackend {
    type Scalar = f64;

    fn kind(&self) -> BackendKind {
        BackendKind::Float
    }

    fn from_f64(&mut self, x: f64) -> f64 {
        x
    }

    fn to_f64(&self, v: f64) -> f64 {
        v
    }

    fn add(&mut self, a: f64, b: f64) -> f64 {
        a + b
    }

    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a - b
    }

    fn mul(&mut self, a: f64, b: f64) -> f64 {
        a * b
    }

    fn dot<I>(&mut self, terms: I, bias: f64) -> f64
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        terms.into_iter().fold(bias, |acc, (a, b)| acc + a * b)
    }

    fn sigmoid(&mut self, x: f64) -> f64 {
        match &self.luts {
            Some(l) => l.sigmoid.eval(x),
            None => exact_sigmoid(x),
        }
    }

    fn sigmoid_derivative(&mut self, x: f64) -> f64 {
        match &self.luts {
            Some(l) => l.derivative.eval(x),
            None => exact_sigmoid_derivative(x),
        }
    }
}

/// Saturating fixed-point arithmetic with ROM sigmoid/derivative tables.
#[derive(Debug, Clone)]
pub struct FixedBackend {
    unit: FxUnit,
    luts: Arc<LutPair>,
}

impl FixedBackend {
    pub fn new(fmt: QFormat, params: LutParams) -> Result<Self, NetError> {
        Ok(FixedBackend {
            unit: FxUnit::new(fmt),
            luts: Arc::new(LutPair::fixed(params, fmt)?),
        })
    }

    pub fn format(&self) -> QFormat {
        self.unit.format()
    }

    pub fn luts(&self) -> &LutPair {
        &self.luts
    }

    pub fn reset_overflow_count(&mut self) {
        self.unit.reset_overflow_count();
    }
}

const SAME_FORMAT: &str = "fixed backend values share one format";

impl Backend for FixedBackend {
    type Scalar = FxValue;

    fn kind(&self) -> BackendKind {
        BackendKind::Fixed
    }

    fn from_f64(&mut self, x: f64) -> FxValue {
        self.unit.encode(x)
    }

    fn to_f64(&self, v: FxValue) -> f64 {
        v.to_f64()
    }

    fn add(&mut self, a: FxValue, b: FxValue) -> FxValue {
        self.unit.add_sat(a, b).expect(SAME_FORMAT)
    }

    fn sub(&mut self, a: FxValue, b: FxValue) -> FxValue {
        self.unit.sub_sat(a, b).expect(SAME_FORMAT)
    }

    fn mul(&mut self, a: FxValue, b: FxValue) -> FxValue {
        self.unit.mul(a, b).expect(SAME_FORMAT)
    }

    fn dot<I>(&mut self, terms: I, bias: FxValue) -> FxValue
    where
        I: IntoIterator<Item = (FxValue, FxValue)>,
    {
        let mut acc = self.unit.accumulator();
        acc.add(bias).expect(SAME_FORMAT);
        for (a, b) in terms {
            acc.mac(a, b).expect(SAME_FORMAT);
        }
        self.unit.readout(&acc)
    }

    fn sigmoid(&mut self, x: FxValue) -> FxValue {
        self.luts.sigmoid.eval_fx(x)
    }

    fn sigmoid_derivative(&mut self, x: FxValue) -> FxValue {
        self.luts.derivative.eval_fx(x)
    }

    fn overflow_count(&self) -> u64 {
        self.unit.overflow_count()
    }
}

/// Pre-activations and outputs of one forward pass.
///
/// `outputs[0]` is the input vector; `outputs[l + 1]` and `pre[l]` belong to
/// weighted layer `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<S> {
    pub pre: Vec<Vec<S>>,
    pub outputs: Vec<Vec<S>>,
}

impl<S: Copy> ForwardTrace<S> {
    pub fn q(&self) -> S {
        self.outputs.last().expect("trace has an output layer")[0]
    }

    pub fn output_pre_activation(&self) -> S {
        self.pre.last().expect("trace has an output layer")[0]
    }
}

pub fn feedforward<B: Backend>(
    net: &Network<B::Scalar>,
    backend: &mut B,
    input: &[f64],
) -> Result<ForwardTrace<B::Scalar>, NetError> {
    let encoded: Vec<B::Scalar> = input.iter().map(|&x| backend.from_f64(x)).collect();
    feedforward_encoded(net, backend, encoded)
}

/// Forward pass over an input already in the backend's scalar type.
pub fn feedforward_encoded<B: Backend>(
    net: &Network<B::Scalar>,
    backend: &mut B,
    input: Vec<B::Scalar>,
) -> Result<ForwardTrace<B::Scalar>, NetError> {
    let expected = net.topology.input_dim;
    if input.len() != expected {
        return Err(NetError::DimensionMismatch {
            expected,
            got: input.len(),
        });
    }
    let mut pre = Vec::with_capacity(net.layers.len());
    let mut outputs = Vec::with_capacity(net.layers.len() + 1);
    outputs.push(input);
    for layer in &net.layers {
        let prev = outputs.last().expect("input layer present");
        let sigma: Vec<B::Scalar> = (0..layer.outputs)
            .map(|j| {
                let terms = prev.iter().copied().zip(layer.row(j).iter().copied());
                backend.dot(terms, layer.biases[j])
            })
            .collect();
        let out = sigma.iter().map(|&s| backend.sigmoid(s)).collect();
        pre.push(sigma);
        outputs.push(out);
    }
    Ok(ForwardTrace { pre, outputs })
}

/// `delta_out = f'(sigma_out) * q_error`.
pub fn output_delta<B: Backend>(
    backend: &mut B,
    trace: &ForwardTrace<B::Scalar>,
    q_error: B::Scalar,
) -> B::Scalar {
    let d = backend.sigmoid_derivative(trace.output_pre_activation());
    backend.mul(d, q_error)
}

/// Per-neuron deltas for every weighted layer, output layer last.
///
/// Each hidden neuron gets `delta_i = f'(sigma_i) * sum_j delta_j * W_ij`,
/// summed over the following layer and computed back to front.
pub fn hidden_deltas<B: Backend>(
    net: &Network<B::Scalar>,
    backend: &mut B,
    trace: &ForwardTrace<B::Scalar>,
    delta_out: B::Scalar,
) -> Vec<Vec<B::Scalar>> {
    let n = net.layers.len();
    let mut deltas: Vec<Vec<B::Scalar>> = vec![Vec::new(); n];
    deltas[n - 1] = vec![delta_out];
    for l in (0..n - 1).rev() {
        let next = &net.layers[l + 1];
        let zero = backend.zero();
        let layer_deltas = (0..net.layers[l].outputs)
            .map(|i| {
                let terms = (0..next.outputs).map(|j| (deltas[l + 1][j], next.weight(i, j)));
                let back = backend.dot(terms, zero);
                let d = backend.sigmoid_derivative(trace.pre[l][i]);
                backend.mul(d, back)
            })
            .collect();
        deltas[l] = layer_deltas;
    }
    deltas
}

/// Output delta followed by the backward recursion.
pub fn backprop<B: Backend>(
    net: &Network<B::Scalar>,
    backend: &mut B,
    trace: &ForwardTrace<B::Scalar>,
    q_error: B::Scalar,
) -> Vec<Vec<B::Scalar>> {
    let d = output_delta(backend, trace, q_error);
    hidden_deltas(net, backend, trace, d)
}

/// `W += dW`, `b += C * delta`.
pub fn apply_update<B: Backend>(
    net: &mut Network<B::Scalar>,
    backend: &mut B,
    trace: &ForwardTrace<B::Scalar>,
    deltas: &[Vec<B::Scalar>],
    c_rate: B::Scalar,
    rule: UpdateRule,
) -> Result<(), NetError> {
    if deltas.len() != net.layers.len()
        || deltas
            .iter()
            .zip(&net.layers)
            .any(|(d, l)| d.len() != l.outputs)
    {
        return Err(NetError::ShapeMismatch);
    }
    let input_free = rule == UpdateRule::PaperLiteral && net.topology.is_perceptron();
    for (l, layer) in net.layers.iter_mut().enumerate() {
        let inputs = &trace.outputs[l];
        for j in 0..layer.outputs {
            let step = backend.mul(c_rate, deltas[l][j]);
            for i in 0..layer.inputs {
                let dw = if input_free {
                    step
                } else {
                    backend.mul(step, inputs[i])
                };
                let w = &mut layer.weights[j * layer.inputs + i];
                *w = backend.add(*w, dw);
            }
            layer.biases[j] = backend.add(layer.biases[j], step);
        }
    }
    Ok(())
}

/// Finite-difference check of the gradient of `0.5 * (target - Q)^2`.
///
/// Analytic gradients come from [`backprop`] with `q_error = target - Q`
/// (`dL/dW_ij = -O_i * delta_j`, `dL/db_j = -delta_j`); numeric ones from
/// central differences with step `1e-5`. Returns the largest
/// `|a - n| / max(|a|, |n|, 1e-8)` over all parameters.
pub fn gradient_check(net: &Network<f64>, input: &[f64], target: f64) -> Result<f64, NetError> {
    const STEP: f64 = 1e-5;
    const FLOOR: f64 = 1e-8;
    let mut be = FloatBackend::exact();
    let trace = feedforward(net, &mut be, input)?;
    let deltas = backprop(net, &mut be, &trace, target - trace.q());

    let loss = |n: &Network<f64>| -> Result<f64, NetError> {
        let q = feedforward(n, &mut FloatBackend::exact(), input)?.q();
        Ok(0.5 * (target - q).powi(2))
    };

    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for l in 0..net.layers.len() {
        let layer = &net.layers[l];
        let n_weights = layer.weights.len();
        for p in 0..n_weights + layer.biases.len() {
            let analytic = if p < n_weights {
                let (j, i) = (p / layer.inputs, p % layer.inputs);
                -trace.outputs[l][i] * deltas[l][j]
            } else {
                -deltas[l][p - n_weights]
            };
            let original = get_param(&probe, l, p, n_weights);
            set_param(&mut probe, l, p, n_weights, original + STEP);
            let up = loss(&probe)?;
            set_param(&mut probe, l, p, n_weights, original - STEP);
            let down = loss(&probe)?;
            set_param(&mut probe, l, p, n_weights, original);
            let numeric = (up - down) / (2.0 * STEP);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

fn get_param(net: &Network<f64>, l: usize, p: usize, n_weights: usize) -> f64 {
    let lay = &net.layers[l];
    if p < n_weights {
        lay.weights[p]
    } else {
        lay.biases[p - n_weights]
    }
}

fn set_param(net: &mut Network<f64>, l: usize, p: usize, n_weights: usize, v: f64) {
    let lay = &mut net.layers[l];
    if p < n_weights {
        lay.weights[p] = v;
    } else {
        lay.biases[p - n_weights] = v;
    }
}

/// Scalar types that can be written to and restored from a snapshot.
pub trait SnapshotScalar: Sized + Copy {
    fn snapshot(net: &Network<Self>) -> NetworkSnapshot;
    fn restore(snap: &NetworkSnapshot) -> Result<Network<Self>, NetError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSnapshot<T> {
    /// `weights[j][i]` is `W_ij`.
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum SnapshotParams {
    Fixed {
        format: QFormat,
        layers: Vec<LayerSnapshot<i64>>,
    },
    Float {
        layers: Vec<LayerSnapshot<f64>>,
    },
}

/// JSON-serializable network: fixed-point weights as raw integers, float
/// weights as shortest round-trip decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSnapshot {
    pub version: u32,
    pub topology: Topology,
    #[serde(flatten)]
    pub params: SnapshotParams,
}

impl NetworkSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, NetError> {
        let snap: NetworkSnapshot =
            serde_json::from_str(s).map_err(|e| NetError::Snapshot(e.to_string()))?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(NetError::Snapshot(format!(
                "unsupported snapshot version {}",
                snap.version
            )));
        }
        Ok(snap)
    }
}

fn layer_to_snapshot<S: Copy, T>(l: &Layer<S>, f: impl Fn(S) -> T) -> LayerSnapshot<T> {
    LayerSnapshot {
        weights: (0..l.outputs)
            .map(|j| l.row(j).iter().map(|&w| f(w)).collect())
            .collect(),
        biases: l.biases.iter().map(|&b| f(b)).collect(),
    }
}

fn layers_from_snapshot<T: Copy, S>(
    topology: &Topology,
    layers: &[LayerSnapshot<T>],
    mut f: impl FnMut(T) -> Result<S, NetError>,
) -> Result<Vec<Layer<S>>, NetError> {
    topology.validate()?;
    let sizes = topology.layer_sizes();
    if layers.len() != sizes.len() - 1 {
        return Err(NetError::Snapshot("layer count does not match topology".into()));
    }
    sizes
        .windows(2)
        .zip(layers)
        .map(|(w, snap)| {
            let (inputs, outputs) = (w[0], w[1]);
            if snap.weights.len() != outputs
                || snap.biases.len() != outputs
                || snap.weights.iter().any(|r| r.len() != inputs)
            {
                return Err(NetError::Snapshot("layer shape does not match topology".into()));
            }
            Ok(Layer {
                inputs,
                outputs,
                weights: snap
                    .weights
                    .iter()
                    .flatten()
                    .map(|&v| f(v))
                    .collect::<Result<_, _>>()?,
                biases: snap.biases.iter().map(|&v| f(v)).collect::<Result<_, _>>()?,
            })
        })
        .collect()
}

impl SnapshotScalar for f64 {
    fn snapshot(net: &Network<f64>) -> NetworkSnapshot {
        NetworkSnapshot {
            version: SNAPSHOT_VERSION,
            topology: net.topology.clone(),
            params: SnapshotParams::Float {
                layers: net.layers.iter().map(|l| layer_to_snapshot(l, |w| w)).collect(),
            },
        }
    }

    fn restore(snap: &NetworkSnapshot) -> Result<Network<f64>, NetError> {
        match &snap.params {
            SnapshotParams::Float { layers } => Ok(Network {
                topology: snap.topology.clone(),
                layers: layers_from_snapshot(&snap.topology, layers, |v: f64| {
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(NetError::Snapshot("non-finite weight".into()))
                    }
                })?,
            }),
            SnapshotParams::Fixed { .. } => {
                Err(NetError::Snapshot("expected a float snapshot".into()))
            }
        }
    }
}

impl SnapshotScalar for FxValue {
    fn snapshot(net: &Network<FxValue>) -> NetworkSnapshot {
        let format = net
            .parameters()
            .next()
            .map(|v| v.format())
            .expect("network has parameters");
        NetworkSnapshot {
            version: SNAPSHOT_VERSION,
            topology: net.topology.clone(),
            params: SnapshotParams::Fixed {
                format,
                layers: net
                    .layers
                    .iter()
                    .map(|l| layer_to_snapshot(l, |w| w.raw()))
                    .collect(),
            },
        }
    }

    fn restore(snap: &NetworkSnapshot) -> Result<Network<FxValue>, NetError> {
        match &snap.params {
            SnapshotParams::Fixed { format, layers } => Ok(Network {
                topology: snap.topology.clone(),
                layers: layers_from_snapshot(&snap.topology, layers, |raw: i64| {
                    Ok(format.from_raw(raw)?)
                })?,
            }),
            SnapshotParams::Float { .. } => {
                Err(NetError::Snapshot("expected a fixed-point snapshot".into()))
            }
        }
    }
}

impl<S: SnapshotScalar> Network<S> {
    pub fn snapshot(&self) -> NetworkSnapshot {
        S::snapshot(self)
    }

    pub fn from_snapshot(snap: &NetworkSnapshot) -> Result<Self, NetError> {
        S::restore(snap)
    }
}
