//! Variational classifier and regressor built from a feature map and an
//! ansatz, evaluated on the statevector simulator.
//!
//! Classes are decoded by popcount parity: basis state `b` votes for class
//! `popcount(b) mod k`. Regression reads the global `Z⊗…⊗Z` expectation and
//! maps it affinely onto the target range.

pub mod optim;

use crate::circuits::{AnsatzSpec, CircuitError, FeatureMapSpec};
use crate::statevec::{DiagonalObservable, SimError, StateVector};
use nalgebra::DMatrix;
use optim::{minimize_lbfgs, minimize_simplex, LbfgsOptions, OptimError, SimplexOptions};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

/// Probability floor inside the cross-entropy logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("feature map has {feature_map} qubits, ansatz has {ansatz}")]
    QubitMismatch { feature_map: usize, ansatz: usize },
    #[error("classification needs at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("input has {got} features, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("length mismatch: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("operation requires a {0} model")]
    WrongTask(&'static str),
    #[error("weight index {index} out of range for {len} weights")]
    WeightIndex { index: usize, len: usize },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Classification { n_classes: usize },
    Regression,
}

/// `y = offset + scale · ⟨Z…Z⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputMap {
    pub scale: f64,
    pub offset: f64,
}

impl Default for OutputMap {
    fn default() -> Self {
        OutputMap { scale: 1.0, offset: 0.0 }
    }
}

impl OutputMap {
    /// Maps `[-1, 1]` onto `[min(y), max(y)]`.
    pub fn from_targets(y: &[f64]) -> Self {
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() || !hi.is_finite() {
            return OutputMap::default();
        }
        OutputMap { scale: (hi - lo) / 2.0, offset: (hi + lo) / 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalModel {
    pub feature_map: FeatureMapSpec,
    pub ansatz: AnsatzSpec,
    pub weights: Vec<f64>,
    pub task: Task,
    pub output_map: OutputMap,
}

/// Repeats `point` cyclically until `len` entries are filled.
pub fn tile_point(point: &[f64], len: usize) -> Vec<f64> {
    if point.is_empty() {
        return vec![0.0; len];
    }
    point.iter().copied().cycle().take(len).collect()
}

impl VariationalModel {
    /// Model with all weights zero.
    pub fn new(feature_map: FeatureMapSpec, ansatz: AnsatzSpec, task: Task) -> Result<Self> {
        if feature_map.n_qubits != ansatz.n_qubits {
            return Err(ModelError::QubitMismatch {
                feature_map: feature_map.n_qubits,
                ansatz: ansatz.n_qubits,
            });
        }
        if let Task::Classification { n_classes } = task {
            if n_classes < 2 {
                return Err(ModelError::TooFewClasses(n_classes));
            }
        }
        let weights = vec![0.0; ansatz.num_parameters()];
        Ok(VariationalModel { feature_map, ansatz, weights, task, output_map: OutputMap::default() })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        let expected = self.ansatz.num_parameters();
        if weights.len() != expected {
            return Err(CircuitError::ParameterCount { expected, got: weights.len() }.into());
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn n_qubits(&self) -> usize {
        self.ansatz.n_qubits
    }

    /// Feature-map state `U(x)|0…0⟩`.
    pub fn encode(&self, x: &[f64]) -> Result<StateVector> {
        if x.len() != self.n_qubits() {
            return Err(ModelError::Dimension { expected: self.n_qubits(), got: x.len() });
        }
        Ok(self.feature_map.build(x)?.run_from_zero()?)
    }

    /// Full model state for input `x`.
    pub fn state(&self, x: &[f64]) -> Result<StateVector> {
        let encoded = self.encode(x)?;
        Ok(self.ansatz.build(&self.weights)?.run(&encoded)?)
    }

    pub fn forward_classify(&self, x: &[f64]) -> Result<Vec<f64>> {
        let Task::Classification { n_classes } = self.task else {
            return Err(ModelError::WrongTask("classification"));
        };
        Ok(parity_classes(&self.state(x)?, n_classes))
    }

    /// Raw `⟨Z…Z⟩ ∈ [-1, 1]`.
    pub fn raw_expectation(&self, x: &[f64]) -> Result<f64> {
        let obs = DiagonalObservable::z_parity(self.n_qubits())?;
        Ok(self.state(x)?.expectation(&obs)?)
    }

    pub fn forward_regress(&self, x: &[f64]) -> Result<f64> {
        if self.task != Task::Regression {
            return Err(ModelError::WrongTask("regression"));
        }
        Ok(self.output_map.offset + self.output_map.scale * self.raw_expectation(x)?)
    }

    /// Class predictions (argmax, lowest class on ties) or regression outputs.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let batch = EncodedBatch::new(self, x, &vec![0.0; x.nrows()])?;
        batch.predictions(self, &self.weights)
    }

    pub fn evaluate(&self, x: &DMatrix<f64>, y: &[f64]) -> Result<EvalReport> {
        let predictions = self.predict(x)?;
        let score = match self.task {
            Task::Classification { .. } => {
                let p: Vec<usize> = predictions.iter().map(|&v| v as usize).collect();
                let t: Vec<usize> = y.iter().map(|&v| v as usize).collect();
                accuracy(&p, &t)?
            }
            Task::Regression => r2(&predictions, y)?,
        };
        Ok(EvalReport { score, predictions })
    }
}

/// Class probabilities by popcount modulo `k`.
pub fn parity_classes(state: &StateVector, n_classes: usize) -> Vec<f64> {
    let mut p = vec![0.0; n_classes];
    for (b, a) in state.amplitudes().iter().enumerate() {
        p[b.count_ones() as usize % n_classes] += a.norm_sqr();
    }
    p
}

/// Samples with their feature-map states precomputed, so weight updates only
/// re-run the ansatz.
#[derive(Debug, Clone)]
pub struct EncodedBatch {
    states: Vec<StateVector>,
    targets: Vec<f64>,
}

impl EncodedBatch {
    pub fn new(model: &VariationalModel, x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(ModelError::LengthMismatch(x.nrows(), y.len()));
        }
        let states = x
            .row_iter()
            .map(|r| {
                let v: Vec<f64> = r.iter().copied().collect();
                model.encode(&v)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EncodedBatch { states, targets: y.to_vec() })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    fn final_states(&self, model: &VariationalModel, weights: &[f64]) -> Result<Vec<StateVector>> {
        let ansatz = model.ansatz.build(weights)?;
        self.states.iter().map(|s| Ok(ansatz.run(s)?)).collect()
    }

    /// Per-sample model output: class-probability vectors or raw expectations.
    fn outputs(&self, model: &VariationalModel, weights: &[f64]) -> Result<Vec<Vec<f64>>> {
        let finals = self.final_states(model, weights)?;
        match model.task {
            Task::Classification { n_classes } => {
                Ok(finals.iter().map(|s| parity_classes(s, n_classes)).collect())
            }
            Task::Regression => {
                let obs = DiagonalObservable::z_parity(model.n_qubits())?;
                finals.iter().map(|s| Ok(vec![s.expectation(&obs)?])).collect()
            }
        }
    }

    pub fn predictions(&self, model: &VariationalModel, weights: &[f64]) -> Result<Vec<f64>> {
        let out = self.outputs(model, weights)?;
        Ok(match model.task {
            Task::Classification { .. } => out.iter().map(|p| argmax(p) as f64).collect(),
            Task::Regression => out
                .iter()
                .map(|e| model.output_map.offset + model.output_map.scale * e[0])
                .collect(),
        })
    }

    /// Cross-entropy for classifiers, mean squared error for regressors.
    pub fn loss(&self, model: &VariationalModel, weights: &[f64]) -> Result<f64> {
        if self.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        let out = self.outputs(model, weights)?;
        Ok(match model.task {
            Task::Classification { .. } => {
                let labels: Vec<usize> = self.targets.iter().map(|&v| v as usize).collect();
                cross_entropy(&out, &labels)
            }
            Task::Regression => {
                let pred: Vec<f64> = out
                    .iter()
                    .map(|e| model.output_map.offset + model.output_map.scale * e[0])
                    .collect();
                mean_squared_error(&pred, &self.targets)
            }
        })
    }

    /// Exact loss derivative with respect to weight `index`, via the ±π/2
    /// shift rule on every RY parameter, chained through the loss.
    pub fn parameter_shift_gradient(
        &self,
        model: &VariationalModel,
        weights: &[f64],
        index: usize,
    ) -> Result<f64> {
        if index >= weights.len() {
            return Err(ModelError::WeightIndex { index, len: weights.len() });
        }
        if self.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        let base = self.outputs(model, weights)?;
        let mut w = weights.to_vec();
        w[index] = weights[index] + FRAC_PI_2;
        let plus = self.outputs(model, &w)?;
        w[index] = weights[index] - FRAC_PI_2;
        let minus = self.outputs(model, &w)?;
        let n = self.len() as f64;

        let total: f64 = match model.task {
            Task::Classification { .. } => base
                .iter()
                .zip(plus.iter().zip(&minus))
                .zip(&self.targets)
                .map(|((b, (p, m)), &y)| {
                    let c = y as usize;
                    if b[c] < PROB_FLOOR {
                        0.0
                    } else {
                        -(p[c] - m[c]) / 2.0 / b[c]
                    }
                })
                .sum(),
            Task::Regression => {
                let OutputMap { scale, offset } = model.output_map;
                base.iter()
                    .zip(plus.iter().zip(&minus))
                    .zip(&self.targets)
                    .map(|((b, (p, m)), &y)| {
                        let residual = offset + scale * b[0] - y;
                        2.0 * residual * scale * (p[0] - m[0]) / 2.0
                    })
                    .sum()
            }
        };
        Ok(total / n)
    }

    pub fn loss_gradient(&self, model: &VariationalModel, weights: &[f64]) -> Result<Vec<f64>> {
        (0..weights.len())
            .map(|i| self.parameter_shift_gradient(model, weights, i))
            .collect()
    }
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Mean of `-ln max(p[label], 1e-12)`.
pub fn cross_entropy(probs: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = probs.len() as f64;
    probs
        .iter()
        .zip(labels)
        .map(|(p, &c)| -p[c].max(PROB_FLOOR).ln())
        .sum::<f64>()
        / n
}

pub fn mean_squared_error(pred: &[f64], target: &[f64]) -> f64 {
    let n = pred.len() as f64;
    pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n
}

pub fn cross_entropy_loss(model: &VariationalModel, x: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    if model.task == Task::Regression {
        return Err(ModelError::WrongTask("classification"));
    }
    EncodedBatch::new(model, x, &y)?.loss(model, &model.weights)
}

pub fn mse_loss(model: &VariationalModel, x: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    if model.task != Task::Regression {
        return Err(ModelError::WrongTask("regression"));
    }
    EncodedBatch::new(model, x, y)?.loss(model, &model.weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    /// Derivative-free trust-region simplex; `max_iterations` counts loss
    /// evaluations.
    Simplex,
    /// Box-projected L-BFGS on parameter-shift gradients; `max_iterations`
    /// counts outer iterations.
    Lbfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_iterations: usize,
    pub optimizer: OptimizerKind,
    /// Initial trust radius of the simplex optimizer, in radians.
    pub rho_begin: f64,
}

impl TrainConfig {
    pub fn classification() -> Self {
        TrainConfig { max_iterations: 100, optimizer: OptimizerKind::Simplex, rho_begin: 1.0 }
    }

    pub fn regression() -> Self {
        TrainConfig { max_iterations: 10, optimizer: OptimizerKind::Lbfgs, rho_begin: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub evaluations: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub score: f64,
    pub predictions: Vec<f64>,
}

fn weight_bounds(n: usize) -> Vec<(f64, f64)> {
    vec![(-2.0 * PI, 2.0 * PI); n]
}

/// Trains from the model's current weights and returns the best weights seen.
pub fn train_classifier(
    model: &VariationalModel,
    x: &DMatrix<f64>,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(VariationalModel, TrainReport)> {
    if model.task == Task::Regression {
        return Err(ModelError::WrongTask("classification"));
    }
    if x.nrows() == 0 {
        return Err(ModelError::EmptyTrainingSet);
    }
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let batch = EncodedBatch::new(model, x, &y)?;
    train_on_batch(model, &batch, cfg)
}

/// Fits the output map from the targets, then trains the weights.
pub fn train_regressor(
    model: &VariationalModel,
    x: &DMatrix<f64>,
    y: &[f64],
    cfg: &TrainConfig,
) -> Result<(VariationalModel, TrainReport)> {
    if model.task != Task::Regression {
        return Err(ModelError::WrongTask("regression"));
    }
    if x.nrows() == 0 {
        return Err(ModelError::EmptyTrainingSet);
    }
    let mut m = model.clone();
    m.output_map = OutputMap::from_targets(y);
    let batch = EncodedBatch::new(&m, x, y)?;
    train_on_batch(&m, &batch, cfg)
}

pub fn train_on_batch(
    model: &VariationalModel,
    batch: &EncodedBatch,
    cfg: &TrainConfig,
) -> Result<(VariationalModel, TrainReport)> {
    if batch.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let n = model.weights.len();
    // Loss failures cannot occur once the batch is encoded; map them to +∞
    // so the optimizer simply rejects the point.
    let loss = |w: &[f64]| batch.loss(model, w).unwrap_or(f64::INFINITY);
    let result = match cfg.optimizer {
        OptimizerKind::Simplex => {
            let opts = SimplexOptions {
                max_evaluations: cfg.max_iterations,
                rho_begin: cfg.rho_begin,
                rho_end: 1e-6,
                bounds: Some(weight_bounds(n)),
            };
            minimize_simplex(loss, &model.weights, &opts)?
        }
        OptimizerKind::Lbfgs => {
            let grad = |w: &[f64]| batch.loss_gradient(model, w).unwrap_or_else(|_| vec![0.0; n]);
            let opts = LbfgsOptions {
                max_iterations: cfg.max_iterations,
                bounds: Some(weight_bounds(n)),
                ..Default::default()
            };
            minimize_lbfgs(loss, grad, &model.weights, &opts)?
        }
    };
    let mut trained = model.clone();
    trained.weights = result.x;
    Ok((
        trained,
        TrainReport {
            initial_loss: result.initial_value,
            final_loss: result.value,
            evaluations: result.evaluations,
            iterations: result.iterations,
        },
    ))
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(ModelError::LengthMismatch(pred.len(), truth.len()));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Coefficient of determination; defined as 0 when the targets are constant.
pub fn r2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(ModelError::LengthMismatch(pred.len(), truth.len()));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Ok(0.0);
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn classifier(n: usize, fm_reps: usize, an_reps: usize, k: usize) -> VariationalModel {
        VariationalModel::new(
            FeatureMapSpec::new(n, fm_reps),
            AnsatzSpec::new(n, an_reps),
            Task::Classification { n_classes: k },
        )
        .unwrap()
    }

    fn regressor(n: usize, an_reps: usize) -> VariationalModel {
        VariationalModel::new(FeatureMapSpec::new(n, 1), AnsatzSpec::new(n, an_reps), Task::Regression)
            .unwrap()
    }

    #[test]
    fn one_qubit_hadamard_encoding_is_uniform() {
        let m = classifier(1, 1, 1, 2);
        let p = m.forward_classify(&[0.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn parity_decoding_of_zero_state() {
        let s = StateVector::zero(2).unwrap();
        assert_eq!(parity_classes(&s, 2), vec![1.0, 0.0]);
        let s = StateVector::basis(4, 0b0111).unwrap();
        assert_eq!(parity_classes(&s, 3), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn regression_output_bounds() {
        let mut m = regressor(2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        m.weights = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
        m.output_map = OutputMap { scale: -2.0, offset: 1.0 };
        for _ in 0..50 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            let e = m.raw_expectation(&x).unwrap();
            assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&e));
            let y = m.forward_regress(&x).unwrap();
            assert!((-1.0 - 1e-12..=3.0 + 1e-12).contains(&y));
        }
        m.output_map.scale = 0.0;
        assert_eq!(m.forward_regress(&[0.1, 0.9]).unwrap(), 1.0);
    }

    #[test]
    fn regression_identity_reads_plus_one() {
        // x = 0 with zero weights: ZZ map on |00⟩ gives a state whose parity
        // expectation we compare against the raw simulator.
        let m = regressor(2, 1);
        let s = m.state(&[0.0, 0.0]).unwrap();
        let obs = DiagonalObservable::z_parity(2).unwrap();
        assert!((m.raw_expectation(&[0.0, 0.0]).unwrap() - s.expectation(&obs).unwrap()).abs() < 1e-15);
        assert!((StateVector::zero(2).unwrap().expectation(&obs).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = classifier(2, 1, 1, 2);
        assert!(matches!(m.forward_classify(&[0.1]), Err(ModelError::Dimension { .. })));
        assert!(matches!(m.forward_regress(&[0.1, 0.2]), Err(ModelError::WrongTask(_))));
    }

    #[test]
    fn loss_examples() {
        let ce = cross_entropy(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[0, 1]);
        assert!(ce.abs() < 1e-9);
        let ce = cross_entropy(&vec![vec![0.5, 0.5]; 3], &[0, 1, 0]);
        assert!((ce - 2f64.ln()).abs() < 1e-9);
        assert_eq!(mean_squared_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        let floor = cross_entropy(&[vec![0.0, 1.0]], &[0]);
        assert!((floor + PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn metrics() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 1, 1, 2], &[0, 1, 2, 2]).unwrap(), 0.75);
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r2(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(r2(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), -3.0);
        assert_eq!(r2(&[1.0, 7.0], &[4.0, 4.0]).unwrap(), 0.0);
        assert!(accuracy(&[0], &[0, 1]).is_err());
        assert!(r2(&[], &[]).is_err());
    }

    fn fd_gradient(batch: &EncodedBatch, m: &VariationalModel, i: usize, h: f64) -> f64 {
        let mut w = m.weights.clone();
        w[i] += h;
        let up = batch.loss(m, &w).unwrap();
        w[i] -= 2.0 * h;
        let down = batch.loss(m, &w).unwrap();
        (up - down) / (2.0 * h)
    }

    #[test]
    fn shift_rule_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..10 {
            let (mut m, y): (VariationalModel, Vec<f64>) = if trial % 2 == 0 {
                let mut m = regressor(2, 1 + trial % 3);
                m.output_map = OutputMap { scale: 1.7, offset: 0.3 };
                (m, (0..6).map(|_| rng.gen_range(-1.0..2.0)).collect())
            } else {
                (classifier(2, 1, 2, 3), (0..6).map(|i| (i % 3) as f64).collect())
            };
            let n = m.weights.len();
            m.weights = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let x = DMatrix::from_fn(6, 2, |_, _| rng.gen::<f64>());
            let batch = EncodedBatch::new(&m, &x, &y).unwrap();
            let grad = batch.loss_gradient(&m, &m.weights).unwrap();
            assert_eq!(grad.len(), n);
            for (i, g) in grad.iter().enumerate() {
                let fd = fd_gradient(&batch, &m, i, 1e-5);
                assert!((g - fd).abs() / fd.abs().max(1e-3) < 1e-5, "trial {trial} w{i}: {g} vs {fd}");
            }
        }
    }

    #[test]
    fn pure_offset_regression_has_zero_gradient() {
        let mut m = regressor(2, 1);
        m.output_map = OutputMap { scale: 0.0, offset: 0.5 };
        let x = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        let batch = EncodedBatch::new(&m, &x, &[1.0, 2.0]).unwrap();
        assert!(batch.loss_gradient(&m, &m.weights).unwrap().iter().all(|g| *g == 0.0));
        assert!(batch.parameter_shift_gradient(&m, &m.weights, 4).is_err());
    }

    #[test]
    fn classifier_budget_and_monotone_best() {
        let m = classifier(2, 1, 1, 2).with_weights(vec![0.4, 0.1, 0.9, 0.3]).unwrap();
        let x = DMatrix::from_row_slice(4, 2, &[0.1, 0.2, 0.9, 0.8, 0.2, 0.1, 0.8, 0.9]);
        let labels = [0, 1, 0, 1];
        let cfg = TrainConfig { max_iterations: 1, ..TrainConfig::classification() };
        let (same, rep) = train_classifier(&m, &x, &labels, &cfg).unwrap();
        assert_eq!(same.weights, m.weights);
        assert_eq!(rep.evaluations, 1);

        let (trained, rep) = train_classifier(&m, &x, &labels, &TrainConfig::classification()).unwrap();
        assert!(rep.evaluations <= 100);
        assert!(rep.final_loss <= rep.initial_loss);
        let before = cross_entropy_loss(&m, &x, &labels).unwrap();
        let after = cross_entropy_loss(&trained, &x, &labels).unwrap();
        assert!(after <= before);
        assert!((after - rep.final_loss).abs() < 1e-12);
    }

    #[test]
    fn regressor_descends_and_respects_cap() {
        let x = DMatrix::from_fn(30, 2, |i, j| ((i * 7 + j * 13) % 30) as f64 / 30.0);
        let y: Vec<f64> = x.row_iter().map(|r| 2.0 * r[0] - 0.5 * r[1]).collect();
        let m = regressor(2, 2).with_weights(tile_point(&[0.3, 0.8], 6)).unwrap();
        let (trained, rep) = train_regressor(&m, &x, &y, &TrainConfig::regression()).unwrap();
        assert!(rep.iterations <= 10);
        assert!(rep.final_loss < rep.initial_loss, "{rep:?}");
        let mut init = m.clone();
        init.output_map = OutputMap::from_targets(&y);
        assert!(mse_loss(&trained, &x, &y).unwrap() <= mse_loss(&init, &x, &y).unwrap());
    }

    #[test]
    fn constant_targets_learn_offset() {
        let x = DMatrix::from_fn(8, 2, |i, j| (i + j) as f64 / 10.0);
        let y = vec![3.5; 8];
        let m = regressor(2, 1);
        let (trained, _) = train_regressor(&m, &x, &y, &TrainConfig::regression()).unwrap();
        assert_eq!(trained.output_map, OutputMap { scale: 0.0, offset: 3.5 });
        let rep = trained.evaluate(&x, &y).unwrap();
        assert_eq!(rep.score, 0.0);
    }

    #[test]
    fn empty_training_set_rejected() {
        let m = classifier(2, 1, 1, 2);
        let x = DMatrix::<f64>::zeros(0, 2);
        assert_eq!(
            train_classifier(&m, &x, &[], &TrainConfig::classification()).unwrap_err(),
            ModelError::EmptyTrainingSet
        );
    }

    #[test]
    fn tiling() {
        assert_eq!(tile_point(&[0.1, 0.2, 0.3], 7), vec![0.1, 0.2, 0.3, 0.1, 0.2, 0.3, 0.1]);
    }

    #[test]
    fn distributions_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let n = rng.gen_range(1..=4);
            let k = rng.gen_range(2..=4);
            let mut m = classifier(n, rng.gen_range(1..=2), rng.gen_range(1..=3), k);
            let len = m.weights.len();
            m.weights = (0..len).map(|_| rng.gen_range(-6.0..6.0)).collect();
            let x: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let p = m.forward_classify(&x).unwrap();
            assert_eq!(p.len(), k);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}
