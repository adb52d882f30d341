//! Learner objective for the search: preprocess, train from the candidate
//! initial point, score on held-out data.

use crate::circuits::{AnsatzSpec, FeatureMapSpec};
use crate::model::{self, tile_point, TrainConfig, Task, VariationalModel};
use crate::muse::{Evaluation, GridParams, GridSpec, Objective};
use crate::preprocess::{FittedTransform, PreprocessSpec, RawDataset, Targets};

#[derive(Debug, Clone)]
pub struct PipelineObjective {
    pub train: RawDataset,
    pub test: RawDataset,
    /// Qubits, i.e. features after reduction.
    pub out_dims: usize,
    pub train_config: TrainConfig,
}

impl PipelineObjective {
    /// Task is inferred from `train.class_names`.
    pub fn new(train: RawDataset, test: RawDataset, out_dims: usize) -> Self {
        let train_config =
            if train.class_names.is_some() { TrainConfig::classification() } else { TrainConfig::regression() };
        PipelineObjective { train, test, out_dims, train_config }
    }

    pub fn task(&self) -> Task {
        match self.train.n_classes() {
            Some(k) => Task::Classification { n_classes: k },
            None => Task::Regression,
        }
    }

    /// Trains from `point` tiled over the ansatz weights and returns the
    /// test score (accuracy or R²).
    pub fn score(&self, point: &[f64], params: &GridParams) -> Result<f64, String> {
        let task = self.task();
        let labels = matches!(task, Task::Classification { .. }).then(|| self.train.labels());
        let spec = PreprocessSpec { scaler: params.scaler, reducer: params.reducer, out_dims: self.out_dims };
        let targets = match &labels {
            Some(l) => Targets::Classes(l),
            None => Targets::Values(&self.train.y),
        };
        let (transform, x_train) = FittedTransform::fit(spec, &self.train.x, targets).map_err(|e| e.to_string())?;
        let x_test = transform.apply(&self.test.x);

        let fm = FeatureMapSpec::new(self.out_dims, params.fm_reps);
        let an = AnsatzSpec::new(self.out_dims, params.ansatz_reps);
        let m = VariationalModel::new(fm, an, task)
            .and_then(|m| m.with_weights(tile_point(point, an.num_parameters())))
            .map_err(|e| e.to_string())?;
        let trained = match task {
            Task::Classification { .. } => {
                model::train_classifier(&m, &x_train, labels.as_deref().unwrap_or_default(), &self.train_config)
            }
            Task::Regression => model::train_regressor(&m, &x_train, &self.train.y, &self.train_config),
        }
        .map_err(|e| e.to_string())?
        .0;
        let score = trained.evaluate(&x_test, &self.test.y).map_err(|e| e.to_string())?.score;
        if !score.is_finite() {
            return Err(format!("non-finite score {score}"));
        }
        Ok(score)
    }
}

impl Objective<GridParams> for PipelineObjective {
    fn run(&self, point: &[f64], params: &GridParams) -> Result<Evaluation, String> {
        Ok(Evaluation { score: self.score(point, params)?, point: point.to_vec() })
    }
}

/// Point length giving every weight of the largest ansatz in `grid` its own
/// coordinate; smaller ansätze use a prefix.
pub fn point_dim(grid: &GridSpec, n_qubits: usize) -> usize {
    grid.feat_ans
        .iter()
        .map(|&(_, a)| AnsatzSpec::new(n_qubits, a).num_parameters())
        .max()
        .unwrap_or(n_qubits)
}
