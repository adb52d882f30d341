//! Dataset ingestion, run configuration, result persistence and the
//! `search` / `tracediff` commands.

use crate::diagnostics::{self, DiagError, TraceReport};
use crate::muse::{self, DriverConfig, DriverOutcome, GridParams, GridSpec, SearchError};
use crate::pipeline::{point_dim, PipelineObjective};
use crate::preprocess::{split_train_test, PreprocessError, RawDataset, Reducer, Scaler};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: no header row")]
    Empty { path: PathBuf },
    #[error("{path}: no data rows")]
    NoRows { path: PathBuf },
    #[error("{path}, line {line}: {message}")]
    Malformed { path: PathBuf, line: u64, message: String },
    #[error("{path}, line {line}: column '{column}' is not numeric: '{value}'")]
    NonNumeric { path: PathBuf, line: u64, column: String, value: String },
    #[error("{path}: need at least one feature column and a target column")]
    TooFewColumns { path: PathBuf },
    #[error("regression target must be numeric")]
    TextTarget,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Diagnostics(#[from] DiagError),
    #[error("serializing run record: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Reads a headered CSV whose last column is the target.
///
/// Feature columns must be numeric. A target column with any non-numeric
/// entry is read as class labels, numbered in first-appearance order;
/// otherwise it is kept as a numeric target without class names.
pub fn load_csv(path: &Path) -> Result<RawDataset> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let malformed = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line());
        match e.into_kind() {
            csv::ErrorKind::Io(source) => CliError::Io { path: path.to_path_buf(), source },
            kind => CliError::Malformed { path: path.to_path_buf(), line, message: format!("{kind:?}") },
        }
    };
    let header = reader.headers().map_err(malformed)?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(CliError::Empty { path: path.to_path_buf() });
    }
    if header.len() < 2 {
        return Err(CliError::TooFewColumns { path: path.to_path_buf() });
    }
    let d = header.len() - 1;
    let feature_names: Vec<String> = header.iter().take(d).map(str::to_string).collect();

    let mut values = Vec::new();
    let mut raw_targets = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(malformed)?;
        let line = rec.position().map_or(0, |p| p.line());
        for (j, field) in rec.iter().take(d).enumerate() {
            let v = f64::from_str(field).ok().filter(|v| v.is_finite()).ok_or_else(|| CliError::NonNumeric {
                path: path.to_path_buf(),
                line,
                column: feature_names[j].clone(),
                value: field.to_string(),
            })?;
            values.push(v);
        }
        raw_targets.push(rec[d].to_string());
    }
    if raw_targets.is_empty() {
        return Err(CliError::NoRows { path: path.to_path_buf() });
    }
    let n = raw_targets.len();
    let x = DMatrix::from_row_slice(n, d, &values);
    let numeric: Option<Vec<f64>> =
        raw_targets.iter().map(|t| f64::from_str(t).ok().filter(|v| v.is_finite())).collect();
    let ds = match numeric {
        Some(y) => RawDataset::new(x, y, feature_names, None)?,
        None => {
            let (y, names) = encode_labels(&raw_targets);
            RawDataset::new(x, y, feature_names, Some(names))?
        }
    };
    Ok(ds)
}

fn encode_labels(raw: &[String]) -> (Vec<f64>, Vec<String>) {
    let mut names: Vec<String> = Vec::new();
    let y = raw
        .iter()
        .map(|t| match names.iter().position(|n| n == t) {
            Some(i) => i as f64,
            None => {
                names.push(t.clone());
                (names.len() - 1) as f64
            }
        })
        .collect();
    (y, names)
}

/// Reinterprets a target column as class labels, first-appearance order.
pub fn as_classification(ds: RawDataset) -> RawDataset {
    if ds.class_names.is_some() {
        return ds;
    }
    let raw: Vec<String> = ds.y.iter().map(|v| v.to_string()).collect();
    let (y, names) = encode_labels(&raw);
    RawDataset { y, class_names: Some(names), ..ds }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classify,
    Regress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: TaskKind,
    pub dataset: PathBuf,
    pub seed: u64,
    pub n_trials: usize,
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub depth: i64,
    pub workers: usize,
    pub feat_ans: Vec<(usize, usize)>,
    pub sca_red: Vec<(Scaler, Reducer)>,
    /// Features after reduction, i.e. qubits.
    pub out_dims: usize,
    pub train_fraction: f64,
    pub baseline: bool,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(task: TaskKind, dataset: PathBuf) -> Self {
        let (feat_ans, sca_red, out_dims) = match task {
            TaskKind::Classify => {
                let g = GridSpec::standard();
                (g.feat_ans, g.sca_red, 4)
            }
            TaskKind::Regress => (
                vec![(1, 2), (1, 3), (2, 2), (2, 3)],
                vec![(Scaler::Standard, Reducer::Pca), (Scaler::MinMax, Reducer::Pca)],
                2,
            ),
        };
        RunConfig {
            task,
            dataset,
            seed: 0,
            n_trials: 2,
            epsilon: 0.02,
            alpha: 0.9,
            beta: 0.5,
            depth: 3,
            workers: 1,
            feat_ans,
            sca_red,
            out_dims,
            train_fraction: 0.8,
            baseline: false,
            output: None,
        }
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec { feat_ans: self.feat_ans.clone(), sca_red: self.sca_red.clone(), n_trials: self.n_trials }
    }

    pub fn driver_config(&self) -> DriverConfig {
        DriverConfig {
            epsilon: self.epsilon,
            alpha: self.alpha,
            beta: self.beta,
            depth: self.depth,
            dim: point_dim(&self.grid(), self.out_dims),
            seed: self.seed,
            workers: self.workers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid().validate()?;
        self.driver_config().search_args().validate()?;
        if self.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if self.out_dims == 0 || self.out_dims > crate::statevec::MAX_QUBITS {
            return Err(CliError::Config(format!("reduced dimension {} out of range", self.out_dims)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboScore {
    pub trial: usize,
    pub params: GridParams,
    pub start_score: Option<f64>,
    pub best_score: Option<f64>,
    pub evaluations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub best_point: Vec<f64>,
    pub best_score: Option<f64>,
    pub best_params: Option<GridParams>,
    pub lowest_score: Option<f64>,
    pub evaluations: usize,
    pub combinations: Vec<ComboScore>,
    pub search: DriverOutcome,
    pub baseline: Option<DriverOutcome>,
    pub wall_time_secs: f64,
}

fn combo_scores(out: &DriverOutcome) -> Vec<ComboScore> {
    out.combos
        .iter()
        .map(|c| ComboScore {
            trial: c.trial,
            params: c.params,
            start_score: c.start_score,
            best_score: c.best_sc,
            evaluations: c.trace.len(),
            error: c.error.clone(),
        })
        .collect()
}

impl RunRecord {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Loads the dataset and splits it per `config`.
pub fn prepare_objective(config: &RunConfig) -> Result<PipelineObjective> {
    let ds = load_csv(&config.dataset)?;
    let ds = match config.task {
        TaskKind::Classify => as_classification(ds),
        TaskKind::Regress if ds.class_names.is_some() => return Err(CliError::TextTarget),
        TaskKind::Regress => ds,
    };
    if config.out_dims > ds.n_features() {
        return Err(CliError::Config(format!(
            "reduced dimension {} exceeds the {} features in the dataset",
            config.out_dims,
            ds.n_features()
        )));
    }
    let (train, test) = split_train_test(&ds, config.train_fraction, config.seed)?;
    Ok(PipelineObjective::new(train, test, config.out_dims))
}

/// Runs the driver (and optionally the random baseline) and writes the
/// record to `config.output` when set.
pub fn cmd_search(config: &RunConfig) -> Result<RunRecord> {
    config.validate()?;
    let objective = prepare_objective(config)?;
    let started = Instant::now();
    let grid = config.grid();
    let dcfg = config.driver_config();
    let search = muse::driver(&grid, &dcfg, &objective)?;
    let baseline = if config.baseline {
        let per_combo = (2 * config.depth.max(0)) as usize;
        Some(muse::random_search_baseline(&grid, &dcfg, per_combo, &objective)?)
    } else {
        None
    };
    let record = RunRecord {
        config: config.clone(),
        best_point: search.best_pt.clone(),
        best_score: search.best_sc,
        best_params: search.best_params,
        lowest_score: search.lowest_score(),
        evaluations: search.evaluations(),
        combinations: combo_scores(&search),
        search,
        baseline,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    if let Some(path) = &config.output {
        record.save(path)?;
    }
    Ok(record)
}

/// Human-readable summary of a finished search.
pub fn summary(record: &RunRecord) -> String {
    let fmt_opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |v| format!("{v:.4}"));
    let mut s = String::new();
    s.push_str(&format!("best init point {:?}\n", record.best_point));
    s.push_str(&format!("best score {}\n", fmt_opt(record.best_score)));
    match record.best_params {
        Some(p) => s.push_str(&format!("best params {p}\n")),
        None => s.push_str("best params none\n"),
    }
    s.push_str(&format!("lowest score {}\n", fmt_opt(record.lowest_score)));
    s.push_str(&format!("evaluations {}\n", record.evaluations));
    if let Some(b) = &record.baseline {
        s.push_str(&format!(
            "random search best {} over {} evaluations\n",
            fmt_opt(b.best_sc),
            b.evaluations()
        ));
    }
    s
}

/// Trace-difference table for the dataset's features at `k` reduced
/// dimensions, written as CSV to `out` when given.
pub fn cmd_tracediff(dataset: &Path, k: usize, out: Option<&Path>) -> Result<Vec<TraceReport>> {
    let ds = load_csv(dataset)?;
    let reports = diagnostics::trace_table(&ds, k)?;
    if let Some(path) = out {
        let file = fs::File::create(path).map_err(io_err(path))?;
        diagnostics::write_csv(&reports, file).map_err(io_err(path))?;
    }
    Ok(reports)
}
