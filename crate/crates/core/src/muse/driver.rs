//! Grid driver and random-search baseline.

use super::{muse, Branch, Evaluation, Objective, SearchArgs, SearchError, TraceEntry};
use crate::preprocess::{Reducer, Scaler};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

/// One grid combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridParams {
    pub fm_reps: usize,
    pub ansatz_reps: usize,
    pub scaler: Scaler,
    pub reducer: Reducer,
}

impl fmt::Display for GridParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}) ({}, {})", self.fm_reps, self.ansatz_reps, self.scaler, self.reducer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub feat_ans: Vec<(usize, usize)>,
    pub sca_red: Vec<(Scaler, Reducer)>,
    pub n_trials: usize,
}

impl GridSpec {
    /// The full classification grid.
    pub fn standard() -> Self {
        GridSpec {
            feat_ans: vec![(1, 2), (1, 3), (1, 4), (2, 3), (2, 4)],
            sca_red: vec![
                (Scaler::Standard, Reducer::Pca),
                (Scaler::Standard, Reducer::FSelect),
                (Scaler::MinMax, Reducer::Pca),
                (Scaler::MinMax, Reducer::FSelect),
            ],
            n_trials: 2,
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if self.feat_ans.is_empty() || self.sca_red.is_empty() || self.n_trials == 0 {
            return Err(SearchError::InvalidArgs("grid lists and trial count must be non-empty".into()));
        }
        if self.feat_ans.iter().any(|&(f, a)| f == 0 || a == 0) {
            return Err(SearchError::InvalidArgs("repetition counts must be at least 1".into()));
        }
        Ok(())
    }

    /// `(trial, feat_ans index, sca_red index, params)` in driver order.
    pub fn combinations(&self) -> Vec<(usize, usize, usize, GridParams)> {
        let mut out = Vec::new();
        for trial in 0..self.n_trials {
            for (i, &(fm_reps, ansatz_reps)) in self.feat_ans.iter().enumerate() {
                for (j, &(scaler, reducer)) in self.sca_red.iter().enumerate() {
                    out.push((trial, i, j, GridParams { fm_reps, ansatz_reps, scaler, reducer }));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub depth: i64,
    /// Length of the searched point.
    pub dim: usize,
    pub seed: u64,
    pub workers: usize,
}

impl DriverConfig {
    pub fn standard(dim: usize, seed: u64) -> Self {
        DriverConfig { epsilon: 0.02, alpha: 0.9, beta: 0.5, depth: 3, dim, seed, workers: 1 }
    }

    pub fn search_args(&self) -> SearchArgs {
        SearchArgs::unit_box(self.dim, self.epsilon, self.alpha, self.beta, self.depth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboOutcome {
    pub trial: usize,
    pub params: GridParams,
    pub start: Vec<f64>,
    /// Score of the starting point; `None` if it could not be evaluated.
    pub start_score: Option<f64>,
    pub best_pt: Vec<f64>,
    /// `None` when the combination failed before producing any score.
    pub best_sc: Option<f64>,
    pub trace: Vec<TraceEntry>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverOutcome {
    pub best_pt: Vec<f64>,
    pub best_sc: Option<f64>,
    pub best_params: Option<GridParams>,
    pub combos: Vec<ComboOutcome>,
}

impl DriverOutcome {
    pub fn evaluations(&self) -> usize {
        self.combos.iter().map(|c| c.trace.len()).sum()
    }

    pub fn lowest_score(&self) -> Option<f64> {
        self.combos
            .iter()
            .flat_map(|c| c.trace.iter().map(|t| t.score))
            .reduce(f64::min)
    }

    fn fold(combos: Vec<ComboOutcome>) -> Self {
        let mut out = DriverOutcome { best_pt: Vec::new(), best_sc: None, best_params: None, combos: Vec::new() };
        for c in &combos {
            if let Some(sc) = c.best_sc {
                if out.best_sc.is_none_or(|b| sc > b) {
                    out.best_sc = Some(sc);
                    out.best_pt = c.best_pt.clone();
                    out.best_params = Some(c.params);
                }
            }
        }
        out.combos = combos;
        out
    }
}

const MUSE_STREAM: u64 = 0x4d55_5345;
const RANDOM_STREAM: u64 = 0x5241_4e44;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-combination rng seed; independent of evaluation order.
pub fn combo_seed(seed: u64, stream: u64, trial: usize, i: usize, j: usize) -> u64 {
    [stream, trial as u64, i as u64, j as u64]
        .iter()
        .fold(splitmix(seed), |acc, &v| splitmix(acc ^ v))
}

fn uniform_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen::<f64>()).collect()
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, SearchError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SearchError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

fn seed_entry(ev: &Evaluation, start: &[f64]) -> TraceEntry {
    TraceEntry {
        branch: Branch::Seed,
        center: start.to_vec(),
        point: ev.point.clone(),
        score: ev.score,
        running_best: ev.score,
    }
}

fn run_combo<O: Objective<GridParams> + ?Sized>(
    cfg: &DriverConfig,
    args: &SearchArgs,
    (trial, i, j, params): (usize, usize, usize, GridParams),
    objective: &O,
) -> ComboOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(combo_seed(cfg.seed, MUSE_STREAM, trial, i, j));
    let start = uniform_point(&mut rng, cfg.dim);
    let mut out = ComboOutcome {
        trial,
        params,
        start: start.clone(),
        start_score: None,
        best_pt: start.clone(),
        best_sc: None,
        trace: Vec::new(),
        error: None,
    };
    let seed_ev = match objective.run(&start, &params) {
        Ok(ev) => ev,
        Err(e) => {
            out.error = Some(e);
            return out;
        }
    };
    out.start_score = Some(seed_ev.score);
    out.trace.push(seed_entry(&seed_ev, &start));
    let parallel = cfg.workers > 1;
    let (search, error) =
        match muse(seed_ev.point.clone(), seed_ev.score, args, &params, objective, &mut rng, parallel) {
            Ok(s) => (s, None),
            Err(f) => (f.partial, Some(f.error.to_string())),
        };
    out.best_pt = search.best_pt;
    out.best_sc = Some(search.best_sc);
    out.trace.extend(search.trace);
    out.error = error;
    out
}

/// For every trial × feat_ans × sca_red combination: draw a uniform start in
/// the unit box, score it, run MUSE from it; keep the global best. Failed
/// combinations are recorded with their error and never win.
pub fn driver<O: Objective<GridParams> + ?Sized>(
    grid: &GridSpec,
    cfg: &DriverConfig,
    objective: &O,
) -> Result<DriverOutcome, SearchError> {
    grid.validate()?;
    let args = cfg.search_args();
    args.validate()?;
    let combos = grid.combinations();
    let results = with_pool(cfg.workers, || {
        combos
            .par_iter()
            .map(|&c| run_combo(cfg, &args, c, objective))
            .collect::<Vec<_>>()
    })?;
    Ok(DriverOutcome::fold(results))
}

/// Per combination, scores `evals_per_combo` independent uniform points.
pub fn random_search_baseline<O: Objective<GridParams> + ?Sized>(
    grid: &GridSpec,
    cfg: &DriverConfig,
    evals_per_combo: usize,
    objective: &O,
) -> Result<DriverOutcome, SearchError> {
    grid.validate()?;
    if cfg.dim == 0 {
        return Err(SearchError::InvalidArgs("point dimension must be positive".into()));
    }
    let combos = grid.combinations();
    let results = with_pool(cfg.workers, || {
        combos
            .par_iter()
            .map(|&(trial, i, j, params)| {
                let mut rng = ChaCha8Rng::seed_from_u64(combo_seed(cfg.seed, RANDOM_STREAM, trial, i, j));
                let points: Vec<Vec<f64>> = (0..evals_per_combo).map(|_| uniform_point(&mut rng, cfg.dim)).collect();
                let mut out = ComboOutcome {
                    trial,
                    params,
                    start: points.first().cloned().unwrap_or_default(),
                    start_score: None,
                    best_pt: Vec::new(),
                    best_sc: None,
                    trace: Vec::new(),
                    error: None,
                };
                for p in points {
                    match objective.run(&p, &params) {
                        Ok(ev) => {
                            if out.start_score.is_none() {
                                out.start_score = Some(ev.score);
                            }
                            let best = out.best_sc.map_or(ev.score, |b| b.max(ev.score));
                            if out.best_sc.is_none_or(|b| ev.score > b) {
                                out.best_pt = ev.point.clone();
                            }
                            out.best_sc = Some(best);
                            out.trace.push(TraceEntry {
                                branch: Branch::Random,
                                center: p,
                                point: ev.point,
                                score: ev.score,
                                running_best: best,
                            });
                        }
                        Err(e) => {
                            out.error = Some(e);
                            break;
                        }
                    }
                }
                out
            })
            .collect::<Vec<_>>()
    })?;
    Ok(DriverOutcome::fold(results))
}
