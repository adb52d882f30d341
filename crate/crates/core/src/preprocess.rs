//! Classical preprocessing: train/test splitting, scaling and dimensionality
//! reduction. Every statistic is fitted on training rows only.
//!
//! Variances are population (divide-by-n) throughout.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("too few samples: {0}")]
    TooFewSamples(usize),
    #[error("split fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("requested {k} output dimensions, at most {max} available")]
    InvalidK { k: usize, max: usize },
    #[error("ANOVA F needs at least 2 classes, got {0}")]
    SingleClass(usize),
    #[error("feature selection needs targets")]
    Unsupervised,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unknown option '{0}'")]
    UnknownOption(String),
}

pub type Result<T> = std::result::Result<T, PreprocessError>;

/// Sample-major dataset. Classification targets hold class indices `0..k` as
/// floats and carry `class_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub feature_names: Vec<String>,
    pub class_names: Option<Vec<String>>,
}

impl RawDataset {
    pub fn new(
        x: DMatrix<f64>,
        y: Vec<f64>,
        feature_names: Vec<String>,
        class_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(PreprocessError::Shape(format!(
                "{} feature rows but {} targets",
                x.nrows(),
                y.len()
            )));
        }
        if x.ncols() == 0 || feature_names.len() != x.ncols() {
            return Err(PreprocessError::Shape(format!(
                "{} feature columns with {} names",
                x.ncols(),
                feature_names.len()
            )));
        }
        Ok(RawDataset { x, y, feature_names, class_names })
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_classes(&self) -> Option<usize> {
        self.class_names.as_ref().map(Vec::len)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.y.iter().map(|&v| v as usize).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> RawDataset {
        RawDataset {
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }
}

/// Shuffled split with `round(fraction·n)` training rows. Classification
/// datasets are split per class, with leftover slots handed out by largest
/// fractional remainder.
pub fn split_train_test(
    ds: &RawDataset,
    fraction: f64,
    seed: u64,
) -> Result<(RawDataset, RawDataset)> {
    let (train, test) = split_indices(ds, fraction, seed)?;
    Ok((ds.select_rows(&train), ds.select_rows(&test)))
}

pub fn split_indices(ds: &RawDataset, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = ds.n_samples();
    if n < 2 {
        return Err(PreprocessError::TooFewSamples(n));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(PreprocessError::BadFraction(fraction));
    }
    let n_train = (fraction * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let groups: Vec<Vec<usize>> = match ds.n_classes() {
        Some(k) => {
            let mut g = vec![Vec::new(); k];
            for (i, &c) in ds.labels().iter().enumerate() {
                g[c].push(i);
            }
            g
        }
        None => vec![(0..n).collect()],
    };

    let mut quotas: Vec<usize> = groups
        .iter()
        .map(|g| (fraction * g.len() as f64).floor() as usize)
        .collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = fraction * groups[a].len() as f64 - quotas[a] as f64;
        let rb = fraction * groups[b].len() as f64 - quotas[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut missing = n_train.saturating_sub(quotas.iter().sum());
    for &g in order.iter().cycle().take(order.len() * 2) {
        if missing == 0 {
            break;
        }
        if quotas[g] < groups[g].len() {
            quotas[g] += 1;
            missing -= 1;
        }
    }

    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    for (mut g, q) in groups.into_iter().zip(quotas) {
        g.shuffle(&mut rng);
        train.extend_from_slice(&g[..q]);
        test.extend_from_slice(&g[q..]);
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scaler {
    #[serde(rename = "std")]
    Standard,
    #[serde(rename = "mm")]
    MinMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reducer {
    #[serde(rename = "pca")]
    Pca,
    /// Univariate selection by ANOVA F-value.
    #[serde(rename = "f")]
    FSelect,
}

impl fmt::Display for Scaler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scaler::Standard => "std",
            Scaler::MinMax => "mm",
        })
    }
}

impl fmt::Display for Reducer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reducer::Pca => "pca",
            Reducer::FSelect => "f",
        })
    }
}

impl FromStr for Scaler {
    type Err = PreprocessError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "std" => Ok(Scaler::Standard),
            "mm" => Ok(Scaler::MinMax),
            _ => Err(PreprocessError::UnknownOption(s.to_string())),
        }
    }
}

impl FromStr for Reducer {
    type Err = PreprocessError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(Reducer::Pca),
            "f" => Ok(Reducer::FSelect),
            _ => Err(PreprocessError::UnknownOption(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessSpec {
    pub scaler: Scaler,
    pub reducer: Reducer,
    pub out_dims: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedScaler {
    MinMax { min: Vec<f64>, max: Vec<f64> },
    Standard { mean: Vec<f64>, std: Vec<f64> },
}

impl FittedScaler {
    pub fn fit(kind: Scaler, train: &DMatrix<f64>) -> Result<Self> {
        match kind {
            Scaler::MinMax => {
                let (min, max) = column_min_max(train);
                Ok(FittedScaler::MinMax { min, max })
            }
            Scaler::Standard => {
                if train.nrows() < 2 {
                    return Err(PreprocessError::TooFewSamples(train.nrows()));
                }
                let (mean, var) = column_mean_var(train);
                Ok(FittedScaler::Standard { mean, std: var.into_iter().map(f64::sqrt).collect() })
            }
        }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        match self {
            FittedScaler::MinMax { min, max } => {
                for (j, mut col) in out.column_iter_mut().enumerate() {
                    let range = max[j] - min[j];
                    for v in col.iter_mut() {
                        *v = if range > 0.0 { ((*v - min[j]) / range).clamp(0.0, 1.0) } else { 0.0 };
                    }
                }
            }
            FittedScaler::Standard { mean, std } => {
                for (j, mut col) in out.column_iter_mut().enumerate() {
                    for v in col.iter_mut() {
                        *v = if std[j] > 0.0 { (*v - mean[j]) / std[j] } else { 0.0 };
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedPca {
    pub mean: Vec<f64>,
    /// `n_features × k`, columns are unit principal axes.
    pub components: DMatrix<f64>,
    pub explained_variance: Vec<f64>,
}

impl FittedPca {
    pub fn fit(train: &DMatrix<f64>, k: usize) -> Result<Self> {
        let (n, d) = train.shape();
        let max = d.min(n);
        if k == 0 || k > max {
            return Err(PreprocessError::InvalidK { k, max });
        }
        let (mean, _) = column_mean_var(train);
        let centered = center(train, &mean);
        let cov = centered.transpose() * &centered / n as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

        let mut components = DMatrix::zeros(d, k);
        let mut explained_variance = Vec::with_capacity(k);
        for (c, &idx) in order.iter().take(k).enumerate() {
            let mut axis = eig.eigenvectors.column(idx).into_owned();
            let pivot = axis
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |best, (i, v)| if v.abs() > best.1.abs() { (i, *v) } else { best });
            if pivot.1 < 0.0 {
                axis.neg_mut();
            }
            components.set_column(c, &axis);
            explained_variance.push(eig.eigenvalues[idx].max(0.0));
        }
        Ok(FittedPca { mean, components, explained_variance })
    }

    pub fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        center(x, &self.mean) * &self.components
    }

    /// Maps projected coordinates back to centered feature space.
    pub fn unproject(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        z * self.components.transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedReducer {
    Pca(FittedPca),
    /// Selected column indices, ascending.
    Select(Vec<usize>),
}

impl FittedReducer {
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            FittedReducer::Pca(p) => p.project(x),
            FittedReducer::Select(idx) => x.select_columns(idx),
        }
    }
}

/// Scaler, reducer and, for standard scaling, a single affine map onto
/// Supervision available to univariate feature selection.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    None,
    Classes(&'a [usize]),
    Values(&'a [f64]),
}

/// `[0,1]` fitted from the global min/max of the reduced training values.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedTransform {
    pub spec: PreprocessSpec,
    pub scaler: FittedScaler,
    pub reducer: FittedReducer,
    pub unit_remap: Option<(f64, f64)>,
}

impl FittedTransform {
    /// Fits on `train` and returns the transform with its own train output.
    /// Univariate selection needs `targets` unless it keeps every column.
    pub fn fit(
        spec: PreprocessSpec,
        train: &DMatrix<f64>,
        targets: Targets<'_>,
    ) -> Result<(Self, DMatrix<f64>)> {
        let d = train.ncols();
        if spec.out_dims == 0 || spec.out_dims > d {
            return Err(PreprocessError::InvalidK { k: spec.out_dims, max: d });
        }
        let scaler = FittedScaler::fit(spec.scaler, train)?;
        let scaled = scaler.apply(train);
        let reducer = match spec.reducer {
            Reducer::Pca => FittedReducer::Pca(FittedPca::fit(&scaled, spec.out_dims)?),
            Reducer::FSelect => {
                let scores = match targets {
                    _ if spec.out_dims == d => vec![0.0; d],
                    Targets::Classes(labels) => anova_f_scores(&scaled, labels)?,
                    Targets::Values(y) => regression_f_scores(&scaled, y)?,
                    Targets::None => return Err(PreprocessError::Unsupervised),
                };
                let mut idx = select_top_k(&scores, spec.out_dims)?;
                idx.sort_unstable();
                FittedReducer::Select(idx)
            }
        };
        let unit_remap = match spec.scaler {
            Scaler::Standard => {
                let reduced = reducer.apply(&scaled);
                let lo = reduced.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = reduced.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Some((lo, hi))
            }
            Scaler::MinMax => None,
        };
        let fitted = FittedTransform { spec, scaler, reducer, unit_remap };
        let out = fitted.apply(train);
        Ok((fitted, out))
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.reducer.apply(&self.scaler.apply(x));
        if let Some((lo, hi)) = self.unit_remap {
            let range = hi - lo;
            out.apply(|v| *v = if range > 0.0 { ((*v - lo) / range).clamp(0.0, 1.0) } else { 0.0 });
        }
        out
    }
}

pub fn fit_apply_minmax(train: &DMatrix<f64>, other: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let s = FittedScaler::fit(Scaler::MinMax, train).expect("min-max fit is infallible");
    (s.apply(train), s.apply(other))
}

pub fn fit_apply_standard(
    train: &DMatrix<f64>,
    other: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let s = FittedScaler::fit(Scaler::Standard, train)?;
    Ok((s.apply(train), s.apply(other)))
}

pub fn fit_apply_pca(
    train: &DMatrix<f64>,
    other: &DMatrix<f64>,
    k: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = FittedPca::fit(train, k)?;
    Ok((p.project(train), p.project(other)))
}

/// One-way ANOVA F statistic per feature.
///
/// Zero within-group variance gives `+∞` when the group means differ and `0`
/// when they do not.
pub fn anova_f_scores(x: &DMatrix<f64>, labels: &[usize]) -> Result<Vec<f64>> {
    let n = x.nrows();
    if labels.len() != n {
        return Err(PreprocessError::Shape(format!("{n} rows but {} labels", labels.len())));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let present: Vec<usize> = (0..k).filter(|&c| counts[c] > 0).collect();
    let c = present.len();
    if c < 2 {
        return Err(PreprocessError::SingleClass(c));
    }
    if n <= c {
        return Err(PreprocessError::TooFewSamples(n));
    }

    let scores = x
        .column_iter()
        .map(|col| {
            let grand = col.sum() / n as f64;
            let mut sums = vec![0.0; k];
            for (v, &l) in col.iter().zip(labels) {
                sums[l] += v;
            }
            let means: Vec<f64> =
                (0..k).map(|g| if counts[g] > 0 { sums[g] / counts[g] as f64 } else { 0.0 }).collect();
            let ssb: f64 = present
                .iter()
                .map(|&g| counts[g] as f64 * (means[g] - grand).powi(2))
                .sum();
            let ssw: f64 = col.iter().zip(labels).map(|(v, &l)| (v - means[l]).powi(2)).sum();
            let between = ssb / (c - 1) as f64;
            let within = ssw / (n - c) as f64;
            if within > 0.0 {
                between / within
            } else if between > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .collect();
    Ok(scores)
}

/// Univariate linear-regression F statistic per feature:
/// `r²/(1−r²)·(n−2)` with `r` the Pearson correlation against `y`. A constant
/// column scores 0; a perfectly correlated one scores `+∞`.
pub fn regression_f_scores(x: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    let n = x.nrows();
    if y.len() != n {
        return Err(PreprocessError::Shape(format!("{n} rows but {} targets", y.len())));
    }
    if n < 3 {
        return Err(PreprocessError::TooFewSamples(n));
    }
    let ym = y.iter().sum::<f64>() / n as f64;
    let syy: f64 = y.iter().map(|v| (v - ym).powi(2)).sum();
    let scores = x
        .column_iter()
        .map(|col| {
            let xm = col.sum() / n as f64;
            let sxx: f64 = col.iter().map(|v| (v - xm).powi(2)).sum();
            if sxx == 0.0 || syy == 0.0 {
                return 0.0;
            }
            let sxy: f64 = col.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
            let r2 = (sxy * sxy / (sxx * syy)).min(1.0);
            if r2 >= 1.0 {
                f64::INFINITY
            } else {
                r2 / (1.0 - r2) * (n - 2) as f64
            }
        })
        .collect();
    Ok(scores)
}

/// Indices of the `k` largest scores, descending, ties to the lower index.
pub fn select_top_k(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > scores.len() {
        return Err(PreprocessError::InvalidK { k, max: scores.len() });
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

fn column_min_max(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    x.column_iter()
        .map(|c| (c.min(), c.max()))
        .unzip()
}

fn column_mean_var(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    x.column_iter()
        .map(|c| {
            let m = c.sum() / n;
            let v = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            (m, v)
        })
        .unzip()
}

fn center(x: &DMatrix<f64>, mean: &[f64]) -> DMatrix<f64> {
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    out
}
