//! Trace-difference diagnostics for preprocessing choices.
//!
//! Every sample is encoded by a phase circuit (`H` then `P(x_i)` on qubit
//! `i`) once with the raw features and once with the preprocessed ones; the
//! per-sample score is `|Tr U(variant) − Tr U(reference)|`.

use crate::preprocess::{
    anova_f_scores, regression_f_scores, select_top_k, FittedPca, FittedScaler, PreprocessError, RawDataset,
    Reducer, Scaler,
};
use crate::statevec::{Circuit, GateOp, SimError, MAX_UNITARY_QUBITS};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use std::fmt;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("{0} qubits exceeds the unitary limit of {MAX_UNITARY_QUBITS}")]
    TooManyQubits(usize),
    #[error("k = {k} must lie in 1..={d}")]
    InvalidK { k: usize, d: usize },
    #[error("no samples")]
    Empty,
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

pub type Result<T> = std::result::Result<T, DiagError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Raw features, first `k` columns.
    Identity,
    /// Scaler only; `k` must equal the feature count.
    Scale(Scaler),
    /// Reducer on the raw features.
    Reduce(Reducer),
    /// Scaler then reducer.
    Pipeline(Scaler, Reducer),
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Identity => f.write_str("identity"),
            Variant::Scale(s) => write!(f, "{s}"),
            Variant::Reduce(r) => write!(f, "{r}"),
            Variant::Pipeline(s, r) => write!(f, "{s}+{r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceReport {
    pub variant: String,
    pub mean_trace_diff: f64,
    pub per_sample: Vec<f64>,
}

/// `H(i)` then `P(x_i)` on every qubit `i`.
pub fn reference_phase_circuit(x: &[f64]) -> Result<Circuit> {
    let mut c = Circuit::new(x.len())?;
    for (q, &xi) in x.iter().enumerate() {
        c.push(GateOp::h(q))?;
        c.push(GateOp::p(q, xi))?;
    }
    Ok(c)
}

pub fn phase_trace(x: &[f64]) -> Result<Complex64> {
    if x.len() > MAX_UNITARY_QUBITS {
        return Err(DiagError::TooManyQubits(x.len()));
    }
    Ok(reference_phase_circuit(x)?.unitary()?.trace())
}

fn supervised_scores(x: &DMatrix<f64>, ds: &RawDataset) -> Result<Vec<f64>> {
    Ok(match ds.class_names {
        Some(_) => anova_f_scores(x, &ds.labels())?,
        None => regression_f_scores(x, &ds.y)?,
    })
}

/// Returns `(variant features, reference features)`, both `n × k`.
fn variant_and_reference(ds: &RawDataset, variant: Variant, k: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = ds.n_features();
    let first_k = || ds.x.columns(0, k).into_owned();
    match variant {
        Variant::Identity => Ok((first_k(), first_k())),
        Variant::Scale(s) => {
            if k != d {
                return Err(DiagError::InvalidK { k, d });
            }
            Ok((FittedScaler::fit(s, &ds.x)?.apply(&ds.x), ds.x.clone()))
        }
        Variant::Reduce(r) | Variant::Pipeline(_, r) => {
            let scaled = match variant {
                Variant::Pipeline(s, _) => FittedScaler::fit(s, &ds.x)?.apply(&ds.x),
                _ => ds.x.clone(),
            };
            match r {
                Reducer::Pca => Ok((FittedPca::fit(&scaled, k)?.project(&scaled), first_k())),
                Reducer::FSelect => {
                    let mut idx = if k == d {
                        (0..d).collect()
                    } else {
                        select_top_k(&supervised_scores(&scaled, ds)?, k)?
                    };
                    idx.sort_unstable();
                    Ok((scaled.select_columns(&idx), ds.x.select_columns(&idx)))
                }
            }
        }
    }
}

/// Mean over samples of `|Tr U(variant(x)) − Tr U(reference(x))|`, with the
/// variant fitted on the whole dataset. Selection variants compare against
/// the selected raw columns, projections against the first `k` raw columns.
pub fn mean_trace_difference(ds: &RawDataset, variant: Variant, k: usize) -> Result<TraceReport> {
    let d = ds.n_features();
    if k == 0 || k > d {
        return Err(DiagError::InvalidK { k, d });
    }
    if k > MAX_UNITARY_QUBITS {
        return Err(DiagError::TooManyQubits(k));
    }
    if ds.n_samples() == 0 {
        return Err(DiagError::Empty);
    }
    let (var, reference) = variant_and_reference(ds, variant, k)?;
    let per_sample = (0..ds.n_samples())
        .into_par_iter()
        .map(|i| {
            let a: Vec<f64> = var.row(i).iter().copied().collect();
            let b: Vec<f64> = reference.row(i).iter().copied().collect();
            Ok((phase_trace(&a)? - phase_trace(&b)?).norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok(TraceReport { variant: variant.to_string(), mean_trace_diff: mean, per_sample })
}

/// Identity plus every scaler × reducer pair.
pub fn trace_table(ds: &RawDataset, k: usize) -> Result<Vec<TraceReport>> {
    let mut variants = vec![Variant::Identity];
    for s in [Scaler::MinMax, Scaler::Standard] {
        for r in [Reducer::Pca, Reducer::FSelect] {
            variants.push(Variant::Pipeline(s, r));
        }
    }
    variants.into_iter().map(|v| mean_trace_difference(ds, v, k)).collect()
}

pub fn write_csv<W: Write>(reports: &[TraceReport], mut w: W) -> io::Result<()> {
    writeln!(w, "variant,mean_trace_diff")?;
    for r in reports {
        writeln!(w, "{},{}", r.variant, r.mean_trace_diff)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn dataset(n: usize, d: usize) -> RawDataset {
        let x = DMatrix::from_fn(n, d, |i, j| ((i * 13 + j * 7) % 17) as f64 * 10.0 / 16.0);
        let y = (0..n).map(|i| (i % 3) as f64).collect();
        let names = (0..d).map(|j| format!("f{j}")).collect();
        RawDataset::new(x, y, names, Some(vec!["a".into(), "b".into(), "c".into()])).unwrap()
    }

    #[test]
    fn reference_circuit_shape() {
        assert_eq!(reference_phase_circuit(&[0.0]).unwrap().ops(), &[GateOp::h(0), GateOp::p(0, 0.0)]);
        assert_eq!(reference_phase_circuit(&[0.1, 0.2, 0.3, 0.4]).unwrap().len(), 8);
        assert!(phase_trace(&[PI]).unwrap().norm().is_finite());
    }

    #[test]
    fn trace_matches_closed_form() {
        // Tr(P(x)·H) = (1 − e^{ix})/√2 per qubit.
        let x = [0.3, 1.7, 2.9];
        let expected: Complex64 = x
            .iter()
            .map(|&v| (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, v)) / 2f64.sqrt())
            .product();
        assert!((phase_trace(&x).unwrap() - expected).norm() < 1e-12);
    }

    #[test]
    fn identity_and_full_selection_are_zero() {
        let ds = dataset(20, 4);
        assert_eq!(mean_trace_difference(&ds, Variant::Identity, 3).unwrap().mean_trace_diff, 0.0);
        let r = mean_trace_difference(&ds, Variant::Reduce(Reducer::FSelect), 4).unwrap();
        assert_eq!(r.mean_trace_diff, 0.0);
        assert!(mean_trace_difference(&ds, Variant::Reduce(Reducer::Pca), 4).unwrap().mean_trace_diff > 0.0);
    }

    #[test]
    fn table_has_five_rows() {
        let ds = dataset(30, 4);
        let t = trace_table(&ds, 3).unwrap();
        let labels: Vec<&str> = t.iter().map(|r| r.variant.as_str()).collect();
        assert_eq!(labels, ["identity", "mm+pca", "mm+f", "std+pca", "std+f"]);
        for r in &t {
            assert!(r.mean_trace_diff >= 0.0);
            let mean = r.per_sample.iter().sum::<f64>() / r.per_sample.len() as f64;
            assert_eq!(mean, r.mean_trace_diff);
        }
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 6);
    }

    #[test]
    fn bad_k() {
        let ds = dataset(10, 3);
        assert!(matches!(mean_trace_difference(&ds, Variant::Identity, 4), Err(DiagError::InvalidK { .. })));
        assert!(matches!(mean_trace_difference(&ds, Variant::Scale(Scaler::MinMax), 2), Err(DiagError::InvalidK { .. })));
    }
}
