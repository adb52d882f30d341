//! Feature-map and ansatz circuit builders.
//!
//! The feature map is the second-order Pauli-Z evolution map with linear
//! entanglement (ZZ map); the ansatz is a real-amplitudes layout of RY layers
//! separated by linear CX chains. Both are rebuilt per sample with concrete
//! angles bound; there are no symbolic parameters.

use crate::statevec::{Circuit, GateOp, SimError};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("feature vector has {got} entries, feature map expects {expected}")]
    Encoding { expected: usize, got: usize },
    #[error("weight vector has {got} entries, ansatz expects {expected}")]
    ParameterCount { expected: usize, got: usize },
    #[error("feature map has {feature_map} qubits, ansatz has {ansatz}")]
    QubitMismatch { feature_map: usize, ansatz: usize },
    #[error("repetitions must be at least 1")]
    ZeroReps,
    #[error(transparent)]
    Sim(#[from] SimError),
}

pub type Result<T> = std::result::Result<T, CircuitError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMapSpec {
    pub n_qubits: usize,
    pub reps: usize,
    /// Re-apply the Hadamard layer at the start of every repetition. When
    /// false only the first repetition carries it.
    #[serde(default = "default_true")]
    pub hadamard_every_rep: bool,
}

fn default_true() -> bool {
    true
}

impl FeatureMapSpec {
    pub fn new(n_qubits: usize, reps: usize) -> Self {
        FeatureMapSpec { n_qubits, reps, hadamard_every_rep: true }
    }

    pub fn build(&self, x: &[f64]) -> Result<Circuit> {
        build_feature_map(self, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub n_qubits: usize,
    pub reps: usize,
}

impl AnsatzSpec {
    pub fn new(n_qubits: usize, reps: usize) -> Self {
        AnsatzSpec { n_qubits, reps }
    }

    pub fn num_parameters(&self) -> usize {
        self.n_qubits * (self.reps + 1)
    }

    pub fn build(&self, weights: &[f64]) -> Result<Circuit> {
        build_ansatz(self, weights)
    }
}

/// ZZ feature map with linear entanglement.
///
/// Per repetition: `H` on every qubit, `P(2·x_i)` on qubit `i`, then for each
/// neighbour pair `(i, i+1)`: `CX(i,i+1) · P(2(π−x_i)(π−x_{i+1}))[i+1] · CX(i,i+1)`.
pub fn build_feature_map(spec: &FeatureMapSpec, x: &[f64]) -> Result<Circuit> {
    if spec.reps == 0 {
        return Err(CircuitError::ZeroReps);
    }
    if x.len() != spec.n_qubits {
        return Err(CircuitError::Encoding { expected: spec.n_qubits, got: x.len() });
    }
    let n = spec.n_qubits;
    let mut c = Circuit::new(n)?;
    for rep in 0..spec.reps {
        if rep == 0 || spec.hadamard_every_rep {
            for q in 0..n {
                c.push(GateOp::h(q))?;
            }
        }
        for (q, &xi) in x.iter().enumerate() {
            c.push(GateOp::p(q, 2.0 * xi))?;
        }
        for i in 0..n.saturating_sub(1) {
            let phi = 2.0 * (PI - x[i]) * (PI - x[i + 1]);
            c.push(GateOp::cx(i, i + 1))?;
            c.push(GateOp::p(i + 1, phi))?;
            c.push(GateOp::cx(i, i + 1))?;
        }
    }
    Ok(c)
}

/// Real-amplitudes ansatz: `reps` blocks of (RY layer, CX chain) and a final
/// RY layer. Weights are consumed layer-major, qubit-minor.
pub fn build_ansatz(spec: &AnsatzSpec, weights: &[f64]) -> Result<Circuit> {
    if spec.reps == 0 {
        return Err(CircuitError::ZeroReps);
    }
    let expected = spec.num_parameters();
    if weights.len() != expected {
        return Err(CircuitError::ParameterCount { expected, got: weights.len() });
    }
    let n = spec.n_qubits;
    let mut c = Circuit::new(n)?;
    let mut layers = weights.chunks_exact(n);
    for _ in 0..spec.reps {
        for (q, &w) in layers.next().expect("length checked").iter().enumerate() {
            c.push(GateOp::ry(q, w))?;
        }
        for q in 0..n.saturating_sub(1) {
            c.push(GateOp::cx(q, q + 1))?;
        }
    }
    for (q, &w) in layers.next().expect("length checked").iter().enumerate() {
        c.push(GateOp::ry(q, w))?;
    }
    Ok(c)
}

/// Feature-map ops followed by ansatz ops.
pub fn compose_model(feature_map: &Circuit, ansatz: &Circuit) -> Result<Circuit> {
    if feature_map.n_qubits() != ansatz.n_qubits() {
        return Err(CircuitError::QubitMismatch {
            feature_map: feature_map.n_qubits(),
            ansatz: ansatz.n_qubits(),
        });
    }
    let mut c = feature_map.clone();
    c.extend(ansatz)?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevec::GateKind;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn kinds(c: &Circuit) -> Vec<&'static str> {
        c.ops().iter().map(|g| g.kind().name()).collect()
    }

    #[test]
    fn single_qubit_feature_map() {
        let c = build_feature_map(&FeatureMapSpec::new(1, 1), &[0.0]).unwrap();
        assert_eq!(c.ops(), &[GateOp::h(0), GateOp::p(0, 0.0)]);
    }

    #[test]
    fn two_qubit_feature_map_sequence() {
        let c = build_feature_map(&FeatureMapSpec::new(2, 1), &[0.0, 0.0]).unwrap();
        assert_eq!(kinds(&c), ["H", "H", "P", "P", "CX", "P", "CX"]);
        match c.ops()[5].kind() {
            GateKind::P(phi) => assert!((phi - 2.0 * PI * PI).abs() < 1e-12),
            k => panic!("unexpected {k:?}"),
        }
        assert_eq!(c.ops()[5].targets(), &[1]);
    }

    #[test]
    fn feature_map_gate_count() {
        let c = build_feature_map(&FeatureMapSpec::new(3, 2), &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(c.len(), 24);
        let spec = FeatureMapSpec { hadamard_every_rep: false, ..FeatureMapSpec::new(3, 2) };
        assert_eq!(build_feature_map(&spec, &[0.1, 0.2, 0.3]).unwrap().len(), 21);
    }

    #[test]
    fn feature_map_dimension_mismatch() {
        let err = build_feature_map(&FeatureMapSpec::new(3, 1), &[0.1]).unwrap_err();
        assert_eq!(err, CircuitError::Encoding { expected: 3, got: 1 });
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(AnsatzSpec::new(2, 1).num_parameters(), 4);
        assert_eq!(AnsatzSpec::new(4, 3).num_parameters(), 16);
        let err = build_ansatz(&AnsatzSpec::new(2, 1), &[0.0; 3]).unwrap_err();
        assert_eq!(err, CircuitError::ParameterCount { expected: 4, got: 3 });
    }

    #[test]
    fn zero_weight_ansatz_keeps_zero_state() {
        let c = build_ansatz(&AnsatzSpec::new(2, 1), &[0.0; 4]).unwrap();
        assert_eq!(kinds(&c), ["RY", "RY", "CX", "RY", "RY"]);
        let s = c.run_from_zero().unwrap();
        assert!((s.amplitudes()[0].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_rotation_ansatz() {
        let c = build_ansatz(&AnsatzSpec::new(1, 2), &[PI / 2.0, 0.0, 0.0]).unwrap();
        let s = c.run_from_zero().unwrap();
        assert!((s.amplitudes()[0].re - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((s.amplitudes()[1].re - FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn ansatz_layer_major_order() {
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let c = build_ansatz(&AnsatzSpec::new(3, 1), &w).unwrap();
        let angles: Vec<(usize, f64)> = c
            .ops()
            .iter()
            .filter_map(|g| g.kind().angle().map(|a| (g.targets()[0], a)))
            .collect();
        assert_eq!(angles, vec![(0, 1.0), (1, 2.0), (2, 3.0), (0, 4.0), (1, 5.0), (2, 6.0)]);
    }

    #[test]
    fn compose_concatenates() {
        let empty = Circuit::new(2).unwrap();
        assert!(compose_model(&empty, &empty).unwrap().is_empty());

        let fm = Circuit::from_ops(
            2,
            vec![GateOp::h(0), GateOp::h(1), GateOp::p(0, 0.1), GateOp::p(1, 0.2), GateOp::cx(0, 1)],
        )
        .unwrap();
        let an = build_ansatz(&AnsatzSpec::new(2, 1), &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(an.len(), 5);
        let an4 = Circuit::from_ops(2, an.ops()[..4].to_vec()).unwrap();
        let c = compose_model(&fm, &an4).unwrap();
        assert_eq!(c.len(), 9);
        assert_eq!(&c.ops()[..5], fm.ops());
        assert_eq!(&c.ops()[5..], an4.ops());

        let three = Circuit::new(3).unwrap();
        assert!(matches!(compose_model(&fm, &three), Err(CircuitError::QubitMismatch { .. })));
    }

    #[test]
    fn composed_unitary_is_matrix_product() {
        let fm = build_feature_map(&FeatureMapSpec::new(2, 2), &[0.4, 0.9]).unwrap();
        let an = build_ansatz(&AnsatzSpec::new(2, 2), &[0.3, -1.1, 0.7, 2.0, -0.5, 0.2]).unwrap();
        let both = compose_model(&fm, &an).unwrap().unitary().unwrap();
        let product = an.unitary().unwrap() * fm.unitary().unwrap();
        assert!((both - product).iter().all(|z| z.norm() < 1e-9));
    }

    #[test]
    fn encoding_is_deterministic() {
        let spec = FeatureMapSpec::new(3, 2);
        let x = [0.25, 0.5, 0.75];
        assert_eq!(build_feature_map(&spec, &x).unwrap(), build_feature_map(&spec, &x).unwrap());
    }

    #[test]
    fn zero_ansatz_is_a_cx_relabeling() {
        // Zero-weight ansatz = CX(0,1) on two qubits: the distribution is the
        // feature map's with basis states 1 (q0 set) and 3 swapped.
        let fm = build_feature_map(&FeatureMapSpec::new(2, 1), &[0.3, 0.8]).unwrap();
        let an = build_ansatz(&AnsatzSpec::new(2, 1), &[0.0; 4]).unwrap();
        let p_fm = fm.run_from_zero().unwrap().probabilities();
        let p_all = compose_model(&fm, &an).unwrap().run_from_zero().unwrap().probabilities();
        let relabeled = [p_fm[0], p_fm[3], p_fm[2], p_fm[1]];
        for (a, b) in p_all.iter().zip(relabeled) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
