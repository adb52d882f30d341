//! Dense statevector simulation for small circuits.
//!
//! Basis indexing is little-endian: qubit `q` contributes bit `q` of the basis
//! index, so on two qubits `|q1 q0⟩ = |10⟩` is index 2. Global phase is never
//! normalized away.
//!
//! Rotation gates use the half-angle convention `RY(θ) = exp(-iθY/2)`, which
//! makes the ±π/2 parameter-shift rule exact.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::FRAC_1_SQRT_2;
use thiserror::Error;

/// Largest register the simulator will allocate.
pub const MAX_QUBITS: usize = 12;
/// Largest register for which [`Circuit::unitary`] builds the full matrix.
pub const MAX_UNITARY_QUBITS: usize = 10;

pub type UnitaryMatrix = DMatrix<Complex64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("qubit count {0} outside 1..={MAX_QUBITS}")]
    QubitCount(usize),
    #[error("invalid gate {gate}: {reason}")]
    InvalidGate { gate: String, reason: String },
    #[error("circuit has {circuit} qubits but state has {state}")]
    DimensionMismatch { circuit: usize, state: usize },
    #[error("amplitude vector of length {0} is not a power of two")]
    BadLength(usize),
    #[error("unitary extraction limited to {MAX_UNITARY_QUBITS} qubits, got {0}")]
    Capacity(usize),
}

pub type Result<T> = std::result::Result<T, SimError>;

fn check_qubits(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        Err(SimError::QubitCount(n))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    P(f64),
    RX(f64),
    RY(f64),
    RZ(f64),
    /// Controlled-X; targets are `[control, target]`.
    CX,
    CZ,
}

impl GateKind {
    pub fn arity(&self) -> usize {
        match self {
            GateKind::CX | GateKind::CZ => 2,
            _ => 1,
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match *self {
            GateKind::P(t) | GateKind::RX(t) | GateKind::RY(t) | GateKind::RZ(t) => Some(t),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GateKind::H => "H",
            GateKind::X => "X",
            GateKind::Y => "Y",
            GateKind::Z => "Z",
            GateKind::P(_) => "P",
            GateKind::RX(_) => "RX",
            GateKind::RY(_) => "RY",
            GateKind::RZ(_) => "RZ",
            GateKind::CX => "CX",
            GateKind::CZ => "CZ",
        }
    }

    /// 2×2 matrix of a single-qubit kind, row-major. `None` for two-qubit kinds.
    pub fn matrix(&self) -> Option<[[Complex64; 2]; 2]> {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let z = c(0.0, 0.0);
        let o = c(1.0, 0.0);
        Some(match *self {
            GateKind::H => {
                let h = c(FRAC_1_SQRT_2, 0.0);
                [[h, h], [h, -h]]
            }
            GateKind::X => [[z, o], [o, z]],
            GateKind::Y => [[z, c(0.0, -1.0)], [c(0.0, 1.0), z]],
            GateKind::Z => [[o, z], [z, -o]],
            GateKind::P(t) => [[o, z], [z, Complex64::from_polar(1.0, t)]],
            GateKind::RX(t) => {
                let (s, co) = (t / 2.0).sin_cos();
                [[c(co, 0.0), c(0.0, -s)], [c(0.0, -s), c(co, 0.0)]]
            }
            GateKind::RY(t) => {
                let (s, co) = (t / 2.0).sin_cos();
                [[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]]
            }
            GateKind::RZ(t) => [
                [Complex64::from_polar(1.0, -t / 2.0), z],
                [z, Complex64::from_polar(1.0, t / 2.0)],
            ],
            GateKind::CX | GateKind::CZ => return None,
        })
    }
}

/// A gate bound to its qubits and angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateOp {
    kind: GateKind,
    qubits: [usize; 2],
}

impl GateOp {
    pub fn single(kind: GateKind, q: usize) -> Self {
        debug_assert_eq!(kind.arity(), 1);
        GateOp { kind, qubits: [q, q] }
    }

    pub fn h(q: usize) -> Self {
        Self::single(GateKind::H, q)
    }
    pub fn x(q: usize) -> Self {
        Self::single(GateKind::X, q)
    }
    pub fn y(q: usize) -> Self {
        Self::single(GateKind::Y, q)
    }
    pub fn z(q: usize) -> Self {
        Self::single(GateKind::Z, q)
    }
    pub fn p(q: usize, theta: f64) -> Self {
        Self::single(GateKind::P(theta), q)
    }
    pub fn rx(q: usize, theta: f64) -> Self {
        Self::single(GateKind::RX(theta), q)
    }
    pub fn ry(q: usize, theta: f64) -> Self {
        Self::single(GateKind::RY(theta), q)
    }
    pub fn rz(q: usize, theta: f64) -> Self {
        Self::single(GateKind::RZ(theta), q)
    }
    pub fn cx(control: usize, target: usize) -> Self {
        GateOp { kind: GateKind::CX, qubits: [control, target] }
    }
    pub fn cz(a: usize, b: usize) -> Self {
        GateOp { kind: GateKind::CZ, qubits: [a, b] }
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn targets(&self) -> &[usize] {
        &self.qubits[..self.kind.arity()]
    }

    /// Same gate with its angle replaced. No-op for fixed gates.
    pub fn with_angle(mut self, theta: f64) -> Self {
        self.kind = match self.kind {
            GateKind::P(_) => GateKind::P(theta),
            GateKind::RX(_) => GateKind::RX(theta),
            GateKind::RY(_) => GateKind::RY(theta),
            GateKind::RZ(_) => GateKind::RZ(theta),
            k => k,
        };
        self
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        let bad = |reason: String| SimError::InvalidGate {
            gate: format!("{self}"),
            reason,
        };
        for &q in self.targets() {
            if q >= n_qubits {
                return Err(bad(format!("qubit {q} out of range for {n_qubits} qubits")));
            }
        }
        if self.kind.arity() == 2 && self.qubits[0] == self.qubits[1] {
            return Err(bad("targets must be distinct".into()));
        }
        if let Some(t) = self.kind.angle() {
            if !t.is_finite() {
                return Err(bad("angle is not finite".into()));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for GateOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.kind.name())?;
        if let Some(t) = self.kind.angle() {
            write!(f, "({t})")?;
        }
        let qs: Vec<String> = self.targets().iter().map(|q| q.to_string()).collect();
        write!(f, "[{}]", qs.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `n_qubits`.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        check_qubits(n_qubits)?;
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(SimError::BadLength(index));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(StateVector { n_qubits, amps })
    }

    /// Wraps raw amplitudes. No normalization is applied.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(SimError::BadLength(len));
        }
        let n_qubits = len.trailing_zeros() as usize;
        check_qubits(n_qubits)?;
        Ok(StateVector { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn apply(&mut self, gate: &GateOp) -> Result<()> {
        gate.validate(self.n_qubits)?;
        match gate.kind {
            GateKind::CX => {
                let (cbit, tbit) = (1usize << gate.qubits[0], 1usize << gate.qubits[1]);
                for i in 0..self.amps.len() {
                    if i & cbit != 0 && i & tbit == 0 {
                        self.amps.swap(i, i | tbit);
                    }
                }
            }
            GateKind::CZ => {
                let mask = (1usize << gate.qubits[0]) | (1usize << gate.qubits[1]);
                for (i, a) in self.amps.iter_mut().enumerate() {
                    if i & mask == mask {
                        *a = -*a;
                    }
                }
            }
            GateKind::Z | GateKind::P(_) | GateKind::RZ(_) => {
                let m = gate.kind.matrix().expect("single-qubit kind");
                let (d0, d1) = (m[0][0], m[1][1]);
                let bit = 1usize << gate.qubits[0];
                for (i, a) in self.amps.iter_mut().enumerate() {
                    *a *= if i & bit == 0 { d0 } else { d1 };
                }
            }
            kind => {
                let m = kind.matrix().expect("single-qubit kind");
                let bit = 1usize << gate.qubits[0];
                for i0 in 0..self.amps.len() {
                    if i0 & bit != 0 {
                        continue;
                    }
                    let i1 = i0 | bit;
                    let (a0, a1) = (self.amps[i0], self.amps[i1]);
                    self.amps[i0] = m[0][0] * a0 + m[0][1] * a1;
                    self.amps[i1] = m[1][0] * a0 + m[1][1] * a1;
                }
            }
        }
        Ok(())
    }

    /// Born-rule probabilities `|amp_k|²` over basis indices.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `⟨ψ|O|ψ⟩` for a diagonal observable.
    pub fn expectation(&self, obs: &DiagonalObservable) -> Result<f64> {
        if obs.n_qubits != self.n_qubits {
            return Err(SimError::DimensionMismatch {
                circuit: obs.n_qubits,
                state: self.n_qubits,
            });
        }
        Ok(self
            .amps
            .iter()
            .zip(&obs.eigenvalues)
            .map(|(a, e)| e * a.norm_sqr())
            .sum())
    }
}

/// Ordered gate program on a fixed register.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    ops: Vec<GateOp>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Result<Self> {
        check_qubits(n_qubits)?;
        Ok(Circuit { n_qubits, ops: Vec::new() })
    }

    pub fn from_ops(n_qubits: usize, ops: Vec<GateOp>) -> Result<Self> {
        let mut c = Circuit::new(n_qubits)?;
        c.ops.reserve(ops.len());
        for op in ops {
            c.push(op)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, op: GateOp) -> Result<&mut Self> {
        op.validate(self.n_qubits)?;
        self.ops.push(op);
        Ok(self)
    }

    pub fn extend(&mut self, other: &Circuit) -> Result<()> {
        if other.n_qubits != self.n_qubits {
            return Err(SimError::DimensionMismatch {
                circuit: other.n_qubits,
                state: self.n_qubits,
            });
        }
        self.ops.extend_from_slice(&other.ops);
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn run(&self, initial: &StateVector) -> Result<StateVector> {
        if initial.n_qubits != self.n_qubits {
            return Err(SimError::DimensionMismatch {
                circuit: self.n_qubits,
                state: initial.n_qubits,
            });
        }
        let mut state = initial.clone();
        for op in &self.ops {
            state.apply(op)?;
        }
        Ok(state)
    }

    pub fn run_from_zero(&self) -> Result<StateVector> {
        self.run(&StateVector::zero(self.n_qubits)?)
    }

    /// Full `2^n × 2^n` unitary, column `k` being the image of basis state `k`.
    pub fn unitary(&self) -> Result<UnitaryMatrix> {
        if self.n_qubits > MAX_UNITARY_QUBITS {
            return Err(SimError::Capacity(self.n_qubits));
        }
        let dim = 1usize << self.n_qubits;
        let mut m = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
        for k in 0..dim {
            let out = self.run(&StateVector::basis(self.n_qubits, k)?)?;
            for (r, a) in out.amps.iter().enumerate() {
                m[(r, k)] = *a;
            }
        }
        Ok(m)
    }
}

/// Observable diagonal in the computational basis, stored as its eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalObservable {
    n_qubits: usize,
    eigenvalues: Vec<f64>,
}

impl DiagonalObservable {
    pub fn from_fn(n_qubits: usize, f: impl Fn(usize) -> f64) -> Result<Self> {
        check_qubits(n_qubits)?;
        let eigenvalues: Vec<f64> = (0..1usize << n_qubits).map(f).collect();
        if let Some(bad) = eigenvalues.iter().position(|e| !e.is_finite()) {
            return Err(SimError::InvalidGate {
                gate: "observable".into(),
                reason: format!("eigenvalue at index {bad} is not finite"),
            });
        }
        Ok(DiagonalObservable { n_qubits, eigenvalues })
    }

    /// `Z⊗…⊗Z`: +1 on even-popcount basis states, −1 on odd.
    pub fn z_parity(n_qubits: usize) -> Result<Self> {
        Self::from_fn(n_qubits, |k| if k.count_ones() % 2 == 0 { 1.0 } else { -1.0 })
    }

    /// `|k⟩⟨k|`.
    pub fn projector(n_qubits: usize, index: usize) -> Result<Self> {
        Self::from_fn(n_qubits, |k| if k == index { 1.0 } else { 0.0 })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }
}
