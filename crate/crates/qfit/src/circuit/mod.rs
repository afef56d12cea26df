//! Circuit intermediate representation, OpenQASM-subset I/O, brute-force
//! unitary computation and single-qubit re-parameterization.

mod qasm;
mod zyz;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{haar_random_unitary, ComplexMatrix, QubitAxes};

pub use qasm::{parse_qasm, write_qasm};
pub use zyz::{u3_matrix, zyz_reparameterize};

/// Largest gate arity; gate unitaries stay within the 64x64 SVD path.
pub const MAX_GATE_QUBITS: usize = 6;

/// Qubit-count guard for dense whole-circuit unitaries.
pub const MAX_FULL_QUBITS: usize = 14;

const GATE_UNITARITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    /// Never touched by optimizers.
    Fixed,
    /// Free to be replaced by any unitary of the same dimension.
    Variable,
}

/// A small unitary bound to a sorted set of qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    location: Vec<usize>,
    kind: GateKind,
    unitary: ComplexMatrix,
    label: Option<String>,
}

impl Gate {
    pub fn new(
        location: Vec<usize>,
        kind: GateKind,
        unitary: ComplexMatrix,
        label: Option<String>,
    ) -> Result<Self> {
        if location.is_empty() || location.len() > MAX_GATE_QUBITS {
            return Err(Error::Dimension(format!(
                "gate arity must be between 1 and {MAX_GATE_QUBITS}, got {}",
                location.len()
            )));
        }
        if !location.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Dimension(format!(
                "gate location must be strictly increasing, got {location:?}"
            )));
        }
        let dim = 1usize << location.len();
        if unitary.rows() != dim || unitary.cols() != dim {
            return Err(Error::Dimension(format!(
                "gate on {} qubits needs a {dim}x{dim} unitary, got {}x{}",
                location.len(),
                unitary.rows(),
                unitary.cols()
            )));
        }
        if !unitary.is_finite() {
            return Err(Error::Numeric("gate unitary has non-finite entries".into()));
        }
        let err = unitary.unitarity_error();
        if err > GATE_UNITARITY_TOL {
            return Err(Error::Numeric(format!(
                "gate matrix deviates from unitarity by {err:.3e}"
            )));
        }
        Ok(Self {
            location,
            kind,
            unitary,
            label,
        })
    }

    pub fn fixed(location: Vec<usize>, unitary: ComplexMatrix) -> Result<Self> {
        Self::new(location, GateKind::Fixed, unitary, None)
    }

    pub fn variable(location: Vec<usize>, unitary: ComplexMatrix) -> Result<Self> {
        Self::new(location, GateKind::Variable, unitary, None)
    }

    /// Standard three-angle single-qubit rotation, kind variable.
    pub fn u3(qubit: usize, theta: f64, phi: f64, lambda: f64) -> Self {
        Self::new(
            vec![qubit],
            GateKind::Variable,
            u3_matrix(theta, phi, lambda),
            Some("u3".into()),
        )
        .expect("u3 matrix is unitary")
    }

    /// Controlled-X, kind fixed. `control` and `target` may be in either
    /// order; the matrix encodes which is which on the sorted location.
    pub fn cnot(control: usize, target: usize) -> Result<Self> {
        if control == target {
            return Err(Error::Dimension("cx control equals target".into()));
        }
        let low_is_control = control < target;
        Self::new(
            vec![control.min(target), control.max(target)],
            GateKind::Fixed,
            cnot_matrix(low_is_control),
            Some("cx".into()),
        )
    }

    /// Relative phase gate diag(1, e^{i alpha}) on one qubit, kind fixed.
    pub fn phase(qubit: usize, alpha: f64) -> Self {
        let mut m = ComplexMatrix::identity(2);
        m.set(1, 1, Complex64::from_polar(1.0, alpha));
        Self::new(vec![qubit], GateKind::Fixed, m, None).expect("phase matrix is unitary")
    }

    pub fn location(&self) -> &[usize] {
        &self.location
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn is_variable(&self) -> bool {
        self.kind == GateKind::Variable
    }

    pub fn unitary(&self) -> &ComplexMatrix {
        &self.unitary
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn arity(&self) -> usize {
        self.location.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.location.len()
    }

    /// Replace the unitary; dimension and unitarity are re-checked.
    pub fn set_unitary(&mut self, unitary: ComplexMatrix) -> Result<()> {
        if unitary.rows() != self.dim() || unitary.cols() != self.dim() {
            return Err(Error::Dimension("replacement unitary has wrong shape".into()));
        }
        if !unitary.is_finite() {
            return Err(Error::Numeric("replacement unitary has non-finite entries".into()));
        }
        let err = unitary.unitarity_error();
        if err > 1e-10 {
            return Err(Error::Numeric(format!(
                "replacement matrix deviates from unitarity by {err:.3e}"
            )));
        }
        self.unitary = unitary;
        Ok(())
    }

    /// Same location and kind with the adjoint unitary.
    pub fn inverse(&self) -> Gate {
        Gate {
            location: self.location.clone(),
            kind: self.kind,
            unitary: self.unitary.adjoint(),
            label: self.label.clone(),
        }
    }
}

pub(crate) fn cnot_matrix(low_is_control: bool) -> ComplexMatrix {
    let one = Complex64::new(1.0, 0.0);
    let mut m = ComplexMatrix::zeros(4, 4);
    if low_is_control {
        // Control on the low location bit: |x1⟩ flips the high bit.
        m.set(0, 0, one);
        m.set(2, 2, one);
        m.set(3, 1, one);
        m.set(1, 3, one);
    } else {
        m.set(0, 0, one);
        m.set(1, 1, one);
        m.set(3, 2, one);
        m.set(2, 3, one);
    }
    m
}

/// Ordered list of gates on `n` qubits; gate 0 is applied first.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n: usize) -> Self {
        Self { n, gates: Vec::new() }
    }

    pub fn with_gates(n: usize, gates: Vec<Gate>) -> Result<Self> {
        let mut c = Self::new(n);
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        if let Some(&q) = gate.location.last() {
            if q >= self.n {
                return Err(Error::Dimension(format!(
                    "gate on qubit {q} does not fit a {}-qubit circuit",
                    self.n
                )));
            }
        }
        self.gates.push(gate);
        Ok(())
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn gate(&self, i: usize) -> &Gate {
        &self.gates[i]
    }

    pub fn gate_mut(&mut self, i: usize) -> &mut Gate {
        &mut self.gates[i]
    }

    /// Number of variable gates.
    pub fn variable_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_variable()).count()
    }

    pub fn remove_gate(&mut self, i: usize) -> Gate {
        self.gates.remove(i)
    }

    pub fn insert_gate(&mut self, i: usize, gate: Gate) -> Result<()> {
        if gate.location.last().is_some_and(|&q| q >= self.n) {
            return Err(Error::Dimension("gate does not fit circuit".into()));
        }
        self.gates.insert(i, gate);
        Ok(())
    }

    /// Dense `2^n x 2^n` unitary: the ordered product of the gate unitaries
    /// embedded on their locations.
    pub fn unitary(&self) -> Result<ComplexMatrix> {
        if self.n > MAX_FULL_QUBITS {
            return Err(Error::Capacity(format!(
                "dense circuit unitary limited to {MAX_FULL_QUBITS} qubits, got {}",
                self.n
            )));
        }
        let mut acc = ComplexMatrix::identity(self.dim());
        for gate in &self.gates {
            let axes = QubitAxes::new(self.n, &gate.location);
            axes.left_mul_matrix(&gate.unitary, &mut acc);
        }
        Ok(acc)
    }

    pub fn concat(&self, other: &Circuit) -> Result<Circuit> {
        if self.n != other.n {
            return Err(Error::Dimension("concatenating circuits of different sizes".into()));
        }
        let mut gates = self.gates.clone();
        gates.extend(other.gates.iter().cloned());
        Circuit::with_gates(self.n, gates)
    }

    /// Reversed gate order with each gate inverted.
    pub fn inverse(&self) -> Circuit {
        Circuit {
            n: self.n,
            gates: self.gates.iter().rev().map(Gate::inverse).collect(),
        }
    }

    /// Draw a fresh Haar-random unitary for every variable gate.
    pub fn randomize_variable_gates(&mut self, rng: &mut impl Rng) -> Result<()> {
        for gate in &mut self.gates {
            if gate.is_variable() {
                let u = haar_random_unitary(gate.dim(), rng)?;
                gate.set_unitary(u)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::stream_rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_circuit(n: usize, gates: usize, seed: u64) -> Circuit {
        let mut rng = stream_rng(seed, 0);
        let mut circ = Circuit::new(n);
        for i in 0..gates {
            if i % 3 == 2 && n >= 2 {
                let a = rng.random_range(0..n - 1);
                circ.push(Gate::cnot(a, a + 1).unwrap()).unwrap();
            } else {
                let q = rng.random_range(0..n);
                let u = haar_random_unitary(2, &mut rng).unwrap();
                circ.push(Gate::variable(vec![q], u).unwrap()).unwrap();
            }
        }
        circ
    }

    #[test]
    fn gate_validation() {
        assert!(Gate::fixed(vec![], ComplexMatrix::identity(1)).is_err());
        assert!(Gate::fixed(vec![1, 0], ComplexMatrix::identity(4)).is_err());
        assert!(Gate::fixed(vec![0], ComplexMatrix::identity(4)).is_err());
        let not_unitary =
            ComplexMatrix::new(2, 2, vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)])
                .unwrap();
        assert!(Gate::fixed(vec![0], not_unitary).is_err());
    }

    #[test]
    fn empty_circuit_unitary_is_identity() {
        let u = Circuit::new(2).unitary().unwrap();
        assert!(u.sub(&ComplexMatrix::identity(4)).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn cnot_unitary_matches_convention() {
        // Control qubit 0, target qubit 1, little-endian: |01⟩ (index 1,
        // control set) maps to |11⟩ (index 3).
        let mut circ = Circuit::new(2);
        circ.push(Gate::cnot(0, 1).unwrap()).unwrap();
        let u = circ.unitary().unwrap();
        let one = c(1.0, 0.0);
        assert_eq!(u.get(0, 0), one);
        assert_eq!(u.get(3, 1), one);
        assert_eq!(u.get(2, 2), one);
        assert_eq!(u.get(1, 3), one);

        // Reversed operand order is a different matrix.
        let mut rev = Circuit::new(2);
        rev.push(Gate::cnot(1, 0).unwrap()).unwrap();
        let v = rev.unitary().unwrap();
        assert!(u.sub(&v).unwrap().max_abs() > 0.5);
        assert_eq!(v.get(1, 1), one);
        assert_eq!(v.get(3, 2), one);
    }

    #[test]
    fn unitary_matches_column_simulation_oracle() {
        use crate::numerics::StateSet;
        use crate::sim::{apply_gate, OpCounter};

        let circ = random_circuit(3, 7, 11);
        let u = circ.unitary().unwrap();

        // Propagate all basis states and assemble columns.
        let basis = StateSet::from_basis_indices(3, &[0, 1, 2, 3, 4, 5, 6, 7]).unwrap();
        let mut counter = OpCounter::default();
        let mut states = basis;
        for g in circ.gates() {
            states = apply_gate(&states, g, &mut counter).unwrap();
        }
        for j in 0..8 {
            for (i, amp) in states.state(j).iter().enumerate() {
                assert!((u.get(i, j) - amp).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn concatenation_multiplies_unitaries() {
        for seed in 0..5u64 {
            let a = random_circuit(3, 5, seed);
            let b = random_circuit(3, 4, seed + 100);
            let ab = a.concat(&b).unwrap();
            let expect = b.unitary().unwrap().matmul(&a.unitary().unwrap()).unwrap();
            assert!(ab.unitary().unwrap().sub(&expect).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn gate_and_inverse_cancel() {
        for seed in 0..5u64 {
            let circ = random_circuit(2, 4, seed + 40);
            let before = circ.unitary().unwrap();
            let mut extended = circ.clone();
            let mut rng = stream_rng(seed, 7);
            let g = Gate::variable(vec![0], haar_random_unitary(2, &mut rng).unwrap()).unwrap();
            extended.push(g.clone()).unwrap();
            extended.push(g.inverse()).unwrap();
            assert!(extended.unitary().unwrap().sub(&before).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn capacity_guard() {
        let circ = Circuit::new(15);
        assert!(matches!(circ.unitary(), Err(Error::Capacity(_))));
    }
}
