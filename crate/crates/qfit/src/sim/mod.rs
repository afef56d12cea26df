//! State-vector propagation, pre-computed A/B tensor caches, environment
//! matrices and cost functions for the sampled and full-unitary backends.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::numerics::{dot_flat, ComplexMatrix, QubitAxes, StateSet};

pub use crate::circuit::MAX_FULL_QUBITS;

/// Qubit-count guard for the sampled backend.
pub const MAX_SAMPLE_QUBITS: usize = 20;

/// States are re-normalized every this many gate applications along a
/// propagation chain to bound norm drift.
const RENORM_INTERVAL: usize = 64;

/// Running total of complex multiply-adds performed by simulation kernels.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounter {
    pub madds: u64,
}

impl OpCounter {
    pub fn add(&mut self, n: u64) {
        self.madds += n;
    }
}

/// Apply one gate to every state of a set, returning the transformed set.
pub fn apply_gate(states: &StateSet, gate: &Gate, counter: &mut OpCounter) -> Result<StateSet> {
    let mut out = states.clone();
    apply_gate_in_place(&mut out, gate, counter)?;
    Ok(out)
}

pub fn apply_gate_in_place(
    states: &mut StateSet,
    gate: &Gate,
    counter: &mut OpCounter,
) -> Result<()> {
    apply_matrix_in_place(states, gate.location(), gate.unitary(), counter)
}

/// Apply an arbitrary (not necessarily unitary) small matrix on the given
/// qubit axes of every state.
pub(crate) fn apply_matrix_in_place(
    states: &mut StateSet,
    loc: &[usize],
    m: &ComplexMatrix,
    counter: &mut OpCounter,
) -> Result<()> {
    let n = states.qubits();
    if loc.last().is_some_and(|&q| q >= n) {
        return Err(Error::Dimension(format!(
            "gate location {loc:?} exceeds {n}-qubit states"
        )));
    }
    let axes = QubitAxes::new(n, loc);
    let mut count = 0u64;
    for j in 0..states.len() {
        count += axes.apply_to_state(m, states.state_mut(j));
    }
    counter.add(count);
    Ok(())
}

/// Linear-form coefficient of the cost in one gate: maximizing
/// `Re Tr(E u)` over unitaries `u` optimizes that gate with the rest of the
/// circuit held fixed.
#[derive(Debug, Clone)]
pub struct EnvironmentMatrix {
    gate_index: usize,
    e: ComplexMatrix,
}

impl EnvironmentMatrix {
    /// Wrap an explicit coefficient matrix, e.g. for update-rule tests.
    pub fn new(gate_index: usize, e: ComplexMatrix) -> Self {
        Self { gate_index, e }
    }

    pub fn gate_index(&self) -> usize {
        self.gate_index
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.e
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.e
    }

    /// `Re Tr(E u)` for a candidate gate value.
    pub fn realized_trace(&self, u: &ComplexMatrix) -> f64 {
        let d = self.e.rows();
        let mut tr = Complex64::new(0.0, 0.0);
        for x in 0..d {
            for y in 0..d {
                tr += self.e.get(x, y) * u.get(y, x);
            }
        }
        tr.re
    }
}

/// Pre-computed tensors for the sampled backend: `a` holds the target's
/// conjugated action on the training states, `b[i]` the states after gates
/// `0..i-1` (so `b[0]` is the inputs). Entries at and above `dirty_from` are
/// stale and rebuilt lazily.
#[derive(Debug, Clone)]
pub struct SimCaches {
    a: StateSet,
    b: Vec<StateSet>,
    dirty_from: usize,
    counter: OpCounter,
}

impl SimCaches {
    /// Build caches from a dense target unitary; the output states are
    /// computed here once.
    pub fn new(target: &ComplexMatrix, circuit: &Circuit, inputs: StateSet) -> Result<Self> {
        let n = circuit.qubits();
        if n > MAX_SAMPLE_QUBITS {
            return Err(Error::Capacity(format!(
                "sampled backend limited to {MAX_SAMPLE_QUBITS} qubits, got {n}"
            )));
        }
        check_target(target, n)?;
        let dim = 1usize << n;
        let mut counter = OpCounter::default();
        let mut amps = Vec::with_capacity(inputs.len() * dim);
        for j in 0..inputs.len() {
            amps.extend(target.mul_vec(inputs.state(j))?);
        }
        counter.add((inputs.len() * dim * dim) as u64);
        let outputs = StateSet::from_raw(n, inputs.len(), amps);
        Self::build(&outputs, circuit, inputs, counter)
    }

    /// Build caches from pre-computed output states `U|psi_j>`.
    pub fn from_outputs(outputs: &StateSet, circuit: &Circuit, inputs: StateSet) -> Result<Self> {
        Self::build(outputs, circuit, inputs, OpCounter::default())
    }

    fn build(
        outputs: &StateSet,
        circuit: &Circuit,
        inputs: StateSet,
        counter: OpCounter,
    ) -> Result<Self> {
        let n = circuit.qubits();
        if inputs.qubits() != n || outputs.qubits() != n {
            return Err(Error::Dimension(format!(
                "states on {} qubits do not match a {n}-qubit circuit",
                inputs.qubits()
            )));
        }
        if inputs.len() != outputs.len() || inputs.is_empty() {
            return Err(Error::Dimension(
                "training inputs and outputs must be non-empty and equal-length".into(),
            ));
        }
        let mut b = Vec::with_capacity(circuit.len() + 1);
        let placeholder = inputs.clone();
        b.push(inputs);
        b.resize(circuit.len() + 1, placeholder);
        let mut caches = Self {
            a: outputs.conjugated(),
            b,
            dirty_from: 1,
            counter,
        };
        caches.ensure_valid(circuit, circuit.len())?;
        Ok(caches)
    }

    pub fn qubits(&self) -> usize {
        self.a.qubits()
    }

    /// Number of training states.
    pub fn m(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &StateSet {
        &self.a
    }

    pub fn inputs(&self) -> &StateSet {
        &self.b[0]
    }

    pub fn b_len(&self) -> usize {
        self.b.len()
    }

    /// Prefix states after gates `0..i-1`; errors if that entry is stale.
    pub fn b_states(&self, i: usize) -> Result<&StateSet> {
        if i >= self.dirty_from {
            return Err(Error::StaleCache(format!(
                "b[{i}] is stale (valid below {})",
                self.dirty_from
            )));
        }
        Ok(&self.b[i])
    }

    pub fn dirty_from(&self) -> usize {
        self.dirty_from
    }

    /// Invalidate every prefix beyond gate `i` after its unitary changed.
    pub fn mark_gate_updated(&mut self, i: usize) {
        self.dirty_from = self.dirty_from.min(i + 1);
    }

    /// Rebuild stale prefix entries up to and including `b[upto]`.
    pub fn ensure_valid(&mut self, circuit: &Circuit, upto: usize) -> Result<()> {
        if circuit.len() + 1 != self.b.len() {
            return Err(Error::Dimension(format!(
                "caches were built for {} gates, circuit has {}",
                self.b.len() - 1,
                circuit.len()
            )));
        }
        if upto >= self.b.len() {
            return Err(Error::Dimension(format!(
                "b index {upto} out of range for {} entries",
                self.b.len()
            )));
        }
        while self.dirty_from <= upto {
            let i = self.dirty_from;
            let mut next = self.b[i - 1].clone();
            apply_gate_in_place(&mut next, circuit.gate(i - 1), &mut self.counter)?;
            if i.is_multiple_of(RENORM_INTERVAL) {
                next.renormalize();
            }
            self.b[i] = next;
            self.dirty_from += 1;
        }
        Ok(())
    }

    pub fn counter(&self) -> OpCounter {
        self.counter
    }

    pub(crate) fn counter_mut(&mut self) -> &mut OpCounter {
        &mut self.counter
    }
}

/// Fresh right accumulator for a sweep: the A tensor with no suffix gates
/// absorbed yet.
pub fn right_accumulator(caches: &SimCaches) -> StateSet {
    caches.a().clone()
}

/// Fold a gate into the right accumulator (`bra` side), i.e. apply the
/// gate's transpose to the conjugated row-states.
pub fn absorb_gate(acc: &mut StateSet, gate: &Gate, counter: &mut OpCounter) -> Result<()> {
    apply_matrix_in_place(acc, gate.location(), &gate.unitary().transpose(), counter)
}

/// Environment matrix of gate `i` from the sampled caches: contract the
/// right accumulator (suffix) with the cached prefix states over all
/// non-gate axes.
pub fn environment_sample(
    caches: &mut SimCaches,
    circuit: &Circuit,
    i: usize,
    right_acc: &StateSet,
) -> Result<EnvironmentMatrix> {
    if i >= circuit.len() {
        return Err(Error::Dimension(format!(
            "gate index {i} out of range for {} gates",
            circuit.len()
        )));
    }
    if right_acc.len() != caches.m() || right_acc.qubits() != caches.qubits() {
        return Err(Error::Dimension("right accumulator shape mismatch".into()));
    }
    let gate = circuit.gate(i);
    let axes = QubitAxes::new(caches.qubits(), gate.location());
    let d = gate.dim();
    let prefix = caches.b_states(i)?;

    let mut e = ComplexMatrix::zeros(d, d);
    let ee = e.entries_mut();
    for j in 0..right_acc.len() {
        let l = right_acc.state(j);
        let r = prefix.state(j);
        for rest in 0..axes.rest_count() {
            let base = axes.expand_rest(rest);
            for (aa, &off_a) in axes.offsets().iter().enumerate() {
                let la = l[base + off_a];
                for (bb, &off_b) in axes.offsets().iter().enumerate() {
                    ee[bb * d + aa] += la * r[base + off_b];
                }
            }
        }
    }
    let count = (right_acc.len() * axes.rest_count()) as u64 * (d * d) as u64;
    caches.counter.add(count);
    Ok(EnvironmentMatrix { gate_index: i, e })
}

/// Average squared distance between target outputs and circuit outputs over
/// the training states; `2 - (2/M) Re sum_j <psi_j|U†C|psi_j>`, in `[0, 4]`.
pub fn sample_cost(caches: &mut SimCaches, circuit: &Circuit) -> Result<f64> {
    caches.ensure_valid(circuit, circuit.len())?;
    let m = caches.m();
    let k = circuit.len();
    let mut s = Complex64::new(0.0, 0.0);
    for j in 0..m {
        s += dot_flat(caches.a.state(j), caches.b[k].state(j));
    }
    caches.counter.add((m << caches.qubits()) as u64);
    Ok((2.0 - 2.0 * s.re / m as f64).max(0.0))
}

/// Normalized Frobenius distance `1 - Re Tr(U†C) / 2^n`, in `[0, 2]`;
/// zero iff the circuit equals the target including global phase.
pub fn frobenius_cost(target: &ComplexMatrix, circuit: &Circuit) -> Result<f64> {
    check_target(target, circuit.qubits())?;
    let c = circuit.unitary()?;
    let tr: Complex64 = target
        .entries()
        .iter()
        .zip(c.entries())
        .map(|(u, v)| u.conj() * v)
        .sum();
    Ok((1.0 - tr.re / circuit.dim() as f64).max(0.0))
}

/// Environment matrix of gate `i` against the full target unitary:
/// `Tr(E v) = Tr(U† C_{gate_i -> v})` for every replacement `v`.
pub fn environment_full(
    target: &ComplexMatrix,
    circuit: &Circuit,
    i: usize,
) -> Result<EnvironmentMatrix> {
    if i >= circuit.len() {
        return Err(Error::Dimension(format!(
            "gate index {i} out of range for {} gates",
            circuit.len()
        )));
    }
    let mut caches = FullCaches::new(target, circuit)?;
    let mut acc = caches.right_accumulator();
    for j in ((i + 1)..circuit.len()).rev() {
        caches.absorb(&mut acc, circuit.gate(j))?;
    }
    caches.environment(circuit, i, &acc)
}

/// Dense analogue of [`SimCaches`] for the full-unitary backend: `b[i]` is
/// the matrix product of gates `0..i-1` and the right accumulator starts at
/// `U†`.
#[derive(Debug, Clone)]
pub struct FullCaches {
    u_dagger: ComplexMatrix,
    b: Vec<ComplexMatrix>,
    dirty_from: usize,
    counter: OpCounter,
    n: usize,
}

impl FullCaches {
    pub fn new(target: &ComplexMatrix, circuit: &Circuit) -> Result<Self> {
        let n = circuit.qubits();
        if n > MAX_FULL_QUBITS {
            return Err(Error::Capacity(format!(
                "full backend limited to {MAX_FULL_QUBITS} qubits, got {n}"
            )));
        }
        check_target(target, n)?;
        let dim = 1usize << n;
        let mut b = Vec::with_capacity(circuit.len() + 1);
        b.push(ComplexMatrix::identity(dim));
        b.resize(circuit.len() + 1, ComplexMatrix::identity(dim));
        let mut caches = Self {
            u_dagger: target.adjoint(),
            b,
            dirty_from: 1,
            counter: OpCounter::default(),
            n,
        };
        caches.ensure_valid(circuit, circuit.len())?;
        Ok(caches)
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn b_matrix(&self, i: usize) -> Result<&ComplexMatrix> {
        if i >= self.dirty_from {
            return Err(Error::StaleCache(format!(
                "b[{i}] is stale (valid below {})",
                self.dirty_from
            )));
        }
        Ok(&self.b[i])
    }

    pub fn mark_gate_updated(&mut self, i: usize) {
        self.dirty_from = self.dirty_from.min(i + 1);
    }

    pub fn ensure_valid(&mut self, circuit: &Circuit, upto: usize) -> Result<()> {
        if circuit.len() + 1 != self.b.len() {
            return Err(Error::Dimension(format!(
                "caches were built for {} gates, circuit has {}",
                self.b.len() - 1,
                circuit.len()
            )));
        }
        while self.dirty_from <= upto {
            let i = self.dirty_from;
            let gate = circuit.gate(i - 1);
            let axes = QubitAxes::new(self.n, gate.location());
            let mut next = self.b[i - 1].clone();
            let count = axes.left_mul_matrix(gate.unitary(), &mut next);
            self.counter.add(count);
            self.b[i] = next;
            self.dirty_from += 1;
        }
        Ok(())
    }

    pub fn right_accumulator(&self) -> ComplexMatrix {
        self.u_dagger.clone()
    }

    /// `acc <- acc · emb(gate)`.
    pub fn absorb(&mut self, acc: &mut ComplexMatrix, gate: &Gate) -> Result<()> {
        let axes = QubitAxes::new(self.n, gate.location());
        let count = axes.right_mul_matrix(acc, gate.unitary());
        self.counter.add(count);
        Ok(())
    }

    /// Partial trace of `b[i] · acc` over the non-gate axes.
    pub fn environment(
        &mut self,
        circuit: &Circuit,
        i: usize,
        acc: &ComplexMatrix,
    ) -> Result<EnvironmentMatrix> {
        let gate = circuit.gate(i);
        let axes = QubitAxes::new(self.n, gate.location());
        let d = gate.dim();
        let dim = self.dim();
        let prefix = self.b_matrix(i)?;

        let mut e = ComplexMatrix::zeros(d, d);
        for rest in 0..axes.rest_count() {
            let base = axes.expand_rest(rest);
            for (x, &off_x) in axes.offsets().iter().enumerate() {
                let row = prefix.row(base + off_x);
                for (y, &off_y) in axes.offsets().iter().enumerate() {
                    let col = base + off_y;
                    let mut s = Complex64::new(0.0, 0.0);
                    for (z, rv) in row.iter().enumerate() {
                        s += rv * acc.get(z, col);
                    }
                    let cur = e.get(x, y);
                    e.set(x, y, cur + s);
                }
            }
        }
        let count = (axes.rest_count() * d * d * dim) as u64;
        self.counter.add(count);
        Ok(EnvironmentMatrix { gate_index: i, e })
    }

    /// Cost from a fully absorbed accumulator (`acc = U†C`).
    pub fn cost_from_acc(&self, acc: &ComplexMatrix) -> f64 {
        (1.0 - acc.trace().re / self.dim() as f64).max(0.0)
    }

    /// Standalone cost of the current circuit, `1 - Re Tr(U†C)/2^n`.
    pub fn cost(&mut self, circuit: &Circuit) -> Result<f64> {
        self.ensure_valid(circuit, circuit.len())?;
        let dim = self.dim();
        let c = &self.b[circuit.len()];
        let mut tr = Complex64::new(0.0, 0.0);
        for p in 0..dim {
            for (q, u) in self.u_dagger.row(p).iter().enumerate() {
                tr += u * c.get(q, p);
            }
        }
        self.counter.add((dim * dim) as u64);
        Ok((1.0 - tr.re / dim as f64).max(0.0))
    }

    pub fn counter(&self) -> OpCounter {
        self.counter
    }
}

fn check_target(target: &ComplexMatrix, n: usize) -> Result<()> {
    let dim = 1usize << n;
    if target.rows() != dim || target.cols() != dim {
        return Err(Error::Dimension(format!(
            "target is {}x{}, expected {dim}x{dim} for {n} qubits",
            target.rows(),
            target.cols()
        )));
    }
    if !target.is_finite() {
        return Err(Error::Numeric("target has non-finite entries".into()));
    }
    Ok(())
}
