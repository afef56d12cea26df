use num_complex::Complex64;

use crate::circuit::{Circuit, Gate};
use crate::error::Result;
use crate::numerics::{dot_flat, ComplexMatrix, StateSet};
use crate::sim::{
    absorb_gate, environment_sample, right_accumulator, sample_cost, EnvironmentMatrix,
    FullCaches, SimCaches,
};

/// Everything a right-to-left sweep needs from a cost backend: cached prefix
/// tensors, environment assembly, suffix accumulation and cost evaluation.
pub trait SweepBackend {
    type Acc;

    /// Make prefix caches valid up to and including gate `upto`.
    fn prepare(&mut self, circuit: &Circuit, upto: usize) -> Result<()>;

    /// Fresh right accumulator with no suffix gates absorbed.
    fn init_acc(&self) -> Self::Acc;

    fn environment(
        &mut self,
        circuit: &Circuit,
        i: usize,
        acc: &Self::Acc,
    ) -> Result<EnvironmentMatrix>;

    /// Fold a gate into the accumulator. `chain` counts how many gates the
    /// accumulator has absorbed, for periodic re-normalization.
    fn absorb(&mut self, acc: &mut Self::Acc, gate: &Gate, chain: usize) -> Result<()>;

    fn gate_updated(&mut self, i: usize);

    /// Cost once every gate has been absorbed into the accumulator.
    fn cost_from_acc(&mut self, acc: &Self::Acc) -> Result<f64>;

    /// Standalone cost of the circuit as it currently stands.
    fn cost(&mut self, circuit: &Circuit) -> Result<f64>;

    /// Cost the circuit would have if gate `e.gate_index()` were replaced by
    /// `u`, everything else unchanged.
    fn cost_at(&self, e: &EnvironmentMatrix, u: &ComplexMatrix) -> f64;

    fn madds(&self) -> u64;
}

const ACC_RENORM_INTERVAL: usize = 64;

/// Sampled-state backend over [`SimCaches`]; cost is the average squared
/// state distance, in `[0, 4]`.
pub struct SampleBackend {
    caches: SimCaches,
}

impl SampleBackend {
    pub fn new(caches: SimCaches) -> Self {
        Self { caches }
    }

    pub fn caches(&self) -> &SimCaches {
        &self.caches
    }

    pub fn caches_mut(&mut self) -> &mut SimCaches {
        &mut self.caches
    }
}

impl SweepBackend for SampleBackend {
    type Acc = StateSet;

    fn prepare(&mut self, circuit: &Circuit, upto: usize) -> Result<()> {
        self.caches.ensure_valid(circuit, upto)
    }

    fn init_acc(&self) -> StateSet {
        right_accumulator(&self.caches)
    }

    fn environment(
        &mut self,
        circuit: &Circuit,
        i: usize,
        acc: &StateSet,
    ) -> Result<EnvironmentMatrix> {
        environment_sample(&mut self.caches, circuit, i, acc)
    }

    fn absorb(&mut self, acc: &mut StateSet, gate: &Gate, chain: usize) -> Result<()> {
        absorb_gate(acc, gate, self.caches.counter_mut())?;
        if chain.is_multiple_of(ACC_RENORM_INTERVAL) {
            acc.renormalize();
        }
        Ok(())
    }

    fn gate_updated(&mut self, i: usize) {
        self.caches.mark_gate_updated(i);
    }

    fn cost_from_acc(&mut self, acc: &StateSet) -> Result<f64> {
        let m = self.caches.m();
        let mut s = Complex64::new(0.0, 0.0);
        for j in 0..m {
            s += dot_flat(acc.state(j), self.caches.inputs().state(j));
        }
        let count = (m << self.caches.qubits()) as u64;
        self.caches.counter_mut().add(count);
        Ok((2.0 - 2.0 * s.re / m as f64).max(0.0))
    }

    fn cost(&mut self, circuit: &Circuit) -> Result<f64> {
        sample_cost(&mut self.caches, circuit)
    }

    fn cost_at(&self, e: &EnvironmentMatrix, u: &ComplexMatrix) -> f64 {
        let m = self.caches.m() as f64;
        (2.0 - 2.0 * e.realized_trace(u) / m).max(0.0)
    }

    fn madds(&self) -> u64 {
        self.caches.counter().madds
    }
}

/// Full-unitary backend over [`FullCaches`]; cost is the normalized
/// Frobenius distance, in `[0, 2]`.
pub struct FullBackend {
    caches: FullCaches,
}

impl FullBackend {
    pub fn new(caches: FullCaches) -> Self {
        Self { caches }
    }

    pub fn caches(&self) -> &FullCaches {
        &self.caches
    }
}

impl SweepBackend for FullBackend {
    type Acc = ComplexMatrix;

    fn prepare(&mut self, circuit: &Circuit, upto: usize) -> Result<()> {
        self.caches.ensure_valid(circuit, upto)
    }

    fn init_acc(&self) -> ComplexMatrix {
        self.caches.right_accumulator()
    }

    fn environment(
        &mut self,
        circuit: &Circuit,
        i: usize,
        acc: &ComplexMatrix,
    ) -> Result<EnvironmentMatrix> {
        self.caches.environment(circuit, i, acc)
    }

    fn absorb(&mut self, acc: &mut ComplexMatrix, gate: &Gate, _chain: usize) -> Result<()> {
        self.caches.absorb(acc, gate)
    }

    fn gate_updated(&mut self, i: usize) {
        self.caches.mark_gate_updated(i);
    }

    fn cost_from_acc(&mut self, acc: &ComplexMatrix) -> Result<f64> {
        Ok(self.caches.cost_from_acc(acc))
    }

    fn cost(&mut self, circuit: &Circuit) -> Result<f64> {
        self.caches.cost(circuit)
    }

    fn cost_at(&self, e: &EnvironmentMatrix, u: &ComplexMatrix) -> f64 {
        (1.0 - e.realized_trace(u) / self.caches.dim() as f64).max(0.0)
    }

    fn madds(&self) -> u64 {
        self.caches.counter().madds
    }
}
