use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;

/// A set of `m` pure states on `n` qubits, stored as a rank-(n+1) tensor of
/// shape `(m, 2, ..., 2)` flattened state-major. Qubit 0 is the least
/// significant axis of each state's amplitude index (little-endian).
#[derive(Debug, Clone, PartialEq)]
pub struct StateSet {
    n: usize,
    m: usize,
    amps: Vec<Complex64>,
}

impl StateSet {
    /// Build from raw amplitudes (length `m * 2^n`). Each state must be
    /// normalized to within 1e-9.
    pub fn from_amplitudes(n: usize, m: usize, amps: Vec<Complex64>) -> Result<Self> {
        let dim = dim_checked(n)?;
        if m > dim {
            return Err(Error::Capacity(format!(
                "{m} states exceed the {dim}-dimensional space of {n} qubits"
            )));
        }
        if amps.len() != m * dim {
            return Err(Error::Dimension(format!(
                "{m} states on {n} qubits need {} amplitudes, got {}",
                m * dim,
                amps.len()
            )));
        }
        let set = Self { n, m, amps };
        for j in 0..m {
            let norm = set.state_norm(j);
            if !(norm.is_finite() && (norm - 1.0).abs() <= 1e-9) {
                return Err(Error::Numeric(format!(
                    "state {j} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(set)
    }

    /// Computational basis states for the given amplitude indices.
    pub fn from_basis_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let dim = dim_checked(n)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); indices.len() * dim];
        for (j, &idx) in indices.iter().enumerate() {
            if idx >= dim {
                return Err(Error::Dimension(format!(
                    "basis index {idx} out of range for {n} qubits"
                )));
            }
            if indices[..j].contains(&idx) {
                return Err(Error::Dimension(format!("duplicate basis index {idx}")));
            }
            amps[j * dim + idx] = Complex64::new(1.0, 0.0);
        }
        Ok(Self {
            n,
            m: indices.len(),
            amps,
        })
    }

    pub(crate) fn from_raw(n: usize, m: usize, amps: Vec<Complex64>) -> Self {
        debug_assert_eq!(amps.len(), m << n);
        Self { n, m, amps }
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn state(&self, j: usize) -> &[Complex64] {
        let d = self.dim();
        &self.amps[j * d..(j + 1) * d]
    }

    pub fn state_mut(&mut self, j: usize) -> &mut [Complex64] {
        let d = self.dim();
        &mut self.amps[j * d..(j + 1) * d]
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn state_norm(&self, j: usize) -> f64 {
        self.state(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Entrywise complex conjugate of every state.
    pub fn conjugated(&self) -> StateSet {
        Self {
            n: self.n,
            m: self.m,
            amps: self.amps.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn renormalize(&mut self) {
        for j in 0..self.m {
            let norm = self.state_norm(j);
            if norm > 0.0 {
                for z in self.state_mut(j) {
                    *z /= norm;
                }
            }
        }
    }

    /// Gram matrix `G[i][j] = ⟨ψ_i|ψ_j⟩`.
    pub fn gram(&self) -> ComplexMatrix {
        let mut g = ComplexMatrix::zeros(self.m, self.m);
        for i in 0..self.m {
            for j in 0..self.m {
                g.set(i, j, inner(self.state(i), self.state(j)));
            }
        }
        g
    }

    /// Max deviation of the Gram matrix from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.gram();
        let mut err: f64 = 0.0;
        for i in 0..self.m {
            for j in 0..self.m {
                let expect = if i == j { 1.0 } else { 0.0 };
                err = err.max((g.get(i, j) - Complex64::new(expect, 0.0)).norm());
            }
        }
        err
    }
}

/// Hermitian inner product `⟨a|b⟩` (conjugate-linear in `a`).
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Plain bilinear dot product without conjugation.
pub fn dot_flat(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dim_checked(n: usize) -> Result<usize> {
    if n >= usize::BITS as usize - 1 {
        return Err(Error::Capacity(format!("{n} qubits overflow the index space")));
    }
    Ok(1 << n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_indices_build_one_hot_states() {
        let set = StateSet::from_basis_indices(2, &[3, 0]).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.state(0)[3], Complex64::new(1.0, 0.0));
        assert_eq!(set.state(1)[0], Complex64::new(1.0, 0.0));
        assert!(set.orthonormality_error() < 1e-15);
    }

    #[test]
    fn duplicate_or_oversized_indices_rejected() {
        assert!(StateSet::from_basis_indices(2, &[1, 1]).is_err());
        assert!(StateSet::from_basis_indices(2, &[4]).is_err());
    }

    #[test]
    fn unnormalized_amplitudes_rejected() {
        let amps = vec![Complex64::new(2.0, 0.0), Complex64::new(0.0, 0.0)];
        assert!(StateSet::from_amplitudes(1, 1, amps).is_err());
    }
}
