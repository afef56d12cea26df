use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, StateSet};

/// Haar-random unitary of dimension `d`: QR of a complex Gaussian matrix via
/// modified Gram-Schmidt. MGS yields a real-positive R diagonal, which makes
/// the factorization unique and the Q factor Haar-distributed.
pub fn haar_random_unitary(d: usize, rng: &mut impl Rng) -> Result<ComplexMatrix> {
    if d == 0 {
        return Err(Error::Dimension("haar_random_unitary requires d >= 1".into()));
    }
    let cols = orthonormal_gaussian_frame(d, d, rng)?;
    let mut m = ComplexMatrix::zeros(d, d);
    for (j, col) in cols.iter().enumerate() {
        for (i, z) in col.iter().enumerate() {
            m.set(i, j, *z);
        }
    }
    Ok(m)
}

/// `m` mutually orthonormal Haar-random states on `n` qubits, i.e. the first
/// `m` columns of a Haar-random unitary, without materializing the rest.
pub fn haar_random_states(n: usize, m: usize, rng: &mut impl Rng) -> Result<StateSet> {
    let dim = state_capacity(n, m)?;
    let cols = orthonormal_gaussian_frame(dim, m, rng)?;
    let mut amps = Vec::with_capacity(m * dim);
    for col in cols {
        amps.extend(col);
    }
    Ok(StateSet::from_raw(n, m, amps))
}

/// `m` distinct computational basis states chosen uniformly without
/// replacement.
pub fn basis_states(n: usize, m: usize, rng: &mut impl Rng) -> Result<StateSet> {
    let dim = state_capacity(n, m)?;
    let indices: Vec<usize> = rand::seq::index::sample(rng, dim, m).into_iter().collect();
    StateSet::from_basis_indices(n, &indices)
}

/// Deterministic per-task stream: same seed, disjoint streams per task index.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 step; used to derive independent sub-seeds from a base seed.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn state_capacity(n: usize, m: usize) -> Result<usize> {
    if n >= usize::BITS as usize - 1 {
        return Err(Error::Capacity(format!("{n} qubits overflow the index space")));
    }
    let dim = 1usize << n;
    if m == 0 || m > dim {
        return Err(Error::Capacity(format!(
            "cannot draw {m} orthogonal states on {n} qubits (capacity {dim})"
        )));
    }
    Ok(dim)
}

/// Orthonormalize `count` complex Gaussian vectors of dimension `dim` with
/// twice-iterated modified Gram-Schmidt.
fn orthonormal_gaussian_frame(
    dim: usize,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<Complex64>>> {
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut v: Vec<Complex64> = (0..dim)
            .map(|_| {
                Complex64::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                ) * std::f64::consts::FRAC_1_SQRT_2
            })
            .collect();
        for _ in 0..2 {
            for q in &cols {
                let overlap: Complex64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (x, qx) in v.iter_mut().zip(q) {
                    *x -= overlap * qx;
                }
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::Numeric(
                "degenerate Gaussian draw during orthonormalization".into(),
            ));
        }
        for z in v.iter_mut() {
            *z /= norm;
        }
        cols.push(v);
    }
    Ok(cols)
}
