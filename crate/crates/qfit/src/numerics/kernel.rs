use num_complex::Complex64;

use crate::numerics::ComplexMatrix;

/// Index arithmetic for applying a small matrix to selected qubit axes of a
/// `2^n`-dimensional object. Qubit 0 is the least significant bit of the
/// amplitude index.
pub struct QubitAxes {
    n: usize,
    loc: Vec<usize>,
    /// `offsets[t]` spreads local index `t` over the location bits.
    offsets: Vec<usize>,
}

impl QubitAxes {
    /// `loc` must be strictly increasing with entries below `n`.
    pub fn new(n: usize, loc: &[usize]) -> Self {
        debug_assert!(loc.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(loc.iter().all(|&q| q < n));
        let d = 1usize << loc.len();
        let offsets = (0..d)
            .map(|t| {
                loc.iter()
                    .enumerate()
                    .filter(|(bit, _)| t >> bit & 1 == 1)
                    .map(|(_, &q)| 1usize << q)
                    .sum()
            })
            .collect();
        Self {
            n,
            loc: loc.to_vec(),
            offsets,
        }
    }

    pub fn arity(&self) -> usize {
        self.loc.len()
    }

    pub fn dim(&self) -> usize {
        self.offsets.len()
    }

    pub fn rest_count(&self) -> usize {
        1usize << (self.n - self.loc.len())
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Expand a rest-counter into a full index with zeros at the location
    /// bits (ascending insertion keeps earlier positions stable).
    #[inline]
    pub fn expand_rest(&self, rest: usize) -> usize {
        let mut base = rest;
        for &q in &self.loc {
            let low = base & ((1usize << q) - 1);
            let high = base >> q;
            base = (high << (q + 1)) | low;
        }
        base
    }

    /// In-place `v <- emb(g) v` on one `2^n` amplitude slice. Returns the
    /// number of complex multiply-adds performed.
    pub fn apply_to_state(&self, g: &ComplexMatrix, v: &mut [Complex64]) -> u64 {
        let d = self.dim();
        debug_assert_eq!(v.len(), 1usize << self.n);
        debug_assert_eq!(g.rows(), d);
        let mut scratch = [Complex64::new(0.0, 0.0); 64];
        let ge = g.entries();
        for rest in 0..self.rest_count() {
            let base = self.expand_rest(rest);
            for (t, s) in scratch[..d].iter_mut().enumerate() {
                *s = v[base + self.offsets[t]];
            }
            for x in 0..d {
                let row = &ge[x * d..(x + 1) * d];
                let mut acc = Complex64::new(0.0, 0.0);
                for (s, a) in scratch[..d].iter().zip(row) {
                    acc += a * s;
                }
                v[base + self.offsets[x]] = acc;
            }
        }
        (self.rest_count() as u64) * (d as u64) * (d as u64)
    }

    /// `M <- emb(g) · M` (mixes rows of `M`). Returns multiply-add count.
    pub fn left_mul_matrix(&self, g: &ComplexMatrix, m: &mut ComplexMatrix) -> u64 {
        let d = self.dim();
        let cols = m.cols();
        debug_assert_eq!(m.rows(), 1usize << self.n);
        let mut scratch = [Complex64::new(0.0, 0.0); 64];
        let ge = g.entries().to_vec();
        let me = m.entries_mut();
        for rest in 0..self.rest_count() {
            let base = self.expand_rest(rest);
            for c in 0..cols {
                for (t, s) in scratch[..d].iter_mut().enumerate() {
                    *s = me[(base + self.offsets[t]) * cols + c];
                }
                for x in 0..d {
                    let row = &ge[x * d..(x + 1) * d];
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (s, a) in scratch[..d].iter().zip(row) {
                        acc += a * s;
                    }
                    me[(base + self.offsets[x]) * cols + c] = acc;
                }
            }
        }
        (self.rest_count() as u64) * (cols as u64) * (d as u64) * (d as u64)
    }

    /// `M <- M · emb(g)` (mixes columns of `M`); each row is transformed by
    /// `g` transposed. Returns multiply-add count.
    pub fn right_mul_matrix(&self, m: &mut ComplexMatrix, g: &ComplexMatrix) -> u64 {
        let rows = m.rows();
        let cols = m.cols();
        debug_assert_eq!(cols, 1usize << self.n);
        let gt = g.transpose();
        let mut count = 0u64;
        for r in 0..rows {
            let row = &mut m.entries_mut()[r * cols..(r + 1) * cols];
            count += self.apply_to_state(&gt, row);
        }
        count
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense embedding built entry-by-entry from the definition; the slow
    /// reference the kernels are checked against.
    fn embed_dense(n: usize, loc: &[usize], g: &ComplexMatrix) -> ComplexMatrix {
        let dim = 1usize << n;
        let k = loc.len();
        let local = |idx: usize| -> usize {
            (0..k).map(|b| ((idx >> loc[b]) & 1) << b).sum()
        };
        let rest_mask: usize = (0..n)
            .filter(|q| !loc.contains(q))
            .map(|q| 1usize << q)
            .sum();
        let mut out = ComplexMatrix::zeros(dim, dim);
        for r in 0..dim {
            for c in 0..dim {
                if r & rest_mask == c & rest_mask {
                    out.set(r, c, g.get(local(r), local(c)));
                }
            }
        }
        out
    }

    fn random_small(d: usize, seed: u64) -> ComplexMatrix {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..d * d)
            .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect();
        ComplexMatrix::new(d, d, entries).unwrap()
    }

    #[test]
    fn state_kernel_matches_dense_embedding() {
        let g = random_small(4, 3);
        for loc in [[0usize, 1], [0, 2], [1, 2]] {
            let axes = QubitAxes::new(3, &loc);
            let emb = embed_dense(3, &loc, &g);
            let mut v: Vec<Complex64> = (0..8)
                .map(|i| Complex64::new(i as f64 * 0.25 - 1.0, 0.5 - i as f64 * 0.1))
                .collect();
            let expect = emb.mul_vec(&v).unwrap();
            axes.apply_to_state(&g, &mut v);
            for (a, b) in v.iter().zip(&expect) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn matrix_kernels_match_dense_products() {
        let g = random_small(2, 9);
        let m0 = random_small(8, 10);
        let axes = QubitAxes::new(3, &[1]);
        let emb = embed_dense(3, &[1], &g);

        let mut left = m0.clone();
        axes.left_mul_matrix(&g, &mut left);
        let expect_left = emb.matmul(&m0).unwrap();
        assert!(left.sub(&expect_left).unwrap().max_abs() < 1e-12);

        let mut right = m0.clone();
        axes.right_mul_matrix(&mut right, &g);
        let expect_right = m0.matmul(&emb).unwrap();
        assert!(right.sub(&expect_right).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn expand_rest_skips_location_bits() {
        let axes = QubitAxes::new(4, &[1, 3]);
        // rest counter enumerates bits 0 and 2.
        assert_eq!(axes.expand_rest(0), 0b0000);
        assert_eq!(axes.expand_rest(1), 0b0001);
        assert_eq!(axes.expand_rest(2), 0b0100);
        assert_eq!(axes.expand_rest(3), 0b0101);
        assert_eq!(axes.offsets(), &[0b0000, 0b0010, 0b1000, 0b1010]);
    }
}
