use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;

/// The standard three-angle single-qubit rotation matrix
/// `[[cos(t/2), -e^{iL} sin(t/2)], [e^{iP} sin(t/2), e^{i(P+L)} cos(t/2)]]`.
pub fn u3_matrix(theta: f64, phi: f64, lambda: f64) -> ComplexMatrix {
    let (s, c) = (theta / 2.0).sin_cos();
    let entries = vec![
        Complex64::new(c, 0.0),
        -Complex64::from_polar(s, lambda),
        Complex64::from_polar(s, phi),
        Complex64::from_polar(c, phi + lambda),
    ];
    ComplexMatrix::new(2, 2, entries).expect("2x2")
}

/// Recover `(theta, phi, lambda, gamma)` with
/// `e^{i gamma} · u3(theta, phi, lambda) = u`, `theta` in `[0, pi]`.
///
/// Works on the special-unitary normalization `w = u · e^{-i arg(det u)/2}`;
/// every angle is then read off entries of modulus O(1), so the
/// reconstruction is exact to input accuracy with no branch near
/// `theta = 0` or `theta = pi`.
pub fn zyz_reparameterize(u: &ComplexMatrix) -> Result<(f64, f64, f64, f64)> {
    if u.rows() != 2 || u.cols() != 2 {
        return Err(Error::Dimension(format!(
            "zyz expects a 2x2 matrix, got {}x{}",
            u.rows(),
            u.cols()
        )));
    }
    if !u.is_finite() {
        return Err(Error::Numeric("zyz input has non-finite entries".into()));
    }
    let err = u.unitarity_error();
    if err > 1e-10 {
        return Err(Error::Numeric(format!(
            "zyz input deviates from unitarity by {err:.3e}"
        )));
    }

    let det = u.get(0, 0) * u.get(1, 1) - u.get(0, 1) * u.get(1, 0);
    let mu = det.arg() / 2.0;
    let unphase = Complex64::from_polar(1.0, -mu);
    let a = u.get(0, 0) * unphase;
    let b = u.get(1, 0) * unphase;

    let theta = 2.0 * b.norm().atan2(a.norm());
    let phi = wrap_angle(b.arg() - a.arg());
    let lambda = wrap_angle(-a.arg() - b.arg());
    let gamma = wrap_angle(mu + a.arg());
    Ok((theta, phi, lambda, gamma))
}

/// Wrap to (-pi, pi].
fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut w = a.rem_euclid(two_pi);
    if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{haar_random_unitary, stream_rng};

    fn reconstruct(theta: f64, phi: f64, lambda: f64, gamma: f64) -> ComplexMatrix {
        u3_matrix(theta, phi, lambda).scale(Complex64::from_polar(1.0, gamma))
    }

    #[test]
    fn identity_angles() {
        let (theta, phi, lambda, gamma) = zyz_reparameterize(&ComplexMatrix::identity(2)).unwrap();
        assert!(theta.abs() < 1e-12);
        assert!(gamma.abs() < 1e-12);
        let sum = wrap_angle(phi + lambda);
        assert!(sum.abs() < 1e-12);
    }

    #[test]
    fn pauli_x_reconstructs() {
        let x = ComplexMatrix::new(
            2,
            2,
            vec![
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        )
        .unwrap();
        let (theta, phi, lambda, gamma) = zyz_reparameterize(&x).unwrap();
        assert!((theta - std::f64::consts::PI).abs() < 1e-12);
        let err = reconstruct(theta, phi, lambda, gamma).sub(&x).unwrap().max_abs();
        assert!(err < 1e-12);
    }

    #[test]
    fn random_unitaries_reconstruct() {
        let mut rng = stream_rng(21, 0);
        for _ in 0..200 {
            let u = haar_random_unitary(2, &mut rng).unwrap();
            let (theta, phi, lambda, gamma) = zyz_reparameterize(&u).unwrap();
            assert!((0.0..=std::f64::consts::PI + 1e-12).contains(&theta));
            let err = reconstruct(theta, phi, lambda, gamma).sub(&u).unwrap().max_abs();
            assert!(err < 1e-9, "reconstruction error {err}");
        }
    }

    #[test]
    fn near_diagonal_and_near_antidiagonal_stay_accurate() {
        // Tiny but nonzero off-diagonals exercise the small-entry regime.
        for eps in [1e-6, 1e-9, 1e-12] {
            let c = (1.0f64 - eps * eps).sqrt();
            let u = ComplexMatrix::new(
                2,
                2,
                vec![
                    Complex64::new(c, 0.0),
                    Complex64::new(-eps, 0.0),
                    Complex64::new(eps, 0.0),
                    Complex64::new(c, 0.0),
                ],
            )
            .unwrap();
            let (theta, phi, lambda, gamma) = zyz_reparameterize(&u).unwrap();
            let err = reconstruct(theta, phi, lambda, gamma).sub(&u).unwrap().max_abs();
            assert!(err < 1e-10, "eps={eps} err={err}");

            let flipped = ComplexMatrix::new(
                2,
                2,
                vec![
                    Complex64::new(eps, 0.0),
                    Complex64::new(-c, 0.0),
                    Complex64::new(c, 0.0),
                    Complex64::new(eps, 0.0),
                ],
            )
            .unwrap();
            let (theta, phi, lambda, gamma) = zyz_reparameterize(&flipped).unwrap();
            let err = reconstruct(theta, phi, lambda, gamma)
                .sub(&flipped)
                .unwrap()
                .max_abs();
            assert!(err < 1e-10, "flipped eps={eps} err={err}");
        }
    }

    #[test]
    fn rejects_non_unitary() {
        let bad = ComplexMatrix::new(
            2,
            2,
            vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(1.5, 0.0),
            ],
        )
        .unwrap();
        assert!(matches!(zyz_reparameterize(&bad), Err(Error::Numeric(_))));
    }
}
