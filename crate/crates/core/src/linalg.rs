//! Dense matrix helpers.

use nalgebra::DMatrix;

/// Degree of the truncated Taylor series used after scaling. With the scaled
/// norm below `SCALED_NORM_BOUND` the truncation error is below 1e-20.
const TAYLOR_DEGREE: usize = 16;
const SCALED_NORM_BOUND: f64 = 0.5;

/// Maximum absolute row sum.
pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
///
/// The argument is scaled by `2^-s` so that its infinity norm drops below 0.5,
/// the series is evaluated with Horner's rule, and the result is squared `s`
/// times.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm requires a square matrix");
    let n = a.nrows();
    let norm = inf_norm(a);
    let squarings = if norm > SCALED_NORM_BOUND {
        (norm / SCALED_NORM_BOUND).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * 2f64.powi(-squarings);

    // Horner: I + A(I + A/2(I + A/3(...)))
    let identity = DMatrix::<f64>::identity(n, n);
    let mut acc = identity.clone();
    for k in (1..=TAYLOR_DEGREE).rev() {
        acc = &identity + (&scaled * acc) / k as f64;
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_gives_identity() {
        let z = DMatrix::<f64>::zeros(4, 4);
        assert_eq!(expm(&z), DMatrix::identity(4, 4));
    }

    #[test]
    fn diagonal_matches_scalar_exponential() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-3.0, 0.25, 7.5]));
        let e = expm(&d);
        for (i, v) in [-3.0f64, 0.25, 7.5].iter().enumerate() {
            let rel = (e[(i, i)] - v.exp()).abs() / v.exp();
            assert!(rel < 1e-13, "entry {i}: rel err {rel}");
        }
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn nilpotent_is_exact() {
        // exp([[0,1],[0,0]]) = [[1,1],[0,1]]
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = expm(&a);
        assert!((e[(0, 1)] - 1.0).abs() < 1e-15);
        assert!((e[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rotation_generator() {
        let t = 2.3f64;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -t, t, 0.0]);
        let e = expm(&a);
        assert!((e[(0, 0)] - t.cos()).abs() < 1e-13);
        assert!((e[(1, 0)] - t.sin()).abs() < 1e-13);
    }
}
