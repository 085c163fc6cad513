//! Dense least squares via Householder QR.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Solves `min ‖Xβ − y‖₂` for a row-major `rows × cols` design matrix.
///
/// Returns [`Error::Singular`] when a column is (numerically) a combination
/// of the preceding ones.
pub fn least_squares(design: &[f64], rows: usize, cols: usize, y: &[f64]) -> Result<Vec<f64>> {
    if design.len() != rows * cols || y.len() != rows {
        return Err(Error::LengthMismatch {
            left: design.len(),
            right: rows * cols,
        });
    }
    if rows < cols || cols == 0 {
        return Err(Error::Singular);
    }
    // Column-major working copy.
    let mut a: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..rows).map(|i| design[i * cols + j]).collect())
        .collect();
    let mut b = y.to_vec();
    let scale = design.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut diag = vec![0.0; cols];

    for k in 0..cols {
        let norm = libm::sqrt(a[k][k..].iter().map(|v| v * v).sum::<f64>());
        if norm <= 1e-12 * scale * libm::sqrt(rows as f64) {
            return Err(Error::Singular);
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        diag[k] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        for col in a.iter_mut().skip(k + 1) {
            let dot: f64 = v.iter().zip(&col[k..]).map(|(p, q)| p * q).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in col[k..].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
        let dot: f64 = v.iter().zip(&b[k..]).map(|(p, q)| p * q).sum();
        let f = 2.0 * dot / vnorm2;
        for (c, vi) in b[k..].iter_mut().zip(&v) {
            *c -= f * vi;
        }
    }

    let mut beta = vec![0.0; cols];
    for k in (0..cols).rev() {
        let mut acc = b[k];
        for j in k + 1..cols {
            acc -= a[j][k] * beta[j];
        }
        beta[k] = acc / diag[k];
    }
    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit() {
        // y = 2 + 3x
        let xs = [0.0, 1.0, 2.0, 3.0];
        let design: Vec<f64> = xs.iter().flat_map(|&x| [1.0, x]).collect();
        let y: Vec<f64> = xs.iter().map(|x| 2.0 + 3.0 * x).collect();
        let beta = least_squares(&design, 4, 2, &y).unwrap();
        assert!((beta[0] - 2.0).abs() < 1e-12 && (beta[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_columns_are_singular() {
        let design = [1.0, 2.0, 1.0, 2.0, 1.0, 2.0];
        assert_eq!(least_squares(&design, 3, 2, &[1.0, 2.0, 3.0]), Err(Error::Singular));
    }

    #[test]
    fn residuals_orthogonal_to_columns() {
        let rows = 9;
        let design: Vec<f64> = (0..rows)
            .flat_map(|i| {
                let t = i as f64;
                [1.0, t, (t * 0.7).sin()]
            })
            .collect();
        let y: Vec<f64> = (0..rows).map(|i| ((i * i) % 5) as f64).collect();
        let beta = least_squares(&design, rows, 3, &y).unwrap();
        let resid: Vec<f64> = (0..rows)
            .map(|i| y[i] - (0..3).map(|j| design[i * 3 + j] * beta[j]).sum::<f64>())
            .collect();
        for j in 0..3 {
            let dot: f64 = (0..rows).map(|i| design[i * 3 + j] * resid[i]).sum();
            assert!(dot.abs() < 1e-10, "{dot}");
        }
    }
}
