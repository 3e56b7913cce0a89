//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix with eigenpairs sorted by
/// descending eigenvalue.
///
/// Each eigenvector is sign-normalized so that its largest-magnitude entry
/// (lowest index on exact ties) is positive. Exactly tied eigenvalues are
/// ordered lexicographically by their normalized eigenvectors, descending.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> SortedEigen {
    let k = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut pairs: Vec<(f64, DVector<f64>)> = (0..k)
        .map(|j| {
            let v = canonical_sign(eig.eigenvectors.column(j).into_owned());
            (eig.eigenvalues[j], v)
        })
        .collect();
    pairs.sort_by(|a, b| match b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal) {
        Ordering::Equal => lexicographic_desc(&a.1, &b.1),
        o => o,
    });
    let mut vectors = DMatrix::zeros(k, k);
    let mut values = Vec::with_capacity(k);
    for (j, (val, vec)) in pairs.into_iter().enumerate() {
        values.push(val);
        vectors.set_column(j, &vec);
    }
    SortedEigen { values, vectors }
}

fn lexicographic_desc(a: &DVector<f64>, b: &DVector<f64>) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match y.partial_cmp(x).unwrap_or(Ordering::Equal) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

pub fn canonical_sign(mut v: DVector<f64>) -> DVector<f64> {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
    v
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric square root and inverse square root of a positive-definite matrix.
pub fn sqrt_and_inv_sqrt(sigma: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::new(symmetrize(sigma));
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || !min.is_finite() {
        return Err(Error::NotPositiveDefinite(format!(
            "minimum eigenvalue {min:e}"
        )));
    }
    let q = &eig.eigenvectors;
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let inv_root = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let sqrt = symmetrize(&(q * root * q.transpose()));
    let inv_sqrt = symmetrize(&(q * inv_root * q.transpose()));
    Ok((sqrt, inv_sqrt))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Ratio of the largest to the smallest eigenvalue of a symmetric PSD matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(symmetrize(m));
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `log(sum(exp(x)))` with max subtraction. Empty input or all `-inf` gives `-inf`.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log(1 + sum_j exp(w_j))`, i.e. log-sum-exp over `w` augmented with a zero.
pub fn log1p_sum_exp(w: &DVector<f64>) -> f64 {
    let max = w.iter().cloned().fold(0.0_f64, f64::max);
    let s: f64 = w.iter().map(|x| (x - max).exp()).sum::<f64>() + (-max).exp();
    max + s.ln()
}

pub fn frobenius_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_eigen_descending_with_sign() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 0.0]));
        let e = sorted_symmetric_eigen(&m);
        assert_eq!(e.values, vec![4.0, 1.0, 0.0]);
        assert_eq!(e.vectors.column(0)[1], 1.0);
    }

    #[test]
    fn sqrt_roundtrip() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (r, ir) = sqrt_and_inv_sqrt(&s).unwrap();
        assert!((&r * &r - &s).norm() < 1e-12);
        assert!((&r * &ir - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(sqrt_and_inv_sqrt(&s).is_err());
    }

    #[test]
    fn lse_guards() {
        assert_eq!(log_sum_exp(Vec::<f64>::new()), f64::NEG_INFINITY);
        assert!((log_sum_exp([1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        let w = DVector::from_vec(vec![800.0, 0.0]);
        assert!((log1p_sum_exp(&w) - 800.0).abs() < 1e-12);
        let w = DVector::from_vec(vec![0.0, 0.0]);
        assert!((log1p_sum_exp(&w) - 3f64.ln()).abs() < 1e-15);
    }
}
