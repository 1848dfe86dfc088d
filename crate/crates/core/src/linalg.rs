//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

/// Number of samples per partial reduction. Fixed so that parallel sums are
/// bit-identical at any thread count.
pub const REDUCTION_CHUNK: usize = 512;

/// Packs equally long vectors as the columns of a matrix.
pub fn columns(samples: &[Vec<f64>]) -> DMatrix<f64> {
    let n = samples.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, samples.len(), |r, c| samples[c][r])
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order. Returned eigenvectors are columns.
pub fn sorted_symmetric_eigen(m: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `max |A·Aᵀ − I|` over all entries.
pub fn orthonormality_error(a: &DMatrix<f64>) -> f64 {
    let gram = a * a.transpose();
    let mut worst = 0.0f64;
    for r in 0..gram.nrows() {
        for c in 0..gram.ncols() {
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((gram[(r, c)] - target).abs());
        }
    }
    worst
}

/// Principal angles (radians, ascending) between the row spaces of two
/// matrices with orthonormal rows.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let cross = a * b.transpose();
    let mut cosines: Vec<f64> = cross.singular_values().iter().copied().collect();
    cosines.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    cosines.into_iter().map(|c| c.clamp(-1.0, 1.0).acos()).collect()
}

/// Orthonormalises the rows of `a` via QR; `a` must have full row rank.
pub fn orthonormal_rows(a: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = a.transpose().qr();
    qr.q().transpose()
}

/// Sums per-chunk results in chunk order. `f` receives a column range.
pub fn chunked_sum<T, F>(len: usize, zero: T, f: F) -> T
where
    T: Send + Clone + std::ops::AddAssign,
    F: Fn(std::ops::Range<usize>) -> T + Sync,
{
    let starts: Vec<usize> = (0..len).step_by(REDUCTION_CHUNK).collect();
    let parts: Vec<T> = starts
        .par_iter()
        .map(|&s| f(s..(s + REDUCTION_CHUNK).min(len)))
        .collect();
    let mut acc = zero;
    for p in parts {
        acc += p;
    }
    acc
}
