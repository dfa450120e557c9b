//! Small dense linear-algebra helpers over `nalgebra` and plain `Vec<f64>`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Elementwise tolerance for treating a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Relative eigenvalue floor: eigenvalues down to `-PSD_REL_TOL * trace / m`
/// are treated as rounding noise around zero.
pub const PSD_REL_TOL: f64 = 1e-8;

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Arithmetic mean of a nonempty set of equal-length vectors.
pub fn mean<'a, I>(dim: usize, vectors: I) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for v in vectors {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
        n += 1;
    }
    let n = n.max(1) as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Bessel-corrected sample covariance around `mean`. Fewer than two vectors
/// give the zero matrix.
pub fn sample_covariance<'a, I>(mean: &[f64], vectors: I) -> DMatrix<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let dim = mean.len();
    let mut acc = DMatrix::<f64>::zeros(dim, dim);
    let mut n = 0usize;
    let mut centered = vec![0.0; dim];
    for v in vectors {
        for (c, (x, m)) in centered.iter_mut().zip(v.iter().zip(mean)) {
            *c = x - m;
        }
        for i in 0..dim {
            for j in i..dim {
                acc[(i, j)] += centered[i] * centered[j];
            }
        }
        n += 1;
    }
    if n < 2 {
        return DMatrix::zeros(dim, dim);
    }
    let denom = (n - 1) as f64;
    for i in 0..dim {
        for j in i..dim {
            let v = acc[(i, j)] / denom;
            acc[(i, j)] = v;
            acc[(j, i)] = v;
        }
    }
    acc
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn eigen_floor(m: &DMatrix<f64>) -> f64 {
    let dim = m.nrows().max(1) as f64;
    -PSD_REL_TOL * (m.trace().abs() / dim)
}

/// Checks that `m` is square, finite, symmetric and PSD up to the floor;
/// returns its eigendecomposition with slightly negative eigenvalues clamped
/// to zero.
pub fn psd_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidCovariance(format!(
            "not square: {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidCovariance("non-finite entry".into()));
    }
    let asym = max_asymmetry(m);
    let scale = m.amax().max(1.0);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::InvalidCovariance(format!(
            "asymmetric (max |a_ij - a_ji| = {asym:e})"
        )));
    }
    let sym = (m + m.transpose()) * 0.5;
    let mut eig = SymmetricEigen::new(sym);
    let floor = eigen_floor(m);
    let min = eig.eigenvalues.min();
    if min < floor {
        return Err(Error::InvalidCovariance(format!(
            "eigenvalue {min:e} below floor {floor:e}"
        )));
    }
    eig.eigenvalues.iter_mut().for_each(|l| *l = l.max(0.0));
    Ok(eig)
}

pub fn is_psd(m: &DMatrix<f64>) -> bool {
    psd_eigen(m).is_ok()
}

/// Inverse of a symmetric matrix, adding a ridge of `1e-8 * trace / m` to the
/// diagonal when it is singular.
pub fn inverse_with_ridge(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = m.clone().cholesky() {
        return chol.inverse();
    }
    let dim = m.nrows();
    let ridge = (PSD_REL_TOL * m.trace().abs() / dim.max(1) as f64).max(f64::MIN_POSITIVE);
    let mut reg = m.clone();
    let mut scale = ridge;
    loop {
        for i in 0..dim {
            reg[(i, i)] = m[(i, i)] + scale;
        }
        if let Some(chol) = reg.clone().cholesky() {
            return chol.inverse();
        }
        scale *= 10.0;
    }
}

/// Serde adapter storing a square matrix as a list of rows.
pub mod rows {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_row_iterator(
            nrows,
            ncols,
            rows.into_iter().flatten(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_covariance() {
        let pts = [vec![0.0, 0.0], vec![2.0, 0.0]];
        let mu = mean(2, pts.iter().map(Vec::as_slice));
        assert_eq!(mu, vec![1.0, 0.0]);
        let cov = sample_covariance(&mu, pts.iter().map(Vec::as_slice));
        assert_eq!(cov, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn psd_checks() {
        assert!(is_psd(&DMatrix::zeros(3, 3)));
        assert!(is_psd(&DMatrix::from_element(3, 3, 1.0)));
        assert!(!is_psd(&DMatrix::from_row_slice(
            2,
            2,
            &[1.0, 2.0, 2.0, 1.0]
        )));
        assert!(!is_psd(&DMatrix::from_row_slice(
            2,
            2,
            &[1.0, 0.5, 0.0, 1.0]
        )));
    }

    #[test]
    fn ridge_inverse_of_singular() {
        let m = DMatrix::from_element(2, 2, 1.0);
        let inv = inverse_with_ridge(&m);
        assert!(inv.iter().all(|x| x.is_finite()));
        let id = DMatrix::<f64>::identity(3, 3) * 2.0;
        assert!((inverse_with_ridge(&id) - DMatrix::identity(3, 3) * 0.5).amax() < 1e-15);
    }

    #[test]
    fn rows_layout_is_row_major() {
        #[derive(serde::Serialize, serde::Deserialize)]
        struct W(#[serde(with = "rows")] DMatrix<f64>);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let json = serde_json::to_string(&W(m.clone())).unwrap();
        assert_eq!(json, "[[1.0,2.0],[3.0,4.0]]");
        let back: W = serde_json::from_str(&json).unwrap();
        assert_eq!(back.0, m);
    }
}
