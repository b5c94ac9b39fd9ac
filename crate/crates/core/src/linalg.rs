//! Small dense helpers on top of `faer` used across the crate.

use faer::{Mat, MatRef, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = Mat<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn zeros(n: usize, m: usize) -> CMat {
    Mat::zeros(n, m)
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

pub fn from_real_rows(rows: &[&[f64]]) -> CMat {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    Mat::from_fn(n, m, |i, j| real(rows[i][j]))
}

pub fn diag_real(values: &[f64]) -> CMat {
    let n = values.len();
    Mat::from_fn(n, n, |i, j| if i == j { real(values[i]) } else { ZERO })
}

pub fn dagger(a: MatRef<'_, C64>) -> CMat {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)].conj())
}

pub fn scale(a: MatRef<'_, C64>, c: C64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * c)
}

pub fn add(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + b[(i, j)])
}

pub fn sub(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)])
}

pub fn matmul(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    a * b
}

/// Kronecker product with `a` on the slow (left) index.
pub fn kron(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

pub fn trace(a: MatRef<'_, C64>) -> C64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

pub fn max_abs(a: MatRef<'_, C64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

/// `max |A - A^†|` elementwise.
pub fn hermiticity_defect(a: MatRef<'_, C64>) -> f64 {
    if a.nrows() != a.ncols() {
        return f64::INFINITY;
    }
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..=j {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

pub fn commutator(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> CMat {
    sub((a * b).as_ref(), (b * a).as_ref())
}

/// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues and the
/// unitary whose columns are the eigenvectors.
pub fn eigh(a: MatRef<'_, C64>) -> Result<(Vec<f64>, CMat)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical {
            location: "hermitian eigendecomposition".into(),
            message: format!("{e:?}"),
        })?;
    let vals = evd.S().column_vector();
    let values: Vec<f64> = (0..a.nrows()).map(|i| vals[i].re).collect();
    Ok((values, evd.U().to_owned()))
}

pub fn eigvalsh(a: MatRef<'_, C64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical {
            location: "hermitian eigenvalues".into(),
            message: format!("{e:?}"),
        })
}

/// `exp(-i h t)` for Hermitian `h`.
pub fn expm_hermitian(h: MatRef<'_, C64>, t: f64) -> Result<CMat> {
    let (vals, u) = eigh(h)?;
    let n = vals.len();
    let phases: Vec<C64> = vals.iter().map(|e| C64::from_polar(1.0, -e * t)).collect();
    let ud = Mat::from_fn(n, n, |i, j| u[(i, j)] * phases[j]);
    Ok(ud.as_ref() * dagger(u.as_ref()).as_ref())
}

pub fn matvec(a: MatRef<'_, C64>, x: &[C64]) -> Vec<C64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum())
        .collect()
}

pub fn expectation(a: MatRef<'_, C64>, psi: &[C64]) -> C64 {
    let ax = matvec(a, psi);
    psi.iter().zip(&ax).map(|(p, q)| p.conj() * q).sum()
}
