//! Local operators. Spin basis: index 0 is the `sigma_z = +1` state.
//! Occupation bases are ordered by occupation number. The dot site is
//! `|n_up, n_down>` with index `2 * n_up + n_down`.

use crate::linalg::{dagger, diag_real, from_real_rows, identity, kron, CMat, C64};

pub fn sigma_x() -> CMat {
    from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
}

pub fn sigma_y() -> CMat {
    let mut m = faer::Mat::zeros(2, 2);
    m[(0, 1)] = C64::new(0.0, -1.0);
    m[(1, 0)] = C64::new(0.0, 1.0);
    m
}

pub fn sigma_z() -> CMat {
    diag_real(&[1.0, -1.0])
}

/// Truncated bosonic annihilation operator on `dim = n_max + 1` levels.
pub fn annihilation(dim: usize) -> CMat {
    faer::Mat::from_fn(dim, dim, |i, j| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

pub fn creation(dim: usize) -> CMat {
    dagger(annihilation(dim).as_ref())
}

pub fn number(dim: usize) -> CMat {
    let v: Vec<f64> = (0..dim).map(|n| n as f64).collect();
    diag_real(&v)
}

/// Projector on the highest retained Fock level.
pub fn top_level_projector(dim: usize) -> CMat {
    let mut v = vec![0.0; dim];
    v[dim - 1] = 1.0;
    diag_real(&v)
}

/// Single fermionic mode annihilator on `{|0>, |1>}`.
pub fn fermion_annihilation() -> CMat {
    annihilation(2)
}

/// `(-1)^n` on a single fermionic mode.
pub fn fermion_parity() -> CMat {
    diag_real(&[1.0, -1.0])
}

/// Spin-up annihilator on the dot; spin-up precedes spin-down in the
/// fermionic ordering.
pub fn dot_annihilation_up() -> CMat {
    kron(fermion_annihilation().as_ref(), identity(2).as_ref())
}

/// Spin-down annihilator on the dot, carrying the parity string of spin-up.
pub fn dot_annihilation_down() -> CMat {
    kron(fermion_parity().as_ref(), fermion_annihilation().as_ref())
}

pub fn dot_number_up() -> CMat {
    kron(number(2).as_ref(), identity(2).as_ref())
}

pub fn dot_number_down() -> CMat {
    kron(identity(2).as_ref(), number(2).as_ref())
}

pub fn dot_parity() -> CMat {
    kron(fermion_parity().as_ref(), fermion_parity().as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{add, matmul, max_abs, sub};

    #[test]
    fn dot_operators_anticommute() {
        let up = dot_annihilation_up();
        let dn = dot_annihilation_down();
        let updag = dagger(up.as_ref());
        let anti = add(
            matmul(up.as_ref(), dn.as_ref()).as_ref(),
            matmul(dn.as_ref(), up.as_ref()).as_ref(),
        );
        assert!(max_abs(anti.as_ref()) < 1e-15);
        let anti = add(
            matmul(updag.as_ref(), dn.as_ref()).as_ref(),
            matmul(dn.as_ref(), updag.as_ref()).as_ref(),
        );
        assert!(max_abs(anti.as_ref()) < 1e-15);
        let canon = add(
            matmul(up.as_ref(), updag.as_ref()).as_ref(),
            matmul(updag.as_ref(), up.as_ref()).as_ref(),
        );
        assert!(max_abs(sub(canon.as_ref(), identity(4).as_ref()).as_ref()) < 1e-15);
        let n = matmul(updag.as_ref(), up.as_ref());
        assert!(max_abs(sub(n.as_ref(), dot_number_up().as_ref()).as_ref()) < 1e-15);
    }

    #[test]
    fn truncated_boson_commutator_is_identity_below_cutoff() {
        let a = annihilation(5);
        let c = sub(
            matmul(a.as_ref(), creation(5).as_ref()).as_ref(),
            matmul(creation(5).as_ref(), a.as_ref()).as_ref(),
        );
        for i in 0..4 {
            assert!((c[(i, i)].re - 1.0).abs() < 1e-14);
        }
    }
}
