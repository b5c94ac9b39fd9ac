//! Independent oracles: the closed-form pure-dephasing solution, exact
//! diagonalization of small thermofield-doubled star models, and the
//! thermal-vacuum occupation identity.

use std::collections::BTreeMap;

use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{SystemKind, SystemSpec};
use crate::linalg::{
    add, dagger, eigh, expm_hermitian, identity, kron, matmul, matvec, real, scale, CMat, C64, ONE,
    ZERO,
};
use crate::operators;
use crate::quad::{graded_breakpoints, integrate, integrate_complex, QuadOptions};
use crate::series::TimeSeries;
use crate::spectral::{SpectralDensity, Statistics, ThermalParameters};

const GRADING_LEVELS: usize = 40;

fn oscillatory_breakpoints(omega_max: f64, t: f64) -> Vec<f64> {
    let panels = ((omega_max * t.abs() / std::f64::consts::PI).ceil() as usize).clamp(16, 4000);
    graded_breakpoints(omega_max, GRADING_LEVELS, panels)
}

fn require_bosonic(thermal: &ThermalParameters) -> Result<()> {
    if thermal.statistics() != Statistics::Bosonic {
        return Err(Error::StatisticsMismatch(
            "pure-dephasing solution needs a bosonic bath".into(),
        ));
    }
    Ok(())
}

/// `coth(beta w / 2) = 1 + 2 n(w)`, identically one at zero temperature.
fn coth_half(thermal: &ThermalParameters, omega: f64) -> f64 {
    if thermal.is_zero_temperature() {
        1.0
    } else {
        1.0 + 2.0 * thermal.occupation(omega).unwrap_or(f64::INFINITY)
    }
}

/// Bath correlation `alpha_T(t) = ∫ J(w) [coth(beta w/2) cos(w t) - i sin(w t)] dw`.
pub fn bath_correlation(j: &SpectralDensity, thermal: &ThermalParameters, t: f64) -> Result<C64> {
    require_bosonic(thermal)?;
    let bp = oscillatory_breakpoints(j.omega_max(), t);
    integrate_complex(
        |w| {
            let jw = j.eval_unchecked(w);
            let (s, c) = (w * t).sin_cos();
            C64::new(jw * coth_half(thermal, w) * c, -jw * s)
        },
        &bp,
        QuadOptions::default(),
    )
}

/// `phi_t = ∫ J(w) coth(beta w/2) (1 - cos w t) / w^2 dw`.
pub fn dephasing_phi(j: &SpectralDensity, thermal: &ThermalParameters, t: f64) -> Result<f64> {
    require_bosonic(thermal)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("t = {t} must be non-negative")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let bp = oscillatory_breakpoints(j.omega_max(), t);
    integrate(
        |w| {
            let h = (0.5 * w * t).sin() / w;
            j.eval_unchecked(w) * coth_half(thermal, w) * 2.0 * h * h
        },
        &bp,
        QuadOptions::default(),
    )
}

/// `phi_t` on a grid, evaluated in parallel (order preserving).
pub fn dephasing_phi_grid(
    j: &SpectralDensity,
    thermal: &ThermalParameters,
    times: &[f64],
) -> Result<Vec<f64>> {
    times
        .par_iter()
        .map(|&t| dephasing_phi(j, thermal, t))
        .collect()
}

/// Bloch vector under pure dephasing: `sz = |a|^2 - |b|^2` and
/// `sx + i sy = 2 a* b e^{-4 phi} e^{i omega_s t}`.
pub fn dephasing_observables(a: C64, b: C64, omega_s: f64, t: f64, phi: f64) -> (f64, f64, f64) {
    let coh = 2.0 * a.conj() * b * (-4.0 * phi).exp() * C64::from_polar(1.0, omega_s * t);
    (coh.re, coh.im, a.norm_sqr() - b.norm_sqr())
}

/// Decay of the transverse Bloch component, `e^{-4 phi}`.
pub fn coherence_envelope(phi: f64) -> f64 {
    (-4.0 * phi).exp()
}

#[derive(Debug, Clone)]
pub struct DephasingSolution {
    pub times: Vec<f64>,
    pub phi: Vec<f64>,
    pub sx: Vec<f64>,
    pub sy: Vec<f64>,
    pub sz: Vec<f64>,
    pub a: C64,
    pub b: C64,
    pub omega_s: f64,
}

impl DephasingSolution {
    pub fn to_series(&self) -> Result<TimeSeries> {
        let mut ts = TimeSeries::new(self.times.clone())?;
        ts.push_real("sx", self.sx.clone())?;
        ts.push_real("sy", self.sy.clone())?;
        ts.push_real("sz", self.sz.clone())?;
        Ok(ts)
    }
}

pub fn exact_dephasing(
    j: &SpectralDensity,
    thermal: &ThermalParameters,
    system: &SystemSpec,
    times: &[f64],
) -> Result<DephasingSolution> {
    if system.kind != SystemKind::SpinDephasing {
        return Err(Error::Validation(
            "closed-form solution exists only for L = sigma_z".into(),
        ));
    }
    let phi = dephasing_phi_grid(j, thermal, times)?;
    let mut sx = Vec::with_capacity(times.len());
    let mut sy = Vec::with_capacity(times.len());
    let mut sz = Vec::with_capacity(times.len());
    for (&t, &p) in times.iter().zip(&phi) {
        let (x, y, z) = dephasing_observables(system.a, system.b, system.omega_s, t, p);
        sx.push(x);
        sy.push(y);
        sz.push(z);
    }
    Ok(DephasingSolution {
        times: times.to_vec(),
        phi,
        sx,
        sy,
        sz,
        a: system.a,
        b: system.b,
        omega_s: system.omega_s,
    })
}

/// Tensor product of single-site operators; absent sites carry identities.
#[derive(Debug, Clone)]
struct ProductOp {
    coeff: C64,
    factors: BTreeMap<usize, CMat>,
}

impl ProductOp {
    fn local(site: usize, op: CMat) -> Self {
        Self {
            coeff: ONE,
            factors: BTreeMap::from([(site, op)]),
        }
    }

    fn mul(&self, other: &ProductOp) -> ProductOp {
        let mut factors = self.factors.clone();
        for (s, b) in &other.factors {
            let f = match factors.remove(s) {
                Some(a) => matmul(a.as_ref(), b.as_ref()),
                None => b.clone(),
            };
            factors.insert(*s, f);
        }
        ProductOp {
            coeff: self.coeff * other.coeff,
            factors,
        }
    }

    fn dagger(&self) -> ProductOp {
        ProductOp {
            coeff: self.coeff.conj(),
            factors: self
                .factors
                .iter()
                .map(|(s, m)| (*s, dagger(m.as_ref())))
                .collect(),
        }
    }

    fn scaled(mut self, c: f64) -> ProductOp {
        self.coeff *= c;
        self
    }
}

/// Occupation-number basis over sites with the first site slowest.
struct Basis {
    dims: Vec<usize>,
    strides: Vec<usize>,
    dim: usize,
}

impl Basis {
    fn new(dims: Vec<usize>, cap: usize) -> Result<Self> {
        let mut dim = 1usize;
        for &d in &dims {
            dim = dim
                .checked_mul(d)
                .filter(|&x| x <= cap)
                .ok_or(Error::Size {
                    dim: dims.iter().fold(1usize, |a, &d| a.saturating_mul(d)),
                    cap,
                })?;
        }
        let mut strides = vec![1usize; dims.len()];
        for i in (0..dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        Ok(Self { dims, strides, dim })
    }

    fn sparse(&self, terms: &[ProductOp]) -> Result<SparseColMat<usize, C64>> {
        let mut triplets: Vec<(usize, usize, C64)> = Vec::new();
        for term in terms {
            let factors: Vec<(usize, &CMat)> = term.factors.iter().map(|(s, m)| (*s, m)).collect();
            for col in 0..self.dim {
                let mut frontier = vec![(col, term.coeff)];
                for &(site, op) in &factors {
                    let stride = self.strides[site];
                    let digit = (col / stride) % self.dims[site];
                    let mut next = Vec::with_capacity(frontier.len());
                    for &(row, amp) in &frontier {
                        for r in 0..self.dims[site] {
                            let m = op[(r, digit)];
                            if m != ZERO {
                                next.push((row + r * stride - digit * stride, amp * m));
                            }
                        }
                    }
                    frontier = next;
                    if frontier.is_empty() {
                        break;
                    }
                }
                for (row, amp) in frontier {
                    triplets.push((row, col, amp));
                }
            }
        }
        triplets.sort_by_key(|&(r, c, _)| (c, r));
        let mut merged: Vec<Triplet<usize, usize, C64>> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            match merged.last_mut() {
                Some(last) if last.row == r && last.col == c => last.val += v,
                _ => merged.push(Triplet::new(r, c, v)),
            }
        }
        merged.retain(|t| t.val != ZERO);
        SparseColMat::try_new_from_triplets(self.dim, self.dim, &merged).map_err(|e| {
            Error::Numerical {
                location: "sparse Hamiltonian assembly".into(),
                message: format!("{e:?}"),
            }
        })
    }
}

/// Finite star environment whose thermofield double is diagonalized exactly.
#[derive(Debug, Clone)]
pub struct StarModel {
    pub frequencies: Vec<f64>,
    /// Physical couplings `g_k`.
    pub couplings: Vec<f64>,
    pub thermal: ThermalParameters,
    pub system: SystemSpec,
    /// Highest occupation per bosonic mode.
    pub n_max: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct EdOptions {
    pub dim_cap: usize,
    /// Dimensions up to this size use a dense eigendecomposition.
    pub dense_limit: usize,
    /// Per-substep Krylov error target.
    pub krylov_tol: f64,
    pub krylov_dim: usize,
}

impl Default for EdOptions {
    fn default() -> Self {
        Self {
            dim_cap: 200_000,
            dense_limit: 2000,
            krylov_tol: 1e-12,
            krylov_dim: 40,
        }
    }
}

struct StarProblem {
    basis: Basis,
    hamiltonian: Vec<ProductOp>,
    observables: Vec<(String, ProductOp)>,
    initial: Vec<C64>,
}

fn boson_star(star: &StarModel, cap: usize) -> Result<StarProblem> {
    let k = star.frequencies.len();
    let doubled = !star.thermal.is_zero_temperature();
    let d = star.n_max + 1;
    let mut dims = vec![2];
    dims.extend(std::iter::repeat_n(d, if doubled { 2 * k } else { k }));
    let basis = Basis::new(dims, cap)?;
    let l = star.system.coupling_operator();
    let ld = dagger(l.as_ref());
    let mut h = vec![ProductOp::local(0, star.system.hamiltonian())];
    for (i, (&w, &g)) in star.frequencies.iter().zip(&star.couplings).enumerate() {
        let (u, v) = star.thermal.bogoliubov(w)?;
        let s1 = 1 + i;
        let a = ProductOp::local(s1, operators::annihilation(d));
        h.push(ProductOp::local(s1, operators::number(d)).scaled(w));
        let sys_l = ProductOp::local(0, l.clone());
        let sys_ld = ProductOp::local(0, ld.clone());
        h.push(sys_ld.mul(&a).scaled(g * u));
        h.push(sys_l.mul(&a.dagger()).scaled(g * u));
        if doubled {
            let s2 = 1 + k + i;
            let c = ProductOp::local(s2, operators::annihilation(d));
            h.push(ProductOp::local(s2, operators::number(d)).scaled(-w));
            h.push(sys_l.mul(&c).scaled(g * v));
            h.push(sys_ld.mul(&c.dagger()).scaled(g * v));
        }
    }
    let observables = vec![
        ("sx".to_string(), ProductOp::local(0, operators::sigma_x())),
        ("sy".to_string(), ProductOp::local(0, operators::sigma_y())),
        ("sz".to_string(), ProductOp::local(0, operators::sigma_z())),
    ];
    let mut initial = vec![ZERO; basis.dim];
    let psi = star.system.initial_state();
    initial[0] = psi[0];
    initial[basis.strides[0]] = psi[1];
    Ok(StarProblem {
        basis,
        hamiltonian: h,
        observables,
        initial,
    })
}

/// Jordan–Wigner annihilator of mode `j` among two-level sites.
fn jw_annihilator(j: usize) -> ProductOp {
    let mut factors = BTreeMap::new();
    for s in 0..j {
        factors.insert(s, operators::fermion_parity());
    }
    factors.insert(j, operators::fermion_annihilation());
    ProductOp {
        coeff: ONE,
        factors,
    }
}

fn fermion_star(star: &StarModel, cap: usize) -> Result<StarProblem> {
    let k = star.frequencies.len();
    let doubled = !star.thermal.is_zero_temperature();
    let n_modes = 2 + if doubled { 2 * k } else { k };
    let basis = Basis::new(vec![2; n_modes], cap)?;
    let sys = &star.system;
    let d_up = jw_annihilator(0);
    let d_dn = jw_annihilator(1);
    let n_up = d_up.dagger().mul(&d_up);
    let n_dn = d_dn.dagger().mul(&d_dn);
    let mut h = vec![
        n_up.clone().scaled(sys.v),
        n_dn.clone().scaled(sys.v),
        n_up.mul(&n_dn).scaled(sys.u),
    ];
    let t = sys.t_hyb;
    for (i, (&w, &g)) in star.frequencies.iter().zip(&star.couplings).enumerate() {
        let (u, v) = star.thermal.bogoliubov(w)?;
        let a = jw_annihilator(2 + i);
        h.push(a.dagger().mul(&a).scaled(w));
        for d in [&d_up, &d_dn] {
            // L^† a + a^† L with L = -t sum_s d_s
            h.push(d.dagger().mul(&a).scaled(-t * g * u));
            h.push(a.dagger().mul(d).scaled(-t * g * u));
        }
        if doubled {
            let c = jw_annihilator(2 + k + i);
            h.push(c.dagger().mul(&c).scaled(-w));
            for d in [&d_up, &d_dn] {
                // L c + c^† L^†
                h.push(d.mul(&c).scaled(-t * g * v));
                h.push(c.dagger().mul(&d.dagger()).scaled(-t * g * v));
            }
        }
    }
    let observables = vec![("n_up".to_string(), n_up), ("n_down".to_string(), n_dn)];
    let mut initial = vec![ZERO; basis.dim];
    let idx = sys.initial_dot.basis_index();
    // dot index 2 n_up + n_down maps onto the two leading sites
    initial[(idx >> 1) * basis.strides[0] + (idx & 1) * basis.strides[1]] = ONE;
    Ok(StarProblem {
        basis,
        hamiltonian: h,
        observables,
        initial,
    })
}

fn spmv(h: &SparseColMat<usize, C64>, x: &[C64]) -> Vec<C64> {
    let col = Mat::from_fn(x.len(), 1, |i, _| x[i]);
    let y = h.as_ref() * col.as_ref();
    (0..x.len()).map(|i| y[(i, 0)]).collect()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Advances `psi` by `exp(-i H tau)` with Lanczos subspaces, splitting the
/// interval whenever the a-posteriori error estimate exceeds the target.
fn krylov_propagate(
    h: &SparseColMat<usize, C64>,
    psi: &[C64],
    tau: f64,
    opts: &EdOptions,
) -> Result<Vec<C64>> {
    let mut v = psi.to_vec();
    let mut remaining = tau;
    while remaining > 0.0 {
        let beta0 = norm(&v);
        let mut basis: Vec<Vec<C64>> = vec![v.iter().map(|x| x / beta0).collect()];
        let mut alpha = Vec::new();
        let mut beta = Vec::new();
        let mut exhausted = false;
        for j in 0..opts.krylov_dim {
            let mut w = spmv(h, &basis[j]);
            let a = dot(&basis[j], &w).re;
            // full reorthogonalization, twice
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &w);
                    w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
                }
            }
            alpha.push(a);
            let b = norm(&w);
            beta.push(b);
            if b < 1e-13 * beta0.max(1.0) * (1.0 + a.abs()) {
                exhausted = true;
                break;
            }
            basis.push(w.iter().map(|x| x / b).collect());
        }
        let m = alpha.len();
        let t = Mat::from_fn(m, m, |i, j| {
            if i == j {
                real(alpha[i])
            } else if i + 1 == j {
                real(beta[i])
            } else if j + 1 == i {
                real(beta[j])
            } else {
                ZERO
            }
        });
        let (evals, evecs) = eigh(t.as_ref())?;
        let propagate = |s: f64| -> Vec<C64> {
            (0..m)
                .map(|i| {
                    (0..m)
                        .map(|k| {
                            evecs[(i, k)]
                                * C64::from_polar(1.0, -evals[k] * s)
                                * evecs[(0, k)].conj()
                        })
                        .sum()
                })
                .collect()
        };
        let mut step = remaining;
        let coeffs = loop {
            let c = propagate(step);
            let err = if exhausted {
                0.0
            } else {
                beta0 * beta[m - 1] * c[m - 1].norm()
            };
            if err <= opts.krylov_tol * step / tau.max(step) || step < 1e-12 * tau {
                break c;
            }
            step *= 0.5;
        };
        let mut next = vec![ZERO; v.len()];
        for (c, q) in coeffs.iter().zip(&basis) {
            let c = c * beta0;
            next.iter_mut().zip(q).for_each(|(x, y)| *x += c * y);
        }
        v = next;
        remaining -= step;
        if remaining < 1e-14 * tau {
            break;
        }
    }
    Ok(v)
}

fn expectation_sparse(op: &SparseColMat<usize, C64>, psi: &[C64]) -> f64 {
    dot(psi, &spmv(op, psi)).re
}

/// Exact evolution of a thermofield-doubled star model from the system state
/// times the auxiliary vacuum. Spin systems report `sx, sy, sz`; the dot
/// reports `n_up, n_down`.
pub fn exact_diagonalization(
    star: &StarModel,
    times: &[f64],
    opts: &EdOptions,
) -> Result<TimeSeries> {
    if star.frequencies.len() != star.couplings.len() {
        return Err(Error::DimensionMismatch {
            expected: star.frequencies.len(),
            found: star.couplings.len(),
        });
    }
    if times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::Domain("times must be non-negative".into()));
    }
    let problem = match (star.system.kind, star.thermal.statistics()) {
        (SystemKind::AndersonDot, Statistics::Fermionic) => fermion_star(star, opts.dim_cap)?,
        (SystemKind::AndersonDot, _) | (_, Statistics::Fermionic) => {
            return Err(Error::StatisticsMismatch(
                "dot needs a fermionic bath and a spin a bosonic one".into(),
            ))
        }
        _ => {
            if star.n_max == 0 {
                return Err(Error::config("mps.n_max", "must be at least 1"));
            }
            boson_star(star, opts.dim_cap)?
        }
    };
    let basis = &problem.basis;
    let h = basis.sparse(&problem.hamiltonian)?;
    let obs: Vec<SparseColMat<usize, C64>> = problem
        .observables
        .iter()
        .map(|(_, o)| basis.sparse(std::slice::from_ref(o)))
        .collect::<Result<_>>()?;

    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(times.len()); obs.len()];
    if basis.dim <= opts.dense_limit {
        let dense = h.to_dense();
        let (evals, u) = eigh(dense.as_ref())?;
        let ud = dagger(u.as_ref());
        let c0 = matvec(ud.as_ref(), &problem.initial);
        for &t in times {
            let ct: Vec<C64> = c0
                .iter()
                .zip(&evals)
                .map(|(c, e)| c * C64::from_polar(1.0, -e * t))
                .collect();
            let psi = matvec(u.as_ref(), &ct);
            for (k, o) in obs.iter().enumerate() {
                columns[k].push(expectation_sparse(o, &psi));
            }
        }
    } else {
        let mut psi = problem.initial.clone();
        let mut now = 0.0;
        for &t in times {
            if t > now {
                psi = krylov_propagate(&h, &psi, t - now, opts)?;
                now = t;
            }
            for (k, o) in obs.iter().enumerate() {
                columns[k].push(expectation_sparse(o, &psi));
            }
        }
        let drift = (norm(&psi) - 1.0).abs();
        if drift > 1e-9 {
            return Err(Error::Numerical {
                location: "Krylov propagation".into(),
                message: format!("norm drift {drift:e}"),
            });
        }
    }
    let mut ts = TimeSeries::new(times.to_vec())?;
    for ((name, _), col) in problem.observables.iter().zip(columns) {
        ts.push_real(name.clone(), col)?;
    }
    Ok(ts)
}

/// Physical-mode occupation `<b_k^† b_k>(t)` for a decoupled doubled mode pair,
/// with `b_k = u a_{1k} + v a_{2k}^†`. One row per mode, one entry per time.
pub fn thermal_occupation_check(
    frequencies: &[f64],
    thermal: &ThermalParameters,
    times: &[f64],
    n_max: usize,
) -> Result<Vec<Vec<f64>>> {
    frequencies
        .iter()
        .map(|&w| {
            let (u, v) = thermal.bogoliubov(w)?;
            let (a1, a2, n) = match thermal.statistics() {
                Statistics::Bosonic => {
                    let d = n_max.max(1) + 1;
                    let id = identity(d);
                    let a = operators::annihilation(d);
                    (
                        kron(a.as_ref(), id.as_ref()),
                        kron(id.as_ref(), a.as_ref()),
                        operators::number(d),
                    )
                }
                Statistics::Fermionic => {
                    let a = operators::fermion_annihilation();
                    let p = operators::fermion_parity();
                    (
                        kron(a.as_ref(), identity(2).as_ref()),
                        kron(p.as_ref(), a.as_ref()),
                        operators::number(2),
                    )
                }
            };
            let d = n.nrows();
            let h = add(
                kron(scale(n.as_ref(), real(w)).as_ref(), identity(d).as_ref()).as_ref(),
                kron(identity(d).as_ref(), scale(n.as_ref(), real(-w)).as_ref()).as_ref(),
            );
            let b = add(
                scale(a1.as_ref(), real(u)).as_ref(),
                scale(dagger(a2.as_ref()).as_ref(), real(v)).as_ref(),
            );
            let occ = matmul(dagger(b.as_ref()).as_ref(), b.as_ref());
            let mut vac = vec![ZERO; d * d];
            vac[0] = ONE;
            times
                .iter()
                .map(|&t| {
                    let psi = matvec(expm_hermitian(h.as_ref(), t)?.as_ref(), &vac);
                    Ok(crate::linalg::expectation(occ.as_ref(), &psi).re)
                })
                .collect()
        })
        .collect()
}
