//! Second-order time-convolutionless master equation with finite-time memory
//! kernels, integrated in the Schrödinger picture.
//!
//! With `A1(t) = ∫_0^t du α1(u) L(-u)` and `A2(t) = ∫_0^t du α2(u) L^†(-u)`,
//! where `X(s) = e^{i H_S s} X e^{-i H_S s}`, the generator reads
//!
//! `dρ/dt = -i[H_S, ρ] + [L^†, ρ A2^†] + [A2 ρ, L] + [A1 ρ, L^†] + [L, ρ A1^†]`.

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::SystemSpec;
use crate::linalg::{
    add, dagger, eigh, eigvalsh, hermiticity_defect, matmul, scale, sub, trace, CMat, C64, I, ZERO,
};
use crate::operators;
use crate::quad::{graded_breakpoints, integrate_complex, QuadOptions};
use crate::series::TimeSeries;
use crate::spectral::{SpectralDensity, ThermalParameters};
use crate::tensornet::step_count;

/// Bath kernels on a uniform grid `0, h, 2h, ...`.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub spacing: f64,
    pub times: Vec<f64>,
    /// `α1(t) = ∫ J(w) u(w)^2 e^{-iwt} dw`
    pub alpha1: Vec<C64>,
    /// `α2(t) = ∫ J(w) v(w)^2 e^{+iwt} dw`
    pub alpha2: Vec<C64>,
}

impl KernelTable {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Evaluates both kernels by adaptive quadrature at every grid point; `u^2`
/// and `v^2` are `1+n, n` for bosons and `1-f, f` for fermions.
pub fn compute_kernels(
    j: &SpectralDensity,
    thermal: &ThermalParameters,
    t_final: f64,
    spacing: f64,
) -> Result<KernelTable> {
    let n = step_count(t_final, spacing)?;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * spacing).collect();
    let omega_max = j.omega_max();
    let weights = |w: f64| -> (f64, f64) {
        match thermal.bogoliubov(w) {
            Ok((u, v)) => (u * u, v * v),
            Err(_) => (f64::INFINITY, f64::INFINITY),
        }
    };
    let values: Vec<(C64, C64)> = times
        .par_iter()
        .map(|&t| -> Result<(C64, C64)> {
            let panels = ((omega_max * t / std::f64::consts::PI).ceil() as usize).clamp(16, 4000);
            let bp = graded_breakpoints(omega_max, 40, panels);
            let opts = QuadOptions::default();
            let a1 = integrate_complex(
                |w| {
                    let (u2, _) = weights(w);
                    j.eval_unchecked(w) * u2 * C64::from_polar(1.0, -w * t)
                },
                &bp,
                opts,
            )?;
            let a2 = if thermal.is_zero_temperature() {
                ZERO
            } else {
                integrate_complex(
                    |w| {
                        let (_, v2) = weights(w);
                        j.eval_unchecked(w) * v2 * C64::from_polar(1.0, w * t)
                    },
                    &bp,
                    opts,
                )?
            };
            Ok((a1, a2))
        })
        .collect::<Result<_>>()?;
    let (alpha1, alpha2) = values.into_iter().unzip();
    Ok(KernelTable {
        spacing,
        times,
        alpha1,
        alpha2,
    })
}

/// Cumulative integral `∫_0^{t_k} f` on a uniform grid with the four-point
/// cubic rule (one-sided stencils at the ends); falls back to the trapezoid
/// rule on grids shorter than four points.
pub fn cumulative_integral(f: &[C64], h: f64) -> Vec<C64> {
    let n = f.len();
    let mut out = vec![ZERO; n];
    if n < 4 {
        for k in 1..n {
            out[k] = out[k - 1] + 0.5 * h * (f[k - 1] + f[k]);
        }
        return out;
    }
    let c = h / 24.0;
    for k in 1..n {
        let i = k - 1;
        let piece = if i == 0 {
            c * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3])
        } else if i + 2 >= n {
            c * (f[i - 2] - 5.0 * f[i - 1] + 19.0 * f[i] + 9.0 * f[i + 1])
        } else {
            c * (-f[i - 1] + 13.0 * f[i] + 13.0 * f[i + 1] - f[i + 2])
        };
        out[k] = out[k - 1] + piece;
    }
    out
}

/// `A(t_k)` on the kernel grid: `A_jk = X̃_jk ∫_0^t α(u) e^{-i(E_j - E_k)u} du`
/// in the eigenbasis of `H_S`, rotated back.
fn memory_operators(
    energies: &[f64],
    basis: &CMat,
    x: &CMat,
    alpha: &[C64],
    spacing: f64,
) -> Vec<CMat> {
    let d = energies.len();
    let xt = matmul(
        matmul(dagger(basis.as_ref()).as_ref(), x.as_ref()).as_ref(),
        basis.as_ref(),
    );
    let mut integrals = vec![vec![ZERO; alpha.len()]; d * d];
    for j in 0..d {
        for k in 0..d {
            if xt[(j, k)] == ZERO {
                continue;
            }
            let w = energies[j] - energies[k];
            let g: Vec<C64> = alpha
                .iter()
                .enumerate()
                .map(|(i, a)| a * C64::from_polar(1.0, -w * i as f64 * spacing))
                .collect();
            integrals[j * d + k] = cumulative_integral(&g, spacing);
        }
    }
    let ud = dagger(basis.as_ref());
    (0..alpha.len())
        .map(|i| {
            let m = CMat::from_fn(d, d, |j, k| xt[(j, k)] * integrals[j * d + k][i]);
            matmul(matmul(basis.as_ref(), m.as_ref()).as_ref(), ud.as_ref())
        })
        .collect()
}

fn comm(a: &CMat, b: &CMat) -> CMat {
    sub(
        matmul(a.as_ref(), b.as_ref()).as_ref(),
        matmul(b.as_ref(), a.as_ref()).as_ref(),
    )
}

struct Generator<'a> {
    h: &'a CMat,
    l: &'a CMat,
    ld: CMat,
    a1: Vec<CMat>,
    a2: Vec<CMat>,
}

impl Generator<'_> {
    /// Right-hand side at kernel grid index `k`.
    fn apply(&self, k: usize, rho: &CMat) -> CMat {
        let a1 = &self.a1[k];
        let a2 = &self.a2[k];
        let mut out = scale(comm(self.h, rho).as_ref(), -I);
        let terms = [
            comm(
                &self.ld,
                &matmul(rho.as_ref(), dagger(a2.as_ref()).as_ref()),
            ),
            comm(&matmul(a2.as_ref(), rho.as_ref()), self.l),
            comm(&matmul(a1.as_ref(), rho.as_ref()), &self.ld),
            comm(self.l, &matmul(rho.as_ref(), dagger(a1.as_ref()).as_ref())),
        ];
        for t in &terms {
            out = add(out.as_ref(), t.as_ref());
        }
        out
    }
}

fn axpy(rho: &CMat, k: &CMat, h: f64) -> CMat {
    add(rho.as_ref(), scale(k.as_ref(), C64::new(h, 0.0)).as_ref())
}

#[derive(Debug, Clone)]
pub struct MeOutput {
    /// Observables, with diagnostics (`trace_drift`, `min_eigenvalue`,
    /// `hermiticity_defect`).
    pub series: TimeSeries,
    pub positivity_violations: usize,
}

/// Positivity tolerance below which negative eigenvalues are reported.
pub const POSITIVITY_TOLERANCE: f64 = 1e-6;
/// Largest accepted trace drift.
pub const TRACE_TOLERANCE: f64 = 1e-6;

/// Fixed-step RK4 integration. The kernel table must have spacing `dt / 2`
/// and cover `[0, t_final]`, so every stage time lies on the grid.
#[allow(clippy::too_many_arguments)]
pub fn integrate_me(
    h_s: &CMat,
    l: &CMat,
    kernels: &KernelTable,
    rho0: &CMat,
    dt: f64,
    t_final: f64,
    measure_stride: usize,
    observables: &[(String, CMat)],
) -> Result<MeOutput> {
    let n_steps = step_count(t_final, dt)?;
    if measure_stride == 0 {
        return Err(Error::config("evolve.measure_stride", "must be at least 1"));
    }
    if (kernels.spacing - 0.5 * dt).abs() > 1e-12 * dt || kernels.len() < 2 * n_steps + 1 {
        return Err(Error::Validation(format!(
            "kernel grid (spacing {}, {} points) does not cover t_final = {t_final} at half steps of dt = {dt}",
            kernels.spacing,
            kernels.len()
        )));
    }
    let d = h_s.nrows();
    for (name, m) in [("H_S", h_s), ("L", l), ("rho0", rho0)] {
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: m.nrows(),
            })
            .map_err(|e| e.context(name.to_string()));
        }
    }
    let (energies, basis) = eigh(h_s.as_ref())?;
    let ld = dagger(l.as_ref());
    let gen = Generator {
        h: h_s,
        l,
        a1: memory_operators(&energies, &basis, l, &kernels.alpha1, kernels.spacing),
        a2: memory_operators(&energies, &basis, &ld, &kernels.alpha2, kernels.spacing),
        ld,
    };

    let mut times = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); observables.len()];
    let mut drift = Vec::new();
    let mut min_eig = Vec::new();
    let mut herm = Vec::new();
    let mut violations = 0usize;
    let mut record = |rho: &CMat, t: f64| -> Result<()> {
        times.push(t);
        for (k, (_, o)) in observables.iter().enumerate() {
            values[k].push(trace(matmul(o.as_ref(), rho.as_ref()).as_ref()).re);
        }
        let tr = trace(rho.as_ref());
        let dev = (tr - C64::new(1.0, 0.0)).norm();
        if dev > TRACE_TOLERANCE {
            return Err(Error::TraceDrift {
                drift: dev,
                time: t,
            });
        }
        let sym = scale(
            add(rho.as_ref(), dagger(rho.as_ref()).as_ref()).as_ref(),
            C64::new(0.5, 0.0),
        );
        let lowest = eigvalsh(sym.as_ref())?[0];
        if lowest < -POSITIVITY_TOLERANCE {
            if violations == 0 {
                warn!("t = {t}: density matrix eigenvalue {lowest:.3e} below -{POSITIVITY_TOLERANCE:e}");
            }
            violations += 1;
        }
        drift.push(dev);
        min_eig.push(lowest);
        herm.push(hermiticity_defect(rho.as_ref()));
        Ok(())
    };

    let mut rho = rho0.clone();
    record(&rho, 0.0)?;
    for step in 0..n_steps {
        let k = 2 * step;
        let k1 = gen.apply(k, &rho);
        let k2 = gen.apply(k + 1, &axpy(&rho, &k1, 0.5 * dt));
        let k3 = gen.apply(k + 1, &axpy(&rho, &k2, 0.5 * dt));
        let k4 = gen.apply(k + 2, &axpy(&rho, &k3, dt));
        let mut incr = add(k1.as_ref(), k4.as_ref());
        incr = add(
            incr.as_ref(),
            scale(add(k2.as_ref(), k3.as_ref()).as_ref(), C64::new(2.0, 0.0)).as_ref(),
        );
        rho = axpy(&rho, &incr, dt / 6.0);
        let done = step + 1;
        if done % measure_stride == 0 || done == n_steps {
            record(&rho, done as f64 * dt)?;
        }
    }

    let mut series = TimeSeries::new(times.clone())?;
    for ((name, _), v) in observables.iter().zip(values) {
        series.push_real(name.clone(), v)?;
    }
    let mut diag = TimeSeries::new(times)?;
    diag.push_real("trace_drift", drift)?;
    diag.push_real("min_eigenvalue", min_eig)?;
    diag.push_real("hermiticity_defect", herm)?;
    series.diagnostics = Some(Box::new(diag));
    Ok(MeOutput {
        series,
        positivity_violations: violations,
    })
}

fn pure_state(psi: &[C64]) -> CMat {
    CMat::from_fn(psi.len(), psi.len(), |i, j| psi[i] * psi[j].conj())
}

/// Spin observables `sx, sy, sz`.
pub fn spin_observables() -> Vec<(String, CMat)> {
    vec![
        ("sx".into(), operators::sigma_x()),
        ("sy".into(), operators::sigma_y()),
        ("sz".into(), operators::sigma_z()),
    ]
}

/// Dot observables `n_up, n_down`.
pub fn dot_observables() -> Vec<(String, CMat)> {
    vec![
        ("n_up".into(), operators::dot_number_up()),
        ("n_down".into(), operators::dot_number_down()),
    ]
}

/// Master-equation run for any system spec from its pure initial state.
pub fn evolve_system(
    system: &SystemSpec,
    kernels: &KernelTable,
    dt: f64,
    t_final: f64,
    measure_stride: usize,
) -> Result<MeOutput> {
    let obs = if system.is_spin() {
        spin_observables()
    } else {
        dot_observables()
    };
    integrate_me(
        &system.hamiltonian(),
        &system.coupling_operator(),
        kernels,
        &pure_state(&system.initial_state()),
        dt,
        t_final,
        measure_stride,
        &obs,
    )
}

/// Anderson dot: `H_S = V (n_up + n_down) + U n_up n_down`, `L = -t Σ_σ d_σ`.
#[allow(clippy::too_many_arguments)]
pub fn anderson_me(
    u: f64,
    v: f64,
    t_hyb: f64,
    kernels: &KernelTable,
    rho0: &CMat,
    dt: f64,
    t_final: f64,
    measure_stride: usize,
) -> Result<MeOutput> {
    let sys = SystemSpec::anderson(u, v, t_hyb, Default::default());
    integrate_me(
        &sys.hamiltonian(),
        &sys.coupling_operator(),
        kernels,
        rho0,
        dt,
        t_final,
        measure_stride,
        &dot_observables(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{DotState, SystemKind};
    use crate::linalg::real;
    use crate::reference::{bath_correlation, dephasing_phi};
    use crate::spectral::Statistics;

    fn ohmic() -> SpectralDensity {
        SpectralDensity::ohmic(0.1, 1.0, 1.0).unwrap()
    }

    #[test]
    fn cumulative_rule_is_fourth_order() {
        let err = |n: usize| {
            let h = 2.0 / n as f64;
            let f: Vec<C64> = (0..=n)
                .map(|k| C64::from_polar(1.0, 3.0 * k as f64 * h))
                .collect();
            let c = cumulative_integral(&f, h);
            (0..=n)
                .map(|k| {
                    let t = k as f64 * h;
                    let exact = (C64::from_polar(1.0, 3.0 * t) - 1.0) / C64::new(0.0, 3.0);
                    (c[k] - exact).norm()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(40) / err(80);
        assert!(ratio > 14.0, "ratio {ratio}");
    }

    #[test]
    fn zero_temperature_kernels() {
        let th = ThermalParameters::zero_temperature(Statistics::Bosonic);
        let j = SpectralDensity::ohmic_with_support(0.1, 1.0, 1.0, 60.0, 1e-20).unwrap();
        let k = compute_kernels(&j, &th, 1.0, 0.5).unwrap();
        assert!(k.alpha2.iter().all(|a| *a == ZERO));
        assert!((k.alpha1[0].re - 0.1).abs() < 1e-12 && k.alpha1[0].im.abs() < 1e-14);
    }

    #[test]
    fn kernels_sum_to_bath_correlation() {
        for beta in [1.0, 5.0] {
            let th = ThermalParameters::new(beta, Statistics::Bosonic).unwrap();
            let k = compute_kernels(&ohmic(), &th, 10.0, 2.5).unwrap();
            for (i, &t) in k.times.iter().enumerate() {
                let at = bath_correlation(&ohmic(), &th, t).unwrap();
                assert!((k.alpha1[i] + k.alpha2[i] - at).norm() < 1e-8);
            }
            assert!(k.alpha1[0].re > 0.0 && k.alpha1[0].im.abs() < 1e-12);
        }
    }

    #[test]
    fn free_precession_without_coupling() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let sys = SystemSpec::spin(SystemKind::SpinTransverse, 0.1, real(h), real(h)).unwrap();
        let n = 401;
        let k = KernelTable {
            spacing: 0.05,
            times: (0..n).map(|i| i as f64 * 0.05).collect(),
            alpha1: vec![ZERO; n],
            alpha2: vec![ZERO; n],
        };
        let out = evolve_system(&sys, &k, 0.1, 20.0, 10).unwrap();
        for (t, x) in out
            .series
            .times()
            .iter()
            .zip(out.series.real("sx").unwrap())
        {
            assert!((x - (0.1 * t).cos()).abs() < 1e-8);
        }
    }

    #[test]
    fn weak_dephasing_follows_exact_envelope_slope() {
        // Second order in the coupling reproduces the exact pure-dephasing
        // decay to first order in eta.
        let eta = 0.001;
        let j = SpectralDensity::ohmic(eta, 1.0, 1.0).unwrap();
        let th = ThermalParameters::new(5.0, Statistics::Bosonic).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let sys = SystemSpec::spin(SystemKind::SpinDephasing, 0.3, real(h), real(h)).unwrap();
        let k = compute_kernels(&j, &th, 10.0, 0.025).unwrap();
        let out = evolve_system(&sys, &k, 0.05, 10.0, 20).unwrap();
        let sx = out.series.real("sx").unwrap();
        let sy = out.series.real("sy").unwrap();
        for (i, &t) in out.series.times().iter().enumerate().skip(1) {
            let envelope = (sx[i] * sx[i] + sy[i] * sy[i]).sqrt();
            let loss = 1.0 - envelope;
            let exact = 1.0 - (-4.0 * dephasing_phi(&j, &th, t).unwrap()).exp();
            assert!(
                (loss - exact).abs() <= 0.05 * exact,
                "t={t}: {loss} vs {exact}"
            );
        }
        let sz = out.series.real("sz").unwrap();
        assert!(sz.iter().all(|z| z.abs() < 1e-12));
    }

    #[test]
    fn invariants_hold_for_transverse_coupling() {
        let j = SpectralDensity::ohmic(0.01, 1.0, 1.0).unwrap();
        let th = ThermalParameters::new(10.0, Statistics::Bosonic).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let sys = SystemSpec::spin(SystemKind::SpinTransverse, 0.1, real(h), real(h)).unwrap();
        let k = compute_kernels(&j, &th, 20.0, 0.05).unwrap();
        let out = evolve_system(&sys, &k, 0.1, 20.0, 10).unwrap();
        let diag = out.series.diagnostics.unwrap();
        assert!(diag.real("trace_drift").unwrap().iter().all(|d| *d <= 1e-8));
        assert!(diag
            .real("hermiticity_defect")
            .unwrap()
            .iter()
            .all(|d| *d <= 1e-10));
    }

    #[test]
    fn dot_without_hybridization_keeps_populations() {
        let th = ThermalParameters::new(1.0, Statistics::Fermionic).unwrap();
        let j = SpectralDensity::ohmic(0.1, 0.5, 15.0).unwrap();
        let k = compute_kernels(&j, &th, 5.0, 0.05).unwrap();
        let rho0 = pure_state(&SystemSpec::anderson(0.2, -0.1, 0.0, DotState::Up).initial_state());
        let out = anderson_me(0.2, -0.1, 0.0, &k, &rho0, 0.1, 5.0, 10).unwrap();
        assert!(out
            .series
            .real("n_up")
            .unwrap()
            .iter()
            .all(|n| (n - 1.0).abs() < 1e-14));
        assert!(out
            .series
            .real("n_down")
            .unwrap()
            .iter()
            .all(|n| n.abs() < 1e-14));
    }

    #[test]
    fn noninteracting_dot_is_affine_in_occupations() {
        let th = ThermalParameters::new(1.0, Statistics::Fermionic).unwrap();
        let j = SpectralDensity::ohmic(0.1, 0.5, 15.0).unwrap();
        let k = compute_kernels(&j, &th, 5.0, 0.05).unwrap();
        let run = |state: DotState| {
            let rho0 = pure_state(&SystemSpec::anderson(0.0, -0.1, 0.3, state).initial_state());
            anderson_me(0.0, -0.1, 0.3, &k, &rho0, 0.1, 5.0, 10)
                .unwrap()
                .series
                .real("n_up")
                .unwrap()
        };
        let up = run(DotState::Up);
        let down = run(DotState::Down);
        let both = run(DotState::DoublyOccupied);
        let empty = run(DotState::Empty);
        for i in 0..up.len() {
            assert!((both[i] - (up[i] + down[i] - empty[i])).abs() < 1e-12);
        }
        assert!(up.last().unwrap() < &0.999);
    }

    #[test]
    fn mismatched_kernel_grid_is_rejected() {
        let th = ThermalParameters::new(1.0, Statistics::Bosonic).unwrap();
        let k = compute_kernels(&ohmic(), &th, 2.0, 0.1).unwrap();
        let sys = SystemSpec::spin(SystemKind::SpinTransverse, 0.1, real(1.0), real(0.0)).unwrap();
        assert!(evolve_system(&sys, &k, 0.1, 2.0, 1).is_err());
        assert!(evolve_system(&sys, &k, 0.2, 4.0, 1).is_err());
        assert!(evolve_system(&sys, &k, 0.2, 2.0, 1).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(12))]
            #[test]
            fn trace_and_hermiticity_are_preserved(
                eta in 0.005f64..0.2,
                s in 0.5f64..1.5,
                beta in 0.5f64..20.0,
                omega_s in -1.0f64..1.0,
                theta in 0.0f64..std::f64::consts::PI,
                phase in 0.0f64..std::f64::consts::TAU,
                transverse in any::<bool>(),
            ) {
                let j = SpectralDensity::ohmic(eta, s, 1.0).unwrap();
                let th = ThermalParameters::new(beta, Statistics::Bosonic).unwrap();
                let kind = if transverse { SystemKind::SpinTransverse } else { SystemKind::SpinDephasing };
                let a = C64::new((theta / 2.0).cos(), 0.0);
                let b = C64::from_polar((theta / 2.0).sin(), phase);
                let sys = SystemSpec::spin(kind, omega_s, a, b).unwrap();
                let k = compute_kernels(&j, &th, 4.0, 0.05).unwrap();
                let diag = evolve_system(&sys, &k, 0.1, 4.0, 5).unwrap().series.diagnostics.unwrap();
                prop_assert!(diag.real("trace_drift").unwrap().iter().all(|d| *d <= 1e-10));
                prop_assert!(diag.real("hermiticity_defect").unwrap().iter().all(|d| *d <= 1e-10));
            }
        }
    }
}
