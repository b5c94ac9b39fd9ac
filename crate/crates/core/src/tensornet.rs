//! Matrix product states and second-order TEBD.

use faer::{Mat, MatRef};
use log::warn;

use crate::error::{Error, Result};
use crate::lattice::{bond_hamiltonians, LatticeModel, SiteKind};
use crate::linalg::{expm_hermitian, CMat, C64, ONE, ZERO};
use crate::operators::top_level_projector;
use crate::series::TimeSeries;

/// Site tensor with indices (left bond, physical, right bond), stored
/// row-major: `data[(l * d + s) * dr + r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub dl: usize,
    pub d: usize,
    pub dr: usize,
    pub data: Vec<C64>,
}

impl Tensor3 {
    pub fn zeros(dl: usize, d: usize, dr: usize) -> Self {
        Self {
            dl,
            d,
            dr,
            data: vec![ZERO; dl * d * dr],
        }
    }

    #[inline]
    pub fn get(&self, l: usize, s: usize, r: usize) -> C64 {
        self.data[(l * self.d + s) * self.dr + r]
    }

    /// `(dl*d) x dr` matrix.
    fn left_matrix(&self) -> CMat {
        Mat::from_fn(self.dl * self.d, self.dr, |i, j| self.data[i * self.dr + j])
    }

    /// `dl x (d*dr)` matrix.
    fn right_matrix(&self) -> CMat {
        let cols = self.d * self.dr;
        Mat::from_fn(self.dl, cols, |i, j| self.data[i * cols + j])
    }

    fn from_left_matrix(m: MatRef<'_, C64>, d: usize) -> Self {
        let (rows, dr) = (m.nrows(), m.ncols());
        let dl = rows / d;
        let mut data = Vec::with_capacity(rows * dr);
        for i in 0..rows {
            for j in 0..dr {
                data.push(m[(i, j)]);
            }
        }
        Self { dl, d, dr, data }
    }

    fn from_right_matrix(m: MatRef<'_, C64>, d: usize) -> Self {
        let (dl, cols) = (m.nrows(), m.ncols());
        Self::from_left_matrix(m, 1).reshaped(dl, d, cols / d)
    }

    fn reshaped(self, dl: usize, d: usize, dr: usize) -> Self {
        debug_assert_eq!(self.data.len(), dl * d * dr);
        Self {
            dl,
            d,
            dr,
            data: self.data,
        }
    }

    /// `(dl*d) x (dl*d)` isometry defect `max |A^† A - I|` for the left
    /// grouping, or the right grouping when `left` is false.
    fn isometry_residual(&self, left: bool) -> f64 {
        let m = if left {
            self.left_matrix()
        } else {
            self.right_matrix().adjoint().to_owned()
        };
        let g = m.adjoint() * &m;
        let mut res = 0.0f64;
        for j in 0..g.ncols() {
            for i in 0..g.nrows() {
                let target = if i == j { ONE } else { ZERO };
                res = res.max((g[(i, j)] - target).norm());
            }
        }
        res
    }
}

/// Result of a truncated two-site SVD.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: CMat,
    pub singular_values: Vec<f64>,
    pub v_dagger: CMat,
    /// Discarded squared weight relative to the full spectrum.
    pub discarded_weight: f64,
}

/// Thin SVD of `theta` keeping `min(d_max, r)` singular values, where `r` is the
/// smallest rank whose relative discarded squared weight is at most `svd_tol`.
/// The kept spectrum is renormalized to unit norm.
pub fn svd_truncate(theta: MatRef<'_, C64>, d_max: usize, svd_tol: f64) -> Result<TruncatedSvd> {
    if theta.nrows() == 0 || theta.ncols() == 0 {
        return Err(Error::Validation("empty two-site tensor".into()));
    }
    for j in 0..theta.ncols() {
        for i in 0..theta.nrows() {
            if !theta[(i, j)].re.is_finite() || !theta[(i, j)].im.is_finite() {
                return Err(Error::Numerical {
                    location: "svd_truncate".into(),
                    message: "non-finite entry in two-site tensor".into(),
                });
            }
        }
    }
    let svd = theta.thin_svd().map_err(|e| Error::Numerical {
        location: "svd_truncate".into(),
        message: format!("{e:?}"),
    })?;
    let s: Vec<f64> = svd.S().column_vector().iter().map(|z| z.re).collect();
    let total: f64 = s.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return Err(Error::Numerical {
            location: "svd_truncate".into(),
            message: "two-site tensor vanishes".into(),
        });
    }
    // values at round-off level of the largest one are treated as zero
    let floor = s[0] * f64::EPSILON * (theta.nrows().max(theta.ncols()) as f64);
    let nonzero = s.iter().take_while(|&&x| x > floor).count().max(1);
    let mut tail = vec![0.0; s.len() + 1];
    for i in (0..nonzero).rev() {
        tail[i] = tail[i + 1] + s[i] * s[i];
    }
    let keep = (1..=nonzero)
        .find(|&r| tail[r] / total <= svd_tol)
        .unwrap_or(nonzero);
    let keep = keep.min(d_max.max(1));
    let discarded_weight = tail[keep] / total;
    let kept_norm = (total - tail[keep]).max(0.0).sqrt();
    let singular_values: Vec<f64> = s[..keep].iter().map(|x| x / kept_norm).collect();
    let u = svd.U().subcols(0, keep).to_owned();
    let v_dagger = svd.V().subcols(0, keep).adjoint().to_owned();
    Ok(TruncatedSvd {
        u,
        singular_values,
        v_dagger,
        discarded_weight,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sweep {
    Right,
    Left,
}

#[derive(Debug, Clone)]
pub struct MatrixProductState {
    tensors: Vec<Tensor3>,
    center: usize,
    truncation_error_acc: f64,
}

impl MatrixProductState {
    /// Product state from normalized local vectors.
    pub fn product(local: &[Vec<C64>]) -> Result<Self> {
        if local.is_empty() {
            return Err(Error::Validation("empty state".into()));
        }
        let tensors = local
            .iter()
            .map(|v| Tensor3 {
                dl: 1,
                d: v.len(),
                dr: 1,
                data: v.clone(),
            })
            .collect();
        Ok(Self {
            tensors,
            center: 0,
            truncation_error_acc: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensors(&self) -> &[Tensor3] {
        &self.tensors
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn truncation_error(&self) -> f64 {
        self.truncation_error_acc
    }

    pub fn local_dims(&self) -> Vec<usize> {
        self.tensors.iter().map(|t| t.d).collect()
    }

    /// Bond dimensions including the two trivial boundary bonds.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.tensors.iter().map(|t| t.dl).collect();
        b.push(self.tensors.last().map_or(1, |t| t.dr));
        b
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Largest isometry defect over all non-center tensors.
    pub fn gauge_residual(&self) -> f64 {
        self.tensors
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.center)
            .map(|(i, t)| t.isometry_residual(i < self.center))
            .fold(0.0, f64::max)
    }

    /// `<psi|psi>` by full contraction (independent of the gauge).
    pub fn norm_squared(&self) -> f64 {
        let mut env = Mat::<C64>::from_fn(1, 1, |_, _| ONE);
        for t in &self.tensors {
            let mut next = Mat::<C64>::zeros(t.dr, t.dr);
            for s in 0..t.d {
                let a = Mat::from_fn(t.dl, t.dr, |l, r| t.get(l, s, r));
                let tmp = a.adjoint() * &env * &a;
                next += &tmp;
            }
            env = next;
        }
        env[(0, 0)].re
    }

    fn move_right(&mut self, i: usize) {
        let a = &self.tensors[i];
        let d = a.d;
        let qr = a.left_matrix().qr();
        let q = qr.compute_thin_Q();
        let r = qr.thin_R().to_owned();
        let next = &self.tensors[i + 1];
        let nd = next.d;
        let merged = &r * next.right_matrix();
        self.tensors[i] = Tensor3::from_left_matrix(q.as_ref(), d);
        self.tensors[i + 1] = Tensor3::from_right_matrix(merged.as_ref(), nd);
    }

    fn move_left(&mut self, i: usize) {
        let b = &self.tensors[i];
        let d = b.d;
        let qr = b.right_matrix().adjoint().to_owned().qr();
        let q = qr.compute_thin_Q();
        let r = qr.thin_R().to_owned();
        let prev = &self.tensors[i - 1];
        let pd = prev.d;
        let merged = prev.left_matrix() * r.adjoint();
        self.tensors[i] = Tensor3::from_right_matrix(q.adjoint().to_owned().as_ref(), d);
        self.tensors[i - 1] = Tensor3::from_left_matrix(merged.as_ref(), pd);
    }

    /// Moves the orthogonality center by exact QR steps.
    pub fn move_center(&mut self, to: usize) {
        assert!(to < self.len());
        while self.center < to {
            self.move_right(self.center);
            self.center += 1;
        }
        while self.center > to {
            self.move_left(self.center);
            self.center -= 1;
        }
    }

    /// One-site reduced density matrix `rho[(s, s')]`, gauged at `site`.
    pub fn reduced_density(&mut self, site: usize) -> CMat {
        self.move_center(site);
        let t = &self.tensors[site];
        let mut rho = Mat::<C64>::zeros(t.d, t.d);
        for s in 0..t.d {
            for sp in 0..t.d {
                let mut acc = ZERO;
                for l in 0..t.dl {
                    for r in 0..t.dr {
                        acc += t.get(l, s, r) * t.get(l, sp, r).conj();
                    }
                }
                rho[(s, sp)] = acc;
            }
        }
        rho
    }

    /// `<psi|O_site|psi>`.
    pub fn measure_local(&mut self, site: usize, op: MatRef<'_, C64>) -> Result<C64> {
        if site >= self.len() {
            return Err(Error::Validation(format!("site {site} out of range")));
        }
        let d = self.tensors[site].d;
        if op.nrows() != d || op.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: op.nrows(),
            });
        }
        let rho = self.reduced_density(site);
        let mut acc = ZERO;
        for s in 0..d {
            for sp in 0..d {
                acc += op[(sp, s)] * rho[(s, sp)];
            }
        }
        Ok(acc)
    }

    /// Two-site tensor of bond `(b, b+1)` as a `(dl*d1) x (d2*dr)` matrix.
    fn theta(&self, b: usize) -> CMat {
        self.tensors[b].left_matrix() * self.tensors[b + 1].right_matrix()
    }

    /// `<psi|h_{b,b+1}|psi>` for a two-site operator indexed `s1 * d2 + s2`.
    pub fn bond_expectation(&mut self, b: usize, h: MatRef<'_, C64>) -> Result<C64> {
        if b + 1 >= self.len() {
            return Err(Error::Validation(format!("bond {b} out of range")));
        }
        self.move_center(b);
        let (dl, d1) = (self.tensors[b].dl, self.tensors[b].d);
        let (d2, dr) = (self.tensors[b + 1].d, self.tensors[b + 1].dr);
        if h.nrows() != d1 * d2 {
            return Err(Error::DimensionMismatch {
                expected: d1 * d2,
                found: h.nrows(),
            });
        }
        let theta = self.theta(b);
        let t = to_gate_layout(theta.as_ref(), dl, d1, d2, dr);
        let ht = h * &t;
        let mut acc = ZERO;
        for j in 0..t.ncols() {
            for i in 0..t.nrows() {
                acc += t[(i, j)].conj() * ht[(i, j)];
            }
        }
        Ok(acc)
    }

    /// Applies a two-site gate on `(b, b+1)` and truncates; the center must sit
    /// on `b` (rightward sweep) or `b+1` (leftward sweep) and ends on the other.
    fn apply_gate(
        &mut self,
        b: usize,
        gate: MatRef<'_, C64>,
        sweep: Sweep,
        d_max: usize,
        svd_tol: f64,
    ) -> Result<f64> {
        debug_assert!(self.center == b || self.center == b + 1);
        let (dl, d1) = (self.tensors[b].dl, self.tensors[b].d);
        let (d2, dr) = (self.tensors[b + 1].d, self.tensors[b + 1].dr);
        let theta = self.theta(b);
        let t = to_gate_layout(theta.as_ref(), dl, d1, d2, dr);
        let gt = gate * &t;
        let theta = from_gate_layout(gt.as_ref(), dl, d1, d2, dr);
        let svd = svd_truncate(theta.as_ref(), d_max, svd_tol)
            .map_err(|e| e.context(format!("bond ({}, {})", b, b + 1)))?;
        let k = svd.singular_values.len();
        let (left, right) = match sweep {
            Sweep::Right => {
                let sv = Mat::from_fn(k, svd.v_dagger.ncols(), |i, j| {
                    svd.v_dagger[(i, j)] * svd.singular_values[i]
                });
                (svd.u, sv)
            }
            Sweep::Left => {
                let us = Mat::from_fn(svd.u.nrows(), k, |i, j| {
                    svd.u[(i, j)] * svd.singular_values[j]
                });
                (us, svd.v_dagger)
            }
        };
        self.tensors[b] = Tensor3::from_left_matrix(left.as_ref(), d1);
        self.tensors[b + 1] = Tensor3::from_right_matrix(right.as_ref(), d2);
        self.center = match sweep {
            Sweep::Right => b + 1,
            Sweep::Left => b,
        };
        self.truncation_error_acc += svd.discarded_weight;
        Ok(svd.discarded_weight)
    }

    /// Dense state vector (small states only), site 0 slowest.
    pub fn to_dense(&self) -> Vec<C64> {
        let mut v = vec![ONE];
        let mut rows = 1usize;
        let mut bond = 1usize;
        for t in &self.tensors {
            // v: rows x bond (row-major) -> rows*d x dr
            let mut next = vec![ZERO; rows * t.d * t.dr];
            for i in 0..rows {
                for l in 0..bond {
                    let c = v[i * bond + l];
                    if c == ZERO {
                        continue;
                    }
                    for s in 0..t.d {
                        for r in 0..t.dr {
                            next[(i * t.d + s) * t.dr + r] += c * t.get(l, s, r);
                        }
                    }
                }
            }
            v = next;
            rows *= t.d;
            bond = t.dr;
        }
        v
    }
}

/// `(dl*d1) x (d2*dr)` to `(d1*d2) x (dl*dr)`.
fn to_gate_layout(theta: MatRef<'_, C64>, dl: usize, d1: usize, d2: usize, dr: usize) -> CMat {
    Mat::from_fn(d1 * d2, dl * dr, |p, q| {
        let (s1, s2) = (p / d2, p % d2);
        let (l, r) = (q / dr, q % dr);
        theta[(l * d1 + s1, s2 * dr + r)]
    })
}

fn from_gate_layout(t: MatRef<'_, C64>, dl: usize, d1: usize, d2: usize, dr: usize) -> CMat {
    Mat::from_fn(dl * d1, d2 * dr, |i, j| {
        let (l, s1) = (i / d1, i % d1);
        let (s2, r) = (j / dr, j % dr);
        t[(s1 * d2 + s2, l * dr + r)]
    })
}

/// Thermofield vacuum: every chain site empty, the system in its initial state.
pub fn vacuum_state(model: &LatticeModel) -> Result<MatrixProductState> {
    let local: Vec<Vec<C64>> = model
        .sites()
        .iter()
        .map(|s| match s.kind {
            SiteKind::SystemSpin | SiteKind::SystemDot => model.system().initial_state(),
            _ => {
                let mut v = vec![ZERO; s.local_dim];
                v[0] = ONE;
                v
            }
        })
        .collect();
    MatrixProductState::product(&local)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_final: f64,
    pub d_max: usize,
    pub svd_tol: f64,
    pub measure_stride: usize,
    /// Highest-Fock-level population above which a warning is emitted.
    pub fock_warning_threshold: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            t_final: 10.0,
            d_max: 20,
            svd_tol: 1e-10,
            measure_stride: 1,
            fock_warning_threshold: 1e-3,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("evolve.dt", "must be positive"));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::config("evolve.t_final", "must be non-negative"));
        }
        if self.d_max == 0 {
            return Err(Error::config("mps.D_max", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.svd_tol) {
            return Err(Error::config("mps.svd_tol", "must lie in [0, 1)"));
        }
        if self.measure_stride == 0 {
            return Err(Error::config("evolve.measure_stride", "must be at least 1"));
        }
        step_count(self.t_final, self.dt)
    }
}

/// Number of steps of size `dt` covering `t_final`; they must be commensurate.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    let n = (t_final / dt).round();
    if (n * dt - t_final).abs() > 1e-9 * t_final.max(1.0) {
        return Err(Error::config(
            "evolve.dt",
            format!("t_final = {t_final} is not a multiple of dt = {dt}"),
        ));
    }
    Ok(n as usize)
}

/// A named single-site observable. The operator should be Hermitian; only
/// the real part of its expectation is recorded.
#[derive(Debug, Clone)]
pub struct Observable {
    pub name: String,
    pub site: usize,
    pub operator: CMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationWarning {
    pub time: f64,
    pub site: usize,
    pub population: f64,
}

#[derive(Debug, Clone)]
pub struct TebdOutput {
    /// Observables on the measurement grid, with a diagnostics companion
    /// (`max_bond_dim`, `discarded_weight`, `top_fock_population`).
    pub series: TimeSeries,
    /// Discarded weight of every time step.
    pub step_discarded: Vec<f64>,
    pub warnings: Vec<TruncationWarning>,
}

struct Propagators {
    half: Vec<CMat>,
    full: Vec<CMat>,
}

fn propagators(model: &LatticeModel, dt: f64) -> Result<Propagators> {
    let hams = bond_hamiltonians(model);
    let mut half = Vec::with_capacity(hams.len());
    let mut full = Vec::with_capacity(hams.len());
    for h in &hams {
        half.push(expm_hermitian(h.as_ref(), 0.5 * dt)?);
        full.push(expm_hermitian(h.as_ref(), dt)?);
    }
    Ok(Propagators { half, full })
}

fn apply_layer(
    state: &mut MatrixProductState,
    gates: &[CMat],
    parity: usize,
    sweep: Sweep,
    cfg: &EvolutionConfig,
) -> Result<f64> {
    let bonds: Vec<usize> = (parity..gates.len()).step_by(2).collect();
    let mut discarded = 0.0;
    match sweep {
        Sweep::Right => {
            for &b in &bonds {
                state.move_center(b);
                discarded +=
                    state.apply_gate(b, gates[b].as_ref(), sweep, cfg.d_max, cfg.svd_tol)?;
            }
        }
        Sweep::Left => {
            for &b in bonds.iter().rev() {
                state.move_center(b + 1);
                discarded +=
                    state.apply_gate(b, gates[b].as_ref(), sweep, cfg.d_max, cfg.svd_tol)?;
            }
        }
    }
    Ok(discarded)
}

/// Highest-level population of every bosonic site.
fn top_fock_populations(state: &mut MatrixProductState, model: &LatticeModel) -> Vec<(usize, f64)> {
    model
        .sites()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.kind == SiteKind::BosonMode)
        .map(|(i, s)| {
            let p = top_level_projector(s.local_dim);
            let v = state
                .measure_local(i, p.as_ref())
                .map(|z| z.re)
                .unwrap_or(f64::NAN);
            (i, v)
        })
        .collect()
}

/// Second-order Trotterized evolution (half even, full odd, half even per
/// step; adjacent half layers fused between measurements).
pub fn tebd_evolve(
    state: &mut MatrixProductState,
    model: &LatticeModel,
    cfg: &EvolutionConfig,
    observables: &[Observable],
) -> Result<TebdOutput> {
    let n_steps = cfg.validate()?;
    if state.local_dims() != model.local_dims() {
        return Err(Error::Validation(
            "state dimensions do not match the model".into(),
        ));
    }
    for o in observables {
        let d = *model.local_dims().get(o.site).ok_or_else(|| {
            Error::Validation(format!("observable `{}` site out of range", o.name))
        })?;
        if o.operator.nrows() != d || o.operator.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: o.operator.nrows(),
            });
        }
    }
    let props = propagators(model, cfg.dt)?;

    let mut times = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); observables.len()];
    let mut max_bond = Vec::new();
    let mut window_discarded = Vec::new();
    let mut top_fock = Vec::new();
    let mut warnings = Vec::new();
    let mut step_discarded = Vec::with_capacity(n_steps);
    let mut since_record = 0.0;

    let mut record = |state: &mut MatrixProductState,
                      step: usize,
                      discarded: f64,
                      times: &mut Vec<f64>,
                      warnings: &mut Vec<TruncationWarning>|
     -> Result<()> {
        let t = step as f64 * cfg.dt;
        times.push(t);
        for (k, o) in observables.iter().enumerate() {
            values[k].push(state.measure_local(o.site, o.operator.as_ref())?.re);
        }
        let pops = top_fock_populations(state, model);
        let worst = pops.iter().map(|p| p.1).fold(0.0, f64::max);
        for &(site, population) in &pops {
            if population > cfg.fock_warning_threshold {
                warn!("t = {t}: site {site} highest Fock level population {population:.3e}");
                warnings.push(TruncationWarning {
                    time: t,
                    site,
                    population,
                });
            }
        }
        max_bond.push(state.max_bond_dim() as f64);
        window_discarded.push(discarded);
        top_fock.push(worst);
        Ok(())
    };

    record(state, 0, 0.0, &mut times, &mut warnings)?;
    let mut open_half = false;
    for step in 1..=n_steps {
        let mut w = 0.0;
        let first = if open_half { &props.full } else { &props.half };
        w += apply_layer(state, first, 0, Sweep::Right, cfg)?;
        w += apply_layer(state, &props.full, 1, Sweep::Left, cfg)?;
        let measure = step % cfg.measure_stride == 0 || step == n_steps;
        if measure {
            w += apply_layer(state, &props.half, 0, Sweep::Right, cfg)?;
            open_half = false;
        } else {
            open_half = true;
        }
        step_discarded.push(w);
        since_record += w;
        if measure {
            record(state, step, since_record, &mut times, &mut warnings)?;
            since_record = 0.0;
        }
    }

    let mut series = TimeSeries::new(times.clone())?;
    for (o, v) in observables.iter().zip(values) {
        series.push_real(o.name.clone(), v)?;
    }
    let mut diag = TimeSeries::new(times)?;
    diag.push_real("max_bond_dim", max_bond)?;
    diag.push_real("discarded_weight", window_discarded)?;
    diag.push_real("top_fock_population", top_fock)?;
    series.diagnostics = Some(Box::new(diag));
    Ok(TebdOutput {
        series,
        step_discarded,
        warnings,
    })
}

/// `<H>` as a sum of bond expectations.
pub fn energy(state: &mut MatrixProductState, model: &LatticeModel) -> Result<f64> {
    let hams = bond_hamiltonians(model);
    let mut e = 0.0;
    for (b, h) in hams.iter().enumerate() {
        e += state.bond_expectation(b, h.as_ref())?.re;
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chainmap::{ChainCoefficients, RecurrenceMethod};
    use crate::lattice::{build_spin_boson, SystemKind, SystemSpec, Truncation};
    use crate::linalg::{eigh, matvec, real};
    use crate::operators::{number, sigma_x, sigma_z};
    use crate::spectral::Statistics;
    use proptest::prelude::*;

    fn chain(alphas: &[f64], betas: &[f64], reservoir: usize) -> ChainCoefficients {
        ChainCoefficients {
            alphas: alphas.to_vec(),
            betas: betas.to_vec(),
            reservoir,
            method: RecurrenceMethod::Lanczos,
            statistics: Some(Statistics::Bosonic),
        }
    }

    fn plus() -> (C64, C64) {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        (real(h), real(h))
    }

    fn small_model(kind: SystemKind, g: f64) -> LatticeModel {
        let (a, b) = plus();
        let sys = SystemSpec::spin(kind, 0.4, a, b).unwrap();
        let c1 = chain(&[0.8, 1.1, 0.9], &[g * g, 0.3, 0.2], 1);
        let c2 = chain(&[0.5, 0.6], &[0.5 * g * g, 0.1], 2);
        let mut t = Truncation::uniform(2);
        t.allow_unequal_chains = true;
        build_spin_boson(&sys, &c1, Some(&c2), t).unwrap()
    }

    #[test]
    fn vacuum_state_properties() {
        let model = small_model(SystemKind::SpinTransverse, 0.3);
        let mut psi = vacuum_state(&model).unwrap();
        assert!((psi.norm_squared() - 1.0).abs() < 1e-15);
        assert_eq!(psi.max_bond_dim(), 1);
        let sx = psi
            .measure_local(model.system_index(), sigma_x().as_ref())
            .unwrap();
        assert!((sx.re - 1.0).abs() < 1e-15);
        for (i, d) in model.local_dims().iter().enumerate() {
            if i != model.system_index() {
                let n = psi.measure_local(i, number(*d).as_ref()).unwrap();
                assert_eq!(n.norm(), 0.0);
            }
        }
    }

    #[test]
    fn sigma_z_convention() {
        let mut psi = MatrixProductState::product(&[vec![ONE, ZERO]]).unwrap();
        let z = psi.measure_local(0, sigma_z().as_ref()).unwrap();
        assert_eq!(z, ONE);
        assert!(matches!(
            psi.measure_local(0, number(3).as_ref()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn truncation_of_product_and_constructed_spectra() {
        let theta = Mat::from_fn(4, 4, |i, j| real(((i + 1) * (j + 2)) as f64));
        let r = svd_truncate(theta.as_ref(), 10, 0.0).unwrap();
        assert_eq!(r.singular_values.len(), 1);
        assert_eq!(r.discarded_weight, 0.0);

        let theta = Mat::from_fn(2, 2, |i, j| {
            if i == j {
                real(if i == 0 { 1.0 } else { 1e-12 })
            } else {
                ZERO
            }
        });
        let r = svd_truncate(theta.as_ref(), 1, 1e-20).unwrap();
        assert_eq!(r.singular_values.len(), 1);
        assert!((r.discarded_weight - 1e-24).abs() < 1e-36);
        assert!((r.singular_values[0] - 1.0).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn kept_spectrum_matches_dense_svd(entries in proptest::collection::vec(-1.0f64..1.0, 32)) {
            let theta = Mat::from_fn(4, 4, |i, j| C64::new(entries[i * 4 + j], entries[16 + i * 4 + j]));
            // dense oracle: singular values from the Hermitian eigenproblem
            let gram = theta.adjoint() * &theta;
            let (ev, _) = eigh(gram.as_ref()).unwrap();
            let mut oracle: Vec<f64> = ev.iter().rev().map(|x| x.max(0.0).sqrt()).collect();
            let norm: f64 = oracle.iter().map(|x| x * x).sum::<f64>().sqrt();
            oracle.iter_mut().for_each(|x| *x /= norm);
            let r = svd_truncate(theta.as_ref(), 4, 0.0).unwrap();
            for (a, b) in r.singular_values.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            // reconstruction
            let s = Mat::from_fn(r.u.ncols(), r.u.ncols(), |i, j| if i == j { real(r.singular_values[i] * norm) } else { ZERO });
            let back = &r.u * s * &r.v_dagger;
            for j in 0..4 { for i in 0..4 {
                prop_assert!((back[(i, j)] - theta[(i, j)]).norm() < 1e-12);
            }}
        }
    }

    fn dense_reference(model: &LatticeModel, psi0: &[C64], t: f64) -> Vec<C64> {
        let h = model.dense_hamiltonian();
        let u = expm_hermitian(h.as_ref(), t).unwrap();
        matvec(u.as_ref(), psi0)
    }

    #[test]
    fn tebd_converges_to_exact_propagation() {
        let model = small_model(SystemKind::SpinTransverse, 0.35);
        let psi0 = vacuum_state(&model).unwrap().to_dense();
        let exact = dense_reference(&model, &psi0, 2.0);
        let mut errs = Vec::new();
        for dt in [0.05, 0.025] {
            let mut psi = vacuum_state(&model).unwrap();
            let cfg = EvolutionConfig {
                dt,
                t_final: 2.0,
                d_max: 100,
                svd_tol: 0.0,
                measure_stride: 7,
                fock_warning_threshold: 1.0,
            };
            tebd_evolve(&mut psi, &model, &cfg, &[]).unwrap();
            assert!(psi.gauge_residual() < 1e-10);
            let v = psi.to_dense();
            let err: f64 = v
                .iter()
                .zip(&exact)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            errs.push(err);
        }
        assert!(errs[0] < 1e-2, "{errs:?}");
        let ratio = errs[0] / errs[1];
        assert!(
            ratio > 3.5 && ratio < 4.5,
            "second order expected, ratio {ratio}"
        );
    }

    #[test]
    fn decoupled_spin_precesses_freely() {
        let (a, b) = plus();
        let sys = SystemSpec::spin(SystemKind::SpinTransverse, 0.1, a, b).unwrap();
        let c1 = chain(&[1.0, 1.0], &[0.0, 0.2], 1);
        let model = build_spin_boson(&sys, &c1, None, Truncation::uniform(2)).unwrap();
        let mut psi = vacuum_state(&model).unwrap();
        let cfg = EvolutionConfig {
            dt: 0.01,
            t_final: 5.0,
            d_max: 8,
            svd_tol: 0.0,
            measure_stride: 50,
            fock_warning_threshold: 1e-3,
        };
        let obs = [Observable {
            name: "sx".into(),
            site: 0,
            operator: sigma_x(),
        }];
        let out = tebd_evolve(&mut psi, &model, &cfg, &obs).unwrap();
        let sx = out.series.real("sx").unwrap();
        for (t, x) in out.series.times().iter().zip(&sx) {
            assert!((x - (0.1 * t).cos()).abs() < 1e-8, "t={t}: {x}");
        }
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn gauge_moves_do_not_change_observables() {
        let model = small_model(SystemKind::SpinTransverse, 0.4);
        let mut psi = vacuum_state(&model).unwrap();
        let cfg = EvolutionConfig {
            dt: 0.1,
            t_final: 1.0,
            d_max: 50,
            svd_tol: 0.0,
            measure_stride: 10,
            fock_warning_threshold: 1.0,
        };
        tebd_evolve(&mut psi, &model, &cfg, &[]).unwrap();
        let s = model.system_index();
        let before = psi.measure_local(s, sigma_x().as_ref()).unwrap();
        let e0 = energy(&mut psi, &model).unwrap();
        psi.move_center(0);
        psi.move_center(psi.len() - 1);
        psi.move_center(2);
        assert!(psi.gauge_residual() < 1e-10);
        let after = psi.measure_local(s, sigma_x().as_ref()).unwrap();
        assert!((before - after).norm() < 1e-10);
        assert!((energy(&mut psi, &model).unwrap() - e0).abs() < 1e-10);
        assert!((psi.norm_squared() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn dephasing_coupling_conserves_sigma_z() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let sys = SystemSpec::spin(
            SystemKind::SpinDephasing,
            0.3,
            real(0.6),
            C64::new(0.0, 0.8),
        )
        .unwrap();
        let _ = h;
        let c1 = chain(&[0.8, 1.1, 0.9], &[0.2, 0.3, 0.2], 1);
        let model = build_spin_boson(&sys, &c1, None, Truncation::uniform(3)).unwrap();
        let mut psi = vacuum_state(&model).unwrap();
        let cfg = EvolutionConfig {
            dt: 0.05,
            t_final: 3.0,
            d_max: 6,
            svd_tol: 1e-8,
            measure_stride: 10,
            fock_warning_threshold: 1.0,
        };
        let obs = [Observable {
            name: "sz".into(),
            site: 0,
            operator: sigma_z(),
        }];
        let out = tebd_evolve(&mut psi, &model, &cfg, &obs).unwrap();
        for z in out.series.real("sz").unwrap() {
            assert!((z - (0.36 - 0.64)).abs() < 1e-6);
        }
        let diag = out.series.diagnostics.as_ref().unwrap();
        assert_eq!(
            diag.column_names(),
            vec!["max_bond_dim", "discarded_weight", "top_fock_population"]
        );
        let acc: f64 = out.step_discarded.iter().sum();
        assert!((1.0 - psi.norm_squared()).abs() <= 10.0 * acc + 1e-10);
    }

    #[test]
    fn overflowing_fock_space_warns() {
        let (a, b) = plus();
        let sys = SystemSpec::spin(SystemKind::SpinTransverse, 0.0, a, b).unwrap();
        let c1 = chain(&[0.1], &[4.0], 1);
        let model = build_spin_boson(&sys, &c1, None, Truncation::uniform(1)).unwrap();
        let mut psi = vacuum_state(&model).unwrap();
        let cfg = EvolutionConfig {
            dt: 0.05,
            t_final: 1.0,
            d_max: 4,
            svd_tol: 0.0,
            measure_stride: 5,
            fock_warning_threshold: 1e-3,
        };
        let out = tebd_evolve(&mut psi, &model, &cfg, &[]).unwrap();
        assert!(!out.warnings.is_empty());
    }
}
