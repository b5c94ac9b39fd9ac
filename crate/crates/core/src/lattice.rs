//! One-dimensional two-chain lattice: reservoir-2 chain reversed on the left,
//! the system in the middle, reservoir-1 chain on the right,
//! `[C_{M-1} ... C_0, S, B_0 ... B_{M-1}]`.
//!
//! Fermionic models are Jordan–Wigner mapped along this site order; the two
//! spin orbitals of the dot live in one four-dimensional site.

use faer::MatRef;

use crate::chainmap::ChainCoefficients;
use crate::error::{Error, Result};
use crate::linalg::{
    add, dagger, eigvalsh, hermiticity_defect, identity, kron, matmul, real, scale, zeros, CMat,
    C64,
};
use crate::operators;
use crate::spectral::Statistics;

const HERMITICITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteKind {
    SystemSpin,
    SystemDot,
    BosonMode,
    FermionMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiteSpec {
    pub kind: SiteKind,
    pub local_dim: usize,
    /// Highest retained occupation, bosonic modes only.
    pub max_occupation: Option<usize>,
}

impl SiteSpec {
    pub fn boson(max_occupation: usize) -> Self {
        Self {
            kind: SiteKind::BosonMode,
            local_dim: max_occupation + 1,
            max_occupation: Some(max_occupation),
        }
    }

    pub fn fermion() -> Self {
        Self {
            kind: SiteKind::FermionMode,
            local_dim: 2,
            max_occupation: None,
        }
    }

    pub fn spin() -> Self {
        Self {
            kind: SiteKind::SystemSpin,
            local_dim: 2,
            max_occupation: None,
        }
    }

    pub fn dot() -> Self {
        Self {
            kind: SiteKind::SystemDot,
            local_dim: 4,
            max_occupation: None,
        }
    }

    pub fn is_system(&self) -> bool {
        matches!(self.kind, SiteKind::SystemSpin | SiteKind::SystemDot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    /// `L = sigma_z`
    SpinDephasing,
    /// `L = sigma_x`
    SpinTransverse,
    AndersonDot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DotState {
    Empty,
    #[default]
    Up,
    Down,
    DoublyOccupied,
}

impl DotState {
    pub fn basis_index(self) -> usize {
        match self {
            DotState::Empty => 0,
            DotState::Down => 1,
            DotState::Up => 2,
            DotState::DoublyOccupied => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub omega_s: f64,
    pub a: C64,
    pub b: C64,
    pub u: f64,
    pub v: f64,
    pub t_hyb: f64,
    pub initial_dot: DotState,
}

impl SystemSpec {
    pub fn spin(kind: SystemKind, omega_s: f64, a: C64, b: C64) -> Result<Self> {
        if kind == SystemKind::AndersonDot {
            return Err(Error::Validation("spin constructor used for a dot".into()));
        }
        let norm = a.norm_sqr() + b.norm_sqr();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "|a|^2 + |b|^2 = {norm}, expected 1"
            )));
        }
        Ok(Self {
            kind,
            omega_s,
            a,
            b,
            u: 0.0,
            v: 0.0,
            t_hyb: 0.0,
            initial_dot: DotState::default(),
        })
    }

    pub fn anderson(u: f64, v: f64, t_hyb: f64, initial_dot: DotState) -> Self {
        Self {
            kind: SystemKind::AndersonDot,
            omega_s: 0.0,
            a: real(1.0),
            b: real(0.0),
            u,
            v,
            t_hyb,
            initial_dot,
        }
    }

    pub fn is_spin(&self) -> bool {
        self.kind != SystemKind::AndersonDot
    }

    pub fn local_dim(&self) -> usize {
        if self.is_spin() {
            2
        } else {
            4
        }
    }

    /// System Hamiltonian on the system site.
    pub fn hamiltonian(&self) -> CMat {
        match self.kind {
            SystemKind::AndersonDot => {
                let nu = operators::dot_number_up();
                let nd = operators::dot_number_down();
                let n = add(nu.as_ref(), nd.as_ref());
                let inter = matmul(nu.as_ref(), nd.as_ref());
                add(
                    scale(n.as_ref(), real(self.v)).as_ref(),
                    scale(inter.as_ref(), real(self.u)).as_ref(),
                )
            }
            _ => scale(operators::sigma_z().as_ref(), real(0.5 * self.omega_s)),
        }
    }

    /// Coupling operator `L`.
    pub fn coupling_operator(&self) -> CMat {
        match self.kind {
            SystemKind::SpinDephasing => operators::sigma_z(),
            SystemKind::SpinTransverse => operators::sigma_x(),
            SystemKind::AndersonDot => {
                let d = add(
                    operators::dot_annihilation_up().as_ref(),
                    operators::dot_annihilation_down().as_ref(),
                );
                scale(d.as_ref(), real(-self.t_hyb))
            }
        }
    }

    /// Initial system state vector.
    pub fn initial_state(&self) -> Vec<C64> {
        if self.is_spin() {
            vec![self.a, self.b]
        } else {
            let mut v = vec![real(0.0); 4];
            v[self.initial_dot.basis_index()] = real(1.0);
            v
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Truncation {
    /// Highest occupation of chain oscillators beyond the first two.
    pub n_max: usize,
    /// Highest occupation of the first two oscillators of each chain.
    pub n_max_first: usize,
    /// Permit chains of different lengths.
    pub allow_unequal_chains: bool,
}

impl Truncation {
    pub fn uniform(n_max: usize) -> Self {
        Self {
            n_max,
            n_max_first: n_max,
            allow_unequal_chains: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LatticeModel {
    sites: Vec<SiteSpec>,
    onsite: Vec<CMat>,
    bonds: Vec<CMat>,
    statistics: Statistics,
    system_index: usize,
    system: SystemSpec,
}

impl LatticeModel {
    fn new(
        sites: Vec<SiteSpec>,
        onsite: Vec<CMat>,
        bonds: Vec<CMat>,
        statistics: Statistics,
        system: SystemSpec,
    ) -> Result<Self> {
        let systems: Vec<usize> = sites
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_system())
            .map(|(i, _)| i)
            .collect();
        if systems.len() != 1 {
            return Err(Error::Validation(format!(
                "model must contain exactly one system site, found {}",
                systems.len()
            )));
        }
        if sites.len() < 2 {
            return Err(Error::Validation(
                "model needs at least one chain site next to the system".into(),
            ));
        }
        debug_assert_eq!(onsite.len(), sites.len());
        debug_assert_eq!(bonds.len(), sites.len() - 1);
        for (i, h) in onsite.iter().enumerate() {
            let defect = hermiticity_defect(h.as_ref());
            if defect > HERMITICITY_TOL {
                return Err(Error::Validation(format!(
                    "on-site term {i} not Hermitian (defect {defect:e})"
                )));
            }
        }
        for (i, h) in bonds.iter().enumerate() {
            let defect = hermiticity_defect(h.as_ref());
            if defect > HERMITICITY_TOL {
                return Err(Error::Validation(format!(
                    "bond term {i} not Hermitian (defect {defect:e})"
                )));
            }
        }
        Ok(Self {
            sites,
            onsite,
            bonds,
            statistics,
            system_index: systems[0],
            system,
        })
    }

    pub fn sites(&self) -> &[SiteSpec] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn local_dims(&self) -> Vec<usize> {
        self.sites.iter().map(|s| s.local_dim).collect()
    }

    pub fn onsite_terms(&self) -> &[CMat] {
        &self.onsite
    }

    pub fn bond_terms(&self) -> &[CMat] {
        &self.bonds
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn system_index(&self) -> usize {
        self.system_index
    }

    pub fn system(&self) -> &SystemSpec {
        &self.system
    }

    /// Total Hilbert space dimension (may overflow for large models).
    pub fn hilbert_dim(&self) -> Option<usize> {
        self.sites
            .iter()
            .try_fold(1usize, |acc, s| acc.checked_mul(s.local_dim))
    }

    /// Dense total Hamiltonian built directly from the on-site and bond terms.
    /// Intended for small models only.
    pub fn dense_hamiltonian(&self) -> CMat {
        let dims = self.local_dims();
        let mut h = zeros(self.hilbert_dim().unwrap(), self.hilbert_dim().unwrap());
        for (i, term) in self.onsite.iter().enumerate() {
            h = add(h.as_ref(), embed(term.as_ref(), i, 1, &dims).as_ref());
        }
        for (i, term) in self.bonds.iter().enumerate() {
            h = add(h.as_ref(), embed(term.as_ref(), i, 2, &dims).as_ref());
        }
        h
    }

    /// Dense total fermion parity `prod_i P_i`; fermionic models only.
    pub fn parity_operator(&self) -> Option<CMat> {
        if self.statistics != Statistics::Fermionic {
            return None;
        }
        let mut p = identity(1);
        for s in &self.sites {
            let local = match s.kind {
                SiteKind::SystemDot => operators::dot_parity(),
                SiteKind::FermionMode => operators::fermion_parity(),
                _ => identity(s.local_dim),
            };
            p = kron(p.as_ref(), local.as_ref());
        }
        Some(p)
    }
}

/// Embeds an operator acting on `width` consecutive sites starting at `first`.
pub fn embed(op: MatRef<'_, C64>, first: usize, width: usize, dims: &[usize]) -> CMat {
    let left: usize = dims[..first].iter().product();
    let right: usize = dims[first + width..].iter().product();
    let l = identity(left);
    let r = identity(right);
    kron(kron(l.as_ref(), op).as_ref(), r.as_ref())
}

/// Product of two fermionic operators on adjacent sites, Jordan–Wigner mapped.
/// `left_op` acts on the left site (whose parity is `left_parity`) and
/// `right_op` on the right one; `left_first` selects `X_left · Y_right` versus
/// `Y_right · X_left`.
fn jw_pair(left_op: &CMat, left_parity: &CMat, right_op: &CMat, left_first: bool) -> CMat {
    let l = if left_first {
        matmul(left_op.as_ref(), left_parity.as_ref())
    } else {
        matmul(left_parity.as_ref(), left_op.as_ref())
    };
    kron(l.as_ref(), right_op.as_ref())
}

fn check_chain_statistics(c: &ChainCoefficients, expected: Statistics) -> Result<()> {
    match c.statistics {
        Some(s) if s != expected => Err(Error::StatisticsMismatch(format!(
            "chain {} built from {s:?} densities, model is {expected:?}",
            c.reservoir
        ))),
        _ => Ok(()),
    }
}

fn check_lengths(
    c1: &ChainCoefficients,
    c2: Option<&ChainCoefficients>,
    allow_unequal: bool,
) -> Result<()> {
    if c1.is_empty() {
        return Err(Error::config(
            "chain.M",
            "chain 1 must have at least one site",
        ));
    }
    if let Some(c2) = c2 {
        if c2.len() != c1.len() && !allow_unequal {
            return Err(Error::config(
                "chain.M",
                format!(
                    "chain lengths differ ({} vs {}); enable chain.allow_unequal to permit",
                    c1.len(),
                    c2.len()
                ),
            ));
        }
    }
    Ok(())
}

/// Spin coupled to two truncated bosonic chains.
pub fn build_spin_boson(
    system: &SystemSpec,
    c1: &ChainCoefficients,
    c2: Option<&ChainCoefficients>,
    truncation: Truncation,
) -> Result<LatticeModel> {
    if !system.is_spin() {
        return Err(Error::Validation(
            "spin-boson model needs a spin system".into(),
        ));
    }
    check_chain_statistics(c1, Statistics::Bosonic)?;
    if let Some(c2) = c2 {
        check_chain_statistics(c2, Statistics::Bosonic)?;
    }
    check_lengths(c1, c2, truncation.allow_unequal_chains)?;
    let occupation = |n: usize| {
        if n < 2 {
            truncation.n_max_first
        } else {
            truncation.n_max
        }
    };
    if truncation.n_max == 0 || truncation.n_max_first == 0 {
        return Err(Error::config(
            "mps.n_max",
            "oscillator truncation must be at least 1",
        ));
    }
    let l = system.coupling_operator();
    let ldag = dagger(l.as_ref());
    let m2 = c2.map_or(0, |c| c.len());
    let mut sites = Vec::new();
    let mut onsite = Vec::new();
    let mut bonds = Vec::new();

    if let Some(c2) = c2 {
        for n in (0..m2).rev() {
            let spec = SiteSpec::boson(occupation(n));
            let d = spec.local_dim;
            sites.push(spec);
            onsite.push(scale(operators::number(d).as_ref(), real(-c2.alphas[n])));
            if n > 0 {
                // bond (C_n, C_{n-1}) with hopping -sqrt(beta_{2,n})
                let dn = occupation(n - 1) + 1;
                let hop = c2.betas[n].sqrt();
                let t = add(
                    kron(
                        operators::creation(d).as_ref(),
                        operators::annihilation(dn).as_ref(),
                    )
                    .as_ref(),
                    kron(
                        operators::annihilation(d).as_ref(),
                        operators::creation(dn).as_ref(),
                    )
                    .as_ref(),
                );
                bonds.push(scale(t.as_ref(), real(-hop)));
            }
        }
        // bond (C_0, S): g2 (L C_0 + C_0^† L^†)
        let d0 = occupation(0) + 1;
        let g2 = c2.system_coupling();
        let t = add(
            kron(operators::annihilation(d0).as_ref(), l.as_ref()).as_ref(),
            kron(operators::creation(d0).as_ref(), ldag.as_ref()).as_ref(),
        );
        bonds.push(scale(t.as_ref(), real(g2)));
    }

    sites.push(SiteSpec::spin());
    onsite.push(system.hamiltonian());

    let m1 = c1.len();
    for n in 0..m1 {
        let spec = SiteSpec::boson(occupation(n));
        let d = spec.local_dim;
        if n == 0 {
            // bond (S, B_0): g1 (L^† B_0 + B_0^† L)
            let g1 = c1.system_coupling();
            let t = add(
                kron(ldag.as_ref(), operators::annihilation(d).as_ref()).as_ref(),
                kron(l.as_ref(), operators::creation(d).as_ref()).as_ref(),
            );
            bonds.push(scale(t.as_ref(), real(g1)));
        } else {
            let dp = occupation(n - 1) + 1;
            let hop = c1.betas[n].sqrt();
            let t = add(
                kron(
                    operators::creation(dp).as_ref(),
                    operators::annihilation(d).as_ref(),
                )
                .as_ref(),
                kron(
                    operators::annihilation(dp).as_ref(),
                    operators::creation(d).as_ref(),
                )
                .as_ref(),
            );
            bonds.push(scale(t.as_ref(), real(hop)));
        }
        sites.push(spec);
        onsite.push(scale(operators::number(d).as_ref(), real(c1.alphas[n])));
    }

    LatticeModel::new(sites, onsite, bonds, Statistics::Bosonic, system.clone())
}

/// Anderson dot coupled to two spinless fermionic chains (Jordan–Wigner mapped).
pub fn build_anderson(
    system: &SystemSpec,
    c1: &ChainCoefficients,
    c2: Option<&ChainCoefficients>,
    allow_unequal_chains: bool,
) -> Result<LatticeModel> {
    if system.kind != SystemKind::AndersonDot {
        return Err(Error::Validation(
            "Anderson model needs a dot system".into(),
        ));
    }
    check_chain_statistics(c1, Statistics::Fermionic)?;
    if let Some(c2) = c2 {
        check_chain_statistics(c2, Statistics::Fermionic)?;
    }
    check_lengths(c1, c2, allow_unequal_chains)?;

    let f = operators::fermion_annihilation();
    let fd = dagger(f.as_ref());
    let pf = operators::fermion_parity();
    let pdot = operators::dot_parity();
    let t = system.t_hyb;
    let dots = [
        operators::dot_annihilation_up(),
        operators::dot_annihilation_down(),
    ];
    let hopping = |amp: f64| {
        // c_n^† c_{n+1} + c_{n+1}^† c_n on (n, n+1)
        let t = add(
            jw_pair(&fd, &pf, &f, true).as_ref(),
            jw_pair(&f, &pf, &fd, false).as_ref(),
        );
        scale(t.as_ref(), real(amp))
    };

    let mut sites = Vec::new();
    let mut onsite = Vec::new();
    let mut bonds = Vec::new();
    if let Some(c2) = c2 {
        let m2 = c2.len();
        for n in (0..m2).rev() {
            sites.push(SiteSpec::fermion());
            onsite.push(scale(operators::number(2).as_ref(), real(-c2.alphas[n])));
            if n > 0 {
                bonds.push(hopping(-c2.betas[n].sqrt()));
            }
        }
        // bond (C_0, dot): g2 (L C_0 + C_0^† L^†), L = -t sum_s d_s
        let g2 = c2.system_coupling();
        let mut term = zeros(8, 8);
        for d in &dots {
            let dd = dagger(d.as_ref());
            // L C_0: dot operator (right) multiplies C_0 (left) from the left
            term = add(term.as_ref(), jw_pair(&f, &pf, d, false).as_ref());
            // C_0^† L^†: C_0^† (left) first
            term = add(term.as_ref(), jw_pair(&fd, &pf, &dd, true).as_ref());
        }
        bonds.push(scale(term.as_ref(), real(-t * g2)));
    }

    sites.push(SiteSpec::dot());
    onsite.push(system.hamiltonian());

    // bond (dot, B_0): g1 (L^† B_0 + B_0^† L)
    let g1 = c1.system_coupling();
    let mut term = zeros(8, 8);
    for d in &dots {
        let dd = dagger(d.as_ref());
        term = add(term.as_ref(), jw_pair(&dd, &pdot, &f, true).as_ref());
        term = add(term.as_ref(), jw_pair(d, &pdot, &fd, false).as_ref());
    }
    bonds.push(scale(term.as_ref(), real(-t * g1)));
    for n in 0..c1.len() {
        if n > 0 {
            bonds.push(hopping(c1.betas[n].sqrt()));
        }
        sites.push(SiteSpec::fermion());
        onsite.push(scale(operators::number(2).as_ref(), real(c1.alphas[n])));
    }

    LatticeModel::new(sites, onsite, bonds, Statistics::Fermionic, system.clone())
}

/// Two-site Hamiltonians whose sum over bonds is the full Hamiltonian: each
/// on-site term is split equally between its bonds, boundary sites contribute
/// fully to their single bond.
pub fn bond_hamiltonians(model: &LatticeModel) -> Vec<CMat> {
    let n = model.len();
    let dims = model.local_dims();
    (0..n - 1)
        .map(|b| {
            let left_share = if b == 0 { 1.0 } else { 0.5 };
            let right_share = if b + 1 == n - 1 { 1.0 } else { 0.5 };
            let left = kron(
                scale(model.onsite[b].as_ref(), real(left_share)).as_ref(),
                identity(dims[b + 1]).as_ref(),
            );
            let right = kron(
                identity(dims[b]).as_ref(),
                scale(model.onsite[b + 1].as_ref(), real(right_share)).as_ref(),
            );
            add(
                add(model.bonds[b].as_ref(), left.as_ref()).as_ref(),
                right.as_ref(),
            )
        })
        .collect()
}

/// Sum of embedded bond Hamiltonians (small models only).
pub fn reassemble(bond_hams: &[CMat], dims: &[usize]) -> CMat {
    let total: usize = dims.iter().product();
    let mut h = zeros(total, total);
    for (b, hb) in bond_hams.iter().enumerate() {
        h = add(h.as_ref(), embed(hb.as_ref(), b, 2, dims).as_ref());
    }
    h
}

/// Sorted spectrum of the model Hamiltonian (small models only).
pub fn spectrum(model: &LatticeModel) -> Result<Vec<f64>> {
    eigvalsh(model.dense_hamiltonian().as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chainmap::{tridiagonalize_discrete, RecurrenceMethod};
    use crate::linalg::{commutator, max_abs, sub};

    fn coeffs(
        alphas: &[f64],
        betas: &[f64],
        reservoir: usize,
        stats: Statistics,
    ) -> ChainCoefficients {
        ChainCoefficients {
            alphas: alphas.to_vec(),
            betas: betas.to_vec(),
            reservoir,
            method: RecurrenceMethod::Lanczos,
            statistics: Some(stats),
        }
    }

    fn spin() -> SystemSpec {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        SystemSpec::spin(SystemKind::SpinTransverse, 0.3, real(h), real(h)).unwrap()
    }

    #[test]
    fn layout_and_dimensions() {
        let c1 = coeffs(&[1.0, 1.2, 1.3], &[0.1, 0.2, 0.3], 1, Statistics::Bosonic);
        let c2 = coeffs(&[0.5, 0.7, 0.8], &[0.05, 0.1, 0.2], 2, Statistics::Bosonic);
        let trunc = Truncation {
            n_max: 2,
            n_max_first: 4,
            allow_unequal_chains: false,
        };
        let m = build_spin_boson(&spin(), &c1, Some(&c2), trunc).unwrap();
        assert_eq!(m.len(), 7);
        assert_eq!(m.system_index(), 3);
        assert_eq!(m.local_dims(), vec![3, 5, 5, 2, 5, 5, 3]);
        // chain-2 on-site energies enter with a negative sign
        assert!((m.onsite_terms()[2][(1, 1)].re + 0.5).abs() < 1e-15);
        assert!((m.onsite_terms()[4][(1, 1)].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_temperature_drops_second_chain() {
        let c1 = coeffs(&[1.0, 1.2], &[0.1, 0.2], 1, Statistics::Bosonic);
        let m = build_spin_boson(&spin(), &c1, None, Truncation::uniform(3)).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.system_index(), 0);
    }

    #[test]
    fn mismatched_lengths_need_explicit_permission() {
        let c1 = coeffs(&[1.0, 1.2], &[0.1, 0.2], 1, Statistics::Bosonic);
        let c2 = coeffs(&[1.0], &[0.1], 2, Statistics::Bosonic);
        assert!(matches!(
            build_spin_boson(&spin(), &c1, Some(&c2), Truncation::uniform(2)),
            Err(Error::Config { .. })
        ));
        let mut t = Truncation::uniform(2);
        t.allow_unequal_chains = true;
        assert!(build_spin_boson(&spin(), &c1, Some(&c2), t).is_ok());
    }

    #[test]
    fn statistics_mismatch_is_rejected() {
        let c1 = coeffs(&[1.0], &[0.1], 1, Statistics::Bosonic);
        let dot = SystemSpec::anderson(0.2, -0.1, 0.1, DotState::Up);
        assert!(matches!(
            build_anderson(&dot, &c1, None, false),
            Err(Error::StatisticsMismatch(_))
        ));
    }

    #[test]
    fn two_site_bond_is_full_hamiltonian() {
        let c1 = coeffs(&[1.0], &[0.1], 1, Statistics::Bosonic);
        let m = build_spin_boson(&spin(), &c1, None, Truncation::uniform(3)).unwrap();
        let bonds = bond_hamiltonians(&m);
        assert_eq!(bonds.len(), 1);
        let diff = sub(bonds[0].as_ref(), m.dense_hamiltonian().as_ref());
        assert!(max_abs(diff.as_ref()) < 1e-14);
    }

    #[test]
    fn reassembled_bonds_equal_direct_hamiltonian() {
        let c1 = coeffs(&[1.0, 1.5], &[0.1, 0.2], 1, Statistics::Bosonic);
        let c2 = coeffs(&[0.6, 0.9], &[0.05, 0.1], 2, Statistics::Bosonic);
        let m = build_spin_boson(&spin(), &c1, Some(&c2), Truncation::uniform(2)).unwrap();
        let h = reassemble(&bond_hamiltonians(&m), &m.local_dims());
        assert!(max_abs(sub(h.as_ref(), m.dense_hamiltonian().as_ref()).as_ref()) < 1e-12);

        let f1 = coeffs(&[0.4, 0.8], &[0.2, 0.3], 1, Statistics::Fermionic);
        let f2 = coeffs(&[0.3], &[0.1], 2, Statistics::Fermionic);
        let dot = SystemSpec::anderson(0.2, -0.1, 0.5, DotState::Up);
        let m = build_anderson(&dot, &f1, Some(&f2), true).unwrap();
        let h = reassemble(&bond_hamiltonians(&m), &m.local_dims());
        assert!(max_abs(sub(h.as_ref(), m.dense_hamiltonian().as_ref()).as_ref()) < 1e-12);
    }

    #[test]
    fn fermionic_parity_is_conserved() {
        let f1 = coeffs(&[0.4, 0.8], &[0.2, 0.3], 1, Statistics::Fermionic);
        let f2 = coeffs(&[0.3, 0.5], &[0.1, 0.25], 2, Statistics::Fermionic);
        let dot = SystemSpec::anderson(0.2, -0.1, 0.7, DotState::Up);
        let m = build_anderson(&dot, &f1, Some(&f2), false).unwrap();
        let h = m.dense_hamiltonian();
        let p = m.parity_operator().unwrap();
        assert!(max_abs(commutator(h.as_ref(), p.as_ref()).as_ref()) <= 1e-10);
    }

    fn jw_mode(j: usize, n: usize) -> CMat {
        let mut op = identity(1);
        for k in 0..n {
            let local = match k.cmp(&j) {
                std::cmp::Ordering::Less => operators::fermion_parity(),
                std::cmp::Ordering::Equal => operators::fermion_annihilation(),
                std::cmp::Ordering::Greater => identity(2),
            };
            op = kron(op.as_ref(), local.as_ref());
        }
        op
    }

    #[test]
    fn fermionic_chain_spectrum_matches_star() {
        // Star geometry in mode order [d_up, d_dn, a1_1, a1_2, a2_1, a2_2].
        let freqs = [-0.7, 1.3];
        let g1 = [0.4, 0.25];
        let g2 = [0.3, 0.2];
        let mut c1 = tridiagonalize_discrete(&freqs, &g1).unwrap();
        c1.reservoir = 1;
        c1.statistics = Some(Statistics::Fermionic);
        let mut c2 = tridiagonalize_discrete(&freqs, &g2).unwrap();
        c2.reservoir = 2;
        c2.statistics = Some(Statistics::Fermionic);
        let (u, v, t) = (0.6, -0.2, 0.8);
        let dot = SystemSpec::anderson(u, v, t, DotState::Up);
        let chain = build_anderson(&dot, &c1, Some(&c2), false).unwrap();
        let ec = spectrum(&chain).unwrap();

        let n = 6;
        let c: Vec<CMat> = (0..n).map(|j| jw_mode(j, n)).collect();
        let cd: Vec<CMat> = c.iter().map(|m| dagger(m.as_ref())).collect();
        let num = |j: usize| matmul(cd[j].as_ref(), c[j].as_ref());
        let mut h = add(
            scale(add(num(0).as_ref(), num(1).as_ref()).as_ref(), real(v)).as_ref(),
            scale(matmul(num(0).as_ref(), num(1).as_ref()).as_ref(), real(u)).as_ref(),
        );
        let l = scale(add(c[0].as_ref(), c[1].as_ref()).as_ref(), real(-t));
        let ld = dagger(l.as_ref());
        for k in 0..2 {
            let (a1, a2) = (2 + k, 4 + k);
            h = add(h.as_ref(), scale(num(a1).as_ref(), real(freqs[k])).as_ref());
            h = add(
                h.as_ref(),
                scale(num(a2).as_ref(), real(-freqs[k])).as_ref(),
            );
            let t1 = add(
                matmul(ld.as_ref(), c[a1].as_ref()).as_ref(),
                matmul(cd[a1].as_ref(), l.as_ref()).as_ref(),
            );
            h = add(h.as_ref(), scale(t1.as_ref(), real(g1[k])).as_ref());
            let t2 = add(
                matmul(l.as_ref(), c[a2].as_ref()).as_ref(),
                matmul(cd[a2].as_ref(), ld.as_ref()).as_ref(),
            );
            h = add(h.as_ref(), scale(t2.as_ref(), real(g2[k])).as_ref());
        }
        let es = eigvalsh(h.as_ref()).unwrap();
        assert_eq!(es.len(), ec.len());
        for (a, b) in es.iter().zip(&ec) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}
