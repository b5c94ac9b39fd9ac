//! Chain mapping: recurrence coefficients of monic orthogonal polynomials for a
//! reservoir weight function, and tridiagonalization of finite discrete baths.
//!
//! Chain on-site energies are the `alphas`; nearest-neighbour hoppings are
//! `sqrt(betas[n + 1])`; the system coupling is `sqrt(betas[0])`, the square
//! root of the total weight.

use qd::Quad;

use crate::error::{Error, Result};
use crate::quad::gauss_legendre;
use crate::spectral::{Statistics, ThermalParameters, ThermofieldDensities};

/// Nodes per Gauss–Legendre panel. High-degree polynomials cluster their
/// zeros near both ends of the support; fewer, wider panels resolve them with
/// the same node budget.
const PANEL_ORDER: usize = 25;
/// Geometric refinement levels of the first panel under logarithmic grading.
pub const LOG_LEVELS: usize = 40;
/// Orthogonality residual above which the Stieltjes result is rejected.
pub const RESIDUAL_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureOrigin {
    QuadratureOfContinuum,
    FiniteDiscrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Grading {
    Uniform,
    /// The first uniform panel is split geometrically towards the origin.
    #[default]
    Logarithmic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedMeasure {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    origin: MeasureOrigin,
}

impl DiscretizedMeasure {
    /// Builds a measure from `(node, weight)` pairs. Pairs are sorted by node,
    /// coincident nodes merged and zero weights dropped.
    pub fn new(pairs: Vec<(f64, f64)>, origin: MeasureOrigin) -> Result<Self> {
        let mut pairs: Vec<(f64, f64)> = pairs;
        for &(x, w) in &pairs {
            if !x.is_finite() || !w.is_finite() {
                return Err(Error::Evaluation { omega: x, value: w });
            }
            if w < 0.0 {
                return Err(Error::Validation(format!(
                    "negative weight {w} at node {x}"
                )));
            }
        }
        pairs.retain(|&(_, w)| w > 0.0);
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut nodes: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (x, w) in pairs {
            if nodes.last() == Some(&x) {
                *weights.last_mut().unwrap() += w;
            } else {
                nodes.push(x);
                weights.push(w);
            }
        }
        Ok(Self {
            nodes,
            weights,
            origin,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn origin(&self) -> MeasureOrigin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Sum of the weights, accumulated left to right.
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().fold(0.0, |acc, w| acc + w)
    }
}

/// Realizes `∫ Jw(ω) p(ω) dω` over `[0, omega_max]` as a finite sum.
///
/// `n_nodes` nodes are spread over equal panels of Gauss–Legendre points; with
/// [`Grading::Logarithmic`] the first panel is additionally replaced by
/// [`LOG_LEVELS`] geometrically shrinking panels. Nodes where the weight
/// vanishes are dropped.
pub fn discretize<F>(
    weight: F,
    omega_max: f64,
    n_nodes: usize,
    grading: Grading,
) -> Result<DiscretizedMeasure>
where
    F: Fn(f64) -> Result<f64>,
{
    if n_nodes < 4 {
        return Err(Error::Validation(format!(
            "node count {n_nodes} must be at least 4"
        )));
    }
    if !(omega_max > 0.0 && omega_max.is_finite()) {
        return Err(Error::Validation(format!(
            "omega_max must be positive, got {omega_max}"
        )));
    }
    let n_panels = n_nodes.div_ceil(PANEL_ORDER);
    let width = omega_max / n_panels as f64;
    // (left, right, order)
    let mut panels: Vec<(f64, f64, usize)> = Vec::new();
    for i in 0..n_panels {
        let order = n_nodes / n_panels + usize::from(i < n_nodes % n_panels);
        let (a, b) = (
            width * i as f64,
            if i + 1 == n_panels {
                omega_max
            } else {
                width * (i + 1) as f64
            },
        );
        if i == 0 && grading == Grading::Logarithmic {
            let mut right = b;
            for _ in 0..LOG_LEVELS {
                let left = 0.5 * right;
                panels.push((left, right, PANEL_ORDER));
                right = left;
            }
            panels.push((0.0, right, PANEL_ORDER));
        } else {
            panels.push((a, b, order));
        }
    }
    let mut rules: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut pairs = Vec::with_capacity(n_nodes + (LOG_LEVELS + 1) * PANEL_ORDER);
    for (a, b, order) in panels {
        let rule = match rules.iter().find(|r| r.0 == order) {
            Some(r) => r,
            None => {
                let (x, w) = gauss_legendre(order);
                rules.push((order, x, w));
                rules.last().unwrap()
            }
        };
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in rule.1.iter().zip(&rule.2) {
            let node = mid + half * x;
            let value = weight(node)?;
            if !value.is_finite() {
                return Err(Error::Evaluation { omega: node, value });
            }
            if value < 0.0 {
                return Err(Error::Validation(format!(
                    "weight function is negative ({value}) at omega = {node}"
                )));
            }
            pairs.push((node, half * w * value));
        }
    }
    DiscretizedMeasure::new(pairs, MeasureOrigin::QuadratureOfContinuum)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecurrenceMethod {
    Stieltjes,
    Lanczos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainCoefficients {
    pub alphas: Vec<f64>,
    /// `betas[0]` is the total weight; `betas[n]` for `n >= 1` is the recurrence coefficient.
    pub betas: Vec<f64>,
    pub reservoir: usize,
    pub method: RecurrenceMethod,
    /// Statistics of the reservoir the weights came from, when known.
    pub statistics: Option<Statistics>,
}

impl ChainCoefficients {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// System-to-first-site coupling `sqrt(betas[0])`.
    pub fn system_coupling(&self) -> f64 {
        self.betas.first().map_or(0.0, |b| b.sqrt())
    }

    /// Hopping between chain sites `n` and `n + 1`.
    pub fn hopping(&self, n: usize) -> f64 {
        self.betas[n + 1].sqrt()
    }

    /// Keeps the first `m` sites.
    pub fn truncated(&self, m: usize) -> ChainCoefficients {
        let m = m.min(self.len());
        ChainCoefficients {
            alphas: self.alphas[..m].to_vec(),
            betas: self.betas[..m].to_vec(),
            ..self.clone()
        }
    }
}

fn check_request(measure: &DiscretizedMeasure, m: usize) -> Result<f64> {
    let total = measure.total_weight();
    if measure.is_empty() || total <= 0.0 {
        return Err(Error::EmptyMeasure);
    }
    if m == 0 {
        return Err(Error::Validation("chain length must be positive".into()));
    }
    if m > measure.len() {
        return Err(Error::Validation(format!(
            "chain length {m} exceeds the {} support points of the measure",
            measure.len()
        )));
    }
    Ok(total)
}

/// Largest |node|, used as the scale for breakdown detection.
fn node_scale(measure: &DiscretizedMeasure) -> f64 {
    measure
        .nodes
        .iter()
        .fold(0.0f64, |acc, x| acc.max(x.abs()))
        .max(f64::MIN_POSITIVE)
}

fn breakdown_floor(measure: &DiscretizedMeasure) -> f64 {
    let scale = node_scale(measure);
    (f64::EPSILON * scale).powi(2)
}

/// Discretized Stieltjes procedure: recurrence coefficients as ratios of
/// inner products, with polynomials carried normalized to avoid overflow.
pub fn stieltjes(measure: &DiscretizedMeasure, m: usize) -> Result<ChainCoefficients> {
    let total = check_request(measure, m)?;
    let x = &measure.nodes;
    let w = &measure.weights;
    let floor = breakdown_floor(measure);
    let mut alphas = Vec::with_capacity(m);
    let mut betas = Vec::with_capacity(m);
    betas.push(total);
    let mut prev = vec![0.0; x.len()];
    let mut cur = vec![1.0 / total.sqrt(); x.len()];
    for n in 0..m {
        let mut norm = 0.0;
        let mut first = 0.0;
        for i in 0..x.len() {
            let p2 = w[i] * cur[i] * cur[i];
            norm += p2;
            first += p2 * x[i];
        }
        let alpha = first / norm;
        alphas.push(alpha);
        if n + 1 == m {
            break;
        }
        let sb = if n == 0 { 0.0 } else { betas[n].sqrt() };
        let next: Vec<f64> = (0..x.len())
            .map(|i| (x[i] - alpha) * cur[i] - sb * prev[i])
            .collect();
        let next_norm: f64 = (0..x.len()).map(|i| w[i] * next[i] * next[i]).sum();
        let beta = next_norm / norm;
        // also rejects NaN
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(beta > floor) {
            return Err(Error::Breakdown { index: n + 1, beta });
        }
        betas.push(beta);
        let scale = 1.0 / beta.sqrt();
        prev = cur;
        cur = next.into_iter().map(|v| v * scale).collect();
    }
    Ok(ChainCoefficients {
        alphas,
        betas,
        reservoir: 0,
        method: RecurrenceMethod::Stieltjes,
        statistics: None,
    })
}

fn dot_extended(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = Quad::from(0.0);
    for (x, y) in a.iter().zip(b) {
        acc += Quad::from(*x) * Quad::from(*y);
    }
    acc.0
}

/// Lanczos reduction of `diag(nodes)` with starting vector `sqrt(weights)`,
/// with full reorthogonalization (two Gram–Schmidt passes, inner products
/// accumulated in double-double precision).
pub fn lanczos(measure: &DiscretizedMeasure, m: usize) -> Result<ChainCoefficients> {
    lanczos_with_basis(measure, m).map(|(c, _)| c)
}

/// Largest off-diagonal overlap of the reorthogonalized Lanczos vectors.
///
/// Near `m ~ measure.len()` the forward recurrence used by
/// [`orthogonality_residual`] amplifies rounding errors by many orders of
/// magnitude even for exact coefficients; the Lanczos basis does not.
pub fn lanczos_basis_orthogonality(measure: &DiscretizedMeasure, m: usize) -> Result<f64> {
    let (_, basis) = lanczos_with_basis(measure, m)?;
    let mut worst = 0.0f64;
    for a in 0..basis.len() {
        for b in 0..a {
            worst = worst.max(dot_extended(&basis[a], &basis[b]).abs());
        }
    }
    Ok(worst)
}

fn lanczos_with_basis(
    measure: &DiscretizedMeasure,
    m: usize,
) -> Result<(ChainCoefficients, Vec<Vec<f64>>)> {
    let total = check_request(measure, m)?;
    let x = &measure.nodes;
    let n_nodes = x.len();
    let floor = breakdown_floor(measure);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    let inv = 1.0 / total.sqrt();
    basis.push(measure.weights.iter().map(|w| w.sqrt() * inv).collect());
    let mut alphas = Vec::with_capacity(m);
    let mut betas = Vec::with_capacity(m);
    betas.push(total);
    for n in 0..m {
        let q = &basis[n];
        let mut v: Vec<f64> = (0..n_nodes).map(|i| x[i] * q[i]).collect();
        let alpha = dot_extended(q, &v);
        alphas.push(alpha);
        if n + 1 == m {
            break;
        }
        let sb = if n == 0 { 0.0 } else { betas[n].sqrt() };
        for i in 0..n_nodes {
            v[i] -= alpha * q[i];
            if n > 0 {
                v[i] -= sb * basis[n - 1][i];
            }
        }
        for _pass in 0..2 {
            for k in (0..=n).rev() {
                let c = dot_extended(&basis[k], &v);
                for (vi, qi) in v.iter_mut().zip(&basis[k]) {
                    *vi -= c * qi;
                }
            }
        }
        let beta = dot_extended(&v, &v);
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(beta > floor) {
            return Err(Error::Breakdown { index: n + 1, beta });
        }
        betas.push(beta);
        let scale = 1.0 / beta.sqrt();
        basis.push(v.into_iter().map(|vi| vi * scale).collect());
    }
    let coeffs = ChainCoefficients {
        alphas,
        betas,
        reservoir: 0,
        method: RecurrenceMethod::Lanczos,
        statistics: None,
    };
    Ok((coeffs, basis))
}

/// First `m` recurrence pairs of the monic orthogonal polynomials of `measure`.
///
/// Runs the Stieltjes procedure and falls back to Lanczos with full
/// reorthogonalization when it breaks down or the orthogonality residual
/// exceeds [`RESIDUAL_THRESHOLD`].
pub fn recurrence_coefficients(
    measure: &DiscretizedMeasure,
    m: usize,
) -> Result<ChainCoefficients> {
    check_request(measure, m)?;
    match stieltjes(measure, m) {
        Ok(c) if orthogonality_residual(measure, &c) <= RESIDUAL_THRESHOLD => Ok(c),
        Ok(_) | Err(Error::Breakdown { .. }) => {
            log::debug!("Stieltjes procedure unstable at m = {m}; switching to Lanczos");
            lanczos(measure, m)
        }
        Err(e) => Err(e),
    }
}

/// Chain coefficients of a finite discrete bath: frequencies `omega_k` coupled
/// with strengths `g_k`, i.e. the measure with weights `g_k^2`.
pub fn tridiagonalize_discrete(
    frequencies: &[f64],
    couplings: &[f64],
) -> Result<ChainCoefficients> {
    if frequencies.len() != couplings.len() {
        return Err(Error::DimensionMismatch {
            expected: frequencies.len(),
            found: couplings.len(),
        });
    }
    let pairs = frequencies
        .iter()
        .zip(couplings)
        .map(|(&w, &g)| (w, g * g))
        .collect();
    let measure = DiscretizedMeasure::new(pairs, MeasureOrigin::FiniteDiscrete)?;
    if measure.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    lanczos(&measure, measure.len())
}

/// Largest off-diagonal entry of the Gram matrix of the normalized
/// polynomials `pi_n / rho_n`, evaluated through the recurrence at the nodes.
pub fn orthogonality_residual(measure: &DiscretizedMeasure, coeffs: &ChainCoefficients) -> f64 {
    let m = coeffs.len();
    if m < 2 || measure.is_empty() {
        return 0.0;
    }
    let x = &measure.nodes;
    let w = &measure.weights;
    let mut polys: Vec<Vec<f64>> = Vec::with_capacity(m);
    polys.push(vec![1.0 / coeffs.betas[0].sqrt(); x.len()]);
    for n in 0..m - 1 {
        let sb_next = coeffs.betas[n + 1].sqrt();
        let sb = if n == 0 { 0.0 } else { coeffs.betas[n].sqrt() };
        let next: Vec<f64> = (0..x.len())
            .map(|i| {
                let back = if n == 0 { 0.0 } else { sb * polys[n - 1][i] };
                ((x[i] - coeffs.alphas[n]) * polys[n][i] - back) / sb_next
            })
            .collect();
        polys.push(next);
    }
    let mut worst = 0.0f64;
    for a in 0..m {
        for b in 0..a {
            let g: f64 = (0..x.len()).map(|i| w[i] * polys[a][i] * polys[b][i]).sum();
            worst = worst.max(g.abs());
        }
    }
    worst
}

/// Default node count for a chain of length `m`.
pub fn default_node_count(m: usize) -> usize {
    (4 * m).max(200)
}

/// Discretized thermofield measure of one reservoir. Thermal factors underflow
/// to exactly zero well inside `[0, omega_max]` at low temperature; the nodes
/// are then re-spread over the support that survives.
pub fn reservoir_measure(
    densities: &ThermofieldDensities,
    reservoir: usize,
    n_nodes: usize,
    grading: Grading,
) -> Result<DiscretizedMeasure> {
    let weight = |w| densities.reservoir(reservoir, w);
    let mut upper = densities.omega_max();
    let mut measure = discretize(weight, upper, n_nodes, grading)?;
    // a few passes: each one shrinks the panels and sharpens the cut
    for _ in 0..4 {
        let Some(&last) = measure.nodes().last() else {
            break;
        };
        let next = (last + upper / n_nodes.div_ceil(PANEL_ORDER) as f64).min(upper);
        if next >= 0.9 * upper {
            break;
        }
        upper = next;
        measure = discretize(weight, upper, n_nodes, grading)?;
    }
    Ok(measure)
}

/// Chain for reservoir `j` of a thermofield pair; `None` when that reservoir
/// carries no weight (reservoir 2 at zero temperature).
pub fn reservoir_chain(
    densities: &ThermofieldDensities,
    reservoir: usize,
    m: usize,
    n_nodes: usize,
    grading: Grading,
) -> Result<Option<ChainCoefficients>> {
    if reservoir == 2 && densities.second_reservoir_empty() {
        return Ok(None);
    }
    let measure = reservoir_measure(densities, reservoir, n_nodes, grading)?;
    if measure.is_empty() || measure.total_weight() == 0.0 {
        if reservoir == 2 {
            return Ok(None);
        }
        return Err(Error::EmptyMeasure);
    }
    let mut c = recurrence_coefficients(&measure, m)
        .map_err(|e| e.context(format!("chain coefficients for reservoir {reservoir}")))?;
    c.reservoir = reservoir;
    c.statistics = Some(densities.thermal().statistics());
    Ok(Some(c))
}

/// Thermofield chains of a finite discrete bath: mode `k` couples to reservoir
/// 1 with `g_k u_k` and to reservoir 2 with `g_k v_k`, where `(u_k, v_k)` are
/// the Bogoliubov amplitudes at `omega_k`.
pub fn discrete_thermofield_chains(
    frequencies: &[f64],
    couplings: &[f64],
    thermal: &ThermalParameters,
) -> Result<(ChainCoefficients, Option<ChainCoefficients>)> {
    if frequencies.len() != couplings.len() {
        return Err(Error::DimensionMismatch {
            expected: frequencies.len(),
            found: couplings.len(),
        });
    }
    let mut g1 = Vec::with_capacity(couplings.len());
    let mut g2 = Vec::with_capacity(couplings.len());
    for (&w, &g) in frequencies.iter().zip(couplings) {
        let (u, v) = thermal.bogoliubov(w)?;
        g1.push(g * u);
        g2.push(g * v);
    }
    let mut c1 = tridiagonalize_discrete(frequencies, &g1)?;
    c1.reservoir = 1;
    c1.statistics = Some(thermal.statistics());
    let c2 = match tridiagonalize_discrete(frequencies, &g2) {
        Ok(mut c) => {
            c.reservoir = 2;
            c.statistics = Some(thermal.statistics());
            Some(c)
        }
        Err(Error::EmptyMeasure) => None,
        Err(e) => return Err(e),
    };
    Ok((c1, c2))
}
