//! Spectral densities, thermal occupations and the thermofield-weighted
//! densities carried by the two zero-temperature reservoirs.

use std::path::Path;

use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

pub const DEFAULT_CUTOFF_MULTIPLE: f64 = 10.0;
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub enum DensityFamily {
    /// `eta * omega^s * exp(-omega / omega_c)`
    Ohmic { eta: f64, s: f64, omega_c: f64 },
    /// Piecewise-linear interpolation of `(frequency, value)` rows.
    Tabulated { table: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    family: DensityFamily,
    omega_max: f64,
}

impl SpectralDensity {
    /// Ohmic-family density with `omega_max = 10 * omega_c`.
    pub fn ohmic(eta: f64, s: f64, omega_c: f64) -> Result<Self> {
        Self::ohmic_with_support(
            eta,
            s,
            omega_c,
            DEFAULT_CUTOFF_MULTIPLE * omega_c,
            DEFAULT_TAIL_TOLERANCE,
        )
    }

    pub fn ohmic_with_support(
        eta: f64,
        s: f64,
        omega_c: f64,
        omega_max: f64,
        tail_tol: f64,
    ) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Validation(format!(
                "eta must be positive, got {eta}"
            )));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Validation(format!("s must be positive, got {s}")));
        }
        if !(omega_c > 0.0 && omega_c.is_finite()) {
            return Err(Error::Validation(format!(
                "omega_c must be positive, got {omega_c}"
            )));
        }
        if !(omega_max > 0.0 && omega_max.is_finite()) {
            return Err(Error::Validation(format!(
                "omega_max must be positive, got {omega_max}"
            )));
        }
        let tail = ohmic_tail_fraction(s, omega_max / omega_c);
        if tail > tail_tol {
            return Err(Error::Validation(format!(
                "spectral weight beyond omega_max = {omega_max} is a fraction {tail:e} \
                 of the total, above the tail tolerance {tail_tol:e}"
            )));
        }
        Ok(Self {
            family: DensityFamily::Ohmic { eta, s, omega_c },
            omega_max,
        })
    }

    /// Tabulated density; the support ends at the last tabulated frequency.
    pub fn tabulated(table: Vec<(f64, f64)>) -> Result<Self> {
        if table.len() < 2 {
            return Err(Error::Validation(
                "tabulated density needs at least two rows".into(),
            ));
        }
        for (i, &(w, v)) in table.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Validation(format!(
                    "row {i}: frequency {w} must be finite and non-negative"
                )));
            }
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation(format!(
                    "row {i}: spectral density value {v} must be finite and non-negative"
                )));
            }
            if i > 0 && w <= table[i - 1].0 {
                return Err(Error::Validation(format!(
                    "row {i}: frequencies must be strictly increasing"
                )));
            }
        }
        let omega_max = table.last().unwrap().0;
        if omega_max <= 0.0 {
            return Err(Error::Validation("omega_max must be positive".into()));
        }
        Ok(Self {
            family: DensityFamily::Tabulated { table },
            omega_max,
        })
    }

    /// Reads a two-column whitespace- or comma-separated table; `#` starts a comment.
    pub fn from_table_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty())
                .collect();
            if fields.len() != 2 {
                return Err(Error::Validation(format!(
                    "{}:{}: expected two columns",
                    path.display(),
                    lineno + 1
                )));
            }
            let parse = |f: &str| {
                f.parse::<f64>().map_err(|e| {
                    Error::Validation(format!("{}:{}: {e}", path.display(), lineno + 1))
                })
            };
            rows.push((parse(fields[0])?, parse(fields[1])?));
        }
        Self::tabulated(rows)
    }

    pub fn family(&self) -> &DensityFamily {
        &self.family
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    /// `J(omega)` on `[0, omega_max]`.
    pub fn evaluate(&self, omega: f64) -> Result<f64> {
        if !(0.0..=self.omega_max).contains(&omega) {
            return Err(Error::Domain(format!(
                "omega = {omega} outside [0, {}]",
                self.omega_max
            )));
        }
        Ok(self.eval_unchecked(omega))
    }

    pub(crate) fn eval_unchecked(&self, omega: f64) -> f64 {
        match &self.family {
            DensityFamily::Ohmic { eta, s, omega_c } => {
                if omega == 0.0 {
                    0.0
                } else {
                    eta * omega.powf(*s) * (-omega / omega_c).exp()
                }
            }
            DensityFamily::Tabulated { table } => interpolate(table, omega),
        }
    }

    /// Exponent governing `J ~ omega^s` at the origin, when known.
    pub fn low_frequency_exponent(&self) -> Option<f64> {
        match &self.family {
            DensityFamily::Ohmic { s, .. } => Some(*s),
            DensityFamily::Tabulated { .. } => None,
        }
    }
}

fn interpolate(table: &[(f64, f64)], omega: f64) -> f64 {
    let first = table[0].0;
    if omega < first {
        return 0.0;
    }
    let idx = table.partition_point(|&(w, _)| w <= omega);
    if idx >= table.len() {
        return table.last().unwrap().1;
    }
    let (w0, v0) = table[idx - 1];
    let (w1, v1) = table[idx];
    v0 + (v1 - v0) * (omega - w0) / (w1 - w0)
}

/// `Gamma(s+1, x) / Gamma(s+1)`, the fraction of ohmic weight beyond `x * omega_c`.
pub fn ohmic_tail_fraction(s: f64, x: f64) -> f64 {
    gamma_ur(s + 1.0, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistics {
    Bosonic,
    Fermionic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalParameters {
    beta: f64,
    statistics: Statistics,
}

impl ThermalParameters {
    /// `beta = f64::INFINITY` selects zero temperature.
    pub fn new(beta: f64, statistics: Statistics) -> Result<Self> {
        if beta.is_nan() || beta <= 0.0 {
            return Err(Error::Validation(format!(
                "beta must be positive or infinite, got {beta}"
            )));
        }
        Ok(Self { beta, statistics })
    }

    pub fn zero_temperature(statistics: Statistics) -> Self {
        Self {
            beta: f64::INFINITY,
            statistics,
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn is_zero_temperature(&self) -> bool {
        self.beta.is_infinite()
    }

    /// Bose or Fermi occupation of a mode at `omega`.
    pub fn occupation(&self, omega: f64) -> Result<f64> {
        if !omega.is_finite() || omega < 0.0 {
            return Err(Error::Domain(format!(
                "omega = {omega} must be non-negative"
            )));
        }
        match self.statistics {
            Statistics::Bosonic => {
                if omega == 0.0 {
                    return Err(Error::Singularity(
                        "Bose occupation diverges at omega = 0".into(),
                    ));
                }
                if self.is_zero_temperature() {
                    return Ok(0.0);
                }
                Ok(1.0 / (self.beta * omega).exp_m1())
            }
            Statistics::Fermionic => {
                if omega == 0.0 {
                    return Ok(0.5);
                }
                if self.is_zero_temperature() {
                    return Ok(0.0);
                }
                let e = (-self.beta * omega).exp();
                Ok(e / (1.0 + e))
            }
        }
    }

    /// Bogoliubov mixing amplitudes `(u, v)`: `(cosh, sinh) = (sqrt(1+n), sqrt(n))`
    /// for bosons and `(cos, sin) = (sqrt(1-f), sqrt(f))` for fermions.
    pub fn bogoliubov(&self, omega: f64) -> Result<(f64, f64)> {
        let occ = self.occupation(omega)?;
        Ok(match self.statistics {
            Statistics::Bosonic => ((1.0 + occ).sqrt(), occ.sqrt()),
            Statistics::Fermionic => ((1.0 - occ).sqrt(), occ.sqrt()),
        })
    }
}

/// The pair of weight functions `J1`, `J2` seen by the two virtual reservoirs.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermofieldDensities {
    source: SpectralDensity,
    thermal: ThermalParameters,
}

impl ThermofieldDensities {
    pub fn source(&self) -> &SpectralDensity {
        &self.source
    }

    pub fn thermal(&self) -> &ThermalParameters {
        &self.thermal
    }

    pub fn omega_max(&self) -> f64 {
        self.source.omega_max
    }

    /// `J1 = (1+n) J` (bosons) or `(1-f) J` (fermions).
    pub fn j1(&self, omega: f64) -> Result<f64> {
        let j = self.source.evaluate(omega)?;
        if self.thermal.is_zero_temperature() || j == 0.0 {
            return Ok(j);
        }
        let occ = self.thermal.occupation(omega)?;
        Ok(match self.thermal.statistics {
            Statistics::Bosonic => (1.0 + occ) * j,
            Statistics::Fermionic => (1.0 - occ) * j,
        })
    }

    /// `J2 = n J` (bosons) or `f J` (fermions).
    pub fn j2(&self, omega: f64) -> Result<f64> {
        let j = self.source.evaluate(omega)?;
        if self.thermal.is_zero_temperature() || j == 0.0 {
            return Ok(0.0);
        }
        Ok(self.thermal.occupation(omega)? * j)
    }

    /// Selects `J1` (reservoir 1) or `J2` (reservoir 2).
    pub fn reservoir(&self, index: usize, omega: f64) -> Result<f64> {
        match index {
            1 => self.j1(omega),
            2 => self.j2(omega),
            _ => Err(Error::Domain(format!(
                "reservoir index {index} not in {{1, 2}}"
            ))),
        }
    }

    /// Chain 2 carries no weight at zero temperature.
    pub fn second_reservoir_empty(&self) -> bool {
        self.thermal.is_zero_temperature()
    }
}

pub fn thermofield_densities(
    source: &SpectralDensity,
    thermal: &ThermalParameters,
) -> ThermofieldDensities {
    ThermofieldDensities {
        source: source.clone(),
        thermal: *thermal,
    }
}

/// Linear dispersion `omega(k) = omega_max * k` for `k` in `[0, 1]`.
pub fn dispersion(k: f64, omega_max: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&k) {
        return Err(Error::Domain(format!("k = {k} outside [0, 1]")));
    }
    Ok(omega_max * k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn ohmic_closed_forms() {
        let j = SpectralDensity::ohmic(0.1, 1.0, 1.0).unwrap();
        assert_eq!(j.evaluate(0.0).unwrap(), 0.0);
        assert!(close(j.evaluate(1.0).unwrap(), 0.1 / E, 1e-15));
        let j = SpectralDensity::ohmic(0.01, 0.5, 15.0).unwrap();
        assert!(close(
            j.evaluate(15.0).unwrap(),
            0.01 * 15f64.sqrt() / E,
            1e-15
        ));
        assert_eq!(j.omega_max(), 150.0);
    }

    #[test]
    fn evaluate_out_of_range_is_domain_error() {
        let j = SpectralDensity::ohmic(0.1, 1.0, 1.0).unwrap();
        assert!(matches!(j.evaluate(-0.1), Err(Error::Domain(_))));
        assert!(matches!(j.evaluate(10.5), Err(Error::Domain(_))));
    }

    #[test]
    fn construction_validates_parameters() {
        assert!(SpectralDensity::ohmic(0.0, 1.0, 1.0).is_err());
        assert!(SpectralDensity::ohmic(0.1, -1.0, 1.0).is_err());
        assert!(SpectralDensity::ohmic(0.1, 1.0, 0.0).is_err());
        // support far too short for the tail tolerance
        assert!(SpectralDensity::ohmic_with_support(0.1, 1.0, 1.0, 2.0, 1e-6).is_err());
        assert!(SpectralDensity::ohmic_with_support(0.1, 1.0, 1.0, 20.0, 1e-6).is_ok());
    }

    #[test]
    fn tail_fraction_matches_closed_form_for_integer_exponent() {
        // Gamma(2, x) / Gamma(2) = e^{-x} (1 + x)
        let x: f64 = 10.0;
        assert!(close(
            ohmic_tail_fraction(1.0, x),
            (-x).exp() * (1.0 + x),
            1e-10
        ));
    }

    #[test]
    fn tabulated_interpolates_and_rejects_negative_values() {
        let j = SpectralDensity::tabulated(vec![(0.0, 0.0), (1.0, 2.0), (3.0, 0.0)]).unwrap();
        assert!(close(j.evaluate(0.5).unwrap(), 1.0, 1e-15));
        assert!(close(j.evaluate(2.0).unwrap(), 1.0, 1e-15));
        assert_eq!(j.omega_max(), 3.0);
        assert!(matches!(
            SpectralDensity::tabulated(vec![(0.0, 1.0), (1.0, -0.5)]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn occupations() {
        let zero_t = ThermalParameters::zero_temperature(Statistics::Bosonic);
        assert_eq!(zero_t.occupation(1.0).unwrap(), 0.0);
        let b1 = ThermalParameters::new(1.0, Statistics::Bosonic).unwrap();
        assert!(close(b1.occupation(1.0).unwrap(), 1.0 / (E - 1.0), 1e-15));
        assert!(close(b1.occupation(1.0).unwrap(), 0.581_976_7, 1e-7));
        assert!(matches!(b1.occupation(0.0), Err(Error::Singularity(_))));
        for beta in [0.1, 1.0, 10.0, f64::INFINITY] {
            let f = ThermalParameters::new(beta, Statistics::Fermionic).unwrap();
            assert_eq!(f.occupation(0.0).unwrap(), 0.5);
        }
        assert!(ThermalParameters::new(0.0, Statistics::Bosonic).is_err());
        assert!(ThermalParameters::new(-1.0, Statistics::Bosonic).is_err());
    }

    #[test]
    fn thermofield_examples() {
        let j = SpectralDensity::ohmic(0.1, 1.0, 1.0).unwrap();
        let th = ThermalParameters::new(1.0, Statistics::Bosonic).unwrap();
        let tf = thermofield_densities(&j, &th);
        let n = 1.0 / (E - 1.0);
        assert!(close(tf.j1(1.0).unwrap(), 0.1 / E * (1.0 + n), 1e-15));
        assert!(close(tf.j2(1.0).unwrap(), 0.1 / E * n, 1e-15));

        let cold = thermofield_densities(
            &j,
            &ThermalParameters::zero_temperature(Statistics::Bosonic),
        );
        for w in [0.0, 0.3, 1.0, 7.0] {
            assert_eq!(cold.j2(w).unwrap(), 0.0);
            assert_eq!(cold.j1(w).unwrap(), j.evaluate(w).unwrap());
        }
        assert!(cold.second_reservoir_empty());

        let flat = SpectralDensity::tabulated(vec![(0.0, 1.0), (1.0, 1.0)]).unwrap();
        let ft = ThermalParameters::new(3.0, Statistics::Fermionic).unwrap();
        let tf = thermofield_densities(&flat, &ft);
        assert_eq!(tf.j1(0.0).unwrap(), 0.5);
        assert_eq!(tf.j2(0.0).unwrap(), 0.5);
    }

    #[test]
    fn dispersion_is_linear_on_unit_interval() {
        assert_eq!(dispersion(0.0, 3.0).unwrap(), 0.0);
        assert_eq!(dispersion(1.0, 10.0).unwrap(), 10.0);
        assert_eq!(dispersion(0.5, 150.0).unwrap(), 75.0);
        assert!(dispersion(1.5, 1.0).is_err());
        assert!(dispersion(-0.1, 1.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bosonic_difference_and_fermionic_sum_recover_density(
                omega in 1e-3f64..10.0,
                beta in 0.05f64..100.0,
                s in 0.2f64..2.0,
            ) {
                let j = SpectralDensity::ohmic(0.1, s, 1.0).unwrap();
                let jv = j.evaluate(omega).unwrap();
                let b = thermofield_densities(&j, &ThermalParameters::new(beta, Statistics::Bosonic).unwrap());
                let d = b.j1(omega).unwrap() - b.j2(omega).unwrap();
                prop_assert!((d - jv).abs() <= 1e-12 * (1.0 + b.j1(omega).unwrap()));
                let f = thermofield_densities(&j, &ThermalParameters::new(beta, Statistics::Fermionic).unwrap());
                let sum = f.j1(omega).unwrap() + f.j2(omega).unwrap();
                prop_assert!((sum - jv).abs() <= 1e-15 * (1.0 + jv));
                prop_assert!(f.j1(omega).unwrap() >= 0.0 && f.j2(omega).unwrap() >= 0.0);
            }

            #[test]
            fn occupations_decrease_with_beta(omega in 1e-2f64..10.0, beta in 0.05f64..20.0, factor in 1.01f64..3.0) {
                for stats in [Statistics::Bosonic, Statistics::Fermionic] {
                    let lo = ThermalParameters::new(beta, stats).unwrap().occupation(omega).unwrap();
                    let hi = ThermalParameters::new(beta * factor, stats).unwrap().occupation(omega).unwrap();
                    prop_assert!(hi < lo);
                }
            }

            #[test]
            fn bogoliubov_amplitudes_are_normalised(omega in 1e-3f64..10.0, beta in 0.05f64..50.0) {
                let (u, v) = ThermalParameters::new(beta, Statistics::Bosonic).unwrap().bogoliubov(omega).unwrap();
                prop_assert!((u * u - v * v - 1.0).abs() < 1e-9 * (1.0 + u * u));
                let (c, s) = ThermalParameters::new(beta, Statistics::Fermionic).unwrap().bogoliubov(omega).unwrap();
                prop_assert!((c * c + s * s - 1.0).abs() < 1e-14);
            }
        }
    }
}
