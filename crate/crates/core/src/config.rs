//! Flat `key = value` run configuration.
//!
//! Lines are `section.key = value`; `#` starts a comment. Unknown and repeated
//! keys are rejected. The normalized echo lists every key in sorted order and
//! parses back to the same configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use sha2::{Digest, Sha256};

use crate::chainmap::{default_node_count, Grading};
use crate::error::{Error, Result};
use crate::lattice::{DotState, SystemKind, SystemSpec, Truncation};
use crate::reference::EdOptions;
use crate::spectral::{SpectralDensity, Statistics, ThermalParameters, DEFAULT_TAIL_TOLERANCE};
use crate::tensornet::EvolutionConfig;

/// Every accepted key.
pub const KNOWN_KEYS: &[&str] = &[
    "anderson.U",
    "anderson.V",
    "anderson.initial_dot",
    "anderson.t_hyb",
    "bath.beta",
    "bath.couplings",
    "bath.eta",
    "bath.family",
    "bath.frequencies",
    "bath.omega_c",
    "bath.omega_max",
    "bath.s",
    "bath.statistics",
    "bath.table_path",
    "bath.tail_tol",
    "chain.M",
    "chain.M2",
    "chain.allow_unequal",
    "chain.grading",
    "chain.nodes",
    "ed.dense_limit",
    "ed.dim_cap",
    "ed.krylov_tol",
    "ed.n_max",
    "evolve.check_dt",
    "evolve.check_tol",
    "evolve.dt",
    "evolve.measure_stride",
    "evolve.t_final",
    "mps.D_max",
    "mps.fock_warning",
    "mps.n_max",
    "mps.n_max_first",
    "mps.svd_tol",
    "run.label",
    "run.output_dir",
    "run.seed",
    "system.a_im",
    "system.a_re",
    "system.b_im",
    "system.b_re",
    "system.coupling_op",
    "system.kind",
    "system.omega_S",
];

/// Default step as a fraction of `1 / omega_max`.
pub const DEFAULT_DT_SCALE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    base_dir: Option<PathBuf>,
}

/// Bath of a run: a continuous density or a finite set of modes.
#[derive(Debug, Clone)]
pub enum BathSpec {
    Continuum {
        density: SpectralDensity,
        thermal: ThermalParameters,
    },
    Discrete {
        frequencies: Vec<f64>,
        couplings: Vec<f64>,
        thermal: ThermalParameters,
    },
}

impl BathSpec {
    pub fn thermal(&self) -> &ThermalParameters {
        match self {
            BathSpec::Continuum { thermal, .. } | BathSpec::Discrete { thermal, .. } => thermal,
        }
    }

    pub fn omega_max(&self) -> f64 {
        match self {
            BathSpec::Continuum { density, .. } => density.omega_max(),
            BathSpec::Discrete { frequencies, .. } => {
                frequencies.iter().fold(0.0f64, |a, &w| a.max(w.abs()))
            }
        }
    }

    pub fn density(&self) -> Result<&SpectralDensity> {
        match self {
            BathSpec::Continuum { density, .. } => Ok(density),
            BathSpec::Discrete { .. } => Err(Error::config(
                "bath.family",
                "this run needs a continuous spectral density, not a discrete bath",
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub m: Option<usize>,
    pub m2: Option<usize>,
    pub nodes: Option<usize>,
    pub grading: Grading,
    pub allow_unequal: bool,
}

impl ChainConfig {
    pub fn node_count(&self, m: usize) -> usize {
        self.nodes.unwrap_or_else(|| default_node_count(m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCheck {
    pub enabled: bool,
    pub tolerance: f64,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    format!("line {}", lineno + 1),
                    format!("expected `key = value`, got `{line}`"),
                )
            })?;
            let key = key.trim();
            if cfg.values.contains_key(key) {
                return Err(Error::config(key, "key given more than once"));
            }
            cfg.set(key, value.trim())?;
        }
        Ok(cfg)
    }

    /// Reads a config file; relative table paths resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::config(key, "unknown key"));
        }
        if value.is_empty() {
            return Err(Error::config(key, "empty value"));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    /// Sorted `key = value` lines.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Hex SHA-256 of the echo.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.echo().as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::config(key, "required key is missing"))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        self.get(key).map_or(Ok(default), |v| parse_f64(key, v))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        parse_f64(key, self.require(key)?)
    }

    pub fn usize_opt(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| {
                v.parse::<usize>().map_err(|_| {
                    Error::config(key, format!("expected a non-negative integer, got `{v}`"))
                })
            })
            .transpose()
    }

    pub fn require_usize(&self, key: &str) -> Result<usize> {
        self.usize_opt(key)?
            .ok_or_else(|| Error::config(key, "required key is missing"))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(Error::config(
                key,
                format!("expected true or false, got `{v}`"),
            )),
        }
    }

    fn list(&self, key: &str) -> Result<Vec<f64>> {
        self.require(key)?
            .split(',')
            .map(|f| parse_f64(key, f.trim()))
            .collect()
    }

    pub fn label(&self) -> &str {
        self.get("run.label").unwrap_or("run")
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(self.get("run.output_dir").unwrap_or("."))
    }

    pub fn statistics(&self) -> Result<Statistics> {
        match self.get("bath.statistics").unwrap_or("bosonic") {
            "bosonic" => Ok(Statistics::Bosonic),
            "fermionic" => Ok(Statistics::Fermionic),
            v => Err(Error::config(
                "bath.statistics",
                format!("expected bosonic or fermionic, got `{v}`"),
            )),
        }
    }

    pub fn thermal(&self) -> Result<ThermalParameters> {
        let beta = self.require_f64("bath.beta")?;
        ThermalParameters::new(beta, self.statistics()?).map_err(|e| e.context("bath.beta"))
    }

    pub fn bath(&self) -> Result<BathSpec> {
        let thermal = self.thermal()?;
        match self.require("bath.family")? {
            "ohmic" => {
                let eta = self.require_f64("bath.eta")?;
                let s = self.require_f64("bath.s")?;
                let omega_c = self.f64_or("bath.omega_c", 1.0)?;
                let omega_max = self.f64_or(
                    "bath.omega_max",
                    crate::spectral::DEFAULT_CUTOFF_MULTIPLE * omega_c,
                )?;
                let tail = self.f64_or("bath.tail_tol", DEFAULT_TAIL_TOLERANCE)?;
                let density = SpectralDensity::ohmic_with_support(eta, s, omega_c, omega_max, tail)
                    .map_err(|e| e.context("bath"))?;
                Ok(BathSpec::Continuum { density, thermal })
            }
            "tabulated" => {
                let rel = PathBuf::from(self.require("bath.table_path")?);
                let path = match (&self.base_dir, rel.is_relative()) {
                    (Some(dir), true) => dir.join(rel),
                    _ => rel,
                };
                let density = SpectralDensity::from_table_file(&path)
                    .map_err(|e| e.context("bath.table_path"))?;
                Ok(BathSpec::Continuum { density, thermal })
            }
            "discrete" => {
                let frequencies = self.list("bath.frequencies")?;
                let couplings = self.list("bath.couplings")?;
                if frequencies.len() != couplings.len() {
                    return Err(Error::config(
                        "bath.couplings",
                        format!(
                            "{} couplings for {} frequencies",
                            couplings.len(),
                            frequencies.len()
                        ),
                    ));
                }
                Ok(BathSpec::Discrete {
                    frequencies,
                    couplings,
                    thermal,
                })
            }
            v => Err(Error::config(
                "bath.family",
                format!("expected ohmic, tabulated or discrete, got `{v}`"),
            )),
        }
    }

    pub fn system(&self) -> Result<SystemSpec> {
        match self.require("system.kind")? {
            "spin" => {
                let kind = match self.get("system.coupling_op").unwrap_or("sigma_z") {
                    "sigma_z" => SystemKind::SpinDephasing,
                    "sigma_x" => SystemKind::SpinTransverse,
                    v => {
                        return Err(Error::config(
                            "system.coupling_op",
                            format!("expected sigma_z or sigma_x, got `{v}`"),
                        ))
                    }
                };
                let h = std::f64::consts::FRAC_1_SQRT_2;
                let a = C64::new(
                    self.f64_or("system.a_re", h)?,
                    self.f64_or("system.a_im", 0.0)?,
                );
                let b = C64::new(
                    self.f64_or("system.b_re", h)?,
                    self.f64_or("system.b_im", 0.0)?,
                );
                let omega_s = self.require_f64("system.omega_S")?;
                SystemSpec::spin(kind, omega_s, a, b).map_err(|e| e.context("system.a/b"))
            }
            "anderson" => {
                let dot = match self.get("anderson.initial_dot").unwrap_or("up") {
                    "empty" => DotState::Empty,
                    "up" => DotState::Up,
                    "down" => DotState::Down,
                    "double" => DotState::DoublyOccupied,
                    v => {
                        return Err(Error::config(
                            "anderson.initial_dot",
                            format!("expected empty, up, down or double, got `{v}`"),
                        ))
                    }
                };
                Ok(SystemSpec::anderson(
                    self.require_f64("anderson.U")?,
                    self.require_f64("anderson.V")?,
                    self.require_f64("anderson.t_hyb")?,
                    dot,
                ))
            }
            v => Err(Error::config(
                "system.kind",
                format!("expected spin or anderson, got `{v}`"),
            )),
        }
    }

    pub fn chain(&self) -> Result<ChainConfig> {
        let grading = match self.get("chain.grading").unwrap_or("logarithmic") {
            "logarithmic" => Grading::Logarithmic,
            "uniform" => Grading::Uniform,
            v => {
                return Err(Error::config(
                    "chain.grading",
                    format!("expected logarithmic or uniform, got `{v}`"),
                ))
            }
        };
        let cfg = ChainConfig {
            m: self.usize_opt("chain.M")?,
            m2: self.usize_opt("chain.M2")?,
            nodes: self.usize_opt("chain.nodes")?,
            grading,
            allow_unequal: self.bool_or("chain.allow_unequal", false)?,
        };
        if cfg.m == Some(0) {
            return Err(Error::config("chain.M", "chain length must be positive"));
        }
        if cfg.m2.is_some() && cfg.m2 != cfg.m && !cfg.allow_unequal {
            return Err(Error::config(
                "chain.M2",
                "a second chain length differing from chain.M needs chain.allow_unequal = true",
            ));
        }
        Ok(cfg)
    }

    pub fn truncation(&self) -> Result<Truncation> {
        let n_max = self.require_usize("mps.n_max")?;
        let n_max_first = self.usize_opt("mps.n_max_first")?.unwrap_or(n_max);
        if n_max == 0 || n_max_first == 0 {
            return Err(Error::config(
                "mps.n_max",
                "occupation cutoffs must be positive",
            ));
        }
        Ok(Truncation {
            n_max,
            n_max_first,
            allow_unequal_chains: self.bool_or("chain.allow_unequal", false)?,
        })
    }

    /// Time step: `evolve.dt`, or the largest step not above
    /// `DEFAULT_DT_SCALE / omega_max` that divides `t_final`.
    pub fn time_step(&self, omega_max: f64) -> Result<(f64, f64)> {
        let t_final = self.require_f64("evolve.t_final")?;
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::config(
                "evolve.t_final",
                "must be positive and finite",
            ));
        }
        let dt = match self.get("evolve.dt") {
            Some(v) => parse_f64("evolve.dt", v)?,
            None => {
                let target = DEFAULT_DT_SCALE / omega_max.max(f64::MIN_POSITIVE);
                t_final / (t_final / target).ceil()
            }
        };
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config("evolve.dt", "must be positive and finite"));
        }
        Ok((dt, t_final))
    }

    pub fn measure_stride(&self) -> Result<usize> {
        let stride = self.usize_opt("evolve.measure_stride")?.unwrap_or(1);
        if stride == 0 {
            return Err(Error::config("evolve.measure_stride", "must be at least 1"));
        }
        Ok(stride)
    }

    pub fn evolution(&self, omega_max: f64) -> Result<EvolutionConfig> {
        let (dt, t_final) = self.time_step(omega_max)?;
        let cfg = EvolutionConfig {
            dt,
            t_final,
            d_max: self.require_usize("mps.D_max")?,
            svd_tol: self.f64_or("mps.svd_tol", 0.0)?,
            measure_stride: self.measure_stride()?,
            fock_warning_threshold: self.f64_or("mps.fock_warning", 1e-3)?,
        };
        cfg.validate().map_err(|e| e.context("evolve/mps"))?;
        Ok(cfg)
    }

    pub fn step_check(&self) -> Result<StepCheck> {
        Ok(StepCheck {
            enabled: self.bool_or("evolve.check_dt", true)?,
            tolerance: self.f64_or("evolve.check_tol", 1e-3)?,
        })
    }

    pub fn ed_options(&self) -> Result<EdOptions> {
        let d = EdOptions::default();
        Ok(EdOptions {
            dim_cap: self.usize_opt("ed.dim_cap")?.unwrap_or(d.dim_cap),
            dense_limit: self.usize_opt("ed.dense_limit")?.unwrap_or(d.dense_limit),
            krylov_tol: self.f64_or("ed.krylov_tol", d.krylov_tol)?,
            krylov_dim: d.krylov_dim,
        })
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::config(key, format!("expected a number, got `{v}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# dephasing run
bath.family = ohmic
bath.eta = 0.1
bath.s = 1
bath.beta = 5
system.kind = spin
system.omega_S = 0
chain.M = 40
mps.n_max = 3
mps.D_max = 20
evolve.t_final = 10
evolve.dt = 0.05   # trailing comment
";

    #[test]
    fn parses_and_builds_components() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.get("evolve.dt"), Some("0.05"));
        let bath = cfg.bath().unwrap();
        assert_eq!(bath.omega_max(), 10.0);
        assert_eq!(bath.thermal().beta(), 5.0);
        let sys = cfg.system().unwrap();
        assert_eq!(sys.kind, SystemKind::SpinDephasing);
        let ev = cfg.evolution(10.0).unwrap();
        assert_eq!((ev.dt, ev.d_max, ev.svd_tol), (0.05, 20, 0.0));
        assert_eq!(cfg.chain().unwrap().m, Some(40));
    }

    #[test]
    fn unknown_and_repeated_keys_are_rejected() {
        let err = RunConfig::parse("bath.etaa = 1").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "bath.etaa"));
        let err = RunConfig::parse("bath.eta = 1\nbath.eta = 2").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "bath.eta"));
        assert!(RunConfig::parse("no equals sign").is_err());
    }

    #[test]
    fn missing_required_key_names_it() {
        let cfg = RunConfig::parse("bath.family = ohmic\nbath.beta = 1").unwrap();
        let err = cfg.bath().unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "bath.eta"));
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        let again = RunConfig::parse(&cfg.echo()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn infinite_beta_is_zero_temperature() {
        let cfg = RunConfig::parse("bath.beta = inf").unwrap();
        assert!(cfg.thermal().unwrap().is_zero_temperature());
    }

    #[test]
    fn default_step_divides_the_window() {
        let cfg = RunConfig::parse("evolve.t_final = 3").unwrap();
        let (dt, t) = cfg.time_step(10.0).unwrap();
        assert_eq!(t, 3.0);
        assert!(dt <= 0.05 + 1e-15);
        assert!(((t / dt).round() * dt - t).abs() < 1e-12);
    }

    #[test]
    fn unequal_chains_need_opt_in() {
        let cfg = RunConfig::parse("chain.M = 4\nchain.M2 = 3").unwrap();
        assert!(cfg.chain().is_err());
        let cfg =
            RunConfig::parse("chain.M = 4\nchain.M2 = 3\nchain.allow_unequal = true").unwrap();
        assert_eq!(cfg.chain().unwrap().m2, Some(3));
    }

    #[test]
    fn discrete_bath_needs_matching_lists() {
        let cfg = RunConfig::parse(
            "bath.family = discrete\nbath.beta = 1\nbath.frequencies = 0.5, 1\nbath.couplings = 0.1",
        )
        .unwrap();
        let err = cfg.bath().unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "bath.couplings"));
    }
}
