//! Run orchestration: config → chains → lattice → solver → artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::chainmap::{discrete_thermofield_chains, reservoir_chain, ChainCoefficients};
use crate::config::{BathSpec, RunConfig};
use crate::error::{Error, Result};
use crate::lattice::{build_anderson, build_spin_boson, LatticeModel, SystemSpec};
use crate::mastereq::{compute_kernels, evolve_system};
use crate::operators;
use crate::reference::{exact_dephasing, exact_diagonalization, StarModel};
use crate::series::{compare, TimeSeries};
use crate::spectral::thermofield_densities;
use crate::tensornet::{step_count, tebd_evolve, vacuum_state, EvolutionConfig, Observable};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    ChainCoeffs,
    EvolveMps,
    EvolveMe,
    ExactDephasing,
    ExactEd,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::ChainCoeffs => "chain-coeffs",
            Subcommand::EvolveMps => "evolve-mps",
            Subcommand::EvolveMe => "evolve-me",
            Subcommand::ExactDephasing => "exact-dephasing",
            Subcommand::ExactEd => "exact-ed",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            Subcommand::ChainCoeffs,
            Subcommand::EvolveMps,
            Subcommand::EvolveMe,
            Subcommand::ExactDephasing,
            Subcommand::ExactEd,
        ]
        .into_iter()
        .find(|s| s.name() == name)
    }
}

#[derive(Debug, Clone)]
pub enum Artifact {
    Series(TimeSeries),
    Chains(Vec<ChainCoefficients>),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub artifact: Artifact,
    /// Extra header comments, e.g. the step-halving deviation.
    pub notes: Vec<String>,
}

impl RunOutput {
    pub fn series(&self) -> Option<&TimeSeries> {
        match &self.artifact {
            Artifact::Series(s) => Some(s),
            Artifact::Chains(_) => None,
        }
    }
}

/// Chain coefficients for reservoir 1 and, at finite temperature, reservoir 2.
pub fn build_chains(
    cfg: &RunConfig,
    bath: &BathSpec,
) -> Result<(ChainCoefficients, Option<ChainCoefficients>)> {
    let chain = cfg.chain()?;
    match bath {
        BathSpec::Continuum { density, thermal } => {
            let m = chain
                .m
                .ok_or_else(|| Error::config("chain.M", "required key is missing"))?;
            let m2 = chain.m2.unwrap_or(m);
            let dens = thermofield_densities(density, thermal);
            let (c1, c2) = rayon::join(
                || reservoir_chain(&dens, 1, m, chain.node_count(m), chain.grading),
                || reservoir_chain(&dens, 2, m2, chain.node_count(m2), chain.grading),
            );
            let c1 = c1?.ok_or(Error::EmptyMeasure)?;
            Ok((c1, c2?))
        }
        BathSpec::Discrete {
            frequencies,
            couplings,
            thermal,
        } => {
            let (c1, c2) = discrete_thermofield_chains(frequencies, couplings, thermal)?;
            let limit = |c: ChainCoefficients, m: Option<usize>, key: &str| match m {
                Some(m) if m > c.len() => Err(Error::config(
                    key,
                    format!(
                        "a discrete bath of {} modes gives at most {} chain sites",
                        frequencies.len(),
                        c.len()
                    ),
                )),
                Some(m) => Ok(c.truncated(m)),
                None => Ok(c),
            };
            let c1 = limit(c1, chain.m, "chain.M")?;
            let c2 = c2
                .map(|c| limit(c, chain.m2.or(chain.m), "chain.M2"))
                .transpose()?;
            Ok((c1, c2))
        }
    }
}

pub fn build_model(cfg: &RunConfig, bath: &BathSpec, system: &SystemSpec) -> Result<LatticeModel> {
    let (c1, c2) = build_chains(cfg, bath)?;
    if system.is_spin() {
        build_spin_boson(system, &c1, c2.as_ref(), cfg.truncation()?)
    } else {
        build_anderson(
            system,
            &c1,
            c2.as_ref(),
            cfg.bool_or("chain.allow_unequal", false)?,
        )
    }
}

/// System observables: `sx, sy, sz` for a spin, `n_up, n_down` for a dot.
pub fn system_observables(model: &LatticeModel) -> Vec<Observable> {
    let site = model.system_index();
    let ops = if model.system().is_spin() {
        vec![
            ("sx", operators::sigma_x()),
            ("sy", operators::sigma_y()),
            ("sz", operators::sigma_z()),
        ]
    } else {
        vec![
            ("n_up", operators::dot_number_up()),
            ("n_down", operators::dot_number_down()),
        ]
    };
    ops.into_iter()
        .map(|(name, operator)| Observable {
            name: name.into(),
            site,
            operator,
        })
        .collect()
}

/// Times at which a run with this step and stride records observables.
pub fn measurement_times(dt: f64, t_final: f64, stride: usize) -> Result<Vec<f64>> {
    let n = step_count(t_final, dt)?;
    Ok((0..=n)
        .filter(|k| k % stride.max(1) == 0 || *k == n)
        .map(|k| k as f64 * dt)
        .collect())
}

fn halved(cfg: &EvolutionConfig) -> EvolutionConfig {
    EvolutionConfig {
        dt: 0.5 * cfg.dt,
        measure_stride: 2 * cfg.measure_stride,
        ..*cfg
    }
}

/// Maximum deviation over shared columns.
fn max_deviation(a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
    Ok(compare(a, b)?.iter().map(|d| d.max_abs).fold(0.0, f64::max))
}

fn step_note(cfg: &RunConfig, dev: f64, dt: f64) -> Result<String> {
    let check = cfg.step_check()?;
    if dev > check.tolerance {
        warn!(
            "halving dt = {dt} changes observables by {dev:e}, above evolve.check_tol = {:e}",
            check.tolerance
        );
    }
    Ok(format!("dt-halving max deviation: {dev:.6e}"))
}

pub fn run_mps(cfg: &RunConfig) -> Result<RunOutput> {
    let bath = cfg.bath()?;
    let system = cfg.system()?;
    let model = build_model(cfg, &bath, &system).map_err(|e| e.context("lattice"))?;
    let ev = cfg.evolution(bath.omega_max())?;
    let obs = system_observables(&model);
    info!(
        "evolve-mps: {} sites, dt = {}, {} steps",
        model.len(),
        ev.dt,
        step_count(ev.t_final, ev.dt)?
    );
    let run = |ev: &EvolutionConfig| -> Result<TimeSeries> {
        let mut psi = vacuum_state(&model)?;
        let out = tebd_evolve(&mut psi, &model, ev, &obs).map_err(|e| e.context("tensornet"))?;
        if !out.warnings.is_empty() {
            warn!(
                "{} Fock truncation warnings; consider raising mps.n_max",
                out.warnings.len()
            );
        }
        Ok(out.series)
    };
    let series = run(&ev)?;
    let mut notes = Vec::new();
    if cfg.step_check()?.enabled {
        let fine = run(&halved(&ev))?;
        notes.push(step_note(cfg, max_deviation(&series, &fine)?, ev.dt)?);
    }
    Ok(RunOutput {
        artifact: Artifact::Series(series),
        notes,
    })
}

pub fn run_me(cfg: &RunConfig) -> Result<RunOutput> {
    let bath = cfg.bath()?;
    let density = bath.density()?;
    let system = cfg.system()?;
    let (dt, t_final) = cfg.time_step(bath.omega_max())?;
    let stride = cfg.measure_stride()?;
    let run = |dt: f64, stride: usize| -> Result<TimeSeries> {
        let kernels = compute_kernels(density, bath.thermal(), t_final, 0.5 * dt)
            .map_err(|e| e.context("mastereq kernels"))?;
        let out = evolve_system(&system, &kernels, dt, t_final, stride)
            .map_err(|e| e.context("mastereq"))?;
        if out.positivity_violations > 0 {
            warn!(
                "density matrix left the positive cone at {} recorded times",
                out.positivity_violations
            );
        }
        Ok(out.series)
    };
    let series = run(dt, stride)?;
    let mut notes = Vec::new();
    if cfg.step_check()?.enabled {
        let fine = run(0.5 * dt, 2 * stride)?;
        notes.push(step_note(cfg, max_deviation(&series, &fine)?, dt)?);
    }
    Ok(RunOutput {
        artifact: Artifact::Series(series),
        notes,
    })
}

pub fn run_exact_dephasing(cfg: &RunConfig) -> Result<RunOutput> {
    let bath = cfg.bath()?;
    let system = cfg.system()?;
    let (dt, t_final) = cfg.time_step(bath.omega_max())?;
    let times = measurement_times(dt, t_final, cfg.measure_stride()?)?;
    let sol = exact_dephasing(bath.density()?, bath.thermal(), &system, &times)
        .map_err(|e| e.context("reference"))?;
    Ok(RunOutput {
        artifact: Artifact::Series(sol.to_series()?),
        notes: Vec::new(),
    })
}

pub fn run_ed(cfg: &RunConfig) -> Result<RunOutput> {
    let bath = cfg.bath()?;
    let BathSpec::Discrete {
        frequencies,
        couplings,
        thermal,
    } = &bath
    else {
        return Err(Error::config(
            "bath.family",
            "exact-ed needs bath.family = discrete",
        ));
    };
    let system = cfg.system()?;
    let (dt, t_final) = cfg.time_step(bath.omega_max())?;
    let times = measurement_times(dt, t_final, cfg.measure_stride()?)?;
    let n_max = match cfg.usize_opt("ed.n_max")? {
        Some(n) => n,
        None if system.is_spin() => cfg.require_usize("mps.n_max")?,
        None => 1,
    };
    let star = StarModel {
        frequencies: frequencies.clone(),
        couplings: couplings.clone(),
        thermal: *thermal,
        system,
        n_max,
    };
    let series = exact_diagonalization(&star, &times, &cfg.ed_options()?)
        .map_err(|e| e.context("reference"))?;
    Ok(RunOutput {
        artifact: Artifact::Series(series),
        notes: Vec::new(),
    })
}

pub fn run_chain_coeffs(cfg: &RunConfig) -> Result<RunOutput> {
    let bath = cfg.bath()?;
    let (c1, c2) = build_chains(cfg, &bath)?;
    let mut chains = vec![c1];
    chains.extend(c2);
    Ok(RunOutput {
        artifact: Artifact::Chains(chains),
        notes: Vec::new(),
    })
}

pub fn execute(sub: Subcommand, cfg: &RunConfig) -> Result<RunOutput> {
    match sub {
        Subcommand::ChainCoeffs => run_chain_coeffs(cfg),
        Subcommand::EvolveMps => run_mps(cfg),
        Subcommand::EvolveMe => run_me(cfg),
        Subcommand::ExactDephasing => run_exact_dephasing(cfg),
        Subcommand::ExactEd => run_ed(cfg),
    }
}

/// `j,n,alpha,beta` table; `beta` at `n = 0` is the total weight.
pub fn chain_table(chains: &[ChainCoefficients], comments: &[String]) -> String {
    let mut s = String::new();
    for c in comments {
        for line in c.lines() {
            let _ = writeln!(s, "# {line}");
        }
    }
    s.push_str("j,n,alpha,beta\n");
    for c in chains {
        for (n, (a, b)) in c.alphas.iter().zip(&c.betas).enumerate() {
            let _ = writeln!(s, "{},{n},{a:.16e},{b:.16e}", c.reservoir);
        }
    }
    s
}

fn header(sub: Subcommand, cfg: &RunConfig, notes: &[String]) -> Vec<String> {
    let mut h = vec![
        format!("tfchain {VERSION}"),
        format!("subcommand: {}", sub.name()),
        format!("config sha256: {}", cfg.hash()),
    ];
    h.extend(notes.iter().cloned());
    h
}

/// Writes `<label>.csv`, `<label>.diag.csv` (when present) and
/// `<label>.config` into `dir`; returns the paths written.
pub fn write_outputs(
    sub: Subcommand,
    cfg: &RunConfig,
    out: &RunOutput,
    dir: &Path,
    label: &str,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let comments = header(sub, cfg, &out.notes);
    let mut written = Vec::new();
    let data = dir.join(format!("{label}.csv"));
    match &out.artifact {
        Artifact::Series(s) => {
            s.write_csv(&data, &comments)?;
            written.push(data);
            if let Some(d) = &s.diagnostics {
                let p = dir.join(format!("{label}.diag.csv"));
                d.write_csv(&p, &comments)?;
                written.push(p);
            }
        }
        Artifact::Chains(c) => {
            std::fs::write(&data, chain_table(c, &comments))?;
            written.push(data);
        }
    }
    let p = dir.join(format!("{label}.config"));
    std::fs::write(&p, cfg.echo())?;
    written.push(p);
    Ok(written)
}
