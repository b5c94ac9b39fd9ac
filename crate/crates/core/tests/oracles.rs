//! Cross-checks against independently computed references.

use tfchain::chainmap::{default_node_count, reservoir_chain, Grading};
use tfchain::quad::{integrate, QuadOptions};
use tfchain::reference::dephasing_phi;
use tfchain::spectral::{thermofield_densities, SpectralDensity, Statistics, ThermalParameters};

mod common;
use common::phi_trapezoid;

/// Orthonormal-polynomial Stieltjes procedure on the continuous weight, with
/// every inner product evaluated by adaptive quadrature.
fn continuous_stieltjes(
    w: impl Fn(f64) -> f64 + Sync,
    upper: f64,
    m: usize,
) -> (Vec<f64>, Vec<f64>) {
    let bp: Vec<f64> = (0..=64).map(|k| upper * k as f64 / 64.0).collect();
    let opts = QuadOptions {
        abs_tol: 1e-15,
        rel_tol: 1e-13,
        max_panels: 200_000,
    };
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas = vec![integrate(&w, &bp, opts).unwrap()];
    // q_n(x) from the coefficients found so far.
    let q = |x: f64, n: usize, a: &[f64], b: &[f64]| {
        let (mut prev, mut cur) = (0.0, 1.0 / b[0].sqrt());
        for k in 0..n {
            let next = ((x - a[k]) * cur - if k == 0 { 0.0 } else { b[k].sqrt() * prev })
                / b[k + 1].sqrt();
            prev = cur;
            cur = next;
        }
        (prev, cur)
    };
    for n in 0..m {
        let (a, b) = (alphas.clone(), betas.clone());
        let alpha = integrate(
            |x| {
                let (_, c) = q(x, n, &a, &b);
                w(x) * x * c * c
            },
            &bp,
            opts,
        )
        .unwrap();
        alphas.push(alpha);
        if n + 1 == m {
            break;
        }
        let a = alphas.clone();
        let beta = integrate(
            |x| {
                let (p, c) = q(x, n, &a, &b);
                let r = (x - a[n]) * c - if n == 0 { 0.0 } else { b[n].sqrt() * p };
                w(x) * r * r
            },
            &bp,
            opts,
        )
        .unwrap();
        betas.push(beta);
    }
    (alphas, betas)
}

#[test]
fn chain_coefficients_match_continuous_stieltjes() {
    let m = 40;
    let j = SpectralDensity::ohmic(0.1, 1.0, 1.0).unwrap();
    let th = ThermalParameters::new(5.0, Statistics::Bosonic).unwrap();
    let dens = thermofield_densities(&j, &th);
    let chain = reservoir_chain(&dens, 1, m, default_node_count(m), Grading::Logarithmic)
        .unwrap()
        .unwrap();
    let (alphas, betas) = continuous_stieltjes(|x| dens.j1(x).unwrap(), dens.omega_max(), m);
    for n in 0..m {
        let ea = (chain.alphas[n] - alphas[n]).abs() / alphas[n].abs();
        let eb = (chain.betas[n] - betas[n]).abs() / betas[n].abs();
        assert!(
            ea <= 1e-8,
            "alpha[{n}] {} vs {}",
            chain.alphas[n],
            alphas[n]
        );
        assert!(eb <= 1e-8, "beta[{n}] {} vs {}", chain.betas[n], betas[n]);
    }
}

#[test]
fn dephasing_phi_matches_trapezoid_oracle() {
    let cases = [
        (0.5, 1.0),
        (0.5, 5.0),
        (0.5, f64::INFINITY),
        (1.0, 1.0),
        (1.0, 5.0),
        (1.0, f64::INFINITY),
        (1.5, 1.0),
        (1.5, 5.0),
        (1.5, f64::INFINITY),
    ];
    for (s, beta) in cases {
        let j = SpectralDensity::ohmic(0.1, s, 1.0).unwrap();
        let th = if beta.is_finite() {
            ThermalParameters::new(beta, Statistics::Bosonic).unwrap()
        } else {
            ThermalParameters::zero_temperature(Statistics::Bosonic)
        };
        for t in [0.5, 2.0, 5.0] {
            let phi = dephasing_phi(&j, &th, t).unwrap();
            let oracle = phi_trapezoid(0.1, s, beta, t);
            assert!(
                (phi - oracle).abs() <= 1e-6,
                "s = {s}, beta = {beta}, t = {t}: {phi} vs {oracle}"
            );
        }
    }
}
