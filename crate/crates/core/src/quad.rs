//! Quadrature rules: Gauss–Legendre nodes and a globally adaptive
//! Gauss–Kronrod (7/15) integrator for real and complex integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += s * WGK[j];
        if j % 2 == 1 {
            gauss += s * WG[j / 2];
        }
    }
    (kron * h, ((kron - gauss) * h).norm())
}

struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Tolerances and limits for [`integrate_complex`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-11,
            max_panels: 20_000,
        }
    }
}

/// Integrates `f` over the union of consecutive intervals given by
/// `breakpoints` (ascending, at least two entries).
pub fn integrate_complex<F>(f: F, breakpoints: &[f64], opts: QuadOptions) -> Result<Complex64>
where
    F: Fn(f64) -> Complex64,
{
    assert!(breakpoints.len() >= 2);
    let mut heap = BinaryHeap::with_capacity(breakpoints.len() * 4);
    let mut total = Complex64::new(0.0, 0.0);
    let mut err = 0.0;
    for w in breakpoints.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (value, error) = kronrod15(&f, w[0], w[1]);
        total += value;
        err += error;
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value,
            error,
        });
    }
    while err > opts.abs_tol.max(opts.rel_tol * total.norm()) {
        if heap.len() >= opts.max_panels {
            let estimate = heap.iter().map(|p| p.value).sum::<Complex64>().norm();
            return Err(Error::Accuracy {
                estimate,
                error: err,
            });
        }
        let worst = heap.pop().expect("non-empty panel heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at machine resolution; accept it
            heap.push(Panel {
                error: 0.0,
                ..worst
            });
            err = heap.iter().map(|p| p.error).sum();
            continue;
        }
        let (v1, e1) = kronrod15(&f, worst.a, mid);
        let (v2, e2) = kronrod15(&f, mid, worst.b);
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        total += v1 + v2 - worst.value;
        err += e1 + e2 - worst.error;
    }
    // deterministic summation order: by left endpoint
    let mut panels = heap.into_vec();
    panels.sort_by(|x, y| x.a.total_cmp(&y.a));
    Ok(panels.iter().map(|p| p.value).sum())
}

pub fn integrate<F>(f: F, breakpoints: &[f64], opts: QuadOptions) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    integrate_complex(|x| Complex64::new(f(x), 0.0), breakpoints, opts).map(|z| z.re)
}

/// Breakpoints on `[0, upper]` that cluster geometrically towards the origin,
/// suitable for integrable power-law endpoint behaviour at zero.
pub fn graded_breakpoints(upper: f64, levels: usize, uniform_panels: usize) -> Vec<f64> {
    let uniform_panels = uniform_panels.max(1);
    let h = upper / uniform_panels as f64;
    let mut pts = Vec::with_capacity(levels + uniform_panels + 2);
    pts.push(0.0);
    for k in (1..=levels).rev() {
        pts.push(h * 0.5f64.powi(k as i32));
    }
    for i in 1..=uniform_panels {
        pts.push(h * i as f64);
    }
    *pts.last_mut().unwrap() = upper;
    pts
}
