//! Helpers shared by integration-test targets.

use tfchain::spectral::SpectralDensity;

/// `phi_t = ∫ dw J coth(beta w / 2) ∫_0^t (t - u) cos(w u) du` by a 2D
/// trapezoid rule over `(x, u)` with `w = x^2`, Richardson-extrapolated.
pub fn phi_trapezoid(eta: f64, s: f64, beta: f64, t: f64) -> f64 {
    let j = SpectralDensity::ohmic(eta, s, 1.0).unwrap();
    let x_max = j.omega_max().sqrt();
    let level = |n: usize| {
        let hx = x_max / n as f64;
        let hu = t / n as f64;
        let mut total = 0.0;
        for ix in 0..=n {
            let x = ix as f64 * hx;
            let w = (x * x).min(j.omega_max());
            // J coth(beta w / 2) dw/dx; at x = 0 only s = 1/2 with finite
            // beta leaves a nonzero limit, 4 eta / beta
            let g = if ix == 0 {
                if beta.is_finite() && s == 0.5 {
                    4.0 * eta / beta
                } else {
                    0.0
                }
            } else {
                let coth = if beta.is_finite() {
                    1.0 / (0.5 * beta * w).tanh()
                } else {
                    1.0
                };
                j.evaluate(w).unwrap() * coth * 2.0 * x
            };
            let mut inner = 0.0;
            for iu in 0..=n {
                let u = iu as f64 * hu;
                let f = (t - u) * (w * u).cos();
                inner += if iu == 0 || iu == n { 0.5 * f } else { f };
            }
            let f = g * inner * hu;
            total += if ix == 0 || ix == n { 0.5 * f } else { f };
        }
        total * hx
    };
    // Richardson table in h^2
    let mut table: Vec<Vec<f64>> = Vec::new();
    for k in 0..5 {
        let mut row = vec![level(100 << k)];
        for r in 1..=k {
            let f = 4f64.powi(r as i32);
            let v = (f * row[r - 1] - table[k - 1][r - 1]) / (f - 1.0);
            row.push(v);
        }
        table.push(row);
    }
    *table.last().unwrap().last().unwrap()
}
