//! Power-law couplings through the Yukawa representation
//!
//!   |x|^{-s} = (1/Gamma(s)) int_0^inf mu^{s-1} e^{-mu |x|} dmu,
//!
//! so every linear functional of the power law is a mu-integral of the same
//! functional of the (closed-form) Yukawa coupling. The integrals are done in
//! t = log mu with Gauss-Legendre panels; the small-mu end is handled
//! analytically.

use super::{lattice_zeta, telescoped_difference};
use crate::error::{Error, Result};
use crate::numerics::GaussLegendre;
use statrs::function::gamma::gamma;
use std::sync::OnceLock;

const MU_MAX: f64 = 60.0;
const PANEL_WIDTH: f64 = 0.75;

fn rules() -> &'static (GaussLegendre, GaussLegendre) {
    static RULES: OnceLock<(GaussLegendre, GaussLegendre)> = OnceLock::new();
    RULES.get_or_init(|| (GaussLegendre::new(20), GaussLegendre::new(12)))
}

/// Integrate g(mu) dmu over [mu_lo, MU_MAX] in log variables. Returns the
/// fine-rule value and the difference to the coarse rule.
fn log_integral<F: FnMut(f64) -> f64>(mu_lo: f64, mut g: F) -> (f64, f64) {
    let (fine, coarse) = rules();
    let t_lo = mu_lo.ln();
    let t_hi = MU_MAX.ln();
    let panels = ((t_hi - t_lo) / PANEL_WIDTH).ceil().max(1.0) as usize;
    let h = (t_hi - t_lo) / panels as f64;
    let mut vf = 0.0;
    let mut vc = 0.0;
    for p in 0..panels {
        let a = t_lo + h * p as f64;
        let b = a + h;
        for (t, w) in fine.mapped(a, b) {
            let mu = t.exp();
            vf += w * mu * g(mu);
        }
        for (t, w) in coarse.mapped(a, b) {
            let mu = t.exp();
            vc += w * mu * g(mu);
        }
    }
    (vf, (vf - vc).abs())
}

/// 1 - J-hat(k) for the normalized power law.
pub(super) fn one_minus_fourier(s: f64, d: usize, k: &[f64]) -> Result<f64> {
    let (total, _) = lattice_zeta(s, d)?;
    let df = d as f64;
    let omc: Vec<f64> = k.iter().map(|v| 2.0 * (0.5 * v).sin().powi(2)).collect();
    let kmin = k.iter().filter(|v| **v != 0.0).map(|v| v.abs()).fold(f64::INFINITY, f64::min);
    let mu0 = 1e-3 * kmin.min(1.0);

    // analytic panel on [0, mu0]: coth(mu/2) ~ 2/mu + mu/6, and
    // P_mu(k) ~ mu / (1 - cos k) for mu << |k|
    let z = k.iter().filter(|v| **v == 0.0).count();
    let mut head = 2f64.powi(d as i32)
        * (mu0.powf(s - df) / (s - df) + df / 12.0 * mu0.powf(s - df + 2.0) / (s - df + 2.0));
    let inv: f64 = omc.iter().filter(|w| **w != 0.0).map(|w| 1.0 / w).product();
    let p = s + df - 2.0 * z as f64;
    head -= 2f64.powi(z as i32) * inv * mu0.powf(p) / p;

    let mut b = vec![0.0; d];
    let mut diff = vec![0.0; d];
    let (body, err) = log_integral(mu0, |mu| {
        let sh = mu.sinh();
        let s2 = 2.0 * (0.5 * mu).sinh().powi(2);
        let a = sh / s2;
        for j in 0..d {
            b[j] = sh / (s2 + omc[j]);
            diff[j] = sh * omc[j] / (s2 * (s2 + omc[j]));
        }
        mu.powf(s - 1.0) * telescoped_difference(a, &b, &diff)
    });
    let scale = 1.0 / (gamma(s) * total);
    let value = (head + body) * scale;
    let err = err * scale;
    if err > 1e-11 * (1.0 + value.abs()) {
        return Err(Error::QuadratureFailure(format!(
            "power-law Fourier transform at k = {k:?}: error estimate {err:e}"
        )));
    }
    Ok(value)
}

/// sum_z e^{-mu |y + L z|} for 0 <= y < L, stable for all mu > 0.
pub(super) fn wrapped_exp(mu: f64, y: usize, l: usize) -> f64 {
    let y = y as f64;
    let l = l as f64;
    ((-mu * y).exp() + (-mu * (l - y)).exp()) / (-(-mu * l).exp_m1())
}

/// Periodized power-law row entry at torus displacement `y`, with an error
/// estimate.
pub(super) fn periodized_entry(s: f64, d: usize, l: usize, y: &[usize]) -> Result<(f64, f64)> {
    let (total, _) = lattice_zeta(s, d)?;
    let df = d as f64;
    let lf = l as f64;
    let origin = y.iter().all(|v| *v == 0);
    let amp = (2.0 / lf).powi(d as i32);
    // keep mu0 * L small so the small-mu expansion applies
    let mu0 = (1e-16f64).powf(1.0 / (s - df + 1.0)).min(1e-6 / lf);
    let head = amp * mu0.powf(s - df + 1.0) / (s - df + 1.0);
    let (body, err) = log_integral(mu0, |mu| {
        let mut prod = 1.0;
        for yj in y {
            prod *= wrapped_exp(mu, *yj, l);
        }
        if origin {
            prod -= 1.0;
        }
        let singular = amp * mu.powi(-(d as i32)) * (-mu).exp();
        mu.powf(s - 1.0) * (prod - singular)
    });
    let back = amp * gamma(s - df);
    let scale = 1.0 / (gamma(s) * total);
    Ok(((head + body + back) * scale, err * scale))
}
