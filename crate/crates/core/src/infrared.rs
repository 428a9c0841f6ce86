//! The infrared integral
//!
//!   I = int_{[-pi,pi]^d} J(k)^2 / (1 - J(k)) dk / (2 pi)^d
//!
//! together with W = int dk / (1 - J(k)), the lattice Green function and the
//! small-k diagnostics used to show I is small.
//!
//! The integrand is singular only at k = 0. A smooth cutoff chi(|k|) splits
//! it into a part supported in a ball around the origin, done in spherical
//! coordinates with geometrically refined radial panels, and a smooth
//! periodic remainder, done with the periodic trapezoid rule (which converges
//! spectrally for smooth periodic integrands).

use crate::couplings::NormalizedCoupling;
use crate::error::{Error, Result};
use crate::numerics::GaussLegendre;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Points per axis of the outer periodic grid at the finest level.
    pub grid_points_per_axis: usize,
    /// Radius of the ball around k = 0 handled in spherical coordinates.
    pub singular_shell_radius: f64,
    /// Number of refinement levels; the last two are compared.
    pub refinement_levels: usize,
    pub abs_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { grid_points_per_axis: 64, singular_shell_radius: 1.0, refinement_levels: 2, abs_tol: 1e-6 }
    }
}

impl QuadratureSpec {
    pub fn with_grid(mut self, n: usize) -> Self {
        self.grid_points_per_axis = n;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.grid_points_per_axis < 8 {
            return Err(Error::ParameterOutOfRange("grid_points_per_axis must be >= 8".into()));
        }
        if !(self.abs_tol > 0.0) {
            return Err(Error::ParameterOutOfRange("abs_tol must be positive".into()));
        }
        if !(self.singular_shell_radius > 0.0 && self.singular_shell_radius < PI) {
            return Err(Error::ParameterOutOfRange("singular_shell_radius must lie in (0, pi)".into()));
        }
        if self.refinement_levels < 2 {
            return Err(Error::ParameterOutOfRange("need at least two refinement levels".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfraredReport {
    pub i_value: f64,
    pub w_value: f64,
    pub error_estimate: f64,
    pub prop47_delta: f64,
    pub prop47_c: f64,
    pub l2_norm: f64,
}

/// Smooth step: 1 for r <= a, 0 for r >= b, C-infinity in between.
fn cutoff(r: f64, a: f64, b: f64) -> f64 {
    if r <= a {
        return 1.0;
    }
    if r >= b {
        return 0.0;
    }
    let t = (b - r) / (b - a);
    let e1 = (-1.0 / t).exp();
    let e2 = (-1.0 / (1.0 - t)).exp();
    e1 / (e1 + e2)
}

const RADIAL_PANELS: usize = 28;
const TRANSITION_PIECES: usize = 8;

/// Integrate a vector-valued integrand, singular at most at k = 0, over the
/// Brillouin zone with measure dk / (2 pi)^d. Returns per-component values
/// at the given level (level 0 is the finest).
fn bz_integrate<const K: usize, F>(d: usize, spec: &QuadratureSpec, level: usize, f: &F) -> Result<[f64; K]>
where
    F: Fn(&[f64]) -> Result<[f64; K]> + Sync,
{
    let n = (spec.grid_points_per_axis >> level).max(4);
    let r0 = spec.singular_shell_radius;
    let (ra, rb) = (0.5 * r0, r0);

    // outer part on the periodic grid, slab by slab
    let total = n.pow(d as u32);
    let slab = total / n;
    let h = 2.0 * PI / n as f64;
    let slabs: Vec<Result<[f64; K]>> = (0..n)
        .into_par_iter()
        .map(|i0| {
            let mut acc = [0.0; K];
            let mut k = vec![0.0; d];
            for rest in 0..slab {
                let mut r = rest;
                k[0] = -PI + h * i0 as f64;
                for j in (1..d).rev() {
                    k[j] = -PI + h * (r % n) as f64;
                    r /= n;
                }
                let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
                let w = 1.0 - cutoff(norm, ra, rb);
                if w == 0.0 {
                    continue;
                }
                let v = f(&k)?;
                for c in 0..K {
                    acc[c] += w * v[c];
                }
            }
            Ok(acc)
        })
        .collect();
    let mut outer = [0.0; K];
    for s in slabs {
        let s = s?;
        for c in 0..K {
            outer[c] += s[c];
        }
    }
    let cell = (h / (2.0 * PI)).powi(d as i32);
    for v in outer.iter_mut() {
        *v *= cell;
    }

    // inner ball in spherical coordinates
    let m_phi = (n / 2).max(8);
    let m_theta = (n / 4).max(6);
    let p = (n / 8).clamp(6, 16);
    let gl = GaussLegendre::new(p);
    let theta_rule = GaussLegendre::new(m_theta);
    let shell_avg = |r: f64| -> Result<[f64; K]> {
        // surface integral of f over the sphere of radius r, divided by r^{d-1}
        let mut acc = [0.0; K];
        match d {
            1 => {
                for sgn in [-1.0, 1.0] {
                    let v = f(&[sgn * r])?;
                    for c in 0..K {
                        acc[c] += v[c];
                    }
                }
            }
            2 => {
                let dphi = 2.0 * PI / m_phi as f64;
                for j in 0..m_phi {
                    let phi = dphi * (j as f64 + 0.5);
                    let v = f(&[r * phi.cos(), r * phi.sin()])?;
                    for c in 0..K {
                        acc[c] += v[c] * dphi;
                    }
                }
            }
            3 => {
                let dphi = 2.0 * PI / m_phi as f64;
                for (ct, wt) in theta_rule.mapped(-1.0, 1.0) {
                    let st = (1.0 - ct * ct).max(0.0).sqrt();
                    for j in 0..m_phi {
                        let phi = dphi * (j as f64 + 0.5);
                        let k = [r * st * phi.cos(), r * st * phi.sin(), r * ct];
                        let v = f(&k)?;
                        for c in 0..K {
                            acc[c] += v[c] * wt * dphi;
                        }
                    }
                }
            }
            _ => unreachable!("spherical rule only used for d <= 3"),
        }
        Ok(acc)
    };
    let panels: Vec<Result<[f64; K]>> = (0..RADIAL_PANELS)
        .into_par_iter()
        .map(|j| {
            let hi = r0 * 0.5f64.powi(j as i32);
            let lo = 0.5 * hi;
            // the panel carrying the cutoff transition is split further
            let pieces = if j == 0 { TRANSITION_PIECES } else { 1 };
            let width = (hi - lo) / pieces as f64;
            let mut acc = [0.0; K];
            for piece in 0..pieces {
                let a = lo + width * piece as f64;
                for (r, w) in gl.mapped(a, a + width) {
                    let chi = cutoff(r, ra, rb);
                    if chi == 0.0 {
                        continue;
                    }
                    let s = shell_avg(r)?;
                    let jac = r.powi(d as i32 - 1);
                    for c in 0..K {
                        acc[c] += w * chi * jac * s[c];
                    }
                }
            }
            Ok(acc)
        })
        .collect();
    let mut inner = [0.0; K];
    for pnl in panels {
        let pnl = pnl?;
        for c in 0..K {
            inner[c] += pnl[c];
        }
    }
    // power-law remainder on [0, r_min]
    let r_min = r0 * 0.5f64.powi(RADIAL_PANELS as i32);
    let g1 = shell_avg(r_min)?;
    let g2 = shell_avg(0.5 * r_min)?;
    for c in 0..K {
        let a = g1[c] * r_min.powi(d as i32 - 1);
        let b = g2[c] * (0.5 * r_min).powi(d as i32 - 1);
        if a == 0.0 || b == 0.0 || a.signum() != b.signum() {
            continue;
        }
        let expo = (a / b).ln() / 2f64.ln();
        if expo <= -1.0 + 1e-3 {
            return Err(Error::Divergent(format!("integrand ~ r^{expo:.3} near k = 0")));
        }
        inner[c] += a * r_min / (expo + 1.0);
    }
    let vol = (2.0 * PI).powi(d as i32);
    let mut out = [0.0; K];
    for c in 0..K {
        out[c] = outer[c] + inner[c] / vol;
    }
    Ok(out)
}

/// Quasi-random fallback for d >= 4: mean and standard error over shifted
/// replicas of a rank-1 lattice rule, with the same radial treatment of the
/// ball around the origin using random directions.
fn bz_integrate_qmc<const K: usize, F>(d: usize, spec: &QuadratureSpec, level: usize, f: &F) -> Result<([f64; K], [f64; K])>
where
    F: Fn(&[f64]) -> Result<[f64; K]> + Sync,
{
    let replicas = 8usize;
    let points = (spec.grid_points_per_axis >> level).max(4).pow(3);
    let r0 = spec.singular_shell_radius;
    let (ra, rb) = (0.5 * r0, r0);
    // Kronecker sequence generators from the generalized golden ratio
    let phi_d = {
        let mut x = 2.0f64;
        for _ in 0..50 {
            x = (1.0 + x).powf(1.0 / (d as f64 + 1.0));
        }
        x
    };
    let alpha: Vec<f64> = (1..=d).map(|j| (1.0 / phi_d.powi(j as i32)).fract()).collect();
    let gl = GaussLegendre::new(8);
    let reps: Vec<Result<[f64; K]>> = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed + rep as u64);
            let shift: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            let mut outer = [0.0; K];
            let mut k = vec![0.0; d];
            for i in 0..points {
                for j in 0..d {
                    k[j] = -PI + 2.0 * PI * (shift[j] + alpha[j] * (i + 1) as f64).fract();
                }
                let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
                let w = 1.0 - cutoff(norm, ra, rb);
                if w == 0.0 {
                    continue;
                }
                let v = f(&k)?;
                for c in 0..K {
                    outer[c] += w * v[c] / points as f64;
                }
            }
            // inner ball: random directions, radial Gauss-Legendre
            let dirs = 64usize;
            let area = 2.0 * PI.powf(d as f64 / 2.0) / statrs::function::gamma::gamma(d as f64 / 2.0);
            let mut inner = [0.0; K];
            for _ in 0..dirs {
                let mut u: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
                let nu = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                u.iter_mut().for_each(|v| *v /= nu);
                for j in 0..RADIAL_PANELS {
                    let hi = r0 * 0.5f64.powi(j as i32);
                    for (r, w) in gl.mapped(0.5 * hi, hi) {
                        let chi = cutoff(r, ra, rb);
                        if chi == 0.0 {
                            continue;
                        }
                        let kk: Vec<f64> = u.iter().map(|v| v * r).collect();
                        let v = f(&kk)?;
                        for c in 0..K {
                            inner[c] += w * chi * r.powi(d as i32 - 1) * v[c] * area / dirs as f64;
                        }
                    }
                }
            }
            let vol = (2.0 * PI).powi(d as i32);
            let mut out = [0.0; K];
            for c in 0..K {
                out[c] = outer[c] + inner[c] / vol;
            }
            Ok(out)
        })
        .collect();
    let mut vals = Vec::with_capacity(replicas);
    for r in reps {
        vals.push(r?);
    }
    let mut mean = [0.0; K];
    let mut se = [0.0; K];
    for c in 0..K {
        let m = vals.iter().map(|v| v[c]).sum::<f64>() / replicas as f64;
        let var = vals.iter().map(|v| (v[c] - m).powi(2)).sum::<f64>() / (replicas - 1) as f64;
        mean[c] = m;
        se[c] = (var / replicas as f64).sqrt();
    }
    Ok((mean, se))
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Value and error estimate of a Brillouin-zone integral.
fn integrate_with_error<const K: usize, F>(d: usize, spec: &QuadratureSpec, f: F) -> Result<([f64; K], [f64; K])>
where
    F: Fn(&[f64]) -> Result<[f64; K]> + Sync,
{
    spec.validate()?;
    if d >= 4 {
        let (v, se) = bz_integrate_qmc(d, spec, 0, &f)?;
        let mut err = [0.0; K];
        for c in 0..K {
            err[c] = 3.0 * se[c] + 1e-12 * (1.0 + v[c].abs());
        }
        return Ok((v, err));
    }
    let fine = bz_integrate(d, spec, 0, &f)?;
    let coarse = bz_integrate(d, spec, 1, &f)?;
    let mut err = [0.0; K];
    for c in 0..K {
        // the two-level difference, floored at accumulated roundoff
        err[c] = (fine[c] - coarse[c]).abs() + 1e-12 * (1.0 + fine[c].abs());
    }
    Ok((fine, err))
}

fn require_integrable(nc: &NormalizedCoupling) -> Result<()> {
    if !nc.infrared_integrable() {
        return Err(Error::Divergent(format!(
            "1/(1 - J(k)) ~ |k|^-{} is not integrable in d = {}",
            nc.small_k_exponent(),
            nc.dim()
        )));
    }
    Ok(())
}

/// Default delta for the small-k diagnostic: the largest delta for which
/// (1 - J(k)) / |k|^{d - delta} stays bounded below.
pub fn default_delta(nc: &NormalizedCoupling) -> f64 {
    nc.dim() as f64 - nc.small_k_exponent()
}

/// Compute I and W with an error estimate, plus the small-k diagnostics at
/// the default delta.
pub fn integral_i(nc: &NormalizedCoupling, spec: &QuadratureSpec) -> Result<InfraredReport> {
    require_integrable(nc)?;
    let d = nc.dim();
    let (v, e) = integrate_with_error(d, spec, |k: &[f64]| {
        let om = nc.one_minus_fourier(k)?;
        let j = 1.0 - om;
        Ok([j * j / om, 1.0 / om])
    })?;
    let delta = default_delta(nc);
    let (c, l2) = prop47_diagnostics(nc, delta, spec)?;
    let error_estimate = e[0].max(e[1]);
    if !error_estimate.is_finite() {
        return Err(Error::QuadratureFailure("non-finite error estimate".into()));
    }
    Ok(InfraredReport { i_value: v[0], w_value: v[1], error_estimate, prop47_delta: delta, prop47_c: c, l2_norm: l2 })
}

/// Minimum over a grid of (1 - J(k)) / |k|^{d - delta}, and sum_x J_{0,x}^2.
///
/// The grid is the uniform periodic quadrature grid together with
/// geometric sequences of small wave vectors along the axes and diagonals.
pub fn prop47_diagnostics(nc: &NormalizedCoupling, delta: f64, grid: &QuadratureSpec) -> Result<(f64, f64)> {
    let d = nc.dim();
    let df = d as f64;
    if !(delta > 0.0 && delta < df) {
        return Err(Error::ParameterOutOfRange(format!("delta must lie in (0, {d}), got {delta}")));
    }
    let expo = df - delta;
    let n = grid.grid_points_per_axis.min(match d {
        1 => 4096,
        2 => 128,
        _ => 32,
    });
    let h = 2.0 * PI / n as f64;
    let total = n.pow(d as u32);
    let ratio = |k: &[f64]| -> Result<f64> {
        let r = k.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(nc.one_minus_fourier(k)? / r.powf(expo))
    };
    let grid_min: Vec<Result<f64>> = (0..total)
        .into_par_iter()
        .map(|i| {
            let mut k = vec![0.0; d];
            let mut r = i;
            for j in (0..d).rev() {
                k[j] = -PI + h * ((r % n) as f64 + 0.5);
                r /= n;
            }
            ratio(&k)
        })
        .collect();
    let mut c = f64::INFINITY;
    for v in grid_min {
        c = c.min(v?);
    }
    let mut probes: Vec<Vec<f64>> = Vec::new();
    for step in 0..40 {
        let r = PI * 0.7f64.powi(step);
        probes.push((0..d).map(|j| if j == 0 { r } else { 0.0 }).collect());
        probes.push(vec![r / df.sqrt(); d]);
    }
    for k in probes {
        c = c.min(ratio(&k)?);
    }
    Ok((c, nc.l2_norm_sq()?))
}

/// Lattice Green function D^{-1}(0, x) = int e^{ik.x} / (1 - J(k)) dk/(2pi)^d.
pub fn green_function(nc: &NormalizedCoupling, x: &[i64], spec: &QuadratureSpec) -> Result<f64> {
    require_integrable(nc)?;
    if x.len() != nc.dim() {
        return Err(Error::DimensionMismatch(format!("x has {} coordinates", x.len())));
    }
    let (v, _) = integrate_with_error(nc.dim(), spec, |k: &[f64]| {
        let phase: f64 = k.iter().zip(x).map(|(a, b)| a * *b as f64).sum();
        Ok([phase.cos() / nc.one_minus_fourier(k)?])
    })?;
    Ok(v[0])
}

/// Brillouin-zone average of J(k)^2 (equal to sum_x J_{0,x}^2 by Parseval).
pub fn fourier_l2(nc: &NormalizedCoupling, spec: &QuadratureSpec) -> Result<(f64, f64)> {
    let (v, e) = integrate_with_error(nc.dim(), spec, |k: &[f64]| {
        let j = 1.0 - nc.one_minus_fourier(k)?;
        Ok([j * j])
    })?;
    Ok((v[0], e[0]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_is_a_partition() {
        assert_eq!(cutoff(0.1, 0.5, 1.0), 1.0);
        assert_eq!(cutoff(1.1, 0.5, 1.0), 0.0);
        let mid = cutoff(0.75, 0.5, 1.0);
        assert!((mid - 0.5).abs() < 1e-12);
    }
}
