//! Reflection-positive lattice interactions on Z^d.
//!
//! Four families are supported: nearest plus next-nearest neighbour bonds,
//! Yukawa-type exponential decay in the l1 distance, power-law decay in the
//! l1 distance, and positive mixtures of these. Every coupling is normalized
//! so that the total bond weight out of a site is one.

mod powerlaw;
mod reflection;
mod torus;

pub use reflection::{random_half_space_function, rp_quadratic_form, HalfSpaceFunction};
pub use torus::{periodize, TorusKernel};

use crate::error::{Error, Result};
use crate::numerics::{l1_shell_polynomial, zeta_with_bound};
use serde::{Deserialize, Serialize};

/// The shape of an interaction, before normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Interaction {
    /// Weight `lambda` on nearest neighbours and `kappa` on sites that differ
    /// by one in exactly two coordinates.
    NearestNextNearest { lambda: f64, kappa: f64 },
    /// `exp(-mu |x|_1)`.
    Yukawa { mu: f64 },
    /// `|x|_1^{-s}`.
    PowerLaw { s: f64 },
    /// Non-negative combination, normalized as a whole.
    Mixture(Vec<(Interaction, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingFamily {
    pub interaction: Interaction,
    pub dim: usize,
}

impl CouplingFamily {
    pub fn new(interaction: Interaction, dim: usize) -> Result<Self> {
        let family = CouplingFamily { interaction, dim };
        family.validate()?;
        Ok(family)
    }

    pub fn nearest_neighbor(dim: usize) -> Result<Self> {
        Self::new(Interaction::NearestNextNearest { lambda: 1.0, kappa: 0.0 }, dim)
    }

    pub fn next_nearest(dim: usize, lambda: f64, kappa: f64) -> Result<Self> {
        Self::new(Interaction::NearestNextNearest { lambda, kappa }, dim)
    }

    pub fn yukawa(dim: usize, mu: f64) -> Result<Self> {
        Self::new(Interaction::Yukawa { mu }, dim)
    }

    pub fn power_law(dim: usize, s: f64) -> Result<Self> {
        Self::new(Interaction::PowerLaw { s }, dim)
    }

    pub fn mixture(dim: usize, components: Vec<(Interaction, f64)>) -> Result<Self> {
        Self::new(Interaction::Mixture(components), dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::ParameterOutOfRange("dimension must be positive".into()));
        }
        validate_interaction(&self.interaction, self.dim)
    }
}

fn validate_interaction(int: &Interaction, d: usize) -> Result<()> {
    let bad = |m: String| Err(Error::ParameterOutOfRange(m));
    match *int {
        Interaction::NearestNextNearest { lambda, kappa } => {
            if !(lambda > 0.0) || !kappa.is_finite() || !lambda.is_finite() {
                return bad(format!("need lambda > 0, got lambda={lambda} kappa={kappa}"));
            }
            let bound = 2.0 * (d as f64 - 1.0) * kappa.abs();
            if lambda < bound * (1.0 - 1e-14) {
                return bad(format!("need lambda >= 2(d-1)|kappa|, got {lambda} < {bound}"));
            }
            if d == 1 && kappa != 0.0 {
                return bad("next-nearest bonds need d >= 2".into());
            }
            Ok(())
        }
        Interaction::Yukawa { mu } => {
            if !(mu > 0.0) || !mu.is_finite() {
                return bad(format!("Yukawa needs mu > 0, got {mu}"));
            }
            Ok(())
        }
        Interaction::PowerLaw { s } => {
            let df = d as f64;
            if !(s > df) || !s.is_finite() {
                return bad(format!("power law needs s > d = {d}, got s = {s}"));
            }
            if d == 1 && s >= 2.0 {
                return bad(format!("power law in d = 1 needs s < 2, got {s}"));
            }
            if d == 2 && s >= 4.0 {
                return bad(format!("power law in d = 2 needs s < 4, got {s}"));
            }
            Ok(())
        }
        Interaction::Mixture(ref comps) => {
            if comps.is_empty() {
                return bad("empty mixture".into());
            }
            let mut total = 0.0;
            for (c, w) in comps {
                if !(*w >= 0.0) || !w.is_finite() {
                    return bad(format!("mixture weight must be >= 0, got {w}"));
                }
                validate_interaction(c, d)?;
                total += w;
            }
            if total <= 0.0 {
                return bad("mixture weights are all zero".into());
            }
            Ok(())
        }
    }
}

/// A coupling scaled so that its bond weights sum to one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizedCoupling {
    pub family: CouplingFamily,
    /// Multiplier turning raw weights into normalized ones.
    pub norm_const: f64,
    /// l1 radius beyond which the normalized mass is at most the requested
    /// tolerance (saturates at `u64::MAX` for very heavy tails).
    pub truncation_radius: u64,
    /// Bound on the error of the normalization sum.
    pub tail_bound: f64,
}

/// Normalize a family so that the total weight out of the origin is one.
pub fn normalize(family: &CouplingFamily, tol: f64) -> Result<NormalizedCoupling> {
    family.validate()?;
    if !(tol > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("tol must be positive, got {tol}")));
    }
    let d = family.dim;
    let (total, err) = raw_total(&family.interaction, d)?;
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::NonSummable(format!("raw total {total}")));
    }
    let norm_const = 1.0 / total;
    let tail_bound = err * norm_const;
    if tail_bound > tol {
        return Err(Error::NonSummable(format!(
            "normalization error {tail_bound:e} exceeds tolerance {tol:e}"
        )));
    }
    let truncation_radius = radius_for_mass(&family.interaction, d, norm_const, tol);
    Ok(NormalizedCoupling { family: family.clone(), norm_const, truncation_radius, tail_bound })
}

/// Sum of raw weights over x != 0, with an error bound.
fn raw_total(int: &Interaction, d: usize) -> Result<(f64, f64)> {
    let df = d as f64;
    Ok(match *int {
        Interaction::NearestNextNearest { lambda, kappa } => {
            (2.0 * df * lambda + 2.0 * df * (df - 1.0) * kappa, 0.0)
        }
        Interaction::Yukawa { mu } => {
            let c = 1.0 / (0.5 * mu).tanh();
            (c.powi(d as i32) - 1.0, 0.0)
        }
        Interaction::PowerLaw { s } => lattice_zeta(s, d)?,
        Interaction::Mixture(ref comps) => {
            let mut t = 0.0;
            let mut e = 0.0;
            for (c, w) in comps {
                if *w == 0.0 {
                    continue;
                }
                let (ti, ei) = raw_total(c, d)?;
                t += w * ti;
                e += w * ei;
            }
            (t, e)
        }
    })
}

/// sum_{x != 0} |x|_1^{-s} on Z^d, via shell counts and zeta values.
pub(crate) fn lattice_zeta(s: f64, d: usize) -> Result<(f64, f64)> {
    let coeffs = l1_shell_polynomial(d);
    let mut total = 0.0;
    let mut err = 0.0;
    for (j, c) in coeffs.iter().enumerate() {
        if *c == 0.0 {
            continue;
        }
        let (z, b) = zeta_with_bound(s - j as f64)?;
        total += c * z;
        err += c.abs() * b;
    }
    Ok((total, err))
}

fn shell_count(d: usize, r: u64) -> f64 {
    if r == 0 {
        return 1.0;
    }
    l1_shell_polynomial(d)
        .iter()
        .enumerate()
        .map(|(j, c)| c * (r as f64).powi(j as i32))
        .sum()
}

/// Smallest l1 radius with normalized mass beyond it at most `tol`.
fn radius_for_mass(int: &Interaction, d: usize, norm: f64, tol: f64) -> u64 {
    match *int {
        Interaction::NearestNextNearest { kappa, .. } => {
            if kappa == 0.0 {
                1
            } else {
                2
            }
        }
        Interaction::Yukawa { mu } => {
            // accumulate shells until the complement is below tol
            let mut acc = 0.0;
            let mut r = 0u64;
            while r < 10_000_000 {
                r += 1;
                acc += norm * shell_count(d, r) * (-mu * r as f64).exp();
                let rest = 1.0 - acc;
                // bound the remaining geometric-like tail by the next shell
                // times 1/(1 - e^{-mu}) once shells are decreasing
                let next = norm * shell_count(d, r + 1) * (-mu * (r + 1) as f64).exp();
                if rest <= tol || next / (1.0 - (-mu).exp()) * 2.0 <= tol {
                    break;
                }
            }
            r
        }
        Interaction::PowerLaw { s } => {
            // sum_{r > R} N_d(r) r^{-s} <= sum_j |c_j| R^{j+1-s} / (s-j-1)
            let coeffs = l1_shell_polynomial(d);
            let bound = |r: f64| -> f64 {
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c.abs() * r.powf(j as f64 + 1.0 - s) / (s - j as f64 - 1.0))
                    .sum::<f64>()
                    * norm
            };
            let mut r = 1.0f64;
            while bound(r) > tol {
                r *= 2.0;
                if r > 1e18 {
                    return u64::MAX;
                }
            }
            let (mut lo, mut hi) = ((r / 2.0).max(1.0), r);
            while hi - lo > 1.0 {
                let mid = (0.5 * (lo + hi)).floor();
                if mid <= lo || mid >= hi {
                    break;
                }
                if bound(mid) > tol {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi as u64
        }
        Interaction::Mixture(ref comps) => comps
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(c, _)| radius_for_mass(c, d, norm, tol))
            .max()
            .unwrap_or(1),
    }
}

fn raw_value(int: &Interaction, x: &[i64]) -> f64 {
    let r: i64 = x.iter().map(|v| v.abs()).sum();
    if r == 0 {
        return 0.0;
    }
    match *int {
        Interaction::NearestNextNearest { lambda, kappa } => {
            let nonzero = x.iter().filter(|v| **v != 0).count();
            let max = x.iter().map(|v| v.abs()).max().unwrap_or(0);
            if max != 1 {
                0.0
            } else if nonzero == 1 {
                lambda
            } else if nonzero == 2 {
                kappa
            } else {
                0.0
            }
        }
        Interaction::Yukawa { mu } => (-mu * r as f64).exp(),
        Interaction::PowerLaw { s } => (r as f64).powf(-s),
        Interaction::Mixture(ref comps) => comps.iter().map(|(c, w)| w * raw_value(c, x)).sum(),
    }
}

/// Normalized raw total of each mixture component, i.e. the weights that
/// combine normalized component couplings into the normalized mixture.
fn component_shares(comps: &[(Interaction, f64)], d: usize) -> Vec<(Interaction, f64)> {
    let totals: Vec<f64> = comps
        .iter()
        .map(|(c, w)| if *w > 0.0 { w * raw_total(c, d).map(|t| t.0).unwrap_or(0.0) } else { 0.0 })
        .collect();
    let sum: f64 = totals.iter().sum();
    comps
        .iter()
        .zip(totals)
        .filter(|(_, t)| *t > 0.0)
        .map(|((c, _), t)| (c.clone(), t / sum))
        .collect()
}

fn one_minus_fourier_int(int: &Interaction, d: usize, k: &[f64]) -> Result<f64> {
    if k.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    Ok(match *int {
        Interaction::NearestNextNearest { lambda, kappa } => {
            let df = d as f64;
            let total = 2.0 * df * lambda + 2.0 * df * (df - 1.0) * kappa;
            let omc: Vec<f64> = k.iter().map(|v| 2.0 * (0.5 * v).sin().powi(2)).collect();
            let mut acc = 2.0 * lambda * omc.iter().sum::<f64>();
            if kappa != 0.0 {
                let mut pair = 0.0;
                for i in 0..d {
                    for j in (i + 1)..d {
                        // 1 - c_i c_j = (1 - c_i) + c_i (1 - c_j)
                        pair += omc[i] + k[i].cos() * omc[j];
                    }
                }
                acc += 4.0 * kappa * pair;
            }
            acc / total
        }
        Interaction::Yukawa { mu } => {
            let total = (1.0 / (0.5 * mu).tanh()).powi(d as i32) - 1.0;
            let s2 = 2.0 * (0.5 * mu).sinh().powi(2);
            let a = mu.sinh() / s2;
            let mut b = Vec::with_capacity(d);
            let mut diff = Vec::with_capacity(d);
            for v in k {
                let w = 2.0 * (0.5 * v).sin().powi(2);
                b.push(mu.sinh() / (s2 + w));
                diff.push(mu.sinh() * w / (s2 * (s2 + w)));
            }
            telescoped_difference(a, &b, &diff) / total
        }
        Interaction::PowerLaw { s } => powerlaw::one_minus_fourier(s, d, k)?,
        Interaction::Mixture(ref comps) => {
            let mut acc = 0.0;
            for (c, share) in component_shares(comps, d) {
                acc += share * one_minus_fourier_int(&c, d, k)?;
            }
            acc
        }
    })
}

/// prod_j a - prod_j b_j computed as a telescoping sum, given a - b_j.
pub(crate) fn telescoped_difference(a: f64, b: &[f64], diff: &[f64]) -> f64 {
    let d = b.len();
    let mut acc = 0.0;
    for j in 0..d {
        let mut term = diff[j];
        for bi in &b[..j] {
            term *= bi;
        }
        term *= a.powi((d - j - 1) as i32);
        acc += term;
    }
    acc
}

fn raw_l2(int: &Interaction, d: usize) -> Result<f64> {
    raw_cross(int, int, d)
}

/// sum_{x != 0} a(x) b(x) for raw interactions.
fn raw_cross(a: &Interaction, b: &Interaction, d: usize) -> Result<f64> {
    use Interaction::*;
    let df = d as f64;
    Ok(match (a, b) {
        (Mixture(comps), other) | (other, Mixture(comps)) => {
            let mut acc = 0.0;
            for (c, w) in comps {
                if *w > 0.0 {
                    acc += w * raw_cross(c, other, d)?;
                }
            }
            acc
        }
        (NearestNextNearest { .. }, other) | (other, NearestNextNearest { .. }) => {
            let nn = if let NearestNextNearest { .. } = a { a } else { b };
            let mut acc = 0.0;
            for_each_in_box(d, 2, |x| {
                let v = raw_value(nn, x);
                if v != 0.0 {
                    acc += v * raw_value(other, x);
                }
            });
            acc
        }
        (Yukawa { mu: m1 }, Yukawa { mu: m2 }) => {
            let mu = m1 + m2;
            (1.0 / (0.5 * mu).tanh()).powi(d as i32) - 1.0
        }
        (PowerLaw { s: s1 }, PowerLaw { s: s2 }) => lattice_zeta(s1 + s2, d)?.0,
        (Yukawa { mu }, PowerLaw { s }) | (PowerLaw { s }, Yukawa { mu }) => {
            let mut acc = 0.0;
            let mut r = 1u64;
            loop {
                let term = shell_count(d, r) * (-mu * r as f64).exp() * (r as f64).powf(-s);
                acc += term;
                if term < 1e-18 * acc && (r as f64) * mu > df {
                    break;
                }
                r += 1;
            }
            acc
        }
    })
}

/// Visit every x in [-r, r]^d.
pub(crate) fn for_each_in_box<F: FnMut(&[i64])>(d: usize, r: i64, mut f: F) {
    let mut x = vec![-r; d];
    loop {
        f(&x);
        let mut i = 0;
        while i < d {
            x[i] += 1;
            if x[i] <= r {
                break;
            }
            x[i] = -r;
            i += 1;
        }
        if i == d {
            return;
        }
    }
}

impl NormalizedCoupling {
    pub fn dim(&self) -> usize {
        self.family.dim
    }

    /// J_{0,x}.
    pub fn value(&self, x: &[i64]) -> f64 {
        self.norm_const * raw_value(&self.family.interaction, x)
    }

    /// J-hat(k) = sum_x J_{0,x} cos(k.x).
    pub fn fourier(&self, k: &[f64]) -> Result<f64> {
        self.check_dim(k.len())?;
        match self.family.interaction {
            // direct closed forms are more accurate away from k = 0
            Interaction::NearestNextNearest { lambda, kappa } => {
                let mut acc = 2.0 * lambda * k.iter().map(|v| v.cos()).sum::<f64>();
                for i in 0..k.len() {
                    for j in (i + 1)..k.len() {
                        acc += 4.0 * kappa * k[i].cos() * k[j].cos();
                    }
                }
                Ok(self.norm_const * acc)
            }
            Interaction::Yukawa { mu } => {
                let p: f64 = k.iter().map(|v| mu.sinh() / (mu.cosh() - v.cos())).product();
                Ok(self.norm_const * (p - 1.0))
            }
            _ => Ok(1.0 - self.one_minus_fourier(k)?),
        }
    }

    /// 1 - J-hat(k), computed without cancellation near k = 0.
    pub fn one_minus_fourier(&self, k: &[f64]) -> Result<f64> {
        self.check_dim(k.len())?;
        one_minus_fourier_int(&self.family.interaction, self.dim(), k)
    }

    /// sum_x J_{0,x}^2.
    pub fn l2_norm_sq(&self) -> Result<f64> {
        Ok(self.norm_const * self.norm_const * raw_l2(&self.family.interaction, self.dim())?)
    }

    /// True when the infrared integral of 1/(1 - J-hat) converges.
    pub fn infrared_integrable(&self) -> bool {
        integrable(&self.family.interaction, self.dim())
    }

    /// Exponent a with 1 - J-hat(k) ~ |k|^a near k = 0.
    pub fn small_k_exponent(&self) -> f64 {
        small_k_exponent(&self.family.interaction, self.dim())
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::DimensionMismatch(format!("expected {} coordinates, got {n}", self.dim())));
        }
        Ok(())
    }
}

fn integrable(int: &Interaction, d: usize) -> bool {
    if let Interaction::NearestNextNearest { lambda, kappa } = *int {
        // at the extreme negative ratio 1 - J-hat also vanishes quadratically
        // along the coordinate axes, a set of codimension d - 1
        if d >= 2 && kappa < 0.0 && lambda <= 2.0 * (d as f64 - 1.0) * kappa.abs() * (1.0 + 1e-12) && d <= 3 {
            return false;
        }
    }
    small_k_exponent(int, d) < d as f64
}

fn small_k_exponent(int: &Interaction, d: usize) -> f64 {
    match *int {
        Interaction::NearestNextNearest { .. } | Interaction::Yukawa { .. } => 2.0,
        Interaction::PowerLaw { s } => (s - d as f64).min(2.0),
        Interaction::Mixture(ref comps) => comps
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(c, _)| small_k_exponent(c, d))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Free-function form of [`NormalizedCoupling::value`].
pub fn coupling_value(nc: &NormalizedCoupling, x: &[i64]) -> f64 {
    nc.value(x)
}

/// Free-function form of [`NormalizedCoupling::fourier`].
pub fn fourier(nc: &NormalizedCoupling, k: &[f64]) -> Result<f64> {
    nc.fourier(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_neighbor_norm() {
        for d in 1..=4 {
            let nc = normalize(&CouplingFamily::nearest_neighbor(d).unwrap(), 1e-12).unwrap();
            assert!((nc.norm_const - 1.0 / (2.0 * d as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(CouplingFamily::power_law(1, 2.0).is_err());
        assert!(CouplingFamily::power_law(2, 2.0).is_err());
        assert!(CouplingFamily::power_law(2, 4.0).is_err());
        assert!(CouplingFamily::power_law(3, 5.0).is_ok());
        assert!(CouplingFamily::next_nearest(3, 1.0, 0.26).is_err());
        assert!(CouplingFamily::next_nearest(3, 1.0, -0.25).is_ok());
        assert!(CouplingFamily::yukawa(2, 0.0).is_err());
        assert!(CouplingFamily::mixture(1, vec![(Interaction::Yukawa { mu: 1.0 }, 0.0)]).is_err());
    }

    #[test]
    fn telescoping_matches_products() {
        let a = 1.7;
        let b = [0.3, 1.1, 0.9];
        let diff: Vec<f64> = b.iter().map(|v| a - v).collect();
        let direct = a * a * a - b.iter().product::<f64>();
        assert!((telescoped_difference(a, &b, &diff) - direct).abs() < 1e-14);
    }
}
