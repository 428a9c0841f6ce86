//! Exact mean-field analysis of the q-state Potts model in barycentric
//! coordinates,
//!
//!   Phi(x) = sum_k ( -(beta/2) x_k^2 + x_k log x_k ) - h x_1,
//!
//! where x is a probability vector and the field favours state 1.
//!
//! Along the axis x_1 = (1 + (q-1) theta)/q, x_k = (1 - theta)/q the
//! stationarity condition is theta = f(theta). Below the axis, with
//! x_1 = (1 - (q-1) theta)/q and x_k = (1 + theta)/q, it is theta = g(theta).

use crate::error::{Error, Result};
use crate::numerics::{bisect, golden_min};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Probability vector over the q Potts states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarycentricVector {
    pub q: usize,
    pub x: Vec<f64>,
}

impl BarycentricVector {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        let q = x.len();
        if q < 2 {
            return Err(Error::ParameterOutOfRange("need at least two states".into()));
        }
        if x.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::ParameterOutOfRange("barycentric coordinates must be non-negative".into()));
        }
        let total: f64 = x.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::ParameterOutOfRange(format!("barycentric coordinates sum to {total}")));
        }
        Ok(BarycentricVector { q, x })
    }

    pub fn uniform(q: usize) -> Self {
        BarycentricVector { q, x: vec![1.0 / q as f64; q] }
    }

    /// The on-axis point with x_1 - x_k = theta for k >= 2.
    pub fn on_axis(q: usize, theta: f64) -> Self {
        let qf = q as f64;
        let mut x = vec![(1.0 - theta) / qf; q];
        x[0] = (1.0 + (qf - 1.0) * theta) / qf;
        BarycentricVector { q, x }
    }

    /// The symmetric point with x_k - x_1 = theta for k >= 2.
    pub fn below_axis(q: usize, theta: f64) -> Self {
        let qf = q as f64;
        let mut x = vec![(1.0 + theta) / qf; q];
        x[0] = (1.0 - (qf - 1.0) * theta) / qf;
        BarycentricVector { q, x }
    }

    /// sum_k x_k^2, the energy-like observable conjugate to beta.
    pub fn norm_sq(&self) -> f64 {
        self.x.iter().map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchTag {
    Minimum,
    Maximum,
}

/// Solutions of theta = f(theta), sorted increasingly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnAxisSolutions {
    pub theta_values: Vec<f64>,
    pub branch_tags: Vec<BranchTag>,
}

impl OnAxisSolutions {
    pub fn minima(&self) -> impl Iterator<Item = f64> + '_ {
        self.theta_values
            .iter()
            .zip(&self.branch_tags)
            .filter(|(_, t)| **t == BranchTag::Minimum)
            .map(|(v, _)| *v)
    }
}

/// A point on a first-order line where two branches have equal free energy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseLinePoint {
    pub q: usize,
    pub h: f64,
    pub beta_t: f64,
    /// Axis parameter of the branch with smaller x_1.
    pub theta_low: f64,
    /// Axis parameter of the branch with larger order. On the negative-field
    /// line this is the theta of the ordered (q-1)-state inner problem.
    pub theta_high: f64,
    pub x_low: BarycentricVector,
    pub x_high: BarycentricVector,
    /// sum x_k^2 on the less ordered branch.
    pub e_s: f64,
    /// sum x_k^2 on the more ordered branch.
    pub e_a: f64,
}

fn check_q(q: usize, min: usize) -> Result<()> {
    if q < min {
        return Err(Error::ParameterOutOfRange(format!("need q >= {min}, got {q}")));
    }
    Ok(())
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

pub fn phi_potts(q: usize, beta: f64, h: f64, x: &BarycentricVector) -> f64 {
    debug_assert_eq!(q, x.q);
    let term = |v: f64| -0.5 * beta * v * v + xlogx(v);
    // sum the unfavoured states in sorted order so that permuting them
    // leaves the result bit-for-bit unchanged
    let mut rest: Vec<f64> = x.x[1..].iter().map(|v| term(*v)).collect();
    rest.sort_by(|a, b| a.partial_cmp(b).unwrap());
    term(x.x[0]) + rest.iter().sum::<f64>() - h * x.x[0]
}

pub fn f_onaxis(q: usize, beta: f64, h: f64, theta: f64) -> f64 {
    let u = beta * theta + h;
    // (e^u - 1)/(e^u + q - 1), arranged to avoid overflow for large u
    if u > 0.0 {
        let e = (-u).exp();
        (1.0 - e) / (1.0 + (q as f64 - 1.0) * e)
    } else {
        u.exp_m1() / (u.exp() + q as f64 - 1.0)
    }
}

pub fn g_onaxis(q: usize, beta: f64, h: f64, theta: f64) -> f64 {
    let u = beta * theta - h;
    if u > 0.0 {
        let e = (-u).exp();
        (1.0 - e) / (q as f64 - 1.0 + e)
    } else {
        u.exp_m1() / ((q as f64 - 1.0) * u.exp() + 1.0)
    }
}

/// f'(theta) = beta q e^u / (e^u + q - 1)^2.
fn f_prime(q: usize, beta: f64, h: f64, theta: f64) -> f64 {
    let u = beta * theta + h;
    let qm = q as f64 - 1.0;
    // e^u/(e^u + c)^2 = 1/(e^{u/2} + c e^{-u/2})^2
    let den = (0.5 * u).exp() + qm * (-0.5 * u).exp();
    beta * q as f64 / (den * den)
}

/// Inflection point of f, where e^{beta theta + h} = q - 1.
pub fn theta_inflection(q: usize, beta: f64, h: f64) -> f64 {
    ((q as f64 - 1.0).ln() - h) / beta
}

/// Roots of a function that is concave on [a, c] and convex on [c, b]:
/// locate the interior extremum of each piece and bisect on both sides.
/// Candidates closer than 1e-7 are merged, keeping the smallest residual,
/// so a tangential double root is reported once.
fn roots_around_inflection<F: Fn(f64) -> f64>(func: F, a: f64, c: f64, b: f64, extra: &[f64]) -> Vec<f64> {
    let mut cands: Vec<f64> = extra.iter().cloned().filter(|x| func(*x) == 0.0).collect();
    let mut piece = |lo: f64, hi: f64, concave: bool| {
        if !(hi > lo) {
            return;
        }
        let sign = if concave { -1.0 } else { 1.0 };
        let (xe, _) = golden_min(|t| sign * func(t), lo, hi, 1e-15 * (1.0 + hi.abs()));
        if func(xe).abs() < 1e-14 {
            cands.push(xe);
        }
        for (p, q) in [(lo, xe), (xe, hi)] {
            let (fp, fq) = (func(p), func(q));
            if fp == 0.0 {
                cands.push(p);
            }
            if fq == 0.0 {
                cands.push(q);
            }
            if fp * fq < 0.0 {
                if let Ok(r) = bisect(&func, p, q, 0.0) {
                    cands.push(r);
                }
            }
        }
    };
    let c = c.clamp(a, b);
    piece(a, c, true);
    piece(c, b, false);
    cands.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut roots: Vec<f64> = Vec::new();
    for r in cands {
        match roots.last_mut() {
            Some(last) if (r - *last).abs() <= 1e-7 * (1.0 + r.abs()) => {
                let (fr, fl) = (func(r).abs(), func(*last).abs());
                if fr < fl || (fr == fl && extra.contains(&r)) {
                    *last = r;
                }
            }
            _ => roots.push(r),
        }
    }
    roots
}

fn solve_axis(q: usize, beta: f64, h: f64) -> OnAxisSolutions {
    let lo = -1.0 / (q as f64 - 1.0);
    let fixed = |t: f64| t - f_onaxis(q, beta, h, t);
    let theta_values = if beta == 0.0 {
        vec![f_onaxis(q, 0.0, h, 0.0)]
    } else {
        roots_around_inflection(fixed, lo, theta_inflection(q, beta, h), 1.0, &[0.0])
    };
    let branch_tags = theta_values
        .iter()
        .map(|t| if f_prime(q, beta, h, *t) <= 1.0 { BranchTag::Minimum } else { BranchTag::Maximum })
        .collect();
    OnAxisSolutions { theta_values, branch_tags }
}

/// All stationary points of Phi along the field axis, including the
/// region below it (theta < 0), classified by the sign change of
/// theta - f(theta).
pub fn solve_onaxis(q: usize, beta: f64, h: f64) -> Result<OnAxisSolutions> {
    check_q(q, 2)?;
    if !(beta >= 0.0) || !beta.is_finite() || !h.is_finite() {
        return Err(Error::ParameterOutOfRange(format!("bad beta = {beta} or h = {h}")));
    }
    Ok(solve_axis(q, beta, h))
}

pub fn beta_mf(q: usize) -> f64 {
    let qf = q as f64;
    2.0 * (qf - 1.0) / (qf - 2.0) * (qf - 1.0).ln()
}

/// Zero-field jump of x_1 - 1/q at the transition, that is (q-1) theta / q.
pub fn m_mf_at_transition(q: usize) -> f64 {
    (q as f64 - 2.0) / q as f64
}

/// The zero-field threshold above which the (q'-state) ordered branch is
/// the global minimum. For q' = 2 this is the Ising critical point.
fn ordering_threshold(q: usize) -> f64 {
    if q == 2 {
        2.0
    } else {
        beta_mf(q)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalEndpoint {
    pub beta0: f64,
    pub hc: f64,
    pub theta: f64,
    /// The alternative closed form log q - 2 (q-2)/q, kept for comparison.
    pub hc_printed: f64,
}

/// Solve f = theta, f' = 1, f'' = 0 for (theta, beta, h) by Newton's method.
pub fn critical_endpoint(q: usize) -> Result<CriticalEndpoint> {
    check_q(q, 3)?;
    let qf = q as f64;
    let resid = |v: [f64; 3]| -> [f64; 3] {
        let (t, b, h) = (v[0], v[1], v[2]);
        let u = b * t + h;
        let e = u.exp();
        let den = e + qf - 1.0;
        // f'' is proportional to (q - 1 - e^u)
        [t - f_onaxis(q, b, h, t), b * qf * e / (den * den) - 1.0, (qf - 1.0 - e) / den]
    };
    let mut v = [0.3, 2.5, 0.0];
    for _ in 0..100 {
        let r = resid(v);
        let rn = r.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if rn < 1e-15 {
            break;
        }
        let mut jac = nalgebra::Matrix3::zeros();
        for j in 0..3 {
            let step = 1e-7 * (1.0 + v[j].abs());
            let mut vp = v;
            let mut vm = v;
            vp[j] += step;
            vm[j] -= step;
            let (rp, rm) = (resid(vp), resid(vm));
            for i in 0..3 {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * step);
            }
        }
        let dv = jac
            .lu()
            .solve(&nalgebra::Vector3::new(r[0], r[1], r[2]))
            .ok_or_else(|| Error::NoConvergence("singular endpoint Jacobian".into()))?;
        for i in 0..3 {
            v[i] -= dv[i];
        }
    }
    let r = resid(v);
    if r.iter().any(|x| !(x.abs() < 1e-12)) {
        return Err(Error::NoConvergence(format!("endpoint residual {r:?}")));
    }
    Ok(CriticalEndpoint { beta0: v[1], hc: v[2], theta: v[0], hc_printed: qf.ln() - 2.0 * (qf - 2.0) / qf })
}

fn phi_axis(q: usize, beta: f64, h: f64, theta: f64) -> f64 {
    phi_potts(q, beta, h, &BarycentricVector::on_axis(q, theta))
}

/// Sign-carrying free-energy difference phi(theta_U) - phi(theta_L); when
/// only one branch exists the sign says which one.
fn positive_field_gap(q: usize, beta: f64, h: f64) -> (f64, Option<(f64, f64)>) {
    let sol = solve_axis(q, beta, h);
    let minima: Vec<f64> = sol.minima().collect();
    if sol.theta_values.len() >= 3 && minima.len() >= 2 {
        let (lo, hi) = (minima[0], *minima.last().unwrap());
        return (phi_axis(q, beta, h, hi) - phi_axis(q, beta, h, lo), Some((lo, hi)));
    }
    let ti = theta_inflection(q, beta, h);
    let far = sol
        .theta_values
        .iter()
        .cloned()
        .max_by(|a, b| (a - ti).abs().partial_cmp(&(b - ti).abs()).unwrap())
        .unwrap();
    (if far > ti { -1.0 } else { 1.0 }, None)
}

fn line_point(q: usize, h: f64, beta_t: f64, lo: (f64, BarycentricVector), hi: (f64, BarycentricVector)) -> PhaseLinePoint {
    PhaseLinePoint {
        q,
        h,
        beta_t,
        theta_low: lo.0,
        theta_high: hi.0,
        e_s: lo.1.norm_sq(),
        e_a: hi.1.norm_sq(),
        x_low: lo.1,
        x_high: hi.1,
    }
}

/// The positive-field first-order line: the beta at which the two on-axis
/// minima have equal depth.
pub fn beta_plus(q: usize, h: f64, tol: f64) -> Result<PhaseLinePoint> {
    check_q(q, 3)?;
    let end = critical_endpoint(q)?;
    if !(h > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("beta_plus needs h > 0, got {h}")));
    }
    if h >= end.hc {
        return Err(Error::OutOfRange(format!("h = {h} is beyond the critical endpoint hc = {}", end.hc)));
    }
    let (a, b) = (end.beta0, beta_mf(q));
    let beta_t = bisect(|beta| positive_field_gap(q, beta, h).0, a, b, tol)?;
    // the branches exist on the ordered side of the crossing
    let mut probe = beta_t;
    let (lo, hi) = loop {
        if let (_, Some(pair)) = positive_field_gap(q, probe, h) {
            break pair;
        }
        probe += tol.max(1e-15 * probe);
        if probe > b {
            return Err(Error::BranchLost(format!("no coexisting branches near beta = {beta_t}")));
        }
    };
    Ok(line_point(
        q,
        h,
        beta_t,
        (lo, BarycentricVector::on_axis(q, lo)),
        (hi, BarycentricVector::on_axis(q, hi)),
    ))
}

/// Symmetric branch below the axis: the unique root of theta = g(theta).
fn symmetric_branch(q: usize, beta: f64, h: f64) -> Result<(f64, BarycentricVector)> {
    let top = 1.0 / (q as f64 - 1.0);
    let theta = bisect(|t| t - g_onaxis(q, beta, h, t), 0.0, top, 0.0)?;
    Ok((theta, BarycentricVector::below_axis(q, theta)))
}

/// Largest on-axis root of the zero-field q-state problem, if it is ordered.
fn ordered_root(q: usize, beta: f64) -> Option<f64> {
    if beta <= 0.0 {
        return None;
    }
    let sol = solve_axis(q, beta, 0.0);
    let top = *sol.theta_values.last()?;
    (top > 1e-12 && *sol.branch_tags.last()? == BranchTag::Minimum).then_some(top)
}

/// Upper end of the x_1 window on which the inner problem is ordered.
pub fn psi_window(q: usize, beta: f64) -> f64 {
    let a = 1.0 - ordering_threshold(q - 1) / beta;
    a.min(1.0 / q as f64)
}

struct PsiData {
    value: f64,
    slope: f64,
    inner_theta: f64,
}

fn psi_data(q: usize, beta: f64, h: f64, x1: f64) -> Result<PsiData> {
    let t = beta * (1.0 - x1);
    let qi = q - 1;
    let theta = ordered_root(qi, t)
        .ok_or_else(|| Error::InnerNotOrdered(format!("no ordered {qi}-state minimizer at effective beta {t}")))?;
    let y = BarycentricVector::on_axis(qi, theta);
    let inner = phi_potts(qi, t, 0.0, &y);
    let ysq = y.norm_sq();
    let ylogy: f64 = y.x.iter().map(|v| xlogx(*v)).sum();
    let value = -0.5 * beta * x1 * x1 + xlogx(x1) + xlogx(1.0 - x1) - h * x1 + (1.0 - x1) * inner;
    let slope = (x1 / (1.0 - x1)).ln() - beta * x1 - h + t * ysq - ylogy;
    Ok(PsiData { value, slope, inner_theta: theta })
}

/// Free energy of the best configuration with a given x_1 whose remaining
/// q - 1 coordinates form the ordered (q-1)-state zero-field minimizer.
pub fn psi_partial(q: usize, beta: f64, h: f64, x1: f64) -> Result<f64> {
    check_q(q, 3)?;
    if !(x1 > 0.0 && x1 < 1.0) {
        return Err(Error::ParameterOutOfRange(format!("x1 must lie in (0, 1), got {x1}")));
    }
    Ok(psi_data(q, beta, h, x1)?.value)
}

/// The asymmetric assembled vector (x_1, (1 - x_1) y).
fn assemble(q: usize, x1: f64, inner_theta: f64) -> BarycentricVector {
    let y = BarycentricVector::on_axis(q - 1, inner_theta);
    let mut x = Vec::with_capacity(q);
    x.push(x1);
    x.extend(y.x.iter().map(|v| (1.0 - x1) * v));
    BarycentricVector { q, x }
}

/// Minimum of psi over (0, a~]. psi' is concave, so the first sign change
/// of psi' from below is the only interior local minimum.
fn asymmetric_branch(q: usize, beta: f64, h: f64) -> Result<Option<(f64, f64, BarycentricVector)>> {
    let top = psi_window(q, beta);
    if !(top > 0.0) {
        return Ok(None);
    }
    let slope = |x: f64| psi_data(q, beta, h, x).map(|d| d.slope).unwrap_or(f64::NAN);
    let (xm, _) = golden_min(|x| -slope(x), 0.0, top, 1e-15);
    let xm = xm.min(top);
    let candidate = if slope(xm) > 0.0 {
        // bisect in log x1 between a deep point and the slope maximum
        let floor = -700.0f64;
        let u = bisect(|u| slope(u.exp()), floor, xm.ln(), 1e-15)?;
        Some(u.exp())
    } else {
        None
    };
    let mut best: Option<(f64, f64)> = None;
    for x in candidate.into_iter().chain(std::iter::once(top)) {
        if let Ok(d) = psi_data(q, beta, h, x) {
            if best.map_or(true, |(_, v)| d.value < v) {
                best = Some((x, d.value));
            }
        }
    }
    let Some((x1, value)) = best else { return Ok(None) };
    let d = psi_data(q, beta, h, x1)?;
    Ok(Some((x1, value, assemble(q, x1, d.inner_theta))))
}

/// Phi(symmetric) - Phi(asymmetric); positive when the asymmetric branch wins.
fn negative_field_gap(q: usize, beta: f64, h: f64) -> Result<f64> {
    let (_, xs) = symmetric_branch(q, beta, h)?;
    let ps = phi_potts(q, beta, h, &xs);
    Ok(match asymmetric_branch(q, beta, h)? {
        Some((_, pa, _)) => ps - pa,
        None => -1.0,
    })
}

/// The negative-field first-order line between the symmetric branch and
/// the (q-1)-fold ordered branch.
pub fn beta_minus(q: usize, h: f64, tol: f64) -> Result<PhaseLinePoint> {
    check_q(q, 4)?;
    if !(h < 0.0) || !h.is_finite() {
        return Err(Error::ParameterOutOfRange(format!("beta_minus needs finite h < 0, got {h}")));
    }
    let (a, b) = (beta_mf(q - 1) - 0.1, beta_mf(q) + 0.1);
    let ga = negative_field_gap(q, a, h)?;
    let gb = negative_field_gap(q, b, h)?;
    if !(ga < 0.0 && gb > 0.0) {
        return Err(Error::NoCrossing(format!("free-energy gap has signs {ga:e}, {gb:e} at the window ends")));
    }
    let beta_t = bisect(|beta| negative_field_gap(q, beta, h).unwrap_or(f64::NAN), a, b, tol)?;
    let (ts, xs) = symmetric_branch(q, beta_t, h)?;
    let (x1, _, xa) = asymmetric_branch(q, beta_t, h)?
        .ok_or_else(|| Error::BranchLost(format!("asymmetric branch vanished at beta = {beta_t}")))?;
    let inner = psi_data(q, beta_t, h, x1)?.inner_theta;
    Ok(line_point(q, h, beta_t, (ts, xs), (inner, xa)))
}

/// Slope dh/dbeta of a first-order line from the jumps of x_1 and sum x^2.
pub fn clausius_clapeyron(point: &PhaseLinePoint) -> Result<f64> {
    let dx = point.x_high.x[0] - point.x_low.x[0];
    if dx.abs() < 1e-8 {
        return Err(Error::DegenerateBranches(format!("x1 jump {dx:e} is too small")));
    }
    Ok(-0.5 * (point.e_a - point.e_s) / dx)
}

/// Stationarity residual of x_k e^{-beta x_k - h delta_{k1}} being constant.
pub fn stationarity_residual(beta: f64, h: f64, x: &BarycentricVector) -> f64 {
    let vals: Vec<f64> = x
        .x
        .iter()
        .enumerate()
        .map(|(k, v)| v.ln() - beta * v - if k == 0 { h } else { 0.0 })
        .collect();
    let mx = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mn = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    mx - mn
}

/// Representatives of the global minimizers, best first. Candidates within
/// 1e-10 of the best free energy are all returned.
pub fn global_minimizers(q: usize, beta: f64, h: f64) -> Result<Vec<BarycentricVector>> {
    check_q(q, 3)?;
    if !(beta >= 0.0) || !beta.is_finite() || !h.is_finite() {
        return Err(Error::ParameterOutOfRange(format!("bad beta = {beta} or h = {h}")));
    }
    let mut cands: Vec<BarycentricVector> = solve_axis(q, beta, h).minima().map(|t| BarycentricVector::on_axis(q, t)).collect();
    if h < 0.0 {
        cands.push(symmetric_branch(q, beta, h)?.1);
        if let Some((_, _, xa)) = asymmetric_branch(q, beta, h)? {
            cands.push(xa);
        }
    }
    let mut scored: Vec<(f64, BarycentricVector)> = cands.into_iter().map(|x| (phi_potts(q, beta, h, &x), x)).collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let best = scored[0].0;
    let mut out: Vec<BarycentricVector> = Vec::new();
    for (v, x) in scored {
        if v - best > 1e-10 {
            break;
        }
        let dup = out.iter().any(|y| y.x.iter().zip(&x.x).all(|(a, b)| (a - b).abs() < 1e-9));
        if !dup {
            out.push(x);
        }
    }
    Ok(out)
}

/// Positive-field line at many fields in parallel.
pub fn beta_plus_sweep(q: usize, hs: &[f64], tol: f64) -> Vec<Result<PhaseLinePoint>> {
    hs.par_iter().map(|h| beta_plus(q, *h, tol)).collect()
}

/// Negative-field line at many fields in parallel.
pub fn beta_minus_sweep(q: usize, hs: &[f64], tol: f64) -> Vec<Result<PhaseLinePoint>> {
    hs.par_iter().map(|h| beta_minus(q, *h, tol)).collect()
}
