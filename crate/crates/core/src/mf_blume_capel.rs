//! Mean-field Blume-Capel model at zero field. With mole fractions
//! (x_1, x_0, x_{-1}) the free energy is, up to a constant,
//!
//!   Phi = 4 beta x_1 x_{-1} + beta x_0 (1 - x_0) + lambda x_0 + sum x log x.
//!
//! For large beta every minimizer is dominated by one coordinate, and the
//! other two are exponentially small. All solvers therefore work with the
//! logarithms of the small coordinates and recover the dominant one as
//! 1 - (sum of the others) so no precision is lost.

use crate::error::{Error, Result};
use crate::numerics::{bisect, golden_min};
use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoleFractions {
    pub x1: f64,
    pub x0: f64,
    pub xm1: f64,
}

impl MoleFractions {
    pub fn new(x1: f64, x0: f64, xm1: f64) -> Result<Self> {
        if !(x1 >= 0.0 && x0 >= 0.0 && xm1 >= 0.0) || ((x1 + x0 + xm1) - 1.0).abs() > 1e-12 {
            return Err(Error::ParameterOutOfRange(format!("({x1}, {x0}, {xm1}) is not on the simplex")));
        }
        Ok(MoleFractions { x1, x0, xm1 })
    }

    fn as_array(&self) -> [f64; 3] {
        [self.x1, self.x0, self.xm1]
    }

    fn from_array(a: [f64; 3]) -> Self {
        MoleFractions { x1: a[0], x0: a[1], xm1: a[2] }
    }

    /// The x_1 <-> x_{-1} mirror image.
    pub fn mirrored(&self) -> Self {
        MoleFractions { x1: self.xm1, x0: self.x0, xm1: self.x1 }
    }

    /// log of each coordinate, taking the dominant one through ln_1p.
    fn logs(&self) -> [f64; 3] {
        let a = self.as_array();
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = if a[i] > 0.5 {
                let rest: f64 = (0..3).filter(|j| *j != i).map(|j| a[j]).sum();
                (-rest).ln_1p()
            } else {
                a[i].ln()
            };
        }
        out
    }
}

fn xlogx(x: f64, lx: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * lx
    }
}

pub fn phi_bc(beta: f64, lambda: f64, x: &MoleFractions) -> f64 {
    let l = x.logs();
    // 1 - x_0 as the sum of the other two keeps the small factor exact
    let not0 = x.x1 + x.xm1;
    // the +-1 entropy terms are added first, so mirroring is exact
    let ent = (xlogx(x.x1, l[0]) + xlogx(x.xm1, l[2])) + xlogx(x.x0, l[1]);
    4.0 * beta * (x.x1 * x.xm1) + beta * x.x0 * not0 + lambda * x.x0 + ent
}

/// The three logarithmic expressions that agree at a stationary point:
/// log x_1 + 4 beta x_{-1}, log x_0 + beta (1 - 2 x_0) + lambda,
/// log x_{-1} + 4 beta x_1.
fn expressions(beta: f64, lambda: f64, x: &MoleFractions) -> [f64; 3] {
    let l = x.logs();
    let not0 = x.x1 + x.xm1;
    [l[0] + 4.0 * beta * x.xm1, l[1] + beta * (not0 - x.x0) + lambda, l[2] + 4.0 * beta * x.x1]
}

/// Largest pairwise difference of the stationarity expressions, that is the
/// log-ratio form of x_1 e^{4 beta x_{-1}} = x_{-1} e^{4 beta x_1}
/// = x_0 e^{beta (1 - 2 x_0) + lambda}.
pub fn stationarity_residual(beta: f64, lambda: f64, x: &MoleFractions) -> f64 {
    let e = expressions(beta, lambda, x);
    let mx = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mn = e.iter().cloned().fold(f64::INFINITY, f64::min);
    mx - mn
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchReport {
    /// +1, 0 or -1.
    pub dominant: i8,
    pub minimizer: MoleFractions,
    pub phi: f64,
    pub newton_residual: f64,
}

fn index_of(dominant: i8) -> usize {
    match dominant {
        1 => 0,
        0 => 1,
        _ => 2,
    }
}

/// Newton's method on the two stationarity differences in the logarithms
/// of the non-dominant coordinates.
fn solve_branch(beta: f64, lambda: f64, dominant: i8, seed: [f64; 3]) -> Result<BranchReport> {
    let d = index_of(dominant);
    let others: Vec<usize> = (0..3).filter(|i| *i != d).collect();
    let (i, j) = (others[0], others[1]);
    let build = |u: Vector2<f64>| -> MoleFractions {
        let mut a = [0.0; 3];
        a[i] = u[0].exp();
        a[j] = u[1].exp();
        a[d] = 1.0 - a[i] - a[j];
        MoleFractions::from_array(a)
    };
    let resid = |x: &MoleFractions| -> Vector2<f64> {
        let e = expressions(beta, lambda, x);
        Vector2::new(e[d] - e[i], e[d] - e[j])
    };
    // dE_k/dx_l
    let grad_e = |x: &MoleFractions| -> [[f64; 3]; 3] {
        let a = x.as_array();
        let mut g = [[0.0; 3]; 3];
        g[0][0] = 1.0 / a[0];
        g[0][2] = 4.0 * beta;
        g[1][1] = 1.0 / a[1] - 2.0 * beta;
        g[2][2] = 1.0 / a[2];
        g[2][0] = 4.0 * beta;
        g
    };
    let mut u = Vector2::new(seed[i].ln(), seed[j].ln());
    let lost = |why: String| Error::BranchLost(format!("branch {dominant} at beta = {beta}, lambda = {lambda}: {why}"));
    let mut x = build(u);
    let mut r = resid(&x);
    for _ in 0..200 {
        if r.amax() < 1e-14 {
            break;
        }
        let a = x.as_array();
        let g = grad_e(&x);
        // d x / d u_i = x_i (e_i - e_d)
        let mut jac = Matrix2::zeros();
        for (col, &k) in [i, j].iter().enumerate() {
            let dx = |l: usize| -> f64 {
                if l == k {
                    a[k]
                } else if l == d {
                    -a[k]
                } else {
                    0.0
                }
            };
            for (row, &m) in [i, j].iter().enumerate() {
                let mut v = 0.0;
                for l in 0..3 {
                    v += (g[d][l] - g[m][l]) * dx(l);
                }
                jac[(row, col)] = v;
            }
        }
        let step = jac.lu().solve(&r).ok_or_else(|| lost("singular Jacobian".into()))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial_u = u - step * t;
            let trial = build(trial_u);
            if trial.as_array()[d] > 0.0 {
                let tr = resid(&trial);
                if tr.amax().is_finite() && tr.amax() < r.amax() {
                    u = trial_u;
                    x = trial;
                    r = tr;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let residual = stationarity_residual(beta, lambda, &x);
    if !(residual <= 1e-10) {
        return Err(lost(format!("Newton stalled at residual {residual:e}")));
    }
    if !(x.as_array()[d] > 0.5) {
        return Err(lost("dominant coordinate fell below 1/2".into()));
    }
    Ok(BranchReport { dominant, minimizer: x, phi: phi_bc(beta, lambda, &x), newton_residual: residual })
}

/// Stationary points on the three dominant branches, each seeded from the
/// large-beta asymptotics. Branches whose Newton iteration fails come back
/// as errors in their slot, in the order 0, +1, -1.
pub fn stationary_branches(beta: f64, lambda: f64) -> Result<Vec<Result<BranchReport>>> {
    if !(beta >= 5.0) || !beta.is_finite() || !lambda.is_finite() {
        return Err(Error::ParameterOutOfRange(format!("the branch solver needs beta >= 5, got {beta}")));
    }
    let e0 = (-beta + lambda).exp();
    let zero = solve_branch(beta, lambda, 0, [e0, 1.0 - 2.0 * e0, e0]);
    let e1 = (-beta - lambda).exp();
    let plus = solve_branch(beta, lambda, 1, [1.0 - e1, e1, (-4.0 * beta).exp()]);
    let minus = match &plus {
        Ok(b) => Ok(BranchReport {
            dominant: -1,
            minimizer: b.minimizer.mirrored(),
            phi: phi_bc(beta, lambda, &b.minimizer.mirrored()),
            newton_residual: b.newton_residual,
        }),
        Err(e) => Err(Error::BranchLost(format!("mirror of: {e}"))),
    };
    Ok(vec![zero, plus, minus])
}

/// Free energies (phi_0, phi_1) of the zero- and plus-dominated minimizers.
pub fn branch_free_energies(beta: f64, lambda: f64) -> Result<(f64, f64)> {
    let mut b = stationary_branches(beta, lambda)?.into_iter();
    let zero = b.next().unwrap()?;
    let plus = b.next().unwrap()?;
    Ok((zero.phi, plus.phi))
}

/// The first-order transition lambda at which the zero- and plus-dominated
/// minima have equal free energy.
pub fn lambda_t(beta: f64, tol: f64) -> Result<f64> {
    if !(beta >= 8.0) {
        return Err(Error::ParameterOutOfRange(format!("lambda_t needs beta >= 8, got {beta}")));
    }
    let scale = (-beta).exp();
    let gap = |l: f64| branch_free_energies(beta, l).map(|(a, b)| a - b).unwrap_or(f64::NAN);
    bisect(gap, 0.0, 4.0 * scale, tol * scale)
}

/// lambda_t at many beta values in parallel.
pub fn lambda_t_sweep(betas: &[f64], tol: f64) -> Vec<Result<f64>> {
    betas.par_iter().map(|b| lambda_t(*b, tol)).collect()
}

/// Minimum of Phi on the slice where coordinate `k` equals 1 - delta. The
/// other two share delta as (delta s, delta (1 - s)) with s logistic in t.
fn slice_min(beta: f64, lambda: f64, k: usize, delta: f64) -> f64 {
    let others: Vec<usize> = (0..3).filter(|i| *i != k).collect();
    let point = |t: f64| -> f64 {
        // s = 1/(1 + e^{-t}) computed without cancellation on either side
        let s = 1.0 / (1.0 + (-t).exp());
        let sc = 1.0 / (1.0 + t.exp());
        let mut a = [0.0; 3];
        a[k] = 1.0 - delta;
        a[others[0]] = delta * s;
        a[others[1]] = delta * sc;
        phi_bc(beta, lambda, &MoleFractions::from_array(a))
    };
    let span = 10.0 * beta.max(1.0);
    let n = 400;
    let h = 2.0 * span / n as f64;
    let mut best = (0.0, f64::INFINITY);
    for i in 0..=n {
        let t = -span + h * i as f64;
        let v = point(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    let (_, v) = golden_min(point, best.0 - h, best.0 + h, 1e-10);
    v.min(best.1)
}

/// Excess of the minimum of Phi over {max coordinate = 1 - C e^{-beta}}
/// above the global minimum.
pub fn boundary_gap(beta: f64, lambda: f64, c: f64) -> Result<f64> {
    let delta = c * (-beta).exp();
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::ParameterOutOfRange(format!("C e^-beta = {delta} must lie in (0, 1/2)")));
    }
    let slices = (0..3).map(|k| slice_min(beta, lambda, k, delta)).fold(f64::INFINITY, f64::min);
    let mut inf = f64::INFINITY;
    for b in stationary_branches(beta, lambda)?.into_iter().flatten() {
        inf = inf.min(b.phi);
    }
    if !inf.is_finite() {
        return Err(Error::BranchLost(format!("no branch converged at beta = {beta}")));
    }
    Ok(slices - inf)
}

/// Ising mean-field free energy in mole fractions (z_1, 1 - z_1).
pub fn ising_reference(j: f64, h: f64, z1: f64) -> f64 {
    let z2 = 1.0 - z1;
    let ent = |z: f64| if z == 0.0 { 0.0 } else { z * z.ln() };
    j * z1 * z2 - h * z1 + ent(z1) + ent(z2)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsingCheck {
    pub j: f64,
    pub h: f64,
    /// z_1 at every local minimum, increasing.
    pub minima: Vec<f64>,
    /// Unique symmetric minimum; only applicable for h = 0, J <= 2.
    pub i1: Option<bool>,
    /// J z_1 > 1 > J z_{-1} at the z_1-heavy minimum; for h = 0, J > 2.
    pub i2: Option<bool>,
    /// J (1 - m^2) <= 1 at every local minimum (the strict form).
    pub i3: bool,
    /// J (1 - m^2) <= 1 at the global minimum.
    pub i3_global: bool,
    /// J (1 - m^2) <= 2 at every local minimum, the condition that follows
    /// from positivity of the second derivative.
    pub i3_local: bool,
}

/// Locate the local minima of the Ising free energy. Its derivative
/// J(1 - 2z) - h + log(z/(1-z)) is monotone between the zeros of the
/// second derivative, so each monotone piece holds at most one root.
fn ising_minima(j: f64, h: f64) -> Vec<f64> {
    let dphi = |t: f64| {
        // t is the logit of z
        let z = 1.0 / (1.0 + (-t).exp());
        let zc = 1.0 / (1.0 + t.exp());
        j * (zc - z) - h + t
    };
    let mut cuts = vec![-800.0];
    if j > 2.0 {
        let r = (1.0 - 2.0 / j).sqrt();
        let zm = 0.5 * (1.0 - r);
        let zp = 0.5 * (1.0 + r);
        cuts.push((zm / (1.0 - zm)).ln());
        cuts.push((zp / (1.0 - zp)).ln());
    }
    cuts.push(800.0);
    // the outer pieces are increasing, the middle one decreasing, so only
    // roots on the outer pieces are minima (this also covers the quartic
    // minimum at J = 2)
    let last = cuts.len() - 2;
    let mut out = Vec::new();
    for (k, w) in cuts.windows(2).enumerate() {
        if k != 0 && k != last {
            continue;
        }
        if let Ok(t) = bisect(dphi, w[0], w[1], 1e-14) {
            out.push(1.0 / (1.0 + (-t).exp()));
        }
    }
    out
}

pub fn ising_properties_check(j: f64, h: f64) -> IsingCheck {
    let minima = ising_minima(j, h);
    let i1 = (h == 0.0 && j <= 2.0).then(|| minima.len() == 1 && (minima[0] - 0.5).abs() < 1e-9);
    let i2 = (h == 0.0 && j > 2.0).then(|| {
        let heavy: Vec<f64> = minima.iter().cloned().filter(|z| *z >= 0.5).collect();
        heavy.len() == 1 && j * heavy[0] > 1.0 && 1.0 > j * (1.0 - heavy[0])
    });
    let lhs = |z: f64| {
        let m = 2.0 * z - 1.0;
        j * (1.0 - m * m)
    };
    let i3 = minima.iter().all(|z| lhs(*z) <= 1.0);
    let i3_local = minima.iter().all(|z| lhs(*z) <= 2.0);
    let global = minima
        .iter()
        .cloned()
        .min_by(|a, b| ising_reference(j, h, *a).total_cmp(&ising_reference(j, h, *b)));
    let i3_global = global.map_or(false, |z| lhs(z) <= 1.0);
    IsingCheck { j, h, minima, i1, i2, i3, i3_global, i3_local }
}
