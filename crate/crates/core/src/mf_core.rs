//! Generic mean-field theory for a spin space with finitely many states.
//!
//! A spin takes values at atoms w_i in R^n with a priori weights p_i. The
//! cumulant generating function is G(b) = log sum_i p_i e^{(b, w_i)}, the
//! entropy is its Legendre transform S(m) = inf_b [G(b) - (b, m)], and the
//! mean-field free energy is
//!
//!   Phi(m) = -(beta/2)|m|^2 - (h, m) - S(m).

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Minima closer than this are considered the same.
pub const DEDUP_RADIUS: f64 = 1e-6;
pub const DEFAULT_DAMPING: f64 = 0.5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AprioriMeasure {
    pub atoms: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub n: usize,
    /// max_i |w_i|^2
    pub kappa: f64,
    /// Weighted mean of the atoms, i.e. grad G(0).
    center: Vec<f64>,
    /// Orthonormal basis (columns) of the directions spanned by the atoms.
    basis: Vec<Vec<f64>>,
}

impl AprioriMeasure {
    /// Build a measure from atoms and positive weights (normalized here).
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::DimensionMismatch("need one weight per atom".into()));
        }
        let n = atoms[0].len();
        if n == 0 || atoms.iter().any(|a| a.len() != n) {
            return Err(Error::DimensionMismatch("atoms must share a positive dimension".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::ParameterOutOfRange("atom weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut center = vec![0.0; n];
        for (a, w) in atoms.iter().zip(&weights) {
            for j in 0..n {
                center[j] += w * a[j];
            }
        }
        // Gram-Schmidt on atom differences
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let scale = atoms.iter().map(|a| norm(a)).fold(0.0, f64::max).max(1.0);
        for a in &atoms {
            let mut v: Vec<f64> = a.iter().zip(&atoms[0]).map(|(x, y)| x - y).collect();
            for _ in 0..2 {
                for e in &basis {
                    let c = dot(&v, e);
                    for j in 0..n {
                        v[j] -= c * e[j];
                    }
                }
            }
            let nv = norm(&v);
            if nv > 1e-10 * scale {
                basis.push(v.iter().map(|x| x / nv).collect());
            }
        }
        if basis.is_empty() {
            return Err(Error::ParameterOutOfRange("measure must be supported on at least two points".into()));
        }
        let kappa = atoms.iter().map(|a| dot(a, a)).fold(0.0, f64::max);
        Ok(AprioriMeasure { atoms, weights, n, kappa, center, basis })
    }

    /// Spins +-1 with equal weight.
    pub fn ising() -> Self {
        Self::new(vec![vec![1.0], vec![-1.0]], vec![0.5, 0.5]).unwrap()
    }

    /// The q-state Potts spin space: the vertices of the regular simplex in
    /// R^{q-1}, unit vectors with mutual inner products -1/(q-1).
    pub fn potts(q: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::ParameterOutOfRange(format!("Potts needs q >= 2, got {q}")));
        }
        Self::new(tetrahedral_vectors(q), vec![1.0; q])
    }

    /// Affine dimension of the convex hull.
    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    fn basis_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.basis.len(), |i, j| self.basis[j][i])
    }

    /// Tilted weights proportional to p_i e^{(b, w_i)}, normalized, and G(b).
    fn tilt(&self, b: &[f64]) -> (Vec<f64>, f64) {
        let expo: Vec<f64> = self.atoms.iter().zip(&self.weights).map(|(a, w)| w.ln() + dot(a, b)).collect();
        let mx = expo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = expo.iter().map(|x| (x - mx).exp()).collect();
        let z: f64 = e.iter().sum();
        (e.iter().map(|x| x / z).collect(), mx + z.ln())
    }
}

/// Unit vectors in R^{q-1} pointing at the vertices of a regular simplex.
pub fn tetrahedral_vectors(q: usize) -> Vec<Vec<f64>> {
    // centre the standard basis of R^q and express it in an orthonormal
    // basis of the sum-zero hyperplane (Helmert basis)
    let qf = q as f64;
    let scale = (qf / (qf - 1.0)).sqrt();
    (0..q)
        .map(|k| {
            (1..q)
                .map(|j| {
                    let jf = j as f64;
                    let c = 1.0 / (jf * (jf + 1.0)).sqrt();
                    // j-th Helmert vector: (1,..,1,-j,0,..)/sqrt(j(j+1))
                    let comp = if k < j {
                        c
                    } else if k == j {
                        -jf * c
                    } else {
                        0.0
                    };
                    comp * scale
                })
                .collect()
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// G(b) = log sum_i p_i e^{(b, w_i)}.
pub fn cumulant_g(measure: &AprioriMeasure, b: &[f64]) -> f64 {
    measure.tilt(b).1
}

/// Mean of the tilted measure.
pub fn grad_g(measure: &AprioriMeasure, b: &[f64]) -> Vec<f64> {
    let (p, _) = measure.tilt(b);
    let mut m = vec![0.0; measure.n];
    for (a, w) in measure.atoms.iter().zip(&p) {
        for j in 0..measure.n {
            m[j] += w * a[j];
        }
    }
    m
}

/// Covariance of the tilted measure.
pub fn hess_g(measure: &AprioriMeasure, b: &[f64]) -> DMatrix<f64> {
    let (p, _) = measure.tilt(b);
    let mean = grad_g(measure, b);
    let n = measure.n;
    let mut h = DMatrix::zeros(n, n);
    for (a, w) in measure.atoms.iter().zip(&p) {
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] += w * (a[i] - mean[i]) * (a[j] - mean[j]);
            }
        }
    }
    h
}

/// Result of the entropy minimization: S(m) and the optimal dual b, which
/// equals -grad S(m) within the affine span.
#[derive(Debug, Clone)]
pub struct EntropyPoint {
    pub value: f64,
    pub dual: Vec<f64>,
}

/// S(m) = inf_b [G(b) - (b, m)] by damped Newton in the span of the atoms.
pub fn entropy_s(measure: &AprioriMeasure, m: &[f64], tol: f64) -> Result<f64> {
    entropy_point(measure, m, tol).map(|e| e.value)
}

pub fn entropy_point(measure: &AprioriMeasure, m: &[f64], tol: f64) -> Result<EntropyPoint> {
    if m.len() != measure.n {
        return Err(Error::DimensionMismatch(format!("m has {} components, expected {}", m.len(), measure.n)));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Infeasible("non-finite magnetization".into()));
    }
    let b_mat = measure.basis_matrix();
    let r = measure.rank();
    // m must lie in the affine hull
    let dm: Vec<f64> = m.iter().zip(&measure.center).map(|(a, c)| a - c).collect();
    let dmv = DVector::from_vec(dm.clone());
    let proj = &b_mat * (b_mat.transpose() * &dmv);
    if (&dmv - proj).norm() > 1e-9 * (1.0 + dmv.norm()) {
        return Err(Error::Infeasible(format!("{m:?} is off the affine hull of the atoms")));
    }
    // for affinely independent atoms the barycentric coordinates decide
    // interiority exactly
    if measure.atoms.len() == r + 1 {
        let coords = b_mat.transpose() * &dmv;
        let edges = DMatrix::from_fn(r, r, |i, j| {
            let e: Vec<f64> = measure.atoms[j + 1].iter().zip(&measure.atoms[0]).map(|(a, b)| a - b).collect();
            dot(&measure.basis[i], &e)
        });
        let c0 = b_mat.transpose() * DVector::from_iterator(measure.n, measure.atoms[0].iter().zip(&measure.center).map(|(a, c)| a - c));
        if let Some(lam) = edges.lu().solve(&(coords - c0)) {
            let first = 1.0 - lam.sum();
            if first <= 0.0 || lam.iter().any(|v| *v <= 0.0) {
                return Err(Error::Infeasible(format!("{m:?} is not in the interior of the simplex of atoms")));
            }
        }
    }
    let objective = |c: &DVector<f64>| -> (f64, Vec<f64>) {
        let b: Vec<f64> = (&b_mat * c).iter().cloned().collect();
        let g = cumulant_g(measure, &b);
        (g - dot(&b, m), b)
    };
    let mut c = DVector::zeros(r);
    let (mut f, mut b) = objective(&c);
    let bound = 1e4;
    for _ in 0..500 {
        let gm = grad_g(measure, &b);
        let resid: Vec<f64> = gm.iter().zip(m).map(|(x, y)| x - y).collect();
        let grad = b_mat.transpose() * DVector::from_vec(resid);
        if grad.norm() <= tol {
            return Ok(EntropyPoint { value: f, dual: b });
        }
        let h = b_mat.transpose() * hess_g(measure, &b) * &b_mat;
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad.clone(),
        };
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &c - &step * t;
            let (ft, bt) = objective(&trial);
            if ft <= f - 1e-4 * t * slope || (ft - f).abs() <= 1e-15 * (1.0 + f.abs()) {
                c = trial;
                f = ft;
                b = bt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || c.norm() > bound {
            break;
        }
    }
    Err(Error::Infeasible(format!(
        "entropy minimization did not converge at m = {m:?}; m is on or outside the hull boundary"
    )))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MfModel {
    pub measure: AprioriMeasure,
    pub beta: f64,
    pub h: Vec<f64>,
}

impl MfModel {
    pub fn new(measure: AprioriMeasure, beta: f64, h: Vec<f64>) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::ParameterOutOfRange(format!("beta must be finite and >= 0, got {beta}")));
        }
        if h.len() != measure.n {
            return Err(Error::DimensionMismatch("field has the wrong dimension".into()));
        }
        Ok(MfModel { measure, beta, h })
    }

    /// The argument beta m + h of the mean-field map.
    fn field_at(&self, m: &[f64]) -> Vec<f64> {
        m.iter().zip(&self.h).map(|(x, h)| self.beta * x + h).collect()
    }
}

const ENTROPY_TOL: f64 = 1e-13;

/// Phi(m) = -(beta/2)|m|^2 - (h, m) - S(m).
pub fn phi(model: &MfModel, m: &[f64]) -> Result<f64> {
    let s = entropy_s(&model.measure, m, ENTROPY_TOL)?;
    Ok(-0.5 * model.beta * dot(m, m) - dot(&model.h, m) - s)
}

/// Gradient of Phi projected onto the affine span.
pub fn grad_phi(model: &MfModel, m: &[f64]) -> Result<Vec<f64>> {
    let e = entropy_point(&model.measure, m, ENTROPY_TOL)?;
    let g: Vec<f64> = (0..m.len()).map(|i| -model.beta * m[i] - model.h[i] + e.dual[i]).collect();
    let b = model.measure.basis_matrix();
    let p = &b * (b.transpose() * DVector::from_vec(g));
    Ok(p.iter().cloned().collect())
}

/// Damped iteration m <- (1 - a) m + a grad G(beta m + h).
pub fn mean_field_fixed_point(model: &MfModel, m_init: &[f64], damping: f64, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    if m_init.len() != model.measure.n {
        return Err(Error::DimensionMismatch("m_init has the wrong dimension".into()));
    }
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::ParameterOutOfRange(format!("damping must lie in (0, 1], got {damping}")));
    }
    let mut m = m_init.to_vec();
    for _ in 0..max_iter {
        let target = grad_g(&model.measure, &model.field_at(&m));
        let resid = target.iter().zip(&m).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if resid <= tol {
            return Ok(target);
        }
        for (x, t) in m.iter_mut().zip(&target) {
            *x = (1.0 - damping) * *x + damping * t;
        }
    }
    Err(Error::NoConvergence(format!("fixed-point iteration did not reach {tol:e} in {max_iter} steps")))
}

/// Newton polish of a stationary point of Phi in the affine span. Returns
/// the point and whether the reduced Hessian is positive definite.
fn polish(model: &MfModel, m: &[f64], tol: f64) -> Result<(Vec<f64>, bool)> {
    let meas = &model.measure;
    let b = meas.basis_matrix();
    let r = meas.rank();
    let mut m = m.to_vec();
    let hessian = |e: &EntropyPoint| -> DMatrix<f64> {
        let h = b.transpose() * hess_g(meas, &e.dual) * &b;
        let inv = h.try_inverse().unwrap_or_else(|| DMatrix::identity(r, r) * 1e12);
        inv - DMatrix::identity(r, r) * model.beta
    };
    for _ in 0..50 {
        let e = entropy_point(meas, &m, ENTROPY_TOL)?;
        let g: Vec<f64> = (0..m.len()).map(|i| -model.beta * m[i] - model.h[i] + e.dual[i]).collect();
        let gr = b.transpose() * DVector::from_vec(g);
        let hr = hessian(&e);
        if gr.norm() <= tol {
            let pd = hr.cholesky().is_some();
            return Ok((m, pd));
        }
        let step = match hr.clone().lu().solve(&gr) {
            Some(s) => s,
            None => break,
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let dm = &b * (&step * t);
            let trial: Vec<f64> = m.iter().zip(dm.iter()).map(|(x, d)| x - d).collect();
            if let Ok(et) = entropy_point(meas, &trial, ENTROPY_TOL) {
                let gt: Vec<f64> = (0..m.len()).map(|i| -model.beta * trial[i] - model.h[i] + et.dual[i]).collect();
                let gtr = b.transpose() * DVector::from_vec(gt);
                if gtr.norm() < gr.norm() {
                    m = trial;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let e = entropy_point(meas, &m, ENTROPY_TOL)?;
    let pd = hessian(&e).cholesky().is_some();
    Ok((m, pd))
}

/// Local minima of Phi reached from the given starts, best first.
pub fn minimize_phi(model: &MfModel, starts: &[Vec<f64>], tol: f64) -> Result<Vec<(Vec<f64>, f64)>> {
    if starts.is_empty() {
        return Err(Error::ParameterOutOfRange("need at least one start".into()));
    }
    let found: Vec<Option<(Vec<f64>, f64)>> = starts
        .par_iter()
        .map(|s| {
            let m = mean_field_fixed_point(model, s, DEFAULT_DAMPING, 1e-9, 200_000).ok()?;
            let (m, pd) = polish(model, &m, tol).ok()?;
            if !pd {
                return None;
            }
            let v = phi(model, &m).ok()?;
            Some((m, v))
        })
        .collect();
    let mut minima: Vec<(Vec<f64>, f64)> = Vec::new();
    for (m, v) in found.into_iter().flatten() {
        let dup = minima.iter().any(|(x, _)| {
            x.iter().zip(&m).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() < DEDUP_RADIUS
        });
        if !dup {
            minima.push((m, v));
        }
    }
    if minima.is_empty() {
        return Err(Error::NoConvergence("no start converged to a local minimum".into()));
    }
    minima.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    Ok(minima)
}

/// A spread of starting points: the centre and points pulled toward each atom.
pub fn default_starts(measure: &AprioriMeasure) -> Vec<Vec<f64>> {
    let mut starts = vec![measure.center.clone()];
    for a in &measure.atoms {
        for t in [0.5, 0.95] {
            starts.push(a.iter().zip(&measure.center).map(|(x, c)| t * x + (1.0 - t) * c).collect());
        }
    }
    starts
}
