//! Heat-bath Monte Carlo on the torus with periodized long-range couplings.
//!
//! Potts spins live on the tetrahedral vectors and the chain targets
//!
//!   exp( (beta'/2) sum_{x != y} J_{x,y} (S_x, S_y) + h #{x : S_x = v_1} ),
//!
//! with beta' = beta (q - 1)/q, so that beta is measured in the same units as
//! the barycentric mean-field theory. Blume-Capel spins take values
//! sigma in {+1, 0, -1} and the chain targets
//!
//!   exp( -(beta/2) sum_{x != y} J_{x,y} (sigma_x - sigma_y)^2 - lambda #{x : sigma_x = 0} ).
//!
//! Both sums run over ordered pairs. Each site carries a cached local field
//! m_x = sum_y J_{x,y} S_y, including the coupling of the site to its own
//! periodic images; the heat-bath step removes that self term.

use crate::couplings::TorusKernel;
use crate::error::{Error, Result};
use crate::mf_core::{self, tetrahedral_vectors, AprioriMeasure, MfModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Sweeps between full recomputations of the local field.
pub const REFRESH_INTERVAL: u64 = 64;
/// Largest configuration space handled by exact enumeration.
pub const MAX_ENUMERATION: usize = 1 << 20;
const INIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpinKind {
    Potts { q: usize },
    BlumeCapel,
}

impl SpinKind {
    pub fn states(&self) -> usize {
        match self {
            SpinKind::Potts { q } => *q,
            SpinKind::BlumeCapel => 3,
        }
    }

    /// Dimension n of the spin space.
    pub fn dim(&self) -> usize {
        match self {
            SpinKind::Potts { q } => q - 1,
            SpinKind::BlumeCapel => 1,
        }
    }

    /// Spin vector of each state. State 0 is v_1 for Potts and +1 for
    /// Blume-Capel (the "ordered" state); Blume-Capel states 1, 2 are 0, -1.
    pub fn vectors(&self) -> Vec<Vec<f64>> {
        match self {
            SpinKind::Potts { q } => tetrahedral_vectors(*q),
            SpinKind::BlumeCapel => vec![vec![1.0], vec![0.0], vec![-1.0]],
        }
    }

    /// Coefficient of the pair interaction in the normalization where the
    /// Gibbs weight is exp(-(b/4) sum_{x,y} J |S_x - S_y|^2): the b of the
    /// infrared bound.
    pub fn effective_beta(&self, beta: f64) -> f64 {
        match self {
            SpinKind::Potts { q } => beta * (*q as f64 - 1.0) / *q as f64,
            SpinKind::BlumeCapel => 2.0 * beta,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SpinKind::Potts { q } if !(2..=255).contains(q) => {
                Err(Error::ParameterOutOfRange(format!("Potts needs 2 <= q <= 255, got {q}")))
            }
            _ => Ok(()),
        }
    }

    fn code(&self) -> u8 {
        match self {
            SpinKind::Potts { .. } => 0,
            SpinKind::BlumeCapel => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Init {
    /// Every site in state 0.
    Ordered,
    /// Independent uniform states.
    Disordered,
    /// Every site in the given state.
    Constant(u8),
    Given(Vec<u8>),
}

#[derive(Debug, Clone)]
pub struct TorusState {
    pub kind: SpinKind,
    pub l: usize,
    pub d: usize,
    /// State index at each site, row-major.
    pub spins: Vec<u8>,
    /// Cached local fields, `dim` components per site.
    pub local_field: Vec<f64>,
    pub kernel: TorusKernel,
    pub rng_seed: u64,
    pub sweep_count: u64,
    vectors: Vec<Vec<f64>>,
    attempted: u64,
    changed: u64,
}

pub fn build_state(kernel: TorusKernel, kind: SpinKind, init: Init, seed: u64) -> Result<TorusState> {
    kind.validate()?;
    let n = kernel.sites();
    let states = kind.states();
    let spins = match init {
        Init::Ordered => vec![0; n],
        Init::Constant(s) => {
            if s as usize >= states {
                return Err(Error::ParameterOutOfRange(format!("state {s} out of range for {states} states")));
            }
            vec![s; n]
        }
        Init::Disordered => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(INIT_STREAM);
            (0..n).map(|_| rng.gen_range(0..states) as u8).collect()
        }
        Init::Given(s) => {
            if s.len() != n {
                return Err(Error::DimensionMismatch(format!("{} spins given for {n} sites", s.len())));
            }
            if s.iter().any(|v| *v as usize >= states) {
                return Err(Error::ParameterOutOfRange(format!("spin state out of range for {states} states")));
            }
            s
        }
    };
    let mut state = TorusState {
        kind,
        l: kernel.l,
        d: kernel.d,
        spins,
        local_field: vec![0.0; n * kind.dim()],
        kernel,
        rng_seed: seed,
        sweep_count: 0,
        vectors: kind.vectors(),
        attempted: 0,
        changed: 0,
    };
    state.refresh_field();
    Ok(state)
}

impl TorusState {
    pub fn sites(&self) -> usize {
        self.spins.len()
    }

    pub fn spin(&self, x: usize) -> &[f64] {
        &self.vectors[self.spins[x] as usize]
    }

    pub fn field_at(&self, x: usize) -> &[f64] {
        let n = self.kind.dim();
        &self.local_field[x * n..(x + 1) * n]
    }

    /// Fraction of single-site updates that changed the state.
    pub fn acceptance(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.changed as f64 / self.attempted as f64
        }
    }

    fn full_field(&self) -> Vec<f64> {
        let n = self.kind.dim();
        let mut field = vec![0.0; self.local_field.len()];
        for x in 0..self.sites() {
            let s = self.vectors[self.spins[x] as usize].clone();
            if s.iter().all(|v| *v == 0.0) {
                continue;
            }
            add_translates(&self.kernel, x, &s, n, &mut field);
        }
        field
    }

    /// Recompute every local field from scratch.
    pub fn refresh_field(&mut self) {
        self.local_field = self.full_field();
    }

    /// Largest deviation of the cached local field from a full recomputation.
    pub fn field_drift(&self) -> f64 {
        self.full_field()
            .iter()
            .zip(&self.local_field)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Heat-bath conditional law of site x given the rest.
    pub fn conditional_probs(&self, x: usize, beta: f64, field: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.kind.states()];
        self.conditional_into(x, beta, field, &mut out);
        out
    }

    fn conditional_into(&self, x: usize, beta: f64, field: f64, out: &mut [f64]) {
        let n = self.kind.dim();
        let j0 = self.kernel.row[0];
        let cur = &self.vectors[self.spins[x] as usize];
        let m = &self.local_field[x * n..(x + 1) * n];
        match self.kind {
            SpinKind::Potts { .. } => {
                let b = self.kind.effective_beta(beta);
                for (s, v) in self.vectors.iter().enumerate() {
                    let mut dotp = 0.0;
                    for c in 0..n {
                        dotp += v[c] * (m[c] - j0 * cur[c]);
                    }
                    out[s] = b * dotp + if s == 0 { field } else { 0.0 };
                }
            }
            SpinKind::BlumeCapel => {
                let mx = m[0] - j0 * cur[0];
                for (s, v) in self.vectors.iter().enumerate() {
                    let sig = v[0];
                    out[s] = 2.0 * beta * sig * mx - beta * (1.0 - j0) * sig * sig - if s == 1 { field } else { 0.0 };
                }
            }
        }
        let top = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for o in out.iter_mut() {
            *o = (*o - top).exp();
            z += *o;
        }
        for o in out.iter_mut() {
            *o /= z;
        }
    }

    /// Change the state of site x, updating the local fields.
    pub fn set_spin(&mut self, x: usize, s: u8) {
        let old = self.spins[x];
        if old == s {
            return;
        }
        let n = self.kind.dim();
        let delta: Vec<f64> = (0..n)
            .map(|c| self.vectors[s as usize][c] - self.vectors[old as usize][c])
            .collect();
        self.spins[x] = s;
        add_translates(&self.kernel, x, &delta, n, &mut self.local_field);
    }

    /// Write the configuration: kind (u8), q (u32), L (u32), d (u32),
    /// seed (u64), sweep_count (u64), then one state byte per site. All
    /// integers little-endian.
    pub fn dump<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&[self.kind.code()])?;
        w.write_all(&(self.kind.states() as u32).to_le_bytes())?;
        w.write_all(&(self.l as u32).to_le_bytes())?;
        w.write_all(&(self.d as u32).to_le_bytes())?;
        w.write_all(&self.rng_seed.to_le_bytes())?;
        w.write_all(&self.sweep_count.to_le_bytes())?;
        w.write_all(&self.spins)?;
        Ok(())
    }

    /// Restore a configuration written by [`TorusState::dump`]. The kernel
    /// is not part of the file and must match its L and d.
    pub fn restore<R: Read>(kernel: TorusKernel, mut r: R) -> Result<TorusState> {
        let mut head = [0u8; 29];
        r.read_exact(&mut head)?;
        let u32_at = |i: usize| u32::from_le_bytes(head[i..i + 4].try_into().unwrap()) as usize;
        let u64_at = |i: usize| u64::from_le_bytes(head[i..i + 8].try_into().unwrap());
        let q = u32_at(1);
        let kind = match head[0] {
            0 => SpinKind::Potts { q },
            1 if q == 3 => SpinKind::BlumeCapel,
            k => return Err(Error::DimensionMismatch(format!("unknown spin kind {k} with {q} states"))),
        };
        let (l, d) = (u32_at(5), u32_at(9));
        if l != kernel.l || d != kernel.d {
            return Err(Error::DimensionMismatch(format!(
                "dump is for L={l}, d={d} but the kernel has L={}, d={}",
                kernel.l, kernel.d
            )));
        }
        let seed = u64_at(13);
        let sweeps = u64_at(21);
        let mut spins = vec![0u8; kernel.sites()];
        r.read_exact(&mut spins)?;
        let mut state = build_state(kernel, kind, Init::Given(spins), seed)?;
        state.sweep_count = sweeps;
        Ok(state)
    }
}

/// field[y] += row[y - x] * v for every site y.
fn add_translates(kernel: &TorusKernel, x: usize, v: &[f64], n: usize, field: &mut [f64]) {
    let row = &kernel.row;
    if kernel.d == 1 {
        let l = kernel.l;
        // y = x + k for k < l - x, then wraps
        for (k, y) in (x..l).enumerate() {
            let j = row[k];
            for c in 0..n {
                field[y * n + c] += j * v[c];
            }
        }
        for y in 0..x {
            let j = row[y + l - x];
            for c in 0..n {
                field[y * n + c] += j * v[c];
            }
        }
    } else {
        for y in 0..kernel.sites() {
            let j = row[kernel.displacement(x, y)];
            for c in 0..n {
                field[y * n + c] += j * v[c];
            }
        }
    }
}

/// n_sweeps lexicographic passes of single-site heat-bath updates. Each
/// sweep draws from its own ChaCha stream, indexed by the sweep count, so a
/// restored dump continues exactly where it left off.
pub fn sweep(state: &mut TorusState, beta: f64, field: f64, n_sweeps: u64) -> Result<()> {
    if n_sweeps == 0 {
        return Err(Error::ParameterOutOfRange("need at least one sweep".into()));
    }
    if !(beta >= 0.0) || !beta.is_finite() || !field.is_finite() {
        return Err(Error::ParameterOutOfRange(format!("need finite beta >= 0 and finite field, got {beta}, {field}")));
    }
    let mut probs = vec![0.0; state.kind.states()];
    for _ in 0..n_sweeps {
        let mut rng = ChaCha8Rng::seed_from_u64(state.rng_seed);
        rng.set_stream(state.sweep_count);
        for x in 0..state.sites() {
            state.conditional_into(x, beta, field, &mut probs);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = probs.len() - 1;
            for (s, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = s;
                    break;
                }
            }
            state.attempted += 1;
            if pick as u8 != state.spins[x] {
                state.changed += 1;
                state.set_spin(x, pick as u8);
            }
        }
        state.sweep_count += 1;
        if state.sweep_count % REFRESH_INTERVAL == 0 {
            state.refresh_field();
        }
    }
    Ok(())
}

/// Observables of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Torus average of S_x.
    pub m: Vec<f64>,
    /// (1/2) site average of (S_x, m_x).
    pub e: f64,
    /// Site average of |m_x - mean m|^2.
    pub var_m0: f64,
    /// Site average of |S_x|^2.
    pub spin_sq: f64,
}

pub fn snapshot(state: &TorusState) -> Snapshot {
    let n = state.kind.dim();
    let sites = state.sites() as f64;
    // spins are summed relative to site 0, so a uniform state averages exactly
    let s0 = state.spin(0).to_vec();
    let mut m = vec![0.0; n];
    let mut mbar = vec![0.0; n];
    let mut e = 0.0;
    let mut sq = 0.0;
    for x in 0..state.sites() {
        let s = state.spin(x);
        let f = state.field_at(x);
        for c in 0..n {
            m[c] += s[c] - s0[c];
            mbar[c] += f[c];
            e += s[c] * f[c];
            sq += s[c] * s[c];
        }
    }
    for c in 0..n {
        m[c] = s0[c] + m[c] / sites;
        mbar[c] /= sites;
    }
    let mut var = 0.0;
    for x in 0..state.sites() {
        let f = state.field_at(x);
        for c in 0..n {
            var += (f[c] - mbar[c]).powi(2);
        }
    }
    Snapshot { m, e: 0.5 * e / sites, var_m0: var / sites, spin_sq: sq / sites }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MCReport {
    /// Sample mean of the torus-averaged spin.
    pub m_star: Vec<f64>,
    pub stderr_m: Vec<f64>,
    /// Sample mean of the norm of the torus-averaged spin.
    pub m_abs: f64,
    pub stderr_m_abs: f64,
    pub e_star: f64,
    pub stderr_e: f64,
    pub var_m0: f64,
    pub stderr_var: f64,
    pub spin_sq: f64,
    pub stderr_spin_sq: f64,
    pub samples: usize,
    /// Integrated autocorrelation time of the energy, in samples.
    pub tau_e: f64,
    /// Fraction of updates that changed a spin during the measurement.
    pub acceptance: f64,
}

/// Mean, batch-means standard error and integrated autocorrelation time.
pub fn batch_stats(series: &[f64]) -> (f64, f64, f64) {
    let n = series.len();
    // shifting by the first value makes the mean of a constant series exact
    let x0 = series[0];
    let mean = x0 + series.iter().map(|v| v - x0).sum::<f64>() / n as f64;
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
    let nb = ((n as f64).sqrt() as usize).clamp(2, 32).min(n);
    let b = n / nb;
    let means: Vec<f64> = (0..nb)
        .map(|i| series[n - (nb - i) * b..n - (nb - i - 1) * b].iter().sum::<f64>() / b as f64)
        .collect();
    let bm = means.iter().sum::<f64>() / nb as f64;
    let var_bm = means.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (nb as f64 - 1.0);
    let stderr = (var_bm / nb as f64).sqrt();
    let tau = if var > 0.0 { (b as f64 * var_bm / (2.0 * var)).max(0.5) } else { 0.5 };
    (mean, stderr, tau)
}

/// Collect n_samples snapshots separated by `thin` sweeps. With thin = 0 the
/// configuration is frozen.
pub fn measure(state: &mut TorusState, beta: f64, field: f64, n_samples: usize, thin: u64) -> Result<MCReport> {
    measure_series(state, beta, field, n_samples, thin).map(|(report, _)| report)
}

/// One recorded sample: the sweep count it was taken at, the running
/// acceptance rate of the chain, and the observables.
#[derive(Debug, Clone)]
pub struct Sample {
    pub sweep: u64,
    pub acceptance: f64,
    pub snapshot: Snapshot,
}

/// Like [`measure`], also returning the time series.
pub fn measure_series(
    state: &mut TorusState,
    beta: f64,
    field: f64,
    n_samples: usize,
    thin: u64,
) -> Result<(MCReport, Vec<Sample>)> {
    if n_samples < 10 {
        return Err(Error::ParameterOutOfRange(format!("need at least 10 samples, got {n_samples}")));
    }
    let n = state.kind.dim();
    let (att0, chg0) = (state.attempted, state.changed);
    let mut series = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        if thin > 0 {
            sweep(state, beta, field, thin)?;
        }
        series.push(Sample { sweep: state.sweep_count, acceptance: state.acceptance(), snapshot: snapshot(state) });
    }
    let snaps: Vec<&Snapshot> = series.iter().map(|s| &s.snapshot).collect();
    let col = |f: &dyn Fn(&Snapshot) -> f64| batch_stats(&snaps.iter().map(|s| f(s)).collect::<Vec<f64>>());
    let mut m_star = vec![0.0; n];
    let mut stderr_m = vec![0.0; n];
    for c in 0..n {
        let (mu, se, _) = col(&|s| s.m[c]);
        m_star[c] = mu;
        stderr_m[c] = se;
    }
    let (m_abs, stderr_m_abs, _) = col(&|s| s.m.iter().map(|v| v * v).sum::<f64>().sqrt());
    let (e_star, stderr_e, tau_e) = col(&|s| s.e);
    let (var_m0, stderr_var, _) = col(&|s| s.var_m0);
    let (spin_sq, stderr_spin_sq, _) = col(&|s| s.spin_sq);
    let att = state.attempted - att0;
    let acceptance = if att == 0 { 0.0 } else { (state.changed - chg0) as f64 / att as f64 };
    let report = MCReport {
        m_star,
        stderr_m,
        m_abs,
        stderr_m_abs,
        e_star,
        stderr_e,
        var_m0,
        stderr_var,
        spin_sq,
        stderr_spin_sq,
        samples: n_samples,
        tau_e,
        acceptance,
    };
    Ok((report, series))
}

/// Mean-field model in the generic engine matching the torus chain: the
/// Potts field acts along v_1, and the Blume-Capel single-site part
/// -beta sigma^2 - lambda 1{sigma = 0} goes into the a priori weights.
pub fn mean_field_model(kind: SpinKind, beta: f64, field: f64) -> Result<MfModel> {
    match kind {
        SpinKind::Potts { q } => {
            let v1 = &tetrahedral_vectors(q)[0];
            let scale = field * (q as f64 - 1.0) / q as f64;
            MfModel::new(AprioriMeasure::potts(q)?, kind.effective_beta(beta), v1.iter().map(|v| scale * v).collect())
        }
        SpinKind::BlumeCapel => {
            // weights relative to the zero state keep them finite for large beta
            let w = (field - beta).exp();
            let measure = AprioriMeasure::new(kind.vectors(), vec![w, 1.0, w])?;
            MfModel::new(measure, kind.effective_beta(beta), vec![0.0])
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdicts {
    /// beta_eff Var(m_0) <= n I_torus + 3 stderr.
    pub a: BoundCheck,
    /// Phi(m_star) <= inf Phi + beta_eff n (kappa/2) I_torus + 3 stderr; None
    /// when m_star is on the boundary of the convex hull, where Phi is not
    /// evaluated.
    pub b: Option<BoundCheck>,
    pub inf_phi: f64,
}

/// Compare a measurement with the infrared bound on the local-field
/// variance and with the mean-field free-energy bound.
pub fn check_bounds(report: &MCReport, kind: SpinKind, beta: f64, field: f64, i_torus: f64) -> Result<Verdicts> {
    if (report.samples as f64) < 50.0 * report.tau_e {
        return Err(Error::NotEquilibrated(format!(
            "{} samples against an autocorrelation time of {:.1}",
            report.samples, report.tau_e
        )));
    }
    let b_eff = kind.effective_beta(beta);
    let n = kind.dim() as f64;
    let a_lhs = b_eff * report.var_m0;
    let a_rhs = n * i_torus + 3.0 * b_eff * report.stderr_var;
    let a = BoundCheck { lhs: a_lhs, rhs: a_rhs, pass: a_lhs <= a_rhs };

    let model = mean_field_model(kind, beta, field)?;
    let starts = mf_core::default_starts(&model.measure);
    let inf_phi = mf_core::minimize_phi(&model, &starts, 1e-10)?[0].1;
    let b = match (mf_core::phi(&model, &report.m_star), mf_core::grad_phi(&model, &report.m_star)) {
        (Ok(v), Ok(g)) => {
            let gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            let se = report.stderr_m.iter().map(|x| x * x).sum::<f64>().sqrt();
            let rhs = inf_phi + b_eff * n * 0.5 * model.measure.kappa * i_torus + 3.0 * gnorm * se;
            Some(BoundCheck { lhs: v, rhs, pass: v <= rhs })
        }
        _ => None,
    };
    Ok(Verdicts { a, b, inf_phi })
}

/// Observables computed exactly by summing over every configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExactReport {
    pub m_star: Vec<f64>,
    pub m_abs: f64,
    pub e_star: f64,
    pub var_m0: f64,
    pub spin_sq: f64,
}

/// Digits of configuration index `idx`: site x holds (idx / states^x) % states.
pub fn configuration(idx: usize, states: usize, sites: usize) -> Vec<u8> {
    let mut c = Vec::with_capacity(sites);
    let mut i = idx;
    for _ in 0..sites {
        c.push((i % states) as u8);
        i /= states;
    }
    c
}

fn configuration_count(kernel: &TorusKernel, kind: SpinKind) -> Result<usize> {
    kind.validate()?;
    let sites = kernel.sites() as u32;
    kind.states()
        .checked_pow(sites)
        .filter(|c| *c <= MAX_ENUMERATION)
        .ok_or_else(|| Error::ParameterOutOfRange(format!("{}^{sites} configurations is too many to enumerate", kind.states())))
}

/// Log of the unnormalized Gibbs weight of a configuration.
pub fn log_weight(state: &TorusState, beta: f64, field: f64) -> f64 {
    let j0 = state.kernel.row[0];
    let mut w = 0.0;
    for x in 0..state.sites() {
        let s = state.spin(x);
        let f = state.field_at(x);
        let pair: f64 = s.iter().zip(f).map(|(a, b)| a * (b - j0 * a)).sum();
        match state.kind {
            SpinKind::Potts { .. } => {
                w += 0.5 * state.kind.effective_beta(beta) * pair;
                if state.spins[x] == 0 {
                    w += field;
                }
            }
            SpinKind::BlumeCapel => {
                // sum_{y != x} J (s_x - s_y)^2 = (1 - J_0) s_x^2 + sum_{y != x} J s_y^2 - 2 s_x m'_x;
                // summed over x the two square terms coincide
                w -= 0.5 * beta * (2.0 * (1.0 - j0) * s[0] * s[0] - 2.0 * pair);
                if state.spins[x] == 1 {
                    w -= field;
                }
            }
        }
    }
    w
}

/// Normalized Gibbs probabilities of all configurations, indexed as in
/// [`configuration`].
pub fn gibbs_distribution(kernel: &TorusKernel, kind: SpinKind, beta: f64, field: f64) -> Result<Vec<f64>> {
    let count = configuration_count(kernel, kind)?;
    let mut st = build_state(kernel.clone(), kind, Init::Ordered, 0)?;
    let mut logs = Vec::with_capacity(count);
    for idx in 0..count {
        for (x, s) in configuration(idx, kind.states(), st.sites()).into_iter().enumerate() {
            st.set_spin(x, s);
        }
        logs.push(log_weight(&st, beta, field));
    }
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / z).collect())
}

pub fn exact_observables(kernel: &TorusKernel, kind: SpinKind, beta: f64, field: f64) -> Result<ExactReport> {
    let p = gibbs_distribution(kernel, kind, beta, field)?;
    let mut st = build_state(kernel.clone(), kind, Init::Ordered, 0)?;
    let n = kind.dim();
    let mut out = ExactReport { m_star: vec![0.0; n], m_abs: 0.0, e_star: 0.0, var_m0: 0.0, spin_sq: 0.0 };
    for (idx, pi) in p.iter().enumerate() {
        for (x, s) in configuration(idx, kind.states(), st.sites()).into_iter().enumerate() {
            st.set_spin(x, s);
        }
        st.refresh_field();
        let snap = snapshot(&st);
        for c in 0..n {
            out.m_star[c] += pi * snap.m[c];
        }
        out.m_abs += pi * snap.m.iter().map(|v| v * v).sum::<f64>().sqrt();
        out.e_star += pi * snap.e;
        out.var_m0 += pi * snap.var_m0;
        out.spin_sq += pi * snap.spin_sq;
    }
    Ok(out)
}

/// Transition matrix of one heat-bath update at `site`, over all
/// configurations; entry [a][b] is the probability of moving from a to b.
pub fn heat_bath_matrix(kernel: &TorusKernel, kind: SpinKind, beta: f64, field: f64, site: usize) -> Result<Vec<Vec<f64>>> {
    let count = configuration_count(kernel, kind)?;
    if site >= kernel.sites() {
        return Err(Error::ParameterOutOfRange(format!("site {site} out of range")));
    }
    let states = kind.states();
    let mut st = build_state(kernel.clone(), kind, Init::Ordered, 0)?;
    let mut stride = 1;
    for _ in 0..site {
        stride *= states;
    }
    let mut mat = vec![vec![0.0; count]; count];
    for (a, row) in mat.iter_mut().enumerate() {
        let conf = configuration(a, states, st.sites());
        for (x, s) in conf.iter().enumerate() {
            st.set_spin(x, *s);
        }
        let probs = st.conditional_probs(site, beta, field);
        let base = a - conf[site] as usize * stride;
        for (s, p) in probs.iter().enumerate() {
            row[base + s * stride] = *p;
        }
    }
    Ok(mat)
}

/// Which parameter a hysteresis scan varies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScanAxis {
    /// Vary beta at fixed field.
    Beta { field: f64 },
    /// Vary the field (h for Potts, lambda for Blume-Capel) at fixed beta.
    Field { beta: f64 },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScanPoint {
    pub m_abs: f64,
    pub e_star: f64,
    pub spin_sq: f64,
    /// Standard error of the order parameter across replicas.
    pub stderr_order: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HysteresisRow {
    pub value: f64,
    /// Chains started at the low end of the grid and moved up.
    pub ascending: ScanPoint,
    /// Chains started at the high end of the grid and moved down.
    pub descending: ScanPoint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HysteresisTable {
    pub rows: Vec<HysteresisRow>,
    /// Largest difference between the branches in the order parameter:
    /// |m| for Potts, the density of non-zero spins for Blume-Capel.
    pub max_gap: f64,
    pub gap_at: f64,
    pub replicas: usize,
}

fn order_parameter(kind: SpinKind, p: &ScanPoint) -> f64 {
    match kind {
        SpinKind::Potts { .. } => p.m_abs,
        SpinKind::BlumeCapel => p.spin_sq,
    }
}

fn annealed_chain(
    kernel: &TorusKernel,
    kind: SpinKind,
    grid: &[f64],
    axis: ScanAxis,
    init: Init,
    sweeps_per_point: u64,
    seed: u64,
) -> Result<Vec<ScanPoint>> {
    let mut st = build_state(kernel.clone(), kind, init, seed)?;
    let equil = (sweeps_per_point / 2).max(1);
    let samples = ((sweeps_per_point - equil) as usize).max(10);
    grid.iter()
        .map(|v| {
            let (beta, field) = match axis {
                ScanAxis::Beta { field } => (*v, field),
                ScanAxis::Field { beta } => (beta, *v),
            };
            sweep(&mut st, beta, field, equil)?;
            let r = measure(&mut st, beta, field, samples, 1)?;
            let stderr_order = match kind {
                SpinKind::Potts { .. } => r.stderr_m_abs,
                SpinKind::BlumeCapel => r.stderr_spin_sq,
            };
            Ok(ScanPoint { m_abs: r.m_abs, e_star: r.e_star, spin_sq: r.spin_sq, stderr_order })
        })
        .collect()
}

fn replica_average(kind: SpinKind, runs: &[Vec<ScanPoint>], i: usize) -> ScanPoint {
    let r = runs.len() as f64;
    let mut p = ScanPoint::default();
    for run in runs {
        p.m_abs += run[i].m_abs / r;
        p.e_star += run[i].e_star / r;
        p.spin_sq += run[i].spin_sq / r;
    }
    if runs.len() == 1 {
        p.stderr_order = runs[0][i].stderr_order;
    } else {
        let mean = order_parameter(kind, &p);
        let var = runs.iter().map(|run| (order_parameter(kind, &run[i]) - mean).powi(2)).sum::<f64>() / (r - 1.0);
        p.stderr_order = (var / r).sqrt();
    }
    p
}

/// Pairs of annealed chains over a sorted grid: one from the low end
/// upward, one from the high end downward. In a beta scan the ascending
/// chain starts disordered and the descending one ordered; in a Blume-Capel
/// lambda scan they start from all zeros and all plus spins. Each grid point
/// gets sweeps_per_point sweeps, half to relax and half to measure.
///
/// The annealing rate sets how far a branch can lag behind equilibrium, so
/// it is kept fixed and the statistical noise is reduced instead by
/// averaging each branch over independent replicas.
pub fn hysteresis_scan(
    kernel: &TorusKernel,
    kind: SpinKind,
    grid: &[f64],
    axis: ScanAxis,
    sweeps_per_point: u64,
    replicas: usize,
    seed: u64,
) -> Result<HysteresisTable> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::ParameterOutOfRange("scan grid must be non-empty and strictly increasing".into()));
    }
    if sweeps_per_point < 2 {
        return Err(Error::ParameterOutOfRange("need at least 2 sweeps per point".into()));
    }
    if replicas == 0 {
        return Err(Error::ParameterOutOfRange("need at least one replica".into()));
    }
    let (low_init, high_init) = match (kind, axis) {
        (SpinKind::BlumeCapel, ScanAxis::Field { .. }) => (Init::Constant(1), Init::Ordered),
        _ => (Init::Disordered, Init::Ordered),
    };
    let reversed: Vec<f64> = grid.iter().rev().cloned().collect();
    let runs: Vec<(Vec<ScanPoint>, Vec<ScanPoint>)> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let s = seed.wrapping_add(r.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let up = annealed_chain(kernel, kind, grid, axis, low_init.clone(), sweeps_per_point, s)?;
            let mut down = annealed_chain(kernel, kind, &reversed, axis, high_init.clone(), sweeps_per_point, !s)?;
            down.reverse();
            Ok((up, down))
        })
        .collect::<Result<_>>()?;
    let (ups, downs): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let mut rows = Vec::with_capacity(grid.len());
    let (mut max_gap, mut gap_at) = (0.0, grid[0]);
    for (i, v) in grid.iter().enumerate() {
        let a = replica_average(kind, &ups, i);
        let b = replica_average(kind, &downs, i);
        let gap = (order_parameter(kind, &a) - order_parameter(kind, &b)).abs();
        if gap > max_gap {
            max_gap = gap;
            gap_at = *v;
        }
        rows.push(HysteresisRow { value: *v, ascending: a, descending: b });
    }
    Ok(HysteresisTable { rows, max_gap, gap_at, replicas })
}
