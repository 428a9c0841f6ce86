//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion with
//! its runtime, and exits non-zero if any criterion fails.

use std::f64::consts::{LN_2, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use longrange_mf::couplings::{
    normalize, periodize, random_half_space_function, rp_quadratic_form, CouplingFamily, NormalizedCoupling,
    TorusKernel,
};
use longrange_mf::infrared::{integral_i, QuadratureSpec};
use longrange_mf::mf_blume_capel::{boundary_gap, branch_free_energies, lambda_t};
use longrange_mf::mf_core::{default_starts, minimize_phi, phi, AprioriMeasure, MfModel};
use longrange_mf::mf_potts::*;
use longrange_mf::numerics::bisect;
use longrange_mf::torus_mc::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T, E: std::fmt::Debug>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| format!("{e:?}"))
}

fn nc(f: CouplingFamily) -> NormalizedCoupling {
    normalize(&f, 1e-12).unwrap()
}

fn c1_potts_constants() -> Outcome {
    let mut worst: f64 = 0.0;
    for q in 3..=10 {
        let qf = q as f64;
        let b = 2.0 * (qf - 1.0) / (qf - 2.0) * (qf - 1.0).ln();
        let m = (qf - 2.0) / qf;
        let theta = (qf - 2.0) / (qf - 1.0);
        ensure((beta_mf(q) - b).abs() <= 1e-10, || format!("beta_mf({q})"))?;
        ensure((m_mf_at_transition(q) - m).abs() <= 1e-10, || format!("m_mf({q})"))?;
        let r = (theta - f_onaxis(q, beta_mf(q), 0.0, theta)).abs();
        worst = worst.max(r);
        ensure(r <= 1e-12, || format!("on-axis residual {r:e} at q = {q}"))?;
    }
    Ok(format!("q = 3..10, worst fixed-point residual {worst:.1e}"))
}

fn c2_positive_line() -> Outcome {
    let hc = ok(critical_endpoint(3))?.hc;
    let hs: Vec<f64> = (1..=8).map(|i| hc * i as f64 / 9.0).collect();
    let line: Vec<f64> = beta_plus_sweep(3, &hs, 1e-13)
        .into_iter()
        .map(|p| p.map(|p| p.beta_t))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    ensure(line.windows(2).all(|w| w[1] < w[0]), || format!("not decreasing: {line:?}"))?;
    let low = ok(beta_plus(3, 1e-6, 1e-13))?.beta_t;
    let high = ok(beta_plus(3, hc - 1e-6, 1e-13))?.beta_t;
    ensure((low - 4.0 * LN_2).abs() < 1e-4, || format!("h -> 0 limit {low}"))?;
    ensure((high - 8.0 / 3.0).abs() < 1e-3, || format!("h -> hc limit {high}"))?;
    Ok(format!("beta_t from {:.6} to {:.6}; limits {low:.6} and {high:.6}", line[0], line[7]))
}

fn c3_endpoint() -> Outcome {
    let mut notes = Vec::new();
    for q in 3..=8 {
        let e = ok(critical_endpoint(q))?;
        let b0 = 4.0 * (q as f64 - 1.0) / q as f64;
        ensure((e.beta0 - b0).abs() <= 1e-10, || format!("beta0({q}) = {}", e.beta0))?;
        if q == 3 || q == 8 {
            notes.push(format!("q={q}: hc {:.6}, alternative form {:.6}", e.hc, e.hc_printed));
        }
    }
    Ok(format!("beta0 = 4(q-1)/q for q = 3..8; {}", notes.join(", ")))
}

fn c4_negative_line() -> Outcome {
    let far = ok(beta_minus(4, -30.0, 1e-12))?.beta_t;
    let near = ok(beta_minus(4, -1e-4, 1e-12))?.beta_t;
    ensure((far - 4.0 * LN_2).abs() < 1e-3, || format!("h = -30 gives {far}"))?;
    ensure((near - 3.0 * 3f64.ln()).abs() < 1e-2, || format!("h = -1e-4 gives {near}"))?;
    let hs = [-0.01, -0.1, -0.5, -1.0, -3.0];
    let mut min_jump = f64::INFINITY;
    for q in 4..=6 {
        for p in beta_minus_sweep(q, &hs, 1e-12) {
            let p = ok(p)?;
            min_jump = min_jump.min(p.e_a - p.e_s);
            ensure(p.e_a - p.e_s > 0.0, || format!("q = {q}, h = {}: e_A - e_S = {}", p.h, p.e_a - p.e_s))?;
        }
    }
    Ok(format!("beta_minus(4,-30) = {far:.6}, beta_minus(4,-1e-4) = {near:.6}, min e_A - e_S = {min_jump:.3e}"))
}

fn c5_psi_third() -> Outcome {
    let s = 1e-3;
    let mut worst = f64::NEG_INFINITY;
    for q in 4..=8 {
        for factor in [1.05, 1.2, 1.5] {
            let beta = factor * beta_mf(q - 1);
            let top = psi_window(q, beta);
            for h in [-0.3, -1.0] {
                for i in 1..=40 {
                    let x = 2.0 * s + (top - 4.0 * s) * i as f64 / 41.0;
                    let p = |v: f64| psi_partial(q, beta, h, v);
                    let d3 = (-ok(p(x - 2.0 * s))? + 2.0 * ok(p(x - s))? - 2.0 * ok(p(x + s))? + ok(p(x + 2.0 * s))?)
                        / (2.0 * s.powi(3));
                    worst = worst.max(d3);
                    ensure(d3 < -1e-6, || format!("q={q} beta={beta} h={h} x={x}: {d3}"))?;
                }
            }
        }
    }
    Ok(format!("largest psi''' = {worst:.3e}"))
}

fn c6_blume_capel() -> Outcome {
    for beta in [9.0f64, 10.0, 11.0, 12.0, 13.0, 14.0] {
        let e = (-beta).exp();
        let lt = ok(lambda_t(beta, 1e-12))?;
        ensure((lt - e).abs() <= 10.0 * beta * e * e, || format!("lambda_t({beta}) = {lt:e}"))?;
        for lambda in [0.0, e, -e] {
            let (phi0, phi1) = ok(branch_free_energies(beta, lambda))?;
            let slack = 20.0 * beta * e * e;
            let p0 = lambda - 2.0 * (-beta + lambda).exp();
            let p1 = -(-beta - lambda).exp();
            ensure((phi0 - p0).abs() <= slack, || format!("phi0 at beta {beta}, lambda {lambda:e}"))?;
            ensure((phi1 - p1).abs() <= slack, || format!("phi1 at beta {beta}, lambda {lambda:e}"))?;
        }
    }
    let gap = ok(boundary_gap(12.0, 0.0, 50.0))?;
    let need = 0.1 * 50.0 * 50f64.ln() * (-12f64).exp();
    ensure(gap >= need, || format!("boundary gap {gap:e} < {need:e}"))?;
    Ok(format!("boundary_gap(12, 0, 50) = {gap:.3e} >= {need:.3e}"))
}

/// Richardson-extrapolated midpoint rule for the cubic Watson integral.
fn watson_dense_grid() -> f64 {
    let mid = |n: usize| {
        let h = 2.0 * PI / n as f64;
        let c: Vec<f64> = (0..n).map(|i| (-PI + h * (i as f64 + 0.5)).cos()).collect();
        let sum: f64 = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = 0.0;
                for j in 0..n {
                    for l in 0..n {
                        acc += 1.0 / (1.0 - (c[i] + c[j] + c[l]) / 3.0);
                    }
                }
                acc
            })
            .sum();
        sum / (n * n * n) as f64
    };
    2.0 * mid(160) - mid(80)
}

fn c7_infrared() -> Outcome {
    let spec = QuadratureSpec::default();
    let nn = ok(integral_i(&nc(ok(CouplingFamily::nearest_neighbor(3))?), &spec))?;
    let oracle = watson_dense_grid() - 1.0;
    ensure((nn.i_value - 0.5164).abs() <= 2e-3, || format!("I(NN, 3) = {}", nn.i_value))?;
    ensure((nn.i_value - oracle).abs() <= 2e-3, || format!("I(NN, 3) = {} vs oracle {oracle}", nn.i_value))?;
    let families = [
        CouplingFamily::nearest_neighbor(3),
        CouplingFamily::next_nearest(3, 1.0, 0.25),
        CouplingFamily::next_nearest(3, 1.0, -0.2),
        CouplingFamily::yukawa(3, 0.5),
        CouplingFamily::power_law(1, 1.5),
        CouplingFamily::power_law(2, 3.0),
        CouplingFamily::power_law(3, 4.0),
    ];
    for f in families {
        let f = ok(f)?;
        let r = ok(integral_i(&nc(f.clone()), &spec))?;
        ensure((r.i_value - (r.w_value - 1.0)).abs() <= r.error_estimate, || format!("identity fails for {f:?}"))?;
    }
    let seq = |fs: Vec<CouplingFamily>| -> Result<Vec<f64>, String> {
        fs.into_iter().map(|f| ok(integral_i(&nc(f), &spec)).map(|r| r.i_value)).collect()
    };
    let yuk = seq([1.0, 0.5, 0.25, 0.125].iter().map(|m| CouplingFamily::yukawa(3, *m).unwrap()).collect())?;
    let pl = seq([1.5, 1.3, 1.15, 1.05].iter().map(|s| CouplingFamily::power_law(1, *s).unwrap()).collect())?;
    ensure(yuk.windows(2).all(|w| w[1] < w[0]), || format!("Yukawa sequence {yuk:?}"))?;
    ensure(pl.windows(2).all(|w| w[1] < w[0]), || format!("power-law sequence {pl:?}"))?;
    Ok(format!("I(NN, 3) = {:.5} (oracle {oracle:.5}); Yukawa {:.2e} -> {:.2e}; power law {:.3} -> {:.3}", nn.i_value, yuk[0], yuk[3], pl[0], pl[3]))
}

fn c8_reflection_positivity() -> Outcome {
    let mut cases: Vec<(String, CouplingFamily)> = Vec::new();
    for d in 1..=3 {
        cases.push((format!("NN d={d}"), ok(CouplingFamily::nearest_neighbor(d))?));
    }
    for d in [2usize, 3] {
        let kappa = -1.0 / (2.0 * (d as f64 - 1.0));
        cases.push((format!("NNN d={d} extreme"), ok(CouplingFamily::next_nearest(d, 1.0, kappa))?));
    }
    for mu in [0.3, 1.0] {
        for d in [1usize, 2] {
            cases.push((format!("Yukawa mu={mu} d={d}"), ok(CouplingFamily::yukawa(d, mu))?));
        }
    }
    for (d, s) in [(1usize, 1.5), (2, 3.0), (3, 4.0)] {
        cases.push((format!("power law d={d} s={s}"), ok(CouplingFamily::power_law(d, s))?));
    }
    let mut worst = f64::INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for (name, f) in &cases {
        let c = nc(f.clone());
        let d = c.dim();
        let width = if d == 1 { 6 } else { 2 };
        for dir in 0..d {
            for _ in 0..100 {
                let g = random_half_space_function(&mut rng, d, dir, width);
                let v = ok(rp_quadratic_form(&c, &g, dir))?;
                worst = worst.min(v);
                ensure(v >= -1e-10, || format!("{name}, direction {dir}: {v:e}"))?;
            }
        }
    }
    Ok(format!("{} couplings, smallest form {worst:.3e}", cases.len()))
}

fn c9_generic_engine() -> Outcome {
    let q = 3;
    let meas = ok(AprioriMeasure::potts(q))?;
    let starts = default_starts(&meas);
    let scale = (q as f64 - 1.0) / q as f64;
    // free-energy difference between the symmetric and the best ordered minimum
    let gap = |beta: f64| -> f64 {
        let model = MfModel::new(meas.clone(), beta * scale, vec![0.0; q - 1]).unwrap();
        let minima = minimize_phi(&model, &starts, 1e-13).unwrap();
        let sym = phi(&model, &vec![0.0; q - 1]).unwrap();
        let ordered = minima
            .iter()
            .filter(|(m, _)| m.iter().map(|v| v * v).sum::<f64>().sqrt() > 0.05)
            .map(|(_, v)| *v)
            .fold(f64::INFINITY, f64::min);
        if ordered.is_finite() {
            ordered - sym
        } else {
            1.0
        }
    };
    let bt = ok(bisect(gap, 2.7, 2.85, 1e-7))?;
    ensure((bt - beta_mf(3)).abs() <= 1e-4, || format!("generic transition at {bt}"))?;

    let (beta, h) = (2.5, 0.1);
    let model = ok(MfModel::new(meas.clone(), beta * scale, meas.atoms[0].iter().map(|v| h * scale * v).collect()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut diffs = Vec::new();
    for _ in 0..50 {
        let mut x: Vec<f64> = (0..q).map(|_| rng.gen_range(0.02..1.0)).collect();
        let t: f64 = x.iter().sum();
        x.iter_mut().for_each(|v| *v /= t);
        let s: f64 = x[1..].iter().sum();
        x[0] = 1.0 - s;
        let m: Vec<f64> = (0..q - 1).map(|j| (0..q).map(|k| x[k] * meas.atoms[k][j]).sum()).collect();
        let bv = ok(BarycentricVector::new(x))?;
        diffs.push(phi_potts(q, beta, h, &bv) - ok(phi(&model, &m))?);
    }
    let spread = diffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - diffs.iter().cloned().fold(f64::INFINITY, f64::min);
    ensure(spread <= 1e-9, || format!("Phi difference spread {spread:e}"))?;
    Ok(format!("generic transition {bt:.7} vs {:.7}; Phi offset spread {spread:.1e}", beta_mf(3)))
}

fn c10_mc_exactness() -> Outcome {
    let kind = SpinKind::Potts { q: 3 };
    let k = ok(periodize(&nc(ok(CouplingFamily::power_law(1, 1.2))?), 4, 1e-10))?;
    let (beta, field) = (1.5, 0.3);
    let exact = ok(exact_observables(&k, kind, beta, field))?;
    let mut st = ok(build_state(k.clone(), kind, Init::Disordered, 31))?;
    ok(sweep(&mut st, beta, field, 100))?;
    let r = ok(measure(&mut st, beta, field, 1_000_000, 1))?;
    let mut z: f64 = 0.0;
    let mut check = |name: &str, mc: f64, ex: f64, se: f64| -> Result<(), String> {
        let dev = (mc - ex).abs() / se.max(1e-300);
        z = z.max(dev);
        ensure(dev <= 4.0, || format!("{name}: MC {mc} vs exact {ex} ({dev:.1} stderr)"))
    };
    for c in 0..2 {
        check("m", r.m_star[c], exact.m_star[c], r.stderr_m[c])?;
    }
    check("|m|", r.m_abs, exact.m_abs, r.stderr_m_abs)?;
    check("e", r.e_star, exact.e_star, r.stderr_e)?;
    check("var", r.var_m0, exact.var_m0, r.stderr_var)?;

    let two = ok(TorusKernel::from_row(2, 1, vec![0.15, 0.85]))?;
    let pi = ok(gibbs_distribution(&two, kind, 2.3, 0.4))?;
    let mut worst: f64 = 0.0;
    for site in 0..2 {
        let p = ok(heat_bath_matrix(&two, kind, 2.3, 0.4, site))?;
        for b in 0..pi.len() {
            let moved: f64 = (0..pi.len()).map(|a| pi[a] * p[a][b]).sum();
            worst = worst.max((moved - pi[b]).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("pi P - pi = {worst:e}"))?;
    Ok(format!("largest deviation {z:.2} stderr; two-site |pi P - pi| = {worst:.1e}"))
}

fn c11_mc_bounds_and_jump() -> Outcome {
    let k = ok(periodize(&nc(ok(CouplingFamily::power_law(1, 1.2))?), 1024, 1e-8))?;
    let it = k.torus_integral();
    let bt = beta_mf(3);
    let kind = SpinKind::Potts { q: 3 };
    let mut notes = Vec::new();
    for (f, init) in [(0.6, Init::Disordered), (0.8, Init::Disordered), (1.2, Init::Ordered)] {
        let beta = f * bt;
        let mut st = ok(build_state(k.clone(), kind, init, 5))?;
        ok(sweep(&mut st, beta, 0.0, 200))?;
        let r = ok(measure(&mut st, beta, 0.0, 1000, 1))?;
        let v = ok(check_bounds(&r, kind, beta, 0.0, it))?;
        let b = v.b.as_ref().ok_or_else(|| format!("verdict B not evaluated at beta = {beta}"))?;
        ensure(v.a.pass && b.pass, || format!("beta = {beta}: A {:?}, B {:?}", v.a, b))?;
        notes.push(format!("{f}bt"));
    }
    let grid = |center: f64| -> Vec<f64> { (0..25).map(|i| center * (0.8 + 0.4 * i as f64 / 24.0)).collect() };
    let scan = |q: usize, center: f64| {
        hysteresis_scan(&k, SpinKind::Potts { q }, &grid(center), ScanAxis::Beta { field: 0.0 }, 30, 16, 7)
    };
    let potts3 = ok(scan(3, bt))?;
    let ising = ok(scan(2, 2.0))?;
    ensure(potts3.max_gap > 0.2, || format!("q = 3 gap {:.3}", potts3.max_gap))?;
    ensure(ising.max_gap < 0.1, || format!("q = 2 gap {:.3}", ising.max_gap))?;
    Ok(format!(
        "I_torus = {it:.4}; A and B pass at {}; gap q=3 {:.3} at beta {:.3}, q=2 {:.3}",
        notes.join("/"),
        potts3.max_gap,
        potts3.gap_at,
        ising.max_gap
    ))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, Duration, fn() -> Outcome); 11] = [
        (1, "Potts constants", Duration::from_secs(1), c1_potts_constants),
        (2, "positive-field line", Duration::from_secs(10), c2_positive_line),
        (3, "critical endpoint", Duration::from_secs(10), c3_endpoint),
        (4, "negative-field line", Duration::from_secs(30), c4_negative_line),
        (5, "psi''' negativity", Duration::from_secs(10), c5_psi_third),
        (6, "Blume-Capel", Duration::from_secs(10), c6_blume_capel),
        (7, "infrared integral", Duration::from_secs(60), c7_infrared),
        (8, "reflection positivity", Duration::from_secs(30), c8_reflection_positivity),
        (9, "generic engine", Duration::from_secs(30), c9_generic_engine),
        (10, "MC exactness", Duration::from_secs(60), c10_mc_exactness),
        (11, "MC bounds and jump", Duration::from_secs(900), c11_mc_bounds_and_jump),
    ];
    let mut failed = 0;
    for (n, name, limit, f) in criteria {
        let t = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let dt = t.elapsed();
        let out = out.and_then(|s| {
            if dt <= limit {
                Ok(s)
            } else {
                Err(format!("took {dt:.1?}, limit {limit:?}"))
            }
        });
        match out {
            Ok(s) => println!("criterion {n:>2} PASS [{:>8.2?}] {name}: {s}", dt),
            Err(s) => {
                failed += 1;
                println!("criterion {n:>2} FAIL [{:>8.2?}] {name}: {s}", dt)
            }
        }
    }
    println!("acceptance: {} of 11 criteria passed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
