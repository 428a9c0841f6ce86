use longrange_mf::error::Error;
use longrange_mf::mf_blume_capel::*;
use proptest::prelude::*;

fn mf(x1: f64, x0: f64, xm1: f64) -> MoleFractions {
    MoleFractions { x1, x0, xm1 }
}

fn branches(beta: f64, lambda: f64) -> Vec<BranchReport> {
    stationary_branches(beta, lambda).unwrap().into_iter().map(|b| b.unwrap()).collect()
}

/// log of each coordinate, dominant one through ln_1p.
fn logs(x: &MoleFractions) -> [f64; 3] {
    let a = [x.x1, x.x0, x.xm1];
    let mut l = [0.0; 3];
    for i in 0..3 {
        let rest: f64 = (0..3).filter(|j| *j != i).map(|j| a[j]).sum();
        l[i] = if a[i] > 0.5 { (-rest).ln_1p() } else { a[i].ln() };
    }
    l
}

/// Gradient components of Phi, up to the common constant 1.
fn grad(beta: f64, lambda: f64, x: &MoleFractions) -> [f64; 3] {
    let l = logs(x);
    [
        l[0] + 4.0 * beta * x.xm1,
        l[1] + beta * (1.0 - 2.0 * x.x0) + lambda,
        l[2] + 4.0 * beta * x.x1,
    ]
}

#[test]
fn phi_at_uniform_is_minus_log_three() {
    let u = 1.0 / 3.0;
    assert!((phi_bc(0.0, 0.0, &mf(u, u, u)) + 3f64.ln()).abs() < 1e-15);
    assert!(stationarity_residual(0.0, 0.0, &mf(u, u, u)) < 1e-15);
}

#[test]
fn phi_handles_the_boundary() {
    assert_eq!(phi_bc(2.0, 0.3, &mf(1.0, 0.0, 0.0)), 0.0);
    assert!((phi_bc(2.0, 0.3, &mf(0.0, 1.0, 0.0)) - 0.3).abs() < 1e-15);
}

#[test]
fn fixed_minus_slice_is_a_scaled_ising_free_energy() {
    let (beta, lambda, c) = (6.0, 0.001, 0.01);
    let j = beta * (1.0 - c);
    let h = 3.0 * beta * c - lambda;
    // z1 here is the fraction of zeros among the non-minus spins
    let offsets: Vec<f64> = (1..=20)
        .map(|k| {
            let z = k as f64 / 21.0;
            let x = mf((1.0 - c) * (1.0 - z), (1.0 - c) * z, c);
            phi_bc(beta, lambda, &x) / (1.0 - c) - ising_reference(j, h, z)
        })
        .collect();
    for o in &offsets {
        assert!((o - offsets[0]).abs() < 1e-12, "{o} vs {}", offsets[0]);
    }
}

#[test]
fn uniform_point_is_not_a_branch_below_the_solver_range() {
    assert!(matches!(stationary_branches(0.0, 0.0), Err(Error::ParameterOutOfRange(_))));
}

#[test]
fn branch_asymptotics_at_beta_ten() {
    let b = branches(10.0, 0.0);
    let e = (-10f64).exp();
    let zero = b.iter().find(|r| r.dominant == 0).unwrap();
    assert!((1.0 - zero.minimizer.x0) <= 3.0 * e);
    let plus = b.iter().find(|r| r.dominant == 1).unwrap();
    assert!(plus.minimizer.xm1 <= 3.0 * (-40f64).exp());
    assert!(plus.minimizer.x0 <= 3.0 * e);
}

#[test]
fn branches_are_interior_stationary_and_dominated() {
    for beta in [5.0, 8.0, 10.0, 12.0, 14.0] {
        for lambda in [-2.0 * (-beta as f64).exp(), 0.0, 1e-3, 0.5] {
            let b = branches(beta, lambda);
            assert_eq!(b.len(), 3);
            for r in &b {
                let x = r.minimizer;
                assert!(x.x1 > 0.0 && x.x0 > 0.0 && x.xm1 > 0.0);
                let g = grad(beta, lambda, &x);
                for p in 0..3 {
                    for q in 0..3 {
                        assert!((g[p] - g[q]).abs() <= 1e-10, "beta {beta} branch {}", r.dominant);
                    }
                }
                assert!(r.newton_residual <= 1e-10);
                let dom = match r.dominant {
                    1 => x.x1,
                    0 => x.x0,
                    _ => x.xm1,
                };
                assert!(dom > 0.5);
                assert_eq!(r.phi, phi_bc(beta, lambda, &x));
            }
        }
    }
}

#[test]
fn branches_are_local_minima() {
    // In the logarithms u of the two minor coordinates, the Hessian of Phi
    // at a stationary point is D M with D = diag(x_minor) and M the Jacobian
    // of the stationarity differences. D M is similar to a symmetric matrix,
    // so it is positive definite exactly when M has positive real
    // eigenvalues.
    for beta in [5.0, 10.0, 14.0] {
        for lambda in [0.0, (-beta as f64).exp()] {
            for r in branches(beta, lambda) {
                let d = match r.dominant {
                    1 => 0,
                    0 => 1,
                    _ => 2,
                };
                let minor: Vec<usize> = (0..3).filter(|k| *k != d).collect();
                let a0 = [r.minimizer.x1, r.minimizer.x0, r.minimizer.xm1];
                let diffs = |u: [f64; 2]| -> [f64; 2] {
                    let mut a = a0;
                    a[minor[0]] = u[0].exp();
                    a[minor[1]] = u[1].exp();
                    a[d] = 1.0 - a[minor[0]] - a[minor[1]];
                    let g = grad(beta, lambda, &mf(a[0], a[1], a[2]));
                    [g[minor[0]] - g[d], g[minor[1]] - g[d]]
                };
                let u0 = [a0[minor[0]].ln(), a0[minor[1]].ln()];
                let step = 1e-5;
                let mut m = [[0.0; 2]; 2];
                for c in 0..2 {
                    let mut up = u0;
                    let mut dn = u0;
                    up[c] += step;
                    dn[c] -= step;
                    let (fu, fd) = (diffs(up), diffs(dn));
                    for row in 0..2 {
                        m[row][c] = (fu[row] - fd[row]) / (2.0 * step);
                    }
                }
                let tr = m[0][0] + m[1][1];
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                assert!(tr > 0.0 && det > 0.0 && tr * tr >= 4.0 * det * (1.0 - 1e-9),
                    "beta {beta} branch {}: {m:?}", r.dominant);
            }
        }
    }
}

#[test]
fn plus_and_minus_branches_are_exact_mirrors() {
    for (beta, lambda) in [(6.0, 0.0), (10.0, 1e-5), (13.0, -1e-6)] {
        let b = branches(beta, lambda);
        let plus = b.iter().find(|r| r.dominant == 1).unwrap();
        let minus = b.iter().find(|r| r.dominant == -1).unwrap();
        assert_eq!(plus.phi, minus.phi);
        assert_eq!(plus.minimizer, minus.minimizer.mirrored());
    }
}

#[test]
fn branch_free_energies_at_beta_twelve() {
    let beta = 12.0;
    let (phi0, phi1) = branch_free_energies(beta, 0.0).unwrap();
    let e = (-beta).exp();
    assert!((phi0 - (0.0 - 2.0 * e)).abs() <= 20.0 * e * e);
    assert!((phi1 + e).abs() <= 20.0 * beta * e * e);
}

#[test]
fn free_energy_gap_formula() {
    for beta in [10.0, 11.0, 12.0, 13.0, 14.0] {
        let e = (-beta as f64).exp();
        for frac in [-2.0, -1.0, 0.0, 0.5, 1.0, 2.0] {
            let lambda = frac * e;
            let (phi0, phi1) = branch_free_energies(beta, lambda).unwrap();
            let predicted = lambda - (-beta + lambda).exp();
            assert!(((phi0 - phi1) - predicted).abs() <= 20.0 * beta * e * e, "beta {beta} lambda {lambda}");
        }
    }
}

#[test]
fn gap_changes_sign_across_the_window() {
    let beta = 10.0;
    let e = (-beta as f64).exp();
    let (a, b) = branch_free_energies(beta, 0.0).unwrap();
    assert!(a < b);
    let (a, b) = branch_free_energies(beta, 3.0 * e).unwrap();
    assert!(a > b);
}

#[test]
fn lambda_t_is_close_to_exp_minus_beta() {
    let beta = 10.0;
    let e = (-beta as f64).exp();
    let lt = lambda_t(beta, 1e-10).unwrap();
    let eps = lt / e - 1.0;
    assert!(eps.abs() <= 10.0 * beta * e, "eps {eps}");
    for beta in [9.0, 10.0, 11.0, 12.0, 13.0, 14.0] {
        let e = (-beta as f64).exp();
        let lt = lambda_t(beta, 1e-10).unwrap();
        assert!((lt - e).abs() <= 10.0 * beta * e * e, "beta {beta}");
        let (a, b) = branch_free_energies(beta, lt).unwrap();
        assert!((a - b).abs() <= 1e-9 * e);
    }
}

#[test]
fn lambda_t_decreases_with_beta() {
    let lts = lambda_t_sweep(&[9.0, 10.0, 11.0, 12.0], 1e-10);
    let v: Vec<f64> = lts.into_iter().map(|r| r.unwrap()).collect();
    for w in v.windows(2) {
        assert!(w[1] < w[0]);
    }
}

#[test]
fn lambda_t_rejects_small_beta() {
    assert!(matches!(lambda_t(7.0, 1e-8), Err(Error::ParameterOutOfRange(_))));
}

/// Dense logit scan of one slice of the boundary set.
fn oracle_slice(beta: f64, lambda: f64, k: usize, delta: f64) -> f64 {
    let mut best = f64::INFINITY;
    let n = 200_000;
    for i in 0..=n {
        let t = -15.0 * beta + 30.0 * beta * i as f64 / n as f64;
        let s = 1.0 / (1.0 + (-t).exp());
        let sc = 1.0 / (1.0 + t.exp());
        let mut a = [0.0; 3];
        let others: Vec<usize> = (0..3).filter(|j| *j != k).collect();
        a[k] = 1.0 - delta;
        a[others[0]] = delta * s;
        a[others[1]] = delta * sc;
        best = best.min(phi_bc(beta, lambda, &mf(a[0], a[1], a[2])));
    }
    best
}

#[test]
fn boundary_gap_matches_scan_and_bound() {
    let (beta, c) = (12.0, 50.0);
    let e = (-beta as f64).exp();
    let gap = boundary_gap(beta, 0.0, c).unwrap();
    assert!(gap >= 0.1 * c * c.ln() * e, "gap {gap}");

    let inf = branches(beta, 0.0).iter().map(|b| b.phi).fold(f64::INFINITY, f64::min);
    let slices: Vec<f64> = (0..3).map(|k| oracle_slice(beta, 0.0, k, c * e)).collect();
    assert_eq!(slices[0], slices[2]);
    let oracle = slices.iter().cloned().fold(f64::INFINITY, f64::min) - inf;
    assert!(gap <= oracle + 1e-15);
    assert!((gap - oracle).abs() <= 1e-6 * oracle, "{gap} vs {oracle}");

    let wider = boundary_gap(beta, 0.0, 100.0).unwrap();
    assert!(wider > gap);
}

#[test]
fn boundary_gap_rejects_a_degenerate_slice() {
    assert!(matches!(boundary_gap(1.0, 0.0, 50.0), Err(Error::ParameterOutOfRange(_))));
}

#[test]
fn ising_reference_values() {
    assert!((ising_reference(0.0, 0.0, 0.5) + 2f64.ln()).abs() < 1e-15);
    assert_eq!(ising_reference(1.0, 0.3, 1.0), -0.3);
    assert!((ising_reference(2.0, 0.0, 0.25) - (0.375 + 0.25 * 0.25f64.ln() + 0.75 * 0.75f64.ln())).abs() < 1e-15);
}

#[test]
fn ising_unique_minimum_up_to_two() {
    for j in [0.0, 1.0, 1.9, 2.0] {
        let r = ising_properties_check(j, 0.0);
        assert_eq!(r.minima.len(), 1);
        assert!((r.minima[0] - 0.5).abs() < 1e-9);
        assert_eq!(r.i1, Some(true));
    }
}

#[test]
fn ising_two_minima_above_two() {
    let r = ising_properties_check(3.0, 0.0);
    assert_eq!(r.minima.len(), 2);
    let heavy = r.minima[1];
    assert!(3.0 * heavy > 1.0 && 1.0 > 3.0 * (1.0 - heavy));
    assert_eq!(r.i2, Some(true));
    // mirror pair
    assert!((r.minima[0] + r.minima[1] - 1.0).abs() < 1e-12);
}

#[test]
fn ising_minimum_in_a_field() {
    let r = ising_properties_check(3.0, 0.2);
    assert!(r.i3_global);
    let z = r.minima[1];
    let m = 2.0 * z - 1.0;
    assert!(3.0 * (1.0 - m * m) <= 1.0);
    // the metastable minimum against the field does not satisfy it
    let z = r.minima[0];
    let m = 2.0 * z - 1.0;
    assert!(3.0 * (1.0 - m * m) > 1.0);
    assert!(!r.i3);
}

#[test]
fn ising_bound_just_above_the_critical_coupling() {
    // J(1 - m^2) tends to 2 as J decreases to 2, so only the weaker form
    // J(1 - m^2) <= 2 holds at every local minimum.
    let r = ising_properties_check(2.1, 0.0);
    assert!(!r.i3 && r.i3_local);
}

/// Independent golden-section oracle for the Ising minima on a grid.
fn oracle_minima(j: f64, h: f64) -> Vec<f64> {
    let f = |z: f64| ising_reference(j, h, z);
    let n = 4000;
    let mut out = Vec::new();
    for i in 1..n {
        let z = i as f64 / n as f64;
        let step = 1.0 / n as f64;
        if f(z) < f(z - step) && f(z) <= f(z + step) {
            let (mut a, mut b) = (z - step, z + step);
            let g = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..100 {
                let c = b - g * (b - a);
                let d = a + g * (b - a);
                if f(c) < f(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            out.push(0.5 * (a + b));
        }
    }
    out
}

#[test]
fn ising_minima_match_grid_oracle() {
    for j in [0.5, 1.5, 2.5, 3.0, 4.0, 6.0] {
        for h in [-0.5, -0.1, 0.0, 0.05, 0.3, 1.0] {
            let r = ising_properties_check(j, h);
            let o = oracle_minima(j, h);
            assert_eq!(r.minima.len(), o.len(), "J {j} h {h}");
            for (a, b) in r.minima.iter().zip(&o) {
                assert!((a - b).abs() < 1e-6, "J {j} h {h}: {a} vs {b}");
            }
            assert!(r.i3_local);
            assert!(r.i3_global || j < 3.0, "J {j} h {h}");
        }
    }
}

proptest! {
    #[test]
    fn phi_is_mirror_symmetric(a in 0.0f64..1.0, b in 0.0f64..1.0, beta in 0.0f64..20.0, lambda in -1.0f64..1.0) {
        let x1 = a;
        let x0 = (1.0 - a) * b;
        let xm1 = 1.0 - x1 - x0;
        prop_assume!(xm1 >= 0.0);
        let x = mf(x1, x0, xm1);
        prop_assert_eq!(phi_bc(beta, lambda, &x), phi_bc(beta, lambda, &x.mirrored()));
    }

    #[test]
    fn branches_beat_nearby_points(beta in 6.0f64..14.0, frac in -2.0f64..2.0, dir in 0.0f64..6.283, r in 0.01f64..0.2) {
        let lambda = frac * (-beta).exp();
        for b in branches(beta, lambda) {
            let x = b.minimizer;
            let a = [x.x1, x.x0, x.xm1];
            let d = (0..3).max_by(|i, j| a[*i].total_cmp(&a[*j])).unwrap();
            let minor: Vec<usize> = (0..3).filter(|k| *k != d).collect();
            // relative perturbation of the two minor coordinates
            let mut p = a;
            p[minor[0]] *= 1.0 + r * dir.cos();
            p[minor[1]] *= 1.0 + r * dir.sin();
            p[d] = 1.0 - p[minor[0]] - p[minor[1]];
            let y = mf(p[0], p[1], p[2]);
            prop_assert!(phi_bc(beta, lambda, &y) >= b.phi);
        }
    }
}
