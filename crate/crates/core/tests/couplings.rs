use longrange_mf::couplings::{
    coupling_value, fourier, normalize, periodize, random_half_space_function, rp_quadratic_form, CouplingFamily,
    Interaction, NormalizedCoupling,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn nc(f: CouplingFamily) -> NormalizedCoupling {
    normalize(&f, 1e-12).unwrap()
}

/// Hurwitz zeta sum_{n>=0} (n + a)^{-s} by Euler-Maclaurin, written out
/// independently of the library.
fn hurwitz(s: f64, a: f64) -> f64 {
    let n = 40;
    let mut acc = 0.0;
    for k in 0..n {
        acc += (k as f64 + a).powf(-s);
    }
    let x = n as f64 + a;
    acc += x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    acc += s / 12.0 * x.powf(-s - 1.0);
    acc -= s * (s + 1.0) * (s + 2.0) / 720.0 * x.powf(-s - 3.0);
    acc += s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) / 30240.0 * x.powf(-s - 5.0);
    acc
}

#[test]
fn nearest_neighbor_normalization_is_one_over_bond_count() {
    for d in 1..=5 {
        let c = nc(CouplingFamily::nearest_neighbor(d).unwrap());
        assert!((c.norm_const - 1.0 / (2.0 * d as f64)).abs() < 1e-15);
    }
}

#[test]
fn yukawa_normalization_matches_geometric_series() {
    for mu in [0.1, 0.5, 1.0, 3.0] {
        let c = nc(CouplingFamily::yukawa(1, mu).unwrap());
        let closed = (1.0 - (-mu).exp()) / (2.0 * (-mu).exp());
        assert!((c.norm_const - closed).abs() < 1e-12 * closed);
        // truncated direct sum
        let direct: f64 = (1..20_000).map(|n| 2.0 * (-mu * n as f64).exp()).sum();
        assert!((c.norm_const * direct - 1.0).abs() < 1e-12);
    }
    // d = 3 against a brute-force box sum
    let c = nc(CouplingFamily::yukawa(3, 1.0).unwrap());
    let mut total = 0.0;
    for x in -40i64..=40 {
        for y in -40i64..=40 {
            for z in -40i64..=40 {
                total += coupling_value(&c, &[x, y, z]);
            }
        }
    }
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn power_law_normalization_brackets_with_integral_tails() {
    let s = 1.5;
    let c = nc(CouplingFamily::power_law(1, s).unwrap());
    let n = 100_000u64;
    let head: f64 = (1..=n).map(|k| (k as f64).powf(-s)).sum();
    // int_{N+1}^inf t^{-s} <= rest <= int_N^inf t^{-s}
    let lo = head + ((n + 1) as f64).powf(1.0 - s) / (s - 1.0);
    let hi = head + (n as f64).powf(1.0 - s) / (s - 1.0);
    let sum = 1.0 / (2.0 * c.norm_const);
    assert!(sum >= lo - 1e-12 && sum <= hi + 1e-12, "{lo} <= {sum} <= {hi}");
    assert!(c.tail_bound <= 1e-12);
}

#[test]
fn power_law_normalization_in_two_and_three_dimensions() {
    // shells of radius r hold 4r sites in d = 2 and 4r^2 + 2 in d = 3
    let c2 = nc(CouplingFamily::power_law(2, 3.5).unwrap());
    let zeta = |s: f64| hurwitz(s, 1.0);
    assert!((1.0 / c2.norm_const - 4.0 * zeta(2.5)).abs() < 1e-10);
    let c3 = nc(CouplingFamily::power_law(3, 4.0).unwrap());
    assert!((1.0 / c3.norm_const - (4.0 * zeta(2.0) + 2.0 * zeta(4.0))).abs() < 1e-10);
}

#[test]
fn coupling_values_follow_definitions() {
    let y = nc(CouplingFamily::yukawa(2, 1.0).unwrap());
    assert_eq!(coupling_value(&y, &[0, 0]), 0.0);
    assert!((coupling_value(&y, &[1, 1]) - y.norm_const * (-2.0f64).exp()).abs() < 1e-16);
    let n = nc(CouplingFamily::next_nearest(2, 1.0, 0.3).unwrap());
    assert!((coupling_value(&n, &[1, 1]) - n.norm_const * 0.3).abs() < 1e-16);
    assert!((coupling_value(&n, &[0, -1]) - n.norm_const).abs() < 1e-16);
    assert_eq!(coupling_value(&n, &[2, 0]), 0.0);
    let p = nc(CouplingFamily::power_law(1, 1.5).unwrap());
    assert!((coupling_value(&p, &[-4]) - p.norm_const / 8.0).abs() < 1e-16);
}

#[test]
fn mixture_is_normalized_as_a_whole() {
    let f = CouplingFamily::mixture(
        2,
        vec![(Interaction::Yukawa { mu: 1.0 }, 2.0), (Interaction::PowerLaw { s: 3.0 }, 0.5)],
    )
    .unwrap();
    let c = nc(f);
    let ty = (1.0 / (0.5f64).tanh()).powi(2) - 1.0;
    let tp = 4.0 * hurwitz(2.0, 1.0);
    assert!((c.norm_const - 1.0 / (2.0 * ty + 0.5 * tp)).abs() < 1e-12);
    assert!((fourier(&c, &[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
    // Fourier transform is the matching combination of the normalized parts
    let k = [0.7, -1.9];
    let jy = fourier(&nc(CouplingFamily::yukawa(2, 1.0).unwrap()), &k).unwrap();
    let jp = fourier(&nc(CouplingFamily::power_law(2, 3.0).unwrap()), &k).unwrap();
    let expect = (2.0 * ty * jy + 0.5 * tp * jp) / (2.0 * ty + 0.5 * tp);
    assert!((fourier(&c, &k).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn fourier_closed_forms() {
    let families = [
        CouplingFamily::nearest_neighbor(2).unwrap(),
        CouplingFamily::next_nearest(3, 1.0, -0.25).unwrap(),
        CouplingFamily::yukawa(3, 0.3).unwrap(),
        CouplingFamily::power_law(1, 1.2).unwrap(),
        CouplingFamily::power_law(2, 3.0).unwrap(),
        CouplingFamily::power_law(3, 4.5).unwrap(),
    ];
    for f in families {
        let d = f.dim;
        let c = nc(f);
        assert!((fourier(&c, &vec![0.0; d]).unwrap() - 1.0).abs() < 1e-10);
    }
    let nn = nc(CouplingFamily::nearest_neighbor(1).unwrap());
    for k in [0.1, 1.0, 2.5, PI] {
        assert!((fourier(&nn, &[k]).unwrap() - k.cos()).abs() < 1e-15);
    }
    let y = nc(CouplingFamily::yukawa(1, 1.0).unwrap());
    let alt: f64 = (1..200).map(|n| 2.0 * (-1f64).powi(n) * (-(n as f64)).exp()).sum::<f64>() * y.norm_const;
    assert!((fourier(&y, &[PI]).unwrap() - alt).abs() < 1e-14);
    assert!((fourier(&y, &[PI]).unwrap() + 0.5f64.tanh()).abs() < 1e-14);
}

#[test]
fn power_law_fourier_at_the_zone_corner() {
    // at k = (pi,..,pi) the phase is (-1)^{|x|_1}, so J-hat is a ratio of
    // alternating and plain shell sums
    let eta = |s: f64| hurwitz(s, 1.0) - 2.0 * 2f64.powf(-s) * hurwitz(s, 1.0);
    for s in [1.1, 1.5, 1.9] {
        let c = nc(CouplingFamily::power_law(1, s).unwrap());
        let expect = -(1.0 - 2f64.powf(1.0 - s));
        assert!((fourier(&c, &[PI]).unwrap() - expect).abs() < 1e-11, "s = {s}");
    }
    for s in [2.5, 3.0, 3.9] {
        let c = nc(CouplingFamily::power_law(2, s).unwrap());
        let expect = -eta(s - 1.0) / hurwitz(s - 1.0, 1.0);
        assert!((fourier(&c, &[PI, PI]).unwrap() - expect).abs() < 1e-11, "s = {s}");
    }
    let s = 4.2;
    let c = nc(CouplingFamily::power_law(3, s).unwrap());
    let expect = -(4.0 * eta(s - 2.0) + 2.0 * eta(s)) / (4.0 * hurwitz(s - 2.0, 1.0) + 2.0 * hurwitz(s, 1.0));
    assert!((fourier(&c, &[PI, PI, PI]).unwrap() - expect).abs() < 1e-11);
}

#[test]
fn power_law_fourier_matches_direct_lattice_sum() {
    let s = 3.9;
    let c = nc(CouplingFamily::power_law(2, s).unwrap());
    let k = [0.9, -2.1];
    let r = 1500i64;
    let mut direct = 0.0;
    for x in -r..=r {
        for y in -r..=r {
            let n = x.abs() + y.abs();
            if n == 0 || n > r {
                continue;
            }
            direct += (n as f64).powf(-s) * (k[0] * x as f64 + k[1] * y as f64).cos();
        }
    }
    direct *= c.norm_const;
    // the cut-off shells contribute at most 4 sum_{n > r} n^{1-s} ~ 4 r^{2-s}/(s-2)
    let tail = 4.0 * (r as f64).powf(2.0 - s) / (s - 2.0) * c.norm_const;
    assert!((fourier(&c, &k).unwrap() - direct).abs() < tail + 1e-10);
}

#[test]
fn fourier_is_below_one_away_from_origin() {
    let families = [
        CouplingFamily::next_nearest(2, 1.0, 0.5).unwrap(),
        CouplingFamily::next_nearest(2, 1.0, -0.25).unwrap(),
        CouplingFamily::yukawa(2, 2.0).unwrap(),
        CouplingFamily::power_law(2, 2.2).unwrap(),
    ];
    for f in families {
        let c = nc(f);
        let n = 24;
        for i in 0..n {
            for j in 0..n {
                if i == n / 2 && j == n / 2 {
                    continue;
                }
                let k = [-PI + 2.0 * PI * i as f64 / n as f64, -PI + 2.0 * PI * j as f64 / n as f64];
                assert!(fourier(&c, &k).unwrap() < 1.0);
                assert!(c.one_minus_fourier(&k).unwrap() > 0.0);
            }
        }
    }
}

#[test]
fn parseval_identity() {
    use longrange_mf::infrared::{fourier_l2, QuadratureSpec};
    let spec = QuadratureSpec::default().with_grid(128);
    let families = [
        CouplingFamily::next_nearest(2, 1.0, 0.3).unwrap(),
        CouplingFamily::yukawa(1, 0.5).unwrap(),
        CouplingFamily::yukawa(2, 1.0).unwrap(),
        CouplingFamily::power_law(1, 1.5).unwrap(),
        CouplingFamily::power_law(2, 3.0).unwrap(),
    ];
    for f in families {
        let c = nc(f.clone());
        let (v, err) = fourier_l2(&c, &spec).unwrap();
        let l2 = c.l2_norm_sq().unwrap();
        // the quadrature's own error estimate must cover the discrepancy
        assert!((v - l2).abs() <= err.max(1e-9), "{f:?}: {v} vs {l2} (err {err})");
        assert!(err < 1e-5);
    }
}

#[test]
fn periodized_nearest_neighbor_row() {
    let k = periodize(&nc(CouplingFamily::nearest_neighbor(1).unwrap()), 8, 1e-12).unwrap();
    let nonzero: Vec<(usize, f64)> = k.row.iter().cloned().enumerate().filter(|(_, v)| *v != 0.0).collect();
    assert_eq!(nonzero, vec![(1, 0.5), (7, 0.5)]);
}

#[test]
fn periodized_yukawa_row_matches_two_geometric_series() {
    let c = nc(CouplingFamily::yukawa(1, 1.0).unwrap());
    let k = periodize(&c, 8, 1e-12).unwrap();
    let direct: f64 = (-50i64..=50).map(|z| (-((1 + 8 * z).abs() as f64)).exp()).sum::<f64>() * c.norm_const;
    assert!((k.row[1] - direct).abs() < 1e-15);
    assert!((k.row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn periodized_power_law_row_matches_hurwitz_sums() {
    let s = 1.5;
    let l = 16usize;
    let c = nc(CouplingFamily::power_law(1, s).unwrap());
    let k = periodize(&c, l, 1e-10).unwrap();
    let lf = l as f64;
    for y in 1..l {
        let a = y as f64 / lf;
        // sum_z |y + L z|^{-s} = L^{-s} [zeta(s, y/L) + zeta(s, 1 - y/L)]
        let expect = c.norm_const * lf.powf(-s) * (hurwitz(s, a) + hurwitz(s, 1.0 - a));
        assert!((k.row[y] - expect).abs() < 1e-11, "y = {y}: {} vs {expect}", k.row[y]);
    }
    // images of the origin itself
    let self_term = 2.0 * c.norm_const * lf.powf(-s) * hurwitz(s, 1.0);
    assert!((k.row[0] - self_term).abs() < 1e-11);
    assert!((k.row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
}

#[test]
fn extreme_negative_next_nearest_touches_one_on_the_axes() {
    let c = nc(CouplingFamily::next_nearest(2, 1.0, -0.5).unwrap());
    assert!((fourier(&c, &[0.0, 1.3]).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn periodized_rows_sum_to_one_and_match_fourier() {
    let cases = [
        (CouplingFamily::next_nearest(2, 1.0, -0.5).unwrap(), 6),
        (CouplingFamily::yukawa(2, 0.5).unwrap(), 8),
        (CouplingFamily::power_law(2, 3.0).unwrap(), 8),
        (CouplingFamily::power_law(3, 4.0).unwrap(), 4),
        (CouplingFamily::power_law(1, 1.2).unwrap(), 256),
        (
            CouplingFamily::mixture(1, vec![(Interaction::PowerLaw { s: 1.5 }, 1.0), (Interaction::Yukawa { mu: 0.2 }, 3.0)])
                .unwrap(),
            32,
        ),
    ];
    for (f, l) in cases {
        let c = nc(f.clone());
        let k = periodize(&c, l, 1e-10).unwrap();
        assert!((k.row.iter().sum::<f64>() - 1.0).abs() < 1e-10, "{f:?}");
        for i in 0..k.sites() {
            let exact = fourier(&c, &k.wave_vector(i)).unwrap();
            assert!((exact - k.fourier_row[i]).abs() < 1e-10);
            // torus reflections
            let x = k.coords(i);
            let neg: Vec<usize> = x.iter().map(|v| (l - v) % l).collect();
            assert!((k.row[i] - k.row[k.index(&neg)]).abs() < 1e-15);
        }
    }
}

#[test]
fn kernel_row_dump_round_trips() {
    let k = periodize(&nc(CouplingFamily::power_law(1, 1.5).unwrap()), 32, 1e-10).unwrap();
    let mut buf = Vec::new();
    k.dump_row(&mut buf).unwrap();
    assert_eq!(buf.len(), 32 * 8);
    assert_eq!(&buf[8..16], &k.row[1].to_le_bytes());
    let back = longrange_mf::couplings::TorusKernel::load_row(32, 1, &buf[..]).unwrap();
    assert_eq!(back.row, k.row);
}

#[test]
fn reflection_positivity_examples() {
    let y = nc(CouplingFamily::yukawa(2, 0.7).unwrap());
    assert_eq!(rp_quadratic_form(&y, &vec![], 0).unwrap(), 0.0);
    // single boundary site: the bond to its mirror image
    let single = vec![(vec![1i64, 0], 1.0)];
    let v = rp_quadratic_form(&y, &single, 0).unwrap();
    assert!((v - coupling_value(&y, &[1, 0])).abs() < 1e-16 && v > 0.0);
    // sites outside the half-space are rejected
    assert!(rp_quadratic_form(&y, &vec![(vec![0, 0], 1.0)], 0).is_err());
}

#[test]
fn reflection_positivity_at_extreme_next_nearest_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for d in [2usize, 3] {
        let kappa = -1.0 / (2.0 * (d as f64 - 1.0));
        let c = nc(CouplingFamily::next_nearest(d, 1.0, kappa).unwrap());
        for dir in 0..d {
            for _ in 0..100 {
                let f = random_half_space_function(&mut rng, d, dir, 1);
                assert!(rp_quadratic_form(&c, &f, dir).unwrap() >= -1e-10);
            }
        }
        // a checkerboard on the boundary layer saturates the bound
        let mut f = Vec::new();
        for a in -2i64..=2 {
            for b in -2i64..=2 {
                let mut x = vec![1i64; d];
                x[1] = a;
                if d == 3 {
                    x[2] = b;
                } else if b != 0 {
                    continue;
                }
                let sign = if (a + b).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                f.push((x, sign));
            }
        }
        assert!(rp_quadratic_form(&c, &f, 0).unwrap() >= -1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fourier_is_even(k1 in -PI..PI, k2 in -PI..PI, mu in 0.1f64..3.0, s in 2.1f64..3.9) {
        for f in [CouplingFamily::yukawa(2, mu).unwrap(), CouplingFamily::power_law(2, s).unwrap(),
                  CouplingFamily::next_nearest(2, 1.0, 0.2).unwrap()] {
            let c = nc(f);
            let a = fourier(&c, &[k1, k2]).unwrap();
            let b = fourier(&c, &[-k1, -k2]).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
            // coordinate reflections too
            let r = fourier(&c, &[-k1, k2]).unwrap();
            prop_assert!((a - r).abs() <= 1e-12);
        }
    }

    #[test]
    fn rp_form_is_nonnegative_for_yukawa(seed in 0u64..1000, mu in 0.05f64..3.0) {
        let c = nc(CouplingFamily::yukawa(2, mu).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for dir in 0..2 {
            let f = random_half_space_function(&mut rng, 2, dir, 2);
            prop_assert!(rp_quadratic_form(&c, &f, dir).unwrap() >= -1e-10);
        }
    }

    #[test]
    fn couplings_are_symmetric(x in -6i64..6, y in -6i64..6, s in 2.1f64..3.9) {
        let c = nc(CouplingFamily::power_law(2, s).unwrap());
        let v = coupling_value(&c, &[x, y]);
        prop_assert_eq!(v, coupling_value(&c, &[-x, -y]));
        prop_assert_eq!(v, coupling_value(&c, &[-x, y]));
        prop_assert_eq!(v, coupling_value(&c, &[y, x]));
    }
}
