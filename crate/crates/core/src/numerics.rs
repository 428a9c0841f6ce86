//! Small numerical toolbox shared by the physics modules: Gauss-Legendre
//! rules, the Riemann zeta function, bracketing root finders and
//! golden-section minimization.

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            // Tricomi's initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Integrate `f` over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Nodes and weights mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, w * half))
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

// B_{2k} / (2k)! for k = 1..=8
const BERNOULLI_OVER_FACT: [f64; 8] = [
    1.0 / 6.0 / 2.0,
    -1.0 / 30.0 / 24.0,
    1.0 / 42.0 / 720.0,
    -1.0 / 30.0 / 40320.0,
    5.0 / 66.0 / 3628800.0,
    -691.0 / 2730.0 / 479001600.0,
    7.0 / 6.0 / 87178291200.0,
    -3617.0 / 510.0 / 20922789888000.0,
];

/// Riemann zeta for real s > 1 by Euler-Maclaurin summation.
///
/// Returns the value together with a bound on the truncation remainder
/// (the magnitude of the first omitted correction term).
pub fn zeta_with_bound(s: f64) -> Result<(f64, f64)> {
    if !(s > 1.0) || !s.is_finite() {
        return Err(Error::ParameterOutOfRange(format!("zeta needs s > 1, got {s}")));
    }
    let n = 24usize;
    let nf = n as f64;
    let mut head = 0.0;
    // sum small terms first
    for k in (1..n).rev() {
        head += (k as f64).powf(-s);
    }
    let mut tail = nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s);
    let mut rising = s; // s (s+1) ... (s+2k-2)
    let mut bound = 0.0;
    for (k, c) in BERNOULLI_OVER_FACT.iter().enumerate() {
        let term = c * rising * nf.powf(-s - 2.0 * k as f64 - 1.0);
        if k == BERNOULLI_OVER_FACT.len() - 1 {
            bound = term.abs();
        } else {
            tail += term;
        }
        rising *= (s + 2.0 * k as f64 + 1.0) * (s + 2.0 * k as f64 + 2.0);
    }
    Ok((head + tail, bound + 4.0 * f64::EPSILON * (head + tail)))
}

pub fn zeta(s: f64) -> Result<f64> {
    zeta_with_bound(s).map(|(v, _)| v)
}

/// Coefficients c_j with #{x in Z^d : |x|_1 = r} = sum_j c_j r^j for r >= 1.
pub fn l1_shell_polynomial(d: usize) -> Vec<f64> {
    let mut total = vec![0.0; d.max(1)];
    for k in 1..=d {
        // 2^k C(d,k) C(r-1,k-1)
        let mut poly = vec![1.0];
        for i in 1..k {
            // multiply by (r - i)
            let mut next = vec![0.0; poly.len() + 1];
            for (j, c) in poly.iter().enumerate() {
                next[j + 1] += c;
                next[j] -= c * i as f64;
            }
            poly = next;
        }
        let fact: f64 = (1..k).map(|i| i as f64).product();
        let scale = 2f64.powi(k as i32) * binomial(d, k) / fact;
        for (j, c) in poly.iter().enumerate() {
            total[j] += scale * c;
        }
    }
    total
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut r = 1.0;
    for i in 0..k {
        r *= (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// Bisection for a sign change of `f` on [a, b]. Stops when the bracket is
/// narrower than `tol` (absolute).
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = (a, b);
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return Err(Error::NoCrossing(format!(
            "f({a}) = {flo:e} and f({b}) = {fhi:e} have the same sign"
        )));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= tol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Golden-section minimization of a unimodal function on [a, b].
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (a, b);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..300 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Coarse scan on a uniform grid followed by golden-section refinement
/// around the best grid point.
pub fn scan_golden_min<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize, tol: f64) -> (f64, f64) {
    let n = n.max(3);
    let h = (b - a) / (n - 1) as f64;
    let mut best = (a, f(a));
    for i in 1..n {
        let x = a + h * i as f64;
        let v = f(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    let lo = (best.0 - h).max(a);
    let hi = (best.0 + h).min(b);
    let refined = golden_min(&mut f, lo, hi, tol);
    if refined.1 <= best.1 {
        refined
    } else {
        best
    }
}

/// Parse a grid given as `a:b:n` (inclusive, n points) or a comma list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Usage(format!("cannot parse grid '{text}'"));
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        if n == 1 {
            return Ok(vec![a]);
        }
        Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
    } else {
        text.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect()
    }
}
