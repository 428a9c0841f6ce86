use rand::Rng;

use super::NormalizedCoupling;
use crate::error::{Error, Result};

/// A finitely supported function on the half-space {x : x[dir] >= 1}.
pub type HalfSpaceFunction = Vec<(Vec<i64>, f64)>;

/// Reflection-positivity form across the plane between x[dir] = 0 and
/// x[dir] = 1:
///
///   sum_{x in H, y not in H} J_{x,y} f(x) f(theta y),
///
/// with theta flipping x[dir] to 1 - x[dir]. `dir` is zero-based.
pub fn rp_quadratic_form(nc: &NormalizedCoupling, f: &HalfSpaceFunction, dir: usize) -> Result<f64> {
    let d = nc.dim();
    if dir >= d {
        return Err(Error::ParameterOutOfRange(format!("direction {dir} out of range for d = {d}")));
    }
    for (x, _) in f {
        if x.len() != d {
            return Err(Error::DimensionMismatch(format!("site {x:?} has wrong dimension")));
        }
        if x[dir] < 1 {
            return Err(Error::ParameterOutOfRange(format!("site {x:?} is not in the half-space")));
        }
    }
    let mut acc = 0.0;
    let mut diff = vec![0i64; d];
    for (x, fx) in f {
        if *fx == 0.0 {
            continue;
        }
        for (yr, fy) in f {
            // y = theta(yr) lies outside the half-space
            for j in 0..d {
                diff[j] = if j == dir { x[j] - (1 - yr[j]) } else { x[j] - yr[j] };
            }
            acc += nc.value(&diff) * fx * fy;
        }
    }
    Ok(acc)
}

/// Random test function on the box of half-width `width` inside the
/// half-space: each site is kept with probability 0.7 and given a value
/// uniform in (-1, 1).
pub fn random_half_space_function<R: Rng>(rng: &mut R, d: usize, dir: usize, width: i64) -> HalfSpaceFunction {
    let mut f = Vec::new();
    let side = 2 * width + 1;
    let sites = side.pow(d as u32 - 1) * width;
    for idx in 0..sites {
        let mut r = idx;
        let mut x = vec![0i64; d];
        for (j, xj) in x.iter_mut().enumerate() {
            if j != dir {
                *xj = r % side - width;
                r /= side;
            }
        }
        x[dir] = 1 + r % width;
        if rng.gen_bool(0.7) {
            f.push((x, rng.gen_range(-1.0..1.0)));
        }
    }
    f
}
