use super::{powerlaw, Interaction, NormalizedCoupling};
use crate::error::{Error, Result};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// A coupling wrapped onto the torus (Z / L Z)^d.
///
/// `row[i]` is J^{(L)}_{0,y} for the displacement `y` with row-major index
/// `i` (last coordinate fastest); `fourier_row` is its cosine transform on
/// the reciprocal torus, indexed the same way by `k = 2 pi n / L`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TorusKernel {
    pub l: usize,
    pub d: usize,
    pub row: Vec<f64>,
    pub fourier_row: Vec<f64>,
}

impl TorusKernel {
    /// Build a kernel from an explicit row. The row must be symmetric under
    /// y -> -y. Its origin entry holds the coupling of a site to its own
    /// periodic images, which is non-zero for any interaction of range >= L.
    pub fn from_row(l: usize, d: usize, row: Vec<f64>) -> Result<Self> {
        if l < 2 || l % 2 != 0 || d == 0 {
            return Err(Error::ParameterOutOfRange(format!("need even L >= 2 and d >= 1, got L={l} d={d}")));
        }
        let n = l.checked_pow(d as u32).ok_or_else(|| Error::ParameterOutOfRange("L^d overflows".into()))?;
        if row.len() != n {
            return Err(Error::DimensionMismatch(format!("row has {} entries, expected {n}", row.len())));
        }
        if !(row[0] >= 0.0) {
            return Err(Error::ParameterOutOfRange("self-image coupling must be non-negative".into()));
        }
        let fourier_row = cosine_transform(l, d, &row);
        Ok(TorusKernel { l, d, row, fourier_row })
    }

    pub fn sites(&self) -> usize {
        self.row.len()
    }

    /// Coordinates of a row-major index.
    pub fn coords(&self, mut i: usize) -> Vec<usize> {
        let mut c = vec![0; self.d];
        for j in (0..self.d).rev() {
            c[j] = i % self.l;
            i /= self.l;
        }
        c
    }

    pub fn index(&self, c: &[usize]) -> usize {
        c.iter().fold(0, |acc, v| acc * self.l + (v % self.l))
    }

    /// Row-major index of the displacement y - x.
    pub fn displacement(&self, x: usize, y: usize) -> usize {
        let l = self.l;
        let (mut x, mut y) = (x, y);
        let mut idx = 0;
        let mut stride = 1;
        for _ in 0..self.d {
            let dx = (y % l + l - x % l) % l;
            idx += dx * stride;
            stride *= l;
            x /= l;
            y /= l;
        }
        idx
    }

    /// J^{(L)}_{x,y}.
    pub fn coupling(&self, x: usize, y: usize) -> f64 {
        self.row[self.displacement(x, y)]
    }

    /// Wave vector of a reciprocal-torus index.
    pub fn wave_vector(&self, i: usize) -> Vec<f64> {
        let step = 2.0 * std::f64::consts::PI / self.l as f64;
        self.coords(i)
            .into_iter()
            .map(|n| {
                let n = if n > self.l / 2 { n as f64 - self.l as f64 } else { n as f64 };
                step * n
            })
            .collect()
    }

    /// Finite-torus infrared integral (1/|T|) sum_{k != 0} J^2 / (1 - J).
    pub fn torus_integral(&self) -> f64 {
        let n = self.sites() as f64;
        self.fourier_row
            .iter()
            .skip(1)
            .map(|j| j * j / (1.0 - j))
            .sum::<f64>()
            / n
    }

    /// Write the row as little-endian f64 values in row-major order.
    pub fn dump_row<W: Write>(&self, mut w: W) -> Result<()> {
        for v in &self.row {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn dump_row_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.dump_row(std::io::BufWriter::new(f))
    }

    /// Read a row written by [`TorusKernel::dump_row`].
    pub fn load_row<R: Read>(l: usize, d: usize, mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() % 8 != 0 {
            return Err(Error::DimensionMismatch("row file length is not a multiple of 8".into()));
        }
        let row = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_row(l, d, row)
    }

    pub fn load_row_file(l: usize, d: usize, path: &Path) -> Result<Self> {
        Self::load_row(l, d, std::fs::File::open(path)?)
    }
}

/// Real part of the d-dimensional DFT of a symmetric table.
fn cosine_transform(l: usize, d: usize, row: &[f64]) -> Vec<f64> {
    let mut data: Vec<Complex<f64>> = row.iter().map(|v| Complex::new(*v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(l);
    let n = row.len();
    let mut line = vec![Complex::new(0.0, 0.0); l];
    let mut stride = 1;
    for _ in 0..d {
        let block = stride * l;
        for start in 0..n {
            // start must be the first element of a line along this axis
            if (start / stride) % l != 0 {
                continue;
            }
            for (j, slot) in line.iter_mut().enumerate() {
                *slot = data[start + j * stride];
            }
            fft.process(&mut line);
            for (j, v) in line.iter().enumerate() {
                data[start + j * stride] = *v;
            }
        }
        stride = block;
    }
    data.into_iter().map(|c| c.re).collect()
}

/// Wrap a coupling onto the torus of side `l`.
///
/// The wrapped row is computed in closed form for nearest-neighbour and
/// Yukawa families and by a mu-integral of the Yukawa closed form for power
/// laws. The cosine transform of the row is then compared against J-hat on
/// the reciprocal torus.
pub fn periodize(nc: &NormalizedCoupling, l: usize, tol: f64) -> Result<TorusKernel> {
    let d = nc.dim();
    if l < 4 || l % 2 != 0 {
        return Err(Error::ParameterOutOfRange(format!("need even L >= 4, got {l}")));
    }
    let n = l
        .checked_pow(d as u32)
        .filter(|n| *n <= 1 << 24)
        .ok_or_else(|| Error::ParameterOutOfRange(format!("L^d too large for L={l}, d={d}")))?;
    let mut row = vec![0.0; n];
    let mut err = 0.0f64;
    let probe = TorusKernel { l, d, row: Vec::new(), fourier_row: Vec::new() };
    let shares: Vec<(Interaction, f64)> = match &nc.family.interaction {
        Interaction::Mixture(c) => super::component_shares(c, d),
        other => vec![(other.clone(), 1.0)],
    };
    for (int, share) in &shares {
        match *int {
            Interaction::NearestNextNearest { .. } => {
                let norm = 1.0 / super::raw_total(int, d)?.0;
                super::for_each_in_box(d, 1, |x| {
                    let v = super::raw_value(int, x);
                    if v != 0.0 {
                        let c: Vec<usize> = x.iter().map(|xi| (xi + l as i64) as usize % l).collect();
                        row[probe.index(&c)] += share * norm * v;
                    }
                });
            }
            Interaction::Yukawa { mu } => {
                let norm = 1.0 / super::raw_total(int, d)?.0;
                for (i, slot) in row.iter_mut().enumerate() {
                    let c = probe.coords(i);
                    let mut p: f64 = c.iter().map(|y| powerlaw::wrapped_exp(mu, *y, l)).product();
                    if i == 0 {
                        p -= 1.0;
                    }
                    *slot += share * norm * p;
                }
            }
            Interaction::PowerLaw { s } => {
                for (i, slot) in row.iter_mut().enumerate() {
                    let c = probe.coords(i);
                    let (v, e) = powerlaw::periodized_entry(s, d, l, &c)?;
                    *slot += share * v;
                    err += share * e;
                }
            }
            Interaction::Mixture(_) => {
                let sub = super::NormalizedCoupling {
                    family: super::CouplingFamily { interaction: int.clone(), dim: d },
                    norm_const: 1.0 / super::raw_total(int, d)?.0,
                    truncation_radius: nc.truncation_radius,
                    tail_bound: nc.tail_bound,
                };
                let k = periodize(&sub, l, tol)?;
                for (slot, v) in row.iter_mut().zip(&k.row) {
                    *slot += share * v;
                }
            }
        }
    }
    if err > tol {
        return Err(Error::TailTooHeavy(format!("periodization error estimate {err:e} exceeds {tol:e}")));
    }
    let kernel = TorusKernel::from_row(l, d, row)?;
    let mut worst = 0.0f64;
    for i in 0..n {
        let k = kernel.wave_vector(i);
        let exact = 1.0 - nc.one_minus_fourier(&k)?;
        worst = worst.max((exact - kernel.fourier_row[i]).abs());
    }
    if worst > tol.max(1e3 * f64::EPSILON) {
        return Err(Error::TailTooHeavy(format!(
            "torus transform differs from J-hat by {worst:e} (tolerance {tol:e})"
        )));
    }
    Ok(kernel)
}
