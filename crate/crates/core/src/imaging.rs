//! B-mode formation and image-quality metrics.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{arg_err, dim_err, Error, Result};
use crate::model::{RealMatrix, RfFrame};

pub const DEFAULT_DYNAMIC_RANGE_DB: f64 = 50.0;

/// 8-bit log-compressed envelope, stored row-major (`rows` = fast time).
#[derive(Debug, Clone, PartialEq)]
pub struct BmodeImage {
    pub pixels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
    pub dynamic_range_db: f64,
    pub normalization_max: f64,
}

impl BmodeImage {
    pub fn pixel(&self, r: usize, c: usize) -> u8 {
        self.pixels[r * self.cols + c]
    }

    /// Binary PGM (P5, maxval 255), width = channels, height = samples.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.cols, self.rows).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_pgm())?;
        Ok(())
    }
}

/// Rectangle `(row0, col0, rows, cols)` in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.rows * self.cols
    }

    fn overlaps(&self, o: &Rect) -> bool {
        self.row0 < o.row0 + o.rows
            && o.row0 < self.row0 + self.rows
            && self.col0 < o.col0 + o.cols
            && o.col0 < self.col0 + self.cols
    }
}

impl std::str::FromStr for Rect {
    type Err = Error;

    /// `row0,col0,rows,cols`.
    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<usize> = s
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| arg_err(format!("region must be row0,col0,rows,cols, got {s:?}")))?;
        match v[..] {
            [row0, col0, rows, cols] => Ok(Rect { row0, col0, rows, cols }),
            _ => Err(arg_err(format!("region must be row0,col0,rows,cols, got {s:?}"))),
        }
    }
}

impl std::fmt::Display for Rect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{}", self.row0, self.col0, self.rows, self.cols)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionSpec {
    pub target: Rect,
    pub background: Rect,
}

impl RegionSpec {
    pub fn new(target: Rect, background: Rect) -> Result<Self> {
        if target.area() < 16 || background.area() < 16 {
            return Err(arg_err("each CNR region needs at least 16 pixels"));
        }
        if target.overlaps(&background) {
            return Err(arg_err("CNR regions overlap"));
        }
        Ok(Self { target, background })
    }

    pub fn check_bounds(&self, rows: usize, cols: usize) -> Result<()> {
        for r in [self.target, self.background] {
            if r.row0 + r.rows > rows || r.col0 + r.cols > cols {
                return Err(dim_err(format!("region {r} exceeds {rows}x{cols} image")));
            }
        }
        Ok(())
    }
}

/// Magnitude of the analytic signal of each column (one-sided spectrum
/// doubling).
pub fn envelope(frame: &RfFrame) -> Result<RealMatrix> {
    let x = frame.data();
    let m = x.nrows();
    if m < 4 {
        return Err(dim_err(format!("envelope needs at least 4 samples, got {m}")));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut out = RealMatrix::zeros(m, x.ncols());
    out.as_mut_slice()
        .par_chunks_mut(m)
        .zip(x.as_slice().par_chunks(m))
        .for_each(|(env, col)| {
            let mut buf: Vec<Complex64> = col.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fwd.process(&mut buf);
            for (j, z) in buf.iter_mut().enumerate() {
                let gain = if j == 0 || 2 * j == m {
                    1.0
                } else if 2 * j < m {
                    2.0
                } else {
                    0.0
                };
                *z *= gain;
            }
            inv.process(&mut buf);
            let scale = 1.0 / m as f64;
            for (e, z) in env.iter_mut().zip(&buf) {
                *e = z.norm() * scale;
            }
        });
    Ok(out)
}

/// `round(255 clamp(1 + 20 log10(env / max) / DR, 0, 1))`.
pub fn bmode(env: &RealMatrix, dynamic_range_db: f64) -> Result<BmodeImage> {
    if !(dynamic_range_db > 0.0 && dynamic_range_db.is_finite()) {
        return Err(arg_err(format!("dynamic range must be > 0 dB, got {dynamic_range_db}")));
    }
    if env.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(arg_err("envelope must be finite and non-negative"));
    }
    let max = env.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::ZeroEnvelope);
    }
    let (rows, cols) = env.shape();
    let mut pixels = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let db = 20.0 * (env[(r, c)] / max).log10();
            let level = (1.0 + db / dynamic_range_db).clamp(0.0, 1.0);
            pixels.push((255.0 * level).round() as u8);
        }
    }
    Ok(BmodeImage { pixels, rows, cols, dynamic_range_db, normalization_max: max })
}

fn region_stats(img: &BmodeImage, r: &Rect) -> (f64, f64) {
    let n = r.area() as f64;
    let values = (r.row0..r.row0 + r.rows)
        .flat_map(|row| (r.col0..r.col0 + r.cols).map(move |col| (row, col)))
        .map(|(row, col)| f64::from(img.pixel(row, col)));
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// `20 log10(|mu_t - mu_b| / sqrt(var_t + var_b))` over 8-bit pixel values,
/// with population variances.
pub fn cnr(img: &BmodeImage, regions: &RegionSpec) -> Result<f64> {
    regions.check_bounds(img.rows, img.cols)?;
    let (mt, vt) = region_stats(img, &regions.target);
    let (mb, vb) = region_stats(img, &regions.background);
    let denom = (vt + vb).sqrt();
    if denom == 0.0 {
        return Err(Error::DegenerateCnr("both regions have zero variance".into()));
    }
    let contrast = (mt - mb).abs();
    if contrast == 0.0 {
        return Err(Error::DegenerateCnr("regions have identical means".into()));
    }
    Ok(20.0 * (contrast / denom).log10())
}

/// `||xhat - xref||_F / ||xref||_F`.
pub fn relative_error(xhat: &RfFrame, xref: &RfFrame) -> Result<f64> {
    relative_error_matrix(xhat.data(), xref.data())
}

pub fn relative_error_matrix(xhat: &RealMatrix, xref: &RealMatrix) -> Result<f64> {
    if xhat.shape() != xref.shape() {
        return Err(dim_err(format!(
            "frames differ in shape: {:?} vs {:?}",
            xhat.shape(),
            xref.shape()
        )));
    }
    let norm = xref.norm();
    if norm == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((xhat - xref).norm() / norm)
}
