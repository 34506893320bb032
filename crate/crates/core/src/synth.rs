//! Synthetic data: random low-rank joint-sparse spectra, a point-scatterer
//! phantom producing pre-beamformed channel data, and random sampling masks.

use std::sync::Arc;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::{parse_floats, KeyValues};
use crate::error::{arg_err, dim_err, Error, Result};
use crate::model::{
    check_band, ComplexMatrix, FourierSupport, RealMatrix, RfFrame, SamplingPattern,
    SamplingScheme, SpectralCoefficients,
};
use crate::operators::PartialFourierOp;

/// `D0 = L R` with `L` (k x rank) non-zero on `row_sparsity` rows chosen as
/// whole conjugate pairs and `R` (rank x n) real, so `Y D0` is real.
pub fn gen_lowrank_jointsparse(
    m: usize,
    n: usize,
    support: Arc<FourierSupport>,
    rank: usize,
    row_sparsity: usize,
    seed: u64,
) -> Result<(RfFrame, SpectralCoefficients)> {
    if support.m() != m {
        return Err(dim_err(format!("support is for length {}, not {m}", support.m())));
    }
    if n == 0 {
        return Err(dim_err("need at least one channel"));
    }
    let k = support.k();
    if row_sparsity > k {
        return Err(Error::Infeasible(format!("row sparsity {row_sparsity} exceeds k = {k}")));
    }
    if rank > row_sparsity.min(n) {
        return Err(Error::Infeasible(format!(
            "rank {rank} exceeds min(row sparsity {row_sparsity}, channels {n})"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = support.conjugate_pairs();
    pairs.shuffle(&mut rng);
    let mut chosen = Vec::new();
    let mut count = 0;
    for (q, p) in pairs {
        let size = if q == p { 1 } else { 2 };
        if count + size <= row_sparsity {
            chosen.push((q, p));
            count += size;
        }
    }
    if rank > 0 && count != row_sparsity {
        return Err(Error::Infeasible(format!(
            "row sparsity {row_sparsity} cannot be built from conjugate pairs of this support"
        )));
    }
    chosen.sort_unstable();

    let mut left = ComplexMatrix::zeros(k, rank);
    if rank > 0 {
        let half = std::f64::consts::FRAC_1_SQRT_2;
        for &(q, p) in &chosen {
            for c in 0..rank {
                let z = if q == p {
                    Complex64::new(rng.sample(StandardNormal), 0.0)
                } else {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(half * re, half * im)
                };
                left[(q, c)] = z;
                left[(p, c)] = z.conj();
            }
        }
    }
    let right = ComplexMatrix::from_fn(rank, n, |_, _| Complex64::new(rng.sample(StandardNormal), 0.0));
    let d0 = &left * &right;

    let coeffs = SpectralCoefficients::new(d0, support.clone())?;
    let op = PartialFourierOp::from_shared(support.clone());
    let x = op.synthesize(&coeffs)?.map(|z| z.re);
    let frame = RfFrame::new(x, support.fs(), support.fc())?;
    Ok((frame, coeffs))
}

/// Random observation set; `uniform-global` draws `round(sr m n)` entries
/// without replacement, `uniform-per-channel` draws `round(sr m)` per column.
pub fn gen_pattern(
    m: usize,
    n: usize,
    sr: f64,
    scheme: SamplingScheme,
    seed: u64,
) -> Result<SamplingPattern> {
    if !(sr > 0.0 && sr <= 1.0) {
        return Err(arg_err(format!("sampling rate must be in (0, 1], got {sr}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega: Vec<(usize, usize)> = match scheme {
        SamplingScheme::UniformGlobal => {
            let count = (sr * (m * n) as f64).round() as usize;
            rand::seq::index::sample(&mut rng, m * n, count)
                .into_iter()
                .map(|i| (i / n, i % n))
                .collect()
        }
        SamplingScheme::UniformPerChannel => {
            let per = (sr * m as f64).round() as usize;
            (0..n)
                .flat_map(|c| {
                    rand::seq::index::sample(&mut rng, m, per)
                        .into_iter()
                        .map(move |r| (r, c))
                        .collect::<Vec<_>>()
                })
                .collect()
        }
    };
    SamplingPattern::new(m, n, omega, seed, scheme)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub x_mm: f64,
    pub z_mm: f64,
    pub reflectivity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cyst {
    pub x_mm: f64,
    pub z_mm: f64,
    pub radius_mm: f64,
    /// 0 for anechoic.
    pub multiplier: f64,
}

impl Cyst {
    pub fn contains(&self, x_mm: f64, z_mm: f64) -> bool {
        let (dx, dz) = (x_mm - self.x_mm, z_mm - self.z_mm);
        dx * dx + dz * dz <= self.radius_mm * self.radius_mm
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    pub fc: f64,
    /// -6 dB bandwidth as a fraction of `fc`.
    pub fractional_bandwidth: f64,
    /// Total support of the truncated pulse, in cycles of `fc`.
    pub cycles: f64,
}

impl Pulse {
    /// Standard deviation of the Gaussian envelope in seconds.
    pub fn sigma_t(&self) -> f64 {
        let bandwidth = self.fractional_bandwidth * self.fc;
        (2.0 * std::f64::consts::LN_2).sqrt() / (std::f64::consts::PI * bandwidth)
    }

    pub fn half_duration(&self) -> f64 {
        0.5 * self.cycles / self.fc
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t.abs() > self.half_duration() {
            return 0.0;
        }
        let s = self.sigma_t();
        (-0.5 * t * t / (s * s)).exp() * (2.0 * std::f64::consts::PI * self.fc * t).cos()
    }
}

/// Scatterer phantom imaged by a linear array with a single plane-wave
/// transmit. Lateral coordinates are centred on the array; random scatterers
/// fill `[axial_start_mm, axial_start_mm + axial_mm]` in depth. Recording
/// starts at the round-trip time of `window_start_mm`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub lateral_mm: f64,
    pub axial_start_mm: f64,
    pub axial_mm: f64,
    pub window_start_mm: f64,
    pub scatterers: Vec<Scatterer>,
    /// Random background scatterers per mm^2.
    pub background_density: f64,
    pub cysts: Vec<Cyst>,
    pub speed_of_sound: f64,
    pub n_elements: usize,
    pub element_pitch_mm: f64,
    pub pulse: Pulse,
    pub seed: u64,
}

impl Default for PhantomSpec {
    /// A deep window seen through a small aperture, as in cardiac imaging: the
    /// channels are strongly correlated, which is what makes the channel data
    /// approximately low-rank. The lateral extent stands in for the
    /// insonified region.
    fn default() -> Self {
        Self {
            lateral_mm: 8.0,
            axial_start_mm: 88.0,
            axial_mm: 34.0,
            window_start_mm: 90.0,
            scatterers: Vec::new(),
            background_density: 10.0,
            cysts: vec![Cyst { x_mm: 0.0, z_mm: 106.0, radius_mm: 5.0, multiplier: 0.0 }],
            speed_of_sound: 1540.0,
            n_elements: 64,
            element_pitch_mm: 0.2,
            pulse: Pulse { fc: 3.5e6, fractional_bandwidth: 0.4, cycles: 10.0 },
            seed: 1,
        }
    }
}

/// False for NaN and infinities as well as negatives.
fn non_negative(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

fn floats_exact(key: &str, text: &str, count: usize) -> Result<Vec<f64>> {
    let v = parse_floats(text)?;
    if v.len() != count {
        return Err(Error::Config(format!("{key} expects {count} comma-separated numbers, got {text:?}")));
    }
    Ok(v)
}

impl PhantomSpec {
    /// Keys: `lateral_mm`, `axial_start_mm`, `axial_mm`, `window_start_mm`, `density`,
    /// `speed_of_sound`, `n_elements`, `pitch_mm`, `fc`, `bandwidth`,
    /// `cycles`, `seed`, repeatable `cyst = x,z,radius,multiplier` and
    /// `scatterer = x,z,reflectivity`. Missing keys keep their defaults;
    /// giving any `cyst` line replaces the default cyst list. `fs` and `m` are
    /// accepted and ignored here; they belong to the frame, not the phantom.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        const KNOWN: &[&str] = &[
            "lateral_mm", "axial_start_mm", "axial_mm", "window_start_mm", "density",
            "speed_of_sound", "n_elements", "pitch_mm", "fc", "bandwidth", "cycles", "seed",
            "cyst", "scatterer", "fs", "m",
        ];
        if let Some(k) = kv.keys().find(|k| !KNOWN.contains(k)) {
            return Err(Error::Config(format!("unknown phantom key {k:?}")));
        }
        let mut spec = Self::default();
        macro_rules! set {
            ($key:literal, $field:expr) => {
                if let Some(v) = kv.parse_value($key)? {
                    $field = v;
                }
            };
        }
        set!("lateral_mm", spec.lateral_mm);
        set!("axial_start_mm", spec.axial_start_mm);
        set!("axial_mm", spec.axial_mm);
        set!("window_start_mm", spec.window_start_mm);
        set!("density", spec.background_density);
        set!("speed_of_sound", spec.speed_of_sound);
        set!("n_elements", spec.n_elements);
        set!("pitch_mm", spec.element_pitch_mm);
        set!("fc", spec.pulse.fc);
        set!("bandwidth", spec.pulse.fractional_bandwidth);
        set!("cycles", spec.pulse.cycles);
        set!("seed", spec.seed);

        let cysts: Vec<&str> = kv.get_all("cyst").collect();
        if !cysts.is_empty() {
            spec.cysts = cysts
                .into_iter()
                .map(|c| {
                    let v = floats_exact("cyst", c, 4)?;
                    Ok(Cyst { x_mm: v[0], z_mm: v[1], radius_mm: v[2], multiplier: v[3] })
                })
                .collect::<Result<_>>()?;
        }
        spec.scatterers = kv
            .get_all("scatterer")
            .map(|s| {
                let v = floats_exact("scatterer", s, 3)?;
                Ok(Scatterer { x_mm: v[0], z_mm: v[1], reflectivity: v[2] })
            })
            .collect::<Result<_>>()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lateral_mm", self.lateral_mm),
            ("axial_mm", self.axial_mm),
            ("speed_of_sound", self.speed_of_sound),
            ("pitch_mm", self.element_pitch_mm),
            ("fc", self.pulse.fc),
            ("bandwidth", self.pulse.fractional_bandwidth),
            ("cycles", self.pulse.cycles),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(arg_err(format!("{name} must be positive, got {v}")));
        }
        if ![self.axial_start_mm, self.window_start_mm, self.background_density]
            .iter()
            .all(|&v| non_negative(v))
        {
            return Err(arg_err(
                "axial_start_mm, window_start_mm and density must be non-negative",
            ));
        }
        if self.n_elements == 0 {
            return Err(arg_err("n_elements must be positive"));
        }
        for c in &self.cysts {
            if !(c.radius_mm.is_finite() && c.radius_mm > 0.0 && non_negative(c.multiplier)) {
                return Err(arg_err("cyst radius must be positive and multiplier non-negative"));
            }
        }
        if self
            .scatterers
            .iter()
            .any(|s| !(non_negative(s.z_mm) && s.reflectivity.is_finite() && s.x_mm.is_finite()))
        {
            return Err(arg_err("scatterers need finite coordinates and non-negative depth"));
        }
        Ok(())
    }

    pub fn element_x_mm(&self, e: usize) -> f64 {
        (e as f64 - 0.5 * (self.n_elements as f64 - 1.0)) * self.element_pitch_mm
    }

    /// Explicit scatterers followed by the random background, each background
    /// amplitude scaled by the multiplier of every cyst containing it.
    pub fn realize_scatterers(&self) -> Vec<Scatterer> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let area = self.lateral_mm * self.axial_mm;
        let count = (self.background_density * area).round() as usize;
        let mut out = self.scatterers.clone();
        out.reserve(count);
        for _ in 0..count {
            let x_mm = (rng.random::<f64>() - 0.5) * self.lateral_mm;
            let z_mm = self.axial_start_mm + rng.random::<f64>() * self.axial_mm;
            let amp: f64 = rng.sample(StandardNormal);
            let gain: f64 = self
                .cysts
                .iter()
                .filter(|c| c.contains(x_mm, z_mm))
                .map(|c| c.multiplier)
                .product();
            out.push(Scatterer { x_mm, z_mm, reflectivity: amp * gain });
        }
        out
    }
}

/// Channel `e` is the sum over scatterers of `reflectivity * pulse(t - tau)`
/// with `tau = (z + |element - scatterer|) / c`.
pub fn gen_phantom_rf(spec: &PhantomSpec, fs: f64, m: usize) -> Result<RfFrame> {
    spec.validate()?;
    check_band(spec.pulse.fc, fs)?;
    if m < 2 {
        return Err(dim_err("need at least two samples"));
    }
    let scatterers = spec.realize_scatterers();
    let c_mm_per_s = spec.speed_of_sound * 1e3;
    let half = spec.pulse.half_duration();
    let t0 = 2.0 * spec.window_start_mm / c_mm_per_s;
    let n = spec.n_elements;

    let mut data = RealMatrix::zeros(m, n);
    data.as_mut_slice()
        .par_chunks_mut(m)
        .enumerate()
        .for_each(|(e, channel)| {
            let xe = spec.element_x_mm(e);
            for s in &scatterers {
                if s.reflectivity == 0.0 {
                    continue;
                }
                let dx = s.x_mm - xe;
                let tau = (s.z_mm + (dx * dx + s.z_mm * s.z_mm).sqrt()) / c_mm_per_s - t0;
                let first = ((tau - half) * fs).ceil().max(0.0) as usize;
                let last = ((tau + half) * fs).floor();
                if last < 0.0 {
                    continue;
                }
                let last = (last as usize).min(m - 1);
                for (i, v) in channel.iter_mut().enumerate().take(last + 1).skip(first) {
                    *v += s.reflectivity * spec.pulse.eval(i as f64 / fs - tau);
                }
            }
        });
    RfFrame::new(data, fs, spec.pulse.fc)
}
