//! Domain types shared by the operators, the solver and the CLI.
//!
//! Everything here is an immutable value after construction. Constructors
//! validate their invariants and return [`Error`] rather than panicking.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{arg_err, dim_err, Error, Result};

pub type RealMatrix = DMatrix<f64>;
pub type ComplexMatrix = DMatrix<Complex64>;

/// Pre-beamformed RF samples: fast-time rows by receive-channel columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RfFrame {
    data: RealMatrix,
    fs: f64,
    fc: f64,
}

impl RfFrame {
    pub fn new(data: RealMatrix, fs: f64, fc: f64) -> Result<Self> {
        if data.nrows() < 2 || data.ncols() < 1 {
            return Err(dim_err(format!(
                "RF frame must be at least 2x1, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        check_band(fc, fs)?;
        check_finite_real(&data)?;
        Ok(Self { data, fs, fc })
    }

    pub fn data(&self) -> &RealMatrix {
        &self.data
    }

    pub fn into_data(self) -> RealMatrix {
        self.data
    }

    pub fn samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn channels(&self) -> usize {
        self.data.ncols()
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn fc(&self) -> f64 {
        self.fc
    }
}

/// The RF band [fc/2, 3fc/2] has to sit below Nyquist.
pub(crate) fn check_band(fc: f64, fs: f64) -> Result<()> {
    if !(fc.is_finite() && fs.is_finite()) || fc <= 0.0 || fs <= 0.0 {
        return Err(arg_err(format!("fc and fs must be positive, got fc={fc}, fs={fs}")));
    }
    if 1.5 * fc > 0.5 * fs {
        return Err(arg_err(format!(
            "band edge 3fc/2 = {} Hz exceeds Nyquist fs/2 = {} Hz",
            1.5 * fc,
            0.5 * fs
        )));
    }
    Ok(())
}

pub(crate) fn check_finite_real(m: &RealMatrix) -> Result<()> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if !m[(r, c)].is_finite() {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

pub(crate) fn check_finite_complex(m: &ComplexMatrix) -> Result<()> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let z = m[(r, c)];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

/// In-band DFT bins of a length-`m` signal.
///
/// Bins are stored sorted. The set is always closed under `j -> (m - j) % m`
/// so that real signals have a representation.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSupport {
    m: usize,
    bins: Vec<usize>,
    fc: f64,
    fs: f64,
}

impl FourierSupport {
    /// All bins whose signed frequency lies in [fc/2, 3fc/2] in magnitude,
    /// boundaries included.
    pub fn from_band(m: usize, fc: f64, fs: f64) -> Result<Self> {
        check_band(fc, fs)?;
        if m < 2 {
            return Err(dim_err(format!("signal length must be >= 2, got {m}")));
        }
        let bins: Vec<usize> = (0..m).filter(|&j| in_band(m, j, fc, fs)).collect();
        if bins.is_empty() {
            return Err(arg_err(format!(
                "no DFT bin of length {m} falls inside [{}, {}] Hz",
                0.5 * fc,
                1.5 * fc
            )));
        }
        Ok(Self { m, bins, fc, fs })
    }

    /// Explicit bin list; every invariant of `from_band` is still enforced.
    pub fn from_bins(m: usize, bins: Vec<usize>, fc: f64, fs: f64) -> Result<Self> {
        check_band(fc, fs)?;
        if bins.is_empty() {
            return Err(arg_err("support must contain at least one bin"));
        }
        if bins.windows(2).any(|w| w[0] >= w[1]) {
            return Err(arg_err("support bins must be strictly increasing"));
        }
        if *bins.last().unwrap() >= m {
            return Err(arg_err(format!("support bin out of range for length {m}")));
        }
        if let Some(&j) = bins.iter().find(|&&j| !in_band(m, j, fc, fs)) {
            return Err(arg_err(format!("bin {j} lies outside the RF band")));
        }
        let support = Self { m, bins, fc, fs };
        if let Some(&j) = support
            .bins
            .iter()
            .find(|&&j| support.position(support.partner(j)).is_none())
        {
            return Err(arg_err(format!("bin {j} has no conjugate partner in the support")));
        }
        Ok(support)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.bins.len()
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn fc(&self) -> f64 {
        self.fc
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    /// Conjugate bin `(m - j) mod m`.
    pub fn partner(&self, j: usize) -> usize {
        (self.m - j) % self.m
    }

    /// Row index of bin `j`, if present.
    pub fn position(&self, j: usize) -> Option<usize> {
        self.bins.binary_search(&j).ok()
    }

    /// Signed frequency of bin `j` in Hz, with `j` mapped into (-m/2, m/2].
    pub fn frequency(&self, j: usize) -> f64 {
        signed_frequency(self.m, j, self.fs)
    }

    /// Pairs of row indices `(q, partner_q)` with `q <= partner_q`.
    pub fn conjugate_pairs(&self) -> Vec<(usize, usize)> {
        self.bins
            .iter()
            .enumerate()
            .filter_map(|(q, &j)| {
                let p = self.position(self.partner(j)).expect("support is conjugate-closed");
                (q <= p).then_some((q, p))
            })
            .collect()
    }
}

fn signed_frequency(m: usize, j: usize, fs: f64) -> f64 {
    let signed = if 2 * j <= m { j as f64 } else { j as f64 - m as f64 };
    fs * signed / m as f64
}

fn in_band(m: usize, j: usize, fc: f64, fs: f64) -> bool {
    let f = signed_frequency(m, j, fs).abs();
    f >= 0.5 * fc && f <= 1.5 * fc
}

/// Band-limited Fourier coefficients: one row per support bin, one column per
/// channel.
#[derive(Debug, Clone)]
pub struct SpectralCoefficients {
    data: ComplexMatrix,
    support: Arc<FourierSupport>,
}

impl SpectralCoefficients {
    pub fn new(data: ComplexMatrix, support: Arc<FourierSupport>) -> Result<Self> {
        if data.nrows() != support.k() {
            return Err(dim_err(format!(
                "coefficient rows {} != support size {}",
                data.nrows(),
                support.k()
            )));
        }
        Ok(Self { data, support })
    }

    pub fn zeros(support: Arc<FourierSupport>, n: usize) -> Self {
        let data = ComplexMatrix::zeros(support.k(), n);
        Self { data, support }
    }

    pub fn data(&self) -> &ComplexMatrix {
        &self.data
    }

    pub fn into_data(self) -> ComplexMatrix {
        self.data
    }

    pub fn support(&self) -> &Arc<FourierSupport> {
        &self.support
    }

    pub fn channels(&self) -> usize {
        self.data.ncols()
    }

    /// Number of rows with non-zero l2 norm above `threshold`.
    pub fn joint_sparsity(&self, threshold: f64) -> usize {
        self.data
            .row_iter()
            .filter(|row| row.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() > threshold)
            .count()
    }

    /// Largest deviation `|D[q] - conj(D[partner(q)])|`, relative to the
    /// Frobenius norm. Zero for coefficients of a real signal.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let scale = self.data.norm();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for (q, p) in self.support.conjugate_pairs() {
            for c in 0..self.data.ncols() {
                let diff = (self.data[(q, c)] - self.data[(p, c)].conj()).norm();
                worst = worst.max(diff);
            }
        }
        worst / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingScheme {
    UniformGlobal,
    UniformPerChannel,
}

impl fmt::Display for SamplingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingScheme::UniformGlobal => "uniform-global",
            SamplingScheme::UniformPerChannel => "uniform-per-channel",
        })
    }
}

impl FromStr for SamplingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-global" | "global" => Ok(SamplingScheme::UniformGlobal),
            "uniform-per-channel" | "per-channel" => Ok(SamplingScheme::UniformPerChannel),
            other => Err(arg_err(format!("unknown sampling scheme {other:?}"))),
        }
    }
}

/// Observed locations of an `m x n` grid, kept in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPattern {
    omega: Vec<(usize, usize)>,
    m: usize,
    n: usize,
    seed: u64,
    scheme: SamplingScheme,
}

impl SamplingPattern {
    /// Sorts `omega` into canonical order; rejects duplicates and
    /// out-of-bounds pairs.
    pub fn new(
        m: usize,
        n: usize,
        mut omega: Vec<(usize, usize)>,
        seed: u64,
        scheme: SamplingScheme,
    ) -> Result<Self> {
        if omega.is_empty() {
            return Err(arg_err("sampling pattern must observe at least one entry"));
        }
        if let Some(&(r, c)) = omega.iter().find(|&&(r, c)| r >= m || c >= n) {
            return Err(dim_err(format!("sample ({r}, {c}) outside {m}x{n} grid")));
        }
        omega.sort_unstable();
        if omega.windows(2).any(|w| w[0] == w[1]) {
            return Err(arg_err("sampling pattern contains duplicate entries"));
        }
        Ok(Self { omega, m, n, seed, scheme })
    }

    /// Every entry of the grid.
    pub fn full(m: usize, n: usize) -> Result<Self> {
        let omega = (0..m).flat_map(|r| (0..n).map(move |c| (r, c))).collect();
        Self::new(m, n, omega, 0, SamplingScheme::UniformGlobal)
    }

    /// Pattern from a 0/1 mask; any non-zero entry counts as observed.
    pub fn from_mask(mask: &RealMatrix, seed: u64, scheme: SamplingScheme) -> Result<Self> {
        let (m, n) = mask.shape();
        let omega = (0..m)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .filter(|&(r, c)| mask[(r, c)] != 0.0)
            .collect();
        Self::new(m, n, omega, seed, scheme)
    }

    pub fn to_mask(&self) -> RealMatrix {
        let mut mask = RealMatrix::zeros(self.m, self.n);
        for &(r, c) in &self.omega {
            mask[(r, c)] = 1.0;
        }
        mask
    }

    pub fn omega(&self) -> &[(usize, usize)] {
        &self.omega
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scheme(&self) -> SamplingScheme {
        self.scheme
    }

    pub fn sampling_rate(&self) -> f64 {
        self.omega.len() as f64 / (self.m * self.n) as f64
    }
}

/// Sampled RF values aligned with the pattern's canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    values: Vec<f64>,
    pattern: SamplingPattern,
    noise_sigma: f64,
}

impl Measurements {
    pub fn new(values: Vec<f64>, pattern: SamplingPattern, noise_sigma: f64) -> Result<Self> {
        if values.len() != pattern.len() {
            return Err(dim_err(format!(
                "{} values for {} sampled locations",
                values.len(),
                pattern.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let (row, col) = pattern.omega()[i];
            return Err(Error::NonFinite { row, col });
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(arg_err(format!("noise sigma must be >= 0, got {noise_sigma}")));
        }
        Ok(Self { values, pattern, noise_sigma })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pattern(&self) -> &SamplingPattern {
        &self.pattern
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub mu: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// 1 for the full model, 0 for the sparsity-only ablation.
    pub nuclear_weight: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            alpha: 0.01,
            mu: 1e-6,
            max_iters: 1000,
            tol: 1e-6,
            nuclear_weight: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn sparsity_only(self) -> Self {
        Self { nuclear_weight: 0.0, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(arg_err(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(arg_err(format!("mu must be > 0, got {}", self.mu)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(arg_err(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(arg_err(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iters < 1 {
            return Err(arg_err("max_iters must be >= 1"));
        }
        if self.nuclear_weight != 0.0 && self.nuclear_weight != 1.0 {
            return Err(arg_err(format!(
                "nuclear_weight must be 0 or 1, got {}",
                self.nuclear_weight
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    /// Frobenius norm of the stacked constraint violation.
    pub residual: f64,
    /// `[|D - w1|, |D - w2|, |YD - w3|]`.
    pub block_residuals: [f64; 3],
    pub rel_change: f64,
    pub rank_estimate: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Tol,
    MaxIters,
    /// Set only on traces attached to [`Error::Diverged`].
    Diverged,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Tol => "tol",
            Termination::MaxIters => "max_iters",
            Termination::Diverged => "diverged",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub records: Vec<IterationRecord>,
    pub terminated_by: Termination,
}

impl SolverTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// CSV with columns `iter,objective,residual,rel_change,rank_estimate`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iter,objective,residual,rel_change,rank_estimate")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{}",
                r.iter, r.objective, r.residual, r.rel_change, r.rank_estimate
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_rule_is_inclusive_and_symmetric() {
        // fs = 8, fc = 2, m = 8: bin frequencies are integers, band [1, 3].
        let s = FourierSupport::from_band(8, 2.0, 8.0).unwrap();
        assert_eq!(s.bins(), &[1, 2, 3, 5, 6, 7]);
        for &j in s.bins() {
            assert!(s.position(s.partner(j)).is_some());
        }
    }

    #[test]
    fn band_cardinality_tracks_m_times_two_fc_over_fs() {
        let s = FourierSupport::from_band(1024, 3.5e6, 25e6).unwrap();
        let approx = 1024.0 * 2.0 * 3.5e6 / 25e6;
        assert!((s.k() as f64 - approx).abs() <= 2.0, "k = {}", s.k());
        let s = FourierSupport::from_band(128, 2.25e6, 25e6).unwrap();
        assert_eq!(s.k(), 24);
    }

    #[test]
    fn nyquist_violation_rejected() {
        assert!(FourierSupport::from_band(64, 10e6, 25e6).is_err());
        assert!(check_band(0.0, 1.0).is_err());
    }

    #[test]
    fn from_bins_requires_conjugate_partner() {
        assert!(FourierSupport::from_bins(8, vec![1, 7], 2.0, 8.0).is_ok());
        assert!(FourierSupport::from_bins(8, vec![1, 2, 7], 2.0, 8.0).is_err());
        assert!(FourierSupport::from_bins(8, vec![0, 1, 7], 2.0, 8.0).is_err());
        assert!(FourierSupport::from_bins(8, vec![7, 1], 2.0, 8.0).is_err());
    }

    #[test]
    fn nyquist_bin_pairs_with_itself() {
        // 3fc/2 == fs/2 puts the Nyquist bin on the band edge.
        let s = FourierSupport::from_band(8, 8.0 / 3.0, 8.0).unwrap();
        assert!(s.bins().contains(&4));
        assert!(s.conjugate_pairs().iter().any(|&(q, p)| q == p));
    }

    #[test]
    fn pattern_is_canonical_and_validated() {
        let p = SamplingPattern::new(3, 3, vec![(2, 0), (0, 1), (1, 2)], 7, SamplingScheme::UniformGlobal)
            .unwrap();
        assert_eq!(p.omega(), &[(0, 1), (1, 2), (2, 0)]);
        assert!((p.sampling_rate() - 1.0 / 3.0).abs() < 1e-15);
        assert!(SamplingPattern::new(3, 3, vec![], 0, SamplingScheme::UniformGlobal).is_err());
        assert!(SamplingPattern::new(3, 3, vec![(3, 0)], 0, SamplingScheme::UniformGlobal).is_err());
        assert!(
            SamplingPattern::new(3, 3, vec![(1, 1), (1, 1)], 0, SamplingScheme::UniformGlobal).is_err()
        );
        let back = SamplingPattern::from_mask(&p.to_mask(), 7, SamplingScheme::UniformGlobal).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn solver_config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = [
            SolverConfig { gamma: 0.0, ..Default::default() },
            SolverConfig { mu: 0.0, ..Default::default() },
            SolverConfig { alpha: -1.0, ..Default::default() },
            SolverConfig { tol: 0.0, ..Default::default() },
            SolverConfig { max_iters: 0, ..Default::default() },
            SolverConfig { nuclear_weight: 0.5, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn frame_rejects_non_finite_and_tiny() {
        let mut d = RealMatrix::zeros(4, 2);
        assert!(RfFrame::new(d.clone(), 25e6, 3.5e6).is_ok());
        d[(1, 1)] = f64::NAN;
        assert!(matches!(RfFrame::new(d, 25e6, 3.5e6), Err(Error::NonFinite { row: 1, col: 1 })));
        assert!(RfFrame::new(RealMatrix::zeros(1, 2), 25e6, 3.5e6).is_err());
    }

    #[test]
    fn measurements_length_checked() {
        let p = SamplingPattern::full(2, 2).unwrap();
        assert!(Measurements::new(vec![0.0; 3], p.clone(), 0.0).is_err());
        assert!(Measurements::new(vec![0.0; 4], p, 0.0).is_ok());
    }
}
