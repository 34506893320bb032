//! Linear operators of the measurement model.
//!
//! `Y` maps band-limited coefficients (k x N) to fast-time samples (M x N) by
//! an inverse DFT restricted to the support bins; `Yt` is its adjoint. Both
//! use 1/sqrt(M) scaling, so the columns of `Y` are orthonormal and `Yt` is
//! also a left inverse of `Y`.

use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{arg_err, dim_err, Error, Result};
use crate::model::{
    ComplexMatrix, FourierSupport, Measurements, RealMatrix, RfFrame, SamplingPattern,
    SpectralCoefficients,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone)]
pub struct PartialFourierOp {
    support: Arc<FourierSupport>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for PartialFourierOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PartialFourierOp")
            .field("m", &self.support.m())
            .field("k", &self.support.k())
            .finish()
    }
}

impl PartialFourierOp {
    pub fn new(support: FourierSupport) -> Self {
        Self::from_shared(Arc::new(support))
    }

    pub fn from_shared(support: Arc<FourierSupport>) -> Self {
        let mut planner = FftPlanner::new();
        let m = support.m();
        Self {
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
            scale: 1.0 / (m as f64).sqrt(),
            support,
        }
    }

    pub fn support(&self) -> &Arc<FourierSupport> {
        &self.support
    }

    pub fn m(&self) -> usize {
        self.support.m()
    }

    pub fn k(&self) -> usize {
        self.support.k()
    }

    fn same_support(&self, other: &Arc<FourierSupport>) -> bool {
        Arc::ptr_eq(&self.support, other) || *self.support == **other
    }

    /// `X = Y D`.
    pub fn synthesize(&self, d: &SpectralCoefficients) -> Result<ComplexMatrix> {
        if !self.same_support(d.support()) {
            return Err(Error::SupportMismatch);
        }
        self.apply(d.data())
    }

    /// `D = Yt X` for complex input.
    pub fn analyze(&self, x: &ComplexMatrix) -> Result<SpectralCoefficients> {
        let d = self.adjoint(x)?;
        SpectralCoefficients::new(d, self.support.clone())
    }

    pub fn analyze_real(&self, x: &RealMatrix) -> Result<SpectralCoefficients> {
        self.analyze(&x.map(|v| Complex64::new(v, 0.0)))
    }

    /// `Y` on a raw k x N matrix.
    pub fn apply(&self, d: &ComplexMatrix) -> Result<ComplexMatrix> {
        let (k, m) = (self.k(), self.m());
        if d.nrows() != k {
            return Err(dim_err(format!("Y expects {k} rows, got {}", d.nrows())));
        }
        let mut out = ComplexMatrix::zeros(m, d.ncols());
        let bins = self.support.bins();
        let scratch_len = self.inverse.get_inplace_scratch_len();
        out.as_mut_slice()
            .par_chunks_mut(m)
            .zip(d.as_slice().par_chunks(k))
            .for_each_init(
                || vec![ZERO; scratch_len],
                |scratch, (col, coeffs)| {
                    for (&j, &z) in bins.iter().zip(coeffs) {
                        col[j] = z;
                    }
                    self.inverse.process_with_scratch(col, scratch);
                    for v in col.iter_mut() {
                        *v *= self.scale;
                    }
                },
            );
        Ok(out)
    }

    /// `Yt` on a raw M x N matrix.
    pub fn adjoint(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        let (k, m) = (self.k(), self.m());
        if x.nrows() != m {
            return Err(dim_err(format!("Yt expects {m} rows, got {}", x.nrows())));
        }
        let mut out = ComplexMatrix::zeros(k, x.ncols());
        let bins = self.support.bins();
        let scratch_len = self.forward.get_inplace_scratch_len();
        out.as_mut_slice()
            .par_chunks_mut(k)
            .zip(x.as_slice().par_chunks(m))
            .for_each_init(
                || (vec![ZERO; m], vec![ZERO; scratch_len]),
                |(buf, scratch), (coeffs, col)| {
                    buf.copy_from_slice(col);
                    self.forward.process_with_scratch(buf, scratch);
                    for (c, &j) in coeffs.iter_mut().zip(bins) {
                        *c = buf[j] * self.scale;
                    }
                },
            );
        Ok(out)
    }

    /// Applies `Yt Y` to a fixed probe and reports the largest deviation from
    /// the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let k = self.k();
        let probe = ComplexMatrix::from_fn(k, 2, |r, c| {
            let t = (r * 7 + c * 3 + 1) as f64;
            Complex64::new(t.sin(), (0.5 * t).cos())
        });
        let back = self
            .adjoint(&self.apply(&probe).expect("probe has k rows"))
            .expect("Y output has m rows");
        (back - &probe).norm() / probe.norm()
    }
}

fn check_pattern_shape(pattern: &SamplingPattern, rows: usize, cols: usize) -> Result<()> {
    if pattern.shape() != (rows, cols) {
        let (m, n) = pattern.shape();
        return Err(dim_err(format!(
            "pattern is {m}x{n} but matrix is {rows}x{cols}"
        )));
    }
    Ok(())
}

/// `P_Omega`: values of `x` at the sampled locations, in canonical order.
pub fn project(pattern: &SamplingPattern, x: &RealMatrix) -> Result<Vec<f64>> {
    check_pattern_shape(pattern, x.nrows(), x.ncols())?;
    Ok(pattern.omega().iter().map(|&(r, c)| x[(r, c)]).collect())
}

pub fn project_complex(pattern: &SamplingPattern, x: &ComplexMatrix) -> Result<Vec<Complex64>> {
    check_pattern_shape(pattern, x.nrows(), x.ncols())?;
    Ok(pattern.omega().iter().map(|&(r, c)| x[(r, c)]).collect())
}

/// Adjoint of [`project`]: zero-fill off the pattern.
pub fn embed(pattern: &SamplingPattern, v: &[f64]) -> Result<RealMatrix> {
    if v.len() != pattern.len() {
        return Err(dim_err(format!(
            "{} values for {} sampled locations",
            v.len(),
            pattern.len()
        )));
    }
    let (m, n) = pattern.shape();
    let mut out = RealMatrix::zeros(m, n);
    for (&(r, c), &val) in pattern.omega().iter().zip(v) {
        out[(r, c)] = val;
    }
    Ok(out)
}

/// `B = P_Omega(X) + N_e` with i.i.d. Gaussian noise drawn from `seed`.
pub fn measure(x: &RfFrame, pattern: &SamplingPattern, sigma: f64, seed: u64) -> Result<Measurements> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(arg_err(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let mut values = project(pattern, x.data())?;
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).map_err(|e| arg_err(e.to_string()))?;
        for v in values.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Measurements::new(values, pattern.clone(), sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SamplingScheme;
    use rand::Rng;

    fn support(m: usize, fc: f64) -> Arc<FourierSupport> {
        Arc::new(FourierSupport::from_band(m, fc, 1.0).unwrap())
    }

    #[test]
    fn zero_coefficients_synthesize_to_zero() {
        let s = support(32, 0.2);
        let op = PartialFourierOp::from_shared(s.clone());
        let x = op.synthesize(&SpectralCoefficients::zeros(s, 3)).unwrap();
        assert_eq!(x.shape(), (32, 3));
        assert!(x.iter().all(|z| *z == ZERO));
    }

    #[test]
    fn single_atom_is_unit_exponential() {
        let m = 32;
        let s = support(m, 0.2);
        let op = PartialFourierOp::from_shared(s.clone());
        let q = 1;
        let j = s.bins()[q];
        let mut d = ComplexMatrix::zeros(s.k(), 1);
        d[(q, 0)] = Complex64::new((m as f64).sqrt(), 0.0);
        let x = op.apply(&d).unwrap();
        for t in 0..m {
            let phase = 2.0 * std::f64::consts::PI * (j * t) as f64 / m as f64;
            let expected = Complex64::new(phase.cos(), phase.sin());
            assert!((x[(t, 0)] - expected).norm() < 1e-12);
            assert!((x[(t, 0)].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dc_outside_band_annihilates_constants() {
        let op = PartialFourierOp::from_shared(support(32, 0.2));
        assert!(!op.support().bins().contains(&0));
        let d = op.analyze_real(&RealMatrix::from_element(32, 4, 3.25)).unwrap();
        assert!(d.data().iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn support_mismatch_rejected() {
        let op = PartialFourierOp::from_shared(support(32, 0.2));
        let other = SpectralCoefficients::zeros(support(32, 0.1), 2);
        assert!(matches!(op.synthesize(&other), Err(Error::SupportMismatch)));
        assert!(op.adjoint(&ComplexMatrix::zeros(31, 2)).is_err());
    }

    #[test]
    fn orthonormal_by_construction() {
        for m in [8, 16, 32, 1024] {
            let op = PartialFourierOp::from_shared(support(m, 0.14));
            assert!(op.orthonormality_defect() < 1e-12);
        }
    }

    #[test]
    fn real_frames_give_conjugate_symmetric_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let op = PartialFourierOp::from_shared(support(64, 0.14));
        let x = RealMatrix::from_fn(64, 5, |_, _| rng.random::<f64>() - 0.5);
        let d = op.analyze_real(&x).unwrap();
        assert!(d.conjugate_asymmetry() < 1e-12);
        let y = op.apply(d.data()).unwrap();
        let imag: f64 = y.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
        assert!(imag <= 1e-10 * y.norm());
    }

    #[test]
    fn project_and_embed() {
        let x = RealMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let all = SamplingPattern::full(2, 3).unwrap();
        assert_eq!(project(&all, &x).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);

        let mut y = RealMatrix::zeros(2, 3);
        y[(0, 0)] = 7.0;
        let one = SamplingPattern::new(2, 3, vec![(0, 0)], 0, SamplingScheme::UniformGlobal).unwrap();
        assert_eq!(project(&one, &y).unwrap(), vec![7.0]);

        let e = embed(&one, &[2.5]).unwrap();
        assert_eq!(e.iter().filter(|v| **v != 0.0).count(), 1);
        assert_eq!(e[(0, 0)], 2.5);
        assert!(embed(&one, &[1.0, 2.0]).is_err());
        assert!(project(&one, &RealMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn measure_is_deterministic_and_noiseless_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = RfFrame::new(RealMatrix::from_fn(16, 4, |_, _| rng.random()), 25e6, 3.5e6).unwrap();
        let p = SamplingPattern::new(16, 4, vec![(0, 0), (3, 2), (15, 3)], 0, SamplingScheme::UniformGlobal)
            .unwrap();
        let clean = measure(&x, &p, 0.0, 9).unwrap();
        assert_eq!(clean.values(), project(&p, x.data()).unwrap().as_slice());
        assert_eq!(clean.noise_sigma(), 0.0);
        let a = measure(&x, &p, 0.3, 9).unwrap();
        let b = measure(&x, &p, 0.3, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), clean.values());
        assert!(measure(&x, &p, -1.0, 9).is_err());
    }
}
