//! Independent oracles shared by the integration tests and the acceptance run.
//!
//! Nothing here calls the code under test to compute an expected value: the
//! Fourier operator is checked against an explicit DFT matrix, the nuclear
//! prox against a Hermitian eigendecomposition of `V^H V`, singular values
//! come from Hermitian eigenvalues rather than an SVD, and every prox is also
//! checked against its optimality conditions.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use lrjs::model::{ComplexMatrix, FourierSupport, Measurements, SamplingPattern, SamplingScheme};
use lrjs::operators::PartialFourierOp;
use lrjs::prox::{prox_data, prox_l21, prox_nuclear};
use lrjs::solver::{step1_update_d, SdmmState};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// `Re <a, b>` for the Frobenius inner product.
pub fn inner(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn rel(diff: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Support with `k < m` for any `m` divisible by 8: `fs = m`, `fc = m / 8`.
pub fn small_support(m: usize) -> Arc<FourierSupport> {
    Arc::new(FourierSupport::from_band(m, m as f64 / 8.0, m as f64).unwrap())
}

/// Explicit `M x k` synthesis matrix: inverse DFT columns at the support bins,
/// scaled by `1/sqrt(M)`.
pub fn dense_y(support: &FourierSupport) -> ComplexMatrix {
    let m = support.m();
    let scale = 1.0 / (m as f64).sqrt();
    ComplexMatrix::from_fn(m, support.k(), |t, c| {
        let j = support.bins()[c];
        Complex64::from_polar(scale, 2.0 * PI * ((t * j) % m) as f64 / m as f64)
    })
}

fn gram_eigen(a: &ComplexMatrix) -> SymmetricEigen<Complex64, nalgebra::Dyn> {
    SymmetricEigen::new(a.adjoint() * a)
}

/// Singular values, descending, from the eigenvalues `+-sigma_i` of the
/// Hermitian matrix `[[0, A], [A^H, 0]]`. Unlike the eigenvalues of `A^H A`
/// this keeps small singular values at full precision.
pub fn singular_values(a: &ComplexMatrix) -> Vec<f64> {
    let (m, n) = a.shape();
    let mut h = ComplexMatrix::zeros(m + n, m + n);
    h.view_mut((0, m), (m, n)).copy_from(a);
    h.view_mut((m, 0), (n, m)).copy_from(&a.adjoint());
    let mut s: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s.truncate(m.min(n));
    s.into_iter().map(|x| x.max(0.0)).collect()
}

pub fn nuclear_norm(a: &ComplexMatrix) -> f64 {
    singular_values(a).iter().sum()
}

pub fn spectral_norm(a: &ComplexMatrix) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

pub fn l21_norm(a: &ComplexMatrix) -> f64 {
    (0..a.nrows())
        .map(|r| (0..a.ncols()).map(|c| a[(r, c)].norm_sqr()).sum::<f64>().sqrt())
        .sum()
}

/// Singular value thresholding written as `V f(V^H V)` with
/// `f(l) = max(1 - tau / sqrt(l), 0)`.
pub fn svt_oracle(v: &ComplexMatrix, tau: f64) -> ComplexMatrix {
    let eig = gram_eigen(v);
    let q = &eig.eigenvectors;
    let weights = eig.eigenvalues.map(|l| {
        let s = l.max(0.0).sqrt();
        if s > tau {
            Complex64::new(1.0 - tau / s, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let mut scaled = q.clone();
    for (c, w) in weights.iter().enumerate() {
        scaled.column_mut(c).scale_mut(w.re);
    }
    v * (scaled * q.adjoint())
}

pub fn l21_oracle(v: &ComplexMatrix, tau: f64) -> ComplexMatrix {
    let mut w = v.clone();
    for r in 0..v.nrows() {
        let mut norm = 0.0;
        for c in 0..v.ncols() {
            norm += v[(r, c)].norm_sqr();
        }
        let norm = norm.sqrt();
        let factor = if norm > tau { 1.0 - tau / norm } else { 0.0 };
        for c in 0..v.ncols() {
            w[(r, c)] = v[(r, c)] * factor;
        }
    }
    w
}

pub fn data_oracle(v: &ComplexMatrix, mask: &[Vec<Option<f64>>], gamma: f64, mu: f64) -> ComplexMatrix {
    let mut w = v.clone();
    for (r, row) in mask.iter().enumerate() {
        for (c, entry) in row.iter().enumerate() {
            if let Some(b) = entry {
                w[(r, c)] = (v[(r, c)] * mu + Complex64::new(gamma * b, 0.0)) / (mu + gamma);
            }
        }
    }
    w
}

/// Random measurements on a `rows x cols` grid with dense lookup table.
pub fn random_measurements(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
) -> (Measurements, Vec<Vec<Option<f64>>>) {
    let mut omega = Vec::new();
    let mut table = vec![vec![None; cols]; rows];
    for (r, row) in table.iter_mut().enumerate() {
        for (c, slot) in row.iter_mut().enumerate() {
            if rng.random::<f64>() < 0.4 {
                omega.push((r, c));
                *slot = Some(0.0);
            }
        }
    }
    if omega.is_empty() {
        omega.push((0, 0));
        table[0][0] = Some(0.0);
    }
    let pattern = SamplingPattern::new(rows, cols, omega.clone(), 0, SamplingScheme::UniformGlobal).unwrap();
    let values: Vec<f64> = omega
        .iter()
        .map(|&(r, c)| {
            let v: f64 = rng.sample(StandardNormal);
            table[r][c] = Some(v);
            v
        })
        .collect();
    (Measurements::new(values, pattern, 0.0).unwrap(), table)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ProxReport {
    /// Relative Frobenius distance to the closed form.
    pub nuclear_closed_form: f64,
    pub l21_closed_form: f64,
    pub data_closed_form: f64,
    /// Relative violation of the subgradient characterisation
    /// `||Z|| <= 1, <Z, W> = ||W||` with `Z = (V - W) / tau`.
    pub nuclear_subgradient: f64,
    pub l21_subgradient: f64,
    /// Relative norm of `(w - v)/gamma + P*(w - B)/mu`.
    pub data_first_order: f64,
    /// Largest `||Px - Py||^2 - <Px - Py, x - y>`, relative to `||x - y||^2`.
    pub firm_nonexpansive_violation: f64,
    /// Largest decrease of the prox objective found by perturbing the output.
    pub perturbation_gain: f64,
}

impl ProxReport {
    pub fn max_closed_form(&self) -> f64 {
        [
            self.nuclear_closed_form,
            self.l21_closed_form,
            self.data_closed_form,
            self.nuclear_subgradient,
            self.l21_subgradient,
            self.data_first_order,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn firm(p: &ComplexMatrix, q: &ComplexMatrix, x: &ComplexMatrix, y: &ComplexMatrix) -> f64 {
    let dp = p - q;
    let dx = x - y;
    rel(dp.norm_squared() - inner(&dp, &dx), dx.norm_squared())
}

/// `instances` random prox problems with `k, N <= 32`, and as many random
/// pairs for firm nonexpansiveness. `probes` perturbations of size `eps` are
/// tried on every tenth instance.
pub fn prox_suite(seed: u64, instances: usize, probes: usize, eps: f64) -> ProxReport {
    let mut rng = rng(seed);
    let mut rep = ProxReport::default();
    let upd = |slot: &mut f64, v: f64| *slot = slot.max(v);
    for i in 0..instances {
        let rows = rng.random_range(1..=32);
        let cols = rng.random_range(1..=32);
        let v = gaussian(&mut rng, rows, cols);
        let tau = rng.random::<f64>() * spectral_norm(&v);

        let (w, _) = prox_nuclear(&v, tau).unwrap();
        upd(&mut rep.nuclear_closed_form, rel((&w - svt_oracle(&v, tau)).norm(), v.norm()));
        if tau > 0.0 {
            let z = (&v - &w) / Complex64::new(tau, 0.0);
            let over = (spectral_norm(&z) - 1.0).max(0.0);
            let gap = (inner(&z, &w) - nuclear_norm(&w)).abs();
            upd(&mut rep.nuclear_subgradient, over.max(rel(gap, nuclear_norm(&v))));
        }

        let w2 = prox_l21(&v, tau);
        upd(&mut rep.l21_closed_form, rel((&w2 - l21_oracle(&v, tau)).norm(), v.norm()));
        if tau > 0.0 {
            let z = (&v - &w2) / Complex64::new(tau, 0.0);
            let over = (0..rows).map(|r| z.row(r).norm() - 1.0).fold(0.0, f64::max);
            let gap = (inner(&z, &w2) - l21_norm(&w2)).abs();
            upd(&mut rep.l21_subgradient, over.max(rel(gap, l21_norm(&v))));
        }

        let (b, table) = random_measurements(&mut rng, rows, cols);
        let gamma = 10f64.powf(rng.random_range(-2.0..2.0));
        let mu = 10f64.powf(rng.random_range(-6.0..1.0));
        let w3 = prox_data(&v, &b, gamma, mu).unwrap();
        upd(&mut rep.data_closed_form, rel((&w3 - data_oracle(&v, &table, gamma, mu)).norm(), v.norm()));
        let mut foc = (&w3 - &v) / Complex64::new(gamma, 0.0);
        let mut scale = (&v / Complex64::new(gamma, 0.0)).norm();
        for (r, row) in table.iter().enumerate() {
            for (c, entry) in row.iter().enumerate() {
                if let Some(target) = entry {
                    foc[(r, c)] += (w3[(r, c)] - Complex64::new(*target, 0.0)) / mu;
                    scale = scale.max(target.abs() / mu);
                }
            }
        }
        upd(&mut rep.data_first_order, rel(foc.norm(), scale));

        // firm nonexpansiveness on a fresh pair
        let x = gaussian(&mut rng, rows, cols);
        let y = gaussian(&mut rng, rows, cols);
        let pn = (prox_nuclear(&x, tau).unwrap().0, prox_nuclear(&y, tau).unwrap().0);
        let pl = (prox_l21(&x, tau), prox_l21(&y, tau));
        let pd = (prox_data(&x, &b, gamma, mu).unwrap(), prox_data(&y, &b, gamma, mu).unwrap());
        for (p, q) in [pn, pl, pd] {
            upd(&mut rep.firm_nonexpansive_violation, firm(&p, &q, &x, &y));
        }

        if i % 10 == 0 && probes > 0 {
            let nuc = |u: &ComplexMatrix| tau * nuclear_norm(u) + 0.5 * (u - &v).norm_squared();
            let l21 = |u: &ComplexMatrix| tau * l21_norm(u) + 0.5 * (u - &v).norm_squared();
            let dat = |u: &ComplexMatrix| {
                let mut misfit = 0.0;
                for (r, row) in table.iter().enumerate() {
                    for (c, entry) in row.iter().enumerate() {
                        if let Some(t) = entry {
                            misfit += (u[(r, c)] - Complex64::new(*t, 0.0)).norm_sqr();
                        }
                    }
                }
                (u - &v).norm_squared() / (2.0 * gamma) + misfit / (2.0 * mu)
            };
            let (f_nuc, f_l21, f_dat) = (nuc(&w), l21(&w2), dat(&w3));
            for _ in 0..probes {
                let mut delta = gaussian(&mut rng, rows, cols);
                let n = delta.norm();
                delta /= Complex64::new(n / eps, 0.0);
                let gains = [
                    rel(f_nuc - nuc(&(&w + &delta)), f_nuc.abs().max(1.0)),
                    rel(f_l21 - l21(&(&w2 + &delta)), f_l21.abs().max(1.0)),
                    rel(f_dat - dat(&(&w3 + &delta)), f_dat.abs().max(1.0)),
                ];
                for g in gains {
                    upd(&mut rep.perturbation_gain, g);
                }
            }
        }
    }
    rep
}

#[derive(Debug, Default, Clone, Copy)]
pub struct OperatorReport {
    pub adjoint_identity: f64,
    pub isometry: f64,
    pub fft_vs_dense: f64,
    /// Largest `sigma_{k+1}(Y D) / sigma_1(Y D)`.
    pub rank_excess: f64,
    pub projector_idempotence: f64,
}

impl OperatorReport {
    pub fn max(&self) -> f64 {
        [
            self.adjoint_identity,
            self.isometry,
            self.fft_vs_dense,
            self.rank_excess,
            self.projector_idempotence,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn operator_suite(seed: u64, sizes: &[usize], trials: usize) -> OperatorReport {
    let mut rng = rng(seed);
    let mut rep = OperatorReport::default();
    let upd = |slot: &mut f64, v: f64| *slot = slot.max(v);
    for &m in sizes {
        let support = small_support(m);
        let k = support.k();
        let op = PartialFourierOp::from_shared(support.clone());
        let y = dense_y(&support);
        for _ in 0..trials {
            let n = rng.random_range(1..=6);
            let d = gaussian(&mut rng, k, n);
            let x = gaussian(&mut rng, m, n);
            let yd = op.apply(&d).unwrap();
            let ytx = op.adjoint(&x).unwrap();

            let lhs = inner(&yd, &x);
            let rhs = inner(&d, &ytx);
            upd(&mut rep.adjoint_identity, rel((lhs - rhs).abs(), yd.norm() * x.norm()));

            let back = op.adjoint(&yd).unwrap();
            upd(&mut rep.isometry, rel((&back - &d).norm(), d.norm()));

            upd(&mut rep.fft_vs_dense, rel((&yd - &y * &d).norm(), yd.norm()));
            upd(&mut rep.fft_vs_dense, rel((&ytx - y.adjoint() * &x).norm(), x.norm()));

            let proj = op.apply(&ytx).unwrap();
            let twice = op.apply(&op.adjoint(&proj).unwrap()).unwrap();
            upd(&mut rep.projector_idempotence, rel((&twice - &proj).norm(), proj.norm()));
        }
        // wide D so that rank(Y D) <= k is a real constraint
        let d = gaussian(&mut rng, k, k + 5);
        let yd = op.apply(&d).unwrap();
        let s = singular_values(&yd);
        upd(&mut rep.rank_excess, rel(s[k], s[0]));
    }
    rep
}

/// Step 1 against a dense solve of `(2I + Y^H Y) D = (w1 - b1) + (w2 - b2) + Y^H (w3 - b3)`.
pub fn step1_suite(seed: u64, states: usize) -> f64 {
    let mut rng = rng(seed);
    let support = Arc::new(FourierSupport::from_band(16, 2.0, 16.0).unwrap());
    assert_eq!(support.k(), 6);
    let op = PartialFourierOp::from_shared(support.clone());
    let y = dense_y(&support);
    let normal = ComplexMatrix::identity(6, 6) * Complex64::new(2.0, 0.0) + y.adjoint() * &y;
    let lu = normal.lu();
    let mut worst = 0.0f64;
    for _ in 0..states {
        let state = SdmmState {
            d: gaussian(&mut rng, 6, 3),
            w1: gaussian(&mut rng, 6, 3),
            w2: gaussian(&mut rng, 6, 3),
            w3: gaussian(&mut rng, 16, 3),
            b1: gaussian(&mut rng, 6, 3),
            b2: gaussian(&mut rng, 6, 3),
            b3: gaussian(&mut rng, 16, 3),
            s: 0,
        };
        let rhs = (&state.w1 - &state.b1) + (&state.w2 - &state.b2) + y.adjoint() * (&state.w3 - &state.b3);
        let expected = lu.solve(&rhs).unwrap();
        let got = step1_update_d(&state, &op).unwrap();
        worst = worst.max(rel((got.data() - &expected).norm(), expected.norm()));
    }
    worst
}

/// The standard synthetic instance: M = 128, N = 64, k = 24, rank 3,
/// eight active rows.
pub struct Instance {
    pub frame: lrjs::model::RfFrame,
    pub truth: lrjs::model::SpectralCoefficients,
    pub op: PartialFourierOp,
}

pub fn standard_instance() -> Instance {
    let support = Arc::new(FourierSupport::from_band(128, 2.25e6, 25e6).unwrap());
    assert_eq!(support.k(), 24);
    let (frame, truth) = lrjs::synth::gen_lowrank_jointsparse(128, 64, support.clone(), 3, 8, 1).unwrap();
    Instance { frame, truth, op: PartialFourierOp::from_shared(support) }
}

pub fn sample(inst: &Instance, sr: f64, seed: u64) -> Measurements {
    let pattern = lrjs::synth::gen_pattern(128, 64, sr, SamplingScheme::UniformGlobal, seed).unwrap();
    lrjs::operators::measure(&inst.frame, &pattern, 0.0, 0).unwrap()
}
