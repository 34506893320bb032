//! Proximal operators of the three convex terms split apart by SDMM.

use nalgebra::SVD;
use num_complex::Complex64;

use crate::error::{dim_err, Error, Result};
use crate::model::{check_finite_complex, ComplexMatrix, Measurements};

/// Singular values seen by [`prox_nuclear`] and what survived the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SvtReport {
    /// Descending.
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    pub retained_rank: usize,
}

fn group_norm<'a>(group: impl Iterator<Item = &'a Complex64>) -> f64 {
    group.map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `max(1 - tau / norm, 0)`: the prox of `tau * ||.||_2` on one group scales
/// it by this factor. The l2,1 prox applies it per row and the nuclear prox
/// reduces to it for single-row or single-column matrices.
fn shrink_factor(norm: f64, tau: f64) -> f64 {
    if norm > tau {
        1.0 - tau / norm
    } else {
        0.0
    }
}

/// Complex soft-thresholding of a scalar.
pub fn soft_threshold(z: Complex64, tau: f64) -> Complex64 {
    if tau > 0.0 {
        z * shrink_factor(group_norm(std::iter::once(&z)), tau)
    } else {
        z
    }
}

/// Singular values in descending order.
pub fn singular_values(v: &ComplexMatrix) -> Result<Vec<f64>> {
    check_finite_complex(v)?;
    if v.is_empty() {
        return Ok(Vec::new());
    }
    let svd = SVD::try_new(v.clone(), false, false, f64::EPSILON, 0).ok_or(Error::SvdFailed)?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Singular value thresholding: `argmin_w tau ||w||_* + 1/2 ||w - v||_F^2`.
pub fn prox_nuclear(v: &ComplexMatrix, tau: f64) -> Result<(ComplexMatrix, SvtReport)> {
    check_finite_complex(v)?;
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("threshold must be >= 0, got {tau}")));
    }
    let (rows, cols) = v.shape();
    if rows == 0 || cols == 0 {
        let report = SvtReport { singular_values: vec![], threshold: tau, retained_rank: 0 };
        return Ok((v.clone(), report));
    }

    if rows == 1 || cols == 1 {
        // One singular value, equal to the vector norm.
        let sigma = group_norm(v.iter());
        let mut w = v.clone();
        if tau > 0.0 {
            w *= Complex64::new(shrink_factor(sigma, tau), 0.0);
        }
        let report = SvtReport {
            singular_values: vec![sigma],
            threshold: tau,
            retained_rank: usize::from(sigma > tau),
        };
        return Ok((w, report));
    }

    let svd = SVD::try_new(v.clone(), true, true, f64::EPSILON, 0).ok_or(Error::SvdFailed)?;
    let u = svd.u.as_ref().ok_or(Error::SvdFailed)?;
    let v_t = svd.v_t.as_ref().ok_or(Error::SvdFailed)?;
    let sigma = &svd.singular_values;

    let mut descending: Vec<f64> = sigma.iter().copied().collect();
    descending.sort_by(|a, b| b.total_cmp(a));
    let retained_rank = descending.iter().filter(|&&s| s > tau).count();
    let report = SvtReport { singular_values: descending, threshold: tau, retained_rank };

    if tau == 0.0 {
        return Ok((v.clone(), report));
    }

    let mut w = ComplexMatrix::zeros(rows, cols);
    for (i, &s) in sigma.iter().enumerate() {
        let shrunk = s - tau;
        if shrunk <= 0.0 {
            continue;
        }
        let ui = u.column(i);
        let vi = v_t.row(i);
        w.ger(Complex64::new(shrunk, 0.0), &ui, &vi.transpose(), Complex64::new(1.0, 0.0));
    }
    Ok((w, report))
}

/// Row-wise group soft-thresholding: `argmin_w tau ||w||_{2,1} + 1/2 ||w - v||_F^2`.
pub fn prox_l21(v: &ComplexMatrix, tau: f64) -> ComplexMatrix {
    let mut w = v.clone();
    if tau > 0.0 {
        for mut row in w.row_iter_mut() {
            let factor = shrink_factor(group_norm(row.iter()), tau);
            row.iter_mut().for_each(|z| *z *= factor);
        }
    }
    w
}

/// `argmin_w 1/(2 gamma) ||v - w||_F^2 + 1/(2 mu) ||B - P_Omega(w)||_F^2`.
///
/// `B` is real. On sampled entries the complex value is pulled toward `B`
/// with weight `gamma / (mu + gamma)`, which also shrinks the imaginary part
/// by `mu / (mu + gamma)`. Unsampled entries pass through unchanged.
pub fn prox_data(v: &ComplexMatrix, b: &Measurements, gamma: f64, mu: f64) -> Result<ComplexMatrix> {
    if b.pattern().shape() != v.shape() {
        let (m, n) = b.pattern().shape();
        return Err(dim_err(format!(
            "measurements are on a {m}x{n} grid, iterate is {}x{}",
            v.nrows(),
            v.ncols()
        )));
    }
    if !(gamma > 0.0 && mu > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma and mu must be positive, got gamma={gamma}, mu={mu}"
        )));
    }
    let mut w = v.clone();
    let denom = mu + gamma;
    for (&(r, c), &target) in b.pattern().omega().iter().zip(b.values()) {
        let z = v[(r, c)];
        w[(r, c)] = (z * mu + Complex64::new(gamma * target, 0.0)) / denom;
    }
    Ok(w)
}
