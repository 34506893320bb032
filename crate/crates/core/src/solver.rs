//! SDMM iteration for
//!
//! ```text
//! min_D  nuclear_weight ||D||_* + alpha ||D||_{2,1} + 1/(2 mu) ||B - P_Omega(Y D)||_F^2
//! ```
//!
//! with splitting variables `w1 = D`, `w2 = D`, `w3 = Y D` and scaled
//! multipliers `b1, b2, b3`. One iteration is
//!
//! 1. `D <- [(w1 - b1) + (w2 - b2) + Yt (w3 - b3)] / 3`
//! 2. `w1 <- prox_nuclear(b1 + D)`, `w2 <- prox_l21(b2 + D)`, `w3 <- prox_data(b3 + Y D)`
//! 3. `b1 += D - w1`, `b2 += D - w2`, `b3 += Y D - w3`
//!
//! Step 1 is the exact least-squares minimizer only because `Yt Y = I`.

use num_complex::Complex64;

use crate::error::{dim_err, Error, Result};
use crate::model::{
    ComplexMatrix, IterationRecord, Measurements, RfFrame, SolverConfig, SolverTrace,
    SpectralCoefficients, Termination,
};
use crate::operators::{embed, PartialFourierOp};
use crate::prox::{prox_data, prox_l21, prox_nuclear, singular_values};

/// Relative cut-off for the numerical rank reported in the trace.
pub const RANK_TOLERANCE: f64 = 1e-6;

const ORTHONORMALITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SdmmState {
    pub d: ComplexMatrix,
    pub w1: ComplexMatrix,
    pub w2: ComplexMatrix,
    pub w3: ComplexMatrix,
    pub b1: ComplexMatrix,
    pub b2: ComplexMatrix,
    pub b3: ComplexMatrix,
    pub s: usize,
}

impl SdmmState {
    /// `w1 = w2 = D0`, `w3 = Y D0`, multipliers zero. Without an explicit
    /// `init`, `D0 = Yt embed(B)`.
    pub fn initial(
        b: &Measurements,
        op: &PartialFourierOp,
        init: Option<&SpectralCoefficients>,
    ) -> Result<Self> {
        let (m, n) = b.pattern().shape();
        if m != op.m() {
            return Err(dim_err(format!(
                "measurements have {m} rows but operator expects {}",
                op.m()
            )));
        }
        let d = match init {
            Some(d0) => {
                if d0.channels() != n {
                    return Err(dim_err(format!(
                        "initial coefficients have {} columns, measurements {n}",
                        d0.channels()
                    )));
                }
                op.synthesize(d0)?;
                d0.data().clone()
            }
            None => {
                let back = embed(b.pattern(), b.values())?;
                op.adjoint(&to_complex(&back))?
            }
        };
        Self::from_coefficients(d, op)
    }

    pub fn from_coefficients(d: ComplexMatrix, op: &PartialFourierOp) -> Result<Self> {
        let w3 = op.apply(&d)?;
        let (k, n) = d.shape();
        let (m, _) = w3.shape();
        Ok(Self {
            w1: d.clone(),
            w2: d.clone(),
            b1: ComplexMatrix::zeros(k, n),
            b2: ComplexMatrix::zeros(k, n),
            b3: ComplexMatrix::zeros(m, n),
            w3,
            d,
            s: 0,
        })
    }

    /// `[||D - w1||, ||D - w2||, ||Y D - w3||]`.
    pub fn feasibility(&self, op: &PartialFourierOp) -> Result<[f64; 3]> {
        let yd = op.apply(&self.d)?;
        Ok(block_residuals(&self.d, &yd, self))
    }

    pub fn coefficients(&self, op: &PartialFourierOp) -> SpectralCoefficients {
        SpectralCoefficients::new(self.d.clone(), op.support().clone())
            .expect("state rows match the operator support")
    }
}

fn to_complex(x: &crate::model::RealMatrix) -> ComplexMatrix {
    x.map(|v| Complex64::new(v, 0.0))
}

fn block_residuals(d: &ComplexMatrix, yd: &ComplexMatrix, st: &SdmmState) -> [f64; 3] {
    [(d - &st.w1).norm(), (d - &st.w2).norm(), (yd - &st.w3).norm()]
}

fn data_misfit(yd: &ComplexMatrix, b: &Measurements) -> f64 {
    b.pattern()
        .omega()
        .iter()
        .zip(b.values())
        .map(|(&(r, c), &target)| {
            let diff = target - yd[(r, c)].re;
            diff * diff
        })
        .sum()
}

fn l21_norm(d: &ComplexMatrix) -> f64 {
    d.row_iter().map(|row| row.norm()).sum()
}

fn objective_from_parts(
    singular: &[f64],
    d: &ComplexMatrix,
    yd: &ComplexMatrix,
    b: &Measurements,
    cfg: &SolverConfig,
) -> f64 {
    let nuclear: f64 = singular.iter().sum();
    cfg.nuclear_weight * nuclear + cfg.alpha * l21_norm(d) + data_misfit(yd, b) / (2.0 * cfg.mu)
}

/// `nuclear_weight ||D||_* + alpha ||D||_{2,1} + 1/(2 mu) ||B - P_Omega(Re(Y D))||_F^2`.
pub fn objective(
    d: &SpectralCoefficients,
    b: &Measurements,
    cfg: &SolverConfig,
    op: &PartialFourierOp,
) -> Result<f64> {
    let yd = op.synthesize(d)?;
    if b.pattern().shape() != yd.shape() {
        return Err(dim_err("measurement grid does not match Y D"));
    }
    let singular = singular_values(d.data())?;
    Ok(objective_from_parts(&singular, d.data(), &yd, b, cfg))
}

fn check_state(state: &SdmmState, op: &PartialFourierOp) -> Result<()> {
    let (k, n) = (op.k(), state.d.ncols());
    let small = [&state.d, &state.w1, &state.w2, &state.b1, &state.b2];
    if small.iter().any(|x| x.shape() != (k, n)) {
        return Err(dim_err(format!("coefficient blocks must be {k}x{n}")));
    }
    if state.w3.shape() != (op.m(), n) || state.b3.shape() != (op.m(), n) {
        return Err(dim_err(format!("signal blocks must be {}x{n}", op.m())));
    }
    Ok(())
}

/// Step 1: exact minimizer of the stacked least-squares problem in `D`.
pub fn step1_update_d(state: &SdmmState, op: &PartialFourierOp) -> Result<SpectralCoefficients> {
    check_state(state, op)?;
    let d = step1_raw(state, op)?;
    SpectralCoefficients::new(d, op.support().clone())
}

fn step1_raw(state: &SdmmState, op: &PartialFourierOp) -> Result<ComplexMatrix> {
    let back = op.adjoint(&(&state.w3 - &state.b3))?;
    let mut d = &state.w1 - &state.b1;
    d += &state.w2;
    d -= &state.b2;
    d += back;
    d /= Complex64::new(3.0, 0.0);
    Ok(d)
}

type Blocks = (ComplexMatrix, ComplexMatrix, ComplexMatrix);

/// Step 2: the three independent prox evaluations, given `state.d = D^{s+1}`.
pub fn step2_update_w(
    state: &SdmmState,
    cfg: &SolverConfig,
    b: &Measurements,
    op: &PartialFourierOp,
) -> Result<Blocks> {
    check_state(state, op)?;
    let yd = op.apply(&state.d)?;
    step2_raw(state, &yd, cfg, b)
}

fn step2_raw(
    state: &SdmmState,
    yd: &ComplexMatrix,
    cfg: &SolverConfig,
    b: &Measurements,
) -> Result<Blocks> {
    let (w1, (w2, w3)) = rayon::join(
        || {
            let v = &state.b1 + &state.d;
            prox_nuclear(&v, cfg.gamma * cfg.nuclear_weight).map(|(w, _)| w)
        },
        || {
            let w2 = prox_l21(&(&state.b2 + &state.d), cfg.gamma * cfg.alpha);
            let w3 = prox_data(&(&state.b3 + yd), b, cfg.gamma, cfg.mu);
            (w2, w3)
        },
    );
    Ok((w1?, w2, w3?))
}

/// Step 3: multiplier ascent.
pub fn step3_update_b(state: &SdmmState, op: &PartialFourierOp) -> Result<Blocks> {
    check_state(state, op)?;
    let yd = op.apply(&state.d)?;
    Ok(step3_raw(state, &yd))
}

fn step3_raw(state: &SdmmState, yd: &ComplexMatrix) -> Blocks {
    let b1 = &state.b1 + &state.d - &state.w1;
    let b2 = &state.b2 + &state.d - &state.w2;
    let b3 = &state.b3 + yd - &state.w3;
    (b1, b2, b3)
}

/// Final iterate, full trace and the state it was taken from.
#[derive(Debug, Clone)]
pub struct Solution {
    pub coefficients: SpectralCoefficients,
    pub trace: SolverTrace,
    pub state: SdmmState,
}

impl Solution {
    pub fn converged(&self) -> bool {
        self.trace.terminated_by == Termination::Tol
    }
}

/// Runs SDMM until the relative change of `D` and all three feasibility
/// residuals fall below tolerance, or `max_iters` is hit.
pub fn solve(
    b: &Measurements,
    op: &PartialFourierOp,
    cfg: &SolverConfig,
    init: Option<&SpectralCoefficients>,
) -> Result<(SpectralCoefficients, SolverTrace)> {
    let sol = solve_full(b, op, cfg, init)?;
    Ok((sol.coefficients, sol.trace))
}

pub fn solve_full(
    b: &Measurements,
    op: &PartialFourierOp,
    cfg: &SolverConfig,
    init: Option<&SpectralCoefficients>,
) -> Result<Solution> {
    cfg.validate()?;
    let defect = op.orthonormality_defect();
    if defect > ORTHONORMALITY_TOLERANCE {
        return Err(Error::InvalidArgument(format!(
            "operator columns are not orthonormal (defect {defect:e})"
        )));
    }
    let state = SdmmState::initial(b, op, init)?;
    run(state, b, op, cfg)
}

fn diverged(iteration: usize, records: Vec<IterationRecord>) -> Error {
    Error::Diverged {
        iteration,
        trace: Box::new(SolverTrace { records, terminated_by: Termination::Diverged }),
    }
}

fn run(
    mut state: SdmmState,
    b: &Measurements,
    op: &PartialFourierOp,
    cfg: &SolverConfig,
) -> Result<Solution> {
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut terminated_by = Termination::MaxIters;

    for s in 1..=cfg.max_iters {
        let d_next = step1_raw(&state, op)?;
        if d_next.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(diverged(s, records));
        }
        let previous = state.d.norm();
        let change = (&d_next - &state.d).norm();
        let rel_change = if previous > 0.0 { change / previous } else { change };
        state.d = d_next;
        let yd = op.apply(&state.d)?;

        let (w1, w2, w3) = match step2_raw(&state, &yd, cfg, b) {
            Ok(w) => w,
            Err(Error::NonFinite { .. } | Error::SvdFailed) => return Err(diverged(s, records)),
            Err(e) => return Err(e),
        };
        state.w1 = w1;
        state.w2 = w2;
        state.w3 = w3;
        let (b1, b2, b3) = step3_raw(&state, &yd);
        state.b1 = b1;
        state.b2 = b2;
        state.b3 = b3;
        state.s = s;

        let singular = match singular_values(&state.d) {
            Ok(sv) => sv,
            Err(Error::NonFinite { .. } | Error::SvdFailed) => return Err(diverged(s, records)),
            Err(e) => return Err(e),
        };
        let sigma_max = singular.first().copied().unwrap_or(0.0);
        let rank_estimate = singular
            .iter()
            .filter(|&&x| sigma_max > 0.0 && x > RANK_TOLERANCE * sigma_max)
            .count();
        let block = block_residuals(&state.d, &yd, &state);
        let record = IterationRecord {
            iter: s,
            objective: objective_from_parts(&singular, &state.d, &yd, b, cfg),
            residual: block.iter().map(|r| r * r).sum::<f64>().sqrt(),
            block_residuals: block,
            rel_change,
            rank_estimate,
        };
        let finite = record.objective.is_finite()
            && record.residual.is_finite()
            && record.rel_change.is_finite();
        records.push(record);
        if !finite {
            return Err(diverged(s, records));
        }

        let bound = cfg.tol * (1.0 + state.d.norm());
        if rel_change <= cfg.tol && block.iter().all(|&r| r <= bound) {
            terminated_by = Termination::Tol;
            break;
        }
    }

    Ok(Solution {
        coefficients: state.coefficients(op),
        trace: SolverTrace { records, terminated_by },
        state,
    })
}

/// Real part of `Y D` as a frame, plus the Frobenius norm of the discarded
/// imaginary part.
pub fn reconstruct(d: &SpectralCoefficients, op: &PartialFourierOp) -> Result<(RfFrame, f64)> {
    let x = op.synthesize(d)?;
    let imag = x.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
    let support = op.support();
    let frame = RfFrame::new(x.map(|z| z.re), support.fs(), support.fc())?;
    Ok((frame, imag))
}
