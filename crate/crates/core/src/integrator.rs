//! Dormand–Prince 5(4) with Hairer's continuous extension.
//!
//! The integrator is autonomous (`ẏ = F(y)`); time only enters through the
//! step bookkeeping. Error control can be restricted to a leading block of the
//! state so that variational equations ride along on the state's steps.

use nalgebra::DVector;

use crate::error::{Error, Result};

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];

/// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] =
    [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

/// Dense-output weights.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Adaptive step controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub h_min: f64,
    /// Only the first `error_dims` components enter the error norm.
    pub error_dims: usize,
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone)]
pub struct Step {
    pub t0: f64,
    pub h: f64,
    end: f64,
    pub y0: DVector<f64>,
    pub y1: DVector<f64>,
    /// `F(y1)`, reused as the first stage of the next step.
    pub f1: DVector<f64>,
    /// `F(y0)`, kept so sub-steps from `y0` can be recomputed.
    pub f0: DVector<f64>,
    dense: [DVector<f64>; 5],
}

impl Step {
    /// End time; exactly the requested end when the step was clipped to it.
    pub fn t1(&self) -> f64 {
        self.end
    }

    /// Fourth-order interpolant on `[t0, t0 + h]`.
    pub fn dense(&self, t: f64) -> DVector<f64> {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let [r1, r2, r3, r4, r5] = &self.dense;
        r1 + (r2 + (r3 + (r4 + r5 * s1) * s) * s1) * s
    }
}

/// Take a single step of size `h` from `y0` with known slope `f0 = F(y0)`.
/// Returns the step and its scaled error estimate (accept when `≤ 1`).
pub fn try_step<F>(
    rhs: &F,
    t0: f64,
    y0: &DVector<f64>,
    f0: &DVector<f64>,
    h: f64,
    control: &StepControl,
) -> Result<(Step, f64)>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
    k.push(f0.clone());
    #[allow(clippy::needless_range_loop)]
    for stage in 1..7 {
        let mut y = y0.clone();
        for (j, kj) in k.iter().enumerate() {
            let a = A[stage][j];
            if a != 0.0 {
                y.axpy(h * a, kj, 1.0);
            }
        }
        if stage == 6 {
            // Stage 7 is evaluated at the solution itself (FSAL).
            let f1 = rhs(&y)?;
            k.push(f1);
            let y1 = y;
            let mut err = DVector::zeros(y0.len());
            for (j, kj) in k.iter().enumerate() {
                if E[j] != 0.0 {
                    err.axpy(h * E[j], kj, 1.0);
                }
            }
            let n = control.error_dims.min(y0.len()).max(1);
            let mut sum = 0.0;
            for i in 0..n {
                let scale = control.atol + control.rtol * y0[i].abs().max(y1[i].abs());
                let e = err[i] / scale;
                sum += e * e;
            }
            let norm = (sum / n as f64).sqrt();

            let diff = &y1 - y0;
            let bspl = &k[0] * h - &diff;
            let r4 = &diff - &k[6] * h - &bspl;
            let mut r5 = DVector::zeros(y0.len());
            for (j, kj) in k.iter().enumerate() {
                if D[j] != 0.0 {
                    r5.axpy(h * D[j], kj, 1.0);
                }
            }
            let step = Step {
                t0,
                h,
                end: t0 + h,
                y0: y0.clone(),
                y1,
                f1: k[6].clone(),
                f0: f0.clone(),
                dense: [y0.clone(), diff, bspl, r4, r5],
            };
            return Ok((step, norm));
        }
        k.push(rhs(&y)?);
    }
    unreachable!("the tableau has seven stages")
}

/// Recompute the state at `t ∈ [t0, t0 + h]` by a direct Runge–Kutta step
/// from the start of `step`; more accurate than the interpolant.
pub fn substep<F>(rhs: &F, step: &Step, t: f64, control: &StepControl) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let h = t - step.t0;
    if h == 0.0 {
        return Ok(step.y0.clone());
    }
    if t == step.t1() {
        return Ok(step.y1.clone());
    }
    Ok(try_step(rhs, step.t0, &step.y0, &step.f0, h, control)?.0.y1)
}

fn next_size(h: f64, err: f64) -> f64 {
    let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
    h * factor
}

/// Adaptive driver holding the current point and the proposed next step size.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub t: f64,
    pub y: DVector<f64>,
    pub f: DVector<f64>,
    pub h: f64,
    pub control: StepControl,
}

impl Stepper {
    pub fn new<F>(rhs: &F, t: f64, y: DVector<f64>, control: StepControl) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    {
        let f = rhs(&y)?;
        let h = initial_step(&y, &f, &control);
        Ok(Stepper { t, y, f, h, control })
    }

    /// Attempt steps until one is accepted, never stepping past `t_end`.
    /// The stepper is not advanced; call [`Stepper::accept`] with the result.
    pub fn propose<F>(&mut self, rhs: &F, t_end: f64) -> Result<Step>
    where
        F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    {
        loop {
            let remaining = t_end - self.t;
            let mut h = self.h.min(self.control.h_max);
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            let (mut step, err) = try_step(rhs, self.t, &self.y, &self.f, h, &self.control)?;
            if err <= 1.0 && step.y1.iter().all(|x| x.is_finite()) {
                if last {
                    step.end = t_end;
                } else {
                    self.h = next_size(h, err);
                }
                return Ok(step);
            }
            let shrunk = if err.is_finite() { next_size(h, err).min(0.9 * h) } else { 0.25 * h };
            if shrunk < self.control.h_min {
                return Err(Error::StepUnderflow { t: self.t, h: shrunk });
            }
            self.h = shrunk;
        }
    }

    pub fn accept(&mut self, step: &Step) {
        self.t = step.t1();
        self.y = step.y1.clone();
        self.f = step.f1.clone();
    }
}

/// Hairer's starting-step heuristic, using only the explicit-Euler estimate.
fn initial_step(y: &DVector<f64>, f: &DVector<f64>, control: &StepControl) -> f64 {
    let n = control.error_dims.min(y.len()).max(1);
    let mut dy = 0.0;
    let mut df = 0.0;
    for i in 0..n {
        let scale = control.atol + control.rtol * y[i].abs();
        dy += (y[i] / scale).powi(2);
        df += (f[i] / scale).powi(2);
    }
    let (dy, df) = ((dy / n as f64).sqrt(), (df / n as f64).sqrt());
    let h = if dy < 1e-5 || df < 1e-5 { 1e-6 } else { 0.01 * dy / df };
    h.clamp(control.h_min, control.h_max)
}

/// Integrate from `t0` to `t1` without event detection.
pub fn integrate<F>(rhs: &F, t0: f64, y0: DVector<f64>, t1: f64, control: StepControl) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    if t1 <= t0 {
        return Ok(y0);
    }
    let mut stepper = Stepper::new(rhs, t0, y0, control)?;
    while stepper.t < t1 {
        let step = stepper.propose(rhs, t1)?;
        stepper.accept(&step);
    }
    Ok(stepper.y)
}
