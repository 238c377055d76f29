//! Fixed-step explicit integrators recorded on the tape, so gradients flow
//! through every step of the unrolled solve.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// Tolerance on `T / tau` being integral.
pub const STEP_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Euler,
    Rk4,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Euler => "euler",
            Method::Rk4 => "rk4",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    /// Total integration time `T`.
    pub time: f64,
    /// Step size `tau`.
    pub step_size: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Euler,
            time: 1.0,
            step_size: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn new(method: Method, time: f64, step_size: f64) -> Self {
        Self {
            method,
            time,
            step_size,
        }
    }

    /// Number of steps `round(T / tau)`; this is the implicit layer count.
    pub fn steps(&self) -> Result<usize> {
        if !(self.time > 0.0 && self.time.is_finite()) {
            return Err(Error::Config(format!("integration time must be positive, got {}", self.time)));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!("step size must be positive, got {}", self.step_size)));
        }
        let ratio = self.time / self.step_size;
        let steps = ratio.round();
        if (ratio - steps).abs() > STEP_TOLERANCE * ratio.max(1.0) || steps < 1.0 {
            return Err(Error::Config(format!(
                "T / tau = {} / {} = {ratio} is not a positive integer",
                self.time, self.step_size
            )));
        }
        Ok(steps as usize)
    }
}

/// Right-hand side `f(t, X)` evaluated on a tape.
pub trait Rhs {
    fn eval(&mut self, tape: &mut Tape, t: f64, x: Var) -> Result<Var>;
}

impl<F> Rhs for F
where
    F: FnMut(&mut Tape, f64, Var) -> Result<Var>,
{
    fn eval(&mut self, tape: &mut Tape, t: f64, x: Var) -> Result<Var> {
        self(tape, t, x)
    }
}

fn axpy(tape: &mut Tape, x: Var, alpha: f64, k: Var) -> Result<Var> {
    let scaled = tape.scale(k, alpha);
    tape.add(x, scaled)
}

/// `X + tau f(t, X)`
pub fn euler_step(tape: &mut Tape, f: &mut impl Rhs, t: f64, x: Var, tau: f64) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {tau}")));
    }
    let k1 = f.eval(tape, t, x)?;
    axpy(tape, x, tau, k1)
}

/// Classical four-stage Runge-Kutta.
pub fn rk4_step(tape: &mut Tape, f: &mut impl Rhs, t: f64, x: Var, tau: f64) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {tau}")));
    }
    let half = 0.5 * tau;
    let k1 = f.eval(tape, t, x)?;
    let x2 = axpy(tape, x, half, k1)?;
    let k2 = f.eval(tape, t + half, x2)?;
    let x3 = axpy(tape, x, half, k2)?;
    let k3 = f.eval(tape, t + half, x3)?;
    let x4 = axpy(tape, x, tau, k3)?;
    let k4 = f.eval(tape, t + tau, x4)?;

    let k23 = tape.add(k2, k3)?;
    let k23 = tape.scale(k23, 2.0);
    let sum = tape.add(k1, k23)?;
    let sum = tape.add(sum, k4)?;
    axpy(tape, x, tau / 6.0, sum)
}

/// Integrates from `t = 0` to `T` in `round(T / tau)` steps.
///
/// With `record_on_tape` false the steps are evaluated with gradient
/// tracking disabled.
pub fn integrate(
    tape: &mut Tape,
    f: &mut impl Rhs,
    x0: Var,
    cfg: &SolverConfig,
    record_on_tape: bool,
) -> Result<Var> {
    let steps = cfg.steps()?;
    let was_enabled = tape.grad_enabled();
    if !record_on_tape {
        tape.set_grad_enabled(false);
    }
    let result = run_steps(tape, f, x0, cfg, steps);
    tape.set_grad_enabled(was_enabled);
    result
}

fn run_steps(tape: &mut Tape, f: &mut impl Rhs, x0: Var, cfg: &SolverConfig, steps: usize) -> Result<Var> {
    let tau = cfg.step_size;
    let mut x = x0;
    for step in 0..steps {
        let t = step as f64 * tau;
        x = match cfg.method {
            Method::Euler => euler_step(tape, f, t, x, tau)?,
            Method::Rk4 => rk4_step(tape, f, t, x, tau)?,
        };
        if !tape.value(x).is_finite() {
            return Err(Error::Divergence { step });
        }
    }
    Ok(x)
}
