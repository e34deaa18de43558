//! Weak-constraint 4D-Var baseline: the classical variance-weighted
//! objective minimized with Levenberg-Marquardt, used as the reference the
//! Gauss-Newton iteration is compared against.

use nalgebra::DVector;

use crate::blocklin::{assemble_normal, jacobian, residual, solve_normal, LinearMap};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::obs::{ObservationOperator, ObservationSet};
use crate::window::WindowState;

/// Variances of the weak-constraint objective
/// `1/2 ( ||y - H u||^2 / r_var + ||G(u)||^2 / q_var )`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WcConfig {
    /// Model-error variance `q`.
    pub q_var: f64,
    /// Observation-error variance `r`.
    pub r_var: f64,
}

impl WcConfig {
    pub fn new(q_var: f64, r_var: f64) -> Result<Self> {
        if q_var <= 0.0 || r_var <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "variances must be positive, got q_var = {q_var}, r_var = {r_var}"
            )));
        }
        Ok(Self { q_var, r_var })
    }
}

/// Levenberg-Marquardt controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub lambda0: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Converged when the gradient norm falls below `grad_tol (1 + cost)`.
    pub grad_tol: f64,
    /// Converged when an accepted step is shorter than this.
    pub step_tol: f64,
    pub max_iter: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            lambda0: 1e-3,
            lambda_up: 10.0,
            lambda_down: 0.1,
            grad_tol: 1e-8,
            step_tol: 1e-12,
            max_iter: 200,
        }
    }
}

/// Why the minimization stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmTermination {
    GradTol,
    StepTol,
    MaxIter,
    /// The damping grew past any useful value without finding a decrease.
    Stalled,
}

/// Record of one minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct LmRun {
    /// Objective value after each accepted step (the first entry is the
    /// starting cost).
    pub cost_history: Vec<f64>,
    pub final_state: WindowState,
    pub grad_norm: f64,
    pub lambda_final: f64,
    pub iterations: usize,
    pub termination: LmTermination,
}

impl LmRun {
    pub fn converged(&self) -> bool {
        matches!(self.termination, LmTermination::GradTol | LmTermination::StepTol)
    }

    pub fn final_cost(&self) -> f64 {
        *self.cost_history.last().expect("history never empty")
    }
}

/// The stacked weighted residual whose half squared norm is the objective:
/// observation rows `(y - H u) / sqrt(r_var)` first, then model rows
/// `G(u) / sqrt(q_var)`.
pub fn wc_residual(
    model: &ModelSpec,
    u: &WindowState,
    y: &ObservationSet,
    h: &ObservationOperator,
    wc: &WcConfig,
) -> Result<DVector<f64>> {
    let obs = (&y.values - h.apply_h(u)?) / wc.r_var.sqrt();
    let g = residual(model, u)? / wc.q_var.sqrt();
    let mut out = DVector::zeros(obs.len() + g.len());
    out.rows_mut(0, obs.len()).copy_from(&obs);
    out.rows_mut(obs.len(), g.len()).copy_from(&g);
    Ok(out)
}

fn half_norm_squared(v: &DVector<f64>) -> f64 {
    0.5 * v.norm_squared()
}

/// Gradient of the objective:
/// `G'^T G(u) / q_var - H^T (y - H u) / r_var`, stacked over the window.
fn wc_gradient(
    model: &ModelSpec,
    u: &WindowState,
    y: &ObservationSet,
    h: &ObservationOperator,
    wc: &WcConfig,
) -> Result<DVector<f64>> {
    let j = jacobian(model, u);
    let g = residual(model, u)?;
    let mismatch = &y.values - h.apply_h(u)?;
    Ok(j.mtv(&g) / wc.q_var - h.apply_ht(&mismatch)?.stacked() / wc.r_var)
}

/// Minimize the weak-constraint objective with Levenberg-Marquardt. The
/// Gauss-Newton normal matrix `J^T J = (G'^T G' + (q_var/r_var) H^T H) /
/// q_var` is damped with `lambda I`; steps are accepted only on a cost
/// decrease.
pub fn lm_minimize(
    model: &ModelSpec,
    wc: &WcConfig,
    lm: &LmConfig,
    y: &ObservationSet,
    h: &ObservationOperator,
    u0: &WindowState,
) -> Result<LmRun> {
    const LAMBDA_MAX: f64 = 1e16;
    const LAMBDA_MIN: f64 = 1e-12;

    let mut u = u0.clone();
    let mut cost = half_norm_squared(&wc_residual(model, &u, y, h, wc)?);
    let mut cost_history = vec![cost];
    let mut lambda = lm.lambda0;
    let mut grad_norm = f64::NAN;
    let mut termination = LmTermination::MaxIter;
    let mut iterations = 0;

    for _ in 0..lm.max_iter {
        iterations += 1;
        let grad = wc_gradient(model, &u, y, h, wc)?;
        grad_norm = grad.norm();
        if grad_norm <= lm.grad_tol * (1.0 + cost) {
            termination = LmTermination::GradTol;
            break;
        }
        let j = jacobian(model, &u);
        let base = assemble_normal(&j, wc.q_var / wc.r_var, h);

        // Inner damping loop: raise lambda until a step decreases the cost.
        let mut accepted = false;
        while lambda <= LAMBDA_MAX {
            let mut a = base.clone();
            a.scale(1.0 / wc.q_var);
            a.add_diagonal_shift(lambda);
            let step = match solve_normal(&a, &grad) {
                Ok(dx) => dx,
                Err(Error::IllPosed { .. }) => {
                    lambda *= lm.lambda_up;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let candidate =
                WindowState::from_stacked(u.block_dim(), u.num_steps(), &(u.stacked() - &step));
            let cand_cost = match wc_residual(model, &candidate, y, h, wc) {
                Ok(r) => half_norm_squared(&r),
                Err(Error::Diverged { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            if cand_cost < cost {
                u = candidate;
                cost = cand_cost;
                cost_history.push(cost);
                lambda = (lambda * lm.lambda_down).max(LAMBDA_MIN);
                accepted = true;
                if step.norm() < lm.step_tol {
                    termination = LmTermination::StepTol;
                }
                break;
            }
            lambda *= lm.lambda_up;
        }
        if !accepted {
            termination = LmTermination::Stalled;
            break;
        }
        if termination == LmTermination::StepTol {
            break;
        }
    }

    Ok(LmRun {
        cost_history,
        final_state: u,
        grad_norm,
        lambda_final: lambda,
        iterations,
        termination,
    })
}
