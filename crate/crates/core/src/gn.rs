//! The Gauss-Newton assimilation iteration: the step itself, the doubling
//! search for the observation weight `alpha`, per-iteration condition
//! monitoring, the theoretical error bound, and the reported error metrics.

use nalgebra::DVector;

use crate::blocklin::{
    assemble_normal, jacobian, opnorm_inverse_factored, opnorm_solve_jt_factored, residual,
    solve_normal, LinearMap, NORM_MAX_ITER, NORM_REL_TOL,
};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::obs::{initial_guess, ObservationOperator, ObservationSet};
use crate::window::WindowState;

/// Doubling past this value gives up on the noise-free alpha search.
pub const ALPHA_SEARCH_CAP: f64 = 1e12;

/// How the observation weight is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaChoice {
    Fixed(f64),
    /// Doubling search from `alpha0` until the condition checks pass at the
    /// initial guess.
    Auto,
}

/// Configuration of one Gauss-Newton run.
#[derive(Debug, Clone, PartialEq)]
pub struct GnConfig {
    pub alpha: AlphaChoice,
    /// Starting value of the doubling search.
    pub alpha0: f64,
    /// Upper bound on the initial error norm; `None` measures `||e_0||`
    /// against the truth (twin experiments only).
    pub c: Option<f64>,
    /// Noise-free termination: stop when the step norm drops below this.
    pub step_tol: f64,
    /// Noisy mode runs exactly this many iterations.
    pub max_iter: usize,
    /// Check the assumption conditions every iteration.
    pub monitor: bool,
    /// Relative tolerance of the norm estimators used by the checks.
    pub norm_rel_tol: f64,
    /// Safety cap on noise-free iterations.
    pub safety_max_iter: usize,
}

impl GnConfig {
    pub fn noisefree() -> Self {
        Self {
            alpha: AlphaChoice::Auto,
            alpha0: 0.001,
            c: None,
            step_tol: 1e-14,
            max_iter: 20,
            monitor: true,
            norm_rel_tol: NORM_REL_TOL,
            safety_max_iter: 200,
        }
    }

    /// Noisy mode: fixed iteration count (the reference experiments use 20
    /// for Lorenz 63 and 70 for Lorenz 96).
    pub fn noisy(max_iter: usize) -> Self {
        Self {
            max_iter,
            ..Self::noisefree()
        }
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Step norm fell below `step_tol` (noise-free mode).
    StepTol,
    /// Iteration budget exhausted (the regular noisy-mode stop).
    MaxIter,
    /// A monitored assumption condition failed at some iterate.
    ConditionViolated,
    /// The normal equations could not be solved reliably.
    IllPosed,
}

/// The error metrics of one iterate: cost `||G(u)|| + alpha ||y - H u||`,
/// total error, observed-component error, unobserved-component error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub cost: f64,
    pub err_total: f64,
    pub err_obs: f64,
    pub err_unobs: f64,
}

/// Per-iteration diagnostics. `step_norm` is the norm of the step taken from
/// this iterate (zero on the terminal record).
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub cost: f64,
    pub err_total: Option<f64>,
    pub err_obs: Option<f64>,
    pub err_unobs: Option<f64>,
    pub step_norm: f64,
    pub cond1_lhs: Option<f64>,
    pub cond1_rhs: Option<f64>,
    pub cond2_lhs: Option<f64>,
    pub cond2_rhs: Option<f64>,
    pub bound: Option<f64>,
}

/// Full record of one Gauss-Newton run.
#[derive(Debug, Clone, PartialEq)]
pub struct GnRunRecord {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub final_state: WindowState,
    pub alpha_used: f64,
    pub c_used: f64,
    /// Reason attached to an `IllPosed` termination, if any.
    pub ill_posed_reason: Option<String>,
}

impl GnRunRecord {
    pub fn final_err_total(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.err_total)
    }

    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }
}

/// Outcome of the alpha doubling search, with the post-search state of both
/// condition checks (the noisy search's loop guard is conjunctive, so one of
/// them may still be violated at return; surfaced here rather than hidden).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSearch {
    pub alpha: f64,
    pub doublings: u32,
    pub cond1_satisfied: bool,
    pub cond2_satisfied: bool,
}

/// The limsup error bound `alpha c / (1 - alpha)` for noisy observations.
pub fn theoretical_bound(alpha: f64, c: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "theoretical bound needs 0 < alpha < 1, got {alpha}"
        )));
    }
    if c <= 0.0 {
        return Err(Error::InvalidConfig(format!("bound needs c > 0, got {c}")));
    }
    Ok(alpha * c / (1.0 - alpha))
}

/// Cost of Equation-43 form: a sum of norms, not of squared norms. This is
/// the quantity the convergence plots track, distinct from the minimized
/// objective.
pub fn cost(
    model: &ModelSpec,
    u: &WindowState,
    y: &ObservationSet,
    h: &ObservationOperator,
    alpha: f64,
) -> Result<f64> {
    let g = residual(model, u)?;
    let mismatch = h.apply_h(u)? - &y.values;
    Ok(g.norm() + alpha * mismatch.norm())
}

/// Cost plus the three truth-relative errors of one iterate.
pub fn error_metrics(
    model: &ModelSpec,
    u: &WindowState,
    truth: &WindowState,
    y: &ObservationSet,
    h: &ObservationOperator,
    alpha: f64,
) -> Result<Metrics> {
    let err_total = truth.distance(u);
    let obs_diff = h.apply_h(truth)? - h.apply_h(u)?;
    let err_obs = obs_diff.norm();
    // (I - H^T H) projects onto the unobserved components.
    let diff_stacked = truth.stacked() - u.stacked();
    let projected = h
        .apply_hth(&WindowState::from_stacked(
            u.block_dim(),
            u.num_steps(),
            &diff_stacked,
        ))?
        .stacked();
    let err_unobs = (diff_stacked - projected).norm();
    Ok(Metrics {
        cost: cost(model, u, y, h, alpha)?,
        err_total,
        err_obs,
        err_unobs,
    })
}

/// One Gauss-Newton step:
/// `u - (G'^T G' + alpha H^T H)^{-1} (G'^T G + alpha H^T (H u - y))`.
pub fn gn_step(
    model: &ModelSpec,
    u: &WindowState,
    y: &ObservationSet,
    h: &ObservationOperator,
    alpha: f64,
) -> Result<WindowState> {
    assert!(alpha > 0.0);
    let j = jacobian(model, u);
    let r = residual(model, u)?;
    let mismatch = h.apply_h(u)? - &y.values;
    let grad = j.mtv(&r) + h.apply_ht(&mismatch)?.stacked() * alpha;
    let a = assemble_normal(&j, alpha, h);
    let dx = solve_normal(&a, &grad)?;
    Ok(WindowState::from_stacked(
        u.block_dim(),
        u.num_steps(),
        &(u.stacked() - dx),
    ))
}

fn cond1_threshold(lipschitz: f64, c: f64) -> f64 {
    if lipschitz > 0.0 {
        1.0 / (lipschitz * c)
    } else {
        f64::INFINITY
    }
}

fn satisfied(lhs: f64, rhs: f64, rel_tol: f64) -> bool {
    // A check fails only when the estimate exceeds the threshold by more
    // than the estimator tolerance.
    lhs <= rhs * (1.0 + rel_tol)
}

/// Doubling search for `alpha` with noise-free observations: doubles from
/// `alpha0` until `||A^{-1} G'^T|| <= (L1 c)^{-1}` holds at the initial
/// guess.
pub fn find_alpha_noisefree(
    model: &ModelSpec,
    u0: &WindowState,
    h: &ObservationOperator,
    l1: f64,
    c: f64,
    alpha0: f64,
) -> Result<AlphaSearch> {
    assert!(c > 0.0 && alpha0 > 0.0);
    let j = jacobian(model, u0);
    let base = assemble_normal(&j, 0.0, h);
    let threshold = cond1_threshold(l1, c);
    let mut alpha = alpha0;
    let mut doublings = 0;
    let mut warm: Option<DVector<f64>> = None;
    loop {
        let mut a = base.clone();
        a.add_observation_weight(alpha, h);
        let attempt = a.factor().and_then(|f| {
            opnorm_solve_jt_factored(&j, &a, &f, NORM_REL_TOL, NORM_MAX_ITER, warm.as_ref())
        });
        match attempt {
            Ok((est, v)) => {
                if satisfied(est.value, threshold, est.rel_tol) {
                    return Ok(AlphaSearch {
                        alpha,
                        doublings,
                        cond1_satisfied: true,
                        cond2_satisfied: true,
                    });
                }
                warm = Some(v);
            }
            Err(Error::IllPosed { reason }) => {
                return Err(Error::NoAlphaFound {
                    reason: format!("ill-posed at alpha = {alpha:.3e}: {reason}"),
                })
            }
            Err(e) => return Err(e),
        }
        alpha *= 2.0;
        doublings += 1;
        if alpha > ALPHA_SEARCH_CAP {
            return Err(Error::NoAlphaFound {
                reason: format!("first condition still violated at alpha = {alpha:.3e}"),
            });
        }
    }
}

/// Doubling search for `alpha` with noisy observations. Faithful to the
/// published loop guard: doubling continues only while BOTH conditions are
/// violated, so the returned alpha may satisfy just one of them; the
/// `AlphaSearch` flags report which. Candidates above 1 are rejected.
pub fn find_alpha_noisy(
    model: &ModelSpec,
    u0: &WindowState,
    h: &ObservationOperator,
    l2: f64,
    c: f64,
    ht_eta_norm: f64,
    alpha0: f64,
) -> Result<AlphaSearch> {
    assert!(c > 0.0 && alpha0 > 0.0 && ht_eta_norm >= 0.0);
    let j = jacobian(model, u0);
    let base = assemble_normal(&j, 0.0, h);
    let thr1 = cond1_threshold(l2, c);
    let thr2 = c / 2.0;
    let mut alpha = alpha0;
    let mut doublings = 0;
    let mut warm1: Option<DVector<f64>> = None;
    let mut warm2: Option<DVector<f64>> = None;
    loop {
        let mut a = base.clone();
        a.add_observation_weight(alpha, h);
        let attempt = a.factor().and_then(|f| {
            let (e1, v1) =
                opnorm_solve_jt_factored(&j, &a, &f, NORM_REL_TOL, NORM_MAX_ITER, warm1.as_ref())?;
            let (e2, v2) =
                opnorm_inverse_factored(&a, &f, NORM_REL_TOL, NORM_MAX_ITER, warm2.as_ref())?;
            Ok((e1, v1, e2, v2))
        });
        match attempt {
            Ok((e1, v1, e2, v2)) => {
                let cond1 = satisfied(e1.value, thr1, e1.rel_tol);
                let cond2 = satisfied(ht_eta_norm * e2.value, thr2, e2.rel_tol);
                if cond1 || cond2 {
                    if alpha > 1.0 {
                        return Err(Error::NoAlphaFound {
                            reason: format!("candidate alpha = {alpha:.3e} exceeds 1"),
                        });
                    }
                    return Ok(AlphaSearch {
                        alpha,
                        doublings,
                        cond1_satisfied: cond1,
                        cond2_satisfied: cond2,
                    });
                }
                warm1 = Some(v1);
                warm2 = Some(v2);
            }
            Err(Error::IllPosed { reason }) => {
                return Err(Error::NoAlphaFound {
                    reason: format!("ill-posed at alpha = {alpha:.3e}: {reason}"),
                })
            }
            Err(e) => return Err(e),
        }
        alpha *= 2.0;
        doublings += 1;
        if alpha > 1.0 {
            return Err(Error::NoAlphaFound {
                reason: "both conditions still violated at alpha > 1".into(),
            });
        }
    }
}

/// Run the Gauss-Newton iteration from the standard initial guess.
///
/// Noise-free mode (`gamma = 0`) iterates until the step norm drops below
/// `step_tol` (with a safety cap); noisy mode runs exactly `max_iter` steps.
/// With monitoring on, the assumption conditions are evaluated at every
/// iterate and a violation terminates the run. Error metrics are filled when
/// the truth is supplied.
pub fn run(
    model: &ModelSpec,
    config: &GnConfig,
    y: &ObservationSet,
    h: &ObservationOperator,
    u_b: &WindowState,
    truth: Option<&WindowState>,
) -> Result<GnRunRecord> {
    let u0 = initial_guess(y, h, u_b)?;
    let noisy = y.gamma > 0.0;
    let lip = model.lipschitz_g();
    let c = match config.c {
        Some(c) if c > 0.0 => c,
        Some(c) => return Err(Error::InvalidConfig(format!("c must be positive, got {c}"))),
        None => truth.map(|t| u0.distance(t)).ok_or_else(|| {
            Error::InvalidConfig("c must be given when no truth is available".into())
        })?,
    };
    let alpha = match config.alpha {
        AlphaChoice::Fixed(a) => {
            if a <= 0.0 {
                return Err(Error::InvalidConfig(format!("alpha must be positive, got {a}")));
            }
            if noisy && a >= 1.0 {
                return Err(Error::InvalidConfig(format!(
                    "noisy mode requires alpha < 1, got {a}"
                )));
            }
            a
        }
        AlphaChoice::Auto => {
            if noisy {
                find_alpha_noisy(model, &u0, h, lip, c, y.ht_eta_norm, config.alpha0)?.alpha
            } else {
                find_alpha_noisefree(model, &u0, h, lip, c, config.alpha0)?.alpha
            }
        }
    };
    let bound = if alpha < 1.0 {
        theoretical_bound(alpha, c).ok()
    } else {
        None
    };
    let thr1 = cond1_threshold(lip, c);
    let thr2 = c / 2.0;
    let cap = if noisy {
        config.max_iter
    } else {
        config.safety_max_iter
    };

    let mut u = u0;
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut termination = Termination::MaxIter;
    let mut ill_posed_reason = None;
    let mut warm1: Option<DVector<f64>> = None;
    let mut warm2: Option<DVector<f64>> = None;
    let mut step_converged = false;

    for k in 0..=cap {
        let j = jacobian(model, &u);
        let r = residual(model, &u)?;
        let mismatch = h.apply_h(&u)? - &y.values;
        let mut rec = IterationRecord {
            k,
            cost: r.norm() + alpha * mismatch.norm(),
            err_total: None,
            err_obs: None,
            err_unobs: None,
            step_norm: 0.0,
            cond1_lhs: None,
            cond1_rhs: None,
            cond2_lhs: None,
            cond2_rhs: None,
            bound,
        };
        if let Some(t) = truth {
            let m = error_metrics(model, &u, t, y, h, alpha)?;
            rec.err_total = Some(m.err_total);
            rec.err_obs = Some(m.err_obs);
            rec.err_unobs = Some(m.err_unobs);
        }

        let a = assemble_normal(&j, alpha, h);
        let fact = match a.factor() {
            Ok(f) => f,
            Err(Error::IllPosed { reason }) => {
                records.push(rec);
                termination = Termination::IllPosed;
                ill_posed_reason = Some(reason);
                break;
            }
            Err(e) => return Err(e),
        };

        let mut violated = false;
        if config.monitor {
            let checks = (|| -> Result<bool> {
                let (e1, v1) = opnorm_solve_jt_factored(
                    &j,
                    &a,
                    &fact,
                    config.norm_rel_tol,
                    NORM_MAX_ITER,
                    warm1.as_ref(),
                )?;
                rec.cond1_lhs = Some(e1.value);
                rec.cond1_rhs = Some(thr1);
                warm1 = Some(v1);
                let mut bad = !satisfied(e1.value, thr1, config.norm_rel_tol);
                if noisy {
                    let (e2, v2) = opnorm_inverse_factored(
                        &a,
                        &fact,
                        config.norm_rel_tol,
                        NORM_MAX_ITER,
                        warm2.as_ref(),
                    )?;
                    rec.cond2_lhs = Some(y.ht_eta_norm * e2.value);
                    rec.cond2_rhs = Some(thr2);
                    warm2 = Some(v2);
                    bad = bad || !satisfied(y.ht_eta_norm * e2.value, thr2, config.norm_rel_tol);
                }
                Ok(bad)
            })();
            match checks {
                Ok(bad) => violated = bad,
                Err(Error::IllPosed { reason }) => {
                    records.push(rec);
                    termination = Termination::IllPosed;
                    ill_posed_reason = Some(reason);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if violated {
            records.push(rec);
            termination = Termination::ConditionViolated;
            break;
        }
        if step_converged {
            records.push(rec);
            termination = Termination::StepTol;
            break;
        }
        if k == cap {
            records.push(rec);
            termination = Termination::MaxIter;
            break;
        }

        let grad = j.mtv(&r) + h.apply_ht(&mismatch)?.stacked() * alpha;
        let dx = match a.solve_with(&fact, &grad) {
            Ok(dx) => dx,
            Err(Error::IllPosed { reason }) => {
                records.push(rec);
                termination = Termination::IllPosed;
                ill_posed_reason = Some(reason);
                break;
            }
            Err(e) => return Err(e),
        };
        rec.step_norm = dx.norm();
        let small = rec.step_norm < config.step_tol;
        records.push(rec);
        u = WindowState::from_stacked(u.block_dim(), u.num_steps(), &(u.stacked() - dx));
        if !noisy && small {
            step_converged = true;
        }
    }

    Ok(GnRunRecord {
        records,
        termination,
        final_state: u,
        alpha_used: alpha,
        c_used: c,
        ill_posed_reason,
    })
}
