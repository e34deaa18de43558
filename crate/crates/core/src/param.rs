//! Joint state and parameter estimation by alternating a Gauss-Newton state
//! update with a linear least-squares parameter update.

use nalgebra::{DMatrix, DVector};

use crate::blocklin::residual;
use crate::error::{Error, Result};
use crate::gn::{self, gn_step, AlphaChoice, GnConfig, GnRunRecord};
use crate::model::ModelSpec;
use crate::obs::{initial_guess, ObservationOperator, ObservationSet};
use crate::window::WindowState;

/// Configuration of the alternating scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamConfig {
    /// Observation weight of the state update.
    pub alpha: f64,
    /// Which model parameters to estimate; empty reduces the scheme to the
    /// plain state iteration.
    pub param_indices: Vec<usize>,
    /// Stop when the parameter step norm drops below this.
    pub param_tol: f64,
    /// Cap on outer (alternation) iterations.
    pub max_outer: usize,
    /// Lipschitz constant of the model residual in the state, used only by
    /// the convergence-factor diagnostic.
    pub l0: Option<f64>,
    /// Lower bound on the parameter sensitivity entering the diagnostic. For
    /// models whose parameter Jacobian is constant any positive bound is
    /// valid; supply one to enable the diagnostic when the model itself
    /// reports none.
    pub l3: Option<f64>,
}

impl ParamConfig {
    pub fn new(alpha: f64, param_indices: Vec<usize>) -> Self {
        Self {
            alpha,
            param_indices,
            param_tol: 1e-3,
            max_outer: 500,
            l0: None,
            l3: None,
        }
    }
}

/// Record of one alternating run.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamRunRecord {
    /// Full parameter vector after each outer iteration, starting with the
    /// initial one.
    pub theta_history: Vec<DVector<f64>>,
    /// State error against the truth after each outer iteration (when a
    /// truth is available).
    pub state_errors: Vec<f64>,
    pub final_state: WindowState,
    pub final_params: DVector<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    /// The convergence-factor diagnostic `b` evaluated at the final iterate,
    /// when `l0` and `l3` were supplied.
    pub factor_b: Option<f64>,
}

/// One state update at fixed parameters: a single Gauss-Newton step.
pub fn state_update(
    model: &ModelSpec,
    u: &WindowState,
    y: &ObservationSet,
    h: &ObservationOperator,
    alpha: f64,
) -> Result<WindowState> {
    gn_step(model, u, y, h, alpha)
}

/// Stacked parameter Jacobian of the model residual: block row `j` of column
/// `m` is `-dF(u_j)/dtheta_{indices[m]}`.
fn param_jacobian(
    model: &ModelSpec,
    u: &WindowState,
    indices: &[usize],
) -> Result<DMatrix<f64>> {
    let n = u.block_dim();
    let nsteps = u.num_steps();
    let mut g = DMatrix::zeros(n * nsteps, indices.len());
    for (m, &which) in indices.iter().enumerate() {
        for j in 0..nsteps {
            let d = model.step_param_derivative(u.block(j), which)?;
            g.view_mut((j * n, m), (n, 1)).copy_from(&(-d));
        }
    }
    Ok(g)
}

/// One parameter update at a fixed state: the linear least-squares step
/// `theta - (G_theta^T G_theta)^{-1} G_theta^T G(u, theta)` restricted to
/// `indices`. Returns the new values of the selected parameters.
pub fn param_update(
    model: &ModelSpec,
    u: &WindowState,
    indices: &[usize],
) -> Result<DVector<f64>> {
    assert!(!indices.is_empty());
    let g_theta = param_jacobian(model, u, indices)?;
    let r = residual(model, u)?;
    let normal = g_theta.tr_mul(&g_theta);
    let rhs = g_theta.tr_mul(&r);
    let chol = normal.clone().cholesky().ok_or(Error::RankDeficient)?;
    let delta = chol.solve(&rhs);
    // Guard against a numerically meaningless solve from a nearly singular
    // sensitivity matrix.
    if (&normal * &delta - &rhs).norm() > 1e-8 * (1.0 + rhs.norm()) {
        return Err(Error::RankDeficient);
    }
    let theta = model.params();
    Ok(DVector::from_iterator(
        indices.len(),
        indices.iter().zip(delta.iter()).map(|(&i, d)| theta[i] - d),
    ))
}

/// The convergence-factor diagnostic
/// `b = || G_theta (G_theta^T G_theta)^{-1} G_theta^T || L0 / L3`. The inner
/// operator is the orthogonal projector onto the range of `G_theta`, whose
/// norm is exactly 1 when the sensitivity matrix has full column rank; the
/// rank is verified through the singular values.
fn convergence_factor(
    model: &ModelSpec,
    u: &WindowState,
    indices: &[usize],
    l0: f64,
    l3: f64,
) -> Result<f64> {
    if l3 <= 0.0 || l0 < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "convergence factor needs l3 > 0 and l0 >= 0, got l0 = {l0}, l3 = {l3}"
        )));
    }
    let g_theta = param_jacobian(model, u, indices)?;
    let sv = g_theta.svd(false, false).singular_values;
    let smax = sv.max();
    if !(smax > 0.0) || sv.min() <= 1e-12 * smax {
        return Err(Error::RankDeficient);
    }
    Ok(l0 / l3)
}

/// Alternate state and parameter updates until the parameter step falls
/// below `param_tol` (or the outer-iteration cap is hit). With no selected
/// parameters this delegates to the plain state iteration.
pub fn run_joint(
    model: &ModelSpec,
    config: &ParamConfig,
    y: &ObservationSet,
    h: &ObservationOperator,
    u_b: &WindowState,
    truth: Option<&WindowState>,
) -> Result<ParamRunRecord> {
    if config.alpha <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "alpha must be positive, got {}",
            config.alpha
        )));
    }
    if config.param_indices.is_empty() {
        let rec = run_state_only(model, config, y, h, u_b, truth)?;
        return Ok(rec);
    }
    for &i in &config.param_indices {
        // Probe the derivative so an out-of-range index reports the model name.
        model.step_param_derivative(&DVector::zeros(model.dim()), i)?;
    }

    let mut model = model.clone();
    let mut u = initial_guess(y, h, u_b)?;
    let mut theta_history = vec![model.params()];
    let mut state_errors = Vec::new();
    if let Some(t) = truth {
        state_errors.push(u.distance(t));
    }
    let mut converged = false;
    let mut outer = 0;
    for _ in 0..config.max_outer {
        outer += 1;
        u = state_update(&model, &u, y, h, config.alpha)?;
        let new_vals = param_update(&model, &u, &config.param_indices)?;
        let old = model.params();
        let step: f64 = config
            .param_indices
            .iter()
            .zip(new_vals.iter())
            .map(|(&i, v)| (old[i] - v).powi(2))
            .sum::<f64>()
            .sqrt();
        for (&i, &v) in config.param_indices.iter().zip(new_vals.iter()) {
            model.set_param(i, v)?;
        }
        theta_history.push(model.params());
        if let Some(t) = truth {
            state_errors.push(u.distance(t));
        }
        if step < config.param_tol {
            converged = true;
            break;
        }
    }
    let factor_b = match (config.l0, config.l3) {
        (Some(l0), Some(l3)) => Some(convergence_factor(&model, &u, &config.param_indices, l0, l3)?),
        _ => None,
    };
    Ok(ParamRunRecord {
        final_params: model.params(),
        theta_history,
        state_errors,
        final_state: u,
        outer_iterations: outer,
        converged,
        factor_b,
    })
}

/// The no-parameter degenerate case: run the plain iteration at the fixed
/// alpha and translate the record.
fn run_state_only(
    model: &ModelSpec,
    config: &ParamConfig,
    y: &ObservationSet,
    h: &ObservationOperator,
    u_b: &WindowState,
    truth: Option<&WindowState>,
) -> Result<ParamRunRecord> {
    let gn_config = GnConfig {
        alpha: AlphaChoice::Fixed(config.alpha),
        c: Some(1.0),
        monitor: false,
        max_iter: config.max_outer,
        safety_max_iter: config.max_outer,
        ..GnConfig::noisefree()
    };
    let rec: GnRunRecord = gn::run(model, &gn_config, y, h, u_b, truth)?;
    let theta = model.params();
    Ok(ParamRunRecord {
        theta_history: vec![theta.clone(); rec.records.len()],
        state_errors: rec.records.iter().filter_map(|r| r.err_total).collect(),
        outer_iterations: rec.iterations(),
        converged: rec.termination == gn::Termination::StepTol,
        final_state: rec.final_state,
        final_params: theta,
        factor_b: None,
    })
}
