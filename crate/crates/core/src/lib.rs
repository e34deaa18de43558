//! Weak-constraint data assimilation over a full time window.
//!
//! The estimate is the whole trajectory `u = {u_0, ..., u_N}`, found by a
//! Gauss-Newton iteration on the regularized least-squares problem
//!
//! ```text
//! min_u  1/2 { ||G(u)||^2 + alpha ||y - H u||^2 }
//! ```
//!
//! where `G` stacks the model-mismatch residuals `u_{j+1} - F(u_j)` and `H`
//! selects the observed components. The crate provides the discrete models
//! (forward-Euler Lorenz 63/96 plus a linear test map), the window and
//! observation containers, block-structured linear algebra for the normal
//! equations, the Gauss-Newton solver with its alpha-selection and condition
//! monitoring, joint state-parameter estimation, and a weak-constraint 4DVar
//! baseline minimized by Levenberg-Marquardt.

pub mod blocklin;
pub mod error;
pub mod gn;
pub mod model;
pub mod obs;
pub mod param;
pub mod rng;
pub mod wc4dvar;
pub mod window;

pub use blocklin::{
    assemble_normal, jacobian, opnorm_inverse, opnorm_matrix, opnorm_solve_jt, residual,
    solve_normal, BlockBidiagonal, BlockDiagonal, BlockTriFactor, BlockTridiagonal, LinearMap,
    NormEstimate,
};
pub use error::{Error, Result};
pub use gn::{
    cost, error_metrics, find_alpha_noisefree, find_alpha_noisy, gn_step, run, theoretical_bound,
    AlphaChoice, AlphaSearch, GnConfig, GnRunRecord, IterationRecord, Metrics, Termination,
};
pub use model::{ModelKind, ModelSpec};
pub use obs::{initial_guess, observe, ObservationOperator, ObservationSet};
pub use param::{param_update, run_joint, state_update, ParamConfig, ParamRunRecord};
pub use rng::SeededRng;
pub use wc4dvar::{lm_minimize, wc_residual, LmConfig, LmRun, LmTermination, WcConfig};
pub use window::{generate_truth, make_background, BackgroundMode, WindowState};
