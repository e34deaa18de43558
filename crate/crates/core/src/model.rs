//! Discrete dynamical models: forward-Euler Lorenz 63 and Lorenz 96, plus a
//! linear test map used as an exact oracle for the solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Which dynamical system the step map realizes.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// Lorenz 63 with parameters `sigma`, `rho`, `beta` (state dimension 3).
    Lorenz63 { sigma: f64, rho: f64, beta: f64 },
    /// Lorenz 96 with cyclic boundary, dimension `dim` and forcing.
    Lorenz96 { dim: usize, forcing: f64 },
    /// Linear (optionally affine-in-parameter) test map `u -> M u + P theta`.
    /// Not a physical model; the Gauss-Newton step is exact on it, which
    /// makes it a one-iteration oracle.
    LinearTest {
        matrix: DMatrix<f64>,
        forcing: DMatrix<f64>,
        theta: DVector<f64>,
    },
}

/// A time-invariant discrete model `u_{j+1} = F(u_j)` with time step `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub dt: f64,
}

impl ModelSpec {
    /// Lorenz 63 with the standard parameters sigma=10, rho=28, beta=8/3.
    pub fn lorenz63(dt: f64) -> Self {
        Self::lorenz63_with(10.0, 28.0, 8.0 / 3.0, dt)
    }

    pub fn lorenz63_with(sigma: f64, rho: f64, beta: f64, dt: f64) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        Self {
            kind: ModelKind::Lorenz63 { sigma, rho, beta },
            dt,
        }
    }

    /// Lorenz 96; the standard configuration is `dim = 40`, `forcing = 8`.
    pub fn lorenz96(dim: usize, forcing: f64, dt: f64) -> Self {
        assert!(dim >= 4, "Lorenz 96 needs at least 4 variables");
        assert!(dt > 0.0, "dt must be positive");
        Self {
            kind: ModelKind::Lorenz96 { dim, forcing },
            dt,
        }
    }

    /// Linear contraction `u -> factor * u`, no parameters.
    pub fn linear_contraction(n: usize, factor: f64) -> Self {
        Self::linear(DMatrix::identity(n, n) * factor)
    }

    pub fn linear(matrix: DMatrix<f64>) -> Self {
        let n = matrix.nrows();
        assert_eq!(n, matrix.ncols(), "linear test map must be square");
        Self {
            kind: ModelKind::LinearTest {
                matrix,
                forcing: DMatrix::zeros(n, 0),
                theta: DVector::zeros(0),
            },
            dt: 1.0,
        }
    }

    /// Linear map with a constant parameter column: `u -> M u + P theta`.
    pub fn linear_affine(matrix: DMatrix<f64>, forcing: DMatrix<f64>, theta: DVector<f64>) -> Self {
        let n = matrix.nrows();
        assert_eq!(n, matrix.ncols(), "linear test map must be square");
        assert_eq!(n, forcing.nrows(), "forcing rows must match state dimension");
        assert_eq!(forcing.ncols(), theta.len(), "one forcing column per parameter");
        Self {
            kind: ModelKind::LinearTest {
                matrix,
                forcing,
                theta,
            },
            dt: 1.0,
        }
    }

    /// State dimension `n`.
    pub fn dim(&self) -> usize {
        match &self.kind {
            ModelKind::Lorenz63 { .. } => 3,
            ModelKind::Lorenz96 { dim, .. } => *dim,
            ModelKind::LinearTest { matrix, .. } => matrix.nrows(),
        }
    }

    /// Number of tunable parameters `q`.
    pub fn num_params(&self) -> usize {
        match &self.kind {
            ModelKind::Lorenz63 { .. } => 3,
            ModelKind::Lorenz96 { .. } => 1,
            ModelKind::LinearTest { forcing, .. } => forcing.ncols(),
        }
    }

    /// Current parameter vector (L63: `[sigma, rho, beta]`, L96: `[forcing]`).
    pub fn params(&self) -> DVector<f64> {
        match &self.kind {
            ModelKind::Lorenz63 { sigma, rho, beta } => {
                DVector::from_vec(vec![*sigma, *rho, *beta])
            }
            ModelKind::Lorenz96 { forcing, .. } => DVector::from_element(1, *forcing),
            ModelKind::LinearTest { theta, .. } => theta.clone(),
        }
    }

    pub fn set_param(&mut self, which: usize, value: f64) -> Result<()> {
        match &mut self.kind {
            ModelKind::Lorenz63 { sigma, rho, beta } => match which {
                0 => *sigma = value,
                1 => *rho = value,
                2 => *beta = value,
                _ => {
                    return Err(Error::UnknownParameter {
                        model: "Lorenz63",
                        index: which,
                    })
                }
            },
            ModelKind::Lorenz96 { forcing, .. } => match which {
                0 => *forcing = value,
                _ => {
                    return Err(Error::UnknownParameter {
                        model: "Lorenz96",
                        index: which,
                    })
                }
            },
            ModelKind::LinearTest { theta, .. } => {
                if which >= theta.len() {
                    return Err(Error::UnknownParameter {
                        model: "LinearTest",
                        index: which,
                    });
                }
                theta[which] = value;
            }
        }
        Ok(())
    }

    /// One forward-Euler step `F(u) = u + dt f(u)` (`M u + P theta` for the
    /// linear test map). Errors if the result is non-finite.
    pub fn step(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let out = self.step_unchecked(u);
        for (i, &v) in out.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Diverged {
                    index: 0,
                    component: i,
                    value: v,
                });
            }
        }
        Ok(out)
    }

    fn step_unchecked(&self, u: &DVector<f64>) -> DVector<f64> {
        let dt = self.dt;
        match &self.kind {
            ModelKind::Lorenz63 { sigma, rho, beta } => {
                let (x, y, z) = (u[0], u[1], u[2]);
                DVector::from_vec(vec![
                    x + dt * sigma * (y - x),
                    y + dt * (x * (rho - z) - y),
                    z + dt * (x * y - beta * z),
                ])
            }
            ModelKind::Lorenz96 { dim, forcing } => {
                let d = *dim;
                DVector::from_fn(d, |l, _| {
                    let m2 = u[(l + d - 2) % d];
                    let m1 = u[(l + d - 1) % d];
                    let p1 = u[(l + 1) % d];
                    u[l] + dt * (-m2 * m1 + m1 * p1 - u[l] + forcing)
                })
            }
            ModelKind::LinearTest {
                matrix,
                forcing,
                theta,
            } => {
                let mut out = matrix * u;
                if theta.len() > 0 {
                    out += forcing * theta;
                }
                out
            }
        }
    }

    /// The step Jacobian `F'(u)`.
    pub fn step_jacobian(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let dt = self.dt;
        match &self.kind {
            ModelKind::Lorenz63 { sigma, rho, beta } => {
                let (x, y, z) = (u[0], u[1], u[2]);
                DMatrix::from_row_slice(
                    3,
                    3,
                    &[
                        1.0 - sigma * dt,
                        sigma * dt,
                        0.0,
                        dt * (rho - z),
                        1.0 - dt,
                        -dt * x,
                        dt * y,
                        dt * x,
                        1.0 - beta * dt,
                    ],
                )
            }
            ModelKind::Lorenz96 { dim, .. } => {
                let d = *dim;
                let mut j = DMatrix::zeros(d, d);
                for l in 0..d {
                    let m2 = (l + d - 2) % d;
                    let m1 = (l + d - 1) % d;
                    let p1 = (l + 1) % d;
                    j[(l, l)] += 1.0 - dt;
                    j[(l, m2)] += -dt * u[m1];
                    j[(l, m1)] += dt * (u[p1] - u[m2]);
                    j[(l, p1)] += dt * u[m1];
                }
                j
            }
            ModelKind::LinearTest { matrix, .. } => matrix.clone(),
        }
    }

    /// Column `dF/dtheta_which` evaluated at `u`.
    pub fn step_param_derivative(&self, u: &DVector<f64>, which: usize) -> Result<DVector<f64>> {
        let dt = self.dt;
        match &self.kind {
            ModelKind::Lorenz63 { .. } => match which {
                // sigma
                0 => Ok(DVector::from_vec(vec![dt * (u[1] - u[0]), 0.0, 0.0])),
                // rho
                1 => Ok(DVector::from_vec(vec![0.0, dt * u[0], 0.0])),
                // beta
                2 => Ok(DVector::from_vec(vec![0.0, 0.0, -dt * u[2]])),
                _ => Err(Error::UnknownParameter {
                    model: "Lorenz63",
                    index: which,
                }),
            },
            ModelKind::Lorenz96 { dim, .. } => match which {
                0 => Ok(DVector::from_element(*dim, dt)),
                _ => Err(Error::UnknownParameter {
                    model: "Lorenz96",
                    index: which,
                }),
            },
            ModelKind::LinearTest { forcing, .. } => {
                if which >= forcing.ncols() {
                    return Err(Error::UnknownParameter {
                        model: "LinearTest",
                        index: which,
                    });
                }
                Ok(forcing.column(which).into_owned())
            }
        }
    }

    /// Lipschitz constant of the window Jacobian `G'`: `sqrt(2) dt` for
    /// Lorenz 63, `sqrt(6) dt` for Lorenz 96, 0 for the linear test map
    /// (its Jacobian is constant).
    pub fn lipschitz_g(&self) -> f64 {
        match &self.kind {
            ModelKind::Lorenz63 { .. } => 2.0_f64.sqrt() * self.dt,
            ModelKind::Lorenz96 { .. } => 6.0_f64.sqrt() * self.dt,
            ModelKind::LinearTest { .. } => 0.0,
        }
    }

    /// True when the residual is affine in the parameters with a constant
    /// coefficient matrix (only the linear test map qualifies).
    pub fn is_affine_in_params(&self) -> bool {
        matches!(&self.kind, ModelKind::LinearTest { forcing, .. } if forcing.ncols() > 0)
    }
}
