//! Observation operators (component selection at chosen time indices),
//! twin-experiment data generation, and the initial guess of the iteration.

use std::io::Write;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::window::WindowState;

/// The stacked linear observation operator `H`. Each per-time operator is a
/// 0/1 component-selection matrix, so `H H^T = I` on observation space and
/// `H^T H` is a diagonal 0/1 projection on window space.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationOperator {
    state_dim: usize,
    num_steps: usize,
    obs_times: Vec<usize>,
    /// Observed component indices at each observation time; sorted, distinct.
    selectors: Vec<Vec<usize>>,
}

impl ObservationOperator {
    pub fn new(
        state_dim: usize,
        num_steps: usize,
        obs_times: Vec<usize>,
        selectors: Vec<Vec<usize>>,
    ) -> Self {
        assert_eq!(obs_times.len(), selectors.len(), "one selector per time");
        assert!(
            obs_times.windows(2).all(|w| w[0] < w[1]),
            "observation times must be strictly increasing"
        );
        assert!(
            obs_times.iter().all(|&t| t <= num_steps),
            "observation time outside window"
        );
        for sel in &selectors {
            assert!(
                sel.windows(2).all(|w| w[0] < w[1]),
                "selector components must be sorted and distinct"
            );
            assert!(
                sel.iter().all(|&c| c < state_dim),
                "selector component outside state dimension"
            );
        }
        Self {
            state_dim,
            num_steps,
            obs_times,
            selectors,
        }
    }

    /// Observe the same components at times `0, cadence, 2 cadence, ...`.
    pub fn every_kth(state_dim: usize, num_steps: usize, cadence: usize, components: &[usize]) -> Self {
        assert!(cadence >= 1);
        let obs_times: Vec<usize> = (0..=num_steps).step_by(cadence).collect();
        let selectors = vec![components.to_vec(); obs_times.len()];
        Self::new(state_dim, num_steps, obs_times, selectors)
    }

    /// `count` evenly spaced component indices out of `state_dim`.
    pub fn evenly_spaced_components(state_dim: usize, count: usize) -> Vec<usize> {
        assert!(count >= 1 && count <= state_dim);
        (0..count)
            .map(|i| i * state_dim / count)
            .collect()
    }

    /// No observations at all.
    pub fn empty(state_dim: usize, num_steps: usize) -> Self {
        Self::new(state_dim, num_steps, Vec::new(), Vec::new())
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn obs_times(&self) -> &[usize] {
        &self.obs_times
    }

    pub fn selectors(&self) -> &[Vec<usize>] {
        &self.selectors
    }

    /// Total number of observed scalars over the window.
    pub fn obs_dim(&self) -> usize {
        self.selectors.iter().map(Vec::len).sum()
    }

    fn check_window(&self, w: &WindowState) -> Result<()> {
        if w.block_dim() != self.state_dim || w.num_steps() != self.num_steps {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim * (self.num_steps + 1),
                got: w.total_dim(),
            });
        }
        Ok(())
    }

    /// `H w`: the observed components, stacked over observation times.
    pub fn apply_h(&self, w: &WindowState) -> Result<DVector<f64>> {
        self.check_window(w)?;
        let mut out = DVector::zeros(self.obs_dim());
        let mut r = 0;
        for (&t, sel) in self.obs_times.iter().zip(&self.selectors) {
            for &c in sel {
                out[r] = w.block(t)[c];
                r += 1;
            }
        }
        Ok(out)
    }

    /// `H^T v`: scatter an observation-space vector back into a window.
    pub fn apply_ht(&self, v: &DVector<f64>) -> Result<WindowState> {
        if v.len() != self.obs_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.obs_dim(),
                got: v.len(),
            });
        }
        let mut out = WindowState::zeros(self.state_dim, self.num_steps);
        let mut r = 0;
        for (&t, sel) in self.obs_times.iter().zip(&self.selectors) {
            for &c in sel {
                out.block_mut(t)[c] = v[r];
                r += 1;
            }
        }
        Ok(out)
    }

    /// `H^T H w`: keep observed entries, zero the rest.
    pub fn apply_hth(&self, w: &WindowState) -> Result<WindowState> {
        self.check_window(w)?;
        let mut out = WindowState::zeros(self.state_dim, self.num_steps);
        for (&t, sel) in self.obs_times.iter().zip(&self.selectors) {
            for &c in sel {
                out.block_mut(t)[c] = w.block(t)[c];
            }
        }
        Ok(out)
    }
}

/// Observations over the window together with the realized noise of the twin
/// experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    /// Stacked observed values `y`.
    pub values: DVector<f64>,
    /// Noise standard deviation `gamma`.
    pub gamma: f64,
    /// The drawn noise `eta` (zero when `gamma = 0`).
    pub realized_noise: DVector<f64>,
    /// `||H^T eta||`, the quantity entering the noisy-mode condition check.
    pub ht_eta_norm: f64,
}

impl ObservationSet {
    /// `||y - H truth|| = ||eta||`, the observation error of the experiment.
    pub fn noise_norm(&self) -> f64 {
        self.realized_noise.norm()
    }

    /// CSV dump: one row per observed scalar with time, component and value.
    pub fn write_csv<W: Write>(&self, h: &ObservationOperator, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,component,value,mask")?;
        let mut r = 0;
        for (&t, sel) in h.obs_times().iter().zip(h.selectors()) {
            for &c in sel {
                writeln!(w, "{t},{c},{},1", self.values[r])?;
                r += 1;
            }
        }
        Ok(())
    }
}

/// Generate twin-experiment observations `y = H truth + eta` with
/// `eta ~ N(0, gamma^2 I)`.
pub fn observe(
    truth: &WindowState,
    h: &ObservationOperator,
    gamma: f64,
    rng: &mut SeededRng,
) -> Result<ObservationSet> {
    let clean = h.apply_h(truth)?;
    let noise = if gamma == 0.0 {
        DVector::zeros(clean.len())
    } else {
        rng.normal_vector(clean.len()) * gamma
    };
    // For selection operators ||H^T eta|| = ||eta||, but compute it through
    // the adjoint so the stored value matches the operator actually used.
    let ht_eta_norm = h.apply_ht(&noise)?.norm();
    Ok(ObservationSet {
        values: &clean + &noise,
        gamma,
        realized_noise: noise,
        ht_eta_norm,
    })
}

/// The starting point of the iteration:
/// `u^(0) = H^T y + (I - H^T H) u_b` — observed components take the
/// observation values, everything else copies the background.
pub fn initial_guess(
    y: &ObservationSet,
    h: &ObservationOperator,
    u_b: &WindowState,
) -> Result<WindowState> {
    h.check_window(u_b)?;
    let mut out = u_b.clone();
    let mut r = 0;
    for (&t, sel) in h.obs_times().iter().zip(h.selectors()) {
        for &c in sel {
            out.block_mut(t)[c] = y.values[r];
            r += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;
    use crate::window::generate_truth;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn sample_truth() -> (ModelSpec, WindowState) {
        let model = ModelSpec::lorenz63(0.005);
        let truth = generate_truth(&model, &DVector::from_vec(vec![1.0, 2.0, 3.0]), 20).unwrap();
        (model, truth)
    }

    #[test]
    fn noise_free_observations_are_exact() {
        let (_, truth) = sample_truth();
        let h = ObservationOperator::every_kth(3, 20, 10, &[0]);
        let mut rng = SeededRng::new(1, 0);
        let y = observe(&truth, &h, 0.0, &mut rng).unwrap();
        assert_eq!(y.values, h.apply_h(&truth).unwrap());
        assert_eq!(y.ht_eta_norm, 0.0);
    }

    #[test]
    fn observation_determinism() {
        let (_, truth) = sample_truth();
        let h = ObservationOperator::every_kth(3, 20, 5, &[0, 2]);
        let a = observe(&truth, &h, 0.01, &mut SeededRng::new(4, 9)).unwrap();
        let b = observe(&truth, &h, 0.01, &mut SeededRng::new(4, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn initial_guess_mixes_observations_and_background() {
        let (_, truth) = sample_truth();
        // Component 0 observed at every time.
        let h = ObservationOperator::every_kth(3, 20, 1, &[0]);
        let mut rng = SeededRng::new(2, 0);
        let y = observe(&truth, &h, 0.0, &mut rng).unwrap();
        let u_b = WindowState::new((0..=20).map(|_| rng.normal_vector(3)).collect());
        let u0 = initial_guess(&y, &h, &u_b).unwrap();
        for j in 0..=20 {
            assert_eq!(u0.block(j)[0], truth.block(j)[0]);
            assert_eq!(u0.block(j)[1], u_b.block(j)[1]);
            assert_eq!(u0.block(j)[2], u_b.block(j)[2]);
        }
        // H u0 = y exactly.
        assert_eq!(h.apply_h(&u0).unwrap(), y.values);
    }

    #[test]
    fn empty_operator_returns_background() {
        let (_, truth) = sample_truth();
        let h = ObservationOperator::empty(3, 20);
        let mut rng = SeededRng::new(3, 0);
        let y = observe(&truth, &h, 0.0, &mut rng).unwrap();
        let u_b = WindowState::new((0..=20).map(|_| rng.normal_vector(3)).collect());
        let u0 = initial_guess(&y, &h, &u_b).unwrap();
        assert_eq!(u0, u_b);
    }

    #[test]
    fn adjoint_identity() {
        let h = ObservationOperator::every_kth(4, 12, 3, &[1, 3]);
        let mut rng = SeededRng::new(5, 0);
        for _ in 0..20 {
            let w = WindowState::new((0..=12).map(|_| rng.normal_vector(4)).collect());
            let v = rng.normal_vector(h.obs_dim());
            let lhs = h.apply_h(&w).unwrap().dot(&v);
            let rhs = w.stacked().dot(&h.apply_ht(&v).unwrap().stacked());
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }

    #[test]
    fn hth_is_idempotent_projection() {
        let h = ObservationOperator::every_kth(4, 12, 4, &[0, 2]);
        let mut rng = SeededRng::new(6, 0);
        let w = WindowState::new((0..=12).map(|_| rng.normal_vector(4)).collect());
        let once = h.apply_hth(&w).unwrap();
        let twice = h.apply_hth(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn full_observation_hth_is_identity() {
        let h = ObservationOperator::every_kth(3, 6, 1, &[0, 1, 2]);
        let mut rng = SeededRng::new(7, 0);
        let w = WindowState::new((0..=6).map(|_| rng.normal_vector(3)).collect());
        assert_eq!(h.apply_hth(&w).unwrap(), w);
        // H H^T = I on observation space.
        let v = rng.normal_vector(h.obs_dim());
        let back = h.apply_h(&h.apply_ht(&v).unwrap()).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn evenly_spaced_components_cover_requested_count() {
        let c = ObservationOperator::evenly_spaced_components(40, 20);
        assert_eq!(c.len(), 20);
        assert_eq!(c[0], 0);
        assert_eq!(c[1], 2);
        let all = ObservationOperator::evenly_spaced_components(40, 40);
        assert_eq!(all, (0..40).collect::<Vec<_>>());
    }
}
