//! Assimilation-window containers: the stacked unknown `u = {u_0, ..., u_N}`,
//! twin-experiment truth generation, and background construction.

use std::io::Write;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::rng::SeededRng;

/// Magnitude cap beyond which a trajectory is declared divergent.
pub const DIVERGENCE_CAP: f64 = 1e8;

/// The stacked unknown over the window: `N + 1` blocks of dimension `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowState {
    blocks: Vec<DVector<f64>>,
}

impl WindowState {
    pub fn new(blocks: Vec<DVector<f64>>) -> Self {
        assert!(!blocks.is_empty(), "window needs at least one block");
        let n = blocks[0].len();
        assert!(blocks.iter().all(|b| b.len() == n), "ragged window blocks");
        Self { blocks }
    }

    pub fn zeros(n: usize, num_steps: usize) -> Self {
        Self::new(vec![DVector::zeros(n); num_steps + 1])
    }

    /// Block dimension `n`.
    pub fn block_dim(&self) -> usize {
        self.blocks[0].len()
    }

    /// Number of model steps `N`; the window holds `N + 1` blocks.
    pub fn num_steps(&self) -> usize {
        self.blocks.len() - 1
    }

    /// Total dimension `n (N + 1)`.
    pub fn total_dim(&self) -> usize {
        self.block_dim() * self.blocks.len()
    }

    pub fn block(&self, j: usize) -> &DVector<f64> {
        &self.blocks[j]
    }

    pub fn block_mut(&mut self, j: usize) -> &mut DVector<f64> {
        &mut self.blocks[j]
    }

    pub fn blocks(&self) -> &[DVector<f64>] {
        &self.blocks
    }

    /// The window as one stacked vector of length `n (N + 1)`.
    pub fn stacked(&self) -> DVector<f64> {
        let n = self.block_dim();
        let mut out = DVector::zeros(self.total_dim());
        for (j, b) in self.blocks.iter().enumerate() {
            out.rows_mut(j * n, n).copy_from(b);
        }
        out
    }

    pub fn from_stacked(n: usize, num_steps: usize, v: &DVector<f64>) -> Self {
        assert_eq!(v.len(), n * (num_steps + 1), "stacked length mismatch");
        Self::new(
            (0..=num_steps)
                .map(|j| v.rows(j * n, n).into_owned())
                .collect(),
        )
    }

    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
    }

    /// `||self - other||` over the whole window.
    pub fn distance(&self, other: &WindowState) -> f64 {
        assert_eq!(self.blocks.len(), other.blocks.len());
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Write one row per time index, one column per component.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for c in 0..self.block_dim() {
            write!(w, ",x{c}")?;
        }
        writeln!(w)?;
        for (j, b) in self.blocks.iter().enumerate() {
            write!(w, "{j}")?;
            for v in b.iter() {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Integrate the model forward from `u0` for `num_steps` steps. Fails with
/// the first offending index if the trajectory blows up.
pub fn generate_truth(model: &ModelSpec, u0: &DVector<f64>, num_steps: usize) -> Result<WindowState> {
    assert!(num_steps >= 1);
    let mut blocks = Vec::with_capacity(num_steps + 1);
    blocks.push(u0.clone());
    for j in 0..num_steps {
        let next = model.step(&blocks[j]).map_err(|e| match e {
            Error::Diverged {
                component, value, ..
            } => Error::Diverged {
                index: j + 1,
                component,
                value,
            },
            other => other,
        })?;
        if let Some((c, &v)) = next.iter().enumerate().find(|(_, v)| v.abs() > DIVERGENCE_CAP) {
            return Err(Error::Diverged {
                index: j + 1,
                component: c,
                value: v,
            });
        }
        blocks.push(next);
    }
    Ok(WindowState::new(blocks))
}

/// How the background trajectory relates to the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BackgroundMode {
    /// Truth plus i.i.d. Gaussian noise of the given standard deviation on
    /// every component.
    PerturbedTruth { sigma_b: f64 },
    /// A free model run started from a perturbed initial condition.
    FreeRun { sigma_0: f64 },
}

impl Default for BackgroundMode {
    fn default() -> Self {
        BackgroundMode::PerturbedTruth { sigma_b: 1.0 }
    }
}

pub fn make_background(
    model: &ModelSpec,
    truth: &WindowState,
    mode: BackgroundMode,
    rng: &mut SeededRng,
) -> Result<WindowState> {
    match mode {
        BackgroundMode::PerturbedTruth { sigma_b } => {
            let blocks = truth
                .blocks()
                .iter()
                .map(|b| b + rng.normal_vector(b.len()) * sigma_b)
                .collect();
            Ok(WindowState::new(blocks))
        }
        BackgroundMode::FreeRun { sigma_0 } => {
            let u0 = truth.block(0) + rng.normal_vector(truth.block_dim()) * sigma_0;
            generate_truth(model, &u0, truth.num_steps())
        }
    }
}
