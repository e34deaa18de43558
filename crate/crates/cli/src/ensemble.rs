//! Ensembles over independent realizations and the sweep drivers.
//!
//! Every realization draws its truth, observation noise, and background from
//! dedicated RNG streams of the master seed, so results are independent of
//! how the realizations are scheduled across threads. Aggregation is an
//! ordered reduction by realization index.

use rayon::prelude::*;

use gnda::{
    error_metrics, generate_truth, initial_guess, lm_minimize, make_background, observe, run,
    run_joint, AlphaChoice, BackgroundMode, Error, GnRunRecord, LmRun, ObservationOperator,
    ObservationSet, ParamConfig, ParamRunRecord, SeededRng, Termination, WindowState,
};

use crate::config::{ExperimentConfig, Mode};

/// Stream layout per realization: `i*8 + offset`. The stride leaves room for
/// future draws without renumbering existing ones (which would silently
/// change every published result).
const STREAM_STRIDE: u64 = 8;
const STREAM_TRUTH: u64 = 0;
const STREAM_OBS: u64 = 1;
const STREAM_BACKGROUND: u64 = 2;

/// The synthetic data of one realization.
pub struct Realization {
    pub index: u64,
    pub truth: WindowState,
    pub y: ObservationSet,
    pub background: WindowState,
}

/// Draw the twin-experiment data for realization `index`.
pub fn draw_realization(
    cfg: &ExperimentConfig,
    h: &ObservationOperator,
    index: u64,
) -> Result<Realization, Error> {
    let model = cfg.model_spec();
    let seed = cfg.ensemble.master_seed;
    let base = index * STREAM_STRIDE;
    let u0 = SeededRng::new(seed, base + STREAM_TRUTH).normal_vector(model.dim());
    let truth = generate_truth(&model, &u0, cfg.num_steps())?;
    let y = observe(
        &truth,
        h,
        cfg.observations.gamma,
        &mut SeededRng::new(seed, base + STREAM_OBS),
    )?;
    let background = make_background(
        &model,
        &truth,
        BackgroundMode::PerturbedTruth {
            sigma_b: cfg.observations.sigma_b,
        },
        &mut SeededRng::new(seed, base + STREAM_BACKGROUND),
    )?;
    Ok(Realization {
        index,
        truth,
        y,
        background,
    })
}

/// What happened to one realization. Failures are data, not aborts.
pub enum Outcome {
    /// A run that finished its iteration (including condition-violation
    /// stops, which carry their records).
    Done(GnRunRecord),
    /// The run hit an unsolvable normal system mid-iteration.
    IllPosed(GnRunRecord),
    /// The alpha search failed before any iteration ran.
    NoAlphaFound(String),
    /// Anything else (configuration or numerical breakdown).
    Failed(String),
}

impl Outcome {
    pub fn kind(&self) -> &'static str {
        match self {
            Outcome::Done(_) => "ok",
            Outcome::IllPosed(_) => "ill_posed",
            Outcome::NoAlphaFound(_) => "no_alpha_found",
            Outcome::Failed(_) => "failed",
        }
    }

    pub fn records(&self) -> Option<&GnRunRecord> {
        match self {
            Outcome::Done(r) | Outcome::IllPosed(r) => Some(r),
            _ => None,
        }
    }
}

pub struct RealizationResult {
    pub index: u64,
    pub outcome: Outcome,
}

fn classify(res: Result<GnRunRecord, Error>) -> Outcome {
    match res {
        Ok(rec) if rec.termination == Termination::IllPosed => Outcome::IllPosed(rec),
        Ok(rec) => Outcome::Done(rec),
        Err(e @ Error::NoAlphaFound { .. }) => Outcome::NoAlphaFound(e.to_string()),
        Err(e @ Error::IllPosed { .. }) => Outcome::Failed(e.to_string()),
        Err(e) => Outcome::Failed(e.to_string()),
    }
}

/// Run one Gauss-Newton realization end to end.
pub fn run_realization(cfg: &ExperimentConfig, h: &ObservationOperator, index: u64) -> RealizationResult {
    let outcome = match draw_realization(cfg, h, index) {
        Ok(real) => {
            let model = cfg.model_spec();
            classify(run(
                &model,
                &cfg.gn_config(),
                &real.y,
                h,
                &real.background,
                Some(&real.truth),
            ))
        }
        Err(e) => Outcome::Failed(e.to_string()),
    };
    RealizationResult { index, outcome }
}

/// Per-iteration ensemble statistics of one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricBand {
    pub metric: &'static str,
    /// One entry per iteration index: (median, median - std, median + std).
    pub bands: Vec<(f64, f64, f64)>,
}

/// Ensemble aggregate: statistics over completed realizations plus every
/// realization's outcome.
pub struct EnsembleSummary {
    pub results: Vec<RealizationResult>,
    pub bands: Vec<MetricBand>,
    pub completed: usize,
    pub failures: usize,
}

pub fn median(values: &mut Vec<f64>) -> f64 {
    assert!(!values.is_empty(), "median of empty set");
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite metric"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (values.len() - 1) as f64;
    var.sqrt()
}

fn band_over(
    results: &[RealizationResult],
    metric: &'static str,
    get: impl Fn(&gnda::IterationRecord) -> Option<f64>,
) -> MetricBand {
    let runs: Vec<&GnRunRecord> = results
        .iter()
        .filter_map(|r| match &r.outcome {
            Outcome::Done(rec) => Some(rec),
            _ => None,
        })
        .collect();
    let max_len = runs.iter().map(|r| r.records.len()).max().unwrap_or(0);
    let mut bands = Vec::with_capacity(max_len);
    for k in 0..max_len {
        let mut vals: Vec<f64> = runs
            .iter()
            .filter_map(|r| r.records.get(k).and_then(&get))
            .collect();
        if vals.is_empty() {
            break;
        }
        let sd = std_dev(&vals);
        let med = median(&mut vals);
        bands.push((med, med - sd, med + sd));
    }
    MetricBand { metric, bands }
}

/// Run the whole ensemble in parallel and aggregate deterministically.
pub fn run_ensemble(cfg: &ExperimentConfig) -> EnsembleSummary {
    let h = cfg.observation_operator();
    let mut results: Vec<RealizationResult> = (0..cfg.ensemble.size as u64)
        .into_par_iter()
        .map(|i| run_realization(cfg, &h, i))
        .collect();
    results.sort_by_key(|r| r.index);
    summarize(results)
}

pub fn summarize(results: Vec<RealizationResult>) -> EnsembleSummary {
    let bands = vec![
        band_over(&results, "cost", |r| Some(r.cost)),
        band_over(&results, "err_total", |r| r.err_total),
        band_over(&results, "err_obs", |r| r.err_obs),
        band_over(&results, "err_unobs", |r| r.err_unobs),
    ];
    let completed = results
        .iter()
        .filter(|r| matches!(r.outcome, Outcome::Done(_)))
        .count();
    let failures = results.len() - completed;
    EnsembleSummary {
        results,
        bands,
        completed,
        failures,
    }
}

/// The exit-status contract: 0 = at least one realization completed,
/// 2 = the alpha search failed on every realization, 3 = every realization
/// was ill-posed, 1 = any other all-failure mix.
pub fn exit_code(summary: &EnsembleSummary) -> i32 {
    if summary.completed > 0 {
        return 0;
    }
    if summary
        .results
        .iter()
        .all(|r| matches!(r.outcome, Outcome::NoAlphaFound(_)))
    {
        return 2;
    }
    if summary
        .results
        .iter()
        .all(|r| matches!(r.outcome, Outcome::IllPosed(_)))
    {
        return 3;
    }
    1
}

/// One parameter-estimation realization.
pub fn run_param_realization(
    cfg: &ExperimentConfig,
    h: &ObservationOperator,
    index: u64,
) -> (u64, Result<ParamRunRecord, String>) {
    let res = (|| {
        let real = draw_realization(cfg, h, index).map_err(|e| e.to_string())?;
        let mut model = cfg.model_spec();
        for (&which, &value) in cfg.parameters.indices.iter().zip(&cfg.parameters.initial) {
            model.set_param(which, value).map_err(|e| e.to_string())?;
        }
        let alpha = match cfg.gn_config().alpha {
            AlphaChoice::Fixed(a) => a,
            AlphaChoice::Auto => {
                return Err("parameter estimation needs a fixed alpha".into());
            }
        };
        let mut pcfg = ParamConfig::new(alpha, cfg.parameters.indices.clone());
        pcfg.param_tol = cfg.parameters.tol;
        pcfg.max_outer = cfg.parameters.max_outer;
        run_joint(&model, &pcfg, &real.y, h, &real.background, Some(&real.truth))
            .map_err(|e| e.to_string())
    })();
    (index, res)
}

pub fn run_param_ensemble(
    cfg: &ExperimentConfig,
) -> Vec<(u64, Result<ParamRunRecord, String>)> {
    let h = cfg.observation_operator();
    let mut results: Vec<_> = (0..cfg.ensemble.size as u64)
        .into_par_iter()
        .map(|i| run_param_realization(cfg, &h, i))
        .collect();
    results.sort_by_key(|r| r.0);
    results
}

/// Final-state error metrics of one baseline (LM) run.
pub struct BaselineResult {
    pub index: u64,
    pub lm: Result<(LmRun, gnda::Metrics), String>,
}

/// Gauss-Newton and the weak-constraint LM baseline on identical data.
pub struct ComparePair {
    pub gn: RealizationResult,
    pub baseline: BaselineResult,
    /// `||y - H truth||`, the realized observation error.
    pub obs_err: f64,
}

pub fn run_compare_realization(
    cfg: &ExperimentConfig,
    h: &ObservationOperator,
    index: u64,
) -> ComparePair {
    let model = cfg.model_spec();
    let real = match draw_realization(cfg, h, index) {
        Ok(r) => r,
        Err(e) => {
            return ComparePair {
                gn: RealizationResult {
                    index,
                    outcome: Outcome::Failed(e.to_string()),
                },
                baseline: BaselineResult {
                    index,
                    lm: Err("no data".into()),
                },
                obs_err: f64::NAN,
            }
        }
    };
    let obs_err = real.y.realized_noise.norm();
    let gn = RealizationResult {
        index,
        outcome: classify(run(
            &model,
            &cfg.gn_config(),
            &real.y,
            h,
            &real.background,
            Some(&real.truth),
        )),
    };
    let lm = (|| {
        let wc = cfg.wc_config()?;
        let u0 = initial_guess(&real.y, h, &real.background).map_err(|e| e.to_string())?;
        let run = lm_minimize(&model, &wc, &cfg.lm_config(), &real.y, h, &u0)
            .map_err(|e| e.to_string())?;
        let alpha = match cfg.gn_config().alpha {
            AlphaChoice::Fixed(a) => a,
            AlphaChoice::Auto => 1.0,
        };
        let metrics = error_metrics(&model, &run.final_state, &real.truth, &real.y, h, alpha)
            .map_err(|e| e.to_string())?;
        Ok((run, metrics))
    })();
    ComparePair {
        gn,
        baseline: BaselineResult { index, lm },
        obs_err,
    }
}

pub fn run_compare_ensemble(cfg: &ExperimentConfig) -> Vec<ComparePair> {
    let h = cfg.observation_operator();
    let mut results: Vec<_> = (0..cfg.ensemble.size as u64)
        .into_par_iter()
        .map(|i| run_compare_realization(cfg, &h, i))
        .collect();
    results.sort_by_key(|r| r.gn.index);
    results
}

/// One sweep point: the configuration it came from plus its ensemble.
pub struct SweepPoint {
    pub label: String,
    pub value: f64,
    pub summary: EnsembleSummary,
    /// Alphas that failed the first-iterate condition check in an alpha
    /// sweep are skipped, not plotted.
    pub skipped: bool,
    pub skip_reason: Option<String>,
}

fn with_mode(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.mode = if c.observations.gamma > 0.0 {
        Mode::Noisy
    } else {
        Mode::Noisefree
    };
    c
}

/// Cost curves per alpha (skipping alphas that fail the condition check at
/// the initial guess of realization 0).
pub fn sweep_alpha(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    cfg.sweep
        .alphas
        .iter()
        .map(|&alpha| {
            let mut point_cfg = with_mode(cfg);
            point_cfg.solver.alpha = crate::config::AlphaField::Fixed(alpha);
            let probe = probe_alpha(&point_cfg, alpha);
            match probe {
                Err(reason) => SweepPoint {
                    label: format!("alpha={alpha}"),
                    value: alpha,
                    summary: summarize(Vec::new()),
                    skipped: true,
                    skip_reason: Some(reason),
                },
                Ok(()) => SweepPoint {
                    label: format!("alpha={alpha}"),
                    value: alpha,
                    summary: run_ensemble(&point_cfg),
                    skipped: false,
                    skip_reason: None,
                },
            }
        })
        .collect()
}

/// Check the first condition at the initial guess of realization 0, as the
/// sweep's admission rule for a candidate alpha.
fn probe_alpha(cfg: &ExperimentConfig, alpha: f64) -> Result<(), String> {
    use gnda::{assemble_normal, jacobian, opnorm_solve_jt};
    let h = cfg.observation_operator();
    let real = draw_realization(cfg, &h, 0).map_err(|e| e.to_string())?;
    let u0 = initial_guess(&real.y, &h, &real.background).map_err(|e| e.to_string())?;
    let model = cfg.model_spec();
    let lip = model.lipschitz_g();
    let c = match cfg.solver.c {
        Some(c) => c,
        None => u0.distance(&real.truth),
    };
    let j = jacobian(&model, &u0);
    let a = assemble_normal(&j, alpha, &h);
    let est = opnorm_solve_jt(&j, &a, cfg.solver.norm_rel_tol).map_err(|e| e.to_string())?;
    let threshold = if lip * c > 0.0 {
        1.0 / (lip * c)
    } else {
        f64::INFINITY
    };
    if est.value <= threshold * (1.0 + cfg.solver.norm_rel_tol) {
        Ok(())
    } else {
        Err(format!(
            "condition check failed at the initial guess: {:.3e} > {:.3e}",
            est.value, threshold
        ))
    }
}

pub fn sweep_gamma(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    cfg.sweep
        .gammas
        .iter()
        .map(|&gamma| {
            let mut point_cfg = cfg.clone();
            point_cfg.observations.gamma = gamma;
            let point_cfg = with_mode(&point_cfg);
            SweepPoint {
                label: format!("gamma={gamma}"),
                value: gamma,
                summary: run_ensemble(&point_cfg),
                skipped: false,
                skip_reason: None,
            }
        })
        .collect()
}

pub fn sweep_obs(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    cfg.sweep
        .obs_counts
        .iter()
        .map(|&count| {
            let mut point_cfg = with_mode(cfg);
            point_cfg.observations.components = None;
            point_cfg.observations.count = Some(count);
            SweepPoint {
                label: format!("obs_count={count}"),
                value: count as f64,
                summary: run_ensemble(&point_cfg),
                skipped: false,
                skip_reason: None,
            }
        })
        .collect()
}

pub fn sweep_window(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    cfg.sweep
        .window_lengths
        .iter()
        .map(|&t| {
            let mut point_cfg = with_mode(cfg);
            point_cfg.window.t = t;
            SweepPoint {
                label: format!("t={t}"),
                value: t,
                summary: run_ensemble(&point_cfg),
                skipped: false,
                skip_reason: None,
            }
        })
        .collect()
}

/// Iterations until `err_total <= tol`, for observation sweeps.
pub fn iterations_to_tolerance(rec: &GnRunRecord, tol: f64) -> Option<usize> {
    rec.records
        .iter()
        .position(|r| r.err_total.map_or(false, |e| e <= tol))
}
