//! `gnda` — run seeded twin-experiment ensembles and sweeps from a TOML
//! config, writing CSV/JSON artifacts.
//!
//! Exit codes: 0 success, 2 alpha search failed on every realization,
//! 3 every realization ill-posed, 1 any other error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gnda_cli::config::{ExperimentConfig, Mode, LONG_WINDOW_T};
use gnda_cli::emit;
use gnda_cli::ensemble::{self, Outcome};

#[derive(Parser)]
#[command(name = "gnda", version, about = "Gauss-Newton data-assimilation experiment driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Path to the experiment TOML.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config and $GNDA_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the master seed of the ensemble.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the ensemble size.
    #[arg(long)]
    size: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and write one realization's truth and observations.
    Truth {
        #[command(flatten)]
        common: Common,
        /// Which realization to draw.
        #[arg(long, default_value_t = 0)]
        realization: u64,
    },
    /// Run a Gauss-Newton ensemble (noise-free or noisy per the config).
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Joint state-parameter estimation ensemble.
    Param {
        #[command(flatten)]
        common: Common,
    },
    /// Gauss-Newton vs the weak-constraint LM baseline on identical data.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Parameter sweeps (alpha, gamma, observation count, window length).
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: SweepKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Alpha,
    Gamma,
    Obs,
    Window,
}

fn load(common: &Common, mode: Option<Mode>) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::parse_path(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output.dir = Some(out.clone());
    }
    if let Some(seed) = common.seed {
        cfg.ensemble.master_seed = seed;
    }
    if let Some(size) = common.size {
        cfg.ensemble.size = size;
    }
    // The subcommand decides the mode; default to whatever matches the data.
    cfg.mode = mode.unwrap_or(if cfg.observations.gamma > 0.0 {
        Mode::Noisy
    } else {
        Mode::Noisefree
    });
    cfg.validate()?;
    if cfg.window.t > LONG_WINDOW_T {
        eprintln!(
            "warning: window.t = {} is far beyond desk scale; expect long runtimes",
            cfg.window.t
        );
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Truth { common, realization } => cmd_truth(&common, realization),
        Command::Run { common } => cmd_run(&common),
        Command::Param { common } => cmd_param(&common),
        Command::Compare { common } => cmd_compare(&common),
        Command::Sweep { common, kind } => cmd_sweep(&common, kind),
    }
}

fn io_err(e: std::io::Error) -> String {
    format!("write failed: {e}")
}

fn cmd_truth(common: &Common, realization: u64) -> Result<ExitCode, String> {
    let cfg = load(common, None)?;
    let h = cfg.observation_operator();
    let real = ensemble::draw_realization(&cfg, &h, realization).map_err(|e| e.to_string())?;
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir).map_err(io_err)?;
    let mut truth = Vec::new();
    real.truth.write_csv(&mut truth).map_err(io_err)?;
    let mut obs = Vec::new();
    real.y.write_csv(&h, &mut obs).map_err(io_err)?;
    emit::write_all(
        &dir,
        &[
            ("truth.csv", String::from_utf8(truth).unwrap()),
            ("observations.csv", String::from_utf8(obs).unwrap()),
            ("config.json", emit::config_json(&cfg)),
        ],
    )
    .map_err(io_err)?;
    println!("wrote truth and observations for realization {realization} to {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(common: &Common) -> Result<ExitCode, String> {
    let cfg = load(common, None)?;
    let summary = ensemble::run_ensemble(&cfg);
    let dir = cfg.output_dir();
    emit::write_all(
        &dir,
        &[
            ("runs.csv", emit::runs_csv(&summary)),
            ("summary.csv", emit::summary_csv(&summary)),
            ("failures.csv", emit::failures_csv(&summary)),
            ("config.json", emit::config_json(&cfg)),
        ],
    )
    .map_err(io_err)?;
    println!(
        "{} of {} realizations completed ({} failed); wrote {}",
        summary.completed,
        summary.results.len(),
        summary.failures,
        dir.display()
    );
    Ok(ExitCode::from(ensemble::exit_code(&summary) as u8))
}

fn cmd_param(common: &Common) -> Result<ExitCode, String> {
    let cfg = load(common, Some(Mode::Param))?;
    let results = ensemble::run_param_ensemble(&cfg);
    let dir = cfg.output_dir();

    let mut runs = String::from("seed,k");
    for &i in &cfg.parameters.indices {
        runs.push_str(&format!(",theta{i}"));
    }
    runs.push_str(",state_err\n");
    let mut ok = 0usize;
    let mut finals: Vec<Vec<f64>> = vec![Vec::new(); cfg.parameters.indices.len()];
    let mut final_errs = Vec::new();
    let mut failures = String::from("seed,kind,detail\n");
    for (seed, res) in &results {
        match res {
            Ok(rec) => {
                ok += 1;
                for (k, theta) in rec.theta_history.iter().enumerate() {
                    runs.push_str(&format!("{seed},{k}"));
                    for &i in &cfg.parameters.indices {
                        runs.push_str(&format!(",{}", theta[i]));
                    }
                    match rec.state_errors.get(k) {
                        Some(e) => runs.push_str(&format!(",{e}\n")),
                        None => runs.push_str(",\n"),
                    }
                }
                for (slot, &i) in finals.iter_mut().zip(&cfg.parameters.indices) {
                    slot.push(rec.final_params[i]);
                }
                if let Some(e) = rec.state_errors.last() {
                    final_errs.push(*e);
                }
            }
            Err(msg) => failures.push_str(&format!("{seed},failed,{msg}\n")),
        }
    }

    let mut summary = String::from("quantity,median,std\n");
    for (slot, &i) in finals.iter_mut().zip(&cfg.parameters.indices) {
        if !slot.is_empty() {
            let sd = ensemble::std_dev(slot);
            summary.push_str(&format!("theta{i},{},{sd}\n", ensemble::median(slot)));
        }
    }
    if !final_errs.is_empty() {
        let sd = ensemble::std_dev(&final_errs);
        summary.push_str(&format!("state_err,{},{sd}\n", ensemble::median(&mut final_errs)));
    }

    emit::write_all(
        &dir,
        &[
            ("param_runs.csv", runs),
            ("param_summary.csv", summary),
            ("failures.csv", failures),
            ("config.json", emit::config_json(&cfg)),
        ],
    )
    .map_err(io_err)?;
    println!("{ok} of {} parameter runs completed; wrote {}", results.len(), dir.display());
    Ok(if ok > 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_compare(common: &Common) -> Result<ExitCode, String> {
    let cfg = load(common, Some(Mode::CompareWc))?;
    let pairs = ensemble::run_compare_ensemble(&cfg);
    let dir = cfg.output_dir();

    let gn_results: Vec<_> = pairs
        .iter()
        .map(|p| ensemble::RealizationResult {
            index: p.gn.index,
            outcome: match &p.gn.outcome {
                Outcome::Done(r) => Outcome::Done(r.clone()),
                Outcome::IllPosed(r) => Outcome::IllPosed(r.clone()),
                Outcome::NoAlphaFound(m) => Outcome::NoAlphaFound(m.clone()),
                Outcome::Failed(m) => Outcome::Failed(m.clone()),
            },
        })
        .collect();
    let gn_summary = ensemble::summarize(gn_results);

    let mut table = String::from("method,metric,median\n");
    let mut push_median = |method: &str, metric: &str, vals: &mut Vec<f64>| {
        if !vals.is_empty() {
            table.push_str(&format!("{method},{metric},{}\n", ensemble::median(vals)));
        }
    };
    let mut gn_obs = Vec::new();
    let mut gn_unobs = Vec::new();
    let mut lm_obs = Vec::new();
    let mut lm_unobs = Vec::new();
    let mut obs_err = Vec::new();
    for p in &pairs {
        if let Outcome::Done(rec) = &p.gn.outcome {
            if let Some(last) = rec.records.last() {
                if let (Some(o), Some(u)) = (last.err_obs, last.err_unobs) {
                    gn_obs.push(o);
                    gn_unobs.push(u);
                }
            }
        }
        if let Ok((_, m)) = &p.baseline.lm {
            lm_obs.push(m.err_obs);
            lm_unobs.push(m.err_unobs);
        }
        if p.obs_err.is_finite() {
            obs_err.push(p.obs_err);
        }
    }
    push_median("gauss_newton", "err_obs", &mut gn_obs);
    push_median("gauss_newton", "err_unobs", &mut gn_unobs);
    push_median("wc4dvar_lm", "err_obs", &mut lm_obs);
    push_median("wc4dvar_lm", "err_unobs", &mut lm_unobs);
    push_median("observations", "err_obs", &mut obs_err);

    emit::write_all(
        &dir,
        &[
            ("runs.csv", emit::runs_csv(&gn_summary)),
            ("baseline_runs.csv", emit::baseline_runs_csv(&pairs)),
            ("compare_summary.csv", table),
            ("failures.csv", emit::failures_csv(&gn_summary)),
            ("config.json", emit::config_json(&cfg)),
        ],
    )
    .map_err(io_err)?;
    println!(
        "compared {} realizations ({} Gauss-Newton completed); wrote {}",
        pairs.len(),
        gn_summary.completed,
        dir.display()
    );
    Ok(ExitCode::from(ensemble::exit_code(&gn_summary) as u8))
}

fn cmd_sweep(common: &Common, kind: SweepKind) -> Result<ExitCode, String> {
    let mode = match kind {
        SweepKind::Alpha => Mode::SweepAlpha,
        SweepKind::Gamma => Mode::SweepGamma,
        SweepKind::Obs => Mode::SweepObs,
        SweepKind::Window => Mode::SweepWindow,
    };
    let cfg = load(common, Some(mode))?;
    let points = match kind {
        SweepKind::Alpha => ensemble::sweep_alpha(&cfg),
        SweepKind::Gamma => ensemble::sweep_gamma(&cfg),
        SweepKind::Obs => ensemble::sweep_obs(&cfg),
        SweepKind::Window => ensemble::sweep_window(&cfg),
    };
    let dir = cfg.output_dir();
    let mut files = vec![
        ("sweep.csv", emit::sweep_csv(&points, cfg.sweep.err_tol)),
        ("curves.csv", emit::curves_csv(&points)),
        ("config.json", emit::config_json(&cfg)),
    ];
    let skips = emit::skips_csv(&points);
    if skips.lines().count() > 1 {
        files.push(("skips.csv", skips));
    }
    emit::write_all(&dir, &files).map_err(io_err)?;
    let completed: usize = points.iter().map(|p| p.summary.completed).sum();
    let total: usize = points.iter().map(|p| p.summary.results.len()).sum();
    println!("sweep finished: {completed} of {total} realizations completed; wrote {}", dir.display());
    if completed > 0 {
        return Ok(ExitCode::SUCCESS);
    }
    // No point produced a completed run; report the dominant failure kind.
    let all = |pred: &dyn Fn(&Outcome) -> bool| {
        points
            .iter()
            .flat_map(|p| p.summary.results.iter())
            .all(|r| pred(&r.outcome))
    };
    if total > 0 && all(&|o| matches!(o, Outcome::NoAlphaFound(_))) {
        Ok(ExitCode::from(2))
    } else if total > 0 && all(&|o| matches!(o, Outcome::IllPosed(_))) {
        Ok(ExitCode::from(3))
    } else {
        Ok(ExitCode::from(1))
    }
}
