use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Serialize;

use lfm_core::kalman::{kalman_filter, rts_smoother, TimeGrid};
use lfm_core::lfm::StateLayout;
use lfm_core::matrixnum::Gaussian;
use lfm_core::oracle::{simulate_lfm, simulate_slds, SimulationOutput};
use lfm_core::slds::{adf, ec, extract_switch_points, ModelBank};

use crate::config::{ExperimentConfig, FreeParam};
use crate::data::{read_data, sibling, write_data, write_table, Header, VERSION};
use crate::error::{CliError, Result};
use crate::optimize::{nelder_mead, NelderMeadOptions};

/// Half-width of the credible band in standard deviations.
const BAND_Z: f64 = 1.96;

fn header(config: &ExperimentConfig, seed: Option<u64>) -> Header {
    Header { seed: seed.unwrap_or(config.seed), config_hash: config.hash() }
}

fn band_columns(layout: &StateLayout) -> Vec<String> {
    layout
        .slots()
        .iter()
        .flat_map(|s| [format!("{s}_mean"), format!("{s}_lower"), format!("{s}_upper")])
        .collect()
}

fn band_cells(g: &Gaussian) -> Vec<Option<f64>> {
    g.mean
        .iter()
        .zip(g.cov.diagonal().iter())
        .flat_map(|(&m, &v)| {
            let half = BAND_Z * v.max(0.0).sqrt();
            [Some(m), Some(m - half), Some(m + half)]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateReport {
    pub seed: u64,
    pub data_path: PathBuf,
    pub truth_path: PathBuf,
    pub simulation: SimulationOutput,
}

/// Writes the simulated data to `out` and the latent truth next to it
/// (`<stem>_truth.<ext>`).
pub fn simulate(config: &ExperimentConfig, out: &Path, seed: Option<u64>) -> Result<SimulateReport> {
    let head = header(config, seed);
    let grid = config.time_grid()?;
    let (simulation, layout, bank) = if config.slds.is_some() {
        let (bank, pi) = config.bank()?;
        let meas = config.measurement(bank.layout())?;
        let sim = simulate_slds(&bank, &pi, &meas, &grid, head.seed).map_err(CliError::from_core_run)?;
        (sim, bank.layout().clone(), Some(bank))
    } else {
        let model = config.model()?;
        let meas = config.measurement(&model.layout)?;
        let sim = simulate_lfm(&model, &meas, &grid, head.seed).map_err(CliError::from_core_run)?;
        (sim, model.layout.clone(), None)
    };

    let data_grid = simulation.observed_grid().map_err(CliError::from_core_run)?;
    write_data(out, &head, &data_grid)?;

    let truth_path = sibling(out, "truth");
    let mut columns = vec!["t".to_string()];
    if bank.is_some() {
        columns.extend(["model".to_string(), "reset".to_string()]);
    }
    columns.extend(layout.slots().iter().map(|s| s.to_string()));
    let rows = (0..simulation.times.len()).map(|k| {
        let mut row = vec![Some(simulation.times[k])];
        if let (Some(bank), Some(models)) = (&bank, &simulation.models) {
            let s = models[k];
            row.push(Some(s as f64));
            row.push(Some(if bank.is_reset(s) { 1.0 } else { 0.0 }));
        }
        row.extend(simulation.states[k].iter().map(|&v| Some(v)));
        row
    });
    write_table(&truth_path, &head, &columns, rows)?;
    Ok(SimulateReport { seed: head.seed, data_path: out.to_path_buf(), truth_path, simulation })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothReport {
    pub loglik: f64,
    pub steps: usize,
}

/// Kalman filter plus RTS smoother; writes mean and 95% band for every
/// state slot.
pub fn smooth(config: &ExperimentConfig, data: &Path, out: &Path, seed: Option<u64>) -> Result<SmoothReport> {
    let model = config.model()?;
    let meas = config.measurement(&model.layout)?;
    let grid = read_data(data, config.output_model.outputs)?;
    let filt = kalman_filter(&model, &meas, &grid).map_err(CliError::from_core_run)?;
    let smoothed = rts_smoother(&filt).map_err(CliError::from_core_run)?;

    let mut columns = vec!["t".to_string()];
    columns.extend(band_columns(&model.layout));
    let rows = grid
        .times()
        .iter()
        .zip(&smoothed.smoothed)
        .map(|(&t, g)| std::iter::once(Some(t)).chain(band_cells(g)).collect());
    write_table(out, &header(config, seed), &columns, rows)?;
    Ok(SmoothReport { loglik: filt.loglik, steps: grid.len() })
}

fn model_column(bank: &ModelBank, s: usize) -> String {
    if bank.is_reset(s) {
        return "p_reset".to_string();
    }
    let ls: Vec<String> = bank.regular()[s].lengthscales.iter().map(|l| l.to_string()).collect();
    format!("p_l={}", ls.join(";"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentReport {
    pub switch_times: Vec<f64>,
    pub switches_path: PathBuf,
    /// Approximate log marginal likelihood from the forward filter.
    pub loglik: f64,
}

/// Forward Gaussian-sum filter and backward smoother over the model bank;
/// writes smoothed model probabilities and state bands to `out`, detected
/// switch times to `<stem>_switches.<ext>`.
pub fn segment(config: &ExperimentConfig, data: &Path, out: &Path, threshold: Option<f64>, seed: Option<u64>) -> Result<SegmentReport> {
    let threshold = threshold.unwrap_or(config.threshold);
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(CliError::config("threshold", format!("must lie in (0, 1), got {threshold}")));
    }
    let (bank, pi) = config.bank()?;
    let meas = config.measurement(bank.layout())?;
    let grid = read_data(data, config.output_model.outputs)?;
    let forward = adf(&bank, &pi, &meas, &grid, config.inference.adf_budget).map_err(CliError::from_core_run)?;
    let backward = ec(&bank, &pi, &grid, &forward, config.inference.ec_budget).map_err(CliError::from_core_run)?;
    let moments = backward
        .smoothed
        .iter()
        .map(|mix| mix.moments())
        .collect::<lfm_core::Result<Vec<_>>>()
        .map_err(CliError::from_core_run)?;

    let head = header(config, seed);
    let mut columns = vec!["t".to_string()];
    columns.extend((0..bank.len()).map(|s| model_column(&bank, s)));
    columns.extend(band_columns(bank.layout()));
    let rows = (0..grid.len()).map(|k| {
        let mut row = vec![Some(grid.times()[k])];
        row.extend(backward.model_probs[k].iter().map(|&p| Some(p)));
        row.extend(band_cells(&moments[k]));
        row
    });
    write_table(out, &head, &columns, rows)?;

    let reset: Vec<f64> = backward.model_probs.iter().map(|p| p[bank.reset_index()]).collect();
    let switch_times = extract_switch_points(&reset, grid.times(), threshold).map_err(CliError::from_core_run)?;
    let switches_path = sibling(out, "switches");
    write_table(&switches_path, &head, &["t".to_string()], switch_times.iter().map(|&t| vec![Some(t)]))?;
    Ok(SegmentReport { switch_times, switches_path, loglik: forward.loglik })
}

/// Log marginal likelihood the fit maximizes: exact for a single model,
/// the forward-filter approximation when the config has a switching section.
pub fn objective(config: &ExperimentConfig, grid: &TimeGrid) -> Result<f64> {
    if config.slds.is_some() {
        let (bank, pi) = config.bank()?;
        let meas = config.measurement(bank.layout())?;
        Ok(adf(&bank, &pi, &meas, grid, config.inference.fit_budget).map_err(CliError::from_core_run)?.loglik)
    } else {
        let model = config.model()?;
        let meas = config.measurement(&model.layout)?;
        Ok(kalman_filter(&model, &meas, grid).map_err(CliError::from_core_run)?.loglik)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedParam {
    pub name: &'static str,
    pub initial: Vec<f64>,
    pub fitted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub lfm_version: &'static str,
    pub seed: u64,
    pub config_sha256: String,
    pub initial_loglik: f64,
    pub final_loglik: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub parameters: Vec<FittedParam>,
    pub fitted_config: ExperimentConfig,
}

/// Maximizes the log marginal likelihood over the free parameters of the
/// config (log scale, Nelder–Mead).
pub fn fit(config: &ExperimentConfig, data: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<FitReport> {
    let grid = read_data(data, config.output_model.outputs)?;
    let mut seen = HashSet::new();
    let free: Vec<FreeParam> = config.fit.free.iter().copied().filter(|p| seen.insert(*p)).collect();
    let initial: Vec<Vec<f64>> = free.iter().map(|&p| config.param_values(p)).collect();
    let theta0: Vec<f64> = initial.iter().flatten().map(|v| v.ln()).collect();

    let with_theta = |theta: &[f64]| {
        let mut c = config.clone();
        let mut offset = 0;
        for (p, init) in free.iter().zip(&initial) {
            let values: Vec<f64> = theta[offset..offset + init.len()].iter().map(|v| v.exp()).collect();
            c.set_param_values(*p, &values);
            offset += init.len();
        }
        c
    };

    let initial_loglik = objective(config, &grid)?;
    if !initial_loglik.is_finite() {
        return Err(CliError::Numerical(format!("log-likelihood at the initial parameters is {initial_loglik}")));
    }
    let best = nelder_mead(
        |theta| match objective(&with_theta(theta), &grid) {
            Ok(ll) if ll.is_finite() => -ll,
            _ => f64::INFINITY,
        },
        &theta0,
        &NelderMeadOptions::default(),
    );
    let (fitted_config, final_loglik) = if -best.value > initial_loglik {
        (with_theta(&best.x), -best.value)
    } else {
        (config.clone(), initial_loglik)
    };
    let parameters = free
        .iter()
        .zip(initial)
        .map(|(&p, init)| FittedParam { name: p.name(), initial: init, fitted: fitted_config.param_values(p) })
        .collect();
    let report = FitReport {
        lfm_version: VERSION,
        seed: seed.unwrap_or(config.seed),
        config_sha256: config.hash(),
        initial_loglik,
        final_loglik,
        evaluations: best.evals,
        converged: best.converged,
        parameters,
        fitted_config,
    };
    if let Some(path) = out {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))?;
    }
    Ok(report)
}
