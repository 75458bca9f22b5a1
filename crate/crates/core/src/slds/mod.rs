//! Switching latent force models: a bank of regular models plus a reset
//! model under a Markov switch prior, with Gaussian-sum filtering (ADF) and
//! expectation-correction smoothing (EC).

mod bank;
mod inference;
mod mixture;

pub use bank::{
    build_model_bank, check_stochastic, initial_model_probs, transition_matrix, BankTransitions, ModelBank, RegularModel,
    ResetPrior, SwitchTransitionSpec,
};
pub use inference::{adf, ec, AdfResult, EcResult};
pub use mixture::{collapse, moment_match, Component, GaussianMixture, WeightedGaussian};

use crate::error::{Error, Result};

pub const DEFAULT_SWITCH_THRESHOLD: f64 = 0.2;

/// Indices where the reset probability exceeds `threshold`; each run of
/// consecutive exceedances contributes only its (first) maximum.
pub fn switch_indices(reset_probs: &[f64], threshold: f64) -> Result<Vec<usize>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("switch threshold must lie in (0, 1), got {threshold}")));
    }
    let mut out = Vec::new();
    let mut run: Option<usize> = None;
    for (k, &p) in reset_probs.iter().enumerate() {
        if p > threshold {
            run = match run {
                Some(best) if reset_probs[best] >= p => Some(best),
                _ => Some(k),
            };
        } else if let Some(best) = run.take() {
            out.push(best);
        }
    }
    out.extend(run);
    Ok(out)
}

pub fn extract_switch_points(reset_probs: &[f64], times: &[f64], threshold: f64) -> Result<Vec<f64>> {
    if reset_probs.len() != times.len() {
        return Err(Error::invalid("need one reset probability per time"));
    }
    Ok(switch_indices(reset_probs, threshold)?.into_iter().map(|k| times[k]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_switches() {
        assert!(extract_switch_points(&[0.0; 5], &[0.0, 1.0, 2.0, 3.0, 4.0], DEFAULT_SWITCH_THRESHOLD).unwrap().is_empty());
    }

    #[test]
    fn run_merges_to_peak() {
        let p = [0.0, 0.1, 0.4, 0.7, 0.3, 0.1, 0.0];
        let t: Vec<f64> = (0..7).map(|k| k as f64 * 0.5).collect();
        assert_eq!(extract_switch_points(&p, &t, 0.2).unwrap(), vec![1.5]);
    }

    #[test]
    fn separate_runs_and_trailing_run() {
        let p = [0.5, 0.1, 0.3, 0.3, 0.1, 0.9];
        assert_eq!(switch_indices(&p, 0.2).unwrap(), vec![0, 2, 5]);
        assert!(switch_indices(&p, 1.0).is_err());
        assert!(extract_switch_points(&p, &[0.0], 0.2).is_err());
    }
}
