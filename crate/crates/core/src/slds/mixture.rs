use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrixnum::{symmetrize, Gaussian};

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGaussian {
    pub weight: f64,
    pub gaussian: Gaussian,
}

/// One mixture component with its weight in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub log_weight: f64,
    pub gaussian: Gaussian,
}

/// Gaussian mixture split by switching model. Weights are joint over
/// `(model, component)` and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub per_model: Vec<Vec<Component>>,
}

pub(crate) fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl GaussianMixture {
    pub fn models(&self) -> usize {
        self.per_model.len()
    }

    pub fn components(&self) -> impl Iterator<Item = (usize, &Component)> {
        self.per_model.iter().enumerate().flat_map(|(s, comps)| comps.iter().map(move |c| (s, c)))
    }

    pub fn total_weight(&self) -> f64 {
        self.components().map(|(_, c)| c.log_weight.exp()).sum()
    }

    /// Marginal probability of each model.
    pub fn model_probs(&self) -> Vec<f64> {
        self.per_model.iter().map(|comps| comps.iter().map(|c| c.log_weight.exp()).sum()).collect()
    }

    /// Moment-matched single Gaussian of the whole mixture.
    pub fn moments(&self) -> Result<Gaussian> {
        let all: Vec<WeightedGaussian> = self
            .components()
            .map(|(_, c)| WeightedGaussian { weight: c.log_weight.exp(), gaussian: c.gaussian.clone() })
            .collect();
        moment_match(&all)
    }

    /// Shifts all log weights so that they sum to one; returns the log of
    /// the previous total.
    pub(crate) fn normalize(&mut self) -> Result<f64> {
        let log_total = log_sum_exp(self.components().map(|(_, c)| c.log_weight).collect::<Vec<_>>());
        if !log_total.is_finite() {
            return Err(Error::numerical("all mixture weights vanished"));
        }
        for comps in &mut self.per_model {
            for c in comps.iter_mut() {
                c.log_weight -= log_total;
            }
        }
        Ok(log_total)
    }
}

/// Single Gaussian with the same total weight, mean and covariance as `mix`.
pub fn moment_match(mix: &[WeightedGaussian]) -> Result<Gaussian> {
    let Some(first) = mix.first() else {
        return Err(Error::invalid("cannot moment-match an empty mixture"));
    };
    let total: f64 = mix.iter().map(|c| c.weight).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::invalid(format!("mixture weight must be positive, got {total}")));
    }
    let n = first.gaussian.dim();
    let mut mean = DVector::zeros(n);
    for c in mix {
        mean.axpy(c.weight / total, &c.gaussian.mean, 1.0);
    }
    let mut cov = DMatrix::zeros(n, n);
    for c in mix {
        let w = c.weight / total;
        let d = &c.gaussian.mean - &mean;
        cov += (&c.gaussian.cov + &d * d.transpose()) * w;
    }
    Ok(Gaussian { mean, cov: symmetrize(&cov) })
}

/// Keeps the `k − 1` heaviest components and merges the rest into one.
/// Equal weights keep the lower index.
pub fn collapse(mix: &[WeightedGaussian], k: usize) -> Result<Vec<WeightedGaussian>> {
    if k == 0 {
        return Err(Error::invalid("collapse target must be at least 1"));
    }
    if mix.iter().any(|c| !(c.weight >= 0.0) || !c.weight.is_finite()) {
        return Err(Error::invalid("mixture weights must be finite and non-negative"));
    }
    if mix.len() <= k {
        return Ok(mix.to_vec());
    }
    let mut order: Vec<usize> = (0..mix.len()).collect();
    order.sort_by(|&a, &b| mix[b].weight.total_cmp(&mix[a].weight));
    let mut out: Vec<WeightedGaussian> = order[..k - 1].iter().map(|&i| mix[i].clone()).collect();
    let mut rest: Vec<usize> = order[k - 1..].to_vec();
    rest.sort_unstable();
    let tail: Vec<WeightedGaussian> = rest.iter().map(|&i| mix[i].clone()).collect();
    let weight: f64 = tail.iter().map(|c| c.weight).sum();
    let gaussian = if weight > 0.0 {
        moment_match(&tail)?
    } else {
        tail[0].gaussian.clone()
    };
    out.push(WeightedGaussian { weight, gaussian });
    Ok(out)
}

/// Collapses log-weighted components without leaving log space.
pub(crate) fn collapse_log(components: Vec<Component>, k: usize) -> Result<Vec<Component>> {
    let components: Vec<Component> = components.into_iter().filter(|c| c.log_weight > f64::NEG_INFINITY).collect();
    if components.len() <= k {
        return Ok(components);
    }
    let shift = components.iter().map(|c| c.log_weight).fold(f64::NEG_INFINITY, f64::max);
    let linear: Vec<WeightedGaussian> = components
        .into_iter()
        .map(|c| WeightedGaussian { weight: (c.log_weight - shift).exp(), gaussian: c.gaussian })
        .collect();
    Ok(collapse(&linear, k)?
        .into_iter()
        .map(|c| Component { log_weight: c.weight.ln() + shift, gaussian: c.gaussian })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(w: f64, m: f64, p: f64) -> WeightedGaussian {
        WeightedGaussian { weight: w, gaussian: Gaussian { mean: DVector::from_element(1, m), cov: DMatrix::from_element(1, 1, p) } }
    }

    #[test]
    fn small_mixtures_unchanged() {
        let mix = vec![scalar(0.3, 1.0, 1.0), scalar(0.7, 2.0, 0.5)];
        assert_eq!(collapse(&mix, 2).unwrap(), mix);
        assert_eq!(collapse(&mix, 5).unwrap(), mix);
        assert!(collapse(&mix, 0).is_err());
    }

    #[test]
    fn symmetric_pair_merges() {
        let out = collapse(&[scalar(0.5, -1.0, 1.0), scalar(0.5, 1.0, 1.0)], 1).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].weight, 1.0);
        assert!(out[0].gaussian.mean[0].abs() < 1e-15);
        assert!((out[0].gaussian.cov[(0, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ties_keep_lower_index() {
        let mix = vec![scalar(0.25, 0.0, 1.0), scalar(0.25, 1.0, 1.0), scalar(0.25, 2.0, 1.0), scalar(0.25, 3.0, 1.0)];
        let out = collapse(&mix, 3).unwrap();
        assert_eq!(out[0], mix[0]);
        assert_eq!(out[1], mix[1]);
        assert!((out[2].gaussian.mean[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn log_space_collapse_survives_tiny_weights() {
        let comps: Vec<Component> = (0..4)
            .map(|i| Component {
                log_weight: -2000.0 - i as f64,
                gaussian: Gaussian { mean: DVector::from_element(1, i as f64), cov: DMatrix::from_element(1, 1, 1.0) },
            })
            .collect();
        let out = collapse_log(comps, 2).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].log_weight, -2000.0);
        assert!(out[1].log_weight.is_finite());
    }

    fn arb_mixture() -> impl Strategy<Value = Vec<WeightedGaussian>> {
        prop::collection::vec((0.01f64..1.0, prop::collection::vec(-3.0f64..3.0, 2), prop::collection::vec(-1.0f64..1.0, 4)), 2..9)
            .prop_map(|raw| {
                let total: f64 = raw.iter().map(|r| r.0).sum();
                raw.into_iter()
                    .map(|(w, m, l)| {
                        let l = DMatrix::from_row_slice(2, 2, &l);
                        let cov = &l * l.transpose() + DMatrix::identity(2, 2) * 0.1;
                        WeightedGaussian { weight: w / total, gaussian: Gaussian { mean: DVector::from_vec(m), cov } }
                    })
                    .collect()
            })
    }

    proptest! {
        #[test]
        fn collapse_preserves_moments(mix in arb_mixture(), k in 1usize..5) {
            let before = moment_match(&mix).unwrap();
            let out = collapse(&mix, k).unwrap();
            prop_assert!(out.len() <= k);
            let after = moment_match(&out).unwrap();
            let w_before: f64 = mix.iter().map(|c| c.weight).sum();
            let w_after: f64 = out.iter().map(|c| c.weight).sum();
            prop_assert!((w_before - w_after).abs() <= 1e-12);
            prop_assert!((&before.mean - &after.mean).amax() <= 1e-12);
            prop_assert!((&before.cov - &after.cov).amax() <= 1e-12);
        }

        #[test]
        fn kept_components_are_heaviest(mix in arb_mixture(), k in 2usize..5) {
            let out = collapse(&mix, k).unwrap();
            if mix.len() > k {
                let mut sorted: Vec<f64> = mix.iter().map(|c| c.weight).collect();
                sorted.sort_by(|a, b| b.total_cmp(a));
                for (c, w) in out.iter().zip(&sorted[..k - 1]) {
                    prop_assert_eq!(c.weight, *w);
                }
            }
        }
    }
}
