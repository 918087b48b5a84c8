use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::FitResult;
use crate::error::{Error, Result};
use crate::model::ModelRegistry;

/// The parts of a fit needed for information criteria and tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: String,
    pub loglik: f64,
    pub n_params: usize,
    pub n_effective: usize,
    pub parameter_ids: Vec<String>,
}

impl From<&FitResult> for FitSummary {
    fn from(f: &FitResult) -> Self {
        FitSummary {
            model: f.model.clone(),
            loglik: f.loglik,
            n_params: f.n_params,
            n_effective: f.n_effective,
            parameter_ids: f.params.ids.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub loglik: f64,
    pub n_params: usize,
    pub aic: f64,
    pub bic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub small: String,
    pub large: String,
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

/// Outcome of comparing a model against its predecessor in a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Comparison {
    Test(LrtResult),
    NotNested { small: String, large: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub sample_size: usize,
    pub models: Vec<ModelSummary>,
    /// `pairwise[i]` compares model `i` with model `i + 1`.
    pub pairwise: Vec<Comparison>,
}

pub fn aic(loglik: f64, n_params: usize) -> f64 {
    2.0 * n_params as f64 - 2.0 * loglik
}

pub fn bic(loglik: f64, n_params: usize, sample_size: usize) -> f64 {
    (sample_size as f64).ln() * n_params as f64 - 2.0 * loglik
}

fn nested(small: &FitSummary, large: &FitSummary) -> bool {
    if small.model == large.model && small.parameter_ids == large.parameter_ids {
        return true;
    }
    match ModelRegistry::builtin().is_nested(&small.model, &large.model) {
        Ok(answer) => answer,
        // custom specs: nested when every coefficient of the small model
        // also appears in the large one
        Err(_) => {
            !small.parameter_ids.is_empty()
                && small.n_effective <= large.n_effective
                && small
                    .parameter_ids
                    .iter()
                    .all(|id| large.parameter_ids.contains(id))
        }
    }
}

/// Chi-square likelihood-ratio test of `small` against `large`.
pub fn likelihood_ratio_test(small: &FitSummary, large: &FitSummary) -> Result<LrtResult> {
    if !nested(small, large) {
        return Err(Error::NotNested {
            small: small.model.clone(),
            large: large.model.clone(),
        });
    }
    let df = large.n_effective.saturating_sub(small.n_effective);
    let statistic = (2.0 * (large.loglik - small.loglik)).max(0.0);
    let p_value = if df == 0 || statistic == 0.0 {
        1.0
    } else {
        ChiSquared::new(df as f64)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .sf(statistic)
    };
    Ok(LrtResult {
        small: small.model.clone(),
        large: large.model.clone(),
        statistic,
        degrees_of_freedom: df,
        p_value,
    })
}

/// AIC and BIC for every fit, and a likelihood-ratio test of each model
/// against the one listed before it where the pair is nested.
pub fn compare_sequence(fits: &[FitSummary], sample_size: usize) -> ModelComparison {
    let models = fits
        .iter()
        .map(|f| ModelSummary {
            model: f.model.clone(),
            loglik: f.loglik,
            n_params: f.n_params,
            aic: aic(f.loglik, f.n_params),
            bic: bic(f.loglik, f.n_params, sample_size),
        })
        .collect();
    let pairwise = fits
        .windows(2)
        .map(|w| match likelihood_ratio_test(&w[0], &w[1]) {
            Ok(t) => Comparison::Test(t),
            Err(_) => Comparison::NotNested {
                small: w[0].model.clone(),
                large: w[1].model.clone(),
            },
        })
        .collect();
    ModelComparison {
        sample_size,
        models,
        pairwise,
    }
}
