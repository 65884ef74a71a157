//! Analysis search-space sizes of base studies.
//!
//! `space1 = outcomes × predictors × lags`, `space2 = 2^covariates`,
//! `space3 = space1 × space2`, all in checked integer arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::quantile_type6;

/// Largest covariate count accepted; keeps `2^covariates` inside `u64`.
pub const MAX_COVARIATES: u32 = 62;

/// Counts read for one base study, before the spaces are derived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyCounts {
    pub id: String,
    pub outcomes: u64,
    pub predictors: u64,
    pub covariates: u32,
    pub lags: u64,
    /// Food-frequency questionnaire size; reported only.
    pub foods: u64,
}

impl StudyCounts {
    pub fn new(id: impl Into<String>, outcomes: u64, predictors: u64, covariates: u32) -> Self {
        StudyCounts {
            id: id.into(),
            outcomes,
            predictors,
            covariates,
            lags: 1,
            foods: 0,
        }
    }

    pub fn lags(mut self, lags: u64) -> Self {
        self.lags = lags;
        self
    }

    pub fn foods(mut self, foods: u64) -> Self {
        self.foods = foods;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpaceRecord {
    pub id: String,
    pub outcomes: u64,
    pub predictors: u64,
    pub covariates: u32,
    pub lags: u64,
    pub foods: u64,
    pub space1: u64,
    pub space2: u64,
    pub space3: u64,
}

pub fn compute_spaces(counts: &StudyCounts) -> Result<SearchSpaceRecord> {
    for (name, v) in [
        ("outcomes", counts.outcomes),
        ("predictors", counts.predictors),
        ("lags", counts.lags),
    ] {
        if v == 0 {
            return Err(Error::domain(
                "compute_spaces",
                format!("study {}: {name} must be >= 1", counts.id),
            ));
        }
    }
    if counts.covariates > MAX_COVARIATES {
        return Err(Error::Overflow(format!(
            "space2 for study {}: {} covariates exceeds the limit of {MAX_COVARIATES}",
            counts.id, counts.covariates
        )));
    }
    let overflow = |what: &str| Error::Overflow(format!("{what} for study {}", counts.id));
    let space1 = counts
        .outcomes
        .checked_mul(counts.predictors)
        .and_then(|v| v.checked_mul(counts.lags))
        .ok_or_else(|| overflow("space1"))?;
    let space2 = 1u64 << counts.covariates;
    let space3 = space1.checked_mul(space2).ok_or_else(|| overflow("space3"))?;
    Ok(SearchSpaceRecord {
        id: counts.id.clone(),
        outcomes: counts.outcomes,
        predictors: counts.predictors,
        covariates: counts.covariates,
        lags: counts.lags,
        foods: counts.foods,
        space1,
        space2,
        space3,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceSummary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Median and quartiles of `space3`, type-6 quantiles.
pub fn summarize_spaces(records: &[SearchSpaceRecord]) -> Result<SpaceSummary> {
    if records.is_empty() {
        return Err(Error::Empty("summarize_spaces"));
    }
    // Every space3 in practice is far below 2^53, so the conversion is exact.
    let values: Vec<f64> = records.iter().map(|r| r.space3 as f64).collect();
    Ok(SpaceSummary {
        median: quantile_type6(&values, 0.5)?,
        q1: quantile_type6(&values, 0.25)?,
        q3: quantile_type6(&values, 0.75)?,
    })
}
