//! Base studies and the datasets they form.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::normal_two_sided_p;
use crate::scalar::Real;

/// Reported direction of a study's effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increase,
    Decrease,
    #[default]
    Unspecified,
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "increase" | "up" | "+" => Ok(Direction::Increase),
            "decrease" | "down" | "-" => Ok(Direction::Decrease),
            "" | "unspecified" | "none" => Ok(Direction::Unspecified),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Increase => "increase",
            Direction::Decrease => "decrease",
            Direction::Unspecified => "unspecified",
        })
    }
}

/// Summary statistics of one base study. `effect` is on the log risk-ratio scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStudy<T> {
    pub id: String,
    pub p_value: Option<T>,
    pub effect: Option<T>,
    pub se: Option<T>,
    #[serde(default)]
    pub direction: Direction,
}

impl<T: Real> BaseStudy<T> {
    pub fn from_p(id: impl Into<String>, p: T) -> Self {
        BaseStudy {
            id: id.into(),
            p_value: Some(p),
            effect: None,
            se: None,
            direction: Direction::Unspecified,
        }
    }

    /// Study given as an effect with its standard error. Direction follows the sign.
    pub fn from_effect(id: impl Into<String>, effect: T, se: T) -> Self {
        let direction = if effect > T::zero() {
            Direction::Increase
        } else if effect < T::zero() {
            Direction::Decrease
        } else {
            Direction::Unspecified
        };
        BaseStudy {
            id: id.into(),
            p_value: None,
            effect: Some(effect),
            se: Some(se),
            direction,
        }
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    /// The reported p-value, or one derived from effect/se when absent.
    pub fn p_or_derived(&self) -> Result<T> {
        match self.p_value {
            Some(p) => Ok(p),
            None => derive_p_from_effect(self),
        }
    }

    /// `(effect, se)` when both are present.
    pub fn effect_se(&self) -> Option<(T, T)> {
        self.effect.zip(self.se)
    }
}

/// Two-sided normal-test p-value `2 Φ(-|effect / se|)`.
pub fn derive_p_from_effect<T: Real>(study: &BaseStudy<T>) -> Result<T> {
    let (effect, se) = study.effect_se().ok_or_else(|| {
        Error::domain(
            "derive_p_from_effect",
            format!("study {} has no effect/se pair", study.id),
        )
    })?;
    if se.is_nan() || se <= T::zero() {
        return Err(Error::domain(
            "derive_p_from_effect",
            format!("study {}: se = {se} must be > 0", study.id),
        ));
    }
    normal_two_sided_p(effect / se)
}

/// Fills in missing p-values from effect/se.
pub fn fill_derived_p<T: Real>(study: &mut BaseStudy<T>) -> Result<()> {
    if study.p_value.is_none() {
        study.p_value = Some(derive_p_from_effect(study)?);
    }
    Ok(())
}

/// An ordered set of base studies entering one meta-analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaDataset<T> {
    pub label: String,
    pub studies: Vec<BaseStudy<T>>,
}

impl<T: Real> MetaDataset<T> {
    pub fn new(label: impl Into<String>, studies: Vec<BaseStudy<T>>) -> Self {
        MetaDataset {
            label: label.into(),
            studies,
        }
    }

    /// Dataset of bare p-values with ids `S1..Sk`.
    pub fn from_pvalues(label: impl Into<String>, ps: &[T]) -> Self {
        let studies = ps
            .iter()
            .enumerate()
            .map(|(i, &p)| BaseStudy::from_p(format!("S{}", i + 1), p))
            .collect();
        MetaDataset::new(label, studies)
    }

    /// Dataset of effect/se pairs with ids `S1..Sk`.
    pub fn from_effects(label: impl Into<String>, effects: &[T], ses: &[T]) -> Self {
        let studies = effects
            .iter()
            .zip(ses)
            .enumerate()
            .map(|(i, (&e, &s))| BaseStudy::from_effect(format!("S{}", i + 1), e, s))
            .collect();
        MetaDataset::new(label, studies)
    }

    pub fn len(&self) -> usize {
        self.studies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.studies.is_empty()
    }

    /// P-values in study order, deriving from effect/se where needed.
    pub fn pvalues(&self) -> Result<Vec<T>> {
        self.studies.iter().map(BaseStudy::p_or_derived).collect()
    }

    /// Effects and standard errors in study order; errors if any study lacks them.
    pub fn effects_and_ses(&self) -> Result<(Vec<T>, Vec<T>)> {
        self.studies
            .iter()
            .map(|s| {
                s.effect_se().ok_or_else(|| {
                    Error::domain("effects_and_ses", format!("study {} has no effect/se", s.id))
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(|pairs| pairs.into_iter().unzip())
    }

    /// Copy without the study at `index`.
    pub fn without(&self, index: usize) -> Self {
        let mut studies = self.studies.clone();
        studies.remove(index);
        MetaDataset::new(self.label.clone(), studies)
    }
}

/// Which invariant a study broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    PValueRange,
    SeNonPositive,
    MissingStatistic,
    DuplicateId,
    NonFinite,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::PValueRange => "p_value out of (0,1]",
            Rule::SeNonPositive => "se must be > 0",
            Rule::MissingStatistic => "needs p_value or both effect and se",
            Rule::DuplicateId => "duplicate id",
            Rule::NonFinite => "non-finite value",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub study_id: String,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "study {}: {}", self.study_id, self.rule)
    }
}

/// Checks every study invariant and id uniqueness. Empty result means valid.
pub fn validate_dataset<T: Real>(ds: &MetaDataset<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for s in &ds.studies {
        let mut flag = |rule| {
            out.push(Violation {
                study_id: s.id.clone(),
                rule,
            })
        };
        if !seen.insert(s.id.as_str()) {
            flag(Rule::DuplicateId);
        }
        let values = [s.p_value, s.effect, s.se];
        if values.iter().flatten().any(|v| !v.is_finite()) {
            flag(Rule::NonFinite);
            continue;
        }
        if let Some(p) = s.p_value {
            if !(p > T::zero() && p <= T::one()) {
                flag(Rule::PValueRange);
            }
        }
        if let Some(se) = s.se {
            if se <= T::zero() {
                flag(Rule::SeNonPositive);
            }
        }
        if s.p_value.is_none() && s.effect_se().is_none() {
            flag(Rule::MissingStatistic);
        }
    }
    out
}

/// [`validate_dataset`] as a `Result`.
pub fn ensure_valid<T: Real>(ds: &MetaDataset<T>) -> Result<()> {
    let v = validate_dataset(ds);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(v))
    }
}
