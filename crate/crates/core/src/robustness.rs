//! Influence of single studies on the combined verdict.
//!
//! Leave-one-out recomputation for both combining methods, and the exact
//! p-value a single added study needs to push a Fisher combination across
//! the significance line.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::combine::{dl_pool, fisher_combine, FisherResult, PoolMode, PooledResult};
use crate::error::{Error, Result};
use crate::numerics::{chi_square_quantile, normal_two_sided_critical};
use crate::scalar::Real;
use crate::study::MetaDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fisher,
    DlFixed,
    DlRandom,
}

impl Method {
    pub fn pool_mode(self) -> Option<PoolMode> {
        match self {
            Method::Fisher => None,
            Method::DlFixed => Some(PoolMode::Fixed),
            Method::DlRandom => Some(PoolMode::Random),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "fisher" => Ok(Method::Fisher),
            "dl-fixed" | "dl_fixed" => Ok(Method::DlFixed),
            "dl-random" | "dl_random" => Ok(Method::DlRandom),
            _ => Err(format!("unknown method {s:?} (expected fisher, dl-fixed or dl-random)")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Fisher => "fisher",
            Method::DlFixed => "dl-fixed",
            Method::DlRandom => "dl-random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CombinedResult<T> {
    Fisher(FisherResult<T>),
    Pooled(PooledResult<T>),
}

impl<T: Real> CombinedResult<T> {
    /// Fisher: combined p below `alpha`. DL: the `(1 - alpha)` interval excludes zero.
    pub fn significant(&self, alpha: T) -> Result<bool> {
        match self {
            CombinedResult::Fisher(f) => Ok(f.significant(alpha)),
            CombinedResult::Pooled(p) => Ok(p.excludes_zero(normal_two_sided_critical(alpha)?)),
        }
    }

    /// The quantity whose change is reported: combined p or pooled effect.
    pub fn headline(&self) -> T {
        match self {
            CombinedResult::Fisher(f) => f.combined_p,
            CombinedResult::Pooled(p) => p.pooled,
        }
    }
}

/// Runs `method` on the whole dataset.
pub fn combine_dataset<T: Real>(ds: &MetaDataset<T>, method: Method) -> Result<CombinedResult<T>> {
    match method.pool_mode() {
        None => fisher_combine(&ds.pvalues()?).map(CombinedResult::Fisher),
        Some(mode) => {
            let (e, s) = ds.effects_and_ses()?;
            dl_pool(&e, &s, mode).map(CombinedResult::Pooled)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceRecord<T> {
    pub study_id: String,
    pub result_without: CombinedResult<T>,
    /// Headline with the study minus headline without it: combined p for
    /// Fisher, pooled effect for DL.
    pub delta: T,
    pub significant_with: bool,
    pub significant_without: bool,
    pub verdict_flip: bool,
}

/// Jackknife influence of each study, sorted by `|delta|` descending.
///
/// Ties keep input order.
pub fn leave_one_out<T: Real>(
    ds: &MetaDataset<T>,
    method: Method,
    alpha: T,
) -> Result<Vec<InfluenceRecord<T>>> {
    if ds.len() < 2 {
        return Err(Error::Degenerate {
            op: "leave_one_out",
            detail: format!("need at least 2 studies, got {}", ds.len()),
        });
    }
    check_alpha("leave_one_out", alpha)?;
    let full = combine_dataset(ds, method)?;
    let significant_with = full.significant(alpha)?;
    let mut records = (0..ds.len())
        .map(|i| {
            let without = combine_dataset(&ds.without(i), method)?;
            let significant_without = without.significant(alpha)?;
            Ok(InfluenceRecord {
                study_id: ds.studies[i].id.clone(),
                delta: full.headline() - without.headline(),
                result_without: without,
                significant_with,
                significant_without,
                verdict_flip: significant_with != significant_without,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| {
        b.delta
            .abs()
            .partial_cmp(&a.delta.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(records)
}

fn check_alpha<T: Real>(op: &'static str, alpha: T) -> Result<()> {
    if alpha > T::zero() && alpha < T::one() {
        Ok(())
    } else {
        Err(Error::domain(op, format!("alpha = {alpha} must be in (0, 1)")))
    }
}

/// Largest p-value a single added study can have and still make the Fisher
/// combination of `pvalues` plus that study significant at `alpha`.
///
/// With `S` the current statistic over `k` studies, this is
/// `exp(-(χ²_{2(k+1)}(α) - S) / 2)`. Returns 1 when even an added `p = 1`
/// already gives significance; floors at the smallest positive scalar.
pub fn min_flip_pvalue_of<T: Real>(pvalues: &[T], alpha: T) -> Result<T> {
    check_alpha("min_flip_pvalue", alpha)?;
    let current = fisher_combine(pvalues)?;
    let df = current.df + 2;
    let critical = chi_square_quantile(alpha, df)?;
    let gap = critical - current.statistic;
    if gap <= T::zero() {
        return Ok(T::one());
    }
    let p = (-gap / T::lit(2.0)).exp();
    Ok(p.max(T::min_positive_value()).min(T::one()))
}

pub fn min_flip_pvalue<T: Real>(ds: &MetaDataset<T>, alpha: T) -> Result<T> {
    if ds.is_empty() {
        return Err(Error::Empty("min_flip_pvalue"));
    }
    min_flip_pvalue_of(&ds.pvalues()?, alpha)
}

/// What one contaminating study does to a background of identical p-values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownReport<T> {
    pub n_background: usize,
    pub background_p: T,
    pub alpha: T,
    /// Combined p of the background alone.
    pub before_p: T,
    pub min_flip_p: T,
    /// Contaminant used for the "after" row: `min_flip_p / 10`.
    pub contaminant_p: T,
    pub after_p: T,
    pub after_significant: bool,
    /// Contaminant's share of the contaminated Fisher statistic.
    pub contaminant_share: T,
}

impl<T: Real> fmt::Display for BreakdownReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "background: {} studies at p = {}, alpha = {}",
            self.n_background, self.background_p, self.alpha
        )?;
        writeln!(f, "{:<28} {:>14}", "combined p before", fmt_g(self.before_p))?;
        writeln!(f, "{:<28} {:>14}", "flip threshold p*", fmt_g(self.min_flip_p))?;
        writeln!(f, "{:<28} {:>14}", "contaminant p (p*/10)", fmt_g(self.contaminant_p))?;
        writeln!(f, "{:<28} {:>14}", "combined p after", fmt_g(self.after_p))?;
        writeln!(f, "{:<28} {:>14}", "significant after", self.after_significant)?;
        write!(f, "{:<28} {:>13.1}%", "contaminant share of X²", self.contaminant_share.as_f64() * 100.0)
    }
}

fn fmt_g<T: Real>(x: T) -> String {
    let x = x.as_f64();
    if x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e6) {
        format!("{x:.4e}")
    } else {
        format!("{x:.6}")
    }
}

pub fn breakdown_report<T: Real>(
    n_background: usize,
    background_p: T,
    alpha: T,
) -> Result<BreakdownReport<T>> {
    if n_background < 1 {
        return Err(Error::domain("breakdown_report", "n_background must be >= 1"));
    }
    let background = vec![background_p; n_background];
    let before = fisher_combine(&background)?;
    let min_flip_p = min_flip_pvalue_of(&background, alpha)?;
    let contaminant_p = (min_flip_p / T::lit(10.0)).max(T::min_positive_value());
    let mut contaminated = background;
    contaminated.push(contaminant_p);
    let after = fisher_combine(&contaminated)?;
    let contaminant_share = if after.statistic > T::zero() {
        after.contributions[n_background] / after.statistic
    } else {
        T::zero()
    };
    Ok(BreakdownReport {
        n_background,
        background_p,
        alpha,
        before_p: before.combined_p,
        min_flip_p,
        contaminant_p,
        after_significant: after.significant(alpha),
        after_p: after.combined_p,
        contaminant_share,
    })
}
