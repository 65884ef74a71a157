//! P-value plots and their shape classification.
//!
//! Sorted p-values are plotted against normalized rank `i/(n+1)`, so that a
//! set of null p-values falls on the identity line whatever `n` is. A real
//! effect shows as a shallow line of mostly small p-values; a mixture of
//! small (hacked or real) and null p-values shows as a bilinear "hockey
//! stick", which a two-segment least-squares fit picks up.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::combine::elston_flags;
use crate::error::{Error, Result};
use crate::numerics::{ols_fit, FitLine};
use crate::scalar::Real;
use crate::study::{Direction, MetaDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint<T> {
    pub rank: usize,
    pub normalized_rank: T,
    pub p_sorted: T,
    pub study_id: String,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValuePlot<T> {
    pub points: Vec<PlotPoint<T>>,
    pub n: usize,
}

impl<T: Real> PValuePlot<T> {
    pub fn xs(&self) -> Vec<T> {
        self.points.iter().map(|p| p.normalized_rank).collect()
    }

    pub fn ps(&self) -> Vec<T> {
        self.points.iter().map(|p| p.p_sorted).collect()
    }

    /// Plot of bare p-values, in the given order before sorting.
    pub fn from_pvalues(ps: &[T]) -> Result<Self> {
        build_pvalue_plot(&MetaDataset::from_pvalues("", ps))
    }
}

/// Sorts the dataset's p-values ascending (stable) and assigns ranks.
pub fn build_pvalue_plot<T: Real>(ds: &MetaDataset<T>) -> Result<PValuePlot<T>> {
    if ds.is_empty() {
        return Err(Error::Empty("build_pvalue_plot"));
    }
    let mut entries = ds
        .studies
        .iter()
        .map(|s| Ok((s.p_or_derived()?, s)))
        .collect::<Result<Vec<_>>>()?;
    if let Some((p, s)) = entries.iter().find(|(p, _)| p.is_nan()) {
        return Err(Error::domain("build_pvalue_plot", format!("study {}: p = {p}", s.id)));
    }
    entries.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("not NaN"));
    let n = entries.len();
    let denom = T::from_count(n + 1);
    let points = entries
        .into_iter()
        .enumerate()
        .map(|(i, (p, s))| PlotPoint {
            rank: i + 1,
            normalized_rank: T::from_count(i + 1) / denom,
            p_sorted: p,
            study_id: s.id.clone(),
            direction: s.direction,
        })
        .collect();
    Ok(PValuePlot { points, n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSegmentFit<T> {
    /// Last rank of the left segment.
    pub breakpoint_rank: usize,
    pub left_fit: FitLine<T>,
    pub right_fit: FitLine<T>,
    pub combined_sse: T,
}

/// Smallest number of points in either segment.
pub const MIN_SEGMENT: usize = 3;

/// Exhaustive two-segment fit over breakpoints `b ∈ {3, …, n-3}`.
///
/// Each side is fit independently against normalized rank; the breakpoint
/// with the smallest total SSE wins, ties going to the smaller `b`.
pub fn fit_two_segment<T: Real>(plot: &PValuePlot<T>) -> Result<TwoSegmentFit<T>> {
    let n = plot.n;
    if n < 2 * MIN_SEGMENT {
        return Err(Error::Degenerate {
            op: "fit_two_segment",
            detail: format!("need at least {} points, got {n}", 2 * MIN_SEGMENT),
        });
    }
    let xs = plot.xs();
    let ys = plot.ps();
    let mut best: Option<TwoSegmentFit<T>> = None;
    for b in MIN_SEGMENT..=n - MIN_SEGMENT {
        let left = ols_fit(&xs[..b], &ys[..b])?;
        let right = ols_fit(&xs[b..], &ys[b..])?;
        let combined_sse = left.sse + right.sse;
        if best.as_ref().is_none_or(|cur| combined_sse < cur.combined_sse) {
            best = Some(TwoSegmentFit {
                breakpoint_rank: b,
                left_fit: left,
                right_fit: right,
                combined_sse,
            });
        }
    }
    Ok(best.expect("at least one breakpoint"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    NullUniform,
    Effect,
    BilinearMixture,
    Ambiguous,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::NullUniform => "null_uniform",
            Classification::Effect => "effect",
            Classification::BilinearMixture => "bilinear_mixture",
            Classification::Ambiguous => "ambiguous",
        })
    }
}

/// Thresholds for [`classify_plot`]. These are policy, not derived values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyThresholds<T> {
    /// Nominal significance level splitting "small" from "random" p-values.
    pub significance: T,
    /// `effect` needs more than this fraction below `significance`.
    pub effect_fraction: T,
    /// Slope band accepted as the null identity line.
    pub null_slope_min: T,
    pub null_slope_max: T,
    /// `null_uniform` needs fewer than this fraction below `significance`.
    pub null_fraction_max: T,
    /// Relative SSE reduction of the two-segment fit that counts as bilinear.
    pub sse_improvement: T,
    /// P-values at or below this are counted as definitive.
    pub definitive: T,
}

impl<T: Real> Default for ClassifyThresholds<T> {
    fn default() -> Self {
        ClassifyThresholds {
            significance: T::lit(0.05),
            effect_fraction: T::lit(0.5),
            null_slope_min: T::lit(0.8),
            null_slope_max: T::lit(1.25),
            null_fraction_max: T::lit(0.2),
            sse_improvement: T::lit(0.5),
            definitive: T::lit(0.001),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport<T> {
    pub n: usize,
    /// Absent for a single point.
    pub single_fit: Option<FitLine<T>>,
    /// Absent below six points.
    pub two_segment: Option<TwoSegmentFit<T>>,
    pub classification: Classification,
    pub frac_below_005: T,
    pub elston_count: usize,
    pub definitive_count: usize,
    pub min_p_direction: Direction,
}

impl<T: Real> DiagnosticReport<T> {
    /// `1 - combined_sse / single_sse`; zero when the single line is exact.
    pub fn sse_improvement(&self) -> Option<T> {
        let single = self.single_fit.as_ref()?;
        let two = self.two_segment.as_ref()?;
        Some(if single.sse > T::zero() {
            T::one() - two.combined_sse / single.sse
        } else {
            T::zero()
        })
    }
}

pub fn classify_plot<T: Real>(plot: &PValuePlot<T>) -> Result<DiagnosticReport<T>> {
    classify_plot_with(plot, &ClassifyThresholds::default())
}

/// Builds the diagnostic report and applies the rules in order:
///
/// 1. `effect`: more than half the p-values significant and single slope < 1;
/// 2. `null_uniform`: slope in the null band, few significant p-values and no
///    real gain from a second segment;
/// 3. `bilinear_mixture`: two segments halve the SSE, the left one averaging
///    below the significance level and the right one at or above it;
/// 4. otherwise `ambiguous`.
///
/// Plots with fewer than six points are always `ambiguous`.
pub fn classify_plot_with<T: Real>(
    plot: &PValuePlot<T>,
    th: &ClassifyThresholds<T>,
) -> Result<DiagnosticReport<T>> {
    let n = plot.n;
    if n == 0 {
        return Err(Error::Empty("classify_plot"));
    }
    let ps = plot.ps();
    let below = ps.iter().filter(|&&p| p < th.significance).count();
    let frac_below_005 = T::from_count(below) / T::from_count(n);
    let elston_count = elston_flags(&ps).len();
    let definitive_count = ps.iter().filter(|&&p| p <= th.definitive).count();
    let min_p_direction = plot.points[0].direction;

    let single_fit = if n >= 2 {
        Some(ols_fit(&plot.xs(), &ps)?)
    } else {
        None
    };
    let two_segment = if n >= 2 * MIN_SEGMENT {
        Some(fit_two_segment(plot)?)
    } else {
        None
    };

    let mut report = DiagnosticReport {
        n,
        single_fit,
        two_segment,
        classification: Classification::Ambiguous,
        frac_below_005,
        elston_count,
        definitive_count,
        min_p_direction,
    };
    if let (Some(single), Some(two), Some(gain)) = (
        report.single_fit.as_ref(),
        report.two_segment.as_ref(),
        report.sse_improvement(),
    ) {
        let mean = |s: &[T]| s.iter().copied().sum::<T>() / T::from_count(s.len());
        let b = two.breakpoint_rank;
        report.classification = if frac_below_005 > th.effect_fraction && single.slope < T::one() {
            Classification::Effect
        } else if single.slope >= th.null_slope_min
            && single.slope <= th.null_slope_max
            && frac_below_005 < th.null_fraction_max
            && gain < th.sse_improvement
        {
            Classification::NullUniform
        } else if gain >= th.sse_improvement
            && mean(&ps[..b]) < th.significance
            && mean(&ps[b..]) >= th.significance
        {
            Classification::BilinearMixture
        } else {
            Classification::Ambiguous
        };
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::study::BaseStudy;

    #[test]
    fn plot_sorts_and_ranks() {
        let plot = PValuePlot::from_pvalues(&[0.9_f64, 0.1, 0.5]).unwrap();
        let got: Vec<(usize, f64, f64)> = plot
            .points
            .iter()
            .map(|p| (p.rank, p.normalized_rank, p.p_sorted))
            .collect();
        assert_eq!(got, vec![(1, 0.25, 0.1), (2, 0.5, 0.5), (3, 0.75, 0.9)]);
    }

    #[test]
    fn plot_single_point() {
        let plot = PValuePlot::from_pvalues(&[0.04_f64]).unwrap();
        assert_eq!(plot.n, 1);
        assert_eq!(plot.points[0].normalized_rank, 0.5);
        let report = classify_plot(&plot).unwrap();
        assert_eq!(report.classification, Classification::Ambiguous);
        assert!(report.single_fit.is_none());
    }

    #[test]
    fn plot_ties_keep_input_order() {
        let ds = MetaDataset::new(
            "t",
            vec![
                BaseStudy::from_p("first", 0.01_f64).with_direction(Direction::Decrease),
                BaseStudy::from_p("second", 0.01).with_direction(Direction::Increase),
                BaseStudy::from_p("third", 0.001),
            ],
        );
        let plot = build_pvalue_plot(&ds).unwrap();
        let ids: Vec<&str> = plot.points.iter().map(|p| p.study_id.as_str()).collect();
        assert_eq!(ids, ["third", "first", "second"]);
    }

    #[test]
    fn plot_rejects_studies_without_statistics() {
        let ds = MetaDataset::new(
            "t",
            vec![BaseStudy::<f64> {
                id: "x".into(),
                p_value: None,
                effect: None,
                se: None,
                direction: Direction::Unspecified,
            }],
        );
        assert!(build_pvalue_plot(&ds).is_err());
    }

    #[test]
    fn uniform_grid_on_identity_line() {
        let ps: Vec<f64> = (1..=19).map(|i| i as f64 / 20.0).collect();
        let plot = PValuePlot::from_pvalues(&ps).unwrap();
        for pt in &plot.points {
            assert!((pt.normalized_rank - pt.p_sorted).abs() < 1e-15);
        }
        let r = classify_plot(&plot).unwrap();
        let fit = r.single_fit.unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
        // p = 0.05 is not strictly below 0.05
        assert_eq!(r.frac_below_005, 0.0);
        assert_eq!(r.classification, Classification::NullUniform);
    }

    #[test]
    fn exact_line_has_zero_two_segment_sse() {
        let ps: Vec<f64> = (1..=12).map(|i| 0.02 + 0.07 * i as f64).collect();
        let plot = PValuePlot::from_pvalues(&ps).unwrap();
        let two = fit_two_segment(&plot).unwrap();
        assert!(two.combined_sse < 1e-28);
        let single = ols_fit(&plot.xs(), &plot.ps()).unwrap();
        assert!((two.left_fit.slope - single.slope).abs() < 1e-12);
        assert!((two.right_fit.slope - single.slope).abs() < 1e-12);
    }

    #[test]
    fn six_equal_points() {
        let plot = PValuePlot::from_pvalues(&[0.5_f64; 6]).unwrap();
        let two = fit_two_segment(&plot).unwrap();
        assert_eq!(two.breakpoint_rank, 3);
        assert_eq!(two.left_fit.slope, 0.0);
        assert_eq!(two.right_fit.slope, 0.0);
        assert_eq!(two.combined_sse, 0.0);
        assert!(fit_two_segment(&PValuePlot::from_pvalues(&[0.5_f64; 5]).unwrap()).is_err());
    }

    #[test]
    fn all_small_shallow_line_is_effect() {
        let ps: Vec<f64> = (1..=20).map(|i| 0.0005 * i as f64).collect();
        let r = classify_plot(&PValuePlot::from_pvalues(&ps).unwrap()).unwrap();
        assert_eq!(r.classification, Classification::Effect);
        assert_eq!(r.definitive_count, 2);
        assert_eq!(r.elston_count, 20);
    }

    #[test]
    fn min_p_direction_reported() {
        let ds = MetaDataset::new(
            "t",
            vec![
                BaseStudy::from_p("a", 0.3_f64),
                BaseStudy::from_p("b", 0.002).with_direction(Direction::Decrease),
                BaseStudy::from_p("c", 0.002).with_direction(Direction::Increase),
            ],
        );
        let r = classify_plot(&build_pvalue_plot(&ds).unwrap()).unwrap();
        assert_eq!(r.min_p_direction, Direction::Decrease);
    }
}
