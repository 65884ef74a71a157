//! Fisher combining of p-values and DerSimonian–Laird pooling of effects.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::chi_square_sf;
use crate::scalar::Real;

/// Two-sided 95% normal multiplier used for pooled confidence intervals.
pub const Z_95: f64 = 1.959964;

/// Fisher's combined test: `X² = -2 Σ ln pᵢ` on `2k` degrees of freedom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherResult<T> {
    pub statistic: T,
    pub df: u32,
    pub combined_p: T,
    /// Per-study `-2 ln pᵢ`, in input order.
    pub contributions: Vec<T>,
    /// Indices whose p-value was raised to the 1e-300 floor before taking logs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clamped: Vec<usize>,
}

impl<T: Real> FisherResult<T> {
    pub fn significant(&self, alpha: T) -> bool {
        self.combined_p < alpha
    }

    pub fn warnings(&self, ids: &[String]) -> Vec<String> {
        self.clamped
            .iter()
            .map(|&i| {
                let id = ids.get(i).map(String::as_str).unwrap_or("?");
                format!("fisher: p-value of study {id} clamped to 1e-300")
            })
            .collect()
    }
}

pub fn fisher_combine<T: Real>(pvalues: &[T]) -> Result<FisherResult<T>> {
    if pvalues.is_empty() {
        return Err(Error::Empty("fisher_combine"));
    }
    let floor = T::p_floor();
    let minus_two = T::lit(-2.0);
    let mut clamped = Vec::new();
    let mut contributions = Vec::with_capacity(pvalues.len());
    for (i, &p) in pvalues.iter().enumerate() {
        if !(p > T::zero() && p <= T::one()) {
            return Err(Error::domain(
                "fisher_combine",
                format!("p-value #{} = {p} is outside (0, 1]", i + 1),
            ));
        }
        let p = if p < floor {
            clamped.push(i);
            floor
        } else {
            p
        };
        contributions.push(minus_two * p.ln());
    }
    let statistic: T = contributions.iter().copied().sum();
    let df = u32::try_from(2 * pvalues.len())
        .map_err(|_| Error::Overflow("fisher degrees of freedom".into()))?;
    let combined_p = chi_square_sf(statistic, df)?;
    Ok(FisherResult {
        statistic,
        df,
        combined_p,
        contributions,
        clamped,
    })
}

/// Indices with `p < e⁻¹`, where `-2 ln p` exceeds its null mean of 2.
///
/// The often quoted "0.37" is this threshold rounded.
pub fn elston_flags<T: Real>(pvalues: &[T]) -> Vec<usize> {
    let threshold = (-T::one()).exp();
    pvalues
        .iter()
        .enumerate()
        .filter(|(_, &p)| p < threshold)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Fixed,
    Random,
}

impl fmt::Display for PoolMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolMode::Fixed => "fixed",
            PoolMode::Random => "random",
        })
    }
}

impl FromStr for PoolMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "fixed" => Ok(PoolMode::Fixed),
            "random" => Ok(PoolMode::Random),
            _ => Err(format!("unknown pooling mode {s:?}")),
        }
    }
}

/// Inverse-variance pooled estimate on the log risk-ratio scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledResult<T> {
    pub pooled: T,
    pub se_pooled: T,
    pub ci95: (T, T),
    /// Between-study variance; always zero in fixed mode.
    pub tau2: T,
    /// Cochran's Q around the fixed-effect mean.
    pub q_statistic: T,
    pub mode: PoolMode,
    /// Weights actually used, normalized to sum to one.
    pub weights: Vec<T>,
}

impl<T: Real> PooledResult<T> {
    /// Whether the two-sided interval `pooled ± z·se` excludes zero.
    pub fn excludes_zero(&self, z: T) -> bool {
        let lo = self.pooled - z * self.se_pooled;
        let hi = self.pooled + z * self.se_pooled;
        lo > T::zero() || hi < T::zero()
    }
}

/// DerSimonian–Laird pooling.
///
/// Fixed mode weights by `1/σᵢ²`. Random mode estimates
/// `τ² = max(0, (Q - (k-1)) / (Σw - Σw²/Σw))` from the fixed weights, then
/// reweights by `1/(σᵢ² + τ²)`. The pooled value is the normalized weighted
/// mean `Σwᵢvᵢ / Σwᵢ`.
pub fn dl_pool<T: Real>(effects: &[T], ses: &[T], mode: PoolMode) -> Result<PooledResult<T>> {
    if effects.len() != ses.len() {
        return Err(Error::LengthMismatch {
            op: "dl_pool",
            left: effects.len(),
            right: ses.len(),
        });
    }
    if effects.is_empty() {
        return Err(Error::Empty("dl_pool"));
    }
    if let Some(bad) = effects.iter().find(|e| !e.is_finite()) {
        return Err(Error::domain("dl_pool", format!("effect {bad} is not finite")));
    }
    if let Some(bad) = ses.iter().find(|s| !(**s > T::zero() && s.is_finite())) {
        return Err(Error::domain("dl_pool", format!("se {bad} must be finite and > 0")));
    }

    let variances: Vec<T> = ses.iter().map(|&s| s * s).collect();
    let fixed_w: Vec<T> = variances.iter().map(|v| v.recip()).collect();
    let (fixed_mean, _) = weighted_mean(effects, &fixed_w);
    let q_statistic: T = fixed_w
        .iter()
        .zip(effects)
        .map(|(&w, &e)| w * (e - fixed_mean) * (e - fixed_mean))
        .sum();

    let k = effects.len();
    let tau2 = match mode {
        PoolMode::Fixed => T::zero(),
        PoolMode::Random if k < 2 => T::zero(),
        PoolMode::Random => {
            let sw: T = fixed_w.iter().copied().sum();
            let sw2: T = fixed_w.iter().map(|&w| w * w).sum();
            let c = sw - sw2 / sw;
            let excess = q_statistic - T::from_count(k - 1);
            if c > T::zero() {
                (excess / c).max(T::zero())
            } else {
                T::zero()
            }
        }
    };

    let weights: Vec<T> = if tau2 > T::zero() {
        variances.iter().map(|&v| (v + tau2).recip()).collect()
    } else {
        fixed_w
    };
    let (pooled, sum_w) = weighted_mean(effects, &weights);
    let se_pooled = sum_w.sqrt().recip();
    let z = T::lit(Z_95);
    Ok(PooledResult {
        pooled,
        se_pooled,
        ci95: (pooled - z * se_pooled, pooled + z * se_pooled),
        tau2,
        q_statistic,
        mode,
        weights: weights.iter().map(|&w| w / sum_w).collect(),
    })
}

fn weighted_mean<T: Real>(values: &[T], weights: &[T]) -> (T, T) {
    let sum_w: T = weights.iter().copied().sum();
    let num: T = weights.iter().zip(values).map(|(&w, &v)| w * v).sum();
    // Clamp into the data range so rounding never leaves the convex hull.
    let (lo, hi) = values
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    ((num / sum_w).max(lo).min(hi), sum_w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn fisher_examples() {
        let r = fisher_combine(&[0.5_f64]).unwrap();
        assert!(close(r.statistic, 1.386294, 1e-6));
        assert_eq!(r.df, 2);
        assert!(close(r.combined_p, 0.5, 1e-12));

        let r = fisher_combine(&[0.05_f64, 0.05]).unwrap();
        assert!(close(r.statistic, 11.98293, 1e-5));
        assert_eq!(r.df, 4);
        let x = r.statistic;
        assert!(close(r.combined_p, (-x / 2.0).exp() * (1.0 + x / 2.0), 1e-12));

        let mut ps = vec![0.5_f64; 10];
        ps.push(1e-10);
        let r = fisher_combine(&ps).unwrap();
        assert!(close(r.statistic, 59.9146, 1e-4));
        assert_eq!(r.df, 22);
        assert!(r.combined_p < 1e-4);
        assert_eq!(r.statistic, r.contributions.iter().sum::<f64>());
    }

    #[test]
    fn fisher_errors_and_clamp() {
        assert!(fisher_combine::<f64>(&[]).is_err());
        assert!(fisher_combine(&[0.0_f64]).is_err());
        assert!(fisher_combine(&[1.5_f64]).is_err());
        assert!(fisher_combine(&[f64::NAN]).is_err());
        let r = fisher_combine(&[1e-320_f64, 0.5]).unwrap();
        assert_eq!(r.clamped, vec![0]);
        assert!(close(r.contributions[0], -2.0 * 1e-300_f64.ln(), 1e-9));
        let w = r.warnings(&["a".into(), "b".into()]);
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("study a"));
    }

    #[test]
    fn fisher_null_expectation() {
        let p = (-1.0_f64).exp();
        let r = fisher_combine(&[p; 7]).unwrap();
        assert!(close(r.statistic, 14.0, 1e-12));
        assert_eq!(r.df, 14);
    }

    #[test]
    fn elston_examples() {
        assert_eq!(elston_flags(&[0.5_f64, 0.3, 0.9]), vec![1]);
        assert!(elston_flags(&[(-1.0_f64).exp()]).is_empty());
        assert_eq!(elston_flags(&[0.36_f64; 34]), (0..34).collect::<Vec<_>>());
    }

    #[test]
    fn dl_identical_studies() {
        let r = dl_pool(&[1.0_f64; 3], &[0.5; 3], PoolMode::Fixed).unwrap();
        assert!(close(r.pooled, 1.0, 1e-15));
        assert!(close(r.se_pooled, 0.288675, 1e-6));
        assert_eq!(r.tau2, 0.0);
    }

    #[test]
    fn dl_q_equals_k_minus_one() {
        let r = dl_pool(&[0.0_f64, 1.0, 2.0], &[1.0; 3], PoolMode::Random).unwrap();
        assert!(close(r.q_statistic, 2.0, 1e-12));
        assert_eq!(r.tau2, 0.0);
        assert!(close(r.pooled, 1.0, 1e-12));
        assert!(close(r.se_pooled, 0.577350, 1e-6));
    }

    #[test]
    fn dl_two_study_random_effects() {
        // Recomputed by hand: w = [1, 4], fixed mean 8/5, Q = 1.6² + 4·0.4² = 3.2,
        // C = 5 - 17/5 = 1.6, τ² = 2.2/1.6 = 1.375,
        // w* = [1/2.375, 1/1.625], pooled = 2w₂*/(w₁*+w₂*) = 1.1875.
        let fixed = dl_pool(&[0.0_f64, 2.0], &[1.0, 0.5], PoolMode::Fixed).unwrap();
        assert!(close(fixed.pooled, 1.6, 1e-12));
        let r = dl_pool(&[0.0_f64, 2.0], &[1.0, 0.5], PoolMode::Random).unwrap();
        assert!(close(r.q_statistic, 3.2, 1e-12));
        assert!(close(r.tau2, 1.375, 1e-12));
        assert!(close(r.pooled, 1.1875, 1e-12));
        let w1: f64 = 1.0 / 2.375;
        let w2 = 1.0 / 1.625;
        assert!(close(r.se_pooled, (w1 + w2).powf(-0.5), 1e-12));
        assert!(close(r.weights[0], w1 / (w1 + w2), 1e-12));
    }

    #[test]
    fn dl_single_study_random() {
        let r = dl_pool(&[0.3_f64], &[0.2], PoolMode::Random).unwrap();
        assert_eq!(r.tau2, 0.0);
        assert_eq!(r.q_statistic, 0.0);
        assert!(close(r.pooled, 0.3, 1e-15));
        assert!(close(r.se_pooled, 0.2, 1e-15));
    }

    #[test]
    fn dl_errors() {
        assert!(dl_pool::<f64>(&[], &[], PoolMode::Fixed).is_err());
        assert!(dl_pool(&[1.0_f64], &[1.0, 2.0], PoolMode::Fixed).is_err());
        assert!(dl_pool(&[1.0_f64], &[0.0], PoolMode::Fixed).is_err());
        assert!(dl_pool(&[1.0_f64], &[-1.0], PoolMode::Random).is_err());
    }

    #[test]
    fn dl_huge_heterogeneity_equalizes_weights() {
        let effects = [-100.0_f64, 0.0, 100.0, 250.0, -40.0];
        let ses = [0.5_f64, 1.0, 0.8, 0.3, 0.6];
        let r = dl_pool(&effects, &ses, PoolMode::Random).unwrap();
        assert!(r.tau2 >= 100.0 * 1.0);
        let max = r.weights.iter().cloned().fold(0.0, f64::max);
        let min = r.weights.iter().cloned().fold(1.0, f64::min);
        assert!(max / min <= 1.05);
    }

    fn effect_se_vec() -> impl Strategy<Value = Vec<(f64, f64)>> {
        proptest::collection::vec((-5.0f64..5.0, 0.05f64..3.0), 1..25)
    }

    proptest! {
        #[test]
        fn fisher_permutation_invariant(mut ps in proptest::collection::vec(1e-12f64..=1.0, 1..30)) {
            let a = fisher_combine(&ps).unwrap();
            ps.reverse();
            let b = fisher_combine(&ps).unwrap();
            prop_assert!((a.statistic - b.statistic).abs() <= 1e-9 * a.statistic.max(1.0));
            prop_assert!((a.combined_p - b.combined_p).abs() <= 1e-12);
        }

        #[test]
        fn fisher_monotone_in_each_p(ps in proptest::collection::vec(0.01f64..=1.0, 1..20), idx in 0usize..20, shrink in 0.1f64..0.9) {
            let i = idx % ps.len();
            let mut smaller = ps.clone();
            smaller[i] *= shrink;
            let a = fisher_combine(&ps).unwrap();
            let b = fisher_combine(&smaller).unwrap();
            prop_assert!(b.statistic > a.statistic);
            prop_assert!(b.combined_p <= a.combined_p);
        }

        #[test]
        fn pooled_is_convex_combination(pairs in effect_se_vec(), random in any::<bool>()) {
            let (e, s): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let mode = if random { PoolMode::Random } else { PoolMode::Fixed };
            let r = dl_pool(&e, &s, mode).unwrap();
            let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(r.pooled >= lo && r.pooled <= hi);
            prop_assert!(r.weights.iter().all(|&w| w > 0.0));
            prop_assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((r.ci95.0 - (r.pooled - Z_95 * r.se_pooled)).abs() < 1e-12);
        }

        #[test]
        fn random_with_zero_tau_matches_fixed(pairs in effect_se_vec()) {
            let (e, s): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let r = dl_pool(&e, &s, PoolMode::Random).unwrap();
            if r.tau2 == 0.0 {
                let f = dl_pool(&e, &s, PoolMode::Fixed).unwrap();
                prop_assert!((r.pooled - f.pooled).abs() <= 1e-12);
                prop_assert!((r.se_pooled - f.se_pooled).abs() <= 1e-12);
                for (a, b) in r.weights.iter().zip(&f.weights) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn scaling_equivariance(pairs in effect_se_vec(), c in 0.1f64..10.0) {
            let (e, s): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let es: Vec<f64> = e.iter().map(|x| x * c).collect();
            let ss: Vec<f64> = s.iter().map(|x| x * c).collect();
            let a = dl_pool(&e, &s, PoolMode::Random).unwrap();
            let b = dl_pool(&es, &ss, PoolMode::Random).unwrap();
            let tol = 1e-9 * (1.0 + a.pooled.abs() * c);
            prop_assert!((b.pooled - c * a.pooled).abs() <= tol);
            prop_assert!((b.se_pooled - c * a.se_pooled).abs() <= 1e-9 * c * a.se_pooled);
            prop_assert!((b.tau2 - c * c * a.tau2).abs() <= 1e-8 * (1.0 + c * c * a.tau2));
            for (x, y) in a.weights.iter().zip(&b.weights) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }
}
