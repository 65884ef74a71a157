//! Special functions, quantiles and least squares.
//!
//! Everything here is a pure function of its arguments. The chi-square
//! survival function goes through the regularized incomplete gamma function,
//! using the power series below `a + 1` and a modified Lentz continued
//! fraction above it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

const MAX_ITER: usize = 100_000;

/// Least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitLine<T> {
    pub slope: T,
    pub intercept: T,
    /// Residual sum of squares at the optimum.
    pub sse: T,
    pub n: usize,
}

impl<T: Real> FitLine<T> {
    pub fn predict(&self, x: T) -> T {
        self.intercept + self.slope * x
    }
}

// Bernoulli coefficients B_2k / (2k (2k-1)) of the Stirling series.
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

/// Natural log of the gamma function for `x > 0`.
///
/// Arguments below 7 are shifted up with the recurrence and the Stirling
/// series is summed through the `B_16` term; truncation error is below
/// 1e-15 there. The absolute error grows with `|ln Γ(x)|` only through the
/// rounding of the result itself.
pub fn ln_gamma<T: Real>(x: T) -> Result<T> {
    if !x.is_finite() || x <= T::zero() {
        return Err(Error::domain("ln_gamma", format!("x = {x} must be finite and > 0")));
    }
    if x == T::one() || x == T::lit(2.0) {
        return Ok(T::zero());
    }
    let shift_to = T::lit(7.0);
    let mut z = x;
    let mut prod = T::one();
    while z < shift_to {
        prod = prod * z;
        z = z + T::one();
    }
    let half = T::lit(0.5);
    let inv = z.recip();
    let inv2 = inv * inv;
    let mut series = T::zero();
    let mut pow = inv;
    for c in STIRLING {
        series = series + T::lit(c) * pow;
        pow = pow * inv2;
    }
    let half_ln_two_pi = T::lit(0.918_938_533_204_672_7);
    Ok((z - half) * z.ln() - z + half_ln_two_pi + series - prod.ln())
}

/// Regularized upper incomplete gamma `Q(a, x) = Γ(a, x) / Γ(a)`.
pub fn gamma_q<T: Real>(a: T, x: T) -> Result<T> {
    gamma_pq(a, x).map(|(_, q)| q)
}

/// Regularized lower incomplete gamma `P(a, x) = γ(a, x) / Γ(a)`.
pub fn gamma_p<T: Real>(a: T, x: T) -> Result<T> {
    gamma_pq(a, x).map(|(p, _)| p)
}

fn gamma_pq<T: Real>(a: T, x: T) -> Result<(T, T)> {
    if a.is_nan() || a <= T::zero() || a.is_infinite() {
        return Err(Error::domain("incomplete gamma", format!("a = {a} must be > 0")));
    }
    if x.is_nan() || x < T::zero() {
        return Err(Error::domain("incomplete gamma", format!("x = {x} must be >= 0")));
    }
    if x == T::zero() {
        return Ok((T::zero(), T::one()));
    }
    if x.is_infinite() {
        return Ok((T::one(), T::zero()));
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a)?;
    let prefactor = log_prefactor.exp();
    let (p, q) = if x < a + T::one() {
        let p = prefactor * lower_series(a, x)?;
        (p, T::one() - p)
    } else {
        let q = prefactor * upper_continued_fraction(a, x)?;
        (T::one() - q, q)
    };
    Ok((clamp_unit(p), clamp_unit(q)))
}

// Σ x^n / (a (a+1) ... (a+n)), so that P = prefactor * sum.
fn lower_series<T: Real>(a: T, x: T) -> Result<T> {
    let eps = T::epsilon();
    let mut ap = a;
    let mut term = a.recip();
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap = ap + T::one();
        term = term * x / ap;
        sum = sum + term;
        if term.abs() < sum.abs() * eps {
            return Ok(sum);
        }
    }
    Err(Error::Convergence { op: "incomplete gamma series" })
}

// Modified Lentz evaluation of 1 / (x+1-a - 1(1-a)/(x+3-a - 2(2-a)/(x+5-a - ...))).
fn upper_continued_fraction<T: Real>(a: T, x: T) -> Result<T> {
    let eps = T::epsilon();
    let tiny = T::min_positive_value() / eps;
    let two = T::lit(2.0);
    let mut b = x + T::one() - a;
    let mut c = tiny.recip();
    let mut d = b.recip();
    let mut h = d;
    for i in 1..MAX_ITER {
        let fi = T::from_count(i);
        let an = -fi * (fi - a);
        b = b + two;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let delta = d * c;
        h = h * delta;
        if (delta - T::one()).abs() < eps {
            return Ok(h);
        }
    }
    Err(Error::Convergence { op: "incomplete gamma continued fraction" })
}

fn clamp_unit<T: Real>(p: T) -> T {
    p.max(T::zero()).min(T::one())
}

/// `P(χ²_df > x)`.
pub fn chi_square_sf<T: Real>(x: T, df: u32) -> Result<T> {
    if df < 1 {
        return Err(Error::domain("chi_square_sf", "df must be >= 1"));
    }
    if x.is_nan() || x < T::zero() {
        return Err(Error::domain("chi_square_sf", format!("x = {x} must be >= 0")));
    }
    let half = T::lit(0.5);
    gamma_q(T::from_u32(df).expect("df fits") * half, x * half)
}

/// Inverse of [`chi_square_sf`]: the `x` with `P(χ²_df > x) = p`.
///
/// Bisection on the survival function, run until the bracket collapses to
/// adjacent floats, so the result is as accurate as the survival function.
pub fn chi_square_quantile<T: Real>(p: T, df: u32) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::domain("chi_square_quantile", format!("p = {p} must be in (0, 1)")));
    }
    if df < 1 {
        return Err(Error::domain("chi_square_quantile", "df must be >= 1"));
    }
    let mut lo = T::zero();
    let mut hi = T::from_u32(df).expect("df fits").max(T::one());
    let mut grow = 0;
    while chi_square_sf(hi, df)? > p {
        lo = hi;
        hi = hi + hi;
        grow += 1;
        if grow > 2000 || hi.is_infinite() {
            return Err(Error::Convergence { op: "chi_square_quantile bracket" });
        }
    }
    let two = T::lit(2.0);
    for _ in 0..4000 {
        let mid = lo + (hi - lo) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        if chi_square_sf(mid, df)? > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo + (hi - lo) / two)
}

/// Two-sided normal p-value `2 Φ(-|z|)`.
///
/// Uses the identity `2 Φ(-|z|) = P(χ²_1 > z²)`, i.e. `erfc(|z| / √2)`.
pub fn normal_two_sided_p<T: Real>(z: T) -> Result<T> {
    if z.is_nan() {
        return Err(Error::domain("normal_two_sided_p", "z is NaN"));
    }
    chi_square_sf(z * z, 1)
}

/// The `z > 0` with `2 Φ(-z) = alpha`, e.g. 1.959964 for `alpha = 0.05`.
pub fn normal_two_sided_critical<T: Real>(alpha: T) -> Result<T> {
    chi_square_quantile(alpha, 1).map(|x| x.sqrt())
}

/// Sample quantile using the `h = p (n + 1)` rule (Hyndman–Fan type 6).
///
/// `h` is clamped to `[1, n]` and the result interpolates linearly between
/// the `floor(h)`-th and `ceil(h)`-th order statistics (1-based).
pub fn quantile_type6<T: Real>(values: &[T], p: T) -> Result<T> {
    if values.is_empty() {
        return Err(Error::Empty("quantile_type6"));
    }
    if !(p >= T::zero() && p <= T::one()) {
        return Err(Error::domain("quantile_type6", format!("p = {p} must be in [0, 1]")));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain("quantile_type6", format!("non-finite value {bad}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = sorted.len();
    let h = (p * T::from_count(n + 1))
        .max(T::one())
        .min(T::from_count(n));
    let lo = h.floor();
    let frac = h - lo;
    let lo_idx = lo.to_usize().expect("h in [1, n]") - 1;
    let hi_idx = h.ceil().to_usize().expect("h in [1, n]") - 1;
    let (a, b) = (sorted[lo_idx], sorted[hi_idx]);
    Ok(a + frac * (b - a))
}

/// Ordinary least squares of `ys` on `xs`.
pub fn ols_fit<T: Real>(xs: &[T], ys: &[T]) -> Result<FitLine<T>> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            op: "ols_fit",
            left: xs.len(),
            right: ys.len(),
        });
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::Degenerate {
            op: "ols_fit",
            detail: format!("need at least 2 points, got {n}"),
        });
    }
    let nf = T::from_count(n);
    let x_mean = xs.iter().copied().sum::<T>() / nf;
    let sxx: T = xs.iter().map(|&x| (x - x_mean) * (x - x_mean)).sum();
    if sxx.is_nan() || sxx <= T::zero() {
        return Err(Error::Degenerate {
            op: "ols_fit",
            detail: "all x values are equal".into(),
        });
    }
    if ys.iter().all(|&y| y == ys[0]) {
        return Ok(FitLine {
            slope: T::zero(),
            intercept: ys[0],
            sse: T::zero(),
            n,
        });
    }
    let y_mean = ys.iter().copied().sum::<T>() / nf;
    let sxy: T = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (x - x_mean) * (y - y_mean))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let sse = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    Ok(FitLine {
        slope,
        intercept,
        sse,
        n,
    })
}
