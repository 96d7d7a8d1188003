//! Specht ratio, reverse Young inequality, and an inverse Jensen bound.

use crate::error::{Error, Result};
use crate::math::{abs, exp, ln, ln_1p, max, powf};

/// `S(h) = h^(1/(h-1)) / (e ln h^(1/(h-1)))`, with `S(1) = 1`.
///
/// Evaluated as `exp(a - 1) / a` where `a = ln(h) / (h - 1)`. Near `h = 1`
/// the logarithm goes through `ln_1p` (where `h - 1` is exact), elsewhere
/// through `ln(h)` so that tiny `h` keeps its low-order bits.
pub fn specht_ratio(h: f64) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument {
            name: "h",
            value: h,
            reason: "the Specht ratio is defined for h > 0",
        });
    }
    let x = h - 1.0;
    let a = if abs(x) < 1e-8 {
        1.0 - x / 2.0 + x * x / 3.0
    } else if (0.5..=2.0).contains(&h) {
        ln_1p(x) / x
    } else {
        ln(h) / x
    };
    Ok(exp(a - 1.0) / a)
}

/// Relative slack allowed by [`reverse_young_check`].
pub const REVERSE_YOUNG_SLACK: f64 = 1e-12;

/// Whether `S(a/b) a^(1-nu) b^nu >= (1-nu) a + nu b` holds up to
/// [`REVERSE_YOUNG_SLACK`].
pub fn reverse_young_check(a: f64, b: f64, nu: f64) -> Result<bool> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::InvalidArgument {
            name: "a, b",
            value: if a > 0.0 { b } else { a },
            reason: "reverse Young needs positive arguments",
        });
    }
    if !(0.0..=1.0).contains(&nu) {
        return Err(Error::InvalidArgument {
            name: "nu",
            value: nu,
            reason: "weight must lie in [0, 1]",
        });
    }
    let lhs = specht_ratio(a / b)? * powf(a, 1.0 - nu) * powf(b, nu);
    let rhs = (1.0 - nu) * a + nu * b;
    Ok(lhs - rhs >= -REVERSE_YOUNG_SLACK * max(lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseJensen {
    /// Weighted mean of `f^p`.
    pub lhs: f64,
    /// `alpha (mean f)^p + beta`.
    pub rhs: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Chord slope `(M^p - m^p) / (M - m)`.
    pub a: f64,
    /// Chord intercept `(M m^p - m M^p) / (M - m)`.
    pub b: f64,
}

impl InverseJensen {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-12) + 1e-300
    }
}

/// Chord coefficients `(a, b)` of `x^p` over `[m, M]`.
pub fn chord(p_exp: f64, m: f64, big_m: f64) -> (f64, f64) {
    let (mp, bp) = (powf(m, p_exp), powf(big_m, p_exp));
    ((bp - mp) / (big_m - m), (big_m * mp - m * bp) / (big_m - m))
}

/// Smallest `alpha` with `a y + b <= alpha y^p + beta` for every mean `y`
/// of a two-point distribution on `{m, M}`, i.e. every `y` in `[m, M]`.
///
/// The maximizer of `g(y) = (a y + b - beta) / y^p` is located on a uniform
/// grid and then refined by golden-section search.
pub fn minimal_alpha(p_exp: f64, m: f64, big_m: f64, x0: f64) -> f64 {
    let (a, b) = chord(p_exp, m, big_m);
    let beta = a * (1.0 - 1.0 / p_exp) * x0 + b;
    let g = |y: f64| (a * y + b - beta) / powf(y, p_exp);
    const N: usize = 2000;
    let step = (big_m - m) / N as f64;
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for k in 0..=N {
        let v = g(m + k as f64 * step);
        if v > best_val {
            best_val = v;
            best = k;
        }
    }
    let mut lo = m + step * best.saturating_sub(1) as f64;
    let mut hi = (m + step * (best + 1) as f64).min(big_m);
    let ratio = 0.5 * (crate::math::sqrt(5.0) - 1.0);
    for _ in 0..100 {
        let x1 = hi - ratio * (hi - lo);
        let x2 = lo + ratio * (hi - lo);
        if g(x1) < g(x2) {
            lo = x1;
        } else {
            hi = x2;
        }
    }
    max(best_val, g(0.5 * (lo + hi)))
}

/// Evaluates both sides of the inverse Jensen bound for a discrete
/// probability distribution supported in `[m, M]`.
pub fn inverse_jensen_bound(
    values: &[f64],
    weights: &[f64],
    p_exp: f64,
    m: f64,
    big_m: f64,
    x0: f64,
) -> Result<InverseJensen> {
    if values.len() != weights.len() || values.is_empty() {
        return Err(Error::InvalidArgument {
            name: "samples",
            value: values.len() as f64,
            reason: "values and weights must be non-empty and of equal length",
        });
    }
    if !(p_exp >= 1.0) {
        return Err(Error::InvalidArgument {
            name: "p",
            value: p_exp,
            reason: "exponent must be at least 1",
        });
    }
    if !(m > 0.0 && m < big_m) {
        return Err(Error::InvalidArgument {
            name: "m",
            value: m,
            reason: "need 0 < m < M",
        });
    }
    if !(x0 > m && x0 < big_m) {
        return Err(Error::InvalidArgument {
            name: "x0",
            value: x0,
            reason: "x0 must lie strictly between m and M",
        });
    }
    if let Some(&v) = values.iter().find(|&&v| !(v >= m && v <= big_m)) {
        return Err(Error::InvalidArgument {
            name: "sample",
            value: v,
            reason: "sample outside [m, M]",
        });
    }
    if let Some(&w) = weights.iter().find(|&&w| !(w >= 0.0)) {
        return Err(Error::InvalidArgument {
            name: "weight",
            value: w,
            reason: "weights must be nonnegative",
        });
    }
    let total: f64 = weights.iter().sum();
    if abs(total - 1.0) > 1e-12 {
        return Err(Error::InvalidArgument {
            name: "weights",
            value: total,
            reason: "weights must sum to one",
        });
    }
    let (a, b) = chord(p_exp, m, big_m);
    let beta = a * (1.0 - 1.0 / p_exp) * x0 + b;
    let alpha = if p_exp == 1.0 { 1.0 } else { minimal_alpha(p_exp, m, big_m, x0) };
    let mean: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
    let lhs: f64 = values.iter().zip(weights).map(|(v, w)| w * powf(*v, p_exp)).sum();
    Ok(InverseJensen {
        lhs,
        rhs: alpha * powf(mean, p_exp) + beta,
        alpha,
        beta,
        a,
        b,
    })
}
