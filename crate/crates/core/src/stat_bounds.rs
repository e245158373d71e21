//! Chernoff envelopes on expected counts.
//!
//! For an observed count `X` of independent Bernoulli trials the expected
//! value lies in `[X/(1+δ₁), X/(1−δ₂)]` except with probability `ξ`, where
//! `δ₁, δ₂` solve
//!
//! ```text
//! X/(1+δ₁) · [δ₁ − (1+δ₁) ln(1+δ₁)] = ln(ξ/2)
//! X/(1−δ₂) · [−δ₂ − (1−δ₂) ln(1−δ₂)] = ln(ξ/2)
//! ```
//!
//! Both left-hand sides are strictly decreasing in the deviation, so the
//! roots are bracketed and found by bisection in log space.
//!
//! Weighted sums `Σ cᵢ⟨Xᵢ⟩` with `cᵢ ≥ 0` are bounded jointly: with the
//! coefficients sorted in descending order, `Σ cᵢXᵢ = Σₖ (c₍ₖ₎ − c₍ₖ₊₁₎) Sₖ`
//! where `Sₖ` are the nested partial sums, and each `Sₖ` gets its own
//! Chernoff bound. Singletons, pairs and the triple produced this way are
//! exactly the grouped constraints used by the key-rate analysis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How expected values are related to observed counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvelopeMode {
    /// Chernoff bounds at failure probability `ξ`.
    Chernoff,
    /// Infinite-data limit: expected values equal observed values.
    Asymptotic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChernoffConfig {
    /// Failure probability of each individual estimate.
    pub xi: f64,
    /// Relative tolerance on the solved deviation.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub mode: EnvelopeMode,
}

impl ChernoffConfig {
    pub fn new(xi: f64) -> Self {
        ChernoffConfig {
            xi,
            tolerance: 1e-12,
            max_iterations: 1000,
            mode: EnvelopeMode::Chernoff,
        }
    }

    pub fn asymptotic() -> Self {
        ChernoffConfig {
            mode: EnvelopeMode::Asymptotic,
            ..ChernoffConfig::new(1e-7)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::config(
                "xi",
                format!("must lie in (0, 1), got {}", self.xi),
            ));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1e-3) {
            return Err(Error::config(
                "chernoff_tolerance",
                format!("must lie in (0, 1e-3), got {}", self.tolerance),
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("chernoff_max_iterations", "must be >= 1"));
        }
        Ok(())
    }

    /// `ln(ξ/2)`, the common right-hand side of both tail equations.
    pub fn log_half_xi(&self) -> f64 {
        (0.5 * self.xi).ln()
    }
}

/// Expected-count envelope `[μ^L, μ^U]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub lower: f64,
    pub upper: f64,
}

impl Envelope {
    pub fn of(count: f64, cfg: &ChernoffConfig) -> Result<Self> {
        Ok(Envelope {
            lower: chernoff_lower(count, cfg)?,
            upper: chernoff_upper(count, cfg)?,
        })
    }

    pub fn scaled(self, factor: f64) -> Self {
        Envelope {
            lower: self.lower * factor,
            upper: self.upper * factor,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// `δ/(1+δ) − ln(1+δ)`: the lower-tail exponent per unit of `X`.
fn lower_rate(delta: f64) -> f64 {
    if delta < 1e-2 {
        // Σ_{n≥2} (−1)^{n+1} (n−1)/n δⁿ
        let mut term = delta * delta;
        let mut sum = 0.0;
        for n in 2..40 {
            let nf = n as f64;
            let sign = if n % 2 == 0 { -1.0 } else { 1.0 };
            sum += sign * (nf - 1.0) / nf * term;
            term *= delta;
            if term < 1e-300 {
                break;
            }
        }
        sum
    } else {
        delta / (1.0 + delta) - delta.ln_1p()
    }
}

/// `−δ/(1−δ) − ln(1−δ)` written in terms of `u = 1 − δ`.
fn upper_rate_u(u: f64) -> f64 {
    let delta = 1.0 - u;
    if delta < 1e-2 {
        // −Σ_{n≥2} (n−1)/n δⁿ
        let mut term = delta * delta;
        let mut sum = 0.0;
        for n in 2..40 {
            let nf = n as f64;
            sum -= (nf - 1.0) / nf * term;
            term *= delta;
            if term < 1e-300 {
                break;
            }
        }
        sum
    } else {
        -delta / u - u.ln()
    }
}

/// Left-hand side of the lower-tail equation, `X/(1+δ)·[δ − (1+δ)ln(1+δ)]`.
pub fn lower_tail_exponent(delta: f64, count: f64) -> f64 {
    count * lower_rate(delta)
}

/// Left-hand side of the upper-tail equation, `X/(1−δ)·[−δ − (1−δ)ln(1−δ)]`.
pub fn upper_tail_exponent(delta: f64, count: f64) -> f64 {
    count * upper_rate_u(1.0 - delta)
}

fn check_count(count: f64) -> Result<()> {
    if !(count >= 0.0) || !count.is_finite() {
        return Err(Error::domain(format!(
            "observed count must be finite and >= 0, got {count}"
        )));
    }
    Ok(())
}

/// Bisection for the root of a decreasing function `f` on `[lo, hi]` with
/// `f(lo) > 0 ≥ f(hi)`, converging to relative width `tol`. The midpoint is
/// geometric while the bracket spans more than a factor of two.
fn bisect_decreasing(
    mut lo: f64,
    mut hi: f64,
    f: impl Fn(f64) -> f64,
    tol: f64,
    max_iterations: usize,
    what: &str,
) -> Result<f64> {
    for _ in 0..max_iterations {
        if hi - lo <= tol * hi {
            return Ok(0.5 * (lo + hi));
        }
        let mid = if hi > 2.0 * lo {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Solver(format!(
        "{what}: bisection did not converge in {max_iterations} iterations (bracket [{lo}, {hi}])"
    )))
}

/// Deviation `δ₁ > 0` of the lower Chernoff bound for `count > 0`.
pub fn lower_deviation(count: f64, cfg: &ChernoffConfig) -> Result<f64> {
    check_count(count)?;
    if count == 0.0 {
        return Err(Error::domain(
            "lower deviation is unbounded for a zero count",
        ));
    }
    let target = cfg.log_half_xi();
    let residual = |d: f64| lower_tail_exponent(d, count) - target;
    let mut lo = 1e-12;
    let mut hi = 1.0;
    let mut budget = cfg.max_iterations;
    while residual(lo) <= 0.0 {
        lo *= 1e-3;
        budget = budget
            .checked_sub(1)
            .ok_or_else(|| solver_bracket("lower deviation"))?;
    }
    while residual(hi) > 0.0 {
        hi *= 2.0;
        budget = budget
            .checked_sub(1)
            .ok_or_else(|| solver_bracket("lower deviation"))?;
        if !hi.is_finite() {
            return Err(solver_bracket("lower deviation"));
        }
    }
    bisect_decreasing(lo, hi, residual, cfg.tolerance, budget, "lower deviation")
}

fn solver_bracket(what: &str) -> Error {
    Error::Solver(format!("{what}: failed to bracket the root"))
}

/// Deviation `δ₂ ∈ (0, 1)` of the upper Chernoff bound for `count > 0`.
///
/// Returned as the pair `(δ₂, 1 − δ₂)`; the complement is solved directly
/// when the root is close to one, where `1 − δ₂` would lose all precision.
pub fn upper_deviation(count: f64, cfg: &ChernoffConfig) -> Result<(f64, f64)> {
    check_count(count)?;
    if count == 0.0 {
        return Err(Error::domain("upper deviation tends to 1 for a zero count"));
    }
    let target = cfg.log_half_xi();
    let mut budget = cfg.max_iterations;
    if count * upper_rate_u(0.5) - target <= 0.0 {
        // δ₂ ≤ 1/2: the residual decreases in δ.
        let residual = |d: f64| count * upper_rate_u(1.0 - d) - target;
        let mut lo = 1e-12;
        while residual(lo) <= 0.0 {
            lo *= 1e-3;
            budget = budget
                .checked_sub(1)
                .ok_or_else(|| solver_bracket("upper deviation"))?;
        }
        let d = bisect_decreasing(lo, 0.5, residual, cfg.tolerance, budget, "upper deviation")?;
        Ok((d, 1.0 - d))
    } else {
        // δ₂ > 1/2: solve for u = 1 − δ₂; the residual increases in u.
        let residual = |u: f64| target - count * upper_rate_u(u);
        let mut lo = 0.25;
        while residual(lo) <= 0.0 {
            lo *= 0.5;
            budget = budget
                .checked_sub(1)
                .ok_or_else(|| solver_bracket("upper deviation"))?;
            if lo == 0.0 {
                return Err(solver_bracket("upper deviation"));
            }
        }
        let u = bisect_decreasing(lo, 0.5, residual, cfg.tolerance, budget, "upper deviation")?;
        Ok((1.0 - u, u))
    }
}

/// Lower bound `μ^L(X) = X/(1+δ₁)` on the expected value of `count`.
pub fn chernoff_lower(count: f64, cfg: &ChernoffConfig) -> Result<f64> {
    check_count(count)?;
    if cfg.mode == EnvelopeMode::Asymptotic {
        return Ok(count);
    }
    if count == 0.0 {
        return Ok(0.0);
    }
    let delta = lower_deviation(count, cfg)?;
    Ok(count / (1.0 + delta))
}

/// Upper bound `μ^U(X) = X/(1−δ₂)` on the expected value of `count`. A zero
/// count gives `ln(2/ξ)`, the limit of the bound as `X → 0`.
pub fn chernoff_upper(count: f64, cfg: &ChernoffConfig) -> Result<f64> {
    check_count(count)?;
    if cfg.mode == EnvelopeMode::Asymptotic {
        return Ok(count);
    }
    if count == 0.0 {
        return Ok(-cfg.log_half_xi());
    }
    let (_, complement) = upper_deviation(count, cfg)?;
    Ok(count / complement)
}

/// Joint bound on a weighted sum together with the number of Chernoff
/// estimates it consumed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointBound {
    pub value: f64,
    pub chernoff_calls: usize,
}

fn telescope(terms: &[(f64, f64)], bound: impl Fn(f64) -> Result<f64>) -> Result<JointBound> {
    for &(c, x) in terms {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::domain(format!(
                "combination coefficient must be finite and >= 0, got {c}"
            )));
        }
        check_count(x)?;
    }
    let mut sorted: Vec<(f64, f64)> = terms.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut value = 0.0;
    let mut calls = 0;
    let mut partial = 0.0;
    for (k, &(c, x)) in sorted.iter().enumerate() {
        partial += x;
        let next = sorted.get(k + 1).map_or(0.0, |t| t.0);
        let weight = c - next;
        if weight > 0.0 {
            value += weight * bound(partial)?;
            calls += 1;
        }
    }
    Ok(JointBound {
        value,
        chernoff_calls: calls,
    })
}

/// Lower bound on `Σ cᵢ⟨Xᵢ⟩` from observed counts `Xᵢ` and `cᵢ ≥ 0`.
pub fn combo_lower(terms: &[(f64, f64)], cfg: &ChernoffConfig) -> Result<JointBound> {
    telescope(terms, |s| chernoff_lower(s, cfg))
}

/// Upper bound on `Σ cᵢ⟨Xᵢ⟩` from observed counts `Xᵢ` and `cᵢ ≥ 0`.
pub fn combo_upper(terms: &[(f64, f64)], cfg: &ChernoffConfig) -> Result<JointBound> {
    telescope(terms, |s| chernoff_upper(s, cfg))
}
