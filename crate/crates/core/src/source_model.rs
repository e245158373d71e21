//! Weak-coherent sources with bounded intensity errors.
//!
//! Each side (Alice, Bob) owns four sources: the unstable vacuum `v`, the two
//! decoys `x` and `y` in the X basis, and the signal `z` in the Z basis. The
//! actual intensity of any pulse is only known to lie in an interval:
//! `[0, δ₁]` for the vacuum source and `μ_l(1 ± δ₂)` for the others. The
//! photon-number coefficients `a_k` of every pulse are therefore bounded by
//! the extrema of the Poisson coefficient over that interval.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Additive tolerance on the normalisation of the source probabilities.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-12;

/// Default largest photon number checked by [`check_decoy_conditions`].
pub const DEFAULT_K_MAX: u32 = 20;

/// One of the four sources each party selects from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    V,
    X,
    Y,
    Z,
}

impl Source {
    pub const ALL: [Source; 4] = [Source::V, Source::X, Source::Y, Source::Z];

    pub fn index(self) -> usize {
        match self {
            Source::V => 0,
            Source::X => 1,
            Source::Y => 2,
            Source::Z => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Source::V => "v",
            Source::X => "x",
            Source::Y => "y",
            Source::Z => "z",
        }
    }

    pub fn from_label(label: &str) -> Option<Source> {
        match label {
            "v" => Some(Source::V),
            "x" => Some(Source::X),
            "y" => Some(Source::Y),
            "z" => Some(Source::Z),
            _ => None,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Alice,
    Bob,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Alice => f.write_str("A"),
            Side::Bob => f.write_str("B"),
        }
    }
}

/// Closed interval of mean photon numbers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi);
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Source settings of one party.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideSources {
    pub mu_x: f64,
    pub mu_y: f64,
    pub mu_z: f64,
    /// Cap on the vacuum-source intensity, `μ_v ∈ [0, δ₁]`.
    pub vacuum_cap: f64,
    /// Relative intensity fluctuation, `|δ_l| ≤ δ₂` for `l = x, y, z`.
    pub fluctuation: f64,
    pub p_v: f64,
    pub p_x: f64,
    pub p_y: f64,
    pub p_z: f64,
}

impl SideSources {
    pub fn validate(&self, side: Side) -> Result<()> {
        let field = |name: &str| format!("{side}.{name}");
        let finite = [
            ("mu_x", self.mu_x),
            ("mu_y", self.mu_y),
            ("mu_z", self.mu_z),
            ("vacuum_cap", self.vacuum_cap),
            ("fluctuation", self.fluctuation),
            ("p_v", self.p_v),
            ("p_x", self.p_x),
            ("p_y", self.p_y),
            ("p_z", self.p_z),
        ];
        for (name, value) in finite {
            if !value.is_finite() {
                return Err(Error::config(field(name), "must be finite"));
            }
        }
        if self.mu_x <= 0.0 {
            return Err(Error::config(field("mu_x"), "must be > 0"));
        }
        if self.mu_y <= self.mu_x {
            return Err(Error::config(
                field("mu_y"),
                format!(
                    "decoy condition requires mu_x < mu_y (mu_x = {}, mu_y = {})",
                    self.mu_x, self.mu_y
                ),
            ));
        }
        if self.mu_z <= 0.0 {
            return Err(Error::config(field("mu_z"), "must be > 0"));
        }
        if self.vacuum_cap < 0.0 {
            return Err(Error::config(field("vacuum_cap"), "must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.fluctuation) {
            return Err(Error::config(field("fluctuation"), "must lie in [0, 1)"));
        }
        for (name, p) in [
            ("p_v", self.p_v),
            ("p_x", self.p_x),
            ("p_y", self.p_y),
            ("p_z", self.p_z),
        ] {
            if p <= 0.0 {
                return Err(Error::config(field(name), "must be > 0"));
            }
        }
        let total = self.p_v + self.p_x + self.p_y + self.p_z;
        if (total - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(Error::config(
                field("p_v + p_x + p_y + p_z"),
                format!("must sum to 1 (got {total})"),
            ));
        }
        Ok(())
    }

    pub fn probability(&self, source: Source) -> f64 {
        match source {
            Source::V => self.p_v,
            Source::X => self.p_x,
            Source::Y => self.p_y,
            Source::Z => self.p_z,
        }
    }

    pub fn nominal_intensity(&self, source: Source) -> f64 {
        match source {
            Source::V => 0.0,
            Source::X => self.mu_x,
            Source::Y => self.mu_y,
            Source::Z => self.mu_z,
        }
    }

    /// Intensity used when simulating what an experiment would observe: the
    /// nominal value for `x, y, z` and the midpoint `δ₁/2` of the vacuum range.
    pub fn typical_intensity(&self, source: Source) -> f64 {
        match source {
            Source::V => 0.5 * self.vacuum_cap,
            other => self.nominal_intensity(other),
        }
    }

    /// Range of intensities any pulse of `source` may actually carry.
    pub fn intensity_interval(&self, source: Source) -> Interval {
        match source {
            Source::V => Interval::new(0.0, self.vacuum_cap),
            other => {
                let mu = self.nominal_intensity(other);
                Interval::new(mu * (1.0 - self.fluctuation), mu * (1.0 + self.fluctuation))
            }
        }
    }
}

/// Source description of both parties.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceEnsemble {
    pub alice: SideSources,
    pub bob: SideSources,
}

impl SourceEnsemble {
    pub fn symmetric(side: SideSources) -> Self {
        SourceEnsemble {
            alice: side,
            bob: side,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.alice.validate(Side::Alice)?;
        self.bob.validate(Side::Bob)
    }

    pub fn side(&self, side: Side) -> &SideSources {
        match side {
            Side::Alice => &self.alice,
            Side::Bob => &self.bob,
        }
    }
}

fn ln_factorial(k: u32) -> f64 {
    if k < 2 {
        return 0.0;
    }
    if k <= 256 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    // Stirling series; the truncation error is far below f64 precision here.
    let n = k as f64;
    let inv = 1.0 / n;
    let inv2 = inv * inv;
    n * n.ln() - n
        + 0.5 * (2.0 * std::f64::consts::PI * n).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

/// `ln(e^{-μ} μ^k / k!)`, `-∞` when the coefficient vanishes.
pub fn ln_poisson_coeff(mu: f64, k: u32) -> Result<f64> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::domain(format!(
            "mean photon number must be finite and >= 0, got {mu}"
        )));
    }
    if k == 0 {
        return Ok(-mu);
    }
    if mu == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(-mu + k as f64 * mu.ln() - ln_factorial(k))
}

/// Poisson photon-number probability `e^{-μ} μ^k / k!`.
pub fn poisson_coeff(mu: f64, k: u32) -> Result<f64> {
    if k == 0 {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::domain(format!(
                "mean photon number must be finite and >= 0, got {mu}"
            )));
        }
        return Ok((-mu).exp());
    }
    if k == 1 {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::domain(format!(
                "mean photon number must be finite and >= 0, got {mu}"
            )));
        }
        return Ok(mu * (-mu).exp());
    }
    Ok(ln_poisson_coeff(mu, k)?.exp())
}

/// Minimum and maximum of `ln p_k(μ)` over an interval. `p_k` is unimodal
/// with its peak at `μ = k`, so the extrema sit at the endpoints or there.
fn ln_coeff_extrema(interval: Interval, k: u32) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let peak = k as f64;
    let candidates = [
        Some(interval.lo),
        Some(interval.hi),
        interval.contains(peak).then_some(peak),
    ];
    for mu in candidates.into_iter().flatten() {
        let v = ln_poisson_coeff(mu, k).expect("interval endpoints are validated");
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Lower and upper bound on one photon-number coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoeffBound {
    pub lower: f64,
    pub upper: f64,
}

impl CoeffBound {
    pub fn over(interval: Interval, k: u32) -> Self {
        let (lo, hi) = ln_coeff_extrema(interval, k);
        CoeffBound {
            lower: lo.exp(),
            upper: hi.exp(),
        }
    }
}

/// Coefficient bounds of one party's four sources.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideBounds {
    intervals: [Interval; 4],
    coeffs: [[CoeffBound; 3]; 4],
}

impl SideBounds {
    pub fn from_sources(sources: &SideSources) -> Self {
        let intervals = Source::ALL.map(|s| sources.intensity_interval(s));
        let coeffs = intervals.map(|iv| [0u32, 1, 2].map(|k| CoeffBound::over(iv, k)));
        SideBounds { intervals, coeffs }
    }

    pub fn interval(&self, source: Source) -> Interval {
        self.intervals[source.index()]
    }

    /// Bounds on `a_k` for `source`; `k > 2` is evaluated on demand.
    pub fn coeff(&self, source: Source, k: u32) -> CoeffBound {
        match k {
            0..=2 => self.coeffs[source.index()][k as usize],
            _ => CoeffBound::over(self.interval(source), k),
        }
    }

    pub fn lower(&self, source: Source, k: u32) -> f64 {
        self.coeff(source, k).lower
    }

    pub fn upper(&self, source: Source, k: u32) -> f64 {
        self.coeff(source, k).upper
    }

    fn ln_extrema(&self, source: Source, k: u32) -> (f64, f64) {
        ln_coeff_extrema(self.interval(source), k)
    }
}

/// Worst-case photon-number coefficient bounds `[a_k^L, a_k^U]` (Alice) and
/// `[b_k^L, b_k^U]` (Bob).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotonCoeffBounds {
    pub alice: SideBounds,
    pub bob: SideBounds,
}

impl PhotonCoeffBounds {
    pub fn side(&self, side: Side) -> &SideBounds {
        match side {
            Side::Alice => &self.alice,
            Side::Bob => &self.bob,
        }
    }
}

pub fn coeff_bounds(ensemble: &SourceEnsemble) -> Result<PhotonCoeffBounds> {
    ensemble.validate()?;
    Ok(PhotonCoeffBounds {
        alice: SideBounds::from_sources(&ensemble.alice),
        bob: SideBounds::from_sources(&ensemble.bob),
    })
}

/// Which precondition a [`ConditionCheck`] refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    /// The intensity intervals of `x` and `y` are disjoint with `x` below `y`.
    DecoySeparation,
    /// `a_k^{y,L}/a_k^{x,U} ≥ a_2^{y,L}/a_2^{x,U} ≥ a_1^{y,L}/a_1^{x,U}` for all `k ≥ 2`.
    DecoyRatioChain,
    /// `a_k^l / a_k^v ≥ a_1^l / a_1^v` for every pulse, `k ≥ 2`, `l = x` or `y`.
    VacuumRatio(Source),
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::DecoySeparation => {
                f.write_str("decoy intensity intervals disjoint (x below y)")
            }
            Condition::DecoyRatioChain => f.write_str("decoy ratio chain y/x increasing in k"),
            Condition::VacuumRatio(s) => write!(f, "vacuum ratio condition for source {s}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConditionStatus {
    Pass,
    /// Exact vacuum (`δ₁ = 0`): the ratio degenerates to `0/0`, and every
    /// downstream use enters through σ factors that vanish.
    PassByConvention,
    /// Fails; `first_k` is the smallest violating photon number, if any.
    Fail {
        first_k: Option<u32>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub side: Side,
    pub condition: Condition,
    pub status: ConditionStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub k_max: u32,
    pub checks: Vec<ConditionCheck>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.checks
            .iter()
            .all(|c| !matches!(c.status, ConditionStatus::Fail { .. }))
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionCheck> {
        self.checks
            .iter()
            .filter(|c| matches!(c.status, ConditionStatus::Fail { .. }))
    }

    /// Human-readable summary of the failing checks.
    pub fn failure_message(&self) -> Option<String> {
        let parts: Vec<String> = self
            .failures()
            .map(|c| match c.status {
                ConditionStatus::Fail { first_k: Some(k) } => {
                    format!("side {}: {} violated at k = {k}", c.side, c.condition)
                }
                _ => format!("side {}: {} violated", c.side, c.condition),
            })
            .collect();
        (!parts.is_empty()).then(|| parts.join("; "))
    }
}

// Slack for comparing log-ratios; pure rounding noise must not flag a failure.
const LN_RATIO_SLACK: f64 = 1e-12;

fn check_side(side: Side, bounds: &SideBounds, k_max: u32, out: &mut Vec<ConditionCheck>) {
    let x = bounds.interval(Source::X);
    let y = bounds.interval(Source::Y);
    out.push(ConditionCheck {
        side,
        condition: Condition::DecoySeparation,
        status: if x.hi < y.lo {
            ConditionStatus::Pass
        } else {
            ConditionStatus::Fail { first_k: None }
        },
    });

    // ln(a_k^{y,L} / a_k^{x,U})
    let ln_ratio = |k: u32| bounds.ln_extrema(Source::Y, k).0 - bounds.ln_extrema(Source::X, k).1;
    let r1 = ln_ratio(1);
    let r2 = ln_ratio(2);
    let mut chain = if r2 + LN_RATIO_SLACK * r2.abs().max(1.0) >= r1 {
        ConditionStatus::Pass
    } else {
        ConditionStatus::Fail { first_k: Some(2) }
    };
    if chain == ConditionStatus::Pass {
        for k in 3..=k_max {
            if ln_ratio(k) + LN_RATIO_SLACK * r2.abs().max(1.0) < r2 {
                chain = ConditionStatus::Fail { first_k: Some(k) };
                break;
            }
        }
    }
    out.push(ConditionCheck {
        side,
        condition: Condition::DecoyRatioChain,
        status: chain,
    });

    // For Poisson pulses a_k/a_1 = μ^{k-1}/k!, increasing in μ. The per-pulse
    // condition holds for every admissible pair of pulses iff the smallest
    // decoy ratio dominates the largest vacuum ratio at every k.
    let vacuum = bounds.interval(Source::V);
    for source in [Source::X, Source::Y] {
        let status = if vacuum.hi == 0.0 {
            ConditionStatus::PassByConvention
        } else {
            let decoy = bounds.interval(source);
            let ln_ratio_k = |mu: f64, k: u32| {
                ln_poisson_coeff(mu, k).expect("validated")
                    - ln_poisson_coeff(mu, 1).expect("validated")
            };
            (2..=k_max)
                .find(|&k| ln_ratio_k(decoy.lo, k) < ln_ratio_k(vacuum.hi, k))
                .map_or(ConditionStatus::Pass, |k| ConditionStatus::Fail {
                    first_k: Some(k),
                })
        };
        out.push(ConditionCheck {
            side,
            condition: Condition::VacuumRatio(source),
            status,
        });
    }
}

/// Checks the decoy-state preconditions for `k = 2..=k_max` on both sides.
pub fn check_decoy_conditions(bounds: &PhotonCoeffBounds, k_max: u32) -> Result<ConditionReport> {
    if k_max < 2 {
        return Err(Error::domain(format!("k_max must be >= 2, got {k_max}")));
    }
    let mut checks = Vec::with_capacity(8);
    check_side(Side::Alice, &bounds.alice, k_max, &mut checks);
    check_side(Side::Bob, &bounds.bob, k_max, &mut checks);
    Ok(ConditionReport { k_max, checks })
}
