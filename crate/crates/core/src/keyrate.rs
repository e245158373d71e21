use serde::{Deserialize, Serialize};

use crate::channel_sim::{build_observables, ChannelParams, PairObservables};
use crate::error::{Error, Infeasibility, Result};
use crate::source_model::{
    check_decoy_conditions, coeff_bounds, PhotonCoeffBounds, SideBounds, Source, SourceEnsemble,
    DEFAULT_K_MAX,
};
use crate::stat_bounds::{chernoff_upper, combo_lower, combo_upper, ChernoffConfig, Envelope};

use Source::{V, X, Y, Z};

pub const DEFAULT_GRID_POINTS: usize = 1001;
pub const DEFAULT_REFINE_TOLERANCE: f64 = 1e-10;

/// Leakage factors of the vacuum source into the decoy single-photon terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaFactors {
    pub alice_x: f64,
    pub bob_x: f64,
    pub alice_y: f64,
    pub bob_y: f64,
}

impl SigmaFactors {
    pub fn sum_x(&self) -> f64 {
        self.alice_x + self.bob_x
    }

    pub fn sum_y(&self) -> f64 {
        self.alice_y + self.bob_y
    }
}

fn side_sigma(side: &SideBounds, decoy: Source, field: &str) -> Result<f64> {
    let den = side.lower(V, 0) * side.lower(decoy, 1);
    if !(den > 0.0) {
        return Err(Error::config(
            field,
            format!("vanishing lower coefficient bound for source {decoy}"),
        ));
    }
    Ok(side.upper(decoy, 0) * side.upper(V, 1) / den)
}

/// `σ = a_0^{l,U} a_1^{v,U} / (a_0^{v,L} a_1^{l,L})` for both decoys and sides.
pub fn sigma_factors(bounds: &PhotonCoeffBounds) -> Result<SigmaFactors> {
    let s = SigmaFactors {
        alice_x: side_sigma(&bounds.alice, X, "A.mu_x")?,
        bob_x: side_sigma(&bounds.bob, X, "B.mu_x")?,
        alice_y: side_sigma(&bounds.alice, Y, "A.mu_y")?,
        bob_y: side_sigma(&bounds.bob, Y, "B.mu_y")?,
    };
    if !(s.sum_x() < 1.0) {
        return Err(Error::Infeasible(Infeasibility::SigmaSumX));
    }
    if !(s.sum_y() < 1.0) {
        return Err(Error::Infeasible(Infeasibility::SigmaSumY));
    }
    Ok(s)
}

/// Everything the analysis consumes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisInputs {
    pub ensemble: SourceEnsemble,
    pub bounds: PhotonCoeffBounds,
    pub observables: PairObservables,
    pub chernoff: ChernoffConfig,
    pub ec_inefficiency: f64,
    pub grid_points: usize,
    pub refine_tolerance: f64,
    pub k_max: u32,
}

impl AnalysisInputs {
    pub fn new(
        ensemble: SourceEnsemble,
        observables: PairObservables,
        chernoff: ChernoffConfig,
        ec_inefficiency: f64,
    ) -> Result<Self> {
        let bounds = coeff_bounds(&ensemble)?;
        chernoff.validate()?;
        if !(ec_inefficiency >= 1.0) || !ec_inefficiency.is_finite() {
            return Err(Error::config(
                "ec_inefficiency",
                format!("must be finite and >= 1, got {ec_inefficiency}"),
            ));
        }
        Ok(AnalysisInputs {
            ensemble,
            bounds,
            observables,
            chernoff,
            ec_inefficiency,
            grid_points: DEFAULT_GRID_POINTS,
            refine_tolerance: DEFAULT_REFINE_TOLERANCE,
            k_max: DEFAULT_K_MAX,
        })
    }

    /// Inputs built from the expected observations of an honest run.
    pub fn simulated(ensemble: &SourceEnsemble, params: &ChannelParams) -> Result<Self> {
        let observables = build_observables(ensemble, params)?;
        AnalysisInputs::new(
            *ensemble,
            observables,
            ChernoffConfig::new(params.xi),
            params.ec_inefficiency,
        )
    }

    pub fn with_chernoff(mut self, chernoff: ChernoffConfig) -> Self {
        self.chernoff = chernoff;
        self
    }

    fn count(&self, l: Source, r: Source) -> (f64, f64, f64) {
        let rec = self.observables.get(l, r);
        (rec.emitted, rec.counts as f64, rec.errors as f64)
    }

    /// Single-photon-pair denominator
    /// `a_1^{x,U} a_1^{y,L} (b_1^{x,U} b_2^{y,L} − b_2^{x,U} b_1^{y,L})`.
    pub fn yield_denominator(&self) -> f64 {
        let (a, b) = (&self.bounds.alice, &self.bounds.bob);
        a.upper(X, 1)
            * a.lower(Y, 1)
            * (b.upper(X, 1) * b.lower(Y, 2) - b.upper(X, 2) * b.lower(Y, 1))
    }
}

/// Chernoff envelope of one source in rate units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceEnvelope {
    pub alice: Source,
    pub bob: Source,
    /// Envelope on `⟨S_lr⟩`.
    pub rate: Envelope,
    /// Envelope on `⟨T_lr⟩`.
    pub error_rate: Envelope,
}

/// Bounds on the expected rates entering the key formula, all per emitted pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectationEnvelope {
    pub sigma: SigmaFactors,
    pub sources: Vec<SourceEnvelope>,
    pub s_plus_lower: f64,
    pub s_minus_upper: f64,
    pub txx_upper: f64,
    pub h_lower: f64,
    pub h_upper: f64,
    pub chernoff_calls: usize,
}

fn to_rate(c: f64, emitted: f64) -> f64 {
    if emitted > 0.0 {
        c / emitted
    } else {
        0.0
    }
}

/// Lower bound on `S⁺ = a_1^{y,L} b_2^{y,L}⟨S_xx⟩ + K(a_0^{y,L}/a_0^{v,U}⟨S_vy⟩ + b_0^{y,L}/b_0^{v,U}⟨S_yv⟩)`
/// with `K = a_1^{x,U} b_2^{x,U}/(1 − σ_A^y − σ_B^y)`.
pub fn s_plus_lower(inputs: &AnalysisInputs, sigma: &SigmaFactors) -> Result<(f64, usize)> {
    let (a, b) = (&inputs.bounds.alice, &inputs.bounds.bob);
    let k = a.upper(X, 1) * b.upper(X, 2) / (1.0 - sigma.sum_y());
    let (l_xx, n_xx, _) = inputs.count(X, X);
    let (l_vy, n_vy, _) = inputs.count(V, Y);
    let (l_yv, n_yv, _) = inputs.count(Y, V);
    let jb = combo_lower(
        &[
            (to_rate(a.lower(Y, 1) * b.lower(Y, 2), l_xx), n_xx),
            (to_rate(k * a.lower(Y, 0) / a.upper(V, 0), l_vy), n_vy),
            (to_rate(k * b.lower(Y, 0) / b.upper(V, 0), l_yv), n_yv),
        ],
        &inputs.chernoff,
    )?;
    Ok((jb.value, jb.chernoff_calls))
}

/// Upper bound on `S⁻ = K(⟨S_yy⟩ + a_0^{y,U} b_0^{y,U}/(a_0^{v,L} b_0^{v,L})⟨S_vv⟩)`.
pub fn s_minus_upper(inputs: &AnalysisInputs, sigma: &SigmaFactors) -> Result<(f64, usize)> {
    let (a, b) = (&inputs.bounds.alice, &inputs.bounds.bob);
    let k = a.upper(X, 1) * b.upper(X, 2) / (1.0 - sigma.sum_y());
    let (l_yy, n_yy, _) = inputs.count(Y, Y);
    let (l_vv, n_vv, _) = inputs.count(V, V);
    let vac = a.upper(Y, 0) * b.upper(Y, 0) / (a.lower(V, 0) * b.lower(V, 0));
    let jb = combo_upper(
        &[(to_rate(k, l_yy), n_yy), (to_rate(k * vac, l_vv), n_vv)],
        &inputs.chernoff,
    )?;
    Ok((jb.value, jb.chernoff_calls))
}

/// Range `[H^L, H^U]` of the scaled expected error count of xx events with a
/// vacuum component, and the upper bound on `⟨T_xx⟩` used for `H^U`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HRange {
    pub lower: f64,
    pub upper: f64,
    pub txx_upper: f64,
    pub chernoff_calls: usize,
}

pub fn h_range(inputs: &AnalysisInputs, sigma: &SigmaFactors) -> Result<HRange> {
    let (a, b) = (&inputs.bounds.alice, &inputs.bounds.bob);
    let (l_xx, _, m_xx) = inputs.count(X, X);
    let (l_vx, _, m_vx) = inputs.count(V, X);
    let (l_xv, _, m_xv) = inputs.count(X, V);
    let (l_vv, _, m_vv) = inputs.count(V, V);
    let txx_upper = to_rate(chernoff_upper(m_xx, &inputs.chernoff)?, l_xx);
    let gain = combo_lower(
        &[
            (to_rate(a.lower(X, 0) / a.upper(V, 0), l_vx), m_vx),
            (to_rate(b.lower(X, 0) / b.upper(V, 0), l_xv), m_xv),
        ],
        &inputs.chernoff,
    )?;
    let vac = a.upper(X, 0) * b.upper(X, 0) / (a.lower(V, 0) * b.lower(V, 0));
    let loss = combo_upper(
        &[
            (to_rate(vac, l_vv), m_vv),
            (to_rate(sigma.sum_x(), l_xx), m_xx),
        ],
        &inputs.chernoff,
    )?;
    let lower = (2.0 / (1.0 - sigma.sum_x()) * (gain.value - loss.value)).max(0.0);
    Ok(HRange {
        lower,
        upper: 2.0 * txx_upper,
        txx_upper,
        chernoff_calls: 1 + gain.chernoff_calls + loss.chernoff_calls,
    })
}

/// All expectation bounds of one data set.
pub fn expectation_envelopes(inputs: &AnalysisInputs) -> Result<ExpectationEnvelope> {
    let sigma = sigma_factors(&inputs.bounds)?;
    let mut calls = 0;
    let mut sources = Vec::with_capacity(PairObservables::USED.len());
    for (l, r) in PairObservables::USED {
        let (emitted, n, m) = inputs.count(l, r);
        let scale = to_rate(1.0, emitted);
        sources.push(SourceEnvelope {
            alice: l,
            bob: r,
            rate: Envelope::of(n, &inputs.chernoff)?.scaled(scale),
            error_rate: Envelope::of(m, &inputs.chernoff)?.scaled(scale),
        });
        calls += 4;
    }
    let (s_plus, c1) = s_plus_lower(inputs, &sigma)?;
    let (s_minus, c2) = s_minus_upper(inputs, &sigma)?;
    let h = h_range(inputs, &sigma)?;
    Ok(ExpectationEnvelope {
        sigma,
        sources,
        s_plus_lower: s_plus,
        s_minus_upper: s_minus,
        txx_upper: h.txx_upper,
        h_lower: h.lower,
        h_upper: h.upper,
        chernoff_calls: calls + c1 + c2 + h.chernoff_calls,
    })
}

/// `(S⁺ − S⁻ − a_1^{y,L} b_2^{y,L} H) / D`, clamped at zero.
pub fn s11_lower(h: f64, s_plus: f64, s_minus: f64, bounds: &PhotonCoeffBounds) -> Result<f64> {
    let (a, b) = (&bounds.alice, &bounds.bob);
    let den = a.upper(X, 1)
        * a.lower(Y, 1)
        * (b.upper(X, 1) * b.lower(Y, 2) - b.upper(X, 2) * b.lower(Y, 1));
    if !(den > 0.0) {
        return Err(Error::config(
            "mu_y",
            "decoy intensities too close: single-photon yield denominator is not positive",
        ));
    }
    Ok(((s_plus - s_minus - a.lower(Y, 1) * b.lower(Y, 2) * h) / den).max(0.0))
}

/// Phase-flip error bound `(⟨T_xx⟩^U − H/2) / (a_1^{x,L} b_1^{x,L} s11)` clamped
/// to `[0, 1]`. `None` when `s11` vanishes, meaning no key at this `H`.
pub fn e11_upper(h: f64, txx_upper: f64, s11: f64, bounds: &PhotonCoeffBounds) -> Option<f64> {
    if !(s11 > 0.0) {
        return None;
    }
    let den = bounds.alice.lower(X, 1) * bounds.bob.lower(X, 1) * s11;
    Some(((txx_upper - 0.5 * h) / den).clamp(0.0, 1.0))
}

/// `−x log₂x − (1−x) log₂(1−x)` with `H(0) = H(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!(
            "binary entropy argument must lie in [0, 1], got {x}"
        )));
    }
    let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    Ok(term(x) + term(1.0 - x))
}

/// One evaluation of the key-rate function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub h: f64,
    pub rate: f64,
    pub s11_lower: f64,
    /// `None` when no phase error bound exists because `s11` vanished.
    pub e11_upper: Option<f64>,
}

/// Key rate per emitted pair as a function of `H`, with all data-dependent
/// bounds fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct RateFunction {
    pub envelope: ExpectationEnvelope,
    bounds: PhotonCoeffBounds,
    prefactor: f64,
    z_single: f64,
    leak: f64,
    pub s_zz: f64,
    pub e_zz: f64,
}

impl RateFunction {
    pub fn new(inputs: &AnalysisInputs) -> Result<Self> {
        let envelope = expectation_envelopes(inputs)?;
        // Fails early on a non-positive denominator.
        s11_lower(0.0, 0.0, 0.0, &inputs.bounds)?;
        let zz = inputs.observables.get(Z, Z);
        let s_zz = zz.rate();
        let e_zz = inputs.observables.qber_zz();
        Ok(RateFunction {
            envelope,
            bounds: inputs.bounds,
            prefactor: inputs.ensemble.alice.p_z * inputs.ensemble.bob.p_z,
            z_single: inputs.bounds.alice.lower(Z, 1) * inputs.bounds.bob.lower(Z, 1),
            leak: inputs.ec_inefficiency * s_zz * binary_entropy(e_zz)?,
            s_zz,
            e_zz,
        })
    }

    pub fn at(&self, h: f64) -> RatePoint {
        let env = &self.envelope;
        let s11 = s11_lower(h, env.s_plus_lower, env.s_minus_upper, &self.bounds).unwrap_or(0.0);
        let e11 = e11_upper(h, env.txx_upper, s11, &self.bounds);
        let privacy = match e11 {
            Some(e) if e < 0.5 => s11 * (1.0 - binary_entropy(e).unwrap_or(1.0)),
            _ => 0.0,
        };
        RatePoint {
            h,
            rate: self.prefactor * (self.z_single * privacy - self.leak),
            s11_lower: s11,
            e11_upper: e11,
        }
    }
}

/// Raw, possibly negative `R(H)`.
pub fn key_rate_at(h: f64, inputs: &AnalysisInputs) -> Result<f64> {
    Ok(RateFunction::new(inputs)?.at(h).rate)
}

/// Result of the minimization over `H`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    /// Secure key rate per emitted pulse pair, `max(0, min_H R(H))`.
    pub rate: f64,
    /// `min_H R(H)` before clamping; `None` when the analysis stopped early.
    pub raw_min_rate: Option<f64>,
    pub h_lower: f64,
    pub h_upper: f64,
    pub h_star: f64,
    pub s11_lower: f64,
    pub e11_upper: f64,
    pub s_zz: f64,
    pub e_zz: f64,
    pub chernoff_calls: usize,
    /// Set whenever `rate` is zero.
    pub reason: Option<Infeasibility>,
    /// Grid samples `(H, R(H))`.
    pub trace: Vec<(f64, f64)>,
}

impl KeyRateReport {
    fn infeasible(reason: Infeasibility, observables: &PairObservables) -> Self {
        KeyRateReport {
            rate: 0.0,
            raw_min_rate: None,
            h_lower: 0.0,
            h_upper: 0.0,
            h_star: 0.0,
            s11_lower: 0.0,
            e11_upper: 0.5,
            s_zz: observables.get(Z, Z).rate(),
            e_zz: observables.qber_zz(),
            chernoff_calls: 0,
            reason: Some(reason),
            trace: Vec::new(),
        }
    }
}

/// Golden-section search for the minimum of `f` on `[a, b]`.
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Minimizes `R(H)` over `[H^L, H^U]` on a uniform grid followed by
/// golden-section refinement around the grid minimum.
pub fn minimize_over_h(
    rf: &RateFunction,
    grid_points: usize,
    tolerance: f64,
) -> (RatePoint, Vec<(f64, f64)>) {
    let (lo, hi) = (rf.envelope.h_lower, rf.envelope.h_upper);
    if !(hi > lo) || grid_points < 2 {
        let p = rf.at(lo);
        return (p, vec![(p.h, p.rate)]);
    }
    let n = grid_points - 1;
    let step = (hi - lo) / n as f64;
    let grid_h = |i: usize| if i == n { hi } else { lo + step * i as f64 };
    let trace: Vec<(f64, f64)> = (0..=n)
        .map(|i| (grid_h(i), rf.at(grid_h(i)).rate))
        .collect();
    let i_min = trace
        .iter()
        .enumerate()
        .min_by(|x, y| x.1 .1.total_cmp(&y.1 .1))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    let (a, b) = (grid_h(i_min.saturating_sub(1)), grid_h((i_min + 1).min(n)));
    let tol = tolerance * hi.abs().max(f64::MIN_POSITIVE);
    let (h_ref, r_ref) = golden_min(|h| rf.at(h).rate, a, b, tol);
    let best = if r_ref < trace[i_min].1 {
        rf.at(h_ref)
    } else {
        rf.at(trace[i_min].0)
    };
    (best, trace)
}

/// Secure key rate of a data set. "No key" outcomes are reported as a zero
/// rate with a reason; only configuration and solver problems are errors.
pub fn secure_key_rate(inputs: &AnalysisInputs) -> Result<KeyRateReport> {
    let conditions = check_decoy_conditions(&inputs.bounds, inputs.k_max)?;
    if !conditions.passed() {
        return Ok(KeyRateReport::infeasible(
            Infeasibility::DecoyConditions,
            &inputs.observables,
        ));
    }
    let rf = match RateFunction::new(inputs) {
        Ok(rf) => rf,
        Err(Error::Infeasible(reason)) => {
            return Ok(KeyRateReport::infeasible(reason, &inputs.observables))
        }
        Err(e) => return Err(e),
    };
    let env = &rf.envelope;
    if env.h_lower > env.h_upper {
        let mut report = KeyRateReport::infeasible(Infeasibility::EmptyHRange, &inputs.observables);
        report.h_lower = env.h_lower;
        report.h_upper = env.h_upper;
        report.chernoff_calls = env.chernoff_calls;
        return Ok(report);
    }
    let (best, trace) = minimize_over_h(&rf, inputs.grid_points, inputs.refine_tolerance);
    let rate = best.rate.max(0.0);
    Ok(KeyRateReport {
        rate,
        raw_min_rate: Some(best.rate),
        h_lower: env.h_lower,
        h_upper: env.h_upper,
        h_star: best.h,
        s11_lower: best.s11_lower,
        e11_upper: best.e11_upper.unwrap_or(0.5),
        s_zz: rf.s_zz,
        e_zz: rf.e_zz,
        chernoff_calls: env.chernoff_calls,
        reason: (rate <= 0.0).then_some(Infeasibility::NonPositiveRate),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source_model::SideSources;
    use approx::assert_relative_eq;

    fn sources(vacuum_cap: f64, fluctuation: f64) -> SourceEnsemble {
        SourceEnsemble::symmetric(SideSources {
            mu_x: 0.1,
            mu_y: 0.4,
            mu_z: 0.5,
            vacuum_cap,
            fluctuation,
            p_v: 0.1,
            p_x: 0.1,
            p_y: 0.1,
            p_z: 0.7,
        })
    }

    fn inputs(distance: f64) -> AnalysisInputs {
        AnalysisInputs::simulated(
            &sources(1e-6, 0.0),
            &ChannelParams::default().at_distance(distance),
        )
        .unwrap()
    }

    #[test]
    fn exact_vacuum_has_zero_sigma() {
        let s = sigma_factors(&coeff_bounds(&sources(0.0, 0.05)).unwrap()).unwrap();
        assert_eq!(
            (s.alice_x, s.bob_x, s.alice_y, s.bob_y),
            (0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn sigma_grows_with_vacuum_cap() {
        let mut last = 0.0;
        for cap in [0.0, 1e-8, 1e-6, 1e-4, 1e-2] {
            let s = sigma_factors(&coeff_bounds(&sources(cap, 0.0)).unwrap()).unwrap();
            assert!(s.alice_x >= last);
            last = s.alice_x;
        }
    }

    #[test]
    fn huge_vacuum_cap_is_infeasible() {
        let mut e = sources(0.09, 0.0);
        e.alice.mu_x = 0.1;
        let b = coeff_bounds(&e).unwrap();
        // About 0.9 per side.
        assert_eq!(
            sigma_factors(&b),
            Err(Error::Infeasible(Infeasibility::SigmaSumX))
        );
    }

    #[test]
    fn binary_entropy_values() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!(binary_entropy(1.5).is_err());
        assert!(binary_entropy(-0.1).is_err());
    }

    #[test]
    fn s11_is_affine_and_decreasing() {
        let b = coeff_bounds(&sources(1e-6, 0.01)).unwrap();
        let f = |h| s11_lower(h, 1e-3, 2e-4, &b).unwrap();
        assert!(f(1e-5) < f(0.0));
        assert_relative_eq!(f(0.0) - f(1e-5), f(1e-5) - f(2e-5), max_relative = 1e-9);
        assert_eq!(s11_lower(0.0, 3e-4, 3e-4, &b).unwrap(), 0.0);
    }

    #[test]
    fn close_decoys_give_config_error() {
        let mut e = sources(0.0, 0.0);
        e.alice.mu_y = 0.1000001;
        e.bob.mu_y = 0.1000001;
        let b = coeff_bounds(&e).unwrap();
        // b_1^x b_2^y − b_2^x b_1^y is proportional to μ_y − μ_x and only barely positive.
        assert!(s11_lower(0.0, 1.0, 0.0, &b).is_ok());
        e.alice.fluctuation = 0.2;
        e.bob.fluctuation = 0.2;
        let b = coeff_bounds(&e).unwrap();
        assert!(matches!(
            s11_lower(0.0, 1.0, 0.0, &b),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn e11_vanishes_at_upper_h() {
        let b = coeff_bounds(&sources(1e-6, 0.01)).unwrap();
        assert_eq!(e11_upper(2e-4, 1e-4, 1e-3, &b), Some(0.0));
        assert_eq!(e11_upper(0.0, 1e-4, 0.0, &b), None);
        let e1 = e11_upper(0.0, 1e-4, 1.0, &b).unwrap();
        let e2 = e11_upper(1e-5, 1e-4, 1.0, &b).unwrap();
        assert!(e2 < e1);
    }

    #[test]
    fn zero_yield_rate_is_pure_leakage() {
        let inp = inputs(10.0);
        let rf = RateFunction::new(&inp).unwrap();
        let h = 1e9;
        let p = rf.at(h);
        assert_eq!(p.s11_lower, 0.0);
        let expect = -0.49 * inp.ec_inefficiency * rf.s_zz * binary_entropy(rf.e_zz).unwrap();
        assert_relative_eq!(p.rate, expect, max_relative = 1e-12);
    }

    #[test]
    fn positive_rate_at_short_distance() {
        let report = secure_key_rate(&inputs(10.0)).unwrap();
        assert!(report.rate > 0.0, "{report:?}");
        assert!(report.reason.is_none());
        assert!(report.h_lower <= report.h_star && report.h_star <= report.h_upper);
        assert!(report.e11_upper <= 0.5);
        assert_eq!(report.trace.len(), DEFAULT_GRID_POINTS);
        assert!(report.chernoff_calls > 0);
    }

    #[test]
    fn refined_minimum_not_above_grid() {
        let inp = inputs(30.0);
        let report = secure_key_rate(&inp).unwrap();
        let grid_min = report
            .trace
            .iter()
            .map(|t| t.1)
            .fold(f64::INFINITY, f64::min);
        let raw = report.raw_min_rate.unwrap();
        assert!(raw <= grid_min);
        assert!(raw >= grid_min - 1e-12);
    }

    #[test]
    fn degenerate_h_range_single_evaluation() {
        let inp = inputs(10.0);
        let mut rf = RateFunction::new(&inp).unwrap();
        rf.envelope.h_lower = rf.envelope.h_upper;
        let (p, trace) = minimize_over_h(&rf, 1001, 1e-10);
        assert_eq!(trace.len(), 1);
        assert_eq!(p.h, rf.envelope.h_upper);
    }

    #[test]
    fn far_distance_gives_zero_with_reason() {
        let report = secure_key_rate(&inputs(400.0)).unwrap();
        assert_eq!(report.rate, 0.0);
        assert!(report.reason.is_some());
    }

    #[test]
    fn swapped_decoys_report_reason() {
        let mut e = sources(1e-6, 0.0);
        let params = ChannelParams::default();
        let obs = build_observables(&e, &params).unwrap();
        e.alice.mu_x = 0.4;
        e.alice.mu_y = 0.4;
        let inp = AnalysisInputs {
            bounds: PhotonCoeffBounds {
                alice: SideBounds::from_sources(&e.alice),
                bob: SideBounds::from_sources(&e.bob),
            },
            ..AnalysisInputs::new(sources(1e-6, 0.0), obs, ChernoffConfig::new(1e-7), 1.16).unwrap()
        };
        let report = secure_key_rate(&inp).unwrap();
        assert_eq!(report.rate, 0.0);
        assert_eq!(report.reason, Some(Infeasibility::DecoyConditions));
    }

    #[test]
    fn envelopes_contain_observed_rates() {
        let inp = inputs(10.0);
        let env = expectation_envelopes(&inp).unwrap();
        for s in &env.sources {
            let rec = inp.observables.get(s.alice, s.bob);
            assert!(s.rate.contains(rec.rate()));
            assert!(s.error_rate.contains(rec.error_rate()));
        }
        assert!(env.h_lower <= env.h_upper);
    }

    #[test]
    fn more_data_narrows_envelopes() {
        let inp = inputs(10.0);
        let big = AnalysisInputs {
            observables: inp.observables.scaled(100.0),
            ..inp.clone()
        };
        let (e1, e2) = (
            expectation_envelopes(&inp).unwrap(),
            expectation_envelopes(&big).unwrap(),
        );
        for (a, b) in e1.sources.iter().zip(&e2.sources) {
            let w = |e: &Envelope| e.upper - e.lower;
            if w(&a.rate) > 0.0 {
                assert!(w(&b.rate) < w(&a.rate));
            }
        }
    }
}
