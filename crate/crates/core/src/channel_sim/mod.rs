//! Symmetric-channel model of what the relay's Bell-state measurement would
//! record.
//!
//! Both parties send phase-randomised weak coherent pulses through fibres of
//! equal length `L/2` to a relay with a 50:50 beam splitter followed by a
//! polarising beam splitter on each output and four identical threshold
//! detectors (`c_H, c_V, d_H, d_V`). A successful event is exactly two clicks,
//! one in an H detector and one in a V detector: same output port announces
//! `Ψ⁺`, different ports announce `Ψ⁻`. Misalignment flips the correctness of
//! a successful event with probability `e_d`.
//!
//! [`pair_yield`] is the closed form of that model; [`monte_carlo_yield`]
//! simulates it pulse by pulse and serves as its oracle.

mod monte_carlo;
mod observables;
mod validation;

pub use monte_carlo::{monte_carlo_yield, McEstimate, MC_CHUNK_TRIALS};
pub use observables::{build_observables, PairObservables, PairRecord};
pub use validation::{validate_model, ModelCheck, VALIDATION_GRID};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Basis combination of a two-pulse source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    /// Both parties in the X (diagonal) basis.
    X,
    /// Both parties in the Z (rectilinear) basis.
    Z,
    /// Alice in Z, Bob in X; discarded in sifting.
    ZX,
    /// Alice in X, Bob in Z; discarded in sifting.
    XZ,
}

impl Basis {
    pub fn label(self) -> &'static str {
        match self {
            Basis::X => "X",
            Basis::Z => "Z",
            Basis::ZX => "ZX",
            Basis::XZ => "XZ",
        }
    }

    pub fn from_label(label: &str) -> Option<Basis> {
        match label {
            "X" => Some(Basis::X),
            "Z" => Some(Basis::Z),
            "ZX" => Some(Basis::ZX),
            "XZ" => Some(Basis::XZ),
            _ => None,
        }
    }
}

/// Experimental parameters; defaults are the reference setup.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Error rate of vacuum (uncorrelated) counts.
    pub e0: f64,
    /// Misalignment error probability.
    pub misalignment: f64,
    /// Dark count probability per detector per gate.
    pub dark_count: f64,
    pub detector_efficiency: f64,
    /// Fibre loss in dB/km.
    pub fiber_loss: f64,
    /// Error-correction inefficiency `f`.
    pub ec_inefficiency: f64,
    /// Failure probability `ξ` of each Chernoff estimate.
    pub xi: f64,
    /// Total number of emitted pulse pairs `N_t`.
    pub total_pairs: f64,
    /// Alice–Bob distance in km; the relay sits at the midpoint.
    pub distance_km: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            e0: 0.5,
            misalignment: 0.015,
            dark_count: 6.02e-6,
            detector_efficiency: 0.145,
            fiber_loss: 0.2,
            ec_inefficiency: 1.16,
            xi: 1e-7,
            total_pairs: 1e11,
            distance_km: 10.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("e0", self.e0),
            ("misalignment", self.misalignment),
            ("dark_count", self.dark_count),
            ("detector_efficiency", self.detector_efficiency),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::config(
                "xi",
                format!("must lie in (0, 1), got {}", self.xi),
            ));
        }
        if !(self.fiber_loss >= 0.0) || !self.fiber_loss.is_finite() {
            return Err(Error::config("fiber_loss", "must be finite and >= 0"));
        }
        if !(self.ec_inefficiency >= 1.0) || !self.ec_inefficiency.is_finite() {
            return Err(Error::config("ec_inefficiency", "must be finite and >= 1"));
        }
        if !(self.total_pairs >= 1.0) || !self.total_pairs.is_finite() {
            return Err(Error::config("total_pairs", "must be finite and >= 1"));
        }
        if !(self.distance_km >= 0.0) || !self.distance_km.is_finite() {
            return Err(Error::config("distance_km", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn at_distance(&self, distance_km: f64) -> Self {
        ChannelParams {
            distance_km,
            ..*self
        }
    }
}

/// Overall efficiency of one arm: fibre over `L/2` times detector efficiency.
pub fn side_transmittance(params: &ChannelParams) -> f64 {
    params.detector_efficiency * 10f64.powf(-params.fiber_loss * (0.5 * params.distance_km) / 10.0)
}

/// `I₀(z) − 1` for the modified Bessel function of order zero.
pub fn bessel_i0_minus_one(z: f64) -> f64 {
    let z = z.abs();
    if z > 30.0 {
        // Leading asymptotic expansion; relative error < 1e-6 here.
        let inv = 1.0 / (8.0 * z);
        let series = 1.0 + inv * (1.0 + inv * (4.5 + inv * 37.5));
        return z.exp() / (2.0 * std::f64::consts::PI * z).sqrt() * series - 1.0;
    }
    let q = 0.25 * z * z;
    let mut term = 1.0;
    let mut sum = 0.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
        k += 1.0;
    }
    sum
}

pub fn bessel_i0(z: f64) -> f64 {
    1.0 + bessel_i0_minus_one(z)
}

/// Probability per pulse pair of a successful event (`gain`) and of an
/// erroneous successful event (`error_gain`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Yield {
    pub gain: f64,
    pub error_gain: f64,
}

impl Yield {
    fn clamped(gain: f64, error_gain: f64) -> Self {
        let gain = gain.clamp(0.0, 1.0);
        Yield {
            gain,
            error_gain: error_gain.clamp(0.0, gain),
        }
    }

    pub fn error_rate(&self) -> f64 {
        if self.gain > 0.0 {
            self.error_gain / self.gain
        } else {
            0.0
        }
    }
}

/// Analytic gain and error gain for source intensities `mu_a`, `mu_b`.
pub fn pair_yield(mu_a: f64, mu_b: f64, basis: Basis, params: &ChannelParams) -> Result<Yield> {
    for mu in [mu_a, mu_b] {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::domain(format!(
                "intensity must be finite and >= 0, got {mu}"
            )));
        }
    }
    let eta = side_transmittance(params);
    Ok(arrival_yield(eta * mu_a, eta * mu_b, basis, params))
}

/// Same as [`pair_yield`] in terms of the mean photon numbers `a`, `b`
/// arriving at the relay (after all losses).
fn arrival_yield(a: f64, b: f64, basis: Basis, p: &ChannelParams) -> Yield {
    let pd = p.dark_count;
    let ln_q0 = (-pd).ln_1p();
    // no_click(I) = (1−p_d)e^{−I};  click(I) = 1 − no_click(I), computed stably.
    let no_click = |i: f64| (ln_q0 - i).exp();
    let click = |i: f64| -(ln_q0 - i).exp_m1();
    match basis {
        Basis::X => {
            let y = no_click(0.25 * (a + b));
            let one_minus_y = click(0.25 * (a + b));
            let x = 0.5 * (a * b).sqrt();
            let j1 = bessel_i0_minus_one(x);
            let j2 = bessel_i0_minus_one(2.0 * x);
            let y2 = y * y;
            // 2y²[1 + 2y² − 4y I₀(x) + I₀(2x)] rearranged to avoid cancellation.
            let gain = 2.0 * y2 * (2.0 * one_minus_y * one_minus_y + j2 - 4.0 * y * j1);
            let error_gain = p.e0 * gain - 2.0 * (p.e0 - p.misalignment) * y2 * j2;
            Yield::clamped(gain, error_gain)
        }
        Basis::Z => {
            let q0 = 1.0 - pd;
            let both = (-0.5 * (a + b)).exp();
            let correct = 2.0 * q0 * q0 * both * click(0.5 * a) * click(0.5 * b);
            let j2 = bessel_i0_minus_one((a * b).sqrt());
            let wrong = 2.0 * pd * q0 * q0 * both * (j2 + click(0.5 * (a + b)));
            let gain = correct + wrong;
            let error_gain = p.misalignment * correct + (1.0 - p.misalignment) * wrong;
            Yield::clamped(gain, error_gain)
        }
        Basis::ZX => mixed_yield(a, b, p),
        Basis::XZ => mixed_yield(b, a, p),
    }
}

/// One party in Z (arriving photon number `z_side`), the other in X.
fn mixed_yield(z_side: f64, x_side: f64, p: &ChannelParams) -> Yield {
    let pd = p.dark_count;
    let ln_q0 = (-pd).ln_1p();
    let q0 = 1.0 - pd;
    // The X-side pulse splits evenly between H and V; the V pair of
    // detectors sees only that half, the H pair interferes both parties.
    let v_quarter = 0.25 * x_side;
    let v_exactly_one = 2.0 * (-(ln_q0 - v_quarter).exp_m1()) * (ln_q0 - v_quarter).exp();
    let h_total = z_side + 0.5 * x_side;
    let c = 0.5 * h_total;
    let j = bessel_i0_minus_one((0.5 * z_side * x_side).sqrt());
    let h_exactly_one = 2.0 * q0 * (-c).exp() * (j - (ln_q0 - c).exp_m1());
    let gain = v_exactly_one * h_exactly_one;
    Yield::clamped(gain, p.e0 * gain)
}

/// Yield and error yield of pulse pairs carrying exactly one photon from
/// each party, in the X basis. These are the `[μ_a μ_b]` Taylor coefficients
/// of `e^{μ_a+μ_b}·Q(μ_a, μ_b)`.
pub fn single_photon_pair_yield(params: &ChannelParams) -> Yield {
    let eta = side_transmittance(params);
    let pd = params.dark_count;
    let q0 = 1.0 - pd;
    let y11 = q0
        * q0
        * (0.5 * eta * eta
            + (4.0 * eta - 3.0 * eta * eta) * pd
            + 4.0 * (1.0 - eta).powi(2) * pd * pd);
    let ey11 = params.e0 * y11 - (params.e0 - params.misalignment) * q0 * q0 * eta * eta * 0.5;
    Yield {
        gain: y11,
        error_gain: ey11,
    }
}

/// X-basis gain from photon-number components with at least one empty pulse,
/// `Σ_{j=0 ∨ k=0} P_a(j) P_b(k) Y_jk`. Such events carry a 50% error rate.
pub fn vacuum_component_gain(mu_a: f64, mu_b: f64, params: &ChannelParams) -> Result<f64> {
    let a_only = pair_yield(mu_a, 0.0, Basis::X, params)?.gain;
    let b_only = pair_yield(0.0, mu_b, Basis::X, params)?.gain;
    let dark = pair_yield(0.0, 0.0, Basis::X, params)?.gain;
    Ok((-mu_b).exp() * a_only + (-mu_a).exp() * b_only - (-(mu_a + mu_b)).exp() * dark)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table() -> ChannelParams {
        ChannelParams::default()
    }

    #[test]
    fn transmittance_examples() {
        let mut p = table();
        p.distance_km = 0.0;
        assert_eq!(side_transmittance(&p), p.detector_efficiency);
        p.distance_km = 100.0;
        assert_relative_eq!(side_transmittance(&p), 0.0145, max_relative = 1e-14);
        p.distance_km = 50.0;
        p.detector_efficiency = 0.4;
        assert_relative_eq!(
            side_transmittance(&p),
            0.4 * 10f64.powf(-0.5),
            max_relative = 1e-14
        );
    }

    #[test]
    fn bessel_matches_reference_values() {
        // Tabulated I₀ values.
        assert_relative_eq!(
            bessel_i0(1.0),
            1.266_065_877_752_008_4,
            max_relative = 1e-15
        );
        assert_relative_eq!(bessel_i0(5.0), 27.239_871_823_604_45, max_relative = 1e-14);
        assert_relative_eq!(
            bessel_i0_minus_one(1e-4),
            2.5e-9 + 1.5625e-18,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            bessel_i0(40.0),
            1.489_477_479_484_27e16,
            max_relative = 1e-6
        );
    }

    #[test]
    fn no_light_no_dark_counts() {
        let mut p = table();
        p.dark_count = 0.0;
        for basis in [Basis::X, Basis::Z, Basis::ZX, Basis::XZ] {
            let y = pair_yield(0.0, 0.0, basis, &p).unwrap();
            assert_eq!(y.gain, 0.0);
            assert_eq!(y.error_gain, 0.0);
        }
    }

    #[test]
    fn dark_counts_alone_are_uncorrelated() {
        let p = table();
        for basis in [Basis::X, Basis::Z] {
            let y = pair_yield(0.0, 0.0, basis, &p).unwrap();
            assert!(y.gain > 0.0);
            assert_relative_eq!(y.error_rate(), 0.5, max_relative = 1e-9);
        }
    }

    #[test]
    fn one_sided_light_is_uncorrelated() {
        let y = pair_yield(0.3, 0.0, Basis::X, &table()).unwrap();
        assert_relative_eq!(y.error_rate(), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn gain_decreases_with_distance() {
        for basis in [Basis::X, Basis::Z] {
            let mut prev = f64::INFINITY;
            for d in (0..=300).step_by(10) {
                let y = pair_yield(0.3, 0.3, basis, &table().at_distance(d as f64)).unwrap();
                assert!(y.gain <= prev);
                assert!(y.error_gain <= y.gain);
                prev = y.gain;
            }
        }
    }

    #[test]
    fn negative_intensity_rejected() {
        assert!(pair_yield(-1.0, 0.1, Basis::X, &table()).is_err());
    }

    #[test]
    fn single_photon_pair_perfect_devices() {
        let mut p = table();
        p.dark_count = 0.0;
        let y = single_photon_pair_yield(&p);
        let eta = side_transmittance(&p);
        assert_relative_eq!(y.gain, 0.5 * eta * eta, max_relative = 1e-14);
        assert_relative_eq!(y.error_rate(), p.misalignment, max_relative = 1e-12);
    }

    /// Mixed second difference of e^{μa+μb}Q at the origin.
    #[test]
    fn single_photon_pair_is_taylor_coefficient() {
        let p = table().at_distance(20.0);
        let h = 1e-3;
        let mixed = |g: &dyn Fn(f64, f64) -> f64| {
            (g(h, h) - g(h, -h) - g(-h, h) + g(-h, -h)) / (4.0 * h * h)
        };
        // pair_yield rejects negative intensities; evaluate the formula directly.
        let eta = side_transmittance(&p);
        let g_gain = |a: f64, b: f64| (a + b).exp() * arrival_yield_signed(eta * a, eta * b, &p).0;
        let g_err = |a: f64, b: f64| (a + b).exp() * arrival_yield_signed(eta * a, eta * b, &p).1;
        let y = single_photon_pair_yield(&p);
        assert_relative_eq!(mixed(&g_gain), y.gain, max_relative = 1e-4);
        assert_relative_eq!(mixed(&g_err), y.error_gain, max_relative = 1e-4);
    }

    // X-basis closed form without the sqrt restriction: I₀(√(ab)/2) is even in
    // √(ab), so it is a series in ab and extends to negative arguments.
    fn arrival_yield_signed(a: f64, b: f64, p: &ChannelParams) -> (f64, f64) {
        let q0 = 1.0 - p.dark_count;
        let y = q0 * (-0.25 * (a + b)).exp();
        let i0 = |t: f64| {
            let q = t / 4.0;
            let mut term = 1.0;
            let mut sum = 1.0;
            for k in 1..30 {
                term *= q / (k * k) as f64;
                sum += term;
            }
            sum
        };
        let i0x = i0(a * b / 4.0);
        let i02x = i0(a * b);
        let gain = 2.0 * y * y * (1.0 + 2.0 * y * y - 4.0 * y * i0x + i02x);
        let err = p.e0 * gain - 2.0 * (p.e0 - p.misalignment) * y * y * (i02x - 1.0);
        (gain, err)
    }

    #[test]
    fn vacuum_component_gain_below_total() {
        let p = table();
        let total = pair_yield(0.1, 0.1, Basis::X, &p).unwrap().gain;
        let vac = vacuum_component_gain(0.1, 0.1, &p).unwrap();
        assert!(vac > 0.0 && vac < total);
    }
}
