use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{side_transmittance, Basis, ChannelParams};
use crate::error::{Error, Result};

/// Trials per independently seeded chunk. Chunk `i` always draws from
/// stream `i` of the seed, so results do not depend on the worker count.
pub const MC_CHUNK_TRIALS: u64 = 1 << 16;

/// Empirical gain and error gain with binomial standard errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub trials: u64,
    pub successes: u64,
    pub errors: u64,
    pub gain: f64,
    pub error_gain: f64,
    pub gain_std_err: f64,
    pub error_gain_std_err: f64,
}

impl McEstimate {
    fn from_counts(trials: u64, successes: u64, errors: u64) -> Self {
        let n = trials as f64;
        let gain = successes as f64 / n;
        let error_gain = errors as f64 / n;
        McEstimate {
            trials,
            successes,
            errors,
            gain,
            error_gain,
            gain_std_err: (gain * (1.0 - gain) / n).sqrt(),
            error_gain_std_err: (error_gain * (1.0 - error_gain) / n).sqrt(),
        }
    }
}

// Detector order: c_H, c_V, d_H, d_V.
const C_H: usize = 0;
const C_V: usize = 1;
const D_H: usize = 2;
const D_V: usize = 3;

/// Mean photon number reaching each detector. `a`, `b` are the arriving
/// intensities, `cos` the cosine of the relative phase, `bit_a`/`bit_b` the
/// encoded bits (Z: H/V, X: +45°/−45°).
fn detector_intensities(
    basis: Basis,
    a: f64,
    b: f64,
    cos: f64,
    bit_a: bool,
    bit_b: bool,
) -> [f64; 4] {
    let sign = |bit: bool| if bit { -1.0 } else { 1.0 };
    match basis {
        Basis::X => {
            // Both pulses split evenly over H and V; interference in each
            // polarisation with relative sign s_a s_b on the V component.
            let cross = 2.0 * (a * b).sqrt() * cos;
            let h_c = 0.25 * (a + b + cross);
            let h_d = 0.25 * (a + b - cross);
            let v_cross = cross * sign(bit_a) * sign(bit_b);
            let v_c = 0.25 * (a + b + v_cross);
            let v_d = 0.25 * (a + b - v_cross);
            [h_c, v_c, h_d, v_d]
        }
        Basis::Z => {
            if bit_a == bit_b {
                let cross = 2.0 * (a * b).sqrt() * cos;
                let c = 0.5 * (a + b + cross);
                let d = 0.5 * (a + b - cross);
                if bit_a {
                    [0.0, c, 0.0, d]
                } else {
                    [c, 0.0, d, 0.0]
                }
            } else {
                let (h, v) = if bit_a { (b, a) } else { (a, b) };
                [0.5 * h, 0.5 * v, 0.5 * h, 0.5 * v]
            }
        }
        Basis::ZX | Basis::XZ => {
            let (z, x, z_bit, x_bit) = if basis == Basis::ZX {
                (a, b, bit_a, bit_b)
            } else {
                (b, a, bit_b, bit_a)
            };
            // The Z pulse sits entirely in one polarisation and interferes with
            // the matching half of the X pulse; the other half is alone.
            let x_sign = if z_bit { sign(x_bit) } else { 1.0 };
            let cross = 2.0 * (0.5 * z * x).sqrt() * cos * x_sign;
            let c = 0.5 * (z + 0.5 * x + cross);
            let d = 0.5 * (z + 0.5 * x - cross);
            let lone = 0.25 * x;
            if z_bit {
                [lone, c, lone, d]
            } else {
                [c, lone, d, lone]
            }
        }
    }
}

fn run_chunk(
    basis: Basis,
    a: f64,
    b: f64,
    params: &ChannelParams,
    trials: u64,
    seed: u64,
    stream: u64,
) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut successes = 0;
    let mut errors = 0;
    for _ in 0..trials {
        let cos = (TAU * rng.random::<f64>()).cos();
        let bit_a: bool = rng.random();
        let bit_b: bool = rng.random();
        let intensities = detector_intensities(basis, a, b, cos, bit_a, bit_b);
        let mut clicks = [false; 4];
        for (click, &mean) in clicks.iter_mut().zip(&intensities) {
            // A threshold detector fires on ≥ 1 Poisson photon or a dark count.
            let photon = rng.random::<f64>() < -(-mean).exp_m1();
            let dark = rng.random::<f64>() < params.dark_count;
            *click = photon || dark;
        }
        let psi_plus = match clicks {
            [true, true, false, false] | [false, false, true, true] => true,
            [true, false, false, true] | [false, true, true, false] => false,
            _ => continue,
        };
        debug_assert!(clicks[C_H] || clicks[D_H]);
        debug_assert!(clicks[C_V] || clicks[D_V]);
        successes += 1;
        let mut correct = match basis {
            // Ψ± both announce anti-correlated rectilinear bits.
            Basis::Z => bit_a != bit_b,
            // Ψ⁺ announces equal diagonal bits, Ψ⁻ opposite ones.
            _ => psi_plus == (bit_a == bit_b),
        };
        if rng.random::<f64>() < params.misalignment {
            correct = !correct;
        }
        if !correct {
            errors += 1;
        }
    }
    (successes, errors)
}

/// Pulse-by-pulse simulation of the relay measurement.
///
/// Each trial draws a uniform relative phase and the two encoded bits, routes
/// the coherent amplitudes through the beam splitters, and samples every
/// detector independently. Deterministic for a given `(trials, seed)`.
pub fn monte_carlo_yield(
    mu_a: f64,
    mu_b: f64,
    basis: Basis,
    params: &ChannelParams,
    trials: u64,
    seed: u64,
) -> Result<McEstimate> {
    if trials == 0 {
        return Err(Error::domain("Monte-Carlo trial count must be >= 1"));
    }
    for mu in [mu_a, mu_b] {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::domain(format!(
                "intensity must be finite and >= 0, got {mu}"
            )));
        }
    }
    let eta = side_transmittance(params);
    let (a, b) = (eta * mu_a, eta * mu_b);
    let chunks = trials.div_ceil(MC_CHUNK_TRIALS);
    let (successes, errors) = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let n = MC_CHUNK_TRIALS.min(trials - i * MC_CHUNK_TRIALS);
            run_chunk(basis, a, b, params, n, seed, i)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    Ok(McEstimate::from_counts(trials, successes, errors))
}
