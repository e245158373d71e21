#![allow(dead_code)]

pub mod hp;
pub mod oracle;

use mdiqkd_core::channel_sim::ChannelParams;
use mdiqkd_core::keyrate::RateFunction;
use mdiqkd_core::source_model::{SideSources, SourceEnsemble};

/// Hand-picked reference sources shared by all regression tests.
pub fn reference_sources(vacuum_cap: f64, fluctuation: f64) -> SourceEnsemble {
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

pub fn reference_channel(distance_km: f64, total_pairs: f64) -> ChannelParams {
    ChannelParams {
        total_pairs,
        ..ChannelParams::default().at_distance(distance_km)
    }
}

/// Minimum of `R(H)` on `points` equally spaced values of `H`.
pub fn brute_force_min(rf: &RateFunction, points: usize) -> f64 {
    let (lo, hi) = (rf.envelope.h_lower, rf.envelope.h_upper);
    (0..points)
        .map(|i| rf.at(lo + (hi - lo) * i as f64 / (points - 1) as f64).rate)
        .fold(f64::INFINITY, f64::min)
}
