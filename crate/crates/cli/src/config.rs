use serde::{Deserialize, Serialize};

use mdiqkd_core::channel_sim::ChannelParams;
use mdiqkd_core::optimizer::{OptimizationProblem, OptimizerOptions, Point, DEFAULT_MIN_P_Z};
use mdiqkd_core::source_model::{
    check_decoy_conditions, coeff_bounds, SideSources, SourceEnsemble, DEFAULT_K_MAX,
};
use mdiqkd_core::stat_bounds::ChernoffConfig;

use crate::CliError;

/// Flat run configuration. Every key is optional and defaults to the value
/// listed here; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // Channel and detectors.
    pub e0: f64,
    pub misalignment: f64,
    pub dark_count: f64,
    pub detector_efficiency: f64,
    pub fiber_loss: f64,
    pub ec_inefficiency: f64,
    pub xi: f64,
    pub total_pairs: f64,
    pub distance_km: f64,

    // Sources, identical on both sides.
    pub mu_x: f64,
    pub mu_y: f64,
    pub mu_z: f64,
    pub p_v: f64,
    pub p_x: f64,
    pub p_y: f64,
    pub p_z: f64,
    pub vacuum_cap: f64,
    pub fluctuation: f64,

    // Analysis.
    pub chernoff_tolerance: f64,
    pub chernoff_max_iterations: usize,
    pub h_grid_points: usize,
    pub k_max: u32,

    // Commands.
    pub distances: Option<String>,
    pub optimize: bool,
    pub seed: u64,
    pub optimizer_restarts: usize,
    pub optimizer_budget: usize,
    pub optimizer_tolerance: f64,
    pub optimizer_min_p_z: f64,
    pub mc_trials: u64,
    pub mc_sigma: f64,
    /// Output path; not part of the provenance hash.
    #[serde(skip_serializing)]
    pub out: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ch = ChannelParams::default();
        let opt = OptimizerOptions::default();
        let p = Point::reference();
        RunConfig {
            e0: ch.e0,
            misalignment: ch.misalignment,
            dark_count: ch.dark_count,
            detector_efficiency: ch.detector_efficiency,
            fiber_loss: ch.fiber_loss,
            ec_inefficiency: ch.ec_inefficiency,
            xi: ch.xi,
            total_pairs: ch.total_pairs,
            distance_km: ch.distance_km,
            mu_x: p.mu_x,
            mu_y: p.mu_y,
            mu_z: p.mu_z,
            p_v: p.p_v(),
            p_x: p.p_x,
            p_y: p.p_y,
            p_z: p.p_z,
            vacuum_cap: 1e-6,
            fluctuation: 0.0,
            chernoff_tolerance: 1e-12,
            chernoff_max_iterations: 1000,
            h_grid_points: mdiqkd_core::keyrate::DEFAULT_GRID_POINTS,
            k_max: DEFAULT_K_MAX,
            distances: None,
            optimize: false,
            seed: 1,
            optimizer_restarts: opt.restarts,
            optimizer_budget: opt.budget,
            optimizer_tolerance: opt.tolerance,
            optimizer_min_p_z: DEFAULT_MIN_P_Z,
            mc_trials: 10_000_000,
            mc_sigma: 3.0,
            out: None,
        }
    }
}

/// 1-based line of the first assignment to `key`, if any.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            let t = l.trim_start();
            t.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

/// Config key behind a field name reported by the core crate (`"A.mu_y"` → `"mu_y"`).
fn config_key(field: &str) -> &str {
    let field = field.rsplit('.').next().unwrap_or(field);
    field.split_whitespace().next().unwrap_or(field)
}

impl RunConfig {
    /// Parses and validates configuration text.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text)
            .map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate().map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(cfg.locate(text, msg)),
            other => other,
        })?;
        Ok(cfg)
    }

    fn locate(&self, text: &str, msg: String) -> String {
        let key = msg.split(':').next().unwrap_or("");
        match line_of(text, config_key(key)) {
            Some(line) => format!("line {line}: {msg}"),
            None => msg,
        }
    }

    pub fn channel(&self) -> ChannelParams {
        ChannelParams {
            e0: self.e0,
            misalignment: self.misalignment,
            dark_count: self.dark_count,
            detector_efficiency: self.detector_efficiency,
            fiber_loss: self.fiber_loss,
            ec_inefficiency: self.ec_inefficiency,
            xi: self.xi,
            total_pairs: self.total_pairs,
            distance_km: self.distance_km,
        }
    }

    pub fn point(&self) -> Point {
        Point {
            mu_x: self.mu_x,
            mu_y: self.mu_y,
            mu_z: self.mu_z,
            p_x: self.p_x,
            p_y: self.p_y,
            p_z: self.p_z,
        }
    }

    pub fn ensemble_at(&self, point: &Point) -> SourceEnsemble {
        SourceEnsemble::symmetric(SideSources {
            mu_x: point.mu_x,
            mu_y: point.mu_y,
            mu_z: point.mu_z,
            vacuum_cap: self.vacuum_cap,
            fluctuation: self.fluctuation,
            p_v: point.p_v(),
            p_x: point.p_x,
            p_y: point.p_y,
            p_z: point.p_z,
        })
    }

    pub fn ensemble(&self) -> SourceEnsemble {
        let mut e = self.ensemble_at(&self.point());
        e.alice.p_v = self.p_v;
        e.bob.p_v = self.p_v;
        e
    }

    pub fn chernoff(&self) -> ChernoffConfig {
        ChernoffConfig {
            tolerance: self.chernoff_tolerance,
            max_iterations: self.chernoff_max_iterations,
            ..ChernoffConfig::new(self.xi)
        }
    }

    pub fn optimizer_options(&self) -> OptimizerOptions {
        OptimizerOptions {
            restarts: self.optimizer_restarts,
            budget: self.optimizer_budget,
            tolerance: self.optimizer_tolerance,
        }
    }

    pub fn problem_at(&self, distance_km: f64) -> OptimizationProblem {
        OptimizationProblem {
            min_p_z: self.optimizer_min_p_z,
            ..OptimizationProblem::new(
                self.channel().at_distance(distance_km),
                self.vacuum_cap,
                self.fluctuation,
            )
        }
    }

    /// Distances requested by the `distances` key, or `distance_km` alone.
    pub fn distance_list(&self) -> Result<Vec<f64>, CliError> {
        match &self.distances {
            Some(spec) => parse_distances(spec),
            None => Ok(vec![self.distance_km]),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.channel().validate()?;
        self.chernoff().validate()?;
        let ensemble = self.ensemble();
        let report = check_decoy_conditions(&coeff_bounds(&ensemble)?, self.k_max)?;
        if let Some(msg) = report.failure_message() {
            return Err(CliError::Config(format!(
                "mu_x: decoy condition violated: {msg}"
            )));
        }
        if self.h_grid_points < 2 {
            return Err(CliError::Config("h_grid_points: must be >= 2".into()));
        }
        self.optimizer_options().validate()?;
        self.problem_at(self.distance_km).validate()?;
        if self.mc_trials == 0 {
            return Err(CliError::Config("mc_trials: must be >= 1".into()));
        }
        if !(self.mc_sigma > 0.0) {
            return Err(CliError::Config("mc_sigma: must be > 0".into()));
        }
        self.distance_list()?;
        Ok(())
    }
}

/// Parses `A:B:STEP` (inclusive of `B`) or a comma-separated list; returns the
/// distances in ascending order without duplicates.
pub fn parse_distances(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = |m: String| CliError::Config(format!("distances: {m}"));
    let num = |s: &str| -> Result<f64, CliError> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| bad(format!("not a number: {s:?}")))
    };
    let mut out = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad(format!("expected A:B:STEP, got {spec:?}")));
        }
        let (a, b, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || !(b >= a) {
            return Err(bad(format!("need STEP > 0 and B >= A, got {spec:?}")));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        if n > 100_000 {
            return Err(bad("more than 100000 distances".into()));
        }
        (0..=n).map(|i| a + step * i as f64).collect::<Vec<f64>>()
    } else {
        spec.split(',').map(num).collect::<Result<Vec<f64>, _>>()?
    };
    if out.is_empty() {
        return Err(bad("empty list".into()));
    }
    if let Some(d) = out.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
        return Err(bad(format!("distance must be finite and >= 0, got {d}")));
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok(out)
}
