use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use mdiqkd_core::channel_sim::{validate_model, ModelCheck, VALIDATION_GRID};
use mdiqkd_core::keyrate::{secure_key_rate, AnalysisInputs, KeyRateReport};
use mdiqkd_core::optimizer::{
    best_of, optimize, optimize_chain, OptimizationProblem, OptimizationResult, Point,
};
use mdiqkd_core::source_model::SourceEnsemble;

use crate::{CliError, RunConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Key-rate report at the configured sources and `distance_km`.
pub fn rate_report(cfg: &RunConfig, distance_km: f64) -> Result<KeyRateReport, CliError> {
    report_for(cfg, &cfg.ensemble(), distance_km)
}

fn report_for(
    cfg: &RunConfig,
    ensemble: &SourceEnsemble,
    distance_km: f64,
) -> Result<KeyRateReport, CliError> {
    let params = cfg.channel().at_distance(distance_km);
    let mut inputs = AnalysisInputs::simulated(ensemble, &params)?.with_chernoff(cfg.chernoff());
    inputs.grid_points = cfg.h_grid_points;
    inputs.k_max = cfg.k_max;
    Ok(secure_key_rate(&inputs)?)
}

#[derive(Serialize)]
struct RateRecord<'a> {
    distance_km: f64,
    version: &'a str,
    config_sha256: String,
    #[serde(flatten)]
    report: &'a KeyRateReport,
}

/// JSON record of a report; the `H` trace is kept only when `with_trace`.
pub fn rate_json(
    cfg: &RunConfig,
    report: &KeyRateReport,
    with_trace: bool,
) -> Result<String, CliError> {
    let slim;
    let report = if with_trace {
        report
    } else {
        slim = KeyRateReport {
            trace: Vec::new(),
            ..report.clone()
        };
        &slim
    };
    let record = RateRecord {
        distance_km: cfg.distance_km,
        version: VERSION,
        config_sha256: config_hash(cfg),
        report,
    };
    serde_json::to_string_pretty(&record).map_err(|e| CliError::Io(e.to_string()))
}

/// SHA-256 of the effective configuration in canonical TOML form.
pub fn config_hash(cfg: &RunConfig) -> String {
    let canonical = toml::to_string(cfg).expect("configuration serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// One row of a distance sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub distance_km: f64,
    pub optimized: bool,
    pub rate: f64,
    pub h_star: f64,
    pub s11_lower: f64,
    pub e11_upper: f64,
    /// Sources used at this distance.
    #[serde(skip)]
    pub point: Point,
}

impl ScanRow {
    fn new(distance_km: f64, optimized: bool, point: Point, r: &KeyRateReport) -> Self {
        ScanRow {
            distance_km,
            optimized,
            rate: r.rate,
            h_star: r.h_star,
            s11_lower: r.s11_lower,
            e11_upper: r.e11_upper,
            point,
        }
    }
}

/// Evaluates every configured distance, in ascending order.
///
/// With fixed sources the distances run concurrently. With optimization the
/// distances are optimized as a warm-started chain, after which every
/// distance takes the best of all points found anywhere in the sweep.
pub fn scan(cfg: &RunConfig) -> Result<Vec<ScanRow>, CliError> {
    let distances = cfg.distance_list()?;
    if !cfg.optimize {
        let ensemble = cfg.ensemble();
        return distances
            .par_iter()
            .map(|&d| {
                Ok(ScanRow::new(
                    d,
                    false,
                    cfg.point(),
                    &report_for(cfg, &ensemble, d)?,
                ))
            })
            .collect();
    }
    let problems: Vec<OptimizationProblem> = distances.iter().map(|&d| cfg.problem_at(d)).collect();
    let results = optimize_chain(&problems, cfg.seed, &cfg.optimizer_options())?;
    let mut candidates: Vec<Point> = results.iter().map(|r| r.best).collect();
    candidates.push(cfg.point());
    distances
        .par_iter()
        .zip(problems.par_iter())
        .map(|(&d, problem)| {
            let (point, _) = best_of(problem, &candidates).expect("candidate list is non-empty");
            let report = report_for(cfg, &problem.ensemble(&point), d)?;
            Ok(ScanRow::new(d, true, point, &report))
        })
        .collect()
}

/// `#` provenance line followed by the header.
fn csv_preamble(cfg: &RunConfig, header: &str) -> String {
    format!(
        "# config_sha256={} seed={} version={VERSION}\n{header}\n",
        config_hash(cfg),
        cfg.seed
    )
}

pub const SCAN_HEADER: &str = "distance_km,optimized,rate,h_star,s11_lower,e11_upper";

pub fn scan_csv(cfg: &RunConfig, rows: &[ScanRow]) -> String {
    let mut out = csv_preamble(cfg, SCAN_HEADER);
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:e},{:e},{:e},{:e}",
            r.distance_km, r.optimized as u8, r.rate, r.h_star, r.s11_lower, r.e11_upper
        );
    }
    out
}

/// Optimizes the sources at `distance_km`, starting also from the configured point.
pub fn optimize_at(cfg: &RunConfig, distance_km: f64) -> Result<OptimizationResult, CliError> {
    let problem = cfg.problem_at(distance_km);
    Ok(optimize(
        &problem,
        cfg.seed,
        &cfg.optimizer_options(),
        &[cfg.point()],
    )?)
}

#[derive(Serialize)]
struct OptimumRecord {
    distance_km: f64,
    rate: f64,
    mu_x: f64,
    mu_y: f64,
    mu_z: f64,
    p_v: f64,
    p_x: f64,
    p_y: f64,
    p_z: f64,
    evaluations: usize,
    seed: u64,
}

pub fn optimum_json(
    cfg: &RunConfig,
    distance_km: f64,
    result: &OptimizationResult,
) -> Result<String, CliError> {
    let p = result.best;
    let record = OptimumRecord {
        distance_km,
        rate: result.rate,
        mu_x: p.mu_x,
        mu_y: p.mu_y,
        mu_z: p.mu_z,
        p_v: p.p_v(),
        p_x: p.p_x,
        p_y: p.p_y,
        p_z: p.p_z,
        evaluations: result.log.len(),
        seed: cfg.seed,
    };
    serde_json::to_string_pretty(&record).map_err(|e| CliError::Io(e.to_string()))
}

pub fn optimizer_log_csv(result: &OptimizationResult) -> Result<String, CliError> {
    let mut buf = Vec::new();
    result.write_log_csv(&mut buf)?;
    String::from_utf8(buf).map_err(|e| CliError::Io(e.to_string()))
}

/// Runs the analytic-vs-Monte-Carlo comparison on the default grid. A
/// `corrupt_dark_count` replaces `p_d` in the analytic model only.
pub fn model_checks(
    cfg: &RunConfig,
    corrupt_dark_count: Option<f64>,
) -> Result<Vec<ModelCheck>, CliError> {
    let simulated = cfg.channel();
    let mut analytic = simulated;
    if let Some(pd) = corrupt_dark_count {
        analytic.dark_count = pd;
    }
    Ok(validate_model(
        &analytic,
        &simulated,
        &VALIDATION_GRID,
        cfg.mc_trials,
        cfg.seed,
        cfg.mc_sigma,
    )?)
}

pub const VALIDATION_HEADER: &str =
    "mu,distance_km,basis,analytic_gain,mc_gain,gain_z,analytic_error_gain,mc_error_gain,error_gain_z,passed";

pub fn model_checks_csv(cfg: &RunConfig, checks: &[ModelCheck]) -> String {
    let mut out = csv_preamble(cfg, VALIDATION_HEADER);
    for c in checks {
        let _ = writeln!(
            out,
            "{},{},{},{:e},{:e},{:.3},{:e},{:e},{:.3},{}",
            c.mu,
            c.distance_km,
            c.basis.label(),
            c.analytic_gain,
            c.mc_gain,
            c.gain_z,
            c.analytic_error_gain,
            c.mc_error_gain,
            c.error_gain_z,
            c.passed
        );
    }
    out
}

/// Error describing the failed checks, if any.
pub fn mismatch(checks: &[ModelCheck], sigma: f64) -> Option<CliError> {
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} mu={} L={}", c.basis.label(), c.mu, c.distance_km))
        .collect();
    (!failed.is_empty()).then(|| {
        CliError::ModelMismatch(format!(
            "{} of {} checks beyond {sigma} sigma: {}",
            failed.len(),
            checks.len(),
            failed.join(", ")
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_configuration() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
        b.seed = 2;
        assert_ne!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn single_distance_scan_matches_rate() {
        let cfg = RunConfig::default();
        let rows = scan(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        let r = rate_report(&cfg, cfg.distance_km).unwrap();
        assert!(r.rate > 0.0);
        assert_eq!(rows[0].rate, r.rate);
        assert_eq!(rows[0].h_star, r.h_star);
    }

    #[test]
    fn scan_csv_layout() {
        let cfg = RunConfig {
            distances: Some("0:20:10".into()),
            ..RunConfig::default()
        };
        let csv = scan_csv(&cfg, &scan(&cfg).unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# config_sha256="));
        assert_eq!(lines[1], SCAN_HEADER);
        assert_eq!(lines.len(), 5);
        assert!(lines[2].starts_with("0,0,"));
        assert!(lines[4].starts_with("20,0,"));
    }

    #[test]
    fn rate_json_omits_trace_on_request() {
        let cfg = RunConfig::default();
        let r = rate_report(&cfg, 10.0).unwrap();
        let slim: serde_json::Value =
            serde_json::from_str(&rate_json(&cfg, &r, false).unwrap()).unwrap();
        let full: serde_json::Value =
            serde_json::from_str(&rate_json(&cfg, &r, true).unwrap()).unwrap();
        assert_eq!(slim["trace"].as_array().unwrap().len(), 0);
        assert_eq!(full["trace"].as_array().unwrap().len(), cfg.h_grid_points);
        assert_eq!(slim["rate"], full["rate"]);
    }
}
