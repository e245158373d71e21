use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel_sim::ChannelParams;
use crate::error::{Error, Result};
use crate::keyrate::{secure_key_rate, AnalysisInputs, KeyRateReport};
use crate::source_model::{SideSources, SourceEnsemble};

pub const MU_X_MIN: f64 = 1e-4;
pub const MU_Z_MIN: f64 = 1e-3;
pub const MU_MAX: f64 = 1.0;
pub const PROBABILITY_MIN: f64 = 1e-6;
/// Default floor on `p_z`. Below it the signal-pair error count of a
/// realistic run rounds to a handful of events and the observed error rate
/// stops being informative.
pub const DEFAULT_MIN_P_Z: f64 = 0.05;

/// Score of points where the analysis cannot run at all.
const INFEASIBLE_SCORE: f64 = -1.0;

/// Symmetric protocol parameters; `p_v = 1 − p_x − p_y − p_z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub mu_x: f64,
    pub mu_y: f64,
    pub mu_z: f64,
    pub p_x: f64,
    pub p_y: f64,
    pub p_z: f64,
}

impl Point {
    pub fn to_array(self) -> [f64; 6] {
        [
            self.mu_x, self.mu_y, self.mu_z, self.p_x, self.p_y, self.p_z,
        ]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Point {
            mu_x: v[0],
            mu_y: v[1],
            mu_z: v[2],
            p_x: v[3],
            p_y: v[4],
            p_z: v[5],
        }
    }

    pub fn p_v(&self) -> f64 {
        1.0 - self.p_x - self.p_y - self.p_z
    }

    /// Projection onto the box with `p_z ≥ min_p_z`. The coupled constraints
    /// `μ_x < μ_y` and `p_v > 0` are left to the scoring function.
    pub fn clamped(self, min_p_z: f64) -> Self {
        let v = self.to_array();
        let lo = [
            MU_X_MIN,
            MU_X_MIN,
            MU_Z_MIN,
            PROBABILITY_MIN,
            PROBABILITY_MIN,
            min_p_z.max(PROBABILITY_MIN),
        ];
        let hi = [
            MU_MAX,
            MU_MAX,
            MU_MAX,
            1.0 - PROBABILITY_MIN,
            1.0 - PROBABILITY_MIN,
            1.0 - PROBABILITY_MIN,
        ];
        Point::from_array(std::array::from_fn(|i| v[i].clamp(lo[i], hi[i])))
    }

    /// The parameter set used as a hand-picked reference.
    pub fn reference() -> Self {
        Point {
            mu_x: 0.1,
            mu_y: 0.4,
            mu_z: 0.5,
            p_x: 0.1,
            p_y: 0.1,
            p_z: 0.7,
        }
    }
}

/// Rate maximization at fixed channel and source-error parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationProblem {
    pub params: ChannelParams,
    pub vacuum_cap: f64,
    pub fluctuation: f64,
    pub min_p_z: f64,
}

impl OptimizationProblem {
    pub fn new(params: ChannelParams, vacuum_cap: f64, fluctuation: f64) -> Self {
        OptimizationProblem {
            params,
            vacuum_cap,
            fluctuation,
            min_p_z: DEFAULT_MIN_P_Z,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.min_p_z >= 0.0 && self.min_p_z < 1.0) {
            return Err(Error::config(
                "optimizer_min_p_z",
                format!("must lie in [0, 1), got {}", self.min_p_z),
            ));
        }
        Ok(())
    }

    pub fn ensemble(&self, point: &Point) -> SourceEnsemble {
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

    /// Full key-rate report, or `None` when the point is not a valid source
    /// configuration.
    pub fn report(&self, point: &Point) -> Option<KeyRateReport> {
        let inputs = AnalysisInputs::simulated(&self.ensemble(point), &self.params).ok()?;
        secure_key_rate(&inputs).ok()
    }

    /// Unclamped objective: `min_H R(H)` where available, a constant penalty
    /// below every attainable rate otherwise.
    pub fn score(&self, point: &Point) -> f64 {
        let p = point.clamped(self.min_p_z);
        let ordering = (p.mu_x - p.mu_y).max(0.0) + (-p.p_v()).max(0.0);
        if ordering > 0.0 || p.p_v() < PROBABILITY_MIN {
            return INFEASIBLE_SCORE - ordering;
        }
        match self.report(&p) {
            Some(r) => r.raw_min_rate.unwrap_or(INFEASIBLE_SCORE),
            None => INFEASIBLE_SCORE,
        }
    }
}

/// Secure key rate at `point`; zero for every infeasible point.
pub fn evaluate(problem: &OptimizationProblem, point: &Point) -> f64 {
    problem
        .report(&point.clamped(problem.min_p_z))
        .map_or(0.0, |r| r.rate)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    pub restarts: usize,
    /// Objective evaluations allowed per restart.
    pub budget: usize,
    /// Relative spread of simplex values below which a restart has converged.
    pub tolerance: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            restarts: 8,
            budget: 600,
            tolerance: 1e-9,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::config("optimizer_restarts", "must be >= 1"));
        }
        if self.budget == 0 {
            return Err(Error::config("optimizer_budget", "must be >= 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config("optimizer_tolerance", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub point: Point,
    /// Secure key rate at `point`, clamped at zero.
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best: Point,
    pub rate: f64,
    pub log: Vec<Probe>,
}

impl OptimizationResult {
    /// Writes the evaluation log as CSV.
    pub fn write_log_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["mu_x", "mu_y", "mu_z", "p_x", "p_y", "p_z", "rate"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for probe in &self.log {
            let mut row: Vec<String> = probe
                .point
                .to_array()
                .iter()
                .map(|v| v.to_string())
                .collect();
            row.push(probe.rate.to_string());
            w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

fn random_start(rng: &mut ChaCha8Rng) -> Point {
    loop {
        let mu_x: f64 = rng.random_range(0.005..0.3);
        let mu_y = rng.random_range((1.5 * mu_x)..(mu_x + 0.7).min(MU_MAX));
        let p = Point {
            mu_x,
            mu_y,
            mu_z: rng.random_range(0.1..MU_MAX),
            p_x: rng.random_range(0.02..0.4),
            p_y: rng.random_range(0.02..0.4),
            p_z: 0.0,
        };
        let p_v = rng.random_range(0.02..0.3);
        let p_z = 1.0 - p_v - p.p_x - p.p_y;
        if p_z >= 0.05 {
            return Point { p_z, ..p };
        }
    }
}

struct Search<'a> {
    problem: &'a OptimizationProblem,
    budget: usize,
    log: Vec<Probe>,
    best: (Point, f64),
}

impl Search<'_> {
    /// Negated score so that the simplex minimizes.
    fn cost(&mut self, v: [f64; 6]) -> f64 {
        let point = Point::from_array(v).clamped(self.problem.min_p_z);
        let s = self.problem.score(&point);
        self.log.push(Probe {
            point,
            rate: s.max(0.0),
        });
        if s > self.best.1 {
            self.best = (point, s);
        }
        -s
    }

    fn exhausted(&self) -> bool {
        self.log.len() >= self.budget
    }

    fn nelder_mead(&mut self, start: Point, step: f64, tolerance: f64) {
        const N: usize = 6;
        let x0 = start.clamped(self.problem.min_p_z).to_array();
        let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
        let f0 = self.cost(x0);
        simplex.push((x0, f0));
        for i in 0..N {
            let mut x = x0;
            let d = if x[i] != 0.0 { step * x[i] } else { step };
            x[i] = if x[i] + d <= upper_limit(i) {
                x[i] + d
            } else {
                x[i] - d
            };
            let f = self.cost(x);
            simplex.push((x, f));
        }
        while !self.exhausted() {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let (f_best, f_worst) = (simplex[0].1, simplex[N].1);
            if (f_worst - f_best).abs() <= tolerance * f_best.abs().max(1e-300) {
                break;
            }
            let mut centroid = [0.0; N];
            for (x, _) in &simplex[..N] {
                for j in 0..N {
                    centroid[j] += x[j] / N as f64;
                }
            }
            let along = |t: f64| -> [f64; N] {
                std::array::from_fn(|j| centroid[j] + t * (simplex[N].0[j] - centroid[j]))
            };
            let xr = along(-1.0);
            let fr = self.cost(xr);
            if fr < simplex[0].1 {
                let xe = along(-2.0);
                let fe = self.cost(xe);
                simplex[N] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[N - 1].1 {
                simplex[N] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[N].1 {
                    let xc = along(-0.5);
                    (xc, self.cost(xc))
                } else {
                    let xc = along(0.5);
                    (xc, self.cost(xc))
                };
                if fc < fr.min(simplex[N].1) {
                    simplex[N] = (xc, fc);
                } else {
                    let x_best = simplex[0].0;
                    for vertex in simplex.iter_mut().skip(1) {
                        let x: [f64; N] =
                            std::array::from_fn(|j| x_best[j] + 0.5 * (vertex.0[j] - x_best[j]));
                        *vertex = (x, self.cost(x));
                        if self.exhausted() {
                            return;
                        }
                    }
                }
            }
        }
    }
}

fn upper_limit(i: usize) -> f64 {
    if i < 3 {
        MU_MAX
    } else {
        1.0 - PROBABILITY_MIN
    }
}

fn run_restart<'a>(
    problem: &'a OptimizationProblem,
    start: Point,
    options: &OptimizerOptions,
) -> Search<'a> {
    let mut search = Search {
        problem,
        budget: options.budget,
        log: Vec::with_capacity(options.budget + 8),
        best: (start.clamped(problem.min_p_z), f64::NEG_INFINITY),
    };
    let mut step = 0.25;
    while !search.exhausted() {
        let from = search.best.0;
        search.nelder_mead(from, step, options.tolerance);
        step *= 0.5;
        if step < 1e-4 {
            break;
        }
    }
    search
}

/// Multi-start Nelder–Mead maximization of the secure key rate.
///
/// Restart 0 begins at the reference point, restarts `1..` at random points
/// drawn from stream `i` of `seed`; `extra_starts` add further restarts (e.g.
/// warm starts from a neighbouring distance). Deterministic in all arguments.
pub fn optimize(
    problem: &OptimizationProblem,
    seed: u64,
    options: &OptimizerOptions,
    extra_starts: &[Point],
) -> Result<OptimizationResult> {
    options.validate()?;
    problem.validate()?;
    let mut starts: Vec<Point> = (0..options.restarts)
        .map(|i| {
            if i == 0 {
                Point::reference()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                random_start(&mut rng)
            }
        })
        .collect();
    starts.extend_from_slice(extra_starts);
    let runs: Vec<(Point, f64, Vec<Probe>)> = starts
        .par_iter()
        .map(|&s| {
            let search = run_restart(problem, s, options);
            (search.best.0, search.best.1, search.log)
        })
        .collect();
    let mut best = (runs[0].0, runs[0].1);
    for r in &runs[1..] {
        if r.1 > best.1 {
            best = (r.0, r.1);
        }
    }
    let log = runs.into_iter().flat_map(|r| r.2).collect();
    Ok(OptimizationResult {
        best: best.0,
        rate: best.1.max(0.0),
        log,
    })
}

/// Optimizes a sequence of problems (typically ascending distances), each
/// warm-started from the best point of its predecessor.
pub fn optimize_chain(
    problems: &[OptimizationProblem],
    seed: u64,
    options: &OptimizerOptions,
) -> Result<Vec<OptimizationResult>> {
    let mut results: Vec<OptimizationResult> = Vec::with_capacity(problems.len());
    for (i, problem) in problems.iter().enumerate() {
        let warm: Vec<Point> = results.last().map(|r| vec![r.best]).unwrap_or_default();
        results.push(optimize(
            problem,
            seed.wrapping_add(i as u64),
            options,
            &warm,
        )?);
    }
    Ok(results)
}

/// Best of several candidate points for one problem.
pub fn best_of(problem: &OptimizationProblem, candidates: &[Point]) -> Option<(Point, f64)> {
    candidates
        .iter()
        .map(|p| (p.clamped(problem.min_p_z), problem.score(p)))
        .fold(None, |acc: Option<(Point, f64)>, c| match acc {
            Some(a) if a.1 >= c.1 => Some(a),
            _ => Some(c),
        })
        .map(|(p, s)| (p, s.max(0.0)))
}
