//! Empirical validation of certificates: trajectory sampling, containment
//! checks, Monte Carlo volumes and order sweeps.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moments::DomainGeometry;
use crate::relax::{solve_dual, Certificate, RelaxError};
use crate::scalar::Real;
use crate::sdp::{ConicSolver, SolverOptions};
use crate::semialg::{DynamicalSystem, ReachProblem, SemialgebraicSet};

pub const DEFAULT_SEED: u64 = 0xC0FFEE;
pub const DEFAULT_STEPS: u32 = 7;
pub const DEFAULT_SAMPLES: usize = 1000;
pub const DEFAULT_VOLUME_SAMPLES: usize = 100_000;
pub const MIN_VOLUME_SAMPLES: usize = 10_000;
/// Containment fails when some margin falls below this.
pub const MARGIN_TOL: f64 = -1e-6;
/// `|u|` below this validates the volume assumption a posteriori.
pub const U_THRESHOLD: f64 = 1e-5;
pub const MAX_REJECTIONS_PER_POINT: usize = 1_000_000;
/// Absolute slack when checking that `d_r` does not increase with `r`.
pub const MONOTONE_SLACK: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertifyError {
    #[error("sampling gave up after {rejections} rejections with {accepted} of {requested} points; the set looks empty")]
    SamplingTimeout {
        requested: usize,
        accepted: usize,
        rejections: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("batch runs {steps} steps but the bound only covers T = {bound}")]
    HorizonTooShort { steps: u32, bound: u32 },
    #[error("volume estimation needs at least {MIN_VOLUME_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("orders must be strictly ascending")]
    OrdersNotAscending,
    #[error(transparent)]
    Relax(#[from] RelaxError),
}

/// Independent RNG stream for one `(seed, order, purpose)` task.
pub fn task_rng(seed: u64, order: u32, purpose: u8) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((order as u64) << 8) | purpose as u64);
    rng
}

const STREAM_INIT: u8 = 1;
const STREAM_VOLUME: u8 = 2;

/// Uniform samples from `set`, drawn by rejection from the box `[lo, hi]`.
pub fn sample_set_with<T: Real, R: Rng>(
    set: &SemialgebraicSet<T>,
    lo: &[T],
    hi: &[T],
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec<T>>, CertifyError> {
    let dim = set.n_vars();
    if lo.len() != dim || hi.len() != dim {
        return Err(CertifyError::Dimension {
            expected: dim,
            got: lo.len().min(hi.len()),
        });
    }
    let lo: Vec<f64> = lo.iter().map(|v| v.to_f64_lossy()).collect();
    let hi: Vec<f64> = hi.iter().map(|v| v.to_f64_lossy()).collect();
    let budget = MAX_REJECTIONS_PER_POINT.saturating_mul(n.max(1));
    let mut out = Vec::with_capacity(n);
    let mut rejections = 0usize;
    while out.len() < n {
        let x: Vec<T> = (0..dim).map(|i| T::lit(draw(rng, lo[i], hi[i]))).collect();
        if set.contains(&x) {
            out.push(x);
        } else {
            rejections += 1;
            if rejections >= budget {
                return Err(CertifyError::SamplingTimeout {
                    requested: n,
                    accepted: out.len(),
                    rejections,
                });
            }
        }
    }
    Ok(out)
}

fn draw<R: Rng>(rng: &mut R, a: f64, b: f64) -> f64 {
    if a < b {
        rng.random_range(a..=b)
    } else {
        a
    }
}

/// `n` uniform samples from `set`, using the bounding box of `hint`.
/// Deterministic per seed.
pub fn sample_set<T: Real>(
    set: &SemialgebraicSet<T>,
    hint: &DomainGeometry<T>,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<T>>, CertifyError> {
    let (lo, hi) = hint.bounding_box();
    sample_set_with(set, &lo, &hi, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Forward orbits `x, f(x), …, f^{steps}(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch<T> {
    /// `points[t][i]` is `f^t` of initial point `i`.
    pub points: Vec<Vec<Vec<T>>>,
    pub seed: u64,
    pub steps: u32,
    /// First step at which each trajectory left the state geometry.
    pub exits: Vec<Option<u32>>,
    /// First step at which each trajectory became non-finite.
    pub overflows: Vec<Option<u32>>,
}

impl<T: Real> TrajectoryBatch<T> {
    pub fn initial(&self) -> &[Vec<T>] {
        &self.points[0]
    }

    pub fn len(&self) -> usize {
        self.points[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn excursions(&self) -> usize {
        self.exits.iter().filter(|e| e.is_some()).count()
    }

    pub fn divergent(&self) -> usize {
        self.overflows.iter().filter(|e| e.is_some()).count()
    }
}

/// Iterates `system` exactly. Excursions out of `state` and overflow are
/// recorded, never clipped.
pub fn simulate<T: Real>(
    system: &DynamicalSystem<T>,
    state: &DomainGeometry<T>,
    initial: Vec<Vec<T>>,
    steps: u32,
    seed: u64,
) -> Result<TrajectoryBatch<T>, CertifyError> {
    let n = system.n_vars();
    if let Some(p) = initial.iter().find(|p| p.len() != n) {
        return Err(CertifyError::Dimension {
            expected: n,
            got: p.len(),
        });
    }
    let mut exits: Vec<Option<u32>> = initial
        .iter()
        .map(|x| (!state.contains(x)).then_some(0))
        .collect();
    let mut overflows: Vec<Option<u32>> = initial
        .iter()
        .map(|x| (!x.iter().all(|v| v.is_finite())).then_some(0))
        .collect();
    let mut points = Vec::with_capacity(steps as usize + 1);
    points.push(initial);
    for t in 1..=steps {
        let next: Vec<Vec<T>> = points[t as usize - 1]
            .iter()
            .map(|x| system.apply(x))
            .collect();
        for (i, x) in next.iter().enumerate() {
            if overflows[i].is_none() && !x.iter().all(|v| v.is_finite()) {
                overflows[i] = Some(t);
            }
            if exits[i].is_none() && !state.contains(x) {
                exits[i] = Some(t);
            }
        }
        points.push(next);
    }
    Ok(TrajectoryBatch {
        points,
        seed,
        steps,
        exits,
        overflows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Containment {
    /// Points checked (trajectory prefixes that stayed in the state set).
    pub points: usize,
    pub violations: usize,
    /// `None` when no point was checked.
    pub worst_margin: Option<f64>,
    pub passed: bool,
}

/// Evaluates `v(x) + u T` on every point of every trajectory prefix that
/// stays inside the state set.
pub fn check_containment<T: Real>(
    cert: &Certificate<T>,
    batch: &TrajectoryBatch<T>,
    t_bound: u32,
) -> Result<Containment, CertifyError> {
    if cert.u != T::zero() && batch.steps > t_bound {
        return Err(CertifyError::HorizonTooShort {
            steps: batch.steps,
            bound: t_bound,
        });
    }
    let mut points = 0;
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for (t, layer) in batch.points.iter().enumerate() {
        for (i, x) in layer.iter().enumerate() {
            let left = batch.exits[i].is_some_and(|e| e as usize <= t);
            let blown = batch.overflows[i].is_some_and(|e| e as usize <= t);
            if left || blown {
                continue;
            }
            let m = cert.margin(x, t_bound).to_f64_lossy();
            points += 1;
            worst = worst.min(m);
            if !(m >= MARGIN_TOL) {
                violations += 1;
            }
        }
    }
    Ok(Containment {
        points,
        violations,
        worst_margin: (points > 0).then_some(worst),
        passed: violations == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub estimate: f64,
    /// Half-width of the 95% confidence interval.
    pub ci: f64,
    pub samples: usize,
}

/// Volume of `{x ∈ X : v(x) + u T ≥ MARGIN_TOL}` from `n` uniform samples of
/// the state geometry, with `T` the certificate's horizon (0 when `u` is fixed).
pub fn mc_volume<T: Real>(
    cert: &Certificate<T>,
    geometry: &DomainGeometry<T>,
    n: usize,
    seed: u64,
) -> Result<VolumeEstimate, CertifyError> {
    mc_volume_with(cert, geometry, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn mc_volume_with<T: Real, R: Rng>(
    cert: &Certificate<T>,
    geometry: &DomainGeometry<T>,
    n: usize,
    rng: &mut R,
) -> Result<VolumeEstimate, CertifyError> {
    if n < MIN_VOLUME_SAMPLES {
        return Err(CertifyError::TooFewSamples(n));
    }
    if cert.n_vars() != geometry.n_vars() {
        return Err(CertifyError::Dimension {
            expected: geometry.n_vars(),
            got: cert.n_vars(),
        });
    }
    let (lo, hi) = geometry.bounding_box();
    let lo: Vec<f64> = lo.iter().map(|v| v.to_f64_lossy()).collect();
    let hi: Vec<f64> = hi.iter().map(|v| v.to_f64_lossy()).collect();
    let t = cert.horizon.multiplier();
    let mut accepted = 0usize;
    let mut inside = 0usize;
    while accepted < n {
        let x: Vec<T> = lo
            .iter()
            .zip(&hi)
            .map(|(&a, &b)| T::lit(draw(rng, a, b)))
            .collect();
        if !geometry.contains(&x) {
            continue;
        }
        accepted += 1;
        if cert.margin(&x, t) >= T::lit(MARGIN_TOL) {
            inside += 1;
        }
    }
    let vol = geometry.volume().to_f64_lossy();
    let p = inside as f64 / n as f64;
    Ok(VolumeEstimate {
        estimate: vol * p,
        ci: 1.96 * vol * (p * (1.0 - p) / n as f64).sqrt(),
        samples: n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyConfig {
    pub seed: u64,
    pub steps: u32,
    pub samples: usize,
    /// `None` skips the volume estimate.
    pub volume_samples: Option<usize>,
    /// Record wall-clock time in reports (breaks bitwise reproducibility).
    pub record_runtime: bool,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            seed: DEFAULT_SEED,
            steps: DEFAULT_STEPS,
            samples: DEFAULT_SAMPLES,
            volume_samples: Some(DEFAULT_VOLUME_SAMPLES),
            record_runtime: false,
        }
    }
}

/// Outcome of validating one certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub problem: String,
    /// Relaxation degree `2r`.
    pub order: u32,
    pub horizon: Option<u32>,
    pub u: f64,
    pub objective: f64,
    pub status: Option<String>,
    pub seed: u64,
    pub steps: u32,
    pub containment: Containment,
    pub excursions: usize,
    pub divergent: usize,
    pub volume: Option<VolumeEstimate>,
    pub u_validated: bool,
    pub reconstruction_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
}

impl CertReport {
    pub fn passed(&self) -> bool {
        self.containment.passed
    }
}

fn init_box<T: Real>(problem: &ReachProblem<T>) -> (Vec<T>, Vec<T>) {
    problem
        .init_geometry
        .as_ref()
        .unwrap_or(&problem.geometry)
        .bounding_box()
}

/// Samples `X⁰`, simulates, checks containment and estimates the volume,
/// with RNG streams derived from `(seed, order)`.
pub fn certify<T: Real>(
    problem: &ReachProblem<T>,
    cert: &Certificate<T>,
    config: &CertifyConfig,
) -> Result<CertReport, CertifyError> {
    let started = Instant::now();
    let (lo, hi) = init_box(problem);
    let mut rng = task_rng(config.seed, cert.order, STREAM_INIT);
    let initial = sample_set_with(&problem.init, &lo, &hi, config.samples, &mut rng)?;
    let batch = simulate(
        &problem.system,
        &problem.geometry,
        initial,
        config.steps,
        config.seed,
    )?;
    let t_bound = cert.horizon.multiplier();
    let containment = check_containment(cert, &batch, t_bound.max(config.steps))?;
    let volume = match config.volume_samples {
        Some(n) => Some(mc_volume_with(
            cert,
            &problem.geometry,
            n,
            &mut task_rng(config.seed, cert.order, STREAM_VOLUME),
        )?),
        None => None,
    };
    let u = cert.u.to_f64_lossy();
    Ok(CertReport {
        problem: problem.name.clone(),
        order: 2 * cert.order,
        horizon: (!cert.horizon.is_u_zero()).then_some(t_bound),
        u,
        objective: cert.objective.to_f64_lossy(),
        status: cert.stats.map(|s| s.status.as_str().to_string()),
        seed: config.seed,
        steps: config.steps,
        containment,
        excursions: batch.excursions(),
        divergent: batch.divergent(),
        volume,
        u_validated: u.abs() < U_THRESHOLD,
        reconstruction_residual: (!cert.memberships.is_empty())
            .then(|| cert.reconstruction_residual().to_f64_lossy()),
        runtime_seconds: config
            .record_runtime
            .then(|| started.elapsed().as_secs_f64()),
    })
}

/// One order of a sweep: the certificate and its report, or the error.
#[derive(Debug, Clone)]
pub struct SweepRow<T: Real> {
    pub r: u32,
    pub outcome: Result<(Certificate<T>, CertReport), String>,
}

#[derive(Debug, Clone)]
pub struct Sweep<T: Real> {
    pub rows: Vec<SweepRow<T>>,
    /// `d_r` does not increase with `r` over the successful rows.
    pub monotone: bool,
}

impl<T: Real> Sweep<T> {
    pub fn reports(&self) -> Vec<&CertReport> {
        self.rows
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|o| &o.1))
            .collect()
    }
}

/// Solves and certifies each half-degree `r` in `orders` (ascending),
/// concurrently. A failing order is recorded and the sweep continues.
pub fn run_order_sweep<T: Real, S: ConicSolver<T> + Sync>(
    problem: &ReachProblem<T>,
    orders: &[u32],
    solver: &S,
    opts: &SolverOptions,
    config: &CertifyConfig,
) -> Result<Sweep<T>, CertifyError> {
    if orders.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CertifyError::OrdersNotAscending);
    }
    let rows: Vec<SweepRow<T>> = orders
        .par_iter()
        .map(|&r| {
            let outcome = solve_dual(problem, r, solver, opts)
                .map_err(CertifyError::from)
                .and_then(|cert| certify(problem, &cert, config).map(|rep| (cert, rep)))
                .map_err(|e| e.to_string());
            SweepRow { r, outcome }
        })
        .collect();
    let objectives: Vec<f64> = rows
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok().map(|o| o.1.objective))
        .collect();
    let monotone = objectives.windows(2).all(|w| w[1] <= w[0] + MONOTONE_SLACK);
    Ok(Sweep { rows, monotone })
}
