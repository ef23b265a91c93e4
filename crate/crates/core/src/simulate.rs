//! Generators for the synthetic experimental regimes: mixed inhomogeneous
//! Poisson panel data, observation schedules, and missingness corruption.
//!
//! Panel increments are drawn directly as Poisson(frailty * mean increment),
//! which is exact in law for panel observation of a Poisson process; no event
//! times are simulated. All generators derive one RNG stream per subject from
//! `(seed, subject index)`, so output is reproducible bit-for-bit.

use crate::panel::{IntervalObservation, PanelDataset, PanelError, StudyMeta, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("mean function table must be strictly increasing in t and nondecreasing in value")]
    BadTable,
    #[error("window must satisfy 0 <= tau0 < tau, got [{0}, {1}]")]
    BadWindow(f64, f64),
    #[error("schedule needs k >= 1, alpha >= 0 and k * alpha < window length")]
    InfeasibleSchedule,
    #[error("rejection sampling failed to produce an alpha-separated schedule")]
    ScheduleRejection,
    #[error("{name} must be a probability in [0, 1), got {value}")]
    BadProbability { name: &'static str, value: f64 },
    #[error("heterogeneous missingness: eps_mean times the multiplier upper bound must stay below 1")]
    HeterogeneousOutOfRange,
    #[error("n must be >= 1")]
    BadSampleSize,
    #[error(transparent)]
    Panel(#[from] PanelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FrailtyLaw {
    Uniform { lo: f64, hi: f64 },
}

impl FrailtyLaw {
    /// The uniform(0, 2) multiplier; mean one, so the marginal mean function
    /// is unchanged while the process stops being Poisson.
    pub fn uniform_0_2() -> Self {
        FrailtyLaw::Uniform { lo: 0.0, hi: 2.0 }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            FrailtyLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }

    fn upper_bound(&self) -> f64 {
        match *self {
            FrailtyLaw::Uniform { hi, .. } => hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanKind {
    Sqrt,
    Square,
    Linear,
    /// Piecewise-linear interpolation through `(t, value)` points (with
    /// (0, 0) prepended), constant after the last point.
    Table(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFunctionSpec {
    pub kind: MeanKind,
    pub window: (f64, f64),
    pub frailty: Option<FrailtyLaw>,
}

impl MeanFunctionSpec {
    pub fn new(
        kind: MeanKind,
        window: (f64, f64),
        frailty: Option<FrailtyLaw>,
    ) -> Result<Self, SimError> {
        if !(window.0.is_finite() && window.1.is_finite() && 0.0 <= window.0 && window.0 < window.1)
        {
            return Err(SimError::BadWindow(window.0, window.1));
        }
        if let MeanKind::Table(points) = &kind {
            let mut prev_t = 0.0;
            let mut prev_v = 0.0;
            if points.is_empty() {
                return Err(SimError::BadTable);
            }
            for &(t, v) in points {
                if !(t.is_finite() && v.is_finite() && t > prev_t && v >= prev_v && v >= 0.0) {
                    return Err(SimError::BadTable);
                }
                prev_t = t;
                prev_v = v;
            }
        }
        Ok(MeanFunctionSpec {
            kind,
            window,
            frailty,
        })
    }

    /// The population mean function Lambda*(u).
    pub fn eval(&self, u: f64) -> f64 {
        assert!(u >= 0.0, "mean function evaluated at negative time {u}");
        match &self.kind {
            MeanKind::Sqrt => u.sqrt(),
            MeanKind::Square => u * u,
            MeanKind::Linear => u,
            MeanKind::Table(points) => {
                let mut prev = (0.0, 0.0);
                for &(t, v) in points {
                    if u <= t {
                        let (t0, v0) = prev;
                        return v0 + (v - v0) * (u - t0) / (t - t0);
                    }
                    prev = (t, v);
                }
                prev.1
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    /// Observations per subject.
    pub k: usize,
    pub window: (f64, f64),
    /// Minimum spacing between consecutive observations (0 disables the
    /// rejection step).
    pub alpha: f64,
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let len = self.window.1 - self.window.0;
        if !(self.window.0.is_finite() && self.window.1.is_finite() && self.window.0 >= 0.0)
            || len <= 0.0
        {
            return Err(SimError::BadWindow(self.window.0, self.window.1));
        }
        if self.k == 0 || !(self.alpha >= 0.0) || self.k as f64 * self.alpha >= len {
            return Err(SimError::InfeasibleSchedule);
        }
        Ok(())
    }
}

const SCHEDULE_MAX_ATTEMPTS: usize = 100_000;

/// K sorted uniform times on the window, resampled until consecutive gaps are
/// at least alpha.
pub fn sample_schedule(spec: &ScheduleSpec, rng: &mut impl Rng) -> Result<Vec<f64>, SimError> {
    spec.validate()?;
    let (lo, hi) = spec.window;
    for _ in 0..SCHEDULE_MAX_ATTEMPTS {
        let mut times: Vec<f64> = (0..spec.k)
            .map(|_| lo + (hi - lo) * rng.random::<f64>())
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        let ok = times
            .windows(2)
            .all(|p| p[1] - p[0] >= spec.alpha && p[1] > p[0]);
        if ok {
            return Ok(times);
        }
    }
    Err(SimError::ScheduleRejection)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingnessSpec {
    Mcar {
        eps: f64,
    },
    /// Per-subject MCAR probability `eps_mean * X` with `X` from the
    /// multiplier law.
    Heterogeneous {
        eps_mean: f64,
        multiplier: FrailtyLaw,
    },
    /// Probability depends on the previous interval's (pre-corruption)
    /// count: `eps_zero` when it was zero (or for the first interval),
    /// `eps_pos` otherwise.
    Mar {
        eps_zero: f64,
        eps_pos: f64,
    },
}

impl MissingnessSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let prob = |name: &'static str, value: f64| {
            if value.is_finite() && (0.0..1.0).contains(&value) {
                Ok(())
            } else {
                Err(SimError::BadProbability { name, value })
            }
        };
        match *self {
            MissingnessSpec::Mcar { eps } => prob("eps", eps),
            MissingnessSpec::Heterogeneous {
                eps_mean,
                multiplier,
            } => {
                prob("eps_mean", eps_mean)?;
                if eps_mean * multiplier.upper_bound() >= 1.0 {
                    return Err(SimError::HeterogeneousOutOfRange);
                }
                Ok(())
            }
            MissingnessSpec::Mar { eps_zero, eps_pos } => {
                prob("eps_zero", eps_zero)?;
                prob("eps_pos", eps_pos)
            }
        }
    }
}

fn sample_poisson(rng: &mut impl Rng, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    let dist = Poisson::new(lambda).expect("lambda > 0");
    dist.sample(rng)
}

/// Draw a complete panel dataset: per subject, an optional frailty multiplier,
/// a schedule, and conditionally-Poisson count increments.
pub fn sample_panel(
    mean: &MeanFunctionSpec,
    sched: &ScheduleSpec,
    n: usize,
    seed: u64,
) -> Result<PanelDataset, SimError> {
    if n == 0 {
        return Err(SimError::BadSampleSize);
    }
    sched.validate()?;
    let width = (n.max(2) - 1).to_string().len();
    let mut trajectories = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let frailty = mean.frailty.map(|law| law.sample(&mut rng)).unwrap_or(1.0);
        let times = sample_schedule(sched, &mut rng)?;
        let mut prev = 0.0;
        let intervals = times
            .into_iter()
            .map(|t| {
                let lambda = frailty * (mean.eval(t) - mean.eval(prev));
                let iv = IntervalObservation {
                    t_prev: prev,
                    t,
                    count: Some(sample_poisson(&mut rng, lambda)),
                };
                prev = t;
                iv
            })
            .collect();
        trajectories.push(Trajectory::new(format!("s{i:0width$}"), intervals)?);
    }
    let meta = StudyMeta {
        tau0: sched.window.0,
        tau: sched.window.1,
        k0: sched.k,
        alpha: sched.alpha,
    };
    Ok(PanelDataset::new(trajectories, meta)?)
}

/// Replace counts by MISSING according to the missingness spec. Times and
/// surviving counts are untouched; already-missing counts stay missing.
pub fn corrupt(
    dataset: &PanelDataset,
    spec: &MissingnessSpec,
    seed: u64,
) -> Result<PanelDataset, SimError> {
    spec.validate()?;
    let mut trajectories = Vec::with_capacity(dataset.n_subjects());
    for (i, traj) in dataset.trajectories().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let subject_eps = match *spec {
            MissingnessSpec::Heterogeneous {
                eps_mean,
                multiplier,
            } => Some(eps_mean * multiplier.sample(&mut rng)),
            _ => None,
        };
        let originals: Vec<Option<f64>> = traj.intervals().iter().map(|iv| iv.count).collect();
        let intervals = traj
            .intervals()
            .iter()
            .enumerate()
            .map(|(j, iv)| {
                let eps = match *spec {
                    MissingnessSpec::Mcar { eps } => eps,
                    MissingnessSpec::Heterogeneous { .. } => {
                        subject_eps.expect("set above for heterogeneous")
                    }
                    MissingnessSpec::Mar { eps_zero, eps_pos } => {
                        let prev = if j == 0 { None } else { originals[j - 1] };
                        match prev {
                            Some(c) if c > 0.0 => eps_pos,
                            // First interval, previous count zero, or previous
                            // count itself missing in the input.
                            _ => eps_zero,
                        }
                    }
                };
                let erased = rng.random::<f64>() < eps;
                IntervalObservation {
                    t_prev: iv.t_prev,
                    t: iv.t,
                    count: if erased { None } else { iv.count },
                }
            })
            .collect();
        trajectories.push(Trajectory::new(traj.subject_id().to_string(), intervals)?);
    }
    Ok(PanelDataset::new(trajectories, dataset.meta())?)
}

/// The biased comparator: missing counts replaced by zero and marked present.
pub fn zero_fill_baseline(dataset: &PanelDataset) -> PanelDataset {
    let trajectories = dataset
        .trajectories()
        .iter()
        .map(|traj| {
            let intervals = traj
                .intervals()
                .iter()
                .map(|iv| IntervalObservation {
                    t_prev: iv.t_prev,
                    t: iv.t,
                    count: Some(iv.count.unwrap_or(0.0)),
                })
                .collect();
            Trajectory::new(traj.subject_id().to_string(), intervals)
                .expect("structure is unchanged")
        })
        .collect();
    PanelDataset::new(trajectories, dataset.meta()).expect("structure is unchanged")
}
