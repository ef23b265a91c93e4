//! Nonparametric bootstrap over subjects: pointwise mean curves and
//! percentile confidence bands.
//!
//! Replicates resample subjects with replacement, refit with EM, and are
//! evaluated on a fixed grid. Bands are pointwise nearest-rank percentile
//! envelopes. Replicate b depends only on `(seed, b)`, so runs are
//! reproducible and replicates can be fitted in parallel.

use crate::em::{em_fit, EmConfig, EmError};
use crate::panel::{IntervalObservation, PanelDataset, Trajectory};
use crate::util::derive_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error("need at least one replicate")]
    BadReplicateCount,
    #[error("level must be in (0, 1), got {0}")]
    BadLevel(f64),
    #[error("grid must be nonempty, sorted, and inside [{tau0}, {tau}]")]
    BadGrid { tau0: f64, tau: f64 },
    #[error("{failures} of {replicates} bootstrap replicates failed (more than 10%)")]
    TooManyFailures { failures: usize, replicates: usize },
    #[error(transparent)]
    Em(#[from] EmError),
}

/// Evaluation grid with pointwise replicate mean and percentile envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBand {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub replicates: usize,
    pub failures: usize,
    pub level: f64,
}

// Duplicate pooled observation times (inevitable when a subject is drawn
// twice) make the jump grid degenerate; perturb times by this much.
const JITTER_MAGNITUDE: f64 = 1e-6;

fn has_tied_times(trajectories: &[Trajectory]) -> bool {
    let mut times: Vec<f64> = trajectories
        .iter()
        .flat_map(|t| t.intervals().iter().map(|iv| iv.t))
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    times.windows(2).any(|p| p[0] == p[1])
}

fn resample(
    dataset: &PanelDataset,
    rng: &mut ChaCha8Rng,
) -> Result<PanelDataset, String> {
    let n = dataset.n_subjects();
    let chosen: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut trajectories: Vec<Trajectory> = chosen
        .iter()
        .enumerate()
        .map(|(slot, &idx)| {
            let src = &dataset.trajectories()[idx];
            Trajectory::new(
                format!("{}~{}", src.subject_id(), slot),
                src.intervals().to_vec(),
            )
            .expect("source trajectory is valid")
        })
        .collect();

    if has_tied_times(&trajectories) {
        trajectories = trajectories
            .into_iter()
            .map(|traj| {
                let mut prev = 0.0;
                let intervals: Result<Vec<IntervalObservation>, String> = traj
                    .intervals()
                    .iter()
                    .map(|iv| {
                        let t = iv.t + JITTER_MAGNITUDE * (2.0 * rng.random::<f64>() - 1.0);
                        if t <= prev {
                            return Err(format!(
                                "jitter broke ordering for subject {}",
                                traj.subject_id()
                            ));
                        }
                        let out = IntervalObservation {
                            t_prev: prev,
                            t,
                            count: iv.count,
                        };
                        prev = t;
                        Ok(out)
                    })
                    .collect();
                intervals.map(|ivs| {
                    Trajectory::new(traj.subject_id().to_string(), ivs)
                        .expect("jittered trajectory is ordered")
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
    }
    PanelDataset::new(trajectories, dataset.meta()).map_err(|e| e.to_string())
}

fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let m = sorted.len();
    let rank = (q * m as f64).ceil() as usize;
    sorted[rank.clamp(1, m) - 1]
}

/// Resample-refit-evaluate `b` times and aggregate pointwise.
///
/// Failed replicates are recorded and excluded; more than 10% failures is an
/// error.
pub fn bootstrap_fit(
    dataset: &PanelDataset,
    config: &EmConfig,
    grid: &[f64],
    b: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapBand, BootstrapError> {
    if b == 0 {
        return Err(BootstrapError::BadReplicateCount);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(BootstrapError::BadLevel(level));
    }
    let (tau0, tau) = (dataset.tau0(), dataset.tau());
    let grid_ok = !grid.is_empty()
        && grid.windows(2).all(|p| p[0] < p[1])
        && grid.iter().all(|&t| t.is_finite() && t >= tau0 && t <= tau);
    if !grid_ok {
        return Err(BootstrapError::BadGrid { tau0, tau });
    }

    let runs: Vec<Result<Vec<f64>, String>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let resampled = resample(dataset, &mut rng)?;
            // The EM seed is shared across replicates: identical resamples
            // must produce identical fits, so replicate variation comes from
            // resampling alone.
            let result = em_fit(&resampled, config).map_err(|e| e.to_string())?;
            Ok(grid.iter().map(|&t| result.estimate.eval(t)).collect())
        })
        .collect();

    let failures = runs.iter().filter(|r| r.is_err()).count();
    if failures * 10 > b {
        return Err(BootstrapError::TooManyFailures {
            failures,
            replicates: b,
        });
    }
    let curves: Vec<&Vec<f64>> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
    let m = curves.len();
    debug_assert!(m >= 1);

    let q_lo = (1.0 - level) / 2.0;
    let q_hi = 1.0 - q_lo;
    let mut mean = Vec::with_capacity(grid.len());
    let mut lower = Vec::with_capacity(grid.len());
    let mut upper = Vec::with_capacity(grid.len());
    let mut column = Vec::with_capacity(m);
    for g in 0..grid.len() {
        column.clear();
        column.extend(curves.iter().map(|c| c[g]));
        mean.push(column.iter().sum::<f64>() / m as f64);
        column.sort_by(|a, b| a.partial_cmp(b).expect("finite eval values"));
        lower.push(nearest_rank(&column, q_lo));
        upper.push(nearest_rank(&column, q_hi));
    }

    Ok(BootstrapBand {
        grid: grid.to_vec(),
        mean,
        lower,
        upper,
        replicates: b,
        failures,
        level,
    })
}

/// Band as CSV rows `t,mean,lower,upper`.
pub fn band_to_csv(band: &BootstrapBand) -> String {
    let mut out = String::from("t,mean,lower,upper\n");
    for i in 0..band.grid.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            band.grid[i], band.mean[i], band.lower[i], band.upper[i]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{
        corrupt, sample_panel, MeanFunctionSpec, MeanKind, MissingnessSpec, ScheduleSpec,
    };
    use crate::util::linspace;

    fn small_dataset(n: usize, seed: u64) -> PanelDataset {
        let mean = MeanFunctionSpec::new(MeanKind::Sqrt, (0.1, 10.0), None).unwrap();
        let sched = ScheduleSpec {
            k: 5,
            window: (0.1, 10.0),
            alpha: 0.0,
        };
        let complete = sample_panel(&mean, &sched, n, seed).unwrap();
        corrupt(&complete, &MissingnessSpec::Mcar { eps: 0.2 }, seed + 1).unwrap()
    }

    fn quick_config() -> EmConfig {
        EmConfig {
            tol: 1e-5,
            max_iter: 100,
            mstep_tol: 1e-7,
            mstep_max_iter: 5_000,
            ..Default::default()
        }
    }

    #[test]
    fn single_subject_band_has_zero_width() {
        let ds = small_dataset(1, 3);
        let grid = linspace(ds.tau0(), ds.tau(), 10);
        let band = bootstrap_fit(&ds, &quick_config(), &grid, 8, 0.95, 5).unwrap();
        for i in 0..grid.len() {
            assert_eq!(band.lower[i], band.upper[i]);
            assert_eq!(band.lower[i], band.mean[i]);
        }
    }

    #[test]
    fn single_replicate_band_is_the_replicate_curve() {
        let ds = small_dataset(6, 4);
        let grid = linspace(ds.tau0(), ds.tau(), 8);
        let band = bootstrap_fit(&ds, &quick_config(), &grid, 1, 0.9, 5).unwrap();
        for i in 0..grid.len() {
            assert_eq!(band.lower[i], band.mean[i]);
            assert_eq!(band.upper[i], band.mean[i]);
        }
    }

    #[test]
    fn band_ordering_holds_pointwise() {
        let ds = small_dataset(12, 9);
        let grid = linspace(ds.tau0(), ds.tau(), 12);
        let band = bootstrap_fit(&ds, &quick_config(), &grid, 40, 0.95, 11).unwrap();
        for i in 0..grid.len() {
            assert!(band.lower[i] <= band.mean[i] + 1e-12);
            assert!(band.mean[i] <= band.upper[i] + 1e-12);
        }
        assert_eq!(band.failures, 0);
    }

    #[test]
    fn bootstrap_is_deterministic_in_seed() {
        let ds = small_dataset(8, 2);
        let grid = linspace(ds.tau0(), ds.tau(), 6);
        let a = bootstrap_fit(&ds, &quick_config(), &grid, 10, 0.9, 77).unwrap();
        let b = bootstrap_fit(&ds, &quick_config(), &grid, 10, 0.9, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn band_width_shrinks_with_sample_size() {
        let grid = linspace(0.5, 9.5, 10);
        let avg_width = |n: usize| {
            let ds = small_dataset(n, 40);
            let band = bootstrap_fit(&ds, &quick_config(), &grid, 60, 0.95, 41).unwrap();
            band.upper
                .iter()
                .zip(&band.lower)
                .map(|(u, l)| u - l)
                .sum::<f64>()
                / grid.len() as f64
        };
        let w_small = avg_width(20);
        let w_big = avg_width(80);
        assert!(
            w_small >= 1.3 * w_big,
            "width at n: {w_small}, width at 4n: {w_big}"
        );
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        let ds = small_dataset(4, 6);
        let grid = linspace(ds.tau0(), ds.tau(), 4);
        assert!(matches!(
            bootstrap_fit(&ds, &quick_config(), &grid, 0, 0.95, 1),
            Err(BootstrapError::BadReplicateCount)
        ));
        assert!(matches!(
            bootstrap_fit(&ds, &quick_config(), &grid, 5, 1.0, 1),
            Err(BootstrapError::BadLevel(_))
        ));
        let outside = vec![ds.tau() + 1.0];
        assert!(matches!(
            bootstrap_fit(&ds, &quick_config(), &outside, 5, 0.9, 1),
            Err(BootstrapError::BadGrid { .. })
        ));
    }
}
