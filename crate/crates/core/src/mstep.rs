//! Maximizers of the weighted complete-data Poisson objective over monotone
//! step functions.
//!
//! Given per-interval weights w (observed counts, or imputed increments), two
//! solvers are provided:
//!
//! * [`fit_pseudo`]: treats the per-subject cumulative weights at each
//!   observation time as independent Poisson observations; the maximizer is
//!   the weighted isotonic regression of the pooled cumulative values,
//!   computed by pool-adjacent-violators.
//! * [`fit_mle`]: maximizes the full objective
//!   `sum_ij [ w_ij log(sum_{g in I_ij} lambda_g) - sum_{g in I_ij} lambda_g ]`
//!   over nonnegative jumps `lambda_g` on the pooled observation-time grid,
//!   via a multiplicative latent-count fixed point. Each sweep redistributes
//!   every interval's weight over the grid points it covers proportionally to
//!   the current jumps, then averages by coverage; the objective never
//!   decreases across sweeps.
//!
//! Jump support is fixed to the pooled observation times: the step-function
//! maximizer puts mass only there. Zero jumps are retained (not pruned) so
//! grids are stable across repeated fits.

use crate::panel::PanelDataset;
use crate::stepfn::StepFunction;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MstepError {
    #[error("no intervals to fit")]
    NoIntervals,
    #[error("no observed intervals")]
    NoObservedIntervals,
    #[error("subject {subject} interval {index}: missing count in complete-data fit")]
    MissingCount { subject: String, index: usize },
    #[error("subject {subject} interval {index}: weight {weight} must be finite and >= 0")]
    BadWeight {
        subject: String,
        index: usize,
        weight: f64,
    },
    #[error("subject {subject} interval {index}: need t_prev < t")]
    BadInterval { subject: String, index: usize },
    #[error("tolerance must be positive, got {0}")]
    BadTol(f64),
}

/// One interval `(t_prev, t]` carrying a nonnegative weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedInterval {
    pub t_prev: f64,
    pub t: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectWeights {
    pub subject_id: String,
    pub intervals: Vec<WeightedInterval>,
}

/// Per-subject weighted intervals; the interval structure mirrors the source
/// dataset (drop-missing fits carry the observed subset).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedIntervals {
    subjects: Vec<SubjectWeights>,
}

impl WeightedIntervals {
    pub fn new(subjects: Vec<SubjectWeights>) -> Result<Self, MstepError> {
        for subj in &subjects {
            for (index, iv) in subj.intervals.iter().enumerate() {
                if !iv.weight.is_finite() || iv.weight < 0.0 {
                    return Err(MstepError::BadWeight {
                        subject: subj.subject_id.clone(),
                        index,
                        weight: iv.weight,
                    });
                }
                if !(iv.t_prev.is_finite() && iv.t.is_finite() && iv.t_prev < iv.t) {
                    return Err(MstepError::BadInterval {
                        subject: subj.subject_id.clone(),
                        index,
                    });
                }
            }
        }
        Ok(WeightedIntervals { subjects })
    }

    /// All counts taken as weights; errors if any count is missing.
    pub fn from_complete(dataset: &PanelDataset) -> Result<Self, MstepError> {
        let mut subjects = Vec::with_capacity(dataset.n_subjects());
        for traj in dataset.trajectories() {
            let mut intervals = Vec::with_capacity(traj.len());
            for (index, iv) in traj.intervals().iter().enumerate() {
                let weight = iv.count.ok_or_else(|| MstepError::MissingCount {
                    subject: traj.subject_id().to_string(),
                    index,
                })?;
                intervals.push(WeightedInterval {
                    t_prev: iv.t_prev,
                    t: iv.t,
                    weight,
                });
            }
            subjects.push(SubjectWeights {
                subject_id: traj.subject_id().to_string(),
                intervals,
            });
        }
        WeightedIntervals::new(subjects)
    }

    /// Keep only intervals with a present count (complete-case analysis).
    pub fn observed_only(dataset: &PanelDataset) -> Result<Self, MstepError> {
        let mut subjects = Vec::new();
        for traj in dataset.trajectories() {
            let intervals: Vec<WeightedInterval> = traj
                .intervals()
                .iter()
                .filter_map(|iv| {
                    iv.count.map(|weight| WeightedInterval {
                        t_prev: iv.t_prev,
                        t: iv.t,
                        weight,
                    })
                })
                .collect();
            if !intervals.is_empty() {
                subjects.push(SubjectWeights {
                    subject_id: traj.subject_id().to_string(),
                    intervals,
                });
            }
        }
        if subjects.is_empty() {
            return Err(MstepError::NoObservedIntervals);
        }
        WeightedIntervals::new(subjects)
    }

    pub fn subjects(&self) -> &[SubjectWeights] {
        &self.subjects
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn interval_count(&self) -> usize {
        self.subjects.iter().map(|s| s.intervals.len()).sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.subjects
            .iter()
            .flat_map(|s| s.intervals.iter())
            .map(|iv| iv.weight)
            .sum()
    }
}

/// Pooled distinct observation times (interval right endpoints) with the
/// number of intervals covering each.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpGrid {
    times: Vec<f64>,
    coverage: Vec<usize>,
}

impl JumpGrid {
    pub fn from_weighted(w: &WeightedIntervals) -> Self {
        let mut times: Vec<f64> = w
            .subjects()
            .iter()
            .flat_map(|s| s.intervals.iter().map(|iv| iv.t))
            .collect();
        times.sort_by(|a, b| a.partial_cmp(b).expect("times are finite"));
        times.dedup();
        let mut cover_diff = vec![0isize; times.len() + 1];
        for subj in w.subjects() {
            for iv in &subj.intervals {
                let (lo, hi) = range(&times, iv.t_prev, iv.t);
                cover_diff[lo] += 1;
                cover_diff[hi + 1] -= 1;
            }
        }
        let mut coverage = Vec::with_capacity(times.len());
        let mut acc = 0isize;
        for d in &cover_diff[..times.len()] {
            acc += d;
            coverage.push(acc as usize);
        }
        JumpGrid { times, coverage }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn coverage(&self) -> &[usize] {
        &self.coverage
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Grid index range of points inside `(t_prev, t]`. Every interval contains
/// its own right endpoint, so the range is never empty.
fn range(times: &[f64], t_prev: f64, t: f64) -> (usize, usize) {
    let lo = times.partition_point(|&s| s <= t_prev);
    let hi = times.partition_point(|&s| s <= t) - 1;
    debug_assert!(lo <= hi, "interval ({t_prev}, {t}] covers no grid point");
    (lo, hi)
}

/// Fit outcome: the estimate plus solver status.
#[derive(Debug, Clone)]
pub struct MstepFit {
    pub estimate: StepFunction,
    pub converged: bool,
    pub iterations: usize,
    /// All weights were zero; the zero function is returned.
    pub degenerate: bool,
}

/// Weighted pool-adjacent-violators: least-squares isotonic regression of
/// `values` with `weights`, returned expanded to the input length.
pub fn pava(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    let n = values.len();
    let mut mean: Vec<f64> = Vec::with_capacity(n);
    let mut weight: Vec<f64> = Vec::with_capacity(n);
    let mut size: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        mean.push(values[i]);
        weight.push(weights[i]);
        size.push(1);
        while mean.len() >= 2 && mean[mean.len() - 2] > mean[mean.len() - 1] {
            let m2 = mean.pop().expect("nonempty");
            let w2 = weight.pop().expect("nonempty");
            let s2 = size.pop().expect("nonempty");
            let k = mean.len() - 1;
            let wsum = weight[k] + w2;
            mean[k] = if wsum > 0.0 {
                (weight[k] * mean[k] + w2 * m2) / wsum
            } else {
                0.5 * (mean[k] + m2)
            };
            weight[k] = wsum;
            size[k] += s2;
        }
    }
    let mut out = Vec::with_capacity(n);
    for (m, s) in mean.iter().zip(&size) {
        for _ in 0..*s {
            out.push(*m);
        }
    }
    out
}

/// Pseudo-likelihood M-step: weighted isotonic regression of the pooled
/// per-subject cumulative weights, solved exactly by PAVA.
pub fn fit_pseudo(w: &WeightedIntervals) -> Result<MstepFit, MstepError> {
    if w.interval_count() == 0 {
        return Err(MstepError::NoIntervals);
    }
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(w.interval_count());
    for subj in w.subjects() {
        let mut cum = 0.0;
        for iv in &subj.intervals {
            cum += iv.weight;
            points.push((iv.t, cum));
        }
    }
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("times are finite"));

    // Merge exact time ties: value = mean of tied cumulative counts,
    // weight = multiplicity.
    let mut times: Vec<f64> = Vec::with_capacity(points.len());
    let mut values: Vec<f64> = Vec::with_capacity(points.len());
    let mut weights: Vec<f64> = Vec::with_capacity(points.len());
    for (t, v) in points {
        if times.last() == Some(&t) {
            let k = values.len() - 1;
            let c = weights[k];
            values[k] = (values[k] * c + v) / (c + 1.0);
            weights[k] = c + 1.0;
        } else {
            times.push(t);
            values.push(v);
            weights.push(1.0);
        }
    }

    let fitted = pava(&values, &weights);
    let degenerate = w.total_weight() == 0.0;
    let estimate =
        StepFunction::new(times, fitted, None).expect("PAVA output is monotone and nonnegative");
    Ok(MstepFit {
        estimate,
        converged: true,
        iterations: 0,
        degenerate,
    })
}

// Residual tolerance used to stop and to classify jumps at the active-set
// boundary; half the 1e-6 budget the KKT conditions are verified against.
const KKT_GUARD: f64 = 5e-8;
// Size threshold (relative to the jump scale) below which a decaying jump may
// be set to exactly zero.
const TRUNC_REL: f64 = 1e-4;
// Warm starts and revived jumps must be strictly positive for the
// multiplicative update; also the resolution floor for range masses.
const FLOOR_REL: f64 = 1e-8;
// Weights below this fraction of the uniform jump mass are treated as zero:
// they are imputation artifacts at the solver's stall scale, far below every
// tolerance the fits are verified against.
const WEIGHT_SNAP_REL: f64 = 1e-6;
const MAX_CLEANUP: usize = 50;

struct MleProblem {
    times: Vec<f64>,
    coverage: Vec<f64>,
    intervals: Vec<(usize, usize, f64)>,
    total_weight: f64,
    uniform: f64,
}

impl MleProblem {
    fn build(w: &WeightedIntervals) -> Self {
        let grid = JumpGrid::from_weighted(w);
        let times = grid.times().to_vec();
        let coverage: Vec<f64> = grid.coverage().iter().map(|&c| c as f64).collect();
        let mut intervals = Vec::with_capacity(w.interval_count());
        let mut total_weight = 0.0;
        for subj in w.subjects() {
            for iv in &subj.intervals {
                let (lo, hi) = range(&times, iv.t_prev, iv.t);
                intervals.push((lo, hi, iv.weight));
                total_weight += iv.weight;
            }
        }
        let total_coverage: f64 = coverage.iter().sum();
        let uniform = if total_coverage > 0.0 {
            total_weight / total_coverage
        } else {
            0.0
        };
        let snap = uniform * WEIGHT_SNAP_REL;
        for iv in intervals.iter_mut() {
            if iv.2 < snap {
                iv.2 = 0.0;
            }
        }
        MleProblem {
            times,
            coverage,
            intervals,
            total_weight,
            uniform,
        }
    }

    fn prefix(&self, lam: &[f64], cum: &mut Vec<f64>) {
        cum.clear();
        cum.push(0.0);
        let mut acc = 0.0;
        for &x in lam {
            acc += x;
            cum.push(acc);
        }
    }

    /// Interval increment from the prefix sums, floored at the least mass the
    /// solver can resolve over the range. Transient iterates can drive a
    /// range's mass below the resolution of the accumulated sums (where the
    /// difference cancels to zero); the floor keeps every ratio finite and
    /// moderate, and such ranges are immediately pulled back to their
    /// equilibrium scale.
    fn increment(&self, cum: &[f64], lo: usize, hi: usize) -> f64 {
        let floor = (hi - lo + 1) as f64 * self.uniform * FLOOR_REL;
        (cum[hi + 1] - cum[lo]).max(floor)
    }

    /// KKT residuals `sum_{ij: g in I_ij} w_ij / increment_ij - m_g`.
    fn residuals(&self, lam: &[f64]) -> Vec<f64> {
        let mut cum = Vec::new();
        self.prefix(lam, &mut cum);
        let mut diff = vec![0.0; lam.len() + 1];
        for &(lo, hi, w) in &self.intervals {
            if w > 0.0 {
                let r = w / self.increment(&cum, lo, hi);
                diff[lo] += r;
                diff[hi + 1] -= r;
            }
        }
        let mut out = Vec::with_capacity(lam.len());
        let mut acc = 0.0;
        for (g, d) in diff[..lam.len()].iter().enumerate() {
            acc += d;
            out.push(acc - self.coverage[g]);
        }
        out
    }

    /// One multiplicative sweep; returns the largest jump change and the
    /// largest positive residual over currently-positive jumps.
    fn sweep(&self, lam: &mut [f64], cum: &mut Vec<f64>, diff: &mut Vec<f64>) -> (f64, f64) {
        self.prefix(lam, cum);
        diff.clear();
        diff.resize(lam.len() + 1, 0.0);
        for &(lo, hi, w) in &self.intervals {
            if w > 0.0 {
                let r = w / self.increment(cum, lo, hi);
                diff[lo] += r;
                diff[hi + 1] -= r;
            }
        }
        let mut acc = 0.0;
        let mut max_change: f64 = 0.0;
        let mut max_pos_resid: f64 = 0.0;
        for g in 0..lam.len() {
            acc += diff[g];
            if lam[g] > 0.0 {
                let resid = acc - self.coverage[g];
                if resid > max_pos_resid {
                    max_pos_resid = resid;
                }
                // acc is a prefix of large cancelling ratios; clamp so that
                // rounding residue can never produce a negative jump.
                let new = lam[g] * acc / self.coverage[g];
                let new = if new > 0.0 { new } else { 0.0 };
                let change = (new - lam[g]).abs();
                if change > max_change {
                    max_change = change;
                }
                lam[g] = new;
            }
        }
        (max_change, max_pos_resid)
    }

    /// Objective value, Kahan-summed so per-sweep monotonicity can be checked
    /// at 1e-12 resolution.
    fn objective(&self, lam: &[f64]) -> f64 {
        let mut cum = Vec::new();
        self.prefix(lam, &mut cum);
        let mut sum = 0.0;
        let mut comp = 0.0;
        let mut add = |x: f64| {
            let y = x - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        };
        for &(lo, hi, w) in &self.intervals {
            if w > 0.0 {
                add(w * self.increment(&cum, lo, hi).ln());
            }
        }
        for (g, &x) in lam.iter().enumerate() {
            add(-self.coverage[g] * x);
        }
        sum
    }

    fn solve(
        &self,
        mut lam: Vec<f64>,
        tol: f64,
        max_iter: usize,
        mut trace: Option<&mut Vec<f64>>,
    ) -> (Vec<f64>, usize, bool) {
        let mut cum = Vec::with_capacity(lam.len() + 1);
        let mut diff = Vec::with_capacity(lam.len() + 1);
        let floor = self.uniform * FLOOR_REL;
        let mut iterations = 0;
        let mut cleanup_rounds = 0;
        let mut converged = false;
        while iterations < max_iter {
            iterations += 1;
            let (max_change, max_pos_resid) = self.sweep(&mut lam, &mut cum, &mut diff);
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(self.objective(&lam));
            }
            if max_change < tol && max_pos_resid < KKT_GUARD {
                // Classify the active-set boundary: slowly decaying jumps are
                // set to exactly zero, zero jumps whose residual turned
                // positive are revived with a small positive mass.
                let resid = self.residuals(&lam);
                let scale = lam.iter().cloned().fold(self.uniform, f64::max);
                let trunc = TRUNC_REL * scale;
                let mut zero_mask = vec![false; lam.len()];
                let mut any = false;
                for g in 0..lam.len() {
                    if lam[g] > 0.0 && lam[g] <= trunc && resid[g] < -KKT_GUARD {
                        zero_mask[g] = true;
                        any = true;
                    }
                }
                let mut dirty = false;
                if any {
                    // A positive-weight interval must keep positive mass:
                    // protect the coordinates of any interval the tentative
                    // truncation would empty out.
                    self.prefix(&lam, &mut cum);
                    let mut cum_masked = Vec::with_capacity(lam.len() + 1);
                    cum_masked.push(0.0);
                    let mut acc = 0.0;
                    for g in 0..lam.len() {
                        if zero_mask[g] {
                            acc += lam[g];
                        }
                        cum_masked.push(acc);
                    }
                    let mut protect = vec![0isize; lam.len() + 1];
                    for &(lo, hi, w) in &self.intervals {
                        if w > 0.0 {
                            let dl = cum[hi + 1] - cum[lo];
                            let masked = cum_masked[hi + 1] - cum_masked[lo];
                            if dl - masked <= dl * 1e-9 {
                                protect[lo] += 1;
                                protect[hi + 1] -= 1;
                            }
                        }
                    }
                    let mut protected = 0isize;
                    for g in 0..lam.len() {
                        protected += protect[g];
                        if zero_mask[g] && protected == 0 {
                            lam[g] = 0.0;
                            dirty = true;
                        }
                    }
                }
                for g in 0..lam.len() {
                    if lam[g] == 0.0 && resid[g] > KKT_GUARD {
                        lam[g] = floor;
                        dirty = true;
                    }
                }
                cleanup_rounds += 1;
                if !dirty || cleanup_rounds > MAX_CLEANUP {
                    converged = true;
                    break;
                }
            }
        }
        (lam, iterations, converged)
    }

    fn estimate(&self, lam: &[f64]) -> StepFunction {
        let mut cum = Vec::with_capacity(lam.len());
        let mut acc = 0.0;
        for &x in lam {
            acc += x;
            cum.push(acc);
        }
        StepFunction::new(self.times.clone(), cum, None)
            .expect("nonnegative jumps yield a monotone step function")
    }
}

fn fit_mle_impl(
    w: &WeightedIntervals,
    tol: f64,
    max_iter: usize,
    warm: Option<&StepFunction>,
    trace: Option<&mut Vec<f64>>,
) -> Result<MstepFit, MstepError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(MstepError::BadTol(tol));
    }
    if w.interval_count() == 0 {
        return Err(MstepError::NoIntervals);
    }
    let problem = MleProblem::build(w);
    if problem.total_weight == 0.0 {
        let lam = vec![0.0; problem.times.len()];
        return Ok(MstepFit {
            estimate: problem.estimate(&lam),
            converged: true,
            iterations: 0,
            degenerate: true,
        });
    }
    let floor = problem.uniform * FLOOR_REL;
    let lam0: Vec<f64> = match warm {
        Some(f) => {
            let mut prev = 0.0;
            problem
                .times
                .iter()
                .map(|&t| {
                    let v = f.eval(t);
                    let inc = (v - prev).max(floor);
                    prev = v;
                    inc
                })
                .collect()
        }
        None => vec![problem.uniform; problem.times.len()],
    };
    let (lam, iterations, converged) = problem.solve(lam0, tol, max_iter, trace);
    Ok(MstepFit {
        estimate: problem.estimate(&lam),
        converged,
        iterations,
        degenerate: false,
    })
}

/// Full-likelihood M-step via the multiplicative fixed point, starting from
/// uniform mass. Non-convergence within `max_iter` returns the best iterate
/// with `converged = false`.
pub fn fit_mle(w: &WeightedIntervals, tol: f64, max_iter: usize) -> Result<MstepFit, MstepError> {
    fit_mle_impl(w, tol, max_iter, None, None)
}

/// [`fit_mle`] that also records the objective after every inner sweep.
pub fn fit_mle_traced(
    w: &WeightedIntervals,
    tol: f64,
    max_iter: usize,
) -> Result<(MstepFit, Vec<f64>), MstepError> {
    let mut trace = Vec::new();
    let fit = fit_mle_impl(w, tol, max_iter, None, Some(&mut trace))?;
    Ok((fit, trace))
}

/// [`fit_mle`] warm-started from a previous estimate; used by the EM loop
/// where successive weight vectors change little.
pub(crate) fn fit_mle_warm(
    w: &WeightedIntervals,
    tol: f64,
    max_iter: usize,
    warm: &StepFunction,
) -> Result<MstepFit, MstepError> {
    fit_mle_impl(w, tol, max_iter, Some(warm), None)
}

/// Complete-case fit: [`fit_mle`] on the observed intervals only. Under MCAR
/// this is the fixed point the EM iteration converges to.
pub fn fit_drop_missing(
    dataset: &PanelDataset,
    tol: f64,
    max_iter: usize,
) -> Result<MstepFit, MstepError> {
    let w = WeightedIntervals::observed_only(dataset)?;
    fit_mle(&w, tol, max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(id: &str, bounds: &[f64], weights: &[f64]) -> SubjectWeights {
        assert_eq!(bounds.len(), weights.len() + 1);
        let intervals = bounds
            .windows(2)
            .zip(weights)
            .map(|(b, &weight)| WeightedInterval {
                t_prev: b[0],
                t: b[1],
                weight,
            })
            .collect();
        SubjectWeights {
            subject_id: id.to_string(),
            intervals,
        }
    }

    #[test]
    fn pava_examples() {
        assert_eq!(
            pava(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]),
            vec![1.0, 2.0, 3.0]
        );
        assert_eq!(
            pava(&[3.0, 1.0, 2.0], &[1.0, 1.0, 1.0]),
            vec![2.0, 2.0, 2.0]
        );
        // Pooled weighted mean (4*1 + 0*3)/4 = 1.
        assert_eq!(pava(&[4.0, 0.0], &[1.0, 3.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn fit_pseudo_monotone_input_is_unchanged() {
        let w = WeightedIntervals::new(vec![chain(
            "a",
            &[0.0, 1.0, 2.0, 3.0],
            &[1.0, 1.0, 1.0],
        )])
        .unwrap();
        let fit = fit_pseudo(&w).unwrap();
        assert_eq!(fit.estimate.jump_times(), &[1.0, 2.0, 3.0]);
        assert_eq!(fit.estimate.cum_values(), &[1.0, 2.0, 3.0]);
        assert!(!fit.degenerate);
    }

    #[test]
    fn fit_pseudo_all_zero_weights_is_degenerate() {
        let w =
            WeightedIntervals::new(vec![chain("a", &[0.0, 1.0, 2.0], &[0.0, 0.0])]).unwrap();
        let fit = fit_pseudo(&w).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.estimate.cum_values(), &[0.0, 0.0]);
    }

    #[test]
    fn fit_mle_decouples_on_shared_single_interval() {
        let w = WeightedIntervals::new(vec![
            chain("a", &[0.0, 2.0], &[2.0]),
            chain("b", &[0.0, 2.0], &[4.0]),
        ])
        .unwrap();
        let fit = fit_mle(&w, 1e-10, 10_000).unwrap();
        assert!(fit.converged);
        assert!((fit.estimate.increment(0.0, 2.0) - 3.0).abs() < 1e-8);
    }

    #[test]
    fn fit_mle_matches_hand_solved_two_subject_instance() {
        // A: (0,2] weight 2; B: (0,1] weight 1. Stationarity gives jumps
        // (1, 1) on the grid {1, 2}.
        let w = WeightedIntervals::new(vec![
            chain("a", &[0.0, 2.0], &[2.0]),
            chain("b", &[0.0, 1.0], &[1.0]),
        ])
        .unwrap();
        let fit = fit_mle(&w, 1e-12, 50_000).unwrap();
        assert!(fit.converged);
        assert!((fit.estimate.eval(1.0) - 1.0).abs() < 1e-7);
        assert!((fit.estimate.eval(2.0) - 2.0).abs() < 1e-7);
    }

    #[test]
    fn fit_mle_all_zero_weights_returns_zero_function() {
        let w =
            WeightedIntervals::new(vec![chain("a", &[0.0, 1.0, 2.0], &[0.0, 0.0])]).unwrap();
        let fit = fit_mle(&w, 1e-8, 100).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.estimate.final_value(), 0.0);
        assert_eq!(fit.estimate.jump_times().len(), 2);
    }

    #[test]
    fn fit_mle_shared_schedules_give_interval_means() {
        // Three subjects observed at the same times: increments decouple into
        // per-interval means of the weights.
        let w = WeightedIntervals::new(vec![
            chain("a", &[0.0, 1.0, 2.0, 3.0], &[1.0, 4.0, 0.0]),
            chain("b", &[0.0, 1.0, 2.0, 3.0], &[3.0, 2.0, 0.0]),
            chain("c", &[0.0, 1.0, 2.0, 3.0], &[2.0, 0.0, 0.0]),
        ])
        .unwrap();
        let fit = fit_mle(&w, 1e-11, 50_000).unwrap();
        let est = &fit.estimate;
        assert!((est.increment(0.0, 1.0) - 2.0).abs() < 1e-7);
        assert!((est.increment(1.0, 2.0) - 2.0).abs() < 1e-7);
        assert!(est.increment(2.0, 3.0).abs() < 1e-7);
    }

    #[test]
    fn fit_mle_objective_is_monotone_across_sweeps() {
        let w = WeightedIntervals::new(vec![
            chain("a", &[0.0, 0.7, 1.9, 3.1], &[2.0, 0.0, 5.0]),
            chain("b", &[0.0, 1.3, 2.6], &[1.0, 3.0]),
            chain("c", &[0.0, 2.2], &[4.0]),
        ])
        .unwrap();
        let (fit, trace) = fit_mle_traced(&w, 1e-10, 20_000).unwrap();
        assert!(fit.converged);
        assert!(trace.len() >= 2);
        for pair in trace.windows(2) {
            assert!(
                pair[1] >= pair[0] - 1e-12 * (1.0 + pair[0].abs()),
                "objective decreased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn fit_drop_missing_examples() {
        use crate::panel::{IntervalObservation, PanelDataset, Trajectory};
        let traj = Trajectory::new(
            "a",
            vec![
                IntervalObservation {
                    t_prev: 0.0,
                    t: 1.0,
                    count: Some(2.0),
                },
                IntervalObservation {
                    t_prev: 1.0,
                    t: 2.0,
                    count: None,
                },
            ],
        )
        .unwrap();
        let ds = PanelDataset::with_inferred_meta(vec![traj]).unwrap();
        let fit = fit_drop_missing(&ds, 1e-10, 10_000).unwrap();
        assert!((fit.estimate.eval(1.0) - 2.0).abs() < 1e-8);
        // No jump mass forced at t = 2.
        assert!((fit.estimate.eval(2.0) - 2.0).abs() < 1e-8);

        let all_missing = Trajectory::new(
            "b",
            vec![IntervalObservation {
                t_prev: 0.0,
                t: 1.0,
                count: None,
            }],
        )
        .unwrap();
        let ds = PanelDataset::with_inferred_meta(vec![all_missing]).unwrap();
        assert!(matches!(
            fit_drop_missing(&ds, 1e-8, 100),
            Err(MstepError::NoObservedIntervals)
        ));
    }

    #[test]
    fn grid_pools_right_endpoints_with_coverage() {
        let w = WeightedIntervals::new(vec![
            chain("a", &[0.0, 1.0, 2.0], &[1.0, 1.0]),
            chain("b", &[0.0, 1.5], &[1.0]),
        ])
        .unwrap();
        let grid = JumpGrid::from_weighted(&w);
        assert_eq!(grid.times(), &[1.0, 1.5, 2.0]);
        // 1.0 is in a's (0,1] and b's (0,1.5]; 1.5 is in b's (0,1.5] and a's
        // (1,2]; 2.0 only in a's (1,2].
        assert_eq!(grid.coverage(), &[2, 2, 1]);
    }
}
