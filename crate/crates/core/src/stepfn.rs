//! Nondecreasing right-continuous step functions, the representation used for
//! estimated mean functions.
//!
//! A [`StepFunction`] is zero on `[0, first jump)` and constant after its last
//! jump. Evaluation at a jump time includes the jump (cadlag convention).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StepFnError {
    #[error("jump_times and cum_values lengths differ ({times} vs {values})")]
    LengthMismatch { times: usize, values: usize },
    #[error("jump times must be finite, positive and strictly increasing (index {0})")]
    BadJumpTimes(usize),
    #[error("cumulative values must be finite, nonnegative and nondecreasing (index {0})")]
    BadCumValues(usize),
    #[error("cap must be finite and positive, got {0}")]
    BadCap(f64),
    #[error("final cumulative value {value} exceeds cap {cap}")]
    CapExceeded { value: f64, cap: f64 },
}

/// Monotone step function with `f(0) = 0`.
///
/// `cum_values[i]` is the value of the function at and after `jump_times[i]`
/// (until the next jump).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    jump_times: Vec<f64>,
    cum_values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cap: Option<f64>,
}

impl StepFunction {
    pub fn new(
        jump_times: Vec<f64>,
        cum_values: Vec<f64>,
        cap: Option<f64>,
    ) -> Result<Self, StepFnError> {
        if jump_times.len() != cum_values.len() {
            return Err(StepFnError::LengthMismatch {
                times: jump_times.len(),
                values: cum_values.len(),
            });
        }
        let mut prev_t = 0.0;
        for (i, &t) in jump_times.iter().enumerate() {
            if !t.is_finite() || t <= prev_t {
                return Err(StepFnError::BadJumpTimes(i));
            }
            prev_t = t;
        }
        let mut prev_v = 0.0;
        for (i, &v) in cum_values.iter().enumerate() {
            if !v.is_finite() || v < prev_v {
                return Err(StepFnError::BadCumValues(i));
            }
            prev_v = v;
        }
        if let Some(cap) = cap {
            if !cap.is_finite() || cap <= 0.0 {
                return Err(StepFnError::BadCap(cap));
            }
            if prev_v > cap {
                return Err(StepFnError::CapExceeded { value: prev_v, cap });
            }
        }
        Ok(StepFunction {
            jump_times,
            cum_values,
            cap,
        })
    }

    /// `(t, value)` pairs, e.g. from tabulated data. Times must be strictly
    /// increasing and values nondecreasing.
    pub fn from_table(points: &[(f64, f64)]) -> Result<Self, StepFnError> {
        let (times, values) = points.iter().copied().unzip();
        Self::new(times, values, None)
    }

    /// The identically-zero function.
    pub fn zero() -> Self {
        StepFunction {
            jump_times: Vec::new(),
            cum_values: Vec::new(),
            cap: None,
        }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn cum_values(&self) -> &[f64] {
        &self.cum_values
    }

    pub fn cap(&self) -> Option<f64> {
        self.cap
    }

    /// Value after the last jump (0 for the zero function).
    pub fn final_value(&self) -> f64 {
        self.cum_values.last().copied().unwrap_or(0.0)
    }

    /// Evaluate at `t >= 0`: the cumulative value at the largest jump time
    /// `<= t`, or 0 before the first jump.
    ///
    /// Panics on negative (or NaN) `t`.
    pub fn eval(&self, t: f64) -> f64 {
        assert!(t >= 0.0, "StepFunction::eval: time must be >= 0, got {t}");
        let idx = self.jump_times.partition_point(|&s| s <= t);
        if idx == 0 {
            0.0
        } else {
            self.cum_values[idx - 1]
        }
    }

    /// Increment over `(a, b]`, nonnegative by monotonicity.
    ///
    /// Panics unless `0 <= a < b`.
    pub fn increment(&self, a: f64, b: f64) -> f64 {
        assert!(
            a >= 0.0 && a < b,
            "StepFunction::increment: need 0 <= a < b, got a={a}, b={b}"
        );
        self.eval(b) - self.eval(a)
    }

    /// Exact sup distance `max |f - g|` over `[lo, hi]`.
    ///
    /// Both functions are piecewise constant, so the supremum is attained on
    /// the union of jump sets intersected with the window plus the window
    /// endpoints. Panics on an empty window.
    pub fn sup_distance(&self, other: &StepFunction, window: (f64, f64)) -> f64 {
        let (lo, hi) = window;
        assert!(
            lo >= 0.0 && lo < hi,
            "StepFunction::sup_distance: empty window [{lo}, {hi}]"
        );
        let mut best = (self.eval(lo) - other.eval(lo)).abs();
        for &s in self.jump_times.iter().chain(other.jump_times.iter()) {
            if s > lo && s <= hi {
                let d = (self.eval(s) - other.eval(s)).abs();
                if d > best {
                    best = d;
                }
            }
        }
        let d = (self.eval(hi) - other.eval(hi)).abs();
        if d > best {
            best = d;
        }
        best
    }

    /// `self + scale * other` on the merged jump grid. `scale` must be
    /// nonnegative so the result stays monotone.
    pub fn add_scaled(&self, other: &StepFunction, scale: f64) -> StepFunction {
        assert!(
            scale >= 0.0 && scale.is_finite(),
            "StepFunction::add_scaled: scale must be finite and >= 0, got {scale}"
        );
        let mut times = Vec::with_capacity(self.jump_times.len() + other.jump_times.len());
        let (a, b) = (&self.jump_times, &other.jump_times);
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let t = match (a.get(i), b.get(j)) {
                (Some(&x), Some(&y)) if x == y => {
                    i += 1;
                    j += 1;
                    x
                }
                (Some(&x), Some(&y)) if x < y => {
                    i += 1;
                    x
                }
                (Some(_), Some(&y)) => {
                    j += 1;
                    y
                }
                (Some(&x), None) => {
                    i += 1;
                    x
                }
                (None, Some(&y)) => {
                    j += 1;
                    y
                }
                (None, None) => unreachable!(),
            };
            times.push(t);
        }
        let values: Vec<f64> = times
            .iter()
            .map(|&t| self.eval(t) + scale * other.eval(t))
            .collect();
        StepFunction::new(times, values, None).expect("sum of monotone step functions is monotone")
    }

    /// Copy with cumulative values clipped at `cap` and the cap recorded.
    pub fn clip_to_cap(&self, cap: f64) -> Result<StepFunction, StepFnError> {
        if !cap.is_finite() || cap <= 0.0 {
            return Err(StepFnError::BadCap(cap));
        }
        let values: Vec<f64> = self.cum_values.iter().map(|&v| v.min(cap)).collect();
        StepFunction::new(self.jump_times.clone(), values, Some(cap))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example() -> StepFunction {
        StepFunction::new(vec![1.0, 2.0], vec![1.0, 2.5], None).unwrap()
    }

    #[test]
    fn eval_before_first_jump_is_zero() {
        assert_eq!(example().eval(0.5), 0.0);
        assert_eq!(example().eval(0.0), 0.0);
    }

    #[test]
    fn eval_is_right_continuous_at_jumps() {
        assert_eq!(example().eval(1.0), 1.0);
        assert_eq!(example().eval(2.0), 2.5);
    }

    #[test]
    fn eval_constant_after_last_jump() {
        assert_eq!(example().eval(3.0), 2.5);
    }

    #[test]
    #[should_panic]
    fn eval_rejects_negative_time() {
        example().eval(-0.1);
    }

    #[test]
    fn increment_examples() {
        let f = example();
        assert_eq!(f.increment(0.0, 2.0), 2.5);
        assert_eq!(f.increment(2.5, 2.6), 0.0);
        assert_eq!(f.increment(1.0, 2.0), 1.5);
    }

    #[test]
    #[should_panic]
    fn increment_rejects_reversed_interval() {
        example().increment(2.0, 1.0);
    }

    #[test]
    fn sup_distance_examples() {
        let f = example();
        assert_eq!(f.sup_distance(&f, (0.0, 3.0)), 0.0);

        let g = StepFunction::new(vec![1.0], vec![1.0], None).unwrap();
        assert_eq!(g.sup_distance(&StepFunction::zero(), (0.0, 2.0)), 1.0);

        // f jumps to 1 at t=1, g jumps to 1 at t=1.5: they differ by 1 on [1, 1.5).
        let h = StepFunction::new(vec![1.5], vec![1.0], None).unwrap();
        assert_eq!(g.sup_distance(&h, (0.0, 2.0)), 1.0);
    }

    #[test]
    fn constructor_rejects_bad_inputs() {
        assert!(StepFunction::new(vec![1.0, 1.0], vec![1.0, 2.0], None).is_err());
        assert!(StepFunction::new(vec![0.0], vec![1.0], None).is_err());
        assert!(StepFunction::new(vec![1.0, 2.0], vec![2.0, 1.0], None).is_err());
        assert!(StepFunction::new(vec![1.0], vec![-0.5], None).is_err());
        assert!(StepFunction::new(vec![1.0], vec![2.0], Some(1.5)).is_err());
        assert!(StepFunction::new(vec![1.0], vec![1.0, 2.0], None).is_err());
    }

    #[test]
    fn clip_to_cap_clips_and_records() {
        let f = example().clip_to_cap(2.0).unwrap();
        assert_eq!(f.cum_values(), &[1.0, 2.0]);
        assert_eq!(f.cap(), Some(2.0));
    }

    #[test]
    fn add_scaled_merges_grids() {
        let f = StepFunction::new(vec![1.0], vec![1.0], None).unwrap();
        let g = StepFunction::new(vec![0.5, 1.0, 2.0], vec![1.0, 2.0, 3.0], None).unwrap();
        let s = f.add_scaled(&g, 0.5);
        assert_eq!(s.jump_times(), &[0.5, 1.0, 2.0]);
        assert_eq!(s.eval(0.75), 0.5);
        assert_eq!(s.eval(1.0), 2.0);
        assert_eq!(s.eval(5.0), 2.5);
    }

    prop_compose! {
        fn arb_stepfn()(
            raw in prop::collection::vec((0.01f64..50.0, 0.0f64..3.0), 0..12)
        ) -> StepFunction {
            let mut times: Vec<f64> = raw.iter().map(|&(t, _)| t).collect();
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            times.dedup();
            let mut cum = 0.0;
            let values: Vec<f64> = raw.iter().take(times.len()).map(|&(_, inc)| {
                cum += inc;
                cum
            }).collect();
            StepFunction::new(times, values, None).unwrap()
        }
    }

    proptest! {
        #[test]
        fn eval_is_nondecreasing(f in arb_stepfn(), mut ts in prop::collection::vec(0.0f64..60.0, 2..20)) {
            ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for pair in ts.windows(2) {
                prop_assert!(f.eval(pair[0]) <= f.eval(pair[1]));
            }
        }

        #[test]
        fn increment_is_additive(f in arb_stepfn(), a in 0.0f64..20.0, d1 in 0.001f64..20.0, d2 in 0.001f64..20.0) {
            let b = a + d1;
            let c = b + d2;
            let lhs = f.increment(a, c);
            let rhs = f.increment(a, b) + f.increment(b, c);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn sup_distance_is_a_metric(f in arb_stepfn(), g in arb_stepfn(), h in arb_stepfn()) {
            let w = (0.0, 60.0);
            let fg = f.sup_distance(&g, w);
            let gf = g.sup_distance(&f, w);
            prop_assert!((fg - gf).abs() < 1e-15);
            prop_assert!(f.sup_distance(&f, w) == 0.0);
            let fh = f.sup_distance(&h, w);
            let gh = g.sup_distance(&h, w);
            prop_assert!(fh <= fg + gh + 1e-12);
        }

        #[test]
        fn serde_roundtrip_is_bit_exact(f in arb_stepfn()) {
            let text = serde_json::to_string(&f).unwrap();
            let back: StepFunction = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(f.jump_times().len(), back.jump_times().len());
            for (a, b) in f.jump_times().iter().zip(back.jump_times()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            for (a, b) in f.cum_values().iter().zip(back.cum_values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
