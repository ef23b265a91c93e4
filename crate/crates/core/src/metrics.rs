//! Empirical distance measures between mean functions and the theory
//! calculators for the contraction condition.

use crate::panel::PanelDataset;
use crate::stepfn::StepFunction;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("pair measure is empty")]
    EmptyPairMeasure,
    #[error("grid is empty")]
    EmptyGrid,
    #[error("epsilon must be in [0, 1), got {0}")]
    BadEpsilon(f64),
    #[error("{name} must be finite and > 0, got {value}")]
    BadConstant { name: &'static str, value: f64 },
    #[error("x must be > 0, got {0}")]
    BadArgument(f64),
}

/// Empirical measure on consecutive observation-time pairs `(T_{j-1}, T_j)`
/// (including the pair from the time origin), each with mass `1/n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMeasure {
    entries: Vec<(f64, f64, f64)>,
}

impl PairMeasure {
    pub fn from_dataset(dataset: &PanelDataset) -> Self {
        let mass = 1.0 / dataset.n_subjects() as f64;
        let entries = dataset
            .trajectories()
            .iter()
            .flat_map(|traj| {
                traj.intervals()
                    .iter()
                    .map(move |iv| (iv.t_prev, iv.t, mass))
            })
            .collect();
        PairMeasure { entries }
    }

    /// `(u, v, mass)` triples.
    pub fn entries(&self) -> &[(f64, f64, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    pub fn scale_masses(&self, factor: f64) -> PairMeasure {
        PairMeasure {
            entries: self
                .entries
                .iter()
                .map(|&(u, v, m)| (u, v, m * factor))
                .collect(),
        }
    }
}

/// Empirical d2 distance: root of the pair-measure-weighted sum of squared
/// increment differences.
pub fn d2_distance(
    f: &StepFunction,
    g: &StepFunction,
    pairs: &PairMeasure,
) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyPairMeasure);
    }
    let mut acc = 0.0;
    for &(u, v, mass) in pairs.entries() {
        let df = f.eval(v) - f.eval(u);
        let dg = g.eval(v) - g.eval(u);
        let diff = df - dg;
        acc += mass * diff * diff;
    }
    Ok(acc.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridErrors {
    pub sup: f64,
    pub rmse: f64,
}

/// Pointwise sup and root-mean-square error of `f` against an evaluatable
/// truth over a grid.
pub fn grid_errors<F: Fn(f64) -> f64>(
    f: &StepFunction,
    truth: F,
    grid: &[f64],
) -> Result<GridErrors, MetricsError> {
    if grid.is_empty() {
        return Err(MetricsError::EmptyGrid);
    }
    let mut sup: f64 = 0.0;
    let mut sq = 0.0;
    for &t in grid {
        let err = (f.eval(t) - truth(t)).abs();
        if err > sup {
            sup = err;
        }
        sq += err * err;
    }
    Ok(GridErrors {
        sup,
        rmse: (sq / grid.len() as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionConstants {
    pub gamma: f64,
    pub nu: f64,
    pub kappa: f64,
    /// The missingness threshold `c / (3b + c)` below which EM contracts.
    pub threshold: f64,
    pub contracts: bool,
}

/// Contraction calculator: `gamma = eps/c`, `nu = (1-eps)/(3b)`,
/// `kappa = gamma/nu`; the iteration contracts iff `eps < c/(3b + c)`
/// (strict).
pub fn contraction_constants(
    epsilon: f64,
    c: f64,
    b: f64,
) -> Result<ContractionConstants, MetricsError> {
    if !(epsilon >= 0.0 && epsilon < 1.0) || !epsilon.is_finite() {
        return Err(MetricsError::BadEpsilon(epsilon));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(MetricsError::BadConstant {
            name: "c",
            value: c,
        });
    }
    if !(b.is_finite() && b > 0.0) {
        return Err(MetricsError::BadConstant {
            name: "b",
            value: b,
        });
    }
    let gamma = epsilon / c;
    let nu = (1.0 - epsilon) / (3.0 * b);
    let kappa = gamma / nu;
    let threshold = c / (3.0 * b + c);
    Ok(ContractionConstants {
        gamma,
        nu,
        kappa,
        threshold,
        contracts: epsilon < threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HBoundCheck {
    pub h: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Check `h(x) = x(log x - 1) + 1 >= (1/3)(x - 1)^2`; the inequality is
/// guaranteed for `x` in `(0, 2)`.
pub fn h_lower_bound_check(x: f64) -> Result<HBoundCheck, MetricsError> {
    if !(x.is_finite() && x > 0.0) {
        return Err(MetricsError::BadArgument(x));
    }
    let h = x * (x.ln() - 1.0) + 1.0;
    let bound = (x - 1.0) * (x - 1.0) / 3.0;
    Ok(HBoundCheck {
        h,
        bound,
        holds: h >= bound - 1e-12,
    })
}
