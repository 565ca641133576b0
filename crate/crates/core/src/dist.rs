//! Probabilistic forecast reports and their distribution kernels.
//!
//! A report comes in one of three forms: a binary event probability, a
//! categorical distribution over ordered categories, or a continuous
//! distribution. Continuous forecasts are either a parametric family
//! (beta, normal, uniform) or a [`QuantileGrid`] — the inverse CDF sampled
//! on a fixed probability grid. Grids are the common currency: aggregation
//! and CRPS quadrature both canonicalize to them via [`to_quantile_grid`].

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Continuous, ContinuousCDF, Normal};
use thiserror::Error;

/// Monotonicity violations up to this size are treated as floating-point
/// noise and repaired by clamping; anything larger is a hard error.
pub const MONOTONICITY_REPAIR_TOL: f64 = 1e-12;

/// Absolute tolerance for categorical probabilities summing to one.
pub const PROB_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum DistError {
    #[error("non-finite value in {0}")]
    NonFiniteValue(String),
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("categorical probabilities sum to {0}, not 1")]
    SumNotOne(f64),
    #[error("quantile values decrease at index {index} by {gap:e}")]
    NonMonotoneQuantiles { index: usize, gap: f64 },
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("tau {0} outside the open interval (0, 1)")]
    TauOutOfRange(f64),
    #[error("bad grid spec: {0}")]
    BadGridSpec(String),
}

/// Equally spaced probability levels `k / (size + 1)` for `k = 1..=size`.
///
/// Uniform-in-probability grids make quantile averaging a plain weighted
/// average per grid point and give CRPS quadrature `O(1/size)` resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub size: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { size: 999 }
    }
}

impl GridSpec {
    pub fn new(size: usize) -> Result<Self, DistError> {
        if size == 0 {
            return Err(DistError::BadGridSpec("size must be at least 1".into()));
        }
        Ok(GridSpec { size })
    }

    pub fn tau(&self, k: usize) -> f64 {
        (k + 1) as f64 / (self.size + 1) as f64
    }

    pub fn taus(&self) -> Vec<f64> {
        (0..self.size).map(|k| self.tau(k)).collect()
    }

    /// Round-trip tolerance `2 / (size + 1)` for grid-based CDF/quantile
    /// composition.
    pub fn resolution(&self) -> f64 {
        2.0 / (self.size + 1) as f64
    }
}

/// A discretized inverse CDF: `values[k]` is the forecast quantile at
/// probability level `taus[k]`.
///
/// Between grid points the CDF is linear; outside the grid range it clamps
/// to 0 and 1, which places atoms of mass `tau_1` and `1 - tau_M` at the
/// first and last grid values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileGrid {
    taus: Vec<f64>,
    values: Vec<f64>,
    support: Option<(f64, f64)>,
}

impl QuantileGrid {
    /// Build a grid, validating invariants. Values that decrease by no more
    /// than [`MONOTONICITY_REPAIR_TOL`] are clamped up to the running max.
    pub fn new(
        taus: Vec<f64>,
        values: Vec<f64>,
        support: Option<(f64, f64)>,
    ) -> Result<Self, DistError> {
        if taus.is_empty() || taus.len() != values.len() {
            return Err(DistError::BadParameter(format!(
                "grid needs matching non-empty taus/values, got {}/{}",
                taus.len(),
                values.len()
            )));
        }
        for (i, &t) in taus.iter().enumerate() {
            if !t.is_finite() {
                return Err(DistError::NonFiniteValue(format!("tau[{i}]")));
            }
            if !(0.0..=1.0).contains(&t) || t == 0.0 || t == 1.0 {
                return Err(DistError::TauOutOfRange(t));
            }
            if i > 0 && t <= taus[i - 1] {
                return Err(DistError::BadParameter(format!(
                    "taus must be strictly increasing, violated at index {i}"
                )));
            }
        }
        let mut values = values;
        for i in 0..values.len() {
            if !values[i].is_finite() {
                return Err(DistError::NonFiniteValue(format!("value[{i}]")));
            }
            if i > 0 && values[i] < values[i - 1] {
                let gap = values[i - 1] - values[i];
                if gap <= MONOTONICITY_REPAIR_TOL {
                    values[i] = values[i - 1];
                } else {
                    return Err(DistError::NonMonotoneQuantiles { index: i, gap });
                }
            }
        }
        if let Some((lo, hi)) = support {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(DistError::NonFiniteValue("support".into()));
            }
            if lo > hi {
                return Err(DistError::BadParameter("support lo > hi".into()));
            }
            if values[0] < lo || *values.last().unwrap() > hi {
                return Err(DistError::BadParameter(
                    "grid values fall outside the declared support".into(),
                ));
            }
        }
        Ok(QuantileGrid {
            taus,
            values,
            support,
        })
    }

    /// Point forecast: every quantile equals `x`.
    pub fn degenerate(x: f64, spec: GridSpec) -> Result<Self, DistError> {
        QuantileGrid::new(spec.taus(), vec![x; spec.size], None)
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        self.support
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    /// True when this grid was sampled on exactly the levels of `spec`.
    pub fn matches_spec(&self, spec: GridSpec) -> bool {
        self.taus.len() == spec.size && self.taus.iter().enumerate().all(|(k, &t)| t == spec.tau(k))
    }

    fn cdf(&self, x: f64) -> f64 {
        let v = &self.values;
        let n = v.len();
        if x < v[0] {
            return 0.0;
        }
        if x > v[n - 1] {
            return 1.0;
        }
        // last index with value <= x
        let hi = v.partition_point(|&w| w <= x);
        let k = hi - 1;
        if v[k] == x || hi == n {
            return self.taus[k];
        }
        let (v0, v1) = (v[k], v[hi]);
        let (t0, t1) = (self.taus[k], self.taus[hi]);
        t0 + (t1 - t0) * (x - v0) / (v1 - v0)
    }

    fn quantile(&self, tau: f64) -> f64 {
        let t = &self.taus;
        let n = t.len();
        if tau <= t[0] {
            return self.values[0];
        }
        if tau >= t[n - 1] {
            return self.values[n - 1];
        }
        let hi = t.partition_point(|&w| w <= tau);
        let k = hi - 1;
        if t[k] == tau {
            return self.values[k];
        }
        let (t0, t1) = (t[k], t[hi]);
        let (v0, v1) = (self.values[k], self.values[hi]);
        v0 + (v1 - v0) * (tau - t0) / (t1 - t0)
    }
}

/// A continuous predictive distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ContinuousDist {
    Beta { alpha: f64, beta: f64 },
    Normal { mean: f64, std_dev: f64 },
    Uniform { lo: f64, hi: f64 },
    Grid(QuantileGrid),
}

impl ContinuousDist {
    pub fn validate(&self) -> Vec<DistError> {
        let mut errs = Vec::new();
        match self {
            ContinuousDist::Beta { alpha, beta } => {
                if !alpha.is_finite() || !beta.is_finite() {
                    errs.push(DistError::NonFiniteValue("beta parameters".into()));
                } else if *alpha <= 0.0 || *beta <= 0.0 {
                    errs.push(DistError::BadParameter(format!(
                        "beta requires alpha > 0 and beta > 0, got ({alpha}, {beta})"
                    )));
                }
            }
            ContinuousDist::Normal { mean, std_dev } => {
                if !mean.is_finite() || !std_dev.is_finite() {
                    errs.push(DistError::NonFiniteValue("normal parameters".into()));
                } else if *std_dev <= 0.0 {
                    errs.push(DistError::BadParameter(format!(
                        "normal requires std_dev > 0, got {std_dev}"
                    )));
                }
            }
            ContinuousDist::Uniform { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() {
                    errs.push(DistError::NonFiniteValue("uniform bounds".into()));
                } else if lo >= hi {
                    errs.push(DistError::BadParameter(format!(
                        "uniform requires lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
            ContinuousDist::Grid(g) => {
                // re-run construction checks so hand-built grids can't sneak by
                if let Err(e) = QuantileGrid::new(g.taus.clone(), g.values.clone(), g.support) {
                    errs.push(e);
                }
            }
        }
        errs
    }

    /// The interval carrying all probability mass, when it is bounded.
    /// `None` means unbounded (normal). Grids default to their value range.
    pub fn bounded_support(&self) -> Option<(f64, f64)> {
        match self {
            ContinuousDist::Beta { .. } => Some((0.0, 1.0)),
            ContinuousDist::Uniform { lo, hi } => Some((*lo, *hi)),
            ContinuousDist::Normal { .. } => None,
            ContinuousDist::Grid(g) => g
                .support()
                .or_else(|| Some((g.values[0], *g.values.last().unwrap()))),
        }
    }
}

/// Evaluate the CDF `R(x)`.
pub fn cdf_eval(dist: &ContinuousDist, x: f64) -> f64 {
    match dist {
        ContinuousDist::Beta { alpha, beta } => {
            let d = Beta::new(*alpha, *beta).expect("validated parameters");
            d.cdf(x)
        }
        ContinuousDist::Normal { mean, std_dev } => {
            let d = Normal::new(*mean, *std_dev).expect("validated parameters");
            d.cdf(x)
        }
        ContinuousDist::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
        ContinuousDist::Grid(g) => g.cdf(x),
    }
}

/// Evaluate the quantile function `R^{-1}(tau)` for `tau` in (0, 1).
pub fn quantile_eval(dist: &ContinuousDist, tau: f64) -> Result<f64, DistError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(DistError::TauOutOfRange(tau));
    }
    Ok(match dist {
        ContinuousDist::Beta { alpha, beta } => beta_quantile(*alpha, *beta, tau),
        ContinuousDist::Normal { mean, std_dev } => {
            let d = Normal::new(*mean, *std_dev).expect("validated parameters");
            d.inverse_cdf(tau)
        }
        ContinuousDist::Uniform { lo, hi } => lo + tau * (hi - lo),
        ContinuousDist::Grid(g) => g.quantile(tau),
    })
}

/// statrs' beta inverse is a coarse bisection; polish it with Newton steps
/// on the regularized incomplete beta until machine precision.
fn beta_quantile(alpha: f64, beta: f64, tau: f64) -> f64 {
    let d = Beta::new(alpha, beta).expect("validated parameters");
    let mut x = d.inverse_cdf(tau).clamp(1e-300, 1.0 - 1e-16);
    for _ in 0..8 {
        let f = d.cdf(x) - tau;
        if f == 0.0 {
            break;
        }
        let pdf = d.pdf(x);
        if !pdf.is_finite() || pdf <= 0.0 {
            break;
        }
        let step = f / pdf;
        let next = (x - step).clamp(x / 2.0, (x + 1.0) / 2.0);
        if (next - x).abs() <= f64::EPSILON * x.abs() {
            x = next;
            break;
        }
        x = next;
    }
    x
}

/// Sample the quantile function on the levels of `spec`.
///
/// For a grid input with the same spec this is the identity. Bounded
/// support is propagated so downstream unit-support checks keep working.
pub fn to_quantile_grid(dist: &ContinuousDist, spec: GridSpec) -> Result<QuantileGrid, DistError> {
    if let ContinuousDist::Grid(g) = dist {
        if g.matches_spec(spec) {
            return Ok(g.clone());
        }
    }
    let taus = spec.taus();
    let mut values = Vec::with_capacity(spec.size);
    for &t in &taus {
        values.push(quantile_eval(dist, t)?);
    }
    let support = match dist {
        ContinuousDist::Grid(g) => g.support(),
        ContinuousDist::Normal { .. } => None,
        other => other.bounded_support(),
    };
    QuantileGrid::new(taus, values, support)
}

/// The outcome observed after the event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Binary(bool),
    /// 1-based category index, matching the ordered categories of the task.
    Category(usize),
    Real(f64),
}

impl Outcome {
    pub fn validate(&self, form: &ReportForm) -> Result<(), DistError> {
        match (self, form) {
            (Outcome::Binary(_), ReportForm::Binary) => Ok(()),
            (Outcome::Category(j), ReportForm::Categorical(n)) => {
                if *j >= 1 && *j <= *n {
                    Ok(())
                } else {
                    Err(DistError::BadParameter(format!(
                        "category {j} outside 1..={n}"
                    )))
                }
            }
            (Outcome::Real(x), ReportForm::Continuous) => {
                if x.is_finite() {
                    Ok(())
                } else {
                    Err(DistError::NonFiniteValue("outcome".into()))
                }
            }
            _ => Err(DistError::BadParameter(format!(
                "outcome {self:?} does not match task form {form:?}"
            ))),
        }
    }
}

/// The shape of a forecasting task; all reports in a session share one form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportForm {
    Binary,
    Categorical(usize),
    Continuous,
}

/// A probabilistic forecast in one of the three supported forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PredictiveReport {
    Binary { prob: f64 },
    Categorical { probs: Vec<f64> },
    Continuous(ContinuousDist),
}

impl PredictiveReport {
    pub fn form(&self) -> ReportForm {
        match self {
            PredictiveReport::Binary { .. } => ReportForm::Binary,
            PredictiveReport::Categorical { probs } => ReportForm::Categorical(probs.len()),
            PredictiveReport::Continuous(_) => ReportForm::Continuous,
        }
    }

    /// Collect every violated invariant; never panics on malformed input.
    pub fn validate(&self) -> Vec<DistError> {
        match self {
            PredictiveReport::Binary { prob } => {
                if !prob.is_finite() {
                    vec![DistError::NonFiniteValue("binary probability".into())]
                } else if !(0.0..=1.0).contains(prob) {
                    vec![DistError::ProbabilityOutOfRange(*prob)]
                } else {
                    vec![]
                }
            }
            PredictiveReport::Categorical { probs } => {
                let mut errs = Vec::new();
                if probs.len() < 2 {
                    errs.push(DistError::BadParameter(
                        "categorical forecasts need at least 2 categories".into(),
                    ));
                }
                let mut sum = 0.0;
                let mut finite = true;
                for &p in probs {
                    if !p.is_finite() {
                        finite = false;
                    } else {
                        if !(0.0..=1.0).contains(&p) {
                            errs.push(DistError::ProbabilityOutOfRange(p));
                        }
                        sum += p;
                    }
                }
                if !finite {
                    errs.push(DistError::NonFiniteValue("categorical probability".into()));
                } else if (sum - 1.0).abs() > PROB_SUM_TOL {
                    errs.push(DistError::SumNotOne(sum));
                }
                errs
            }
            PredictiveReport::Continuous(d) => d.validate(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }
}

/// Validate a report, returning all violated invariants.
pub fn validate(report: &PredictiveReport) -> Vec<DistError> {
    report.validate()
}

/// Draw an outcome distributed per `report`: Bernoulli for binary,
/// cumulative scan for categorical, inverse-CDF sampling for continuous.
pub fn sample_outcome<R: Rng + ?Sized>(report: &PredictiveReport, rng: &mut R) -> Outcome {
    match report {
        PredictiveReport::Binary { prob } => Outcome::Binary(rng.gen::<f64>() < *prob),
        PredictiveReport::Categorical { probs } => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return Outcome::Category(i + 1);
                }
            }
            Outcome::Category(probs.len())
        }
        PredictiveReport::Continuous(d) => {
            // EPSILON keeps tau strictly inside (0, 1); the bias is far below
            // Monte Carlo noise at any feasible sample count.
            let u = rng.gen_range(f64::EPSILON..1.0);
            Outcome::Real(quantile_eval(d, u).expect("tau strictly inside (0, 1)"))
        }
    }
}
