//! Proximal-gradient (ISTA) reconstruction and single unfolded stages.
//!
//! Each stage takes a gradient step on `f(X) = 1/2 ||Y - A(X)||_F^2`,
//!
//! ```text
//! U = X + rho * A^T(Y - A(X))
//! ```
//!
//! and then denoises `U`. With the DCT soft-threshold denoiser at threshold
//! `rho * lambda` this is exactly ISTA for
//! `1/2 ||Y - A(X)||_F^2 + lambda ||dct2(X)||_1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::blocks::{toy_denoiser_stage, BlockConfig, BlockWeights};
use crate::dct::DctPlan;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::Rng;
use crate::sensing::{Measurement, SensingOperator};

/// Window and growth factor of the divergence detector.
pub const DIVERGENCE_WINDOW: usize = 10;
pub const DIVERGENCE_GROWTH: f64 = 10.0;
pub const DEFAULT_POWER_ITERATIONS: usize = 200;
const POWER_TOL: f64 = 1e-13;

/// `rho`: a fixed positive step or `auto` (= 1/L from power iteration).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize {
    Auto,
    Fixed(f64),
}

impl FromStr for StepSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(StepSize::Auto);
        }
        s.parse::<f64>()
            .map(StepSize::Fixed)
            .map_err(|_| Error::InvalidParameter(format!("step size must be a number or 'auto', got '{s}'")))
    }
}

impl fmt::Display for StepSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSize::Auto => f.write_str("auto"),
            StepSize::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for StepSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            StepSize::Auto => s.serialize_str("auto"),
            StepSize::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for StepSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(StepSize::Fixed(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Denoiser selection as it appears in configs and manifests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DenoiserKind {
    Identity,
    DctSoftThreshold,
    /// Seeded, untrained attention blocks.
    ToyBlocks {
        seed: u64,
        channels: usize,
        heads: usize,
        downsample: usize,
        scale: f64,
    },
}

impl DenoiserKind {
    pub fn toy(seed: u64) -> Self {
        DenoiserKind::ToyBlocks {
            seed,
            channels: 4,
            heads: 2,
            downsample: 2,
            scale: 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DenoiserKind::Identity => "identity",
            DenoiserKind::DctSoftThreshold => "dct",
            DenoiserKind::ToyBlocks { .. } => "toy",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconConfig {
    pub iterations: usize,
    pub step: StepSize,
    pub lambda: f64,
    pub denoiser: DenoiserKind,
    /// Stop once `||X_k - X_{k-1}|| / ||X_{k-1}||` drops below this; 0 runs
    /// all iterations.
    pub tolerance: f64,
    /// Keep every iterate in the trace.
    pub record_trace: bool,
    pub power_iterations: usize,
    /// Seed of the power-iteration start vector.
    pub seed: u64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            step: StepSize::Auto,
            lambda: 1e-3,
            denoiser: DenoiserKind::DctSoftThreshold,
            tolerance: 0.0,
            record_trace: false,
            power_iterations: DEFAULT_POWER_ITERATIONS,
            seed: 0,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be at least 1".into()));
        }
        if let StepSize::Fixed(rho) = self.step {
            if !(rho.is_finite() && rho > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "explicit step size must be > 0, got {rho}"
                )));
            }
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.tolerance.is_finite() && self.tolerance >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be >= 0, got {}",
                self.tolerance
            )));
        }
        if self.power_iterations == 0 {
            return Err(Error::InvalidParameter("power_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Largest eigenvalue of `X -> A^T A X`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub value: f64,
    pub iterations: usize,
    /// False when the iteration budget ran out before the estimate settled;
    /// `value` is then the best estimate so far.
    pub converged: bool,
}

#[derive(Clone, Debug, Default)]
pub struct ReconTrace {
    /// `1/2 ||Y - A(X_k)||^2 + lambda ||dct2(X_k)||_1` per iteration.
    pub objective: Vec<f64>,
    pub data_fidelity: Vec<f64>,
    pub relative_change: Vec<f64>,
    /// Iterates, only when `record_trace` is set.
    pub snapshots: Vec<DenseMatrix>,
    pub step: f64,
    pub lipschitz: Option<LipschitzEstimate>,
    pub converged: bool,
}

impl ReconTrace {
    pub fn iterations(&self) -> usize {
        self.objective.len()
    }

    /// CSV with one row per iteration.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,objective,data_fidelity,relative_change\n");
        for k in 0..self.objective.len() {
            out.push_str(&format!(
                "{},{:e},{:e},{:e}\n",
                k + 1,
                self.objective[k],
                self.data_fidelity[k],
                self.relative_change[k]
            ));
        }
        out
    }
}

/// A ready-to-run denoiser.
#[derive(Clone, Debug)]
pub enum Denoiser {
    Identity,
    DctSoftThreshold {
        plan: DctPlan,
        threshold: f64,
    },
    ToyBlocks {
        weights: Box<BlockWeights>,
        downsample: usize,
    },
}

impl Denoiser {
    /// Instantiates `kind` for `op`; the DCT threshold is `rho * lambda`.
    pub fn build(kind: &DenoiserKind, op: &SensingOperator, rho: f64, lambda: f64) -> Result<Self> {
        let (h, w) = op.image_shape();
        Ok(match *kind {
            DenoiserKind::Identity => Denoiser::Identity,
            DenoiserKind::DctSoftThreshold => Denoiser::DctSoftThreshold {
                plan: DctPlan::new(h, w)?,
                threshold: check_threshold(rho * lambda)?,
            },
            DenoiserKind::ToyBlocks {
                seed,
                channels,
                heads,
                downsample,
                scale,
            } => {
                let cfg = BlockConfig::new(channels, heads, op.measurement_shape(), downsample)?;
                if h % downsample != 0 || w % downsample != 0 {
                    return Err(Error::InvalidParameter(format!(
                        "downsample factor {downsample} must divide {h}x{w}"
                    )));
                }
                Denoiser::ToyBlocks {
                    weights: Box::new(BlockWeights::seeded(cfg, seed, scale)?),
                    downsample,
                }
            }
        })
    }

    pub fn apply(&self, u: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            Denoiser::Identity => Ok(u.clone()),
            Denoiser::DctSoftThreshold { plan, threshold } => prox_dct_l1_with(plan, u, *threshold),
            Denoiser::ToyBlocks { weights, downsample } => toy_denoiser_stage(u, y, weights, *downsample),
        }
    }
}

fn check_threshold(t: f64) -> Result<f64> {
    if t.is_finite() && t >= 0.0 {
        Ok(t)
    } else {
        Err(Error::InvalidParameter(format!("threshold must be >= 0, got {t}")))
    }
}

fn check_measurement(op: &SensingOperator, y: &Measurement) -> Result<()> {
    if y.shape() != op.measurement_shape() {
        return Err(Error::ShapeMismatch {
            op: "measurement",
            expected: op.measurement_shape(),
            actual: y.shape(),
        });
    }
    Ok(())
}

/// `U = X + rho * A^T(Y - A(X))`.
pub fn gradient_step(op: &SensingOperator, x: &DenseMatrix, y: &Measurement, rho: f64) -> Result<DenseMatrix> {
    check_measurement(op, y)?;
    let residual = y.values().sub(&op.apply(x)?)?;
    let u = x.axpy(rho, &op.adjoint(&residual)?)?;
    if !u.is_finite() {
        return Err(Error::NonFinite {
            context: "gradient step",
        });
    }
    Ok(u)
}

/// `1/2 ||Y - A(X)||_F^2`.
pub fn data_fidelity(op: &SensingOperator, x: &DenseMatrix, y: &Measurement) -> Result<f64> {
    check_measurement(op, y)?;
    let r = y.values().sub(&op.apply(x)?)?.frobenius_norm();
    Ok(0.5 * r * r)
}

/// Data fidelity plus `lambda ||dct2(X)||_1`.
pub fn objective(op: &SensingOperator, x: &DenseMatrix, y: &Measurement, lambda: f64) -> Result<f64> {
    let (h, w) = op.image_shape();
    objective_with(&DctPlan::new(h, w)?, op, x, y, lambda).map(|(obj, _)| obj)
}

fn objective_with(
    plan: &DctPlan,
    op: &SensingOperator,
    x: &DenseMatrix,
    y: &Measurement,
    lambda: f64,
) -> Result<(f64, f64)> {
    let fid = data_fidelity(op, x, y)?;
    let l1 = if lambda == 0.0 {
        0.0
    } else {
        plan.forward(x)?.as_slice().iter().map(|v| v.abs()).sum::<f64>()
    };
    Ok((fid + lambda * l1, fid))
}

/// Power iteration for the largest eigenvalue of `A^T A`, started from a
/// Gaussian matrix drawn from `rng`.
pub fn lipschitz_estimate(op: &SensingOperator, iterations: usize, rng: &mut Rng) -> Result<LipschitzEstimate> {
    if iterations == 0 {
        return Err(Error::InvalidParameter("power iteration needs at least 1 step".into()));
    }
    let (h, w) = op.image_shape();
    let mut v = DenseMatrix::from_fn(h, w, |_, _| rng.standard_normal())?;
    v = v.scale(1.0 / v.frobenius_norm());
    let mut value = 0.0;
    for k in 1..=iterations {
        let av = op.adjoint(&op.apply(&v)?)?;
        // Rayleigh quotient; v has unit norm.
        let next = v.inner(&av)?;
        let norm = av.frobenius_norm();
        if norm == 0.0 {
            return Ok(LipschitzEstimate {
                value: 0.0,
                iterations: k,
                converged: true,
            });
        }
        let settled = k > 1 && (next - value).abs() <= POWER_TOL * next.abs();
        value = next;
        if settled {
            return Ok(LipschitzEstimate {
                value,
                iterations: k,
                converged: true,
            });
        }
        v = av.scale(1.0 / norm);
    }
    Ok(LipschitzEstimate {
        value,
        iterations,
        converged: false,
    })
}

/// `sign(v) max(|v| - t, 0)`.
pub fn soft_threshold(v: f64, t: f64) -> Result<f64> {
    Ok(shrink(v, check_threshold(t)?))
}

#[inline]
fn shrink(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub fn soft_threshold_matrix(m: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    let t = check_threshold(t)?;
    Ok(m.map(|v| shrink(v, t)))
}

/// Proximal map of `t ||dct2(.)||_1`: soft-thresholding in the orthonormal
/// DCT domain.
pub fn prox_dct_l1(u: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    prox_dct_l1_with(&DctPlan::new(u.rows(), u.cols())?, u, t)
}

pub fn prox_dct_l1_with(plan: &DctPlan, u: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    let coeffs = soft_threshold_matrix(&plan.forward(u)?, t)?;
    plan.inverse(&coeffs)
}

/// One stage: gradient step then `denoiser`.
pub fn unfolded_stage(
    op: &SensingOperator,
    y: &Measurement,
    x_prev: &DenseMatrix,
    rho: f64,
    denoiser: &Denoiser,
) -> Result<DenseMatrix> {
    let u = gradient_step(op, x_prev, y, rho)?;
    denoiser.apply(&u, y.values())
}

/// Resolves `cfg.step`, estimating the Lipschitz constant when needed.
pub fn resolve_step(op: &SensingOperator, cfg: &ReconConfig) -> Result<(f64, Option<LipschitzEstimate>)> {
    match cfg.step {
        StepSize::Fixed(rho) => Ok((rho, None)),
        StepSize::Auto => {
            let mut rng = Rng::for_task(cfg.seed, &[4]);
            let est = lipschitz_estimate(op, cfg.power_iterations, &mut rng)?;
            if est.value.is_nan() || est.value <= 0.0 {
                return Err(Error::InvalidParameter(
                    "operator is zero; cannot pick a step size".into(),
                ));
            }
            Ok((1.0 / est.value, Some(est)))
        }
    }
}

/// ISTA from the back-projection `X_0 = A^T(Y)`.
pub fn ista_reconstruct(op: &SensingOperator, y: &Measurement, cfg: &ReconConfig) -> Result<(DenseMatrix, ReconTrace)> {
    check_measurement(op, y)?;
    let x0 = op.adjoint(y.values())?;
    ista_from(op, y, x0, cfg)
}

/// ISTA from an explicit starting point.
pub fn ista_from(
    op: &SensingOperator,
    y: &Measurement,
    x0: DenseMatrix,
    cfg: &ReconConfig,
) -> Result<(DenseMatrix, ReconTrace)> {
    cfg.validate()?;
    check_measurement(op, y)?;
    if x0.shape() != op.image_shape() {
        return Err(Error::ShapeMismatch {
            op: "ista initial iterate",
            expected: op.image_shape(),
            actual: x0.shape(),
        });
    }
    let (rho, lipschitz) = resolve_step(op, cfg)?;
    let denoiser = Denoiser::build(&cfg.denoiser, op, rho, cfg.lambda)?;
    let (h, w) = op.image_shape();
    let plan = DctPlan::new(h, w)?;

    let mut trace = ReconTrace {
        step: rho,
        lipschitz,
        ..ReconTrace::default()
    };
    let mut x = x0;
    for k in 1..=cfg.iterations {
        let next = unfolded_stage(op, y, &x, rho, &denoiser)?;
        let change = next.sub(&x)?.frobenius_norm() / x.frobenius_norm().max(1e-12);
        let (obj, fid) = objective_with(&plan, op, &next, y, cfg.lambda)?;
        trace.objective.push(obj);
        trace.data_fidelity.push(fid);
        trace.relative_change.push(change);
        if cfg.record_trace {
            trace.snapshots.push(next.clone());
        }
        x = next;
        if diverging(&trace.objective) {
            return Err(Error::Divergence {
                iteration: k,
                trace: Box::new(trace),
            });
        }
        if change < cfg.tolerance {
            trace.converged = true;
            break;
        }
    }
    Ok((x, trace))
}

/// True when the objective rose at every one of the last
/// `DIVERGENCE_WINDOW` steps and grew more than `DIVERGENCE_GROWTH`-fold
/// over them.
fn diverging(objective: &[f64]) -> bool {
    let n = objective.len();
    if n <= DIVERGENCE_WINDOW {
        return false;
    }
    let window = &objective[n - DIVERGENCE_WINDOW - 1..];
    let rising = window.windows(2).all(|p| p[1] > p[0]);
    rising && window[DIVERGENCE_WINDOW] > DIVERGENCE_GROWTH * window[0]
}
