//! Invariant audit over one seeded configuration, reported as named
//! pass/fail items.

use serde::{Deserialize, Serialize};

use super::ctb::{channel_attention_traced, ctb_forward, rsca_forward, scb_forward};
use super::maca::{maca_traced, meb_forward};
use super::stage::toy_denoiser_stage;
use super::tensor::Tensor3;
use super::weights::{BlockConfig, BlockWeights, RscaWeights};
use crate::error::Result;
use crate::linalg::DenseMatrix;
use crate::rng::Rng;

const SUM_TOL: f64 = 1e-10;
const HULL_TOL: f64 = 1e-12;
/// Weight scales audited: the default init and a much sharper one so the
/// softmax maps are far from uniform.
const SCALES: [f64; 2] = [1.0, 25.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckDims {
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "C")]
    pub channels: usize,
    #[serde(rename = "D")]
    pub downsample: usize,
    pub heads: usize,
}

impl Default for CheckDims {
    fn default() -> Self {
        Self {
            height: 16,
            width: 16,
            channels: 8,
            downsample: 2,
            heads: 2,
        }
    }
}

impl CheckDims {
    pub fn measurement_shape(&self) -> (usize, usize) {
        ((self.height / 2).max(1), (self.width / 2).max(1))
    }

    pub fn config(&self) -> Result<BlockConfig> {
        BlockConfig::new(self.channels, self.heads, self.measurement_shape(), self.downsample)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub seed: u64,
    pub dims: CheckDims,
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

impl CheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

struct Audit(Vec<CheckOutcome>);

impl Audit {
    fn record(&mut self, name: &str, passed: bool, detail: String) {
        self.0.push(CheckOutcome {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

/// Worst deviation of any row sum from 1, and whether all entries lie in [0, 1].
fn softmax_health(map: &DenseMatrix) -> (f64, bool) {
    let dev = (0..map.rows())
        .map(|i| (map.row(i).iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    (dev, map.as_slice().iter().all(|p| (0.0..=1.0).contains(p)))
}

/// Largest excursion of `out[i, j]` outside `[min, max]` of the candidate
/// values `vals(i, j)`.
fn hull_excursion(out: &DenseMatrix, vals: impl Fn(usize, usize) -> Vec<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..out.rows() {
        for j in 0..out.cols() {
            let v = vals(i, j);
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let o = out[(i, j)];
            worst = worst.max(lo - o).max(o - hi);
        }
    }
    worst
}

fn outputs(w: &BlockWeights, x: &Tensor3, u: &DenseMatrix, y: &DenseMatrix, d: usize) -> Result<Vec<Vec<f64>>> {
    Ok(vec![
        scb_forward(x, &w.ctb.scb)?.as_slice().to_vec(),
        channel_attention_traced(x, &w.ctb.attention)?
            .output
            .as_slice()
            .to_vec(),
        rsca_forward(x, &w.ctb.rsca)?.as_slice().to_vec(),
        ctb_forward(x, &w.ctb)?.as_slice().to_vec(),
        meb_forward(y, &w.maca.meb)?.q.as_slice().to_vec(),
        maca_traced(x, y, d, &w.maca)?.output.as_slice().to_vec(),
        toy_denoiser_stage(u, y, w, d)?.as_slice().to_vec(),
    ])
}

pub fn run_checks(seed: u64, dims: CheckDims) -> Result<CheckReport> {
    let cfg = dims.config()?;
    let (h, wd, c, d) = (dims.height, dims.width, dims.channels, dims.downsample);
    let mut rng = Rng::for_task(seed, &[9]);
    let x = Tensor3::from_fn(h, wd, c, |_, _, _| rng.standard_normal())?;
    let (mh, mw) = cfg.measurement_shape;
    let y = DenseMatrix::from_fn(mh, mw, |_, _| rng.standard_normal())?;
    let u = DenseMatrix::from_fn(h, wd, |_, _| rng.standard_normal())?;
    let mut audit = Audit(Vec::new());

    let mut sum_dev: f64 = 0.0;
    let mut in_unit = true;
    let mut ca_hull: f64 = 0.0;
    let mut maca_hull: f64 = 0.0;
    for scale in SCALES {
        let w = BlockWeights::seeded(cfg, seed, scale)?;
        let ca = channel_attention_traced(&x, &w.ctb.attention)?;
        let mt = maca_traced(&x, &y, d, &w.maca)?;
        for map in ca.maps.iter().chain([&mt.forward_map, &mt.backward_map]) {
            let (dev, unit) = softmax_health(map);
            sum_dev = sum_dev.max(dev);
            in_unit &= unit;
        }
        let dh = cfg.head_dim();
        ca_hull = ca_hull.max(hull_excursion(&ca.mixed, |t, j| {
            let head = j / dh;
            (0..dh).map(|k| ca.values[(t, head * dh + k)]).collect()
        }));
        maca_hull = maca_hull.max(hull_excursion(&mt.f_r, |_, j| mt.v_yd.column(j)));
    }
    audit.record(
        "softmax_rows_sum_to_one",
        sum_dev <= SUM_TOL && in_unit,
        format!("max |row sum - 1| = {sum_dev:.3e}, entries in [0,1]: {in_unit}"),
    );
    audit.record(
        "channel_attention_within_value_bounds",
        ca_hull <= HULL_TOL,
        format!("max excursion = {ca_hull:.3e}"),
    );
    audit.record(
        "maca_within_value_bounds",
        maca_hull <= HULL_TOL,
        format!("max excursion = {maca_hull:.3e}"),
    );

    let rsca_zero = rsca_forward(&x, &RscaWeights { gamma: 0.0 })?;
    audit.record(
        "rsca_gamma_zero_identity",
        rsca_zero == x,
        format!("max diff = {:.3e}", rsca_zero.max_abs_diff(&x)),
    );

    let w = BlockWeights::seeded(cfg, seed, 1.0)?;
    let shapes = [
        ("scb", scb_forward(&x, &w.ctb.scb)?.shape()),
        (
            "channel_attention",
            channel_attention_traced(&x, &w.ctb.attention)?.output.shape(),
        ),
        ("rsca", rsca_forward(&x, &w.ctb.rsca)?.shape()),
        ("ctb", ctb_forward(&x, &w.ctb)?.shape()),
        ("maca", maca_traced(&x, &y, d, &w.maca)?.output.shape()),
    ];
    let bad: Vec<_> = shapes
        .iter()
        .filter(|(_, s)| *s != x.shape())
        .map(|(n, s)| format!("{n}:{s:?}"))
        .collect();
    let stage_shape = toy_denoiser_stage(&u, &y, &w, d)?.shape();
    let meb = meb_forward(&y, &w.maca.meb)?;
    let tokens_ok = meb.q.shape() == (mh, cfg.token_dim) && meb.k.shape() == (mh, cfg.token_dim);
    audit.record(
        "shape_preservation",
        bad.is_empty() && stage_shape == (h, wd) && tokens_ok,
        if bad.is_empty() {
            format!(
                "all blocks map {h}x{wd}x{c} to itself; stage {stage_shape:?}; meb tokens {:?}",
                meb.q.shape()
            )
        } else {
            format!("mismatched: {}", bad.join(","))
        },
    );

    let first = outputs(&w, &x, &u, &y, d)?;
    let again = outputs(&BlockWeights::seeded(cfg, seed, 1.0)?, &x, &u, &y, d)?;
    let identical = first
        .iter()
        .zip(&again)
        .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(p, q)| p.to_bits() == q.to_bits()));
    audit.record(
        "deterministic_forward",
        identical,
        format!("{} block outputs compared bitwise", first.len()),
    );

    // Stage-1 pairs must shrink by exactly D^2 relative to full resolution.
    let full = maca_traced(&x, &y, 1, &w.maca)?.cost;
    let pooled = maca_traced(&x, &y, d, &w.maca)?.cost;
    let expected = mh * (h * wd) / (d * d);
    let cost_ok = pooled.stage1_pairs == expected
        && full.stage1_pairs == mh * h * wd
        && pooled.stage1_pairs * d * d == full.stage1_pairs
        && pooled.stage2_pairs == h * wd * mh;
    audit.record(
        "maca_cost_scaling",
        cost_ok,
        format!(
            "stage1 pairs {} at D={d} vs {} at D=1 (expected N_Y*HW/D^2 = {expected}); stage2 pairs {}",
            pooled.stage1_pairs, full.stage1_pairs, pooled.stage2_pairs
        ),
    );

    let passed = audit.0.iter().all(|c| c.passed);
    Ok(CheckReport {
        seed,
        dims,
        passed,
        checks: audit.0,
    })
}
