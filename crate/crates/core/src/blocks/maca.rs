//! Measurement encoder and measurement-aware cross-attention.
//!
//! Forward attention aggregates pooled image features under measurement
//! queries at low resolution; backward attention spreads that summary to
//! every full-resolution pixel.

use super::layers::{leaky_relu, softmax_rows};
use super::tensor::Tensor3;
use super::weights::{MacaWeights, MebWeights};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Measurement tokens: one per measurement row.
#[derive(Clone, Debug, PartialEq)]
pub struct MebOutput {
    pub q: DenseMatrix,
    pub k: DenseMatrix,
}

pub fn meb_forward(y: &DenseMatrix, w: &MebWeights) -> Result<MebOutput> {
    if y.cols() != w.row_proj.d_in() {
        return Err(Error::ShapeMismatch {
            op: "meb_forward",
            expected: (y.rows(), w.row_proj.d_in()),
            actual: y.shape(),
        });
    }
    let x = Tensor3::from_matrix(y);
    let f = w.conv1.forward(&x)?.map(leaky_relu);
    let f = w.conv2.forward(&f)?.map(leaky_relu);
    let c = f.channels() as f64;
    let pooled = DenseMatrix::from_fn(y.rows(), y.cols(), |i, j| {
        (0..f.channels()).map(|k| f.get(i, j, k)).sum::<f64>() / c
    })?;
    let tokens = w.row_proj.forward(&pooled)?;
    Ok(MebOutput {
        q: w.q_head.forward(&tokens)?,
        k: w.k_head.forward(&tokens)?,
    })
}

/// Score-pair counts of the two attention products.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct AttentionCost {
    pub measurement_tokens: usize,
    pub pooled_tokens: usize,
    pub pixel_tokens: usize,
    /// `N_Y * HW / D^2` query-key pairs in the forward attention.
    pub stage1_pairs: usize,
    /// `HW * N_Y` pairs in the backward attention.
    pub stage2_pairs: usize,
}

#[derive(Clone, Debug)]
pub struct MacaTrace {
    /// `N_Y x HW/D^2`.
    pub forward_map: DenseMatrix,
    /// `HW x N_Y`.
    pub backward_map: DenseMatrix,
    /// Measurement-conditioned summary, `N_Y x N_d`.
    pub v_yd: DenseMatrix,
    /// Propagated features before the output projection, `HW x N_d`.
    pub f_r: DenseMatrix,
    pub cost: AttentionCost,
    pub output: Tensor3,
}

pub fn maca_forward(f_in: &Tensor3, y: &DenseMatrix, d: usize, w: &MacaWeights) -> Result<Tensor3> {
    Ok(maca_traced(f_in, y, d, w)?.output)
}

pub fn maca_traced(f_in: &Tensor3, y: &DenseMatrix, d: usize, w: &MacaWeights) -> Result<MacaTrace> {
    if d == 0 || !f_in.height().is_multiple_of(d) || !f_in.width().is_multiple_of(d) {
        return Err(Error::InvalidParameter(format!(
            "downsample factor {d} must divide {}x{}",
            f_in.height(),
            f_in.width()
        )));
    }
    if w.key.d_in() != f_in.channels() {
        return Err(Error::ShapeMismatch {
            op: "maca_forward",
            expected: (w.key.d_in(), w.key.d_out()),
            actual: (f_in.channels(), w.key.d_out()),
        });
    }
    let meb = meb_forward(y, &w.meb)?;
    let nd = w.key.d_out();
    let scale = 1.0 / (nd as f64).sqrt();

    let pooled = f_in.avg_pool(d)?.to_tokens();
    let k_d = w.key.forward(&pooled)?;
    let v_d = w.value.forward(&pooled)?;
    let forward_map = softmax_rows(&meb.q.matmul_t(&k_d)?.scale(scale));
    let v_yd = forward_map.matmul(&v_d)?;

    let q_h = w.query.forward(&f_in.to_tokens())?;
    let backward_map = softmax_rows(&q_h.matmul_t(&meb.k)?.scale(scale));
    let f_r = backward_map.matmul(&v_yd)?;

    let out = w.out.forward(&f_r)?;
    let output = Tensor3::from_tokens(f_in.height(), f_in.width(), &out)?.add(f_in)?;

    let n_y = y.rows();
    let hw = f_in.height() * f_in.width();
    let cost = AttentionCost {
        measurement_tokens: n_y,
        pooled_tokens: pooled.rows(),
        pixel_tokens: hw,
        stage1_pairs: forward_map.len(),
        stage2_pairs: backward_map.len(),
    };
    Ok(MacaTrace {
        forward_map,
        backward_map,
        v_yd,
        f_r,
        cost,
        output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::weights::{BlockConfig, BlockWeights};
    use crate::rng::Rng;

    fn setup(meas: (usize, usize), seed: u64) -> (BlockWeights, DenseMatrix, Tensor3) {
        let cfg = BlockConfig::new(4, 2, meas, 2).unwrap();
        let mut rng = Rng::new(seed);
        let mut w = BlockWeights::zeros(cfg).unwrap();
        for p in w.params_mut() {
            p.data.iter_mut().for_each(|v| *v = 0.5 * rng.standard_normal());
        }
        let y = DenseMatrix::from_fn(meas.0, meas.1, |_, _| rng.standard_normal()).unwrap();
        let x = Tensor3::from_fn(8, 6, 4, |_, _, _| rng.standard_normal()).unwrap();
        (w, y, x)
    }

    #[test]
    fn meb_shapes_zero_and_determinism() {
        let (w, y, _) = setup((3, 5), 1);
        let out = meb_forward(&y, &w.maca.meb).unwrap();
        assert_eq!(out.q.shape(), (3, 4));
        assert_eq!(out.k.shape(), (3, 4));
        assert_eq!(meb_forward(&y, &w.maca.meb).unwrap(), out);

        let mut zb = w.maca.meb.clone();
        for b in [
            &mut zb.conv1.bias,
            &mut zb.conv2.bias,
            &mut zb.row_proj.bias,
            &mut zb.q_head.bias,
            &mut zb.k_head.bias,
        ] {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
        let zero = meb_forward(&DenseMatrix::zeros(3, 5).unwrap(), &zb).unwrap();
        assert!(zero.q.max_abs() == 0.0 && zero.k.max_abs() == 0.0);

        assert!(meb_forward(&DenseMatrix::zeros(3, 4).unwrap(), &w.maca.meb).is_err());
    }

    #[test]
    fn maca_shapes_and_convexity() {
        for d in [1, 2] {
            let (w, y, x) = setup((3, 5), 2 + d as u64);
            let tr = maca_traced(&x, &y, d, &w.maca).unwrap();
            assert_eq!(tr.output.shape(), x.shape());
            for map in [&tr.forward_map, &tr.backward_map] {
                for i in 0..map.rows() {
                    assert!((map.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-10);
                    assert!(map.row(i).iter().all(|&p| (0.0..=1.0).contains(&p)));
                }
            }
            for j in 0..tr.v_yd.cols() {
                let col = tr.v_yd.column(j);
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                for i in 0..tr.f_r.rows() {
                    assert!(tr.f_r[(i, j)] >= lo - 1e-12 && tr.f_r[(i, j)] <= hi + 1e-12);
                }
            }
            assert_eq!(tr.cost.stage1_pairs, 3 * 48 / (d * d));
            assert_eq!(tr.cost.stage2_pairs, 48 * 3);
        }
    }

    #[test]
    fn single_measurement_token_collapses() {
        let (w, y, x) = setup((1, 5), 7);
        let tr = maca_traced(&x, &y, 2, &w.maca).unwrap();
        for i in 0..tr.f_r.rows() {
            assert_eq!(tr.f_r.row(i), tr.v_yd.row(0));
        }
    }

    #[test]
    fn rejects_bad_downsample() {
        let (w, y, x) = setup((3, 5), 3);
        assert!(maca_forward(&x, &y, 4, &w.maca).is_err());
        assert!(maca_forward(&x, &y, 0, &w.maca).is_err());
    }
}
