//! The CNN-transformer block: a convolutional branch and a channel-attention
//! branch, fused by a 1x1 convolution and followed by a feed-forward branch.

use super::layers::{gelu, leaky_relu, softmax_rows};
use super::tensor::Tensor3;
use super::weights::{ChannelAttentionWeights, CtbWeights, RscaWeights, ScbWeights};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// conv3x3 -> LeakyReLU -> conv3x3.
pub fn scb_forward(f_in: &Tensor3, w: &ScbWeights) -> Result<Tensor3> {
    let hidden = w.conv1.forward(f_in)?.map(leaky_relu);
    w.conv2.forward(&hidden)
}

/// Intermediates of one channel-attention pass.
#[derive(Clone, Debug)]
pub struct ChannelAttentionTrace {
    /// Per head, the `d_h x d_h` softmax map.
    pub maps: Vec<DenseMatrix>,
    /// Value tokens, `HW x C`.
    pub values: DenseMatrix,
    /// Concatenated head outputs before the final projection, `HW x C`.
    pub mixed: DenseMatrix,
    pub output: Tensor3,
}

/// Transposed (channel-by-channel) multi-head attention.
pub fn channel_attention_forward(f_in: &Tensor3, w: &ChannelAttentionWeights) -> Result<Tensor3> {
    Ok(channel_attention_traced(f_in, w)?.output)
}

pub fn channel_attention_traced(f_in: &Tensor3, w: &ChannelAttentionWeights) -> Result<ChannelAttentionTrace> {
    let c = f_in.channels();
    if w.heads == 0 || !c.is_multiple_of(w.heads) {
        return Err(Error::InvalidParameter(format!(
            "channels {c} not divisible by heads {}",
            w.heads
        )));
    }
    if w.wq.d_in() != c {
        return Err(Error::ShapeMismatch {
            op: "channel_attention",
            expected: (c, c),
            actual: w.wq.weight.shape(),
        });
    }
    let tokens = f_in.to_tokens();
    let q = w.wq.forward(&tokens)?;
    let k = w.wk.forward(&tokens)?;
    let v = w.wv.forward(&tokens)?;
    let t = tokens.rows();
    let dh = c / w.heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let slice = |m: &DenseMatrix, head: usize| DenseMatrix::from_fn(t, dh, |r, j| m[(r, head * dh + j)]);

    let mut maps = Vec::with_capacity(w.heads);
    let mut mixed = DenseMatrix::zeros(t, c)?;
    for head in 0..w.heads {
        let (qi, ki, vi) = (slice(&q, head)?, slice(&k, head)?, slice(&v, head)?);
        let map = softmax_rows(&qi.t_matmul(&ki)?.scale(scale));
        let out = vi.matmul_t(&map)?;
        for r in 0..t {
            for j in 0..dh {
                mixed[(r, head * dh + j)] = out[(r, j)];
            }
        }
        maps.push(map);
    }
    let projected = w.proj.forward(&mixed)?;
    let output = Tensor3::from_tokens(f_in.height(), f_in.width(), &projected)?;
    Ok(ChannelAttentionTrace {
        maps,
        values: v,
        mixed,
        output,
    })
}

/// `F + gamma (F - GELU(S(F)))` with `S` the per-pixel channel mean.
pub fn rsca_forward(f_att: &Tensor3, w: &RscaWeights) -> Result<Tensor3> {
    let (h, wd, c) = f_att.shape();
    let mut data = Vec::with_capacity(h * wd * c);
    for pixel in f_att.as_slice().chunks_exact(c) {
        let squeeze = gelu(pixel.iter().sum::<f64>() / c as f64);
        data.extend(pixel.iter().map(|&f| f + w.gamma * (f - squeeze)));
    }
    Tensor3::new(h, wd, c, data)
}

pub fn ctb_forward(f_in: &Tensor3, w: &CtbWeights) -> Result<Tensor3> {
    let spatial = scb_forward(f_in, &w.scb)?;
    let channel = rsca_forward(&channel_attention_forward(f_in, &w.attention)?, &w.rsca)?;
    let fused = w.fuse.forward(&spatial.concat_channels(&channel)?)?.add(f_in)?;
    let hidden = w.ffn_in.forward(&fused)?.map(gelu);
    let ffn = w.ffn_out.forward(&w.ffn_dw.forward(&hidden)?)?;
    fused.add(&ffn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::layers::Conv2d;
    use crate::blocks::weights::{BlockConfig, BlockWeights};
    use crate::rng::Rng;

    fn random_tensor(rng: &mut Rng, h: usize, w: usize, c: usize) -> Tensor3 {
        Tensor3::from_fn(h, w, c, |_, _, _| rng.standard_normal()).unwrap()
    }

    fn randomize(w: &mut BlockWeights, rng: &mut Rng, std: f64) {
        for p in w.params_mut() {
            p.data.iter_mut().for_each(|v| *v = std * rng.standard_normal());
        }
    }

    #[test]
    fn scb_zero_and_identity() {
        let x = Tensor3::from_fn(4, 5, 1, |h, w, _| 1.0 + (h * 5 + w) as f64).unwrap();
        let mut w = ScbWeights {
            conv1: Conv2d::zeros(1, 1, 3),
            conv2: Conv2d::zeros(1, 1, 3),
        };
        assert!(scb_forward(&x, &w).unwrap().as_slice().iter().all(|&v| v == 0.0));
        w.conv1.set_passthrough(0, 0);
        w.conv2.set_passthrough(0, 0);
        assert_eq!(scb_forward(&x, &w).unwrap(), x);
    }

    #[test]
    fn scb_matches_nested_loops() {
        let mut rng = Rng::new(21);
        let mut w = BlockWeights::zeros(BlockConfig::new(3, 1, (2, 2), 1).unwrap()).unwrap();
        randomize(&mut w, &mut rng, 0.5);
        let x = random_tensor(&mut rng, 5, 4, 3);
        // Independent evaluation: explicit per-tap loops, LeakyReLU in between.
        let conv = |conv: &Conv2d, x: &Tensor3| {
            Tensor3::from_fn(x.height(), x.width(), conv.c_out, |y, xx, o| {
                let mut s = conv.bias[o];
                for i in 0..conv.c_in {
                    for dy in 0..3usize {
                        for dx in 0..3usize {
                            let (sy, sx) = (y + dy, xx + dx);
                            if sy >= 1 && sx >= 1 && sy - 1 < x.height() && sx - 1 < x.width() {
                                s += conv.weight[((o * conv.c_in + i) * 3 + dy) * 3 + dx] * x.get(sy - 1, sx - 1, i);
                            }
                        }
                    }
                }
                s
            })
            .unwrap()
        };
        let expected = conv(&w.ctb.scb.conv2, &conv(&w.ctb.scb.conv1, &x).map(leaky_relu));
        assert!(scb_forward(&x, &w.ctb.scb).unwrap().max_abs_diff(&expected) < 1e-10);
    }

    #[test]
    fn uniform_attention_averages_values() {
        let cfg = BlockConfig::new(4, 1, (2, 2), 1).unwrap();
        let mut w = BlockWeights::zeros(cfg).unwrap();
        let att = &mut w.ctb.attention;
        att.wv = crate::blocks::Linear::identity(4);
        att.proj = crate::blocks::Linear::identity(4);
        let mut rng = Rng::new(2);
        for v in att.wk.weight.as_mut_slice() {
            *v = rng.standard_normal();
        }
        let x = random_tensor(&mut rng, 3, 3, 4);
        let y = channel_attention_forward(&x, att).unwrap();
        for h in 0..3 {
            for ww in 0..3 {
                let mean = (0..4).map(|c| x.get(h, ww, c)).sum::<f64>() / 4.0;
                for c in 0..4 {
                    assert!((y.get(h, ww, c) - mean).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn attention_output_is_convex_in_values() {
        let mut rng = Rng::new(33);
        for case in 0..50 {
            let heads = 1 + case % 3;
            let cfg = BlockConfig::new(2 * heads, heads, (2, 2), 1).unwrap();
            let mut w = BlockWeights::zeros(cfg).unwrap();
            randomize(&mut w, &mut rng, 1.0);
            let x = random_tensor(&mut rng, 3, 2, 2 * heads);
            let tr = channel_attention_traced(&x, &w.ctb.attention).unwrap();
            assert_eq!(tr.output.shape(), x.shape());
            let dh = 2;
            for t in 0..6 {
                for head in 0..heads {
                    let vals: Vec<f64> = (0..dh).map(|j| tr.values[(t, head * dh + j)]).collect();
                    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    for j in 0..dh {
                        let o = tr.mixed[(t, head * dh + j)];
                        assert!(o >= lo - 1e-12 && o <= hi + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn heads_must_divide_channels() {
        let cfg = BlockConfig::new(4, 2, (2, 2), 1).unwrap();
        let mut w = BlockWeights::zeros(cfg).unwrap().ctb.attention;
        w.heads = 3;
        let x = Tensor3::zeros(2, 2, 4).unwrap();
        assert!(channel_attention_forward(&x, &w).is_err());
    }

    #[test]
    fn rsca_cases() {
        let mut rng = Rng::new(4);
        let x = random_tensor(&mut rng, 3, 4, 5);
        assert_eq!(rsca_forward(&x, &RscaWeights { gamma: 0.0 }).unwrap(), x);

        let c = 0.7;
        let flat = Tensor3::from_fn(2, 2, 3, |_, _, _| c).unwrap();
        let g = 0.5;
        let y = rsca_forward(&flat, &RscaWeights { gamma: g }).unwrap();
        let expected = c + g * (c - gelu(c));
        assert!(y.as_slice().iter().all(|&v| (v - expected).abs() < 1e-15));

        let y = rsca_forward(&x, &RscaWeights { gamma: 1.0 }).unwrap();
        for h in 0..3 {
            for w in 0..4 {
                let s: f64 = (0..5).map(|k| x.get(h, w, k)).sum::<f64>() / 5.0;
                let phi = 0.5 * s * (1.0 + libm::erf(s / 2f64.sqrt()));
                for k in 0..5 {
                    let f = x.get(h, w, k);
                    assert!((y.get(h, w, k) - (f + (f - phi))).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn ctb_residual_shape_and_determinism() {
        let cfg = BlockConfig::new(4, 2, (2, 2), 1).unwrap();
        let mut rng = Rng::new(8);
        let x = random_tensor(&mut rng, 4, 4, 4);
        let zero = BlockWeights::zeros(cfg).unwrap();
        assert_eq!(ctb_forward(&x, &zero.ctb).unwrap(), x);

        let w = BlockWeights::seeded(cfg, 99, 1.0).unwrap();
        let a = ctb_forward(&x, &w.ctb).unwrap();
        let b = ctb_forward(&x, &BlockWeights::seeded(cfg, 99, 1.0).unwrap().ctb).unwrap();
        assert_eq!(a.shape(), x.shape());
        assert_eq!(a.as_slice(), b.as_slice());
        assert_ne!(a, x);
    }
}
