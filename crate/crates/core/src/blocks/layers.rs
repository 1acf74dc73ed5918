//! Convolution and linear layers with zero "same" padding, plus the
//! activations and softmax used by the blocks.

use super::tensor::Tensor3;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

pub const LEAKY_RELU_SLOPE: f64 = 0.01;

#[inline]
pub fn leaky_relu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        LEAKY_RELU_SLOPE * x
    }
}

/// Exact (erf-based) GELU.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax_rows(m: &DenseMatrix) -> DenseMatrix {
    let mut out = m.clone();
    let cols = m.cols();
    for row in out.as_mut_slice().chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// A named, shaped view of one parameter array, used for seeding and for
/// dumping/loading weights.
pub struct ParamMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

/// Dense 2-D convolution, kernel `k x k` with odd `k`.
///
/// Weight layout is `[c_out][c_in][k][k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn zeros(c_in: usize, c_out: usize, kernel: usize) -> Self {
        assert!(kernel % 2 == 1, "kernel size must be odd");
        Self {
            c_in,
            c_out,
            kernel,
            weight: vec![0.0; c_out * c_in * kernel * kernel],
            bias: vec![0.0; c_out],
        }
    }

    #[inline]
    pub fn weight_index(&self, o: usize, i: usize, dy: usize, dx: usize) -> usize {
        ((o * self.c_in + i) * self.kernel + dy) * self.kernel + dx
    }

    /// Sets the kernel to pass input channel `from` through to output
    /// channel `to` (centre tap 1).
    pub fn set_passthrough(&mut self, from: usize, to: usize) {
        let c = self.kernel / 2;
        let idx = self.weight_index(to, from, c, c);
        self.weight[idx] = 1.0;
    }

    pub fn forward(&self, x: &Tensor3) -> Result<Tensor3> {
        if x.channels() != self.c_in {
            return Err(Error::InvalidParameter(format!(
                "conv expects {} input channels, got {}",
                self.c_in,
                x.channels()
            )));
        }
        let (h, w) = (x.height(), x.width());
        let half = (self.kernel / 2) as isize;
        let mut out = vec![0.0; h * w * self.c_out];
        for y in 0..h {
            for xx in 0..w {
                let dst = &mut out[(y * w + xx) * self.c_out..(y * w + xx + 1) * self.c_out];
                dst.copy_from_slice(&self.bias);
                for dy in 0..self.kernel {
                    let sy = y as isize + dy as isize - half;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for dx in 0..self.kernel {
                        let sx = xx as isize + dx as isize - half;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let src = (sy as usize * w + sx as usize) * self.c_in;
                        let pixel = &x.as_slice()[src..src + self.c_in];
                        for (o, d) in dst.iter_mut().enumerate() {
                            let mut acc = 0.0;
                            for (i, &v) in pixel.iter().enumerate() {
                                acc += self.weight[self.weight_index(o, i, dy, dx)] * v;
                            }
                            *d += acc;
                        }
                    }
                }
            }
        }
        Tensor3::new(h, w, self.c_out, out)
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        out.push(ParamMut {
            name: format!("{prefix}.weight"),
            shape: vec![self.c_out, self.c_in, self.kernel, self.kernel],
            data: &mut self.weight,
        });
        out.push(ParamMut {
            name: format!("{prefix}.bias"),
            shape: vec![self.c_out],
            data: &mut self.bias,
        });
    }
}

/// Depthwise 3x3 convolution; weight layout `[c][3][3]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthwiseConv2d {
    pub channels: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DepthwiseConv2d {
    pub fn zeros(channels: usize) -> Self {
        Self {
            channels,
            weight: vec![0.0; channels * 9],
            bias: vec![0.0; channels],
        }
    }

    pub fn forward(&self, x: &Tensor3) -> Result<Tensor3> {
        if x.channels() != self.channels {
            return Err(Error::InvalidParameter(format!(
                "depthwise conv expects {} channels, got {}",
                self.channels,
                x.channels()
            )));
        }
        let (h, w, c) = x.shape();
        Tensor3::from_fn(h, w, c, |y, xx, ch| {
            let mut acc = self.bias[ch];
            for dy in 0..3 {
                let sy = y as isize + dy as isize - 1;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for dx in 0..3 {
                    let sx = xx as isize + dx as isize - 1;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    acc += self.weight[ch * 9 + dy * 3 + dx] * x.get(sy as usize, sx as usize, ch);
                }
            }
            acc
        })
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        out.push(ParamMut {
            name: format!("{prefix}.weight"),
            shape: vec![self.channels, 3, 3],
            data: &mut self.weight,
        });
        out.push(ParamMut {
            name: format!("{prefix}.bias"),
            shape: vec![self.channels],
            data: &mut self.bias,
        });
    }
}

/// Token-wise linear map `X W + b` with `W` of shape `d_in x d_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weight: DenseMatrix::zeros(d_in, d_out).expect("positive linear dims"),
            bias: vec![0.0; d_out],
        }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            weight: DenseMatrix::identity(d).expect("positive linear dims"),
            bias: vec![0.0; d],
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, tokens: &DenseMatrix) -> Result<DenseMatrix> {
        let mut out = tokens.matmul(&self.weight)?;
        let cols = out.cols();
        for row in out.as_mut_slice().chunks_exact_mut(cols) {
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(out)
    }

    pub fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamMut<'a>>) {
        let shape = vec![self.weight.rows(), self.weight.cols()];
        out.push(ParamMut {
            name: format!("{prefix}.weight"),
            shape,
            data: self.weight.as_mut_slice(),
        });
        out.push(ParamMut {
            name: format!("{prefix}.bias"),
            shape: vec![self.bias.len()],
            data: &mut self.bias,
        });
    }
}
