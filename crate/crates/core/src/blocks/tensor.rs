use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// An `H x W x C` feature map stored in `(h, w, c)` order, so the flat data
/// is also the row-major `HW x C` token matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidParameter(format!(
                "tensor dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidParameter(format!(
                "tensor data has {} entries, expected {}",
                data.len(),
                height * width * channels
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "tensor" });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(height, width, channels, vec![0.0; height * width * channels])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for h in 0..height {
            for w in 0..width {
                for c in 0..channels {
                    data.push(f(h, w, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    /// Lifts a matrix to a single-channel tensor.
    pub fn from_matrix(m: &DenseMatrix) -> Self {
        Self {
            height: m.rows(),
            width: m.cols(),
            channels: 1,
            data: m.as_slice().to_vec(),
        }
    }

    /// Reshapes an `HW x C` token matrix.
    pub fn from_tokens(height: usize, width: usize, tokens: &DenseMatrix) -> Result<Self> {
        if tokens.rows() != height * width {
            return Err(Error::ShapeMismatch {
                op: "from_tokens",
                expected: (height * width, tokens.cols()),
                actual: tokens.shape(),
            });
        }
        Self::new(height, width, tokens.cols(), tokens.as_slice().to_vec())
    }

    /// The `HW x C` token matrix.
    pub fn to_tokens(&self) -> DenseMatrix {
        DenseMatrix::from_parts_unchecked(self.height * self.width, self.channels, self.data.clone())
    }

    /// Channel `c` as an `H x W` matrix.
    pub fn channel(&self, c: usize) -> DenseMatrix {
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        DenseMatrix::from_parts_unchecked(self.height, self.width, data)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn get(&self, h: usize, w: usize, c: usize) -> f64 {
        self.data[(h * self.width + w) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, h: usize, w: usize, c: usize, v: f64) {
        self.data[(h * self.width + w) * self.channels + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor3 {
        Tensor3 {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn add(&self, rhs: &Tensor3) -> Result<Tensor3> {
        if self.shape() != rhs.shape() {
            return Err(Error::InvalidParameter(format!(
                "tensor shapes differ: {:?} vs {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        Ok(Tensor3 {
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
            ..*self
        })
    }

    /// Stacks `self` and `rhs` along the channel axis.
    pub fn concat_channels(&self, rhs: &Tensor3) -> Result<Tensor3> {
        if (self.height, self.width) != (rhs.height, rhs.width) {
            return Err(Error::InvalidParameter(format!(
                "cannot concatenate {:?} with {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        let channels = self.channels + rhs.channels;
        let mut data = Vec::with_capacity(self.height * self.width * channels);
        for (a, b) in self
            .data
            .chunks_exact(self.channels)
            .zip(rhs.data.chunks_exact(rhs.channels))
        {
            data.extend_from_slice(a);
            data.extend_from_slice(b);
        }
        Ok(Tensor3 {
            height: self.height,
            width: self.width,
            channels,
            data,
        })
    }

    /// Non-overlapping `factor x factor` average pooling.
    pub fn avg_pool(&self, factor: usize) -> Result<Tensor3> {
        if factor == 0 || !self.height.is_multiple_of(factor) || !self.width.is_multiple_of(factor) {
            return Err(Error::InvalidParameter(format!(
                "pooling factor {factor} must divide {}x{}",
                self.height, self.width
            )));
        }
        let (ph, pw) = (self.height / factor, self.width / factor);
        let inv = 1.0 / (factor * factor) as f64;
        let mut out = vec![0.0; ph * pw * self.channels];
        for h in 0..self.height {
            for w in 0..self.width {
                let dst = ((h / factor) * pw + w / factor) * self.channels;
                let src = (h * self.width + w) * self.channels;
                for c in 0..self.channels {
                    out[dst + c] += self.data[src + c] * inv;
                }
            }
        }
        Tensor3::new(ph, pw, self.channels, out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, rhs: &Tensor3) -> f64 {
        assert_eq!(self.shape(), rhs.shape(), "max_abs_diff on mismatched tensors");
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_round_trip_and_layout() {
        let t = Tensor3::from_fn(2, 3, 4, |h, w, c| (100 * h + 10 * w + c) as f64).unwrap();
        let tok = t.to_tokens();
        assert_eq!(tok.shape(), (6, 4));
        assert_eq!(tok[(4, 2)], 112.0);
        assert_eq!(Tensor3::from_tokens(2, 3, &tok).unwrap(), t);
        assert_eq!(t.channel(3)[(1, 2)], 123.0);
    }

    #[test]
    fn pooling_and_concat() {
        let t = Tensor3::from_fn(4, 4, 1, |h, w, _| (h * 4 + w) as f64).unwrap();
        let p = t.avg_pool(2).unwrap();
        assert_eq!(p.shape(), (2, 2, 1));
        assert_eq!(p.get(0, 0, 0), (0.0 + 1.0 + 4.0 + 5.0) / 4.0);
        assert!(t.avg_pool(3).is_err());

        let c = t.concat_channels(&t.map(|v| -v)).unwrap();
        assert_eq!(c.shape(), (4, 4, 2));
        assert_eq!(c.get(1, 2, 1), -6.0);
    }
}
