//! Compressive sensing with Kronecker (KCS) and asymmetric Kronecker (AKCS)
//! sensing operators.
//!
//! * [`linalg`], [`rng`], [`dct`]: dense matrices, seeded sampling and the
//!   orthonormal 2-D DCT.
//! * [`sensing`], [`blob`]: forward/adjoint operators, their materialized
//!   matrices and on-disk formats.
//! * [`coherence`]: Gram identities, exact and Monte Carlo coherence.
//! * [`ista`]: proximal-gradient reconstruction and single unfolded stages.
//! * [`blocks`]: forward passes of the attention denoiser blocks.
//! * [`metrics`], [`pgm`]: PSNR/SSIM and 8-bit grayscale image I/O.

pub mod blob;
pub mod blocks;
pub mod coherence;
pub mod dct;
pub mod error;
pub mod ista;
pub mod linalg;
pub mod metrics;
pub mod pgm;
pub mod rng;
pub mod sensing;

pub use error::{Error, Result};
pub use linalg::DenseMatrix;
pub use rng::Rng;
pub use sensing::{Measurement, Scheme, SensingOperator};
