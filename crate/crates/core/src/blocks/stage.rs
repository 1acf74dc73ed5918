use super::ctb::ctb_forward;
use super::maca::maca_forward;
use super::tensor::Tensor3;
use super::weights::BlockWeights;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// One toy denoiser stage: lift `1 -> C` with a 3x3 conv, CTB, MACA
/// conditioned on the measurement `y`, then project `C -> 1` with a 3x3 conv.
pub fn toy_denoiser_stage(u: &DenseMatrix, y: &DenseMatrix, w: &BlockWeights, d: usize) -> Result<DenseMatrix> {
    if y.shape() != w.config.measurement_shape {
        return Err(Error::ShapeMismatch {
            op: "toy_denoiser_stage",
            expected: w.config.measurement_shape,
            actual: y.shape(),
        });
    }
    let f = w.lift.forward(&Tensor3::from_matrix(u))?;
    let f = ctb_forward(&f, &w.ctb)?;
    let f = maca_forward(&f, y, d, &w.maca)?;
    let out = w.project.forward(&f)?;
    Ok(out.channel(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::weights::BlockConfig;
    use crate::rng::Rng;

    fn inputs(seed: u64) -> (DenseMatrix, DenseMatrix) {
        let mut rng = Rng::new(seed);
        let u = DenseMatrix::from_fn(8, 8, |_, _| rng.standard_normal()).unwrap();
        let y = DenseMatrix::from_fn(4, 4, |_, _| rng.standard_normal()).unwrap();
        (u.scale(1.0 / u.frobenius_norm()), y)
    }

    #[test]
    fn residual_path_audit() {
        let cfg = BlockConfig::new(4, 2, (4, 4), 2).unwrap();
        let (u, y) = inputs(1);
        let zero = BlockWeights::zeros(cfg).unwrap();
        assert_eq!(toy_denoiser_stage(&u, &y, &zero, 2).unwrap().max_abs(), 0.0);
        let pass = BlockWeights::passthrough(cfg).unwrap();
        assert_eq!(toy_denoiser_stage(&u, &y, &pass, 2).unwrap(), u);
    }

    #[test]
    fn shape_determinism_and_bounded_amplification() {
        let cfg = BlockConfig::new(4, 2, (4, 4), 2).unwrap();
        let (u, y) = inputs(2);
        let w = BlockWeights::seeded(cfg, 42, 0.01).unwrap();
        let a = toy_denoiser_stage(&u, &y, &w, 2).unwrap();
        let b = toy_denoiser_stage(&u, &y, &w, 2).unwrap();
        assert_eq!(a.shape(), (8, 8));
        assert_eq!(a, b);
        assert!(a.sub(&u).unwrap().frobenius_norm() < 1.0);
    }

    #[test]
    fn measurement_shape_is_checked() {
        let cfg = BlockConfig::new(4, 2, (4, 4), 2).unwrap();
        let (u, _) = inputs(3);
        let w = BlockWeights::seeded(cfg, 1, 1.0).unwrap();
        assert!(toy_denoiser_stage(&u, &DenseMatrix::zeros(4, 3).unwrap(), &w, 2).is_err());
    }
}
