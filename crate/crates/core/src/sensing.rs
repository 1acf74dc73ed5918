//! Kronecker (KCS) and asymmetric Kronecker (AKCS) sensing operators.
//!
//! KCS measures `Y = Phi X Psi^T`. AKCS gives every measurement row `i` its
//! own pair `(phi_i, Psi_i)` and stacks the rows `phi_i X Psi_i^T`.
//!
//! Flattening conventions, which the materialized matrices honour:
//! * KCS measurements are vectorized column-major, so the matrix is
//!   `Psi ⊗ Phi` acting on `vec_cm(X)`.
//! * AKCS measurements are flattened row-major (row `i` contiguous), so row
//!   block `i` of the matrix is `Psi_i ⊗ phi_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_budget, dot, element_budget, DenseMatrix};
use crate::rng::{gaussian_matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Kcs,
    Akcs,
    /// KCS with `Phi = I_H`, `Psi = I_W`; only valid at full sampling.
    Identity,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Kcs => "kcs",
            Scheme::Akcs => "akcs",
            Scheme::Identity => "identity",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kcs" => Ok(Scheme::Kcs),
            "akcs" => Ok(Scheme::Akcs),
            "identity" => Ok(Scheme::Identity),
            other => Err(Error::InvalidParameter(format!("unknown scheme '{other}'"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Content fingerprint tying a measurement to the operator that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct OperatorId(pub u64);

struct Fingerprint(u64);

impl Fingerprint {
    fn new() -> Self {
        Fingerprint(0xcbf2_9ce4_8422_2325)
    }

    fn word(&mut self, w: u64) {
        for b in w.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn matrix(&mut self, m: &DenseMatrix) {
        self.word(m.rows() as u64);
        self.word(m.cols() as u64);
        for v in m.as_slice() {
            self.word(v.to_bits());
        }
    }
}

#[derive(Clone, Debug)]
pub struct KcsOperator {
    phi: DenseMatrix,
    psi: DenseMatrix,
    id: OperatorId,
}

impl KcsOperator {
    /// `phi` is `m x H`, `psi` is `n x W`.
    pub fn new(phi: DenseMatrix, psi: DenseMatrix) -> Self {
        let mut fp = Fingerprint::new();
        fp.word(1);
        fp.matrix(&phi);
        fp.matrix(&psi);
        Self {
            phi,
            psi,
            id: OperatorId(fp.0),
        }
    }

    pub fn phi(&self) -> &DenseMatrix {
        &self.phi
    }

    pub fn psi(&self) -> &DenseMatrix {
        &self.psi
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.phi.cols(), self.psi.cols())
    }

    pub fn measurement_shape(&self) -> (usize, usize) {
        (self.phi.rows(), self.psi.rows())
    }

    /// `Phi X Psi^T`.
    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        expect_shape("kcs_forward", self.image_shape(), x)?;
        self.phi.matmul(x)?.matmul_t(&self.psi)
    }

    /// `Phi^T (Y Psi)`. This association accumulates in the same order as
    /// the AKCS adjoint, so shared-pair AKCS reproduces it bit for bit.
    pub fn adjoint(&self, y: &DenseMatrix) -> Result<DenseMatrix> {
        expect_shape("kcs_adjoint", self.measurement_shape(), y)?;
        self.phi.t_matmul(&y.matmul(&self.psi)?)
    }

    /// `Psi ⊗ Phi`, shape `mn x HW`.
    pub fn materialize_with_budget(&self, budget: usize) -> Result<DenseMatrix> {
        self.psi.kron_with_budget(&self.phi, budget)
    }
}

/// One AKCS measurement row: `phi` is `1 x H`, `psi` is `n x W`.
#[derive(Clone, Debug)]
pub struct AkcsRow {
    pub phi: DenseMatrix,
    pub psi: DenseMatrix,
}

#[derive(Clone, Debug)]
pub struct AkcsOperator {
    rows: Vec<AkcsRow>,
    height: usize,
    width: usize,
    n: usize,
    id: OperatorId,
}

impl AkcsOperator {
    pub fn new(rows: Vec<AkcsRow>) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidParameter("AKCS operator needs at least one row".into()))?;
        let height = first.phi.cols();
        let (n, width) = first.psi.shape();
        for row in &rows {
            if row.phi.shape() != (1, height) {
                return Err(Error::ShapeMismatch {
                    op: "akcs_row_phi",
                    expected: (1, height),
                    actual: row.phi.shape(),
                });
            }
            if row.psi.shape() != (n, width) {
                return Err(Error::ShapeMismatch {
                    op: "akcs_row_psi",
                    expected: (n, width),
                    actual: row.psi.shape(),
                });
            }
        }
        let mut fp = Fingerprint::new();
        fp.word(2);
        for row in &rows {
            fp.matrix(&row.phi);
            fp.matrix(&row.psi);
        }
        Ok(Self {
            rows,
            height,
            width,
            n,
            id: OperatorId(fp.0),
        })
    }

    /// Every row `i` uses row `i` of `phi` and the shared `psi`; the result
    /// measures exactly what `KcsOperator::new(phi, psi)` measures.
    pub fn from_shared(phi: &DenseMatrix, psi: &DenseMatrix) -> Result<Self> {
        let rows = (0..phi.rows())
            .map(|i| {
                Ok(AkcsRow {
                    phi: DenseMatrix::row_vector(phi.row(i).to_vec())?,
                    psi: psi.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn rows(&self) -> &[AkcsRow] {
        &self.rows
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn measurement_shape(&self) -> (usize, usize) {
        (self.rows.len(), self.n)
    }

    /// Row `i` of the output is `phi_i X Psi_i^T`.
    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        expect_shape("akcs_forward", self.image_shape(), x)?;
        let (m, n) = self.measurement_shape();
        let mut out = vec![0.0; m * n];
        for (i, row) in self.rows.iter().enumerate() {
            // phi_i X: 1 x W
            let projected = row.phi.matmul(x)?;
            for r in 0..n {
                out[i * n + r] = dot(projected.as_slice(), row.psi.row(r));
            }
        }
        DenseMatrix::new(m, n, out)
    }

    /// `sum_i phi_i^T Y_i Psi_i`, with `Y_i` row `i` of `y`.
    pub fn adjoint(&self, y: &DenseMatrix) -> Result<DenseMatrix> {
        expect_shape("akcs_adjoint", self.measurement_shape(), y)?;
        let (h, w) = self.image_shape();
        let mut out = vec![0.0; h * w];
        let mut back = vec![0.0; w];
        for (i, row) in self.rows.iter().enumerate() {
            back.iter_mut().for_each(|v| *v = 0.0);
            for (r, &coef) in y.row(i).iter().enumerate() {
                for (b, &p) in back.iter_mut().zip(row.psi.row(r)) {
                    *b += coef * p;
                }
            }
            for (hh, &a) in row.phi.as_slice().iter().enumerate() {
                for (o, &b) in out[hh * w..(hh + 1) * w].iter_mut().zip(&back) {
                    *o += a * b;
                }
            }
        }
        DenseMatrix::new(h, w, out)
    }

    /// Row `i * n + r`, column `w * H + h` holds `phi_i[h] * Psi_i[r, w]`.
    pub fn materialize_with_budget(&self, budget: usize) -> Result<DenseMatrix> {
        let (m, n) = self.measurement_shape();
        let (h, w) = self.image_shape();
        check_budget(m * n, h * w, budget)?;
        let cols = h * w;
        let mut data = vec![0.0; m * n * cols];
        for (i, row) in self.rows.iter().enumerate() {
            for r in 0..n {
                let dst = &mut data[(i * n + r) * cols..(i * n + r + 1) * cols];
                for ww in 0..w {
                    let b = row.psi[(r, ww)];
                    for (hh, &a) in row.phi.as_slice().iter().enumerate() {
                        dst[ww * h + hh] = a * b;
                    }
                }
            }
        }
        DenseMatrix::new(m * n, cols, data)
    }
}

#[derive(Clone, Debug)]
pub enum SensingOperator {
    Kcs(KcsOperator),
    Akcs(AkcsOperator),
}

impl From<KcsOperator> for SensingOperator {
    fn from(op: KcsOperator) -> Self {
        SensingOperator::Kcs(op)
    }
}

impl From<AkcsOperator> for SensingOperator {
    fn from(op: AkcsOperator) -> Self {
        SensingOperator::Akcs(op)
    }
}

impl SensingOperator {
    /// Gaussian operator for `scheme` drawn from `seed`.
    ///
    /// Entries of `Phi`/`phi_i` have variance `1/m` and entries of
    /// `Psi`/`Psi_i` variance `1/n`, so every column of the equivalent
    /// sensing matrix has unit expected squared norm. Coherence is invariant
    /// to this scaling.
    pub fn gaussian(scheme: Scheme, m: usize, n: usize, height: usize, width: usize, seed: u64) -> Result<Self> {
        validate_dims(m, n, height, width)?;
        let phi_scale = 1.0 / (m as f64).sqrt();
        let psi_scale = 1.0 / (n as f64).sqrt();
        match scheme {
            Scheme::Kcs => {
                let mut rng = Rng::for_task(seed, &[1]);
                let phi = gaussian_matrix(m, height, &mut rng)?.scale(phi_scale);
                let psi = gaussian_matrix(n, width, &mut rng)?.scale(psi_scale);
                Ok(KcsOperator::new(phi, psi).into())
            }
            Scheme::Akcs => {
                let mut rng = Rng::for_task(seed, &[2]);
                let rows = (0..m)
                    .map(|_| {
                        Ok(AkcsRow {
                            phi: gaussian_matrix(1, height, &mut rng)?.scale(phi_scale),
                            psi: gaussian_matrix(n, width, &mut rng)?.scale(psi_scale),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(AkcsOperator::new(rows)?.into())
            }
            Scheme::Identity => {
                if m != height || n != width {
                    return Err(Error::InvalidParameter(format!(
                        "identity operator needs m = H and n = W, got ({m}, {n}) for {height}x{width}"
                    )));
                }
                Ok(KcsOperator::new(DenseMatrix::identity(height)?, DenseMatrix::identity(width)?).into())
            }
        }
    }

    pub fn scheme(&self) -> Scheme {
        match self {
            SensingOperator::Kcs(_) => Scheme::Kcs,
            SensingOperator::Akcs(_) => Scheme::Akcs,
        }
    }

    pub fn id(&self) -> OperatorId {
        match self {
            SensingOperator::Kcs(op) => op.id,
            SensingOperator::Akcs(op) => op.id,
        }
    }

    pub fn image_shape(&self) -> (usize, usize) {
        match self {
            SensingOperator::Kcs(op) => op.image_shape(),
            SensingOperator::Akcs(op) => op.image_shape(),
        }
    }

    pub fn measurement_shape(&self) -> (usize, usize) {
        match self {
            SensingOperator::Kcs(op) => op.measurement_shape(),
            SensingOperator::Akcs(op) => op.measurement_shape(),
        }
    }

    /// `mn / (HW)`.
    pub fn sampling_ratio(&self) -> f64 {
        let (m, n) = self.measurement_shape();
        let (h, w) = self.image_shape();
        (m * n) as f64 / (h * w) as f64
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<Measurement> {
        let y = self.apply(x)?;
        Ok(Measurement {
            y,
            operator_id: self.id(),
        })
    }

    /// The forward map without wrapping the result in a [`Measurement`].
    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            SensingOperator::Kcs(op) => op.forward(x),
            SensingOperator::Akcs(op) => op.forward(x),
        }
    }

    pub fn adjoint(&self, y: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            SensingOperator::Kcs(op) => op.adjoint(y),
            SensingOperator::Akcs(op) => op.adjoint(y),
        }
    }

    pub fn materialize(&self) -> Result<DenseMatrix> {
        self.materialize_with_budget(element_budget())
    }

    pub fn materialize_with_budget(&self, budget: usize) -> Result<DenseMatrix> {
        match self {
            SensingOperator::Kcs(op) => op.materialize_with_budget(budget),
            SensingOperator::Akcs(op) => op.materialize_with_budget(budget),
        }
    }

    /// Flattens a measurement in the layout the materialized matrix produces.
    pub fn flatten_measurement(&self, y: &DenseMatrix) -> Result<Vec<f64>> {
        expect_shape("flatten_measurement", self.measurement_shape(), y)?;
        Ok(match self {
            SensingOperator::Kcs(_) => y.vec_cm().into_vec(),
            SensingOperator::Akcs(_) => y.as_slice().to_vec(),
        })
    }

    /// Inverse of [`flatten_measurement`](Self::flatten_measurement).
    pub fn unflatten_measurement(&self, values: &[f64]) -> Result<DenseMatrix> {
        let (m, n) = self.measurement_shape();
        match self {
            SensingOperator::Kcs(_) => DenseMatrix::from_vec_cm(values, m, n),
            SensingOperator::Akcs(_) => DenseMatrix::new(m, n, values.to_vec()),
        }
    }
}

/// A measurement `Y` and the id of the operator that produced it.
#[derive(Clone, Debug)]
pub struct Measurement {
    y: DenseMatrix,
    operator_id: OperatorId,
}

impl Measurement {
    /// Wraps externally obtained data for `op`, checking the shape.
    pub fn for_operator(op: &SensingOperator, y: DenseMatrix) -> Result<Self> {
        expect_shape("measurement", op.measurement_shape(), &y)?;
        Ok(Self {
            y,
            operator_id: op.id(),
        })
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.y
    }

    pub fn into_values(self) -> DenseMatrix {
        self.y
    }

    pub fn operator_id(&self) -> OperatorId {
        self.operator_id
    }

    pub fn shape(&self) -> (usize, usize) {
        self.y.shape()
    }
}

impl AsRef<DenseMatrix> for Measurement {
    fn as_ref(&self) -> &DenseMatrix {
        &self.y
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub m: usize,
    pub n: usize,
    pub achieved: f64,
}

/// Splits a target sampling ratio symmetrically: `m = round(sqrt(sr) H)`,
/// `n = round(sqrt(sr) W)`, each clamped to at least 1.
pub fn sampling_plan(height: usize, width: usize, target_sr: f64) -> Result<SamplingPlan> {
    if !(target_sr > 0.0 && target_sr <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "sampling ratio must lie in (0, 1], got {target_sr}"
        )));
    }
    if height == 0 || width == 0 {
        return Err(Error::InvalidDimension {
            rows: height,
            cols: width,
        });
    }
    let root = target_sr.sqrt();
    let m = ((root * height as f64).round() as usize).clamp(1, height);
    let n = ((root * width as f64).round() as usize).clamp(1, width);
    Ok(SamplingPlan {
        m,
        n,
        achieved: (m * n) as f64 / (height * width) as f64,
    })
}

/// Everything needed to regenerate a Gaussian operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub scheme: Scheme,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
}

impl OperatorSpec {
    pub fn build(&self) -> Result<SensingOperator> {
        SensingOperator::gaussian(self.scheme, self.m, self.n, self.height, self.width, self.seed)
    }
}

fn validate_dims(m: usize, n: usize, height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidDimension {
            rows: height,
            cols: width,
        });
    }
    if m == 0 || n == 0 || m > height || n > width {
        return Err(Error::InvalidParameter(format!(
            "measurement shape ({m}, {n}) must satisfy 1 <= m <= {height}, 1 <= n <= {width}"
        )));
    }
    Ok(())
}

fn expect_shape(op: &'static str, expected: (usize, usize), x: &DenseMatrix) -> Result<()> {
    if x.shape() != expected {
        return Err(Error::ShapeMismatch {
            op,
            expected,
            actual: x.shape(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        gaussian_matrix(rows, cols, &mut Rng::new(seed)).unwrap()
    }

    fn random_akcs(m: usize, n: usize, h: usize, w: usize, seed: u64) -> AkcsOperator {
        match SensingOperator::gaussian(Scheme::Akcs, m, n, h, w, seed).unwrap() {
            SensingOperator::Akcs(op) => op,
            _ => unreachable!(),
        }
    }

    #[test]
    fn kcs_identity_and_sum() {
        let x = random(3, 4, 1);
        let op = KcsOperator::new(DenseMatrix::identity(3).unwrap(), DenseMatrix::identity(4).unwrap());
        assert_eq!(op.forward(&x).unwrap(), x);
        assert_eq!(op.adjoint(&x).unwrap(), x);

        let ones = DenseMatrix::from_rows(&[&[1.0, 1.0]]);
        let op = KcsOperator::new(ones.clone(), ones);
        let x = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(op.forward(&x).unwrap(), DenseMatrix::from_rows(&[&[10.0]]));
    }

    #[test]
    fn kcs_forward_matches_materialized() {
        let op = SensingOperator::Kcs(KcsOperator::new(random(2, 4, 2), random(3, 4, 3)));
        let a = op.materialize().unwrap();
        assert_eq!(a.shape(), (6, 16));
        let x = random(4, 4, 4);
        let y = op.apply(&x).unwrap();
        let ax = a.matmul(&x.vec_cm()).unwrap();
        assert!(ax.max_abs_diff(&y.vec_cm()).unwrap() < 1e-12);
    }

    #[test]
    fn kcs_identity_materializes_to_identity() {
        let op = SensingOperator::gaussian(Scheme::Identity, 3, 2, 3, 2, 0).unwrap();
        assert_eq!(op.materialize().unwrap(), DenseMatrix::identity(6).unwrap());
    }

    #[test]
    fn shape_errors_name_expected_and_actual() {
        let op = KcsOperator::new(random(2, 4, 2), random(3, 5, 3));
        let err = op.forward(&random(5, 4, 1)).unwrap_err();
        assert!(matches!(
            err,
            Error::ShapeMismatch {
                expected: (4, 5),
                actual: (5, 4),
                ..
            }
        ));
        assert!(op.adjoint(&random(3, 2, 1)).is_err());
    }

    #[test]
    fn akcs_with_shared_pairs_is_kcs() {
        let phi = random(3, 5, 10);
        let psi = random(2, 4, 11);
        let kcs = KcsOperator::new(phi.clone(), psi.clone());
        let akcs = AkcsOperator::from_shared(&phi, &psi).unwrap();
        let x = random(5, 4, 12);
        assert_eq!(kcs.forward(&x).unwrap(), akcs.forward(&x).unwrap());
    }

    #[test]
    fn akcs_single_row_is_a_small_kcs() {
        let phi = random(1, 4, 20);
        let psi = random(3, 5, 21);
        let akcs = AkcsOperator::new(vec![AkcsRow {
            phi: phi.clone(),
            psi: psi.clone(),
        }])
        .unwrap();
        let x = random(4, 5, 22);
        let expected = phi.matmul(&x).unwrap().matmul_t(&psi).unwrap();
        assert!(akcs.forward(&x).unwrap().max_abs_diff(&expected).unwrap() < 1e-14);
        let m = akcs.materialize_with_budget(1 << 20).unwrap();
        assert_eq!(m, psi.kron(&phi).unwrap());
    }

    #[test]
    fn akcs_trivial_adjoint() {
        let psi = DenseMatrix::identity(3).unwrap();
        let op = AkcsOperator::new(vec![AkcsRow {
            phi: DenseMatrix::from_rows(&[&[1.0]]),
            psi,
        }])
        .unwrap();
        let y = random(1, 3, 5);
        assert_eq!(op.adjoint(&y).unwrap(), y);
    }

    #[test]
    fn akcs_forward_and_adjoint_match_materialized() {
        let op = SensingOperator::Akcs(random_akcs(3, 3, 6, 6, 30));
        let a = op.materialize().unwrap();
        let x = random(6, 6, 31);
        let y = op.apply(&x).unwrap();
        let ax = a.matmul(&x.vec_cm()).unwrap();
        let flat = op.flatten_measurement(&y).unwrap();
        let diff = ax
            .as_slice()
            .iter()
            .zip(&flat)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12);

        let y2 = random(3, 3, 32);
        let aty = a
            .t_matmul(&DenseMatrix::column_vector(op.flatten_measurement(&y2).unwrap()).unwrap())
            .unwrap();
        let adj = op.adjoint(&y2).unwrap();
        let reshaped = DenseMatrix::from_vec_cm(aty.as_slice(), 6, 6).unwrap();
        assert!(adj.max_abs_diff(&reshaped).unwrap() < 1e-12);
    }

    #[test]
    fn akcs_columns_follow_the_stacked_segment_form() {
        // Column for (Psi column i, Phi column j) stacks a_{r,j} * b_{r,i}.
        let op = random_akcs(3, 2, 4, 5, 40);
        let a = op.materialize_with_budget(1 << 20).unwrap();
        let (h, w) = op.image_shape();
        for i in 0..w {
            for j in 0..h {
                let col = a.column(i * h + j);
                let expected: Vec<f64> = op
                    .rows()
                    .iter()
                    .flat_map(|row| {
                        let a_rj = row.phi[(0, j)];
                        row.psi.column(i).into_iter().map(move |b| a_rj * b)
                    })
                    .collect();
                assert_eq!(col, expected);
            }
        }
    }

    #[test]
    fn akcs_rejects_inconsistent_rows() {
        let rows = vec![
            AkcsRow {
                phi: random(1, 4, 1),
                psi: random(2, 3, 2),
            },
            AkcsRow {
                phi: random(1, 4, 3),
                psi: random(3, 3, 4),
            },
        ];
        assert!(matches!(AkcsOperator::new(rows), Err(Error::ShapeMismatch { .. })));
        assert!(AkcsOperator::new(vec![]).is_err());
    }

    #[test]
    fn materialization_budget_enforced() {
        let op = SensingOperator::gaussian(Scheme::Akcs, 4, 4, 8, 8, 1).unwrap();
        assert!(matches!(
            op.materialize_with_budget(16 * 64 - 1),
            Err(Error::SizeBudget { .. })
        ));
        let op = SensingOperator::gaussian(Scheme::Kcs, 4, 4, 8, 8, 1).unwrap();
        assert!(op.materialize_with_budget(16 * 64 - 1).is_err());
    }

    #[test]
    fn sampling_plan_cases() {
        let p = sampling_plan(256, 256, 0.10).unwrap();
        assert_eq!((p.m, p.n), (81, 81));
        assert!((p.achieved - 6561.0 / 65536.0).abs() < 1e-15);
        assert!((p.achieved - 0.1001).abs() < 1e-4);

        let p = sampling_plan(37, 21, 1.0).unwrap();
        assert_eq!((p.m, p.n, p.achieved), (37, 21, 1.0));

        let p = sampling_plan(64, 64, 0.25).unwrap();
        assert_eq!((p.m, p.n, p.achieved), (32, 32, 0.25));

        assert!(sampling_plan(8, 8, 0.0).is_err());
        assert!(sampling_plan(8, 8, 1.5).is_err());
        assert!(sampling_plan(8, 8, f64::NAN).is_err());
        assert_eq!(sampling_plan(8, 8, 1e-6).unwrap().m, 1);
    }

    #[test]
    fn operator_spec_round_trips_and_regenerates() {
        let spec = OperatorSpec {
            scheme: Scheme::Akcs,
            height: 8,
            width: 6,
            m: 4,
            n: 3,
            seed: 99,
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"H\":8") && json.contains("\"scheme\":\"akcs\""));
        let back: OperatorSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.build().unwrap().id(), spec.build().unwrap().id());
    }

    #[test]
    fn measurement_carries_operator_id() {
        let op = SensingOperator::gaussian(Scheme::Kcs, 2, 2, 4, 4, 5).unwrap();
        let y = op.forward(&random(4, 4, 6)).unwrap();
        assert_eq!(y.operator_id(), op.id());
        assert!(Measurement::for_operator(&op, random(3, 2, 1)).is_err());
        let other = SensingOperator::gaussian(Scheme::Kcs, 2, 2, 4, 4, 6).unwrap();
        assert_ne!(other.id(), op.id());
    }
}
