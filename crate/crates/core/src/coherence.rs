//! Mutual coherence of KCS and AKCS sensing matrices, in closed form and by
//! brute force, plus the Monte Carlo study comparing the two schemes.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_budget, element_budget, DenseMatrix};
use crate::rng::{derive_seed, gaussian_matrix, Rng};
use crate::sensing::{AkcsOperator, Scheme, SensingOperator};

/// Gram matrix of the column-normalized input, `Â^T Â`.
pub fn gram(a: &DenseMatrix) -> Result<DenseMatrix> {
    let normalized = a.normalize_columns()?;
    normalized.t_matmul(&normalized)
}

fn max_off_diagonal(g: &DenseMatrix) -> f64 {
    let n = g.rows();
    let mut best = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                best = best.max(g[(i, j)].abs());
            }
        }
    }
    best
}

/// Largest absolute inner product between distinct normalized columns.
pub fn mutual_coherence(a: &DenseMatrix) -> Result<f64> {
    if a.cols() < 2 {
        return Err(Error::UndefinedCoherence { cols: a.cols() });
    }
    Ok(max_off_diagonal(&gram(a)?))
}

/// `max |gram(Psi ⊗ Phi) - gram(Psi) ⊗ gram(Phi)|`.
pub fn kron_gram_identity_check(phi: &DenseMatrix, psi: &DenseMatrix) -> Result<f64> {
    let direct = gram(&psi.kron(phi)?)?;
    let factored = gram(psi)?.kron(&gram(phi)?)?;
    direct.max_abs_diff(&factored)
}

/// Coherence of `Psi ⊗ Phi` from its factors: `max(mu(Phi), mu(Psi))`.
pub fn kcs_coherence_exact(phi: &DenseMatrix, psi: &DenseMatrix) -> Result<f64> {
    Ok(mutual_coherence(phi)?.max(mutual_coherence(psi)?))
}

/// Typical coherence of an i.i.d. Gaussian `n_rows x n_cols` matrix,
/// `sqrt(2 ln(n_cols) / n_rows)`. Expects `n_rows >= 1`, `n_cols >= 2`.
pub fn gaussian_coherence_estimate(n_rows: usize, n_cols: usize) -> f64 {
    (2.0 * (n_cols as f64).ln() / n_rows as f64).sqrt()
}

/// `c_o * sqrt(2 ln(HW) / (mn))`.
pub fn theorem1_bound(m: usize, n: usize, height: usize, width: usize, c_o: f64) -> f64 {
    c_o * (2.0 * ((height * width) as f64).ln() / (m * n) as f64).sqrt()
}

/// Unnormalized AKCS Gram entry between columns `(i, j)` and `(k, l)`,
/// where `i, k` index `Psi` columns (width) and `j, l` index `phi` entries
/// (height): `sum_r a_{r,j} a_{r,l} <b_{r,i}, b_{r,k}>`.
pub fn akcs_gram_entry(op: &AkcsOperator, (i, j): (usize, usize), (k, l): (usize, usize)) -> Result<f64> {
    let (h, w) = op.image_shape();
    for (idx, len) in [(i, w), (k, w), (j, h), (l, h)] {
        if idx >= len {
            return Err(Error::IndexOutOfRange { index: idx, len });
        }
    }
    let mut sum = 0.0;
    for row in op.rows() {
        let a = row.phi.as_slice();
        let mut inner = 0.0;
        for r in 0..row.psi.rows() {
            inner += row.psi[(r, i)] * row.psi[(r, k)];
        }
        sum += a[j] * a[l] * inner;
    }
    Ok(sum)
}

/// The full unnormalized AKCS Gram matrix assembled from per-row factors.
/// Rows and columns are indexed `i * H + j`, matching the materialized
/// matrix's column order.
pub fn akcs_gram(op: &AkcsOperator) -> Result<DenseMatrix> {
    let (h, w) = op.image_shape();
    let size = h * w;
    check_budget(size, size, element_budget())?;
    let mut g = vec![0.0; size * size];
    for row in op.rows() {
        let a = row.phi.as_slice();
        let b = row.psi.t_matmul(&row.psi)?;
        for i in 0..w {
            for k in 0..w {
                let bik = b[(i, k)];
                if bik == 0.0 {
                    continue;
                }
                for j in 0..h {
                    let scale = bik * a[j];
                    let dst = &mut g[(i * h + j) * size + k * h..(i * h + j) * size + (k + 1) * h];
                    for (d, &al) in dst.iter_mut().zip(a) {
                        *d += scale * al;
                    }
                }
            }
        }
    }
    DenseMatrix::new(size, size, g)
}

/// AKCS coherence from the factored Gram, each entry divided by the
/// product of the two column norms.
pub fn akcs_coherence(op: &AkcsOperator) -> Result<f64> {
    let (h, w) = op.image_shape();
    if h * w < 2 {
        return Err(Error::UndefinedCoherence { cols: h * w });
    }
    let g = akcs_gram(op)?;
    let size = g.rows();
    let norms: Vec<f64> = (0..size).map(|c| g[(c, c)].sqrt()).collect();
    if let Some(index) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::DegenerateColumn { index });
    }
    let mut best = 0.0f64;
    for p in 0..size {
        for q in 0..size {
            if p != q {
                best = best.max(g[(p, q)].abs() / (norms[p] * norms[q]));
            }
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoherenceScheme {
    Gaussian,
    Kcs,
    Akcs,
}

impl CoherenceScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            CoherenceScheme::Gaussian => "gaussian",
            CoherenceScheme::Kcs => "kcs",
            CoherenceScheme::Akcs => "akcs",
        }
    }
}

/// Dimensions of one study cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellDims {
    pub m: usize,
    pub n: usize,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
}

impl CellDims {
    pub fn new(m: usize, n: usize, height: usize, width: usize) -> Self {
        Self { m, n, height, width }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub scheme: CoherenceScheme,
    pub dims: CellDims,
    pub trial: usize,
    pub seed: u64,
    pub mu_empirical: f64,
    pub mu_closed_form: Option<f64>,
    pub bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub grid: Vec<CellDims>,
    pub trials: usize,
    pub seed: u64,
    pub c_o: f64,
}

impl StudyConfig {
    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidParameter("dimension grid is empty".into()));
        }
        let budget = element_budget();
        for d in &self.grid {
            if d.m == 0 || d.n == 0 || d.height == 0 || d.width == 0 {
                return Err(Error::InvalidParameter(format!(
                    "all dimensions must be >= 1, got {d:?}"
                )));
            }
            if d.m > d.height || d.n > d.width {
                return Err(Error::InvalidParameter(format!("need m <= H and n <= W, got {d:?}")));
            }
            if d.height * d.width < 2 {
                return Err(Error::InvalidParameter(format!("need HW >= 2, got {d:?}")));
            }
            check_budget(d.m * d.n, d.height * d.width, budget)?;
            check_budget(d.height * d.width, d.height * d.width, budget)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub dims: CellDims,
    pub trials: usize,
    pub c_o: f64,
    /// Fraction of paired trials with `mu_AK < mu_K`.
    pub frac_akcs_below_kcs: f64,
    /// Fraction of trials with `mu_AK <= c_o sqrt(2 ln(HW)/(mn))`.
    pub frac_akcs_within_bound: f64,
    pub median_mu_akcs: f64,
    pub median_mu_kcs: f64,
    pub median_mu_gaussian: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceStudy {
    pub reports: Vec<CoherenceReport>,
    pub summaries: Vec<CellSummary>,
}

pub const CSV_HEADER: &str = "scheme,m,n,H,W,trial,seed,mu_empirical,mu_closed_form,bound";
pub const SUMMARY_HEADER: &str =
    "# summary,m,n,H,W,trials,c_o,frac_akcs_lt_kcs,frac_akcs_le_bound,median_mu_akcs,median_mu_kcs,median_mu_gaussian,bound";

struct TrialOutcome {
    gaussian: CoherenceReport,
    kcs: CoherenceReport,
    akcs: CoherenceReport,
}

fn run_trial(dims: CellDims, trial: usize, seed: u64, c_o: f64) -> Result<TrialOutcome> {
    let CellDims { m, n, height, width } = dims;

    let kcs = match SensingOperator::gaussian(Scheme::Kcs, m, n, height, width, seed)? {
        SensingOperator::Kcs(op) => op,
        SensingOperator::Akcs(_) => unreachable!("kcs generator returned akcs"),
    };
    let mu_k = kcs_coherence_exact(kcs.phi(), kcs.psi())?;
    let kcs_estimate = gaussian_coherence_estimate(m, height).max(gaussian_coherence_estimate(n, width));

    let akcs = match SensingOperator::gaussian(Scheme::Akcs, m, n, height, width, seed)? {
        SensingOperator::Akcs(op) => op,
        SensingOperator::Kcs(_) => unreachable!("akcs generator returned kcs"),
    };
    let mu_ak = akcs_coherence(&akcs)?;

    let mut rng = Rng::for_task(seed, &[3]);
    let dense = gaussian_matrix(m * n, height * width, &mut rng)?;
    let mu_g = mutual_coherence(&dense)?;

    let report = |scheme, mu, closed, bound| CoherenceReport {
        scheme,
        dims,
        trial,
        seed,
        mu_empirical: mu,
        mu_closed_form: closed,
        bound,
    };
    Ok(TrialOutcome {
        gaussian: report(
            CoherenceScheme::Gaussian,
            mu_g,
            Some(gaussian_coherence_estimate(m * n, height * width)),
            None,
        ),
        kcs: report(CoherenceScheme::Kcs, mu_k, Some(kcs_estimate), None),
        akcs: report(
            CoherenceScheme::Akcs,
            mu_ak,
            None,
            Some(theorem1_bound(m, n, height, width, c_o)),
        ),
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs every (cell, trial) pair. Trial seeds are derived from
/// `(cfg.seed, cell index, trial index)`, so the output does not depend on
/// how rayon schedules the work.
pub fn coherence_study(cfg: &StudyConfig) -> Result<CoherenceStudy> {
    cfg.validate()?;
    let tasks: Vec<(usize, usize)> = (0..cfg.grid.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let outcomes = tasks
        .par_iter()
        .map(|&(c, t)| {
            let seed = derive_seed(cfg.seed, &[c as u64, t as u64]);
            run_trial(cfg.grid[c], t, seed, cfg.c_o)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut reports = Vec::with_capacity(outcomes.len() * 3);
    let mut summaries = Vec::with_capacity(cfg.grid.len());
    for (c, cell) in outcomes.chunks(cfg.trials).enumerate() {
        let dims = cfg.grid[c];
        let mu_ak: Vec<f64> = cell.iter().map(|o| o.akcs.mu_empirical).collect();
        let mu_k: Vec<f64> = cell.iter().map(|o| o.kcs.mu_empirical).collect();
        let mu_g: Vec<f64> = cell.iter().map(|o| o.gaussian.mu_empirical).collect();
        let bound = theorem1_bound(dims.m, dims.n, dims.height, dims.width, cfg.c_o);
        let trials = cell.len() as f64;
        summaries.push(CellSummary {
            dims,
            trials: cell.len(),
            c_o: cfg.c_o,
            frac_akcs_below_kcs: mu_ak.iter().zip(&mu_k).filter(|(a, k)| a < k).count() as f64 / trials,
            frac_akcs_within_bound: mu_ak.iter().filter(|&&a| a <= bound).count() as f64 / trials,
            median_mu_akcs: median(&mu_ak),
            median_mu_kcs: median(&mu_k),
            median_mu_gaussian: median(&mu_g),
            bound,
        });
        for scheme in [CoherenceScheme::Gaussian, CoherenceScheme::Kcs, CoherenceScheme::Akcs] {
            reports.extend(cell.iter().map(|o| match scheme {
                CoherenceScheme::Gaussian => o.gaussian.clone(),
                CoherenceScheme::Kcs => o.kcs.clone(),
                CoherenceScheme::Akcs => o.akcs.clone(),
            }));
        }
    }
    Ok(CoherenceStudy { reports, summaries })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl CoherenceStudy {
    /// CSV with one row per (scheme, trial) and the per-cell summaries as
    /// trailing `#` lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.reports {
            let d = r.dims;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.scheme.as_str(),
                d.m,
                d.n,
                d.height,
                d.width,
                r.trial,
                r.seed,
                r.mu_empirical,
                opt(r.mu_closed_form),
                opt(r.bound)
            );
        }
        out.push_str(SUMMARY_HEADER);
        out.push('\n');
        for s in &self.summaries {
            let d = s.dims;
            let _ = writeln!(
                out,
                "# {},{},{},{},{},{},{},{},{},{},{},{}",
                d.m,
                d.n,
                d.height,
                d.width,
                s.trials,
                s.c_o,
                s.frac_akcs_below_kcs,
                s.frac_akcs_within_bound,
                s.median_mu_akcs,
                s.median_mu_kcs,
                s.median_mu_gaussian,
                s.bound
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::{AkcsRow, KcsOperator};

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        gaussian_matrix(rows, cols, &mut Rng::new(seed)).unwrap()
    }

    fn pairwise_coherence(a: &DenseMatrix) -> f64 {
        let cols: Vec<Vec<f64>> = (0..a.cols()).map(|j| a.column(j)).collect();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut best = 0.0f64;
        for p in 0..cols.len() {
            for q in p + 1..cols.len() {
                let d: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                best = best.max((d / (norm(&cols[p]) * norm(&cols[q]))).abs());
            }
        }
        best
    }

    #[test]
    fn coherence_trivial_cases() {
        assert_eq!(mutual_coherence(&DenseMatrix::identity(5).unwrap()).unwrap(), 0.0);
        let dup = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 6.0]]);
        assert!((mutual_coherence(&dup).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            mutual_coherence(&DenseMatrix::from_rows(&[&[1.0], &[2.0]])),
            Err(Error::UndefinedCoherence { cols: 1 })
        ));
        assert!(matches!(
            mutual_coherence(&DenseMatrix::from_rows(&[&[1.0, 0.0], &[2.0, 0.0]])),
            Err(Error::DegenerateColumn { index: 1 })
        ));
    }

    #[test]
    fn coherence_matches_pairwise_oracle() {
        let a = random(8, 12, 1);
        let mu = mutual_coherence(&a).unwrap();
        assert!((mu - pairwise_coherence(&a)).abs() < 1e-14);
    }

    #[test]
    fn coherence_invariant_to_column_scaling() {
        let a = random(5, 7, 2);
        let scaled = DenseMatrix::from_fn(5, 7, |i, j| a[(i, j)] * (j as f64 + 0.5) * 3.0).unwrap();
        let diff = (mutual_coherence(&a).unwrap() - mutual_coherence(&scaled).unwrap()).abs();
        assert!(diff < 1e-14);
    }

    #[test]
    fn gram_properties() {
        let i = DenseMatrix::identity(4).unwrap();
        assert_eq!(gram(&i).unwrap(), i);
        let g = gram(&random(6, 9, 3)).unwrap();
        assert_eq!(g.max_abs_diff(&g.transpose()).unwrap(), 0.0);
        for k in 0..9 {
            assert!((g[(k, k)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kron_gram_identity() {
        let id = kron_gram_identity_check(&DenseMatrix::identity(2).unwrap(), &DenseMatrix::identity(3).unwrap());
        assert_eq!(id.unwrap(), 0.0);
        assert!(kron_gram_identity_check(&random(3, 4, 4), &random(2, 5, 5)).unwrap() < 1e-12);
        let unnormalized = random(3, 4, 6).scale(17.0);
        assert!(kron_gram_identity_check(&unnormalized, &random(2, 5, 7).scale(0.01)).unwrap() < 1e-12);
    }

    #[test]
    fn kcs_coherence_cases() {
        let psi = DenseMatrix::from_rows(&[&[1.0, 0.5], &[0.0, 0.75f64.sqrt()]]);
        let mu = kcs_coherence_exact(&DenseMatrix::identity(3).unwrap(), &psi).unwrap();
        assert!((mu - 0.5).abs() < 1e-15);

        let phi = random(4, 6, 8);
        let psi = random(3, 5, 9);
        let brute = mutual_coherence(&psi.kron(&phi).unwrap()).unwrap();
        assert!((kcs_coherence_exact(&phi, &psi).unwrap() - brute).abs() < 1e-12);

        let same = kcs_coherence_exact(&phi, &phi).unwrap();
        assert_eq!(same, mutual_coherence(&phi).unwrap());
    }

    #[test]
    fn gaussian_estimate_values() {
        let e = gaussian_coherence_estimate(64, 16);
        assert!((e - (2.0 * 16f64.ln() / 64.0).sqrt()).abs() < 1e-15);
        assert!((e - 0.29435).abs() < 1e-5);
        // rows = 2 ln 2 makes the estimate exactly one.
        let at_one = (2.0 * 2f64.ln() / (2.0 * 2f64.ln())).sqrt();
        assert_eq!(at_one, 1.0);
    }

    #[test]
    fn gaussian_estimate_tracks_monte_carlo_median() {
        let estimate = gaussian_coherence_estimate(64, 16);
        let mus: Vec<f64> = (0..200)
            .map(|t| mutual_coherence(&random(64, 16, 1000 + t)).unwrap())
            .collect();
        let med = median(&mus);
        assert!(
            med > 0.6 * estimate && med < 1.4 * estimate,
            "median {med} estimate {estimate}"
        );
    }

    fn random_akcs(m: usize, n: usize, h: usize, w: usize, seed: u64) -> AkcsOperator {
        match SensingOperator::gaussian(Scheme::Akcs, m, n, h, w, seed).unwrap() {
            SensingOperator::Akcs(op) => op,
            _ => unreachable!(),
        }
    }

    #[test]
    fn akcs_gram_entry_matches_materialized() {
        let op = random_akcs(3, 2, 4, 3, 10);
        let a = op.materialize_with_budget(1 << 20).unwrap();
        let ata = a.t_matmul(&a).unwrap();
        let (h, w) = op.image_shape();
        for i in 0..w {
            for j in 0..h {
                for k in 0..w {
                    for l in 0..h {
                        let e = akcs_gram_entry(&op, (i, j), (k, l)).unwrap();
                        assert!((e - ata[(i * h + j, k * h + l)]).abs() < 1e-12);
                    }
                }
            }
        }
        let full = akcs_gram(&op).unwrap();
        assert!(full.max_abs_diff(&ata).unwrap() < 1e-12);
        // Diagonal is the squared norm of the materialized column.
        let col = a.column(2 * h + 1);
        let sq: f64 = col.iter().map(|v| v * v).sum();
        assert!((akcs_gram_entry(&op, (2, 1), (2, 1)).unwrap() - sq).abs() < 1e-12);
        assert!(matches!(
            akcs_gram_entry(&op, (w, 0), (0, 0)),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn akcs_gram_vanishes_for_orthonormal_psi() {
        let rows = (0..3)
            .map(|r| AkcsRow {
                phi: random(1, 4, 20 + r),
                psi: DenseMatrix::identity(3).unwrap(),
            })
            .collect();
        let op = AkcsOperator::new(rows).unwrap();
        for i in 0..3 {
            for k in 0..3 {
                if i != k {
                    assert_eq!(akcs_gram_entry(&op, (i, 1), (k, 2)).unwrap(), 0.0);
                }
            }
        }
    }

    #[test]
    fn akcs_coherence_matches_brute_force() {
        let op = random_akcs(4, 4, 8, 8, 77);
        let brute = mutual_coherence(&op.materialize_with_budget(1 << 20).unwrap()).unwrap();
        assert!((akcs_coherence(&op).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn akcs_shared_pairs_reduce_to_kcs_coherence() {
        let phi = random(3, 5, 30);
        let psi = random(2, 4, 31);
        let op = AkcsOperator::from_shared(&phi, &psi).unwrap();
        let mu_k = kcs_coherence_exact(&phi, &psi).unwrap();
        assert!((akcs_coherence(&op).unwrap() - mu_k).abs() < 1e-12);
        let kcs = KcsOperator::new(phi, psi);
        let brute = mutual_coherence(&kcs.materialize_with_budget(1 << 20).unwrap()).unwrap();
        assert!((brute - mu_k).abs() < 1e-12);
    }

    #[test]
    fn akcs_single_measurement_is_fully_coherent() {
        let op = random_akcs(1, 1, 3, 2, 5);
        assert!((akcs_coherence(&op).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bound_values() {
        let b = theorem1_bound(8, 8, 16, 16, 1.0);
        assert!((b - (2.0 * 256f64.ln() / 64.0).sqrt()).abs() < 1e-15);
        assert!((b - 0.41628).abs() < 1e-5);
        assert_eq!(theorem1_bound(8, 8, 16, 16, 0.0), 0.0);
        let ratio = theorem1_bound(4, 6, 9, 9, 1.0) / theorem1_bound(4, 3, 9, 9, 1.0);
        assert!((ratio - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn study_rejects_bad_config() {
        let mut cfg = StudyConfig {
            grid: vec![CellDims::new(2, 2, 4, 4)],
            trials: 0,
            seed: 1,
            c_o: 1.0,
        };
        assert!(coherence_study(&cfg).is_err());
        cfg.trials = 1;
        cfg.grid = vec![CellDims::new(5, 2, 4, 4)];
        assert!(coherence_study(&cfg).is_err());
    }

    #[test]
    fn study_is_deterministic_and_self_consistent() {
        let cfg = StudyConfig {
            grid: vec![CellDims::new(2, 3, 4, 4), CellDims::new(3, 3, 4, 5)],
            trials: 6,
            seed: 42,
            c_o: 1.0,
        };
        let a = coherence_study(&cfg).unwrap();
        let b = coherence_study(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.reports.len(), 2 * 6 * 3);
        let csv = a.to_csv();
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().filter(|l| l.starts_with("# ")).count(), 3);

        // Summary fractions agree with the per-trial rows.
        let cell0 = &a.summaries[0];
        let ak: Vec<&CoherenceReport> = a
            .reports
            .iter()
            .filter(|r| r.scheme == CoherenceScheme::Akcs && r.dims == cell0.dims)
            .collect();
        let k: Vec<&CoherenceReport> = a
            .reports
            .iter()
            .filter(|r| r.scheme == CoherenceScheme::Kcs && r.dims == cell0.dims)
            .collect();
        let below = ak
            .iter()
            .zip(&k)
            .filter(|(x, y)| x.mu_empirical < y.mu_empirical)
            .count();
        assert_eq!(cell0.frac_akcs_below_kcs, below as f64 / 6.0);

        // KCS rows report exactly the brute-force coherence of the operator.
        let first = k[0];
        let op = SensingOperator::gaussian(Scheme::Kcs, 2, 3, 4, 4, first.seed).unwrap();
        let brute = mutual_coherence(&op.materialize().unwrap()).unwrap();
        assert!((brute - first.mu_empirical).abs() < 1e-12);
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}
