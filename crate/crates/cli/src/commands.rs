use std::path::{Path, PathBuf};
use std::time::Instant;

use akcs_core::blob::{decode_matrix, decode_operator, encode_matrix, encode_operator, BlobKind};
use akcs_core::blocks::run_checks;
use akcs_core::coherence::{coherence_study, StudyConfig};
use akcs_core::dct::sparse_dct_image;
use akcs_core::ista::{ista_reconstruct, DenoiserKind, ReconConfig, ReconTrace, DEFAULT_POWER_ITERATIONS};
use akcs_core::metrics::{psnr, ssim, SSIM_WINDOW};
use akcs_core::pgm::ImageU8;
use akcs_core::rng::{derive_seed, Rng};
use akcs_core::sensing::{sampling_plan, OperatorSpec};
use akcs_core::{DenseMatrix, Error, Measurement, Scheme, SensingOperator};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::args::{
    BenchArgs, BlocksCheckArgs, CoherenceArgs, Command, DenoiserArg, ReconstructArgs, ReplayArgs, SenseArgs,
    SyntheticSpec,
};
use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_path_for, write_artifact, RunManifest};

/// Seed-path tag for synthetic images, kept apart from operator streams.
const SYNTHETIC_TAG: u64 = 0x5157;
/// Target pixel standard deviation of the synthetic images around 0.5.
const SYNTHETIC_STD: f64 = 0.1;

pub const BENCH_HEADER: &str =
    "image,H,W,sr,m,n,sr_achieved,scheme,seed_index,operator_seed,psnr,ssim,rel_error,iterations";

/// A DCT-sparse image with mean 0.5: `sparsity` non-DC coefficients of equal
/// magnitude, scaled so the pixel standard deviation is about 0.1.
pub fn synthetic_image(height: usize, width: usize, sparsity: usize, rng: &mut Rng) -> CliResult<DenseMatrix> {
    if sparsity == 0 {
        return Err(CliError::Usage("synthetic images need sparsity >= 1".into()));
    }
    let amplitude = SYNTHETIC_STD * ((height * width) as f64 / sparsity as f64).sqrt();
    Ok(sparse_dct_image(height, width, sparsity, amplitude, 0.5, rng)?)
}

/// PSNR as JSON: a number, or the string `"inf"` for lossless results.
fn db_value(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!("inf")
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        v.to_string()
    }
}

/// `fs::read` with the path in the error message.
pub fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

fn elapsed(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

pub fn run(command: &Command) -> CliResult<RunManifest> {
    match command {
        Command::Sense(a) => cmd_sense(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Coherence(a) => cmd_coherence(a),
        Command::BlocksCheck(a) => cmd_blocks_check(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Replay(a) => cmd_replay(a),
    }
}

fn sense_image(args: &SenseArgs) -> CliResult<ImageU8> {
    match (&args.image, &args.synthetic) {
        (Some(path), None) => Ok(ImageU8::decode(&read_file(path)?)?),
        (
            None,
            Some(SyntheticSpec {
                height,
                width,
                sparsity,
            }),
        ) => {
            let mut rng = Rng::for_task(args.seed, &[SYNTHETIC_TAG]);
            Ok(ImageU8::from_matrix(&synthetic_image(
                *height, *width, *sparsity, &mut rng,
            )?))
        }
        _ => Err(CliError::Usage(
            "sense needs exactly one of --image or --synthetic".into(),
        )),
    }
}

pub fn cmd_sense(args: &SenseArgs) -> CliResult<RunManifest> {
    let start = Instant::now();
    let image = sense_image(args)?;
    let x = image.to_matrix();
    let (h, w) = x.shape();
    let (m, n) = match args.mn {
        Some(s) => (s.m, s.n),
        None => {
            let plan = sampling_plan(h, w, args.sr)?;
            (plan.m, plan.n)
        }
    };
    let spec = OperatorSpec {
        scheme: args.scheme,
        height: h,
        width: w,
        m,
        n,
        seed: args.seed,
    };
    let op = spec.build()?;
    let y = op.apply(&x)?;

    std::fs::create_dir_all(&args.out)?;
    let mut manifest = RunManifest::new(Command::Sense(args.clone()), args.seed);
    manifest.scheme = Some(args.scheme.to_string());
    manifest.dims = Some([h, w, m, n]);
    manifest.sampling_ratio = Some(op.sampling_ratio());
    let dir = &args.out;
    write_artifact(
        &mut manifest,
        &dir.join("measurement.bin"),
        &encode_matrix(BlobKind::Measurement, &y),
    )?;
    let mut spec_json = serde_json::to_string_pretty(&spec).map_err(Error::from)?;
    spec_json.push('\n');
    write_artifact(&mut manifest, &dir.join("operator.json"), spec_json.as_bytes())?;
    if args.operator_blob {
        write_artifact(&mut manifest, &dir.join("operator.bin"), &encode_operator(&op)?)?;
    }
    write_artifact(&mut manifest, &dir.join("reference.pgm"), &image.encode())?;
    manifest.results = json!({
        "measurement_shape": [m, n],
        "operator_id": format!("{:016x}", op.id().0),
    });
    manifest.wall_clock_seconds = elapsed(start);
    manifest.write(&dir.join("manifest.json"))?;
    Ok(manifest)
}

pub fn load_operator(path: &Path) -> CliResult<SensingOperator> {
    let bytes = read_file(path)?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let spec: OperatorSpec = serde_json::from_slice(&bytes).map_err(Error::from)?;
        Ok(spec.build()?)
    } else {
        Ok(decode_operator(&bytes)?)
    }
}

pub fn load_measurement(path: &Path, op: &SensingOperator) -> CliResult<Measurement> {
    let bytes = read_file(path)?;
    let (kind, y, end) = decode_matrix(&bytes, 0)?;
    if !matches!(kind, BlobKind::Measurement | BlobKind::Matrix) {
        return Err(Error::Parse {
            offset: 6,
            reason: format!("expected a measurement blob, found {kind:?}"),
        }
        .into());
    }
    if end != bytes.len() {
        return Err(Error::Parse {
            offset: end,
            reason: "trailing bytes after measurement".into(),
        }
        .into());
    }
    Ok(Measurement::for_operator(op, y)?)
}

fn denoiser_kind(arg: DenoiserArg, seed: u64) -> DenoiserKind {
    match arg {
        DenoiserArg::Identity => DenoiserKind::Identity,
        DenoiserArg::Dct => DenoiserKind::DctSoftThreshold,
        DenoiserArg::Toy => DenoiserKind::toy(seed),
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
struct Quality {
    psnr: f64,
    ssim: Option<f64>,
    rel_error: f64,
}

fn quality(x: &DenseMatrix, reference: &DenseMatrix) -> CliResult<Quality> {
    let (h, w) = reference.shape();
    let ssim = if h >= SSIM_WINDOW && w >= SSIM_WINDOW {
        Some(ssim(x, reference)?)
    } else {
        None
    };
    let rel_error = x.sub(reference)?.frobenius_norm() / reference.frobenius_norm().max(1e-300);
    Ok(Quality {
        psnr: psnr(x, reference, 1.0)?,
        ssim,
        rel_error,
    })
}

fn write_trace(path: &Path, trace: &ReconTrace) -> CliResult<()> {
    std::fs::write(path, trace.to_csv())?;
    Ok(())
}

pub fn cmd_reconstruct(args: &ReconstructArgs) -> CliResult<RunManifest> {
    let start = Instant::now();
    let op = load_operator(&args.operator)?;
    let y = load_measurement(&args.measurement, &op)?;
    let reference = match &args.reference {
        Some(p) => {
            let r = ImageU8::decode(&read_file(p)?)?.to_matrix();
            if r.shape() != op.image_shape() {
                return Err(CliError::Usage(format!(
                    "reference is {:?} but the operator reconstructs {:?}",
                    r.shape(),
                    op.image_shape()
                )));
            }
            Some(r)
        }
        None => None,
    };
    let cfg = ReconConfig {
        iterations: args.iters,
        step: args.rho,
        lambda: args.lambda,
        denoiser: denoiser_kind(args.denoiser, args.seed),
        tolerance: args.tol,
        record_trace: false,
        power_iterations: DEFAULT_POWER_ITERATIONS,
        seed: args.seed,
    };
    let (x, trace) = match ista_reconstruct(&op, &y, &cfg) {
        Ok(r) => r,
        Err(Error::Divergence { iteration, trace }) => {
            if let Some(p) = &args.trace {
                write_trace(p, &trace)?;
            }
            return Err(Error::Divergence { iteration, trace }.into());
        }
        Err(e) => return Err(e.into()),
    };

    let mut manifest = RunManifest::new(Command::Reconstruct(args.clone()), args.seed);
    let (h, w) = op.image_shape();
    let (m, n) = op.measurement_shape();
    manifest.scheme = Some(op.scheme().to_string());
    manifest.dims = Some([h, w, m, n]);
    manifest.sampling_ratio = Some(op.sampling_ratio());
    write_artifact(&mut manifest, &args.out, &ImageU8::from_matrix(&x).encode())?;
    if let Some(p) = &args.trace {
        write_artifact(&mut manifest, p, trace.to_csv().as_bytes())?;
    }
    let mut results = json!({
        "config": cfg,
        "iterations_run": trace.iterations(),
        "converged": trace.converged,
        "step": trace.step,
        "lipschitz": trace.lipschitz,
        "final_objective": trace.objective.last(),
        "final_data_fidelity": trace.data_fidelity.last(),
    });
    if let Some(r) = &reference {
        let q = quality(&x, r)?;
        results["psnr_db"] = db_value(q.psnr);
        results["ssim"] = json!(q.ssim);
        results["rel_error"] = json!(q.rel_error);
    }
    manifest.results = results;
    manifest.wall_clock_seconds = elapsed(start);
    manifest.write(&manifest_path_for(&args.out))?;
    Ok(manifest)
}

pub fn cmd_coherence(args: &CoherenceArgs) -> CliResult<RunManifest> {
    let start = Instant::now();
    let cfg = StudyConfig {
        grid: args.grid.0.clone(),
        trials: args.trials,
        seed: args.seed,
        c_o: args.co,
    };
    let study = coherence_study(&cfg)?;
    let mut manifest = RunManifest::new(Command::Coherence(args.clone()), args.seed);
    if let [cell] = cfg.grid.as_slice() {
        manifest.dims = Some([cell.height, cell.width, cell.m, cell.n]);
    }
    write_artifact(&mut manifest, &args.out, study.to_csv().as_bytes())?;
    manifest.results = json!({ "summaries": study.summaries });
    manifest.wall_clock_seconds = elapsed(start);
    manifest.write(&manifest_path_for(&args.out))?;
    Ok(manifest)
}

pub fn cmd_blocks_check(args: &BlocksCheckArgs) -> CliResult<RunManifest> {
    let start = Instant::now();
    let dims = args.dims.unwrap_or_default();
    let report = run_checks(args.seed, dims)?;
    let mut manifest = RunManifest::new(Command::BlocksCheck(args.clone()), args.seed);
    let mut text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    text.push('\n');
    write_artifact(&mut manifest, &args.out, text.as_bytes())?;
    let failed: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
    manifest.results = json!({ "passed": report.passed, "failed": failed });
    manifest.wall_clock_seconds = elapsed(start);
    manifest.write(&manifest_path_for(&args.out))?;
    if !report.passed {
        return Err(CliError::CheckFailed(format!(
            "block invariants failed: {}",
            failed.join(",")
        )));
    }
    Ok(manifest)
}

struct BenchImage {
    name: String,
    x: DenseMatrix,
}

fn bench_images(args: &BenchArgs) -> CliResult<Vec<BenchImage>> {
    let mut images = Vec::new();
    if let Some(dir) = &args.images {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        paths.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")));
        paths.sort();
        for p in paths {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            images.push(BenchImage {
                name,
                x: ImageU8::decode(&read_file(&p)?)?.to_matrix(),
            });
        }
    }
    for i in 0..args.synthetic.unwrap_or(0) {
        let mut rng = Rng::for_task(args.seed, &[SYNTHETIC_TAG, i as u64]);
        images.push(BenchImage {
            name: format!("synthetic-{i:03}"),
            x: synthetic_image(args.size, args.size, args.sparsity, &mut rng)?,
        });
    }
    if images.is_empty() {
        return Err(CliError::Usage(
            "bench found no images (need --images with .pgm files or --synthetic N)".into(),
        ));
    }
    Ok(images)
}

/// One reconstruction of the bench table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub image_index: usize,
    pub image: String,
    pub height: usize,
    pub width: usize,
    pub sr_index: usize,
    pub sr: f64,
    pub m: usize,
    pub n: usize,
    pub sr_achieved: f64,
    pub scheme: Scheme,
    pub seed_index: usize,
    pub operator_seed: u64,
    pub psnr: f64,
    pub ssim: Option<f64>,
    pub rel_error: f64,
    pub iterations: usize,
}

/// Mean metrics of one (sampling ratio, scheme) pair over all images and seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchMean {
    pub sr: f64,
    pub scheme: Scheme,
    pub runs: usize,
    #[serde(serialize_with = "ser_db")]
    pub mean_psnr: f64,
    pub mean_ssim: Option<f64>,
    pub mean_rel_error: f64,
}

fn ser_db<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    db_value(*v).serialize(s)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

fn summarize<'a>(rows: impl Iterator<Item = &'a BenchRow> + Clone, sr: f64, scheme: Scheme) -> BenchMean {
    BenchMean {
        sr,
        scheme,
        runs: rows.clone().count(),
        mean_psnr: mean(rows.clone().map(|r| r.psnr)).unwrap_or(f64::NAN),
        mean_ssim: mean(rows.clone().filter_map(|r| r.ssim)),
        mean_rel_error: mean(rows.map(|r| r.rel_error)).unwrap_or(f64::NAN),
    }
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Runs the bench grid and returns the rows in deterministic order plus the
/// per-(sr, scheme) means.
pub fn run_bench(args: &BenchArgs) -> CliResult<(Vec<BenchRow>, Vec<BenchMean>)> {
    if args.srs.is_empty() || args.schemes.is_empty() || args.seeds == 0 {
        return Err(CliError::Usage(
            "bench needs at least one sampling ratio, scheme and seed".into(),
        ));
    }
    if let Some(s) = args.schemes.iter().find(|s| **s == Scheme::Identity) {
        return Err(CliError::Usage(format!(
            "bench compares compressive schemes; '{s}' is not one"
        )));
    }
    let images = bench_images(args)?;
    let mut tasks = Vec::new();
    for ii in 0..images.len() {
        for si in 0..args.srs.len() {
            for (ki, &scheme) in args.schemes.iter().enumerate() {
                for s in 0..args.seeds {
                    tasks.push((ii, si, ki, scheme, s));
                }
            }
        }
    }
    let mut rows = tasks
        .par_iter()
        .map(|&(ii, si, ki, scheme, s)| {
            let img = &images[ii];
            let (h, w) = img.x.shape();
            let sr = args.srs[si];
            let plan = sampling_plan(h, w, sr)?;
            // Paired design: every scheme sees the same operator seed.
            let operator_seed = derive_seed(args.seed, &[ii as u64, si as u64, s as u64]);
            let op = SensingOperator::gaussian(scheme, plan.m, plan.n, h, w, operator_seed)?;
            let y = op.forward(&img.x)?;
            let cfg = ReconConfig {
                iterations: args.iters,
                step: args.rho,
                lambda: args.lambda,
                denoiser: denoiser_kind(args.denoiser, operator_seed),
                tolerance: args.tol,
                record_trace: false,
                power_iterations: DEFAULT_POWER_ITERATIONS,
                seed: operator_seed,
            };
            let (x, trace) = ista_reconstruct(&op, &y, &cfg)?;
            let q = quality(&x, &img.x)?;
            Ok((
                (ii, si, ki, s),
                BenchRow {
                    image_index: ii,
                    image: img.name.clone(),
                    height: h,
                    width: w,
                    sr_index: si,
                    sr,
                    m: plan.m,
                    n: plan.n,
                    sr_achieved: plan.achieved,
                    scheme,
                    seed_index: s,
                    operator_seed,
                    psnr: q.psnr,
                    ssim: q.ssim,
                    rel_error: q.rel_error,
                    iterations: trace.iterations(),
                },
            ))
        })
        .collect::<CliResult<Vec<_>>>()?;
    rows.sort_by_key(|(key, _)| *key);
    let rows: Vec<BenchRow> = rows.into_iter().map(|(_, r)| r).collect();

    let mut means = Vec::new();
    for (si, &sr) in args.srs.iter().enumerate() {
        for &scheme in &args.schemes {
            let sel = rows.iter().filter(move |r| r.sr_index == si && r.scheme == scheme);
            means.push(summarize(sel, sr, scheme));
        }
    }
    Ok((rows, means))
}

pub fn bench_csv(args: &BenchArgs, rows: &[BenchRow], means: &[BenchMean]) -> String {
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.image,
            r.height,
            r.width,
            r.sr,
            r.m,
            r.n,
            r.sr_achieved,
            r.scheme,
            r.seed_index,
            r.operator_seed,
            fmt_db(r.psnr),
            opt_cell(r.ssim),
            r.rel_error,
            r.iterations
        ));
    }
    out.push_str("# mean,image,sr,scheme,runs,mean_psnr,mean_ssim,mean_rel_error\n");
    let n_images = rows.iter().map(|r| r.image_index).max().map_or(0, |m| m + 1);
    for ii in 0..n_images {
        for (si, &sr) in args.srs.iter().enumerate() {
            for &scheme in &args.schemes {
                let sel = rows
                    .iter()
                    .filter(move |r| r.image_index == ii && r.sr_index == si && r.scheme == scheme);
                let Some(first) = sel.clone().next() else { continue };
                let m = summarize(sel, sr, scheme);
                out.push_str(&format!(
                    "# mean,{},{},{},{},{},{},{}\n",
                    first.image,
                    sr,
                    scheme,
                    m.runs,
                    fmt_db(m.mean_psnr),
                    opt_cell(m.mean_ssim),
                    m.mean_rel_error
                ));
            }
        }
    }
    for m in means {
        out.push_str(&format!(
            "# mean,*,{},{},{},{},{},{}\n",
            m.sr,
            m.scheme,
            m.runs,
            fmt_db(m.mean_psnr),
            opt_cell(m.mean_ssim),
            m.mean_rel_error
        ));
    }
    out
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult<RunManifest> {
    let start = Instant::now();
    let (rows, means) = run_bench(args)?;
    let mut manifest = RunManifest::new(Command::Bench(args.clone()), args.seed);
    write_artifact(&mut manifest, &args.out, bench_csv(args, &rows, &means).as_bytes())?;
    manifest.results = json!({ "means": means });
    manifest.wall_clock_seconds = elapsed(start);
    manifest.write(&manifest_path_for(&args.out))?;
    Ok(manifest)
}

/// Re-executes the command recorded in a manifest with its outputs moved
/// to `args.out` (a trace file keeps its name, next to the new output).
pub fn cmd_replay(args: &ReplayArgs) -> CliResult<RunManifest> {
    let recorded = RunManifest::load(&args.manifest)?;
    let out = args.out.clone();
    let command = match recorded.command {
        Command::Sense(a) => Command::Sense(SenseArgs { out, ..a }),
        Command::Reconstruct(a) => {
            let trace = a
                .trace
                .as_ref()
                .map(|t| out.with_file_name(t.file_name().unwrap_or_default()));
            Command::Reconstruct(ReconstructArgs { out, trace, ..a })
        }
        Command::Coherence(a) => Command::Coherence(CoherenceArgs { out, ..a }),
        Command::BlocksCheck(a) => Command::BlocksCheck(BlocksCheckArgs { out, ..a }),
        Command::Bench(a) => Command::Bench(BenchArgs { out, ..a }),
        Command::Replay(_) => return Err(CliError::Usage("a replay manifest cannot be replayed".into())),
    };
    run(&command)
}
