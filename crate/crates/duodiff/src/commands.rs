//! The six operations behind the CLI, as plain library functions.
//!
//! Every command takes a [`RunConfig`], writes its artifacts under the
//! configured output directory (plus an `effective.cfg` echo of the full
//! configuration, sorted, so a run is reproducible from its own output), and
//! returns a summary the binary prints. Nothing here touches global state;
//! given equal configuration, reruns produce byte-identical artifacts.
//!
//! Errors split into two kinds, mirroring the process exit codes: `Input`
//! for bad configuration or missing files (exit 1) and `Runtime` for
//! failures while computing (exit 2).

use crate::clients::{AsrClient, ReplayAsrClient, SubprocessClient};
use crate::config::{RunConfig, SamplerBackend};
use crate::datapipe::{curate, CurationSummary};
use crate::diffusion::{sample, GuidanceWeights, Latent, NoiseSchedule};
use crate::metrics::{evaluate, EmbeddingSet, EvalInput, EvalReport, frechet_distance, kl_divergence, EVAL_SCHEMA};
use crate::oracle::{verify_decomposition, Component, DecompositionReport, ToyWorld};
use crate::scorenet::{masked_predictor, Checkpoint, ConditionPair, ScoreNet, Trainer};
use crate::svg;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CommandError {
    /// The request itself is unusable: missing inputs, bad paths, shapes
    /// that cannot meet.
    #[error("input: {0}")]
    Input(String),
    /// The computation failed underway.
    #[error("runtime: {0}")]
    Runtime(String),
}

impl CommandError {
    /// Process exit code for this failure: input errors exit 1, runtime
    /// errors exit 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Input(_) => 1,
            CommandError::Runtime(_) => 2,
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> CommandError {
    CommandError::Input(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> CommandError {
    CommandError::Runtime(e.to_string())
}

/// FNV-1a over little-endian words. Used to derive independent seeds for
/// sweep cells and sample chains from the run seed, so cells can run in
/// parallel yet land on identical streams every run.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for byte in part.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Seed for one sweep cell, keyed by the run seed and the cell's weights.
pub fn cell_seed(seed: u64, w_desc: f64, w_cont: f64) -> u64 {
    derive_seed(&[seed, w_desc.to_bits(), w_cont.to_bits()])
}

fn prepare_out_dir(config: &RunConfig) -> Result<PathBuf, CommandError> {
    std::fs::create_dir_all(&config.out_dir).map_err(input)?;
    std::fs::write(config.out_dir.join("effective.cfg"), config.echo()).map_err(runtime)?;
    Ok(config.out_dir.clone())
}

fn write_text(path: &Path, text: &str) -> Result<(), CommandError> {
    std::fs::write(path, text).map_err(runtime)
}

fn schedule_for(config: &RunConfig) -> Result<NoiseSchedule, CommandError> {
    NoiseSchedule::linear(config.t_steps, config.beta_min, config.beta_max).map_err(input)
}

/// The analytic world every run measures itself against: a product grid
/// sized by the configured label counts on the `[-1, 1]` square, with any
/// extra coordinates unconditioned.
pub fn world_for(config: &RunConfig) -> Result<ToyWorld, CommandError> {
    if config.d < 2 {
        return Err(CommandError::Input(format!(
            "latent dimension must be at least 2 for the grid world, got {}",
            config.d
        )));
    }
    ToyWorld::product_grid(config.d, config.d_desc, config.d_cont, -1.0, 1.0, 0.3).map_err(input)
}

fn check_labels(config: &RunConfig) -> Result<(), CommandError> {
    if config.desc_label >= config.d_desc || config.cont_label >= config.d_cont {
        return Err(CommandError::Input(format!(
            "labels ({}, {}) out of range for a {}x{} world",
            config.desc_label, config.cont_label, config.d_desc, config.d_cont
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// train

#[derive(Debug)]
pub struct TrainOutcome {
    pub steps: usize,
    pub first_loss: f64,
    pub last_loss: f64,
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
    pub loss_svg: Option<PathBuf>,
}

/// Train a noise-prediction network against the grid world and leave behind
/// a loss curve and a resumable checkpoint.
pub fn cmd_train(config: &RunConfig) -> Result<TrainOutcome, CommandError> {
    let out_dir = prepare_out_dir(config)?;
    let schedule = schedule_for(config)?;
    let world = world_for(config)?;
    if config.batch_size == 0 || config.train_steps == 0 {
        return Err(CommandError::Input(
            "train_steps and batch_size must be positive".to_string(),
        ));
    }

    let net = ScoreNet::init(config.net_config()).map_err(input)?;
    let mut trainer = Trainer::new(net, config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut csv = String::from("step,loss\n");
    let mut curve = Vec::with_capacity(config.train_steps);
    let mut first_loss = f64::NAN;
    let mut last_loss = f64::NAN;
    for step in 0..config.train_steps {
        let mut batch = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            let (z0, a, b) = world.draw(None, None, &mut rng).map_err(runtime)?;
            let cond = ConditionPair::one_hot(a, config.d_desc, b, config.d_cont);
            batch.push((z0.values, cond));
        }
        let report = trainer
            .training_step(&batch, &schedule, config.dropout_p, &mut rng)
            .map_err(runtime)?;
        if step == 0 {
            first_loss = report.loss;
        }
        last_loss = report.loss;
        let _ = writeln!(csv, "{},{}", step, report.loss);
        curve.push((step as f64, report.loss));
    }

    let loss_csv = out_dir.join("loss.csv");
    write_text(&loss_csv, &csv)?;
    let checkpoint_path = out_dir.join("checkpoint.json");
    Checkpoint::new(&trainer, &rng)
        .save(&checkpoint_path)
        .map_err(runtime)?;
    let loss_svg = if config.svg {
        let path = out_dir.join("loss.svg");
        write_text(
            &path,
            &svg::line_chart("training loss", &[("loss".to_string(), curve)]),
        )?;
        Some(path)
    } else {
        None
    };

    Ok(TrainOutcome {
        steps: config.train_steps,
        first_loss,
        last_loss,
        checkpoint: checkpoint_path,
        loss_csv,
        loss_svg,
    })
}

// ---------------------------------------------------------------------------
// sample

#[derive(Debug)]
pub struct SampleOutcome {
    pub n_samples: usize,
    pub backend: &'static str,
    pub mean: Vec<f64>,
    pub csv: PathBuf,
    pub svg: Option<PathBuf>,
}

fn draw_samples(
    config: &RunConfig,
    schedule: &NoiseSchedule,
    g: &GuidanceWeights,
    base_seed: u64,
    n: usize,
) -> Result<Vec<Vec<f64>>, CommandError> {
    check_labels(config)?;
    let run = |score: &(dyn Fn(&Latent, usize, crate::diffusion::ConditionMask) -> Result<crate::diffusion::NoisePrediction, crate::diffusion::DiffusionError>

              + Sync)|
     -> Result<Vec<Vec<f64>>, CommandError> {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let chain_seed = derive_seed(&[base_seed, i as u64]);
                sample(&score, schedule, config.n_sample_steps, g, config.d, chain_seed)
                    .map(|z| z.values)
                    .map_err(runtime)
            })
            .collect()
    };
    match config.sampler_backend() {
        SamplerBackend::Oracle => {
            let world = world_for(config)?;
            let score = world.masked_score(schedule, config.desc_label, config.cont_label);
            run(&score)
        }
        SamplerBackend::Net => {
            let path = config.checkpoint.as_ref().expect("backend implies path");
            if !path.exists() {
                return Err(CommandError::Input(format!(
                    "checkpoint not found: {}",
                    path.display()
                )));
            }
            let (trainer, _) = Checkpoint::load(path).map_err(input)?.into_parts();
            let net = trainer.into_net();
            let shape = net.config();
            if config.desc_label >= shape.d_desc || config.cont_label >= shape.d_cont {
                return Err(CommandError::Input(format!(
                    "labels ({}, {}) out of range for the checkpointed {}x{} network",
                    config.desc_label, config.cont_label, shape.d_desc, shape.d_cont
                )));
            }
            let cond = ConditionPair::one_hot(
                config.desc_label,
                shape.d_desc,
                config.cont_label,
                shape.d_cont,
            );
            let score = masked_predictor(&net, &cond);
            run(&score)
        }
    }
}

/// Run the guided sampler and write the resulting latents as CSV (and a
/// scatter plot of the first two coordinates when SVG output is on).
pub fn cmd_sample(config: &RunConfig) -> Result<SampleOutcome, CommandError> {
    let out_dir = prepare_out_dir(config)?;
    let schedule = schedule_for(config)?;
    let g = GuidanceWeights::new(config.w_desc, config.w_cont).map_err(input)?;
    if config.n_samples == 0 {
        return Err(CommandError::Input("n_samples must be positive".to_string()));
    }
    let samples = draw_samples(config, &schedule, &g, config.seed, config.n_samples)?;

    let mut csv = String::from("sample");
    for i in 0..config.d {
        let _ = write!(csv, ",z{i}");
    }
    csv.push('\n');
    for (i, z) in samples.iter().enumerate() {
        let _ = write!(csv, "{i}");
        for v in z {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    let csv_path = out_dir.join("samples.csv");
    write_text(&csv_path, &csv)?;

    let svg_path = if config.svg && config.d >= 2 {
        let pts: Vec<(f64, f64)> = samples.iter().map(|z| (z[0], z[1])).collect();
        let title = format!(
            "samples at w_desc={}, w_cont={} for labels ({}, {})",
            config.w_desc, config.w_cont, config.desc_label, config.cont_label
        );
        let path = out_dir.join("samples.svg");
        write_text(&path, &svg::scatter(&title, &[("samples".to_string(), pts)]))?;
        Some(path)
    } else {
        None
    };

    let mut mean = vec![0.0; config.d];
    for z in &samples {
        for (m, v) in mean.iter_mut().zip(z) {
            *m += v / config.n_samples as f64;
        }
    }

    Ok(SampleOutcome {
        n_samples: config.n_samples,
        backend: match config.sampler_backend() {
            SamplerBackend::Oracle => "oracle",
            SamplerBackend::Net => "net",
        },
        mean,
        csv: csv_path,
        svg: svg_path,
    })
}

// ---------------------------------------------------------------------------
// sweep

/// Scores for one guidance-weight cell. The four columns are desk-scale
/// analogues of the usual generation metrics: distribution fidelity
/// (Fréchet), content correctness (posterior divergence), content pull
/// (projection), and joint alignment (mean distance).
#[derive(Clone, Debug)]
pub struct SweepCell {
    pub w_desc: f64,
    pub w_cont: f64,
    /// Mean projection of the samples onto the direction that separates the
    /// target content label from the unconditional mean.
    pub proj_content: f64,
    /// Distance from the sample mean to the target conditional mean.
    pub dist_joint_mean: f64,
    /// Fréchet distance between the sample cloud and a same-size reference
    /// cloud drawn from the true conditional.
    pub fad_component: f64,
    /// Divergence from the one-hot target to the mean posterior over content
    /// labels under the clean mixture.
    pub kl_posterior: f64,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub cells: Vec<SweepCell>,
    pub csv: PathBuf,
    pub svg: Option<PathBuf>,
}

fn mean_vec(vectors: &[Vec<f64>]) -> Vec<f64> {
    let d = vectors.first().map_or(0, |v| v.len());
    let mut m = vec![0.0; d];
    for v in vectors {
        for (mi, vi) in m.iter_mut().zip(v) {
            *mi += vi / vectors.len() as f64;
        }
    }
    m
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn log_gaussian(z: &[f64], c: &Component) -> f64 {
    let var = c.sigma * c.sigma;
    let sq: f64 = z.iter().zip(&c.mean).map(|(zi, mi)| (zi - mi) * (zi - mi)).sum();
    -0.5 * sq / var - 0.5 * z.len() as f64 * (2.0 * std::f64::consts::PI * var).ln()
}

/// Posterior over content labels given a clean latent, straight from the
/// mixture definition.
fn content_posterior(world: &ToyWorld, z: &[f64]) -> Vec<f64> {
    let mut logs = vec![f64::NEG_INFINITY; world.n_cont_labels()];
    for c in world.components() {
        let lw = c.weight.ln() + log_gaussian(z, c);
        logs[c.cont_label] = log_add_exp(logs[c.cont_label], lw);
    }
    let total = logs.iter().copied().fold(f64::NEG_INFINITY, log_add_exp);
    logs.into_iter().map(|l| (l - total).exp()).collect()
}

/// Prior-weighted mean of the components selected by the given labels.
fn conditional_mean(world: &ToyWorld, desc: Option<usize>, cont: Option<usize>) -> Vec<f64> {
    let mut mean = vec![0.0; world.dim()];
    let mut total = 0.0;
    for c in world.components() {
        if desc.map_or(true, |a| c.desc_label == a) && cont.map_or(true, |b| c.cont_label == b) {
            total += c.weight;
            for (mi, vi) in mean.iter_mut().zip(&c.mean) {
                *mi += c.weight * vi;
            }
        }
    }
    for mi in &mut mean {
        *mi /= total;
    }
    mean
}

fn score_cell(
    config: &RunConfig,
    world: &ToyWorld,
    samples: &[Vec<f64>],
    reference: &[Vec<f64>],
    w_desc: f64,
    w_cont: f64,
) -> Result<SweepCell, CommandError> {
    let b = config.cont_label;
    let target_mean = conditional_mean(world, Some(config.desc_label), Some(b));
    let uncond_mean = conditional_mean(world, None, None);
    let cont_mean = conditional_mean(world, None, Some(b));

    // Unit direction that content conditioning pulls along.
    let mut dir: Vec<f64> = cont_mean
        .iter()
        .zip(&uncond_mean)
        .map(|(c, u)| c - u)
        .collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-12 {
        for x in &mut dir {
            *x /= norm;
        }
    }

    let sample_mean = mean_vec(samples);
    let proj_content = samples
        .iter()
        .map(|z| z.iter().zip(&dir).map(|(zi, di)| zi * di).sum::<f64>())
        .sum::<f64>()
        / samples.len() as f64;
    let dist_joint_mean = sample_mean
        .iter()
        .zip(&target_mean)
        .map(|(s, t)| (s - t) * (s - t))
        .sum::<f64>()
        .sqrt();

    let gen_set = EmbeddingSet::from_vectors(samples).map_err(runtime)?;
    let ref_set = EmbeddingSet::from_vectors(reference).map_err(runtime)?;
    let fad_component = frechet_distance(&gen_set, &ref_set).map_err(runtime)?;

    let mut mean_posterior = vec![0.0; world.n_cont_labels()];
    for z in samples {
        for (acc, p) in mean_posterior.iter_mut().zip(content_posterior(world, z)) {
            *acc += p / samples.len() as f64;
        }
    }
    let mut one_hot = vec![0.0; world.n_cont_labels()];
    one_hot[b] = 1.0;
    let kl_posterior = kl_divergence(&one_hot, &mean_posterior).map_err(runtime)?;

    Ok(SweepCell {
        w_desc,
        w_cont,
        proj_content,
        dist_joint_mean,
        fad_component,
        kl_posterior,
    })
}

/// Sweep the guidance-weight grid, scoring each cell's samples against the
/// analytic world. The grid is the configured weight list crossed with
/// itself, preceded by the unguided `(0, 0)` baseline. Cells run in
/// parallel; per-cell seeds derive from the run seed and the weights, so the
/// output never depends on scheduling.
pub fn cmd_sweep(config: &RunConfig) -> Result<SweepOutcome, CommandError> {
    let out_dir = prepare_out_dir(config)?;
    let schedule = schedule_for(config)?;
    let world = world_for(config)?;
    check_labels(config)?;
    if config.n_samples < 2 {
        return Err(CommandError::Input(
            "sweeping needs at least two samples per cell".to_string(),
        ));
    }
    if config.sampler_backend() == SamplerBackend::Net {
        let path = config.checkpoint.as_ref().expect("backend implies path");
        if !path.exists() {
            return Err(CommandError::Input(format!(
                "checkpoint not found: {}",
                path.display()
            )));
        }
    }

    let mut grid: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    for &wd in &config.sweep_grid {
        for &wc in &config.sweep_grid {
            grid.push((wd, wc));
        }
    }

    let cells: Result<Vec<SweepCell>, CommandError> = grid
        .par_iter()
        .map(|&(wd, wc)| {
            let g = GuidanceWeights::new(wd, wc).map_err(input)?;
            let seed = cell_seed(config.seed, wd, wc);
            let samples = draw_samples(config, &schedule, &g, seed, config.n_samples)?;
            // Reference draws from the true conditional, on an independent
            // stream derived from the same cell seed.
            let mut ref_rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, u64::MAX]));
            let reference: Vec<Vec<f64>> = (0..config.n_samples)
                .map(|_| {
                    world
                        .draw(Some(config.desc_label), Some(config.cont_label), &mut ref_rng)
                        .map(|(z, _, _)| z.values)
                        .map_err(runtime)
                })
                .collect::<Result<_, _>>()?;
            score_cell(config, &world, &samples, &reference, wd, wc)
        })
        .collect();
    let cells = cells?;

    let mut csv =
        String::from("w_desc,w_cont,proj_content,dist_joint_mean,fad_component,kl_posterior\n");
    for c in &cells {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            c.w_desc, c.w_cont, c.proj_content, c.dist_joint_mean, c.fad_component, c.kl_posterior
        );
    }
    let csv_path = out_dir.join("sweep.csv");
    write_text(&csv_path, &csv)?;

    let svg_path = if config.svg {
        // One polyline per description weight, content weight on the x axis.
        let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        for &wd in &config.sweep_grid {
            let pts: Vec<(f64, f64)> = cells
                .iter()
                .filter(|c| c.w_desc == wd && !(c.w_desc == 0.0 && c.w_cont == 0.0))
                .map(|c| (c.w_cont, c.kl_posterior))
                .collect();
            if !pts.is_empty() {
                series.push((format!("w_desc={wd}"), pts));
            }
        }
        let path = out_dir.join("sweep.svg");
        write_text(
            &path,
            &svg::line_chart("content posterior divergence over the weight grid", &series),
        )?;
        Some(path)
    } else {
        None
    };

    Ok(SweepOutcome {
        cells,
        csv: csv_path,
        svg: svg_path,
    })
}

// ---------------------------------------------------------------------------
// eval

#[derive(Debug)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub json: PathBuf,
}

/// Score a batch of system outputs and write the aggregate report.
pub fn cmd_eval(config: &RunConfig) -> Result<EvalOutcome, CommandError> {
    let Some(input_path) = &config.eval_input else {
        return Err(CommandError::Input(
            "eval needs eval_input pointing at a batch file".to_string(),
        ));
    };
    let out_dir = prepare_out_dir(config)?;
    let text = std::fs::read_to_string(input_path)
        .map_err(|e| CommandError::Input(format!("{}: {e}", input_path.display())))?;
    let batch: EvalInput = serde_json::from_str(&text)
        .map_err(|e| CommandError::Input(format!("{}: {e}", input_path.display())))?;
    if batch.schema != EVAL_SCHEMA {
        return Err(CommandError::Input(format!(
            "unsupported eval schema {:?}, expected {EVAL_SCHEMA:?}",
            batch.schema
        )));
    }
    let report = evaluate(&batch).map_err(runtime)?;
    let json_path = out_dir.join("metrics.json");
    let json = serde_json::to_string_pretty(&report).map_err(runtime)?;
    write_text(&json_path, &json)?;
    Ok(EvalOutcome {
        report,
        json: json_path,
    })
}

// ---------------------------------------------------------------------------
// curate

#[derive(Debug)]
pub struct CurateOutcome {
    pub summary: CurationSummary,
    pub segments: PathBuf,
    pub summary_json: PathBuf,
}

fn build_asr_client(spec: &str, config: &RunConfig) -> Result<Box<dyn AsrClient>, CommandError> {
    if let Some(path) = spec.strip_prefix("replay:") {
        return Ok(Box::new(
            ReplayAsrClient::from_file(Path::new(path)).map_err(input)?,
        ));
    }
    if let Some(cmd) = spec.strip_prefix("cmd:") {
        return Ok(Box::new(
            SubprocessClient::from_spec(cmd, config.retry_policy()).map_err(input)?,
        ));
    }
    Err(CommandError::Input(format!(
        "client spec {spec:?} must start with replay: or cmd:"
    )))
}

/// Run the curation pass configured by `manifest`, `asr_primary`, and
/// `asr_secondary`, writing the labeled segment manifest and a summary.
pub fn cmd_curate(config: &RunConfig) -> Result<CurateOutcome, CommandError> {
    let Some(manifest) = &config.manifest else {
        return Err(CommandError::Input(
            "curate needs manifest pointing at a JSONL segment list".to_string(),
        ));
    };
    if !manifest.exists() {
        return Err(CommandError::Input(format!(
            "manifest not found: {}",
            manifest.display()
        )));
    }
    let (Some(primary_spec), Some(secondary_spec)) = (&config.asr_primary, &config.asr_secondary)
    else {
        return Err(CommandError::Input(
            "curate needs asr_primary and asr_secondary client specs".to_string(),
        ));
    };
    let out_dir = prepare_out_dir(config)?;
    let primary = build_asr_client(primary_spec, config)?;
    let secondary = build_asr_client(secondary_spec, config)?;
    let segments = out_dir.join("segments.jsonl");
    let summary = curate(manifest, primary.as_ref(), secondary.as_ref(), &segments)
        .map_err(runtime)?;
    let summary_json = out_dir.join("curation_summary.json");
    write_text(
        &summary_json,
        &serde_json::to_string_pretty(&summary).map_err(runtime)?,
    )?;
    Ok(CurateOutcome {
        summary,
        segments,
        summary_json,
    })
}

// ---------------------------------------------------------------------------
// oracle check

#[derive(Debug)]
pub struct OracleCheckOutcome {
    pub report: DecompositionReport,
    pub json: PathBuf,
    /// The one-line verdict the binary prints.
    pub line: String,
}

/// Verify the guidance decomposition on the analytic world and write the
/// deviation report. The verdict line reads
/// `max deviation 1.2e-13 < 1e-9, PASS` on success.
pub fn cmd_oracle_check(config: &RunConfig) -> Result<OracleCheckOutcome, CommandError> {
    if !(config.oracle_tol > 0.0) {
        return Err(CommandError::Input(format!(
            "oracle_tol must be positive, got {}",
            config.oracle_tol
        )));
    }
    let out_dir = prepare_out_dir(config)?;
    let schedule = schedule_for(config)?;
    let world = world_for(config)?;
    let report = verify_decomposition(
        &world,
        &schedule,
        config.oracle_samples,
        config.oracle_tol,
        config.seed,
    )
    .map_err(runtime)?;
    let json = out_dir.join("oracle_report.json");
    write_text(&json, &serde_json::to_string_pretty(&report).map_err(runtime)?)?;
    let line = format!(
        "max deviation {:.3e} {} {:e}, {}",
        report.max_deviation,
        if report.passed { "<" } else { ">=" },
        report.tol,
        if report.passed { "PASS" } else { "FAIL" }
    );
    Ok(OracleCheckOutcome { report, json, line })
}
