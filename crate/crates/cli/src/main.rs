use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use smcae_cli::config::{parse_widths, ExperimentKind};
use smcae_cli::cufsf::{run_cufsf_experiment, FaceFeatures};
use smcae_cli::data::{load_image_pairs, read_matrix_csv, write_bitmaps, write_matrix_csv};
use smcae_cli::digits::{load_digit_split, run_digits_experiment, sample_digits, synthesize, DigitAssets};
use smcae_cli::gradcheck::{run_gradcheck, GradcheckOptions};
use smcae_cli::output::{CsvSink, Manifest};
use smcae_cli::sweep::run_gamma_sweep;
use smcae_cli::toy::gap_data;
use smcae_cli::ExperimentConfig;
use smcae_core::smcae::{load_model, save_model, train_stack};
use smcae_core::synthgen::{write_shapes, ShapeRecord};
use smcae_core::Variant;

#[derive(Parser)]
#[command(name = "smcae", version, about = "Stacked multichannel autoencoder experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// TOML configuration file; defaults apply to anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` override of any configuration entry, e.g. `smcae.gamma=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Comma-separated hidden widths, e.g. `256,256`.
    #[arg(long)]
    layer_sizes: Option<String>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// digits, cufsf or toy-gap.
    #[arg(long)]
    experiment: Option<String>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut sets = self.set.clone();
        if let Some(s) = self.seed {
            sets.push(format!("seed={s}"));
        }
        if let Some(d) = &self.output_dir {
            sets.push(format!("output_dir={}", toml::Value::String(d.display().to_string())));
        }
        if let Some(w) = self.workers {
            sets.push(format!("workers={w}"));
        }
        if let Some(v) = self.variant {
            sets.push(format!("variant=\"{v}\""));
        }
        if let Some(g) = self.gamma {
            sets.push(format!("smcae.gamma={g:?}"));
        }
        if let Some(l) = &self.layer_sizes {
            sets.push(format!("smcae.layer_sizes={:?}", parse_widths(l)?));
        }
        if let Some(m) = self.max_iterations {
            sets.push(format!("smcae.max_iterations={m}"));
        }
        if let Some(e) = &self.experiment {
            sets.push(format!("experiment=\"{e}\""));
        }
        ExperimentConfig::resolve(self.config.as_deref(), &sets)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on the configured experiment's pairs and save it.
    Train(Common),
    /// Map rows of a feature CSV through a saved model.
    Transform {
        #[arg(long)]
        model: PathBuf,
        /// Headerless comma-separated feature rows.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Synthesize digits from the training bitmaps.
    GenerateDigits {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
    },
    /// Full digit classification experiment.
    EvalDigits(Common),
    /// Sketch-to-photo retrieval experiment on user-supplied face data.
    EvalCufsf(Common),
    /// Retrain across the balance-weight grid.
    GammaSweep(Common),
    /// Finite-difference check of the analytic gradients.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Comma-separated balance weights.
        #[arg(long, default_value = "0,1,50")]
        gammas: String,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long, hide = true, default_value_t = 1.0)]
        sabotage_scale: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(c) => train(&c.resolve()?)?,
        Command::Transform { model, input, output } => transform(&model, &input, &output)?,
        Command::GenerateDigits { common, per_class } => generate_digits(&common.resolve()?, per_class)?,
        Command::EvalDigits(c) => {
            let r = run_digits_experiment(&c.resolve()?)?;
            print!("{}", r.metrics);
        }
        Command::EvalCufsf(c) => {
            let cfg = ExperimentConfig { experiment: ExperimentKind::Cufsf, ..c.resolve()? };
            let r = run_cufsf_experiment(&cfg)?;
            println!("raw rank1 = {} auc = {} vr = {}", r.raw.rank1, r.raw.auc, r.raw.vr);
            println!("{} rank1 = {} auc = {} vr = {}", cfg.variant, r.transformed.rank1, r.transformed.auc, r.transformed.vr);
        }
        Command::GammaSweep(c) => {
            for r in run_gamma_sweep(&c.resolve()?)? {
                println!("gamma {} seed {}: {} {:?} iterations {}", r.gamma, r.seed, r.metric, r.value, r.iterations);
            }
        }
        Command::Gradcheck { common, gammas, seeds, sabotage_scale } => {
            return gradcheck(&common.resolve()?, &gammas, seeds, sabotage_scale);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn train(cfg: &ExperimentConfig) -> Result<()> {
    let smcae = cfg.smcae_for_seed(cfg.seed);
    let (model, source) = match cfg.experiment {
        ExperimentKind::Digits => {
            let (train, _) = load_digit_split(cfg)?;
            let assets = DigitAssets::build(&train, &[], &cfg.digits.synth, &cfg.hog, cfg.workers)?;
            (assets.train_model(cfg.variant, &smcae)?, "hog-bitmaps")
        }
        ExperimentKind::Cufsf => {
            let split = load_image_pairs(&cfg.data.photo_dir, &cfg.data.sketch_dir, &cfg.data.split_file)?;
            let (f, scaler) = FaceFeatures::from_split(&split, cfg.data.face_size, &cfg.hog)?;
            let mut m = train_stack(f.train_sketch.view(), f.train_photo.view(), cfg.variant, &smcae)?;
            m.scaler = Some(scaler);
            (m, "hog-faces")
        }
        ExperimentKind::ToyGap => {
            let d = gap_data(&cfg.toy, cfg.seed);
            (train_stack(d.train_s.view(), d.train_r.view(), cfg.variant, &smcae)?, "toy-gap")
        }
        ExperimentKind::Gradcheck => bail!("nothing to train for the gradcheck experiment"),
    };
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("model.json");
    save_model(&model, &path)?;
    info!("saved {} ({} iterations)", path.display(), model.total_iterations());
    let mut manifest = Manifest::new("train", cfg);
    manifest.feature_source = Some(source.into());
    manifest.add_output(dir, &path)?;
    manifest.write(dir)?;
    Ok(())
}

/// Applies the model's stored scaler, if any, before the transform.
fn transform(model: &Path, input: &Path, output: &Path) -> Result<()> {
    let m = load_model(model).with_context(|| format!("loading {}", model.display()))?;
    let x = read_matrix_csv(input)?;
    let x = match &m.scaler {
        Some(s) => s.transform(x.view())?,
        None => x,
    };
    let y = m.transform(x.view())?;
    write_matrix_csv(output, y.view())?;
    info!("wrote {} rows to {}", y.nrows(), output.display());
    Ok(())
}

fn generate_digits(cfg: &ExperimentConfig, per_class: usize) -> Result<()> {
    if per_class == 0 {
        bail!("--per-class must be positive");
    }
    let (train, _) = load_digit_split(cfg)?;
    let synthesis = synthesize(&train, &cfg.digits.synth, cfg.workers)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let sampled = sample_digits(&synthesis.distributions, per_class, cfg.seed)?;
    let synthetic = dir.join("synthetic.tra");
    write_bitmaps(BufWriter::new(File::create(&synthetic)?), &["sampled synthetic digits"], &sampled)?;

    let partners: Vec<_> = synthesis
        .counterparts
        .iter()
        .zip(&train)
        .map(|(img, real)| smcae_cli::data::LabeledBitmap { image: img.clone(), label: real.label })
        .collect();
    let counterparts = dir.join("counterparts.tra");
    write_bitmaps(BufWriter::new(File::create(&counterparts)?), &["migrated partners of the training bitmaps"], &partners)?;

    let shapes = dir.join("shapes.txt");
    let records: Vec<ShapeRecord> = synthesis
        .shapes
        .iter()
        .map(|s| ShapeRecord { shape: s.clone(), width: 32, height: 32 })
        .collect();
    write_shapes(BufWriter::new(File::create(&shapes)?), &records)?;

    let ious = dir.join("iou.csv");
    let mut sink = CsvSink::create(&ious)?;
    for (i, ((a, b), real)) in synthesis.ious.iter().zip(&train).enumerate() {
        sink.push((i, real.label, *a, *b))?;
    }
    sink.finish()?;
    let (m0, m1) = synthesis.mean_iou();
    println!("mean iou {m0:.4} -> {m1:.4} over {} bitmaps; {} synthetic digits", train.len(), sampled.len());

    let mut manifest = Manifest::new("generate-digits", cfg);
    manifest.feature_source = Some("bitmaps".into());
    for p in [&synthetic, &counterparts, &shapes, &ious] {
        manifest.add_output(dir, p)?;
    }
    manifest.write(dir)?;
    Ok(())
}

fn gradcheck(cfg: &ExperimentConfig, gammas: &str, seeds: usize, sabotage_scale: f64) -> Result<ExitCode> {
    let gammas = gammas
        .split(',')
        .map(|g| g.trim().parse::<f64>().with_context(|| format!("bad gamma {g:?}")))
        .collect::<Result<Vec<_>>>()?;
    let opts = GradcheckOptions { gammas, seeds, seed: cfg.seed, sabotage_scale, ..Default::default() };
    let report = run_gradcheck(&opts)?;
    println!("{report}");

    let dir = &cfg.output_dir;
    let path = dir.join("gradcheck.csv");
    let mut sink = CsvSink::create(&path)?;
    for b in &report.blocks {
        sink.push(b.clone())?;
    }
    sink.finish()?;
    let mut manifest = Manifest::new("gradcheck", cfg);
    manifest.add_output(dir, &path)?;
    manifest.write(dir)?;
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
