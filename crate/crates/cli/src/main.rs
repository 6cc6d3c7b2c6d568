//! `samp`: data generation, training, evaluation, visualization, ablations
//! and grouping benchmarks.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use samp_core::ablate::{ablate, threads_from_env, AblationAxis};
use samp_core::baseline::{bench_grouping, BenchReport, BenchSize};
use samp_core::baseline::VariantKind;
use samp_core::data::{write_dataset, Dataset, SceneSpec, ShapeFamily, Split, SplitSizes};
use samp_core::model::Preset;
use samp_core::train::{evaluate, Checkpoint, RunDir, TrainConfig, Trainer};
use samp_core::util::{atomic_write, read_file};
use samp_core::viz::render_grid;
use samp_core::{Result, SampError};

#[derive(Parser, Debug)]
#[command(name = "samp", version, about = "Object-centric scene decomposition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset directory.
    GenData(GenDataArgs),
    /// Train a model and write a run directory.
    Train(TrainArgs),
    /// Score a checkpoint with FG-ARI on one split.
    Eval(EvalArgs),
    /// Render reconstruction and attention grids.
    Viz(VizArgs),
    /// Train and evaluate one run per (value, seed).
    Ablate(AblateArgs),
    /// Time grouping modules across iteration counts and pixel counts.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// Scene spec JSON; overrides --family and --preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `tetromino` or `sprite`.
    #[arg(long, default_value = "tetromino")]
    family: String,
    /// Model preset whose image size the data should match.
    #[arg(long, default_value = "mini")]
    preset: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 10_000)]
    train_size: usize,
    #[arg(long, default_value_t = 1_000)]
    val_size: usize,
    #[arg(long, default_value_t = 320)]
    test_size: usize,
}

/// Flags that override fields of a training config file.
#[derive(Args, Debug)]
struct ConfigOverrides {
    /// Training config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    n_slots: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Iterations of the Slot Attention baseline.
    #[arg(long)]
    iters: Option<usize>,
}

impl ConfigOverrides {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg: TrainConfig = match &self.config {
            Some(p) => serde_json::from_slice(&read_file(p)?)?,
            None => TrainConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = &self.preset {
            cfg.preset = Preset::parse(p)?;
        }
        if let Some(v) = &self.variant {
            cfg.variant = VariantKind::parse(v)?;
        }
        if let Some(n) = self.n_slots {
            cfg.n_slots = Some(n);
        }
        if let Some(s) = self.steps {
            cfg.steps = s;
        }
        if let Some(t) = self.iters {
            cfg.iters = t;
        }
        cfg.validate()?;
        cfg.model_config()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    overrides: ConfigOverrides,
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Run directory to create.
    #[arg(long)]
    out: PathBuf,
    /// Continue from the run directory's `last` checkpoint; only `--steps`
    /// is honored among the overrides.
    #[arg(long)]
    resume: bool,
    /// Print a progress line every this many steps (0: silent).
    #[arg(long, default_value_t = 100)]
    log_every: usize,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Score only the first N samples.
    #[arg(long)]
    n: Option<usize>,
    /// Directory for the CSV and JSON reports (default: next to the checkpoint).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for slot noise of the iterative baseline.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct VizArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Number of samples to render.
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    overrides: ConfigOverrides,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// `variant` or `n_slots`.
    #[arg(long)]
    axis: String,
    /// Comma-separated values along the axis.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    /// Comma-separated training seeds.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Output directory for bench.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Iteration counts for the iterative baseline.
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,7")]
    iters: Vec<usize>,
    /// Pixel counts for the pixel sweep.
    #[arg(long, value_delimiter = ',', default_value = "256,1024,4096")]
    pixels: Vec<usize>,
    /// Timed repetitions per configuration.
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    n_slots: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Viz(a) => viz(a),
        Command::Ablate(a) => run_ablate(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let mut spec: SceneSpec = match &a.config {
        Some(p) => serde_json::from_slice(&read_file(p)?)?,
        None => SceneSpec::for_preset(ShapeFamily::parse(&a.family)?, Preset::parse(&a.preset)?, 0),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let sizes = SplitSizes {
        train: a.train_size,
        val: a.val_size,
        test: a.test_size,
    };
    let manifest = write_dataset(&spec, sizes, &a.out)?;
    println!("wrote {} (fingerprint {})", a.out.display(), manifest.fingerprint());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let data = Dataset::open(&a.data)?;
    let train = data.load(Split::Train)?;
    let dir = RunDir::create(&a.out)?;
    let mut trainer = if a.resume {
        let mut ckpt = Checkpoint::load(&dir.last_path())?;
        if let Some(steps) = a.overrides.steps {
            ckpt.config.steps = steps;
        }
        let log = read_log(&dir.metrics_path())?;
        Trainer::from_checkpoint(ckpt, log)?
    } else {
        Trainer::new(a.overrides.resolve()?)?
    };
    trainer.set_dataset_fingerprint(data.manifest.fingerprint());
    let val = if trainer.config().eval_every > 0 { Some(data.load(Split::Val)?) } else { None };
    let every = a.log_every;
    trainer.run(&train, val.as_deref(), Some(&dir), &mut |row| {
        if every > 0 && (row.step + 1) % every == 0 {
            match row.fg_ari {
                Some(f) => eprintln!("step {:>6}  loss {:.6}  lr {:.3e}  fg_ari {:.4}", row.step + 1, row.loss, row.lr, f),
                None => eprintln!("step {:>6}  loss {:.6}  lr {:.3e}", row.step + 1, row.loss, row.lr),
            }
        }
    })?;
    println!("trained {} steps; run directory {}", trainer.step(), a.out.display());
    Ok(())
}

/// Parses a metrics CSV written by a previous run.
fn read_log(path: &Path) -> Result<Vec<samp_core::train::LogRow>> {
    let text = String::from_utf8_lossy(&read_file(path)?).into_owned();
    let malformed = |reason: &str| SampError::Malformed {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut rows = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(malformed("expected 4 columns"));
        }
        rows.push(samp_core::train::LogRow {
            step: f[0].parse().map_err(|_| malformed("bad step"))?,
            loss: f[1].parse().map_err(|_| malformed("bad loss"))?,
            lr: f[2].parse().map_err(|_| malformed("bad lr"))?,
            fg_ari: if f[3].is_empty() { None } else { Some(f[3].parse().map_err(|_| malformed("bad fg_ari"))?) },
        });
    }
    Ok(rows)
}

fn load_model(ckpt: &Path) -> Result<Trainer> {
    Trainer::from_checkpoint(Checkpoint::load(ckpt)?, Vec::new())
}

fn eval(a: EvalArgs) -> Result<()> {
    let trainer = load_model(&a.ckpt)?;
    let data = Dataset::open(&a.data)?;
    let split = Split::parse(&a.split)?;
    let mut samples = data.load(split)?;
    if let Some(n) = a.n {
        samples.truncate(n);
    }
    let seed = a.seed.unwrap_or(trainer.config().seed);
    let report = evaluate(trainer.net(), trainer.store(), &samples, trainer.config().batch_size, seed)?;
    println!(
        "FG-ARI {} ({} samples): {:.4} ± {:.4}",
        split.name(),
        report.scores.len(),
        report.mean,
        report.std
    );
    let out = match a.out {
        Some(o) => o,
        None => a.ckpt.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    samp_core::util::create_dir_all(&out)?;
    atomic_write(&out.join(format!("eval_{}.csv", split.name())), report.to_csv().as_bytes())?;
    let mut summary = report.summary_json();
    summary["split"] = split.name().into();
    summary["checkpoint"] = a.ckpt.display().to_string().into();
    summary["dataset_fingerprint"] = data.manifest.fingerprint().into();
    atomic_write(
        &out.join(format!("eval_{}.json", split.name())),
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    Ok(())
}

fn viz(a: VizArgs) -> Result<()> {
    let trainer = load_model(&a.ckpt)?;
    let data = Dataset::open(&a.data)?;
    let samples = data.load(Split::parse(&a.split)?)?;
    let paths = render_grid(trainer.net(), trainer.store(), &samples, a.n, &a.out)?;
    println!("wrote {} images to {}", paths.len(), a.out.display());
    Ok(())
}

fn run_ablate(a: AblateArgs) -> Result<()> {
    let base = a.overrides.resolve()?;
    let axis = AblationAxis::parse(&a.axis)?;
    let data = Dataset::open(&a.data)?;
    let train = data.load(Split::Train)?;
    let test = data.load(Split::Test)?;
    let fp = data.manifest.fingerprint();
    let table = ablate(
        &base,
        axis,
        &a.values,
        &a.seeds,
        &train,
        &test,
        Some(&a.out),
        Some(&fp),
        threads_from_env(),
    )?;
    print!("{}", table.to_text());
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let base = BenchSize {
        p: a.pixels.first().copied().unwrap_or(256),
        n: a.n_slots,
        d: a.dim,
    };
    let warmup = 3;
    let mut report = BenchReport::default();
    for kind in [VariantKind::SlotAttention, VariantKind::Ssa] {
        report.rows.extend(bench_grouping(kind, &a.iters, &[base], a.n, warmup, a.seed)?.rows);
    }
    let p_sizes: Vec<BenchSize> = a.pixels.iter().map(|&p| BenchSize { p, ..base }).collect();
    let t_mid = a.iters.get(a.iters.len() / 2).copied().unwrap_or(3);
    for kind in [VariantKind::SlotAttention, VariantKind::Ssa] {
        report.rows.extend(
            bench_grouping(kind, &[t_mid], &p_sizes, a.n, warmup, a.seed)?
                .rows
                .into_iter()
                .filter(|r| r.p != base.p),
        );
    }
    samp_core::util::create_dir_all(&a.out)?;
    atomic_write(&a.out.join("bench.csv"), report.to_csv().as_bytes())?;
    print!("{}", report.to_csv());
    for kind in [VariantKind::SlotAttention, VariantKind::Ssa] {
        let ft = report.fit_vs_t(kind, base.p);
        let fp = report.fit_vs_p(kind, t_mid);
        println!(
            "{kind}: time vs T slope {:.4} ms/iter (R² {:.3}); time vs P slope {:.3e} ms/pixel (R² {:.3})",
            ft.slope, ft.r2, fp.slope, fp.r2
        );
    }
    Ok(())
}
