//! CloFormer command-line driver.
//!
//! Every subcommand prints human-readable output on stdout and exits 0 on
//! success. On failure a single machine-parsable line is written to stderr:
//! `ERROR <category>: <detail>` with a nonzero exit code. Configuration is
//! taken only from flags and config files; environment variables are never
//! consulted.

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cloformer::accounting::{count_flops, count_params};
use cloformer::analysis::branch_spectra;
use cloformer::attnconv::{attnconv_forward, build_local_ablation, LocalKind};
use cloformer::checkpoint::{load_checkpoint, save_checkpoint};
use cloformer::config::{emit_config, parse_config};
use cloformer::data::gen_synth_dataset;
use cloformer::error::{Error, Result};
use cloformer::gradcheck::run_all;
use cloformer::loss::argmax_classes;
use cloformer::model::{build_ablation, build_model, model_forward, Model, VariantSpec};
use cloformer::ops::PadMode;
use cloformer::tensor::Tensor;
use cloformer::train::{train_loop, TrainConfig};

#[derive(Parser)]
#[command(name = "cloformer", version, about = "CloFormer model toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a model variant and print its configuration and size.
    Build {
        /// Preset name: xxs, xs, s, or xxs64.
        #[arg(long)]
        variant: String,
        /// Optional key-value config file overriding preset fields.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the parameter/FLOP cost report as text and CSV.
    Cost {
        #[arg(long)]
        variant: String,
        /// Square input extent in pixels.
        #[arg(long, default_value_t = 224)]
        input: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a checkpointed model on a CLOT tensor file and print logits.
    Forward {
        #[arg(long)]
        ckpt: PathBuf,
        /// Input tensor in CLOT format, NCHW with 3 channels.
        #[arg(long)]
        input: PathBuf,
    },
    /// Verify analytic gradients against finite differences in f64.
    Gradcheck {
        /// Only check operations whose name contains this substring.
        #[arg(long)]
        module: Option<String>,
    },
    /// Check AttnConv translation equivariance under circular shifts.
    Equivariance {
        /// Padding mode: circular (exact) or zeros (shows boundary error).
        #[arg(long, default_value = "circular")]
        padding: String,
    },
    /// Train a variant on the synthetic shape dataset and save a checkpoint.
    Train {
        #[arg(long)]
        variant: String,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Number of classes (overrides the preset's classifier width).
        #[arg(long)]
        classes: Option<usize>,
        /// Dataset size; must be a positive multiple of the class count.
        #[arg(long, default_value_t = 256)]
        samples: usize,
        /// Square input extent; must be divisible by 32.
        #[arg(long, default_value_t = 64)]
        input: usize,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0.05)]
        wd: f64,
    },
    /// Write branch spectra (PGM + band CSV) for a checkpointed model.
    Spectrum {
        #[arg(long)]
        ckpt: PathBuf,
        /// Stage to tap: 2 or 3.
        #[arg(long)]
        stage: usize,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an ablated variant, run a 64x64 forward pass, report size.
    Ablate {
        /// Comma-separated knob list, e.g. local_kind=shared_only,use_k=false.
        #[arg(long)]
        knobs: String,
        #[arg(long, default_value = "xxs64")]
        variant: String,
    },
}

fn load_spec(variant: &str, config: Option<&PathBuf>) -> Result<VariantSpec> {
    let base = VariantSpec::preset(variant)?;
    match config {
        Some(path) => parse_config(&fs::read_to_string(path)?, &base),
        None => Ok(base),
    }
}

fn parse_knobs(s: &str) -> Result<Vec<(String, String)>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|pair| {
            let (k, v) = pair.split_once('=').ok_or_else(|| {
                Error::Config(format!("knob '{pair}' is not of the form key=value"))
            })?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn build_seeded(spec: &VariantSpec, seed: u64) -> Result<Model<f32>> {
    build_model(spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Build { variant, config } => {
            let spec = load_spec(&variant, config.as_ref())?;
            let m = build_seeded(&spec, 0)?;
            print!("{}", emit_config(&spec));
            println!("parameters = {}", count_params(&m).total_params);
        }
        Cmd::Cost {
            variant,
            input,
            config,
        } => {
            let spec = load_spec(&variant, config.as_ref())?;
            let m = build_seeded(&spec, 0)?;
            let report = count_flops(&m, (input, input))?;
            println!("{}", report.to_text());
            println!("{}", report.to_csv());
        }
        Cmd::Forward { ckpt, input } => {
            let m: Model<f32> = load_checkpoint(&ckpt)?;
            let x = Tensor::<f32>::read_clot(&mut fs::File::open(&input)?)?;
            let (logits, _) = model_forward(&x, &m, false)?;
            let classes = argmax_classes(&logits);
            let [n, k, _, _] = logits.dims();
            for i in 0..n {
                let row: Vec<String> = (0..k)
                    .map(|j| format!("{:.6}", logits.at(i, j, 0, 0)))
                    .collect();
                println!("sample {i}: class {} logits [{}]", classes[i], row.join(", "));
            }
        }
        Cmd::Gradcheck { module } => {
            let results = run_all(module.as_deref())?;
            if results.is_empty() {
                return Err(Error::Argument(format!(
                    "no gradient checks match module '{}'",
                    module.unwrap_or_default()
                )));
            }
            let mut failures = 0;
            for r in &results {
                println!(
                    "{:<28} rel_err {:>12.3e}  {}",
                    r.name,
                    r.rel_err,
                    if r.pass { "pass" } else { "FAIL" }
                );
                if !r.pass {
                    failures += 1;
                }
            }
            if failures > 0 {
                return Err(Error::Numeric(format!(
                    "{failures} of {} gradient checks failed",
                    results.len()
                )));
            }
            println!("all {} gradient checks passed", results.len());
        }
        Cmd::Equivariance { padding } => {
            let pad = match padding.as_str() {
                "zeros" => PadMode::Zeros,
                "circular" => PadMode::Circular,
                other => {
                    return Err(Error::Argument(format!(
                        "padding must be zeros|circular, got '{other}'"
                    )))
                }
            };
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut p = build_local_ablation::<f64>(LocalKind::Full, 8, 3, 2, pad, &mut rng)?;
            // Amplify the trunc-normal(0.02) init so boundary effects are
            // visible at O(1) activation scale instead of drowning in 1e-7.
            p.visit_mut("local", &mut |_, t| {
                for v in t.data_mut() {
                    *v *= 20.0;
                }
            });
            let q = Tensor::<f64>::rand_uniform([1, 8, 12, 12], -1.0, 1.0, &mut rng);
            let k = Tensor::<f64>::rand_uniform([1, 8, 12, 12], -1.0, 1.0, &mut rng);
            let v = Tensor::<f64>::rand_uniform([1, 8, 12, 12], -1.0, 1.0, &mut rng);
            let base = attnconv_forward(&q, &k, &v, &p)?;
            let mut worst = 0.0f64;
            for dy in 0..3i64 {
                for dx in 0..3i64 {
                    let shifted = attnconv_forward(
                        &q.circular_shift(dy, dx),
                        &k.circular_shift(dy, dx),
                        &v.circular_shift(dy, dx),
                        &p,
                    )?;
                    let expect = base.circular_shift(dy, dx);
                    let diff = shifted
                        .data()
                        .iter()
                        .zip(expect.data())
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0f64, f64::max);
                    println!("shift ({dy},{dx}): max abs diff {diff:.3e}");
                    worst = worst.max(diff);
                }
            }
            if worst >= 1e-5 {
                return Err(Error::Numeric(format!(
                    "equivariance violated under {padding} padding: max abs diff {worst:.3e}"
                )));
            }
            println!("equivariant under {padding} padding: max abs diff {worst:.3e}");
        }
        Cmd::Train {
            variant,
            steps,
            seed,
            out,
            classes,
            samples,
            input,
            batch,
            lr,
            wd,
        } => {
            let mut spec = load_spec(&variant, None)?;
            if let Some(c) = classes {
                spec.num_classes = c;
                spec.validate()?;
            }
            let ds = gen_synth_dataset::<f32>(samples, spec.num_classes, input, seed)?;
            let mut m = build_seeded(&spec, seed)?;
            let cfg = TrainConfig {
                steps,
                batch_size: batch,
                base_lr: lr,
                weight_decay: wd,
                warmup_steps: None,
                seed,
            };
            let history = train_loop(&mut m, &ds, &cfg)?;
            for rec in &history {
                println!(
                    "epoch {:>4}: loss {:.4}  accuracy {:.2}%",
                    rec.epoch,
                    rec.mean_loss,
                    100.0 * rec.accuracy
                );
            }
            save_checkpoint(&m, &out)?;
            println!("saved checkpoint to {}", out.display());
        }
        Cmd::Spectrum { ckpt, stage, out } => {
            let m: Model<f32> = load_checkpoint(&ckpt)?;
            let ds = gen_synth_dataset::<f32>(
                m.spec.num_classes,
                m.spec.num_classes,
                64,
                0,
            )?;
            let (x, _) = ds.batch(&[0]);
            let reports = branch_spectra(&m, &x, stage)?;
            fs::create_dir_all(&out)?;
            for r in &reports {
                let pgm = out.join(format!("{}.pgm", r.source));
                let csv = out.join(format!("{}.csv", r.source));
                r.write_pgm(&pgm)?;
                fs::write(&csv, r.bands_csv())?;
                println!(
                    "{}: high-band mass {:.4} -> {}, {}",
                    r.source,
                    r.high_band_mass(),
                    pgm.display(),
                    csv.display()
                );
            }
        }
        Cmd::Ablate { knobs, variant } => {
            let base = VariantSpec::preset(&variant)?;
            let spec = build_ablation(&base, &parse_knobs(&knobs)?)?;
            let m = build_seeded(&spec, 0)?;
            let x = Tensor::<f32>::rand_uniform(
                [1, 3, 64, 64],
                0.0,
                1.0,
                &mut ChaCha8Rng::seed_from_u64(0),
            );
            let (logits, _) = model_forward(&x, &m, false)?;
            println!("local_kind = {}", spec.ablation.local_kind.name());
            println!("stem = {}", spec.ablation.stem.name());
            println!("parameters = {}", count_params(&m).total_params);
            println!("forward ok: logits {:?}", logits.dims());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.cmd) {
        eprintln!("ERROR {}: {}", e.category(), e.detail());
        std::process::exit(1);
    }
}
