//! Command-line front end: train, evaluate, gradient-check, render
//! synthetic datasets, and run single-image inference.

use clap::{Parser, Subcommand};
use pfanet_core::data::{generate_synth, save_sample, Dataset, SynthSceneSpec};
use pfanet_core::error::{Error, Result};
use pfanet_core::gradcheck::run_suite;
use pfanet_core::scalar::{Dtype, Scalar};
use pfanet_core::train::{
    checkpoint_dtype, evaluate_dataset, load_checkpoint, predict_png, train_dispatch,
    TrainConfig,
};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pfanet",
    version,
    about = "Monocular depth estimation with pyramid feature attention"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model as described by a config file.
    Train {
        /// Flat `key = value` config file.
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint to continue from; the config must match the run
        /// that wrote it.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint against a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset root containing rgb/ and depth/ subdirectories.
        #[arg(long)]
        data: PathBuf,
        /// Split file under the dataset root; a missing file means
        /// every image in rgb/ is scored.
        #[arg(long, default_value = "val.txt")]
        split: String,
        /// Also write predicted depth maps (16-bit PNG) and false-color
        /// previews into this directory.
        #[arg(long)]
        dump_depth: Option<PathBuf>,
        /// Write per-sample metrics as CSV to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients against central finite differences.
    Gradcheck {
        /// Relative-error tolerance for single operations; the
        /// end-to-end model check allows 10x this value.
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Render deterministic synthetic scenes as a dataset directory.
    Synth {
        /// Flat `key = value` scene description.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of scenes; scene i reuses the spec with seed + i.
        #[arg(long)]
        count: u64,
    },
    /// Predict depth for one RGB image.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input RGB PNG with sides divisible by 32.
        #[arg(long)]
        image: PathBuf,
        /// Output depth PNG (16-bit, 1/256 m per unit).
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    // clap exits usage errors with status 2 by default, which this tool
    // reserves for numeric failures. Help and version requests also land
    // in the error branch and must keep status 0.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train { config, resume } => cmd_train(&config, resume.as_deref()),
        Command::Eval {
            checkpoint,
            data,
            split,
            dump_depth,
            out,
        } => cmd_eval(&checkpoint, &data, &split, dump_depth.as_deref(), out.as_deref()),
        Command::Gradcheck { tol } => cmd_gradcheck(tol),
        Command::Synth { spec, out, count } => cmd_synth(&spec, &out, count),
        Command::Predict {
            checkpoint,
            image,
            out,
        } => cmd_predict(&checkpoint, &image, &out),
    }
}

fn cmd_train(config: &Path, resume: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(config)?;
    let cfg = TrainConfig::parse(&text)?;
    let outcome = train_dispatch(&cfg, resume)?;
    println!(
        "ran {} step(s); log {}; checkpoint {}",
        outcome.steps_run,
        outcome.log_path.display(),
        outcome.final_checkpoint.display()
    );
    if let Some(last) = outcome.logs.last() {
        println!("final loss {}", last.total);
    }
    Ok(())
}

fn cmd_eval(
    checkpoint: &Path,
    data: &Path,
    split: &str,
    dump: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    match checkpoint_dtype(checkpoint)? {
        Dtype::F32 => eval_at::<f32>(checkpoint, data, split, dump, out),
        Dtype::F64 => eval_at::<f64>(checkpoint, data, split, dump, out),
    }
}

fn eval_at<T: Scalar>(
    checkpoint: &Path,
    data: &Path,
    split: &str,
    dump: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let ckpt = load_checkpoint::<T>(checkpoint)?;
    let dataset = Dataset::open(data, split)?;
    let outcome = evaluate_dataset(&ckpt.model, &dataset, dump)?;
    for (id, why) in &outcome.skipped {
        eprintln!("warning: skipping {id}: {why}");
    }
    print!("{}", outcome.to_table());
    if let Some(path) = out {
        fs::write(path, outcome.to_csv())?;
        println!("metrics written to {}", path.display());
    }
    if outcome.per_sample.is_empty() {
        return Err(Error::InvalidArgument(
            "no sample could be evaluated".into(),
        ));
    }
    Ok(())
}

fn cmd_gradcheck(tol: f64) -> Result<()> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    let report = run_suite(tol, tol * 10.0)?;
    for entry in &report.entries {
        println!(
            "{:40} max rel err {:.3e} over {:3} probes (tol {:.1e}) {}",
            entry.name,
            entry.max_rel_err,
            entry.probes,
            entry.tol,
            if entry.pass() { "ok" } else { "FAIL" }
        );
    }
    let failed = report.entries.iter().filter(|e| !e.pass()).count();
    println!(
        "{} component(s), worst {:.3e}",
        report.entries.len(),
        report.worst()
    );
    if failed > 0 {
        return Err(Error::Numeric(format!(
            "{failed} gradient check(s) exceeded tolerance"
        )));
    }
    Ok(())
}

fn cmd_synth(spec_path: &Path, out: &Path, count: u64) -> Result<()> {
    if count == 0 {
        return Err(Error::Config("count must be at least 1".into()));
    }
    let spec = SynthSceneSpec::parse(&fs::read_to_string(spec_path)?)?;
    let mut ids = Vec::with_capacity(count as usize);
    for i in 0..count {
        let scene = SynthSceneSpec {
            seed: spec.seed.wrapping_add(i),
            ..spec.clone()
        };
        let sample = generate_synth(&scene)?;
        save_sample(out, &sample)?;
        ids.push(sample.id);
    }
    fs::write(out.join("train.txt"), ids.join("\n") + "\n")?;
    println!("wrote {count} scene(s) under {}", out.display());
    Ok(())
}

fn cmd_predict(checkpoint: &Path, image: &Path, out: &Path) -> Result<()> {
    match checkpoint_dtype(checkpoint)? {
        Dtype::F32 => {
            let ckpt = load_checkpoint::<f32>(checkpoint)?;
            predict_png(&ckpt.model, image, out)?;
        }
        Dtype::F64 => {
            let ckpt = load_checkpoint::<f64>(checkpoint)?;
            predict_png(&ckpt.model, image, out)?;
        }
    }
    println!("depth written to {}", out.display());
    Ok(())
}
