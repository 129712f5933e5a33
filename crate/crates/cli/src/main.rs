use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qfid_cli::checkpoint::Checkpoint;
use qfid_cli::config::RunConfig;
use qfid_cli::pipeline::{self, Split};
use qfid_core::data::PIXELS;
use qfid_core::{Error, Result};

#[derive(Parser)]
#[command(name = "qfid", version, about = "Tensor-network + SWAP-test quantum classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a TOML config; writes checkpoint.json and metrics.csv.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Comma-separated digit labels, e.g. `1,5`.
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<u8>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        learning_rate: Option<f64>,
        /// Dataset directory; overrides the config and $QFID_DATA_DIR.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Accuracy and confusion matrix on a split re-derived from the checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// train, test or all.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Classify one image.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Index into the dataset's IDX files.
        #[arg(long, conflicts_with = "image", required_unless_present = "image")]
        index: Option<usize>,
        /// Raw file of 784 row-major pixel bytes.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Print the model's shape and sizes.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(pipeline::exit_code(&e) as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train {
            config,
            seed,
            epochs,
            classes,
            out,
            learning_rate,
            data,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(c) = classes {
                cfg.data.classes = c;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            if let Some(lr) = learning_rate {
                cfg.train.learning_rate = lr;
            }
            cfg.validate()?;
            let dir = cfg.data_dir(data.as_deref())?;
            let run = pipeline::train_run(&cfg, &dir, |r| {
                println!(
                    "epoch {:>3}  cost {:.6}  train {:.4}  test {}",
                    r.epoch,
                    r.mean_cost,
                    r.train_accuracy,
                    r.test_accuracy.map(|a| format!("{a:.4}")).unwrap_or_else(|| "-".into())
                );
            })?;
            let (ckpt, metrics) = pipeline::write_run(&cfg.out_dir, &run)?;
            println!("checkpoint: {}", ckpt.display());
            println!("metrics:    {}", metrics.display());
            Ok(())
        }
        Command::Eval { checkpoint, data, split } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let split: Split = split.parse()?;
            let dir = ckpt.config.data_dir(data.as_deref())?;
            let images = pipeline::load_images(&ckpt.config, &dir)?;
            let report = pipeline::evaluate(&ckpt, &images, split)?;
            println!("samples:  {}", report.samples);
            println!("accuracy: {:.4}", report.accuracy);
            println!("confusion (rows true, columns predicted):");
            print!("{:>6}", "");
            for l in &report.labels {
                print!("{l:>6}");
            }
            println!();
            for (l, row) in report.labels.iter().zip(&report.confusion) {
                print!("{l:>6}");
                for c in row {
                    print!("{c:>6}");
                }
                println!();
            }
            Ok(())
        }
        Command::Predict {
            checkpoint,
            index,
            image,
            data,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let (pixels, truth) = match (index, image) {
                (_, Some(path)) => (read_raw_image(&path)?, None),
                (Some(i), None) => {
                    let dir = ckpt.config.data_dir(data.as_deref())?;
                    let images = pipeline::load_images(&ckpt.config, &dir)?;
                    let im = images.get(i).ok_or_else(|| {
                        Error::Argument(format!("index {i} out of range (dataset has {})", images.len()))
                    })?;
                    (im.pixels.clone(), Some(im.label))
                }
                (None, None) => unreachable!("clap requires --index or --image"),
            };
            let p = pipeline::predict_pixels(&ckpt, &pixels)?;
            let label = ckpt.model.classes[p.class];
            println!("predicted: {label}");
            if let Some(t) = truth {
                println!("true:      {t}");
            }
            if ckpt.model.is_binary() {
                println!("fidelity:  {:.6} (threshold 0.5)", p.fidelities[0]);
            } else {
                for ((l, f), q) in ckpt.model.classes.iter().zip(&p.fidelities).zip(&p.probabilities) {
                    println!("class {l}: fidelity {f:.6}  probability {q:.6}");
                }
            }
            Ok(())
        }
        Command::Inspect { checkpoint } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let m = &ckpt.model;
            let c = &m.circuit;
            println!("format version:    {}", ckpt.format_version);
            println!("classes:           {:?}", m.classes);
            println!(
                "qubits:            {} data + {} trained + 1 ancilla = {}",
                c.data_qubits,
                c.trained_qubits(),
                c.total_qubits()
            );
            let layers: Vec<String> = c.layers.iter().map(ToString::to_string).collect();
            println!("layers:            {}", layers.join(", "));
            println!("circuits:          {}", m.params.len());
            println!("quantum params:    {} per circuit, {} total", c.parameter_count(), m.quantum_parameter_count());
            println!("tn tensors:        {}", m.mps.num_sites());
            println!("tn params:         {}", m.mps.parameter_count());
            println!("bond dimension:    {}", m.mps.bond_dim());
            println!("tn outputs:        {} (site {})", m.mps.n_out(), m.mps.output_site());
            println!("seed:              {}", ckpt.seed);
            println!("epochs completed:  {}", ckpt.epochs_completed);
            Ok(())
        }
    }
}

fn read_raw_image(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    if bytes.len() != PIXELS {
        return Err(Error::Format {
            path: path.to_path_buf(),
            field: "dimensions",
            message: format!("expected {PIXELS} bytes, found {}", bytes.len()),
        });
    }
    Ok(bytes)
}
