use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use impulse_core::dnn::{parse_model, write_loss_trace, write_model, MlpParams};
use impulse_core::harness::dataset::{generate_dataset, parse_dataset, train_detector, write_dataset};
use impulse_core::harness::evaluate::{evaluate_detector, write_report};
use impulse_core::harness::link::NoiseScenario;
use impulse_core::harness::sweep::{ber_sweep, build_policies, curve_metadata, parse_curve, plot_table, write_curve};
use impulse_core::harness::{metadata, ExperimentConfig};
use impulse_core::mitigation::Detector;

/// OFDM link simulator with learned impulsive-noise detection.
#[derive(Parser)]
#[command(name = "impulse", version)]
struct Cli {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override a configuration key, e.g. `--set noise.epsilon=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled, shuffled feature dataset.
    GenDataset {
        #[arg(long)]
        out: PathBuf,
        /// Number of OFDM symbols.
        #[arg(long)]
        symbols: Option<usize>,
    },
    /// Train the detector network on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss trace CSV.
        #[arg(long)]
        loss_out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Detection, false-alarm and missed-detection rates on labeled blocks.
    Evaluate {
        /// Trained model; without it the Neyman-Pearson detector is scored.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        noise: NoiseArgs,
        /// Eb/N0 of the evaluation blocks in dB.
        #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
        ebn0: f64,
        #[arg(long, default_value_t = 200)]
        symbols: usize,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo BER versus Eb/N0, one CSV per policy.
    BerSweep {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Trained model for the `dnn-blank` policy.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        noise: NoiseArgs,
        /// Comma-separated Eb/N0 grid in dB.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        ebn0: Option<Vec<f64>>,
        /// Comma-separated policy names.
        #[arg(long, value_delimiter = ',')]
        policies: Option<Vec<String>>,
        /// Equalize with the true channel instead of pilot estimates.
        #[arg(long)]
        perfect_csi: bool,
        /// Permute received samples before impulse detection.
        #[arg(long)]
        time_interleaver: bool,
    },
    /// Merge curve CSVs into one plot-ready table.
    PlotData {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        curves: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct NoiseArgs {
    /// Noise model: awgn, bg, mca or sas.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    epsilon: Option<f64>,
    /// Signal-to-impulse ratio in dB.
    #[arg(long, allow_negative_numbers = true)]
    sir: Option<f64>,
    #[arg(long)]
    burst_len: Option<usize>,
    /// Characteristic exponent of alpha-stable noise.
    #[arg(long)]
    alpha: Option<f64>,
    /// Impulsive index of Middleton class A noise.
    #[arg(long)]
    impulsive_index: Option<f64>,
}

impl NoiseArgs {
    fn overrides(&self, out: &mut Vec<(String, String)>) {
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        push("noise.model", self.noise.as_ref().map(|s| format!("{s:?}")));
        push("noise.epsilon", self.epsilon.map(|v| format!("{v:?}")));
        push("noise.sir_db", self.sir.map(|v| format!("{v:?}")));
        push("noise.burst_len", self.burst_len.map(|v| v.to_string()));
        push("noise.alpha", self.alpha.map(|v| format!("{v:?}")));
        push("noise.impulsive_index", self.impulsive_index.map(|v| format!("{v:?}")));
    }
}

fn load_config(cli: &Cli, mut extra: Vec<(String, String)>) -> Result<ExperimentConfig> {
    let mut overrides = Vec::new();
    for s in &cli.set {
        let (k, v) = s.split_once('=').with_context(|| format!("`--set {s}` is not KEY=VALUE"))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    overrides.append(&mut extra);
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    let text = match &cli.config {
        Some(path) => fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?,
        None => String::new(),
    };
    let cfg = ExperimentConfig::from_toml(&text, &overrides).context("invalid configuration")?;
    Ok(cfg)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn read_model(path: &Path) -> Result<MlpParams> {
    let text = fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    parse_model(&text).with_context(|| format!("parsing model {}", path.display()))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenDataset { out, symbols } => {
            let extra = symbols.map(|n| vec![("dataset.n_symbols".into(), n.to_string())]).unwrap_or_default();
            let cfg = load_config(cli, extra)?;
            let ds = generate_dataset(&cfg)?;
            let mut meta = metadata(&cfg);
            meta.push(("symbols", cfg.dataset.n_symbols.to_string()));
            write(out, &write_dataset(&ds, &meta))?;
            println!("{} rows, impulse rate {:.4}", ds.len(), ds.impulse_rate());
        }
        Command::Train {
            dataset,
            out,
            loss_out,
            epochs,
        } => {
            let extra = epochs.map(|n| vec![("train.epochs".into(), n.to_string())]).unwrap_or_default();
            let cfg = load_config(cli, extra)?;
            let text = fs::read_to_string(dataset).with_context(|| format!("reading dataset {}", dataset.display()))?;
            let ds = parse_dataset(&text, cfg.dataset.half_width)
                .with_context(|| format!("parsing dataset {}", dataset.display()))?;
            if ds.is_empty() {
                bail!("dataset {} has no rows", dataset.display());
            }
            let trained = train_detector(&cfg, &ds)?;
            let meta = metadata(&cfg);
            write(out, &write_model(&trained.params, &meta))?;
            if let Some(path) = loss_out {
                write(path, &write_loss_trace(&trained.loss_trace, &meta))?;
            }
            let first = trained.loss_trace[0];
            let last = *trained.loss_trace.last().unwrap();
            println!("loss {first:.6} -> {last:.6} over {} epochs", trained.loss_trace.len() - 1);
        }
        Command::Evaluate {
            model,
            noise,
            ebn0,
            symbols,
            out,
        } => {
            let mut extra = Vec::new();
            noise.overrides(&mut extra);
            let cfg = load_config(cli, extra)?;
            let detector = match model {
                Some(path) => Detector::Dnn {
                    model: Box::new(read_model(path)?),
                    threshold: cfg.detectors.dnn_threshold,
                },
                None => Detector::NeymanPearson {
                    p_fa: cfg.detectors.p_fa,
                },
            };
            let counts = evaluate_detector(&cfg, &detector, *ebn0, *symbols)?;
            let mut meta = metadata(&cfg);
            meta.push(("noise", NoiseScenario::from_config(&cfg)?.describe()));
            meta.push(("detector", if model.is_some() { "dnn" } else { "np" }.into()));
            meta.push(("ebn0_db", ebn0.to_string()));
            let report = write_report(&counts, &meta);
            print!("{report}");
            if let Some(path) = out {
                write(path, &report)?;
            }
        }
        Command::BerSweep {
            out,
            model,
            noise,
            ebn0,
            policies,
            perfect_csi,
            time_interleaver,
        } => {
            let mut extra = Vec::new();
            noise.overrides(&mut extra);
            if let Some(grid) = ebn0 {
                let list: Vec<String> = grid.iter().map(|v| format!("{v:?}")).collect();
                extra.push(("sweep.ebn0_db".into(), format!("[{}]", list.join(", "))));
            }
            if let Some(names) = policies {
                let list: Vec<String> = names.iter().map(|v| format!("{v:?}")).collect();
                extra.push(("detectors.policies".into(), format!("[{}]", list.join(", "))));
            }
            if *perfect_csi {
                extra.push(("receiver.perfect_csi".into(), "true".into()));
            }
            if *time_interleaver {
                extra.push(("receiver.time_interleaver".into(), "true".into()));
            }
            let cfg = load_config(cli, extra)?;
            let model_path = model.clone().or_else(|| cfg.detectors.model.as_ref().map(PathBuf::from));
            let model = model_path.as_deref().map(read_model).transpose()?;
            let policies = build_policies(&cfg, model.as_ref())?;
            let curves = ber_sweep(&cfg, &policies)?;
            let meta = curve_metadata(&cfg)?;
            fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            for curve in &curves {
                let path = out.join(format!("ber_{}.csv", curve.detector));
                write(&path, &write_curve(curve, &meta))?;
                println!("{}", path.display());
            }
        }
        Command::PlotData { out, curves } => {
            let mut parsed = Vec::new();
            let mut first_meta = None;
            for path in curves {
                let text = fs::read_to_string(path).with_context(|| format!("reading curve {}", path.display()))?;
                let (curve, meta) = parse_curve(&text).with_context(|| format!("parsing curve {}", path.display()))?;
                first_meta.get_or_insert(meta);
                parsed.push(curve);
            }
            let meta: Vec<(&str, String)> = first_meta
                .iter()
                .flatten()
                .map(|(k, v)| (k.as_str(), v.clone()))
                .collect();
            write(out, &plot_table(&parsed, &meta))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
