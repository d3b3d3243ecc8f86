use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use experiments::config::DATA_DIR_ENV;
use experiments::curve::{best, curve};
use experiments::info_tests::{info_tests, replay};
use experiments::pca::latent_pca;
use experiments::rd_demo::rd_demo;
use experiments::recon::recon_dump;
use experiments::training::{classifier_path, load_classifier, run_vae, sweep, train_classifier, Data};
use experiments::{CliError, Result, Scale, Settings};
use models::{Objective, Vae};
use tensor_autodiff::Checkpoint;

#[derive(Parser)]
#[command(name = "acrd", version, about = "Goal-oriented lossy compression experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML file with [run], [classifier], [vae] and [sweep] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// full or desk
    #[arg(long, global = true)]
    scale: Option<String>,
    /// Directory holding the four Fashion-MNIST IDX files.
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Concurrent training jobs for `sweep`.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    train_limit: Option<usize>,
    #[arg(long, global = true)]
    test_limit: Option<usize>,
    #[arg(long, global = true)]
    classifier_epochs: Option<usize>,
    #[arg(long, global = true)]
    vae_epochs: Option<usize>,
    /// Batch size for both classifier and VAE training.
    #[arg(long, global = true)]
    batch_size: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Rate-distortion curve of the uniform source under Hamming distortion.
    RdDemo {
        #[arg(long, default_value_t = 4)]
        m: usize,
        /// Comma-separated slopes; defaults to a log grid plus bisected points.
        #[arg(long)]
        slopes: Option<String>,
    },
    /// Trains the frozen downstream classifier.
    TrainClassifier,
    /// Trains a single VAE.
    TrainVae {
        /// vanilla or action_centric
        #[arg(long)]
        mode: String,
        #[arg(long)]
        beta: f64,
    },
    /// Trains every beta of the selected modes.
    Sweep {
        /// Comma-separated modes.
        #[arg(long, default_value = "vanilla,action_centric")]
        modes: String,
        /// Output CSV; defaults to `<out-dir>/sweep.csv`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Merges sweep CSVs into curves and a nearest-rate pairing table.
    Curve {
        sweeps: Vec<PathBuf>,
    },
    /// Image grids of test inputs and their reconstructions.
    ReconDump {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 16)]
        n: usize,
        /// Defaults to `<out-dir>/recon/<run name>`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Principal components of the posterior-mean latents of the test set.
    Pca {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Defaults to `<out-dir>/pca/<run name>`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Randomized battery of information identities.
    InfoTests {
        #[arg(long, default_value_t = 1000)]
        count: u64,
        /// Re-check one saved instance instead.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
}

fn settings(g: &Global) -> Result<Settings> {
    let scale = g.scale.as_deref().map(str::parse::<Scale>).transpose()?;
    let mut s = Settings::from_file(g.config.as_deref(), scale)?;
    if let Some(v) = g.seed {
        s.seed = v;
    }
    if let Some(v) = &g.data_dir {
        s.data_dir = v.clone();
    }
    if let Some(v) = &g.out_dir {
        s.out_dir = v.clone();
    }
    if let Some(v) = g.jobs {
        s.jobs = v;
    }
    if g.train_limit.is_some() {
        s.train_limit = g.train_limit;
    }
    if g.test_limit.is_some() {
        s.test_limit = g.test_limit;
    }
    if let Some(v) = g.classifier_epochs {
        s.classifier_epochs = v;
    }
    if let Some(v) = g.vae_epochs {
        s.vae_epochs = v;
    }
    if let Some(v) = g.batch_size {
        s.classifier_batch = v;
        s.vae_batch = v;
    }
    s.validate()?;
    Ok(s)
}

fn run_name(checkpoint: &Path) -> String {
    checkpoint
        .parent()
        .and_then(Path::file_name)
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into())
}

fn load_vae(path: &Path) -> Result<Vae> {
    if !path.exists() {
        return Err(CliError::Validation(format!("checkpoint {} is missing", path.display())));
    }
    Ok(Vae::from_checkpoint(&Checkpoint::load(path)?)?)
}

fn parse_slopes(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| CliError::Validation(format!("bad slope {t:?}"))))
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    let s = settings(&cli.global)?;
    let meta = s.meta();
    match cli.command {
        Command::RdDemo { m, slopes } => {
            let slopes = slopes.as_deref().map(parse_slopes).transpose()?;
            if slopes.as_ref().is_some_and(Vec::is_empty) {
                return Err(CliError::Validation("slope grid is empty".into()));
            }
            let out = s.out_dir.join("rd_demo.csv");
            let demo = rd_demo(m, slopes.as_deref(), &out, &meta)?;
            println!(
                "m={m}: rate {:.6} bits at distortion {:.6} (slope {:.6}); {} points written to {}",
                demo.nearest_half.rate,
                demo.nearest_half.distortion,
                demo.nearest_half.slope,
                demo.points.len(),
                out.display()
            );
        }
        Command::TrainClassifier => {
            let data = Data::load(&s)?;
            let acc = train_classifier(&s, &data)?;
            println!("classifier test accuracy {acc:.4} on {} images", data.test.len());
        }
        Command::TrainVae { mode, beta } => {
            let objective = Objective::new(&mode, beta, s.divergence)?;
            let data = Data::load(&s)?;
            let cls = load_classifier(&classifier_path(&s))?;
            let row = run_vae(&s, &data, objective, &cls)?;
            println!(
                "{} beta={}: rate {:.3} bits, accuracy {:.4}, mse {:.5}, steps to threshold {}",
                row.mode,
                row.beta,
                row.rate_bits,
                row.accuracy,
                row.mse,
                row.steps_to_threshold.map_or("-".into(), |v| v.to_string())
            );
        }
        Command::Sweep { modes, output } => {
            let modes: Vec<&str> = modes.split(',').map(str::trim).filter(|m| !m.is_empty()).collect();
            if modes.is_empty() {
                return Err(CliError::Validation("no modes given".into()));
            }
            let data = Data::load(&s)?;
            let cls = load_classifier(&classifier_path(&s))?;
            let out = output.unwrap_or_else(|| s.out_dir.join("sweep.csv"));
            let rows = sweep(&s, &data, &cls, &modes, &out)?;
            let failed = rows.iter().filter(|r| !r.ok()).count();
            println!("{} runs, {failed} failed; written to {}", rows.len(), out.display());
        }
        Command::Curve { sweeps } => {
            let paths: Vec<&Path> = sweeps.iter().map(PathBuf::as_path).collect();
            let c = curve(&paths, &s.out_dir, &meta)?;
            for mode in ["vanilla", "action_centric"] {
                if let Some(b) = best(&c.points, mode) {
                    println!("best {mode}: beta={} rate {:.3} bits accuracy {:.4}", b.beta, b.rate_bits, b.accuracy);
                }
            }
            for p in &c.pairs {
                println!(
                    "pair: action {:.3} bits {:.4} vs vanilla {:.3} bits {:.4} (gap {:+.4})",
                    p.action.rate_bits,
                    p.action.accuracy,
                    p.vanilla.rate_bits,
                    p.vanilla.accuracy,
                    p.gap()
                );
            }
        }
        Command::ReconDump { checkpoint, n, output } => {
            let vae = load_vae(&checkpoint)?;
            let cls = load_classifier(&classifier_path(&s))?;
            let data = Data::load(&s)?;
            let out = output.unwrap_or_else(|| s.out_dir.join("recon").join(run_name(&checkpoint)));
            let mut meta = meta;
            meta.push(("checkpoint".into(), checkpoint.display().to_string()));
            let r = recon_dump(&vae, &cls, &data, n, &out, &meta)?;
            println!("mse {:.6}, downstream accuracy {:.4}; grids in {}", r.mse, r.accuracy, out.display());
        }
        Command::Pca { checkpoint, k, output } => {
            let vae = load_vae(&checkpoint)?;
            let data = Data::load(&s)?;
            let out = output.unwrap_or_else(|| s.out_dir.join("pca").join(run_name(&checkpoint)));
            let mut meta = meta;
            meta.push(("checkpoint".into(), checkpoint.display().to_string()));
            let p = latent_pca(&vae, &data.test_batch(), k, &out, &meta)?;
            for (i, (l, e)) in p.eigenvalues.iter().zip(&p.explained).enumerate() {
                println!("pc{}: eigenvalue {l:.6}, explained variance {e:.6}", i + 1);
            }
            println!("total explained {:.6}", p.explained.iter().sum::<f64>());
        }
        Command::InfoTests { count, replay: saved } => {
            if let Some(path) = saved {
                let outcomes = replay(&path)?;
                let mut ok = true;
                for o in &outcomes {
                    println!("{} {}: {:e}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.value);
                    ok &= o.passed;
                }
                if !ok {
                    return Err(CliError::Numeric(format!("{} violates an identity", path.display())));
                }
            } else {
                let r = info_tests(s.seed, count, &s.out_dir, &meta)?;
                for l in &r.lines {
                    println!("{l}");
                }
                if !r.passed {
                    return Err(CliError::Numeric("information identities violated".into()));
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("acrd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
