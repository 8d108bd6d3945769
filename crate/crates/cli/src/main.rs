use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use mixres_core::cgan::Cgan;
use mixres_core::eval::pipeline::{
    self, esprit_stage, evaluate_stage, generate_channels, train_cgan_stage, train_lstm_stage, CGAN_CHECKPOINT,
    DATASET_FILE, ESPRIT_ESTIMATES, LSTM_CHECKPOINT, REPORT_DIR,
};
use mixres_core::eval::{export_report, format_summary, Experiment, ExperimentConfig, NseReport};
use mixres_core::lstm::PhaseNet;
use mixres_core::{Error, Result};

/// Mixed-resolution massive MIMO channel estimation experiments.
#[derive(Parser)]
#[command(name = "mixres", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON). Overrides --preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in configuration: desk or full.
    #[arg(long, global = true, default_value = "desk")]
    preset: String,
    /// Root directory for run outputs.
    #[arg(long, global = true, env = "MIXRES_OUTPUT_ROOT", default_value = "runs")]
    output_root: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the channel parameters and fix the splits.
    GenData,
    /// Train the generator/discriminator pair.
    TrainCgan {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train the phase network on generator outputs.
    TrainLstm {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Run the ESPRIT baseline on the evaluation set.
    RunEsprit,
    /// Compute the NSE of every method and write the report files.
    Evaluate,
    /// Print the summary table of an existing report.
    Report,
    /// Print the effective configuration as JSON.
    ShowConfig,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    match &common.config {
        Some(path) => ExperimentConfig::load(path),
        None => ExperimentConfig::preset(&common.preset),
    }
}

fn load_experiment(config: ExperimentConfig, dir: &Path) -> Result<Experiment> {
    let path = dir.join(DATASET_FILE);
    if !path.exists() {
        return Err(Error::Config(format!("{} not found; run gen-data first", path.display())));
    }
    Experiment::load(config, &path)
}

fn require(path: PathBuf, producer: &str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::Config(format!("{} not found; run {producer} first", path.display())))
    }
}

fn load_cgan(dir: &Path) -> Result<Cgan> {
    let (model, epoch) = Cgan::load(&require(dir.join(CGAN_CHECKPOINT), "train-cgan")?)?;
    info!("loaded generator checkpoint from epoch {epoch}");
    Ok(model)
}

fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(&cli.common)?;
    match cli.command {
        Command::TrainCgan { epochs: Some(e) } => config.cgan.epochs = e,
        Command::TrainLstm { epochs: Some(e) } => config.lstm.epochs = e,
        _ => {}
    }
    if let Command::ShowConfig = cli.command {
        println!("{}", config.to_json());
        return Ok(());
    }
    let dir = pipeline::output_dir(&config, &cli.common.output_root)?;
    match cli.command {
        Command::GenData => {
            let exp = Experiment::generate(config.clone()).map_err(|e| e.in_stage("gen-data"))?;
            exp.save(&dir.join(DATASET_FILE))?;
            std::fs::write(dir.join("config.json"), config.to_json()).map_err(|e| Error::io(&dir, e))?;
            println!("{} channels written to {}", exp.samples.len(), dir.join(DATASET_FILE).display());
        }
        Command::TrainCgan { .. } => {
            let exp = load_experiment(config, &dir)?;
            let (_, history) = train_cgan_stage(&exp, &dir, |r| {
                println!(
                    "epoch {:>4}  loss_D {:>9.4}  loss_G {:>10.4}  l2 {:>9.4}  val_nse {:>9.5}",
                    r.epoch, r.loss_d, r.loss_g, r.l2_term, r.val_nse
                )
            })?;
            println!("checkpoint after epoch {} in {}", history.len() - 1, dir.join(CGAN_CHECKPOINT).display());
        }
        Command::TrainLstm { .. } => {
            let exp = load_experiment(config, &dir)?;
            let mut cgan = load_cgan(&dir)?;
            let (_, history) = train_lstm_stage(&exp, &mut cgan, &dir)?;
            for r in &history {
                println!("epoch {:>4}  train {:>10.6}  val {:>10.6}", r.epoch, r.train_loss, r.val_loss);
            }
        }
        Command::RunEsprit => {
            let exp = load_experiment(config, &dir)?;
            let results = esprit_stage(&exp, exp.evaluation_ids(), Some(&dir))?;
            let failed = results.values().filter(|r| r.is_err()).count();
            println!(
                "{} estimates written to {} ({failed} failed)",
                results.len() - failed,
                dir.join(ESPRIT_ESTIMATES).display()
            );
        }
        Command::Evaluate => {
            let exp = load_experiment(config, &dir)?;
            let mut cgan = load_cgan(&dir)?;
            let net = PhaseNet::load(&require(dir.join(LSTM_CHECKPOINT), "train-lstm")?)?;
            let ids = exp.evaluation_ids();
            let esprit = if exp.config.run_esprit {
                Some(esprit_stage(&exp, ids, Some(&dir))?)
            } else {
                None
            };
            let generated = generate_channels(&exp, &mut cgan, ids).map_err(|e| e.in_stage("evaluate"))?;
            let report = evaluate_stage(&exp, ids, &generated, &net, esprit.as_ref())?;
            export_report(&report, &dir.join(REPORT_DIR))?;
            print!("{}", format_summary(&report));
        }
        Command::Report => {
            let report_dir = dir.join(REPORT_DIR);
            let table = require(report_dir.join("nse_per_sample.csv"), "evaluate")?;
            let text = std::fs::read_to_string(&table).map_err(|e| Error::io(&table, e))?;
            let report = NseReport::from_csv(&text)?;
            print!("{}", format_summary(&report));
        }
        Command::ShowConfig => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
