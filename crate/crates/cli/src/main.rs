use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use semcom_cli::config::{parse_snr_list, ProviderKind, RunConfig, TransferMode};
use semcom_cli::data::{self, load_model, save_model};
use semcom_cli::experiment::{self, Provider};
use semcom_cli::report::write_losses;
use semcom_cli::{CliError, MetricsReport, Result};
use semcom_core::metrics::{EmbeddingProvider, HttpEmbedding, TableEmbedding};
use semcom_core::textdata::synth::{self, Domain};
use semcom_core::textdata::Vocabulary;
use semcom_core::DeepSc;

#[derive(Parser)]
#[command(name = "semcom", version, about = "Semantic communication experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults are used for anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// SNR grid in dB, e.g. "0,3,6" or "0:3:18".
    #[arg(long, global = true)]
    snr: Option<String>,
    /// Complex channel symbols per word; disables budget matching.
    #[arg(long, global = true)]
    symbols_per_word: Option<usize>,
    /// Conventional BLEU brevity penalty instead of the printed one.
    #[arg(long, global = true)]
    standard_bleu: bool,
    /// ReLU on the MI network's output.
    #[arg(long, global = true)]
    mi_final_relu: bool,
    /// Minimize `CE + λ·MI` instead of `CE − λ·MI`.
    #[arg(long, global = true)]
    paper_loss_sign: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train a transceiver and write its checkpoint and loss history.
    Train,
    /// Score a checkpoint over the SNR grid.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Score the Huffman/fixed-length + Reed–Solomon + 64-QAM chain.
    Baseline {
        /// Model whose embeddings score similarity; omitted means BLEU only.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Mutual information between channel input and output per SNR.
    MiProbe {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Re-train a checkpoint for a new channel or new sentences.
    Transfer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Print the full configuration with every default.
    PrintConfig {
        /// The single-core desk preset instead of the full-size model.
        #[arg(long)]
        desk: bool,
    },
    /// Write a synthetic corpus, one sentence per line.
    GenCorpus {
        #[arg(long, value_enum, default_value = "parliament")]
        domain: DomainArg,
        #[arg(long, default_value_t = 3000)]
        sentences: usize,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Mode {
    Knowledge,
    Channel,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum DomainArg {
    Parliament,
    Everyday,
}

fn apply_overrides(cfg: &mut RunConfig, c: &Common) -> Result<()> {
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = &c.snr {
        cfg.eval.snr_db = parse_snr_list(s)?;
    }
    if let Some(n) = c.symbols_per_word {
        cfg.model.channel_units = 2 * n;
        cfg.eval.match_baseline_budget = false;
    }
    cfg.metrics.standard_bleu |= c.standard_bleu;
    cfg.train.mi_final_relu |= c.mi_final_relu;
    cfg.mi_probe.final_relu |= c.mi_final_relu;
    if c.paper_loss_sign {
        cfg.train.loss_sign = semcom_core::training::LossSign::Printed;
    }
    Ok(())
}

fn base_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    apply_overrides(&mut cfg, c)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Configuration of a checkpoint run: the stored one, with the sweep, metric and
/// transfer sections of `--config` and the command-line flags on top.
fn checkpoint_config(c: &Common, stored: RunConfig) -> Result<RunConfig> {
    let mut cfg = stored;
    if let Some(p) = &c.config {
        let f = RunConfig::load(p)?;
        cfg.run_id = f.run_id;
        cfg.out_dir = f.out_dir;
        cfg.eval = f.eval;
        cfg.metrics = f.metrics;
        cfg.baseline = f.baseline;
        cfg.mi_probe = f.mi_probe;
        cfg.transfer = f.transfer;
    }
    let units = cfg.model.channel_units;
    apply_overrides(&mut cfg, c)?;
    cfg.model.channel_units = units;
    cfg.validate()?;
    Ok(cfg)
}

enum AnyProvider {
    Table(TableEmbedding),
    Http(HttpEmbedding),
}

impl AnyProvider {
    fn get(&self) -> Provider<'_> {
        match self {
            AnyProvider::Table(t) => t,
            AnyProvider::Http(h) => h,
        }
    }
}

fn provider(cfg: &RunConfig, model: Option<(&DeepSc, &Vocabulary)>) -> Result<Option<AnyProvider>> {
    Ok(match cfg.metrics.provider {
        ProviderKind::HttpService => Some(AnyProvider::Http(HttpEmbedding::new(
            cfg.metrics.http.clone().with_env_override(),
        )?)),
        ProviderKind::BuiltinMeanEmbedding => match model {
            Some((m, v)) => Some(AnyProvider::Table(TableEmbedding::from_model(m, v)?)),
            None => None,
        },
    })
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::io(cfg.out_dir.display().to_string(), e))?;
    Ok(cfg.out_dir.clone())
}

fn write_report(rep: &MetricsReport, path: &Path) -> Result<()> {
    rep.write_csv(path)?;
    println!("wrote {} rows to {}", rep.len(), path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    match cli.command {
        Command::PrintConfig { desk } => {
            let mut cfg = if desk { RunConfig::desk() } else { RunConfig::default() };
            apply_overrides(&mut cfg, c)?;
            print!("{}", cfg.to_toml());
        }
        Command::GenCorpus {
            domain,
            sentences,
            output,
        } => {
            let d = match domain {
                DomainArg::Parliament => Domain::Parliament,
                DomainArg::Everyday => Domain::Everyday,
            };
            let lines = synth::generate(d, sentences, c.seed.unwrap_or(7));
            let mut text = lines.join("\n");
            text.push('\n');
            std::fs::write(&output, text).map_err(|e| CliError::io(output.display().to_string(), e))?;
        }
        Command::Train => {
            let cfg = base_config(c)?;
            let data = data::prepare(&cfg)?;
            println!(
                "{} training / {} test sentences, {} words",
                data.train.len(),
                data.test.len(),
                data.vocab.len()
            );
            let trained = experiment::train(&cfg, &data, |r| {
                println!("epoch {:>3} {:<5} ce {:.4} mi {:.4} total {:.4}", r.epoch, r.phase.name(), r.ce, r.mi_bound, r.total)
            })?;
            let dir = out_dir(&trained.config)?;
            save_model(&dir.join("model.dsc"), &trained.model, &data.vocab, &trained.config)?;
            write_losses(&dir.join("losses.csv"), &trained.reports)?;
            println!("checkpoint written to {}", dir.join("model.dsc").display());
        }
        Command::Evaluate { checkpoint } => {
            let (model, vocab, stored) = load_model(&checkpoint)?;
            let cfg = checkpoint_config(c, stored)?;
            let data = data::prepare(&cfg)?;
            let p = provider(&cfg, Some((&model, &vocab)))?;
            let rep = experiment::evaluate(&cfg, &model, &vocab, &data.test, p.as_ref().map(AnyProvider::get))?;
            write_report(&rep, &out_dir(&cfg)?.join("evaluate.csv"))?;
        }
        Command::Baseline { checkpoint } => {
            let loaded = checkpoint.as_deref().map(load_model).transpose()?;
            let cfg = match &loaded {
                Some((_, _, stored)) => checkpoint_config(c, stored.clone())?,
                None => base_config(c)?,
            };
            let data = data::prepare(&cfg)?;
            let p = provider(&cfg, loaded.as_ref().map(|(m, v, _)| (m, v)))?;
            let rep = experiment::baseline(&cfg, &data, p.as_ref().map(AnyProvider::get))?;
            write_report(&rep, &out_dir(&cfg)?.join("baseline.csv"))?;
        }
        Command::MiProbe { checkpoint } => {
            let (model, vocab, stored) = load_model(&checkpoint)?;
            let cfg = checkpoint_config(c, stored)?;
            let data = data::prepare(&cfg)?;
            let rep = experiment::mi_probe(&cfg, &model, &vocab, &data.train, "mi_probe")?;
            write_report(&rep, &out_dir(&cfg)?.join("mi_probe.csv"))?;
        }
        Command::Transfer {
            checkpoint,
            mode,
            epochs,
        } => {
            let (model, vocab, stored) = load_model(&checkpoint)?;
            let mut cfg = checkpoint_config(c, stored)?;
            if let Some(m) = mode {
                cfg.transfer.mode = match m {
                    Mode::Knowledge => TransferMode::Knowledge,
                    Mode::Channel => TransferMode::Channel,
                };
            }
            if let Some(e) = epochs {
                cfg.transfer.epochs = e;
            }
            let (trained, data) = experiment::transfer(&cfg, &model, &vocab, |r| {
                println!("epoch {:>3} {:<5} ce {:.4} mi {:.4} total {:.4}", r.epoch, r.phase.name(), r.ce, r.mi_bound, r.total)
            })?;
            let dir = out_dir(&cfg)?.join("transfer");
            save_model(&dir.join("model.dsc"), &trained.model, &data.vocab, &trained.config)?;
            write_losses(&dir.join("losses.csv"), &trained.reports)?;
            let mut rep = MetricsReport::new();
            rep.extend(experiment::loss_rows(&trained.config, "transfer", &trained.reports, data.train.len()));
            write_report(&rep, &dir.join("transfer.csv"))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[allow(dead_code)]
fn _assert_provider_object_safe(p: &dyn EmbeddingProvider) -> usize {
    p.dimension()
}
