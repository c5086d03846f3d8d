use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xdsv::corpus::{gen_corpus, Corpus};
use xdsv::eval::{compare_reports, evaluate, EvalReport};
use xdsv::model::{load_checkpoint, save_checkpoint, Checkpoint, Model, Stage};
use xdsv::pipeline::{
    prepare_adapt, prepare_finetune, prepare_pretrain, run_stage, stage_checkpoint, PipelineConfig, TrainState,
};
use xdsv::{Error, Result};

#[derive(Parser)]
#[command(name = "xdsv", version, about = "Cross-domain speaker-embedding adaptation workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config; built-in defaults are used for anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed everywhere.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides one config key, e.g. `--set adapt.steps=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        for o in &self.overrides {
            cfg.set(o)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Continue this stage from one of its own intermediate checkpoints.
    #[arg(long, conflicts_with = "init")]
    resume: Option<PathBuf>,
    /// Checkpoint of the previous stage.
    #[arg(long)]
    init: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus described by the config.
    GenCorpus {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Generate the out-of-domain pretraining corpus instead.
        #[arg(long)]
        pretrain: bool,
    },
    /// Train extractor, LDE and head from scratch.
    Pretrain(TrainArgs),
    /// Fine-tune group 4, LDE and head on clean data (needs --init).
    Finetune(TrainArgs),
    /// Cross-domain adaptation (needs --init).
    Adapt(TrainArgs),
    /// Score the trials of one or more domains and write an EER report.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Domain name or index, a comma-separated list, or `all`.
        #[arg(long, default_value = "all")]
        domain: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare two EER reports.
    Report {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        adapted: PathBuf,
        /// Also write the comparison as key-value lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn train(stage: Stage, args: &TrainArgs) -> Result<()> {
    let cfg = args.config.load()?;
    let corpus = Corpus::load(&args.corpus)?;
    let fingerprint = Some(cfg.model.fingerprint());
    let (model, state) = if let Some(path) = &args.resume {
        let ck = load_checkpoint(path, fingerprint)?;
        if ck.stage != stage {
            return Err(Error::Contract(format!(
                "--resume needs a {stage} checkpoint, {} holds stage {}",
                path.display(),
                ck.stage
            )));
        }
        (Model::from_checkpoint(&ck, cfg.model.clone())?, TrainState::from_checkpoint(&ck)?)
    } else {
        let model = match (stage, &args.init) {
            (Stage::Pretrain, None) => prepare_pretrain(&corpus, &cfg)?,
            (Stage::Pretrain, Some(_)) => {
                return Err(Error::Contract("pretrain starts from scratch; use --resume to continue".into()))
            }
            (_, None) => return Err(Error::Contract(format!("{stage} needs --init CKPT"))),
            (_, Some(path)) => {
                let init = Model::from_checkpoint(&load_checkpoint(path, fingerprint)?, cfg.model.clone())?;
                if stage == Stage::Finetune {
                    prepare_finetune(init, &corpus, &cfg)?
                } else {
                    prepare_adapt(init, &corpus, &cfg)?
                }
            }
        };
        (model, TrainState::new())
    };

    let out = args.out.clone();
    let mut on_checkpoint = |ck: &Checkpoint| save_checkpoint(ck, &with_suffix(&out, &format!(".step{}", ck.step)));
    let (model, state) = run_stage(model, state, &corpus, &cfg, &mut on_checkpoint)?;
    save_checkpoint(&stage_checkpoint(&model, &state), &args.out)?;
    let log: String = state.log.iter().map(|l| format!("{l}\n")).collect();
    write_text(&with_suffix(&args.out, ".log"), &log)?;
    if let Some(last) = state.log.last() {
        println!("{stage}: {} steps, final {last}", state.step);
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenCorpus { config, out, pretrain } => {
            let cfg = config.load()?;
            let spec = if pretrain { &cfg.pretrain_corpus } else { &cfg.corpus };
            let m = gen_corpus(cfg.seed, spec, &out)?;
            println!(
                "wrote {} utterances ({} speakers, domains {}) to {}",
                m.records.len(),
                m.num_speakers,
                m.domain_names.join(","),
                out.display()
            );
            Ok(())
        }
        Command::Pretrain(a) => train(Stage::Pretrain, &a),
        Command::Finetune(a) => train(Stage::Finetune, &a),
        Command::Adapt(a) => train(Stage::Adapt, &a),
        Command::Evaluate {
            config,
            ckpt,
            corpus,
            domain,
            out,
        } => {
            let cfg = config.load()?;
            let corpus = Corpus::load(&corpus)?;
            let model = Model::from_checkpoint(&load_checkpoint(&ckpt, Some(cfg.model.fingerprint()))?, cfg.model)?;
            let domains = if domain == "all" {
                (0..corpus.manifest.num_domains()).collect()
            } else {
                domain
                    .split(',')
                    .map(|d| corpus.manifest.resolve_domain(d.trim()))
                    .collect::<Result<Vec<_>>>()?
            };
            let report = evaluate(&model, &corpus, &domains)?;
            for d in &report.domains {
                println!(
                    "{:<12} EER {:>7.3}%  ({} trials, {} targets)",
                    d.domain,
                    100.0 * d.eer,
                    d.trials,
                    d.targets
                );
            }
            write_text(&out, &report.to_kv())
        }
        Command::Report { baseline, adapted, out } => {
            let b = EvalReport::parse(&read_text(&baseline)?)?;
            let a = EvalReport::parse(&read_text(&adapted)?)?;
            let cmp = compare_reports(&b, &a)?;
            print!("{}", cmp.to_table());
            if let Some(out) = out {
                write_text(&out, &cmp.to_kv())?;
            }
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 1,
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
