use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hiergrade::checkpoint::{load_checkpoint, save_checkpoint};
use hiergrade::config::RunConfig;
use hiergrade::dataset::Dataset;
use hiergrade::exec::ThreadPool;
use hiergrade::formats::{read_corpus, ParseOptions};
use hiergrade::report::{read_ablation, variant_confusion, write_confusion, write_json};
use hiergrade::{Error, Result};
use hiergrade_core::corpus::{split_dataset, synth_generate};
use hiergrade_core::graph::{GraphBundle, GraphOptions};
use hiergrade_core::pipeline::{ablate, evaluate, two_stage_train, Experiment};

#[derive(Parser)]
#[command(name = "hiergrade", version, about = "Hierarchical graph grading of conversation tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and write train/dev/test splits.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and validate a transcript file.
    Validate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build the three graphs of every conversation and check them.
    BuildGraphs {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write a text listing of every graph here.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Train one model (repeat 0 of the config) and save a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        repeat: usize,
    },
    /// Score a transcript file with a checkpoint.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multi-seed runs of every subset plus the sequence-only baseline.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated inventory subsets, e.g. `B+C,B+CDA,C+D`.
        #[arg(long, value_delimiter = ',')]
        subsets: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print an ablation table and optionally write a confusion matrix.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "B+CDA")]
        variant: String,
        #[arg(long)]
        confusion: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth { out, config, n, seed } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(n) = n {
                cfg.synth.n_conversations = n;
            }
            if let Some(s) = seed {
                cfg.synth.rng_seed = s;
            }
            let convs = synth_generate(&cfg.synth)?;
            let (train, dev, test) = split_dataset(convs, [0.8, 0.1, 0.1], cfg.synth.rng_seed)?;
            println!("train {} dev {} test {}", train.len(), dev.len(), test.len());
            Dataset { train, dev, test, stage1: None, words: None }.save(&out)?;
        }
        Command::Validate { data, config } => {
            let cfg = load_config(config.as_deref())?;
            let convs = read_corpus(&data, &cfg.parse_options()?)?;
            let responses: usize = convs.iter().map(|c| c.responses.len()).sum();
            println!("{}: {} conversations, {} responses, all valid", data.display(), convs.len(), responses);
        }
        Command::BuildGraphs { data, config, dump } => {
            let cfg = load_config(config.as_deref())?;
            let convs = read_corpus(&data, &cfg.parse_options()?)?;
            let opts: &GraphOptions = &cfg.model.graph;
            let mut text = String::new();
            for c in &convs {
                let bundle = GraphBundle::build(c, opts);
                bundle.check().map_err(|e| Error::Config(format!("conversation `{}`: {}", c.id, e)))?;
                text.push_str(&format!("# {}\n", c.id));
                text.push_str(&bundle.dump());
            }
            println!("{} conversations, graphs well formed", convs.len());
            if let Some(p) = dump {
                std::fs::write(&p, text).map_err(|source| Error::Io { path: p.clone(), source })?;
            }
        }
        Command::Train { config, data, out, repeat } => {
            let cfg = RunConfig::load(&config)?;
            let ds = Dataset::load(&data, &cfg)?;
            let exec = ThreadPool::from_env()?;
            let spec = cfg.train.run(repeat);
            let trained = two_stage_train(
                &cfg.model,
                &cfg.train,
                ds.stage1.as_deref(),
                &ds.train,
                &ds.dev,
                ds.words.as_ref(),
                spec,
                &exec,
            )?;
            if let Some(l) = &trained.stage1_log {
                println!("stage 1\n{}", l.render());
            }
            println!("{}", trained.log.render());
            save_checkpoint(&out, &trained.model, &trained.store)?;
            write_json(&out.join("train_log.json"), &trained.log)?;
            println!("checkpoint written to {}", out.display());
        }
        Command::Evaluate { ckpt, data, config, out } => {
            let cfg = load_config(config.as_deref())?;
            let (model, store) = load_checkpoint(&ckpt)?;
            let opts = ParseOptions { relations: model.relations.clone(), ..cfg.parse_options()? };
            let convs = read_corpus(&data, &opts)?;
            let examples = model.prepare_all(&convs)?;
            let ev = evaluate(&model, &store, &examples, &cfg.cefr()?, &ThreadPool::from_env()?)?;
            let r = &ev.report;
            println!(
                "n {} RMSE {:.3} PCC {:.3} Acc@0.5 {:.2} Acc@1.0 {:.2} mAcc@0.5 {:.2} mAcc@1.0 {:.2}",
                r.n, r.rmse, r.pcc, r.acc_05, r.acc_10, r.macro_acc_05, r.macro_acc_10
            );
            if r.pcc_undefined {
                println!("warning: predictions or references are constant, PCC reported as 0");
            }
            if let Some(p) = out {
                write_json(&p, &ev)?;
            }
        }
        Command::Ablate { config, data, subsets, out } => {
            let cfg = RunConfig::load(&config)?;
            let ds = Dataset::load(&data, &cfg)?;
            let cefr = cfg.cefr()?;
            let exp = Experiment {
                train: &ds.train,
                dev: &ds.dev,
                test: &ds.test,
                stage1: ds.stage1.as_deref(),
                words: ds.words.as_ref(),
                cefr: &cefr,
            };
            let report = ablate(&cfg.model, &cfg.train, &exp, &subsets, &ThreadPool::from_env()?)?;
            write_json(&out, &report)?;
            let table = report.to_table();
            let txt = out.with_extension("txt");
            std::fs::write(&txt, &table).map_err(|source| Error::Io { path: txt.clone(), source })?;
            print!("{}", table);
            let failed = report.failed_runs();
            if failed > 0 {
                eprintln!("{} run(s) failed", failed);
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Report { input, variant, confusion } => {
            let report = read_ablation(&input)?;
            print!("{}", report.to_table());
            for row in &report.rows {
                print!("{}", row.render());
            }
            if let Some(p) = confusion {
                let c = variant_confusion(&report, &variant)
                    .ok_or_else(|| Error::Config(format!("no successful runs of `{}` in {}", variant, input.display())))?;
                write_confusion(&p, c)?;
                print!("{}", c.to_text());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::FAILURE
        }
    }
}
