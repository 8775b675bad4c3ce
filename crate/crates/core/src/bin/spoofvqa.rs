use clap::{Args, Parser, Subcommand};
use spoofvqa::model::LossKind;
use spoofvqa::pipeline::{self, ExperimentConfig, GenConfig, ScfConfig};
use spoofvqa::Result;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "spoofvqa", version, about = "Synthetic face anti-spoofing VQA toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed(s).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainFlags {
    /// Replace projected global tokens with learnable queries.
    #[arg(long)]
    ablate_gac: bool,
    /// Uniform cross-entropy over the whole answer.
    #[arg(long)]
    standard_lm_loss: bool,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    word_boundary_match: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic domains (caption corpus + feature file each).
    Gen(Common),
    /// Spoof-aware recaptioning and keyword filtering of a corpus.
    Scf {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        word_boundary_match: bool,
    },
    /// Train per seed on the source domains and evaluate on the targets.
    TrainEval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Repeat train-eval across an alpha grid with shared seeds.
    SweepAlpha {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        flags: TrainFlags,
    },
}

fn experiment(common: &Common, flags: &TrainFlags) -> Result<ExperimentConfig> {
    let mut c: ExperimentConfig = pipeline::load_config(&common.config)?;
    if let Some(s) = common.seed {
        c.seeds = vec![s];
    }
    c.train.ablate_gac |= flags.ablate_gac;
    if flags.standard_lm_loss {
        c.train.loss = LossKind::Standard;
    }
    if let Some(a) = flags.alpha {
        c.train.alpha = a;
    }
    c.train.word_boundary |= flags.word_boundary_match;
    Ok(c)
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Gen(common) => {
            let mut c: GenConfig = pipeline::load_config(&common.config)?;
            if let Some(s) = common.seed {
                c = c.with_seed(s);
            }
            for d in pipeline::cmd_gen(&c, &common.out)? {
                println!("{}: {} samples -> {}", d.domain_tag, d.n_samples, d.corpus.display());
            }
        }
        Cmd::Scf { common, word_boundary_match } => {
            let mut c: ScfConfig = pipeline::load_config(&common.config)?;
            if let Some(s) = common.seed {
                c.seed = s;
            }
            c.word_boundary |= word_boundary_match;
            let o = pipeline::cmd_scf(&c, &common.out)?;
            println!("type\tbefore\tafter");
            for r in o.stats.rows.iter().filter(|r| r.keyword == "*") {
                println!("{}\t{}\t{}", r.spoof_type, r.before, r.after);
            }
            println!("real\t{}\t{}", o.n_real, o.n_real);
            println!("dcap\t{}\t{}", o.n_real + o.n_fake, o.n_dcap);
        }
        Cmd::TrainEval { common, flags } => {
            let c = experiment(&common, &flags)?;
            let r = pipeline::cmd_train_eval(&c, &common.out)?;
            for d in &r.per_domain {
                println!("{}\tAUC {:.2}\tHTER {:.2}", d.domain_tag, d.auc.mean, d.hter.mean);
            }
            println!("avg\tAUC {:.2}\tHTER {:.2}", r.auc.mean, r.hter.mean);
        }
        Cmd::SweepAlpha { common, flags } => {
            let c = experiment(&common, &flags)?;
            for row in pipeline::cmd_sweep_alpha(&c, &common.out)? {
                println!(
                    "alpha {:.2}\tAUC {:.2}\tHTER {:.2}\tjudgment {:.2}",
                    row.alpha, row.auc.mean, row.hter.mean, row.judgment_accuracy.mean
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("spoofvqa: {msg}");
            ExitCode::FAILURE
        }
    }
}
