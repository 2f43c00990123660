//! `stmia`: simulate, extract-signals, attack, evaluate and sweep.
//!
//! Settings come from an optional TOML file (`--config`); flags override it.
//! `--print-config` prints the merged settings and exits.

mod config;
mod io;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use stmia_core::attacks::{AttackMode, AttackScore, FusionWeights, ReferenceStats};
use stmia_core::eval::sweep;
use stmia_core::pipeline;
use stmia_core::signals::{self, KeyframeMode, SignalFeature, SignalRecord};
use stmia_core::simulator;
use stmia_core::store::{Label, TruncateFrames};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "stmia", version, about = "Membership audit of text-to-video generators from frame embeddings")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the simulator, the stratified split and MLP training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when omitted (required by `simulate`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the merged configuration as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
    /// What to do when generated videos differ in frame count.
    #[arg(long, global = true, value_enum)]
    truncate_frames: Option<Truncate>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Truncate {
    Error,
    Min,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a labeled synthetic bundle (`.json` extension selects the JSON mirror).
    Simulate {
        /// Anchor a single frame per member generation.
        #[arg(long)]
        sparse_anchor: bool,
        #[arg(long)]
        n_members: Option<usize>,
        #[arg(long)]
        n_nonmembers: Option<usize>,
    },
    /// Compute per-sample signals as JSON lines.
    ExtractSignals {
        bundle: PathBuf,
        #[command(flatten)]
        signal: SignalArgs,
    },
    /// Score signals under one threat model.
    Attack {
        #[command(subcommand)]
        mode: AttackCommand,
    },
    /// Metrics report (JSON) for every score track.
    Evaluate {
        scores: PathBuf,
        /// Directory for one `fpr,tpr` CSV per track.
        #[arg(long)]
        emit_roc_csv: Option<PathBuf>,
    },
    /// Ablation tables as CSV.
    Sweep {
        #[command(subcommand)]
        kind: SweepCommand,
    },
}

#[derive(Args, Debug)]
struct SignalArgs {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    q_used: Option<usize>,
    #[arg(long, value_enum)]
    keyframe_mode: Option<Anchors>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Anchors {
    Topk,
    AllKey,
    AllFrame,
}

#[derive(Args, Debug)]
struct FusionArgs {
    #[arg(long)]
    w_srf: Option<f64>,
    #[arg(long)]
    w_tgs: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum AttackCommand {
    /// Seeded stratified split, MLP on the training side, scores for the test side.
    Supervised {
        signals: PathBuf,
        #[arg(long)]
        split_ratio: Option<f64>,
        /// Model checkpoint path; defaults to `<out>.model.json` next to `--out`.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Z-scores against non-member statistics.
    Reference {
        signals: PathBuf,
        /// Non-member signals to calibrate on; every input sample is scored.
        #[arg(long, conflicts_with = "stats")]
        reference: Option<PathBuf>,
        /// Previously written statistics; every input sample is scored.
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Statistics path; defaults to `<out>.stats.json` next to `--out`.
        #[arg(long)]
        stats_out: Option<PathBuf>,
        #[arg(long)]
        split_ratio: Option<f64>,
        #[command(flatten)]
        fusion: FusionArgs,
    },
    /// Intrinsic scores, no data beyond each sample.
    QueryOnly {
        signals: PathBuf,
        #[command(flatten)]
        fusion: FusionArgs,
    },
}

#[derive(Subcommand, Debug)]
enum SweepCommand {
    /// SRF anchor selection: each k, all-key and all-frame.
    Topk {
        /// Bundle to sweep; simulated from `[simulator]` when omitted.
        bundle: Option<PathBuf>,
        /// Simulate the sparse-anchor world instead.
        #[arg(long)]
        sparse_anchor: bool,
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<AttackMode>>,
    },
    /// Number of generations used.
    Multiq {
        bundle: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        q_values: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<AttackMode>>,
    },
    /// Reference-set size, drawing subsets from a non-member pool.
    Refsize {
        /// Signals to score.
        eval: PathBuf,
        /// Non-member signals to draw reference sets from.
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[command(flatten)]
        fusion: FusionArgs,
    },
}

fn apply_fusion(cfg: &mut RunConfig, f: &FusionArgs) {
    if let Some(w) = f.w_srf {
        cfg.attack.weights.w_srf = w;
    }
    if let Some(w) = f.w_tgs {
        cfg.attack.weights.w_tgs = w;
    }
}

/// Folds every flag into the config (flags win).
fn merge(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(t) = cli.truncate_frames {
        cfg.truncate_frames = match t {
            Truncate::Error => TruncateFrames::Error,
            Truncate::Min => TruncateFrames::Min,
        };
    }
    match &cli.command {
        Some(Command::Simulate { n_members, n_nonmembers, .. }) => {
            if let Some(n) = n_members {
                cfg.simulator.n_members = *n;
            }
            if let Some(n) = n_nonmembers {
                cfg.simulator.n_nonmembers = *n;
            }
        }
        Some(Command::ExtractSignals { signal, .. }) => {
            if let Some(k) = signal.k {
                cfg.signals.k = k;
            }
            if signal.q_used.is_some() {
                cfg.signals.q_used = signal.q_used;
            }
            if let Some(m) = signal.keyframe_mode {
                cfg.signals.keyframe_mode = match m {
                    Anchors::Topk => KeyframeMode::Topk,
                    Anchors::AllKey => KeyframeMode::AllKey,
                    Anchors::AllFrame => KeyframeMode::AllFrame,
                };
            }
        }
        Some(Command::Attack { mode }) => match mode {
            AttackCommand::Supervised { split_ratio, .. } => {
                if let Some(r) = split_ratio {
                    cfg.attack.split_ratio = *r;
                }
            }
            AttackCommand::Reference { split_ratio, fusion, .. } => {
                if let Some(r) = split_ratio {
                    cfg.attack.split_ratio = *r;
                }
                apply_fusion(&mut cfg, fusion);
            }
            AttackCommand::QueryOnly { fusion, .. } => apply_fusion(&mut cfg, fusion),
        },
        Some(Command::Sweep { kind }) => match kind {
            SweepCommand::Topk { ks, modes, .. } => {
                if let Some(ks) = ks {
                    cfg.sweep.ks = ks.clone();
                }
                if let Some(m) = modes {
                    cfg.sweep.modes = m.clone();
                }
            }
            SweepCommand::Multiq { q_values, modes, .. } => {
                if let Some(q) = q_values {
                    cfg.sweep.q_values = q.clone();
                }
                if let Some(m) = modes {
                    cfg.sweep.modes = m.clone();
                }
            }
            SweepCommand::Refsize { sizes, seeds, fusion, .. } => {
                if let Some(s) = sizes {
                    cfg.sweep.sizes = s.clone();
                }
                if let Some(s) = seeds {
                    cfg.sweep.seeds = s.clone();
                }
                apply_fusion(&mut cfg, fusion);
            }
        },
        Some(Command::Evaluate { .. }) | None => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = merge(&cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let out = cli.out.as_deref();
    match &cli.command {
        None => bail!("no command given; see --help"),
        Some(Command::Simulate { sparse_anchor, .. }) => simulate(&cfg, *sparse_anchor, out),
        Some(Command::ExtractSignals { bundle, .. }) => extract(&cfg, bundle, out),
        Some(Command::Attack { mode }) => attack(&cfg, mode, out),
        Some(Command::Evaluate { scores, emit_roc_csv }) => evaluate(scores, emit_roc_csv.as_deref(), out),
        Some(Command::Sweep { kind }) => run_sweep(&cfg, kind, out),
    }
}

fn simulate(cfg: &RunConfig, sparse: bool, out: Option<&Path>) -> Result<()> {
    let out = out.context("simulate needs --out")?;
    let bundle = if sparse {
        simulator::generate_sparse_anchor_world(&cfg.simulator)?
    } else {
        simulator::generate(&cfg.simulator)?
    };
    io::write_bundle(&bundle, out)?;
    let m = &bundle.manifest;
    eprintln!(
        "wrote {}: {} members, {} non-members, dim {}, M {}, N {}, Q {}",
        out.display(),
        bundle.members(),
        bundle.nonmembers(),
        m.dim,
        cfg.simulator.n_keyframes,
        m.n_frames,
        m.n_queries
    );
    Ok(())
}

fn extract(cfg: &RunConfig, bundle: &Path, out: Option<&Path>) -> Result<()> {
    let b = io::read_bundle(bundle, cfg.truncate_frames)?;
    let recs = signals::extract_bundle(&b, &cfg.signals)
        .with_context(|| format!("extracting signals from {}", bundle.display()))?;
    io::write_jsonl(&recs, out)
}

fn attack(cfg: &RunConfig, mode: &AttackCommand, out: Option<&Path>) -> Result<()> {
    match mode {
        AttackCommand::Supervised { signals, model_out, .. } => {
            let recs: Vec<SignalRecord> = io::read_jsonl(signals)?;
            let run = pipeline::run_supervised(&recs, &cfg.attack)?;
            io::write_jsonl(&run.scores, out)?;
            let model = run.model.expect("supervised runs return a model");
            match model_out.clone().or_else(|| out.map(|o| io::sibling(o, "model.json"))) {
                Some(p) => fs::write(&p, model.to_json()?).with_context(|| format!("writing {}", p.display()))?,
                None => eprintln!("model not saved: pass --model-out or --out"),
            }
        }
        AttackCommand::Reference { signals, reference, stats, stats_out, .. } => {
            let recs: Vec<SignalRecord> = io::read_jsonl(signals)?;
            let (scores, st) = match stats {
                Some(p) => {
                    let st: ReferenceStats = io::read_json(p)?;
                    st.validate().with_context(|| format!("statistics in {}", p.display()))?;
                    let all: Vec<&SignalRecord> = recs.iter().collect();
                    (pipeline::score_reference(&all, &st, &cfg.attack.weights)?, st)
                }
                None => {
                    let refs: Option<Vec<SignalRecord>> = reference.as_deref().map(io::read_jsonl).transpose()?;
                    if let Some(r) = &refs {
                        if let Some(m) = r.iter().find(|r| r.label() == Some(Label::Member)) {
                            bail!("reference file contains member sample {}", m.sample_id());
                        }
                    }
                    let run = pipeline::run_reference(&recs, refs.as_deref(), &cfg.attack)?;
                    (run.scores, run.stats.expect("reference runs return statistics"))
                }
            };
            io::write_jsonl(&scores, out)?;
            if stats.is_none() {
                match stats_out.clone().or_else(|| out.map(|o| io::sibling(o, "stats.json"))) {
                    Some(p) => fs::write(&p, serde_json::to_string_pretty(&st)?)
                        .with_context(|| format!("writing {}", p.display()))?,
                    None => eprintln!("statistics not saved: pass --stats-out or --out"),
                }
            }
        }
        AttackCommand::QueryOnly { signals, .. } => {
            let recs: Vec<SignalRecord> = io::read_jsonl(signals)?;
            let run = pipeline::run_query_only(&recs, &cfg.attack.weights)?;
            io::write_jsonl(&run.scores, out)?;
        }
    }
    Ok(())
}

fn roc_file_name(mode: &str) -> String {
    let safe: String = mode
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    format!("roc_{safe}.csv")
}

fn evaluate(scores: &Path, roc_dir: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let scores: Vec<AttackScore> = io::read_jsonl(scores)?;
    if scores.is_empty() {
        bail!("no scores in input");
    }
    let reports = pipeline::evaluate(&scores)?;
    if let Some(dir) = roc_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for r in &reports {
            let path = dir.join(roc_file_name(&r.mode));
            let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
            w.write_record(["fpr", "tpr"])?;
            for [fpr, tpr] in &r.roc {
                w.serialize((fpr, tpr))?;
            }
            w.flush()?;
        }
    }
    let mut text = serde_json::to_string_pretty(&reports)?;
    text.push('\n');
    io::write_text(&text, out)
}

fn sweep_bundle(cfg: &RunConfig, bundle: Option<&Path>, sparse: bool) -> Result<stmia_core::store::AuditBundle> {
    match bundle {
        Some(p) => io::read_bundle(p, cfg.truncate_frames),
        None if sparse => Ok(simulator::generate_sparse_anchor_world(&cfg.simulator)?),
        None => Ok(simulator::generate(&cfg.simulator)?),
    }
}

fn run_sweep(cfg: &RunConfig, kind: &SweepCommand, out: Option<&Path>) -> Result<()> {
    let s = &cfg.sweep;
    let csv = match kind {
        SweepCommand::Topk { bundle, sparse_anchor, .. } => {
            let b = sweep_bundle(cfg, bundle.as_deref(), *sparse_anchor)?;
            sweep::to_csv(&sweep::sweep_topk(&b, &s.ks, &s.modes, &cfg.signals, &cfg.attack)?)?
        }
        SweepCommand::Multiq { bundle, .. } => {
            let b = sweep_bundle(cfg, bundle.as_deref(), false)?;
            sweep::to_csv(&sweep::sweep_multi_q(&b, &s.q_values, &s.modes, &cfg.signals, &cfg.attack)?)?
        }
        SweepCommand::Refsize { eval, pool, .. } => {
            let features = |p: &Path| -> Result<Vec<SignalFeature>> {
                Ok(io::read_jsonl::<SignalRecord>(p)?.into_iter().map(|r| r.feature).collect())
            };
            let pool = features(pool)?;
            if let Some(m) = pool.iter().find(|f| f.label == Some(Label::Member)) {
                bail!("pool contains member sample {}", m.sample_id);
            }
            let w: &FusionWeights = &cfg.attack.weights;
            sweep::to_csv(&sweep::sweep_reference_size(&pool, &features(eval)?, &s.sizes, &s.seeds, w)?)?
        }
    };
    io::write_text(&csv, out)
}
