use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use chatabl::abduction::{abduce_batch, BatchOptions, HypothesisState, Outcome};
use chatabl::abl::{reading_accuracy, run_abl_with, LoopConfig, ReasonerKind, STATS_HEADER};
use chatabl::dataset::{generate_dataset_from, read_dataset, write_dataset, GenConfig};
use chatabl::experiment::{run_experiment, ExperimentConfig};
use chatabl::glyph::ingest_glyphs;
use chatabl::kb::KnowledgeBase;
use chatabl::llm::{Backend, LiveBackend, RecordingBackend, ReplayBackend, RequestConfig};
use chatabl::metrics::compute_metrics;
use chatabl::perception::{Batch, PerceptionModel};

#[derive(Parser)]
#[command(name = "chatabl", version, about = "Abductive learning on handwritten binary equations")]
struct Cli {
    /// JSON configuration for the chosen command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    reasoner: Option<ReasonerKind>,
    #[arg(long, global = true)]
    labeled_frac: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    GenData {
        /// Glyph manifest to draw images from instead of rendering them.
        #[arg(long)]
        glyphs: Option<PathBuf>,
    },
    /// Train perception on the labeled part of a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 400)]
        steps: usize,
    },
    /// Read unlabeled equations with a model and revise them.
    Abduce {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        kb: Option<PathBuf>,
    },
    /// Run the abductive learning loop.
    Loop {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        kb: Option<PathBuf>,
        #[command(flatten)]
        chat: ChatArgs,
    },
    /// Score a model's readings of a dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Hypothesis dump used to judge equations.
        #[arg(long)]
        hypotheses: Option<PathBuf>,
    },
    /// Full label-rate experiment with reports.
    Experiment {
        #[arg(long)]
        kb: Option<PathBuf>,
        #[command(flatten)]
        chat: ChatArgs,
    },
}

#[derive(clap::Args)]
struct ChatArgs {
    /// Model name sent to the chat endpoint.
    #[arg(long, default_value = "gpt-4")]
    model_name: String,
    /// Append every live exchange to this cassette.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Answer from this cassette instead of the network.
    #[arg(long)]
    replay: Option<PathBuf>,
}

impl ChatArgs {
    fn backend(&self, reasoner: ReasonerKind) -> Result<Option<Box<dyn Backend>>> {
        if reasoner != ReasonerKind::Live {
            return Ok(None);
        }
        let config = RequestConfig {
            model: self.model_name.clone(),
            ..RequestConfig::default()
        };
        if let Some(path) = &self.replay {
            return Ok(Some(Box::new(ReplayBackend::load(config, path)?)));
        }
        let live = LiveBackend::from_env(config.clone())?;
        Ok(Some(match &self.record {
            Some(path) => Box::new(RecordingBackend::new(live, config, path)?),
            None => Box::new(live),
        }))
    }
}

fn load_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn load_kb(path: Option<&Path>) -> Result<KnowledgeBase> {
    Ok(match path {
        Some(p) => KnowledgeBase::load(p)?,
        None => KnowledgeBase::default(),
    })
}

fn load_model(path: &Path) -> Result<PerceptionModel> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(PerceptionModel::load(std::io::BufReader::new(file))?)
}

fn save(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn loop_config(cli: &Cli) -> Result<LoopConfig> {
    let mut c: LoopConfig = load_json(cli.config.as_deref())?;
    if let Some(r) = cli.reasoner {
        c.reasoner = r;
    }
    if let Some(s) = cli.seed {
        c.model_seed = s;
    }
    Ok(c)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    match &cli.command {
        Command::GenData { glyphs } => {
            let mut c: GenConfig = load_json(cli.config.as_deref())?;
            if let Some(f) = cli.labeled_frac {
                c.labeled_fraction = f;
            }
            let pool = glyphs.as_deref().map(ingest_glyphs).transpose()?;
            let d = generate_dataset_from(&c, cli.seed.unwrap_or(0), pool.as_ref())?;
            write_dataset(&d, &cli.out)?;
            println!("wrote {} labeled and {} unlabeled equations to {}", d.labeled.len(), d.unlabeled.len(), cli.out.display());
        }
        Command::Train { data, steps } => {
            let c = loop_config(&cli)?;
            let d = read_dataset(data)?;
            let batch = Batch::new(d.labeled.iter().filter_map(|s| s.labeled_glyphs()).flatten());
            if batch.is_empty() {
                bail!("{} has no labeled equations", data.display());
            }
            let mut model = PerceptionModel::new(c.hidden, c.model_seed);
            let mut loss = f64::NAN;
            for _ in 0..*steps {
                loss = model.train_step(&batch, c.lr)?;
            }
            let path = cli.out.join("model.ckpt");
            save(&path, model.to_bytes())?;
            let (g, e) = reading_accuracy(&model, &d.labeled)?;
            println!("loss {loss:.6}, labeled glyph accuracy {g:.4}, equation accuracy {e:.4}; saved {}", path.display());
        }
        Command::Abduce { data, model, kb } => {
            let d = read_dataset(data)?;
            let model = load_model(model)?;
            let kb = load_kb(kb.as_deref())?;
            let facts: Vec<_> = d
                .labeled
                .iter()
                .filter_map(|s| Some((s.truth_symbols.clone()?, s.veracity?)))
                .collect();
            let pseudos = model.classify_many(&d.unlabeled)?;
            let (state, outcomes) = abduce_batch(&pseudos, &kb, &facts, &BatchOptions::default())?;
            save(&cli.out.join("hypotheses.txt"), state.to_dump())?;
            let mut lines = String::new();
            for (i, o) in outcomes.iter().enumerate() {
                let v = match o {
                    Outcome::Revised(r) => serde_json::json!({
                        "index": i, "revised": r.expression(), "edits": r.edits,
                        "log_score": r.log_score, "trace": r.trace,
                    }),
                    Outcome::Abstained { reason } => serde_json::json!({ "index": i, "abstained": reason }),
                };
                lines.push_str(&v.to_string());
                lines.push('\n');
            }
            save(&cli.out.join("revisions.jsonl"), lines)?;
            let revised = outcomes.iter().filter(|o| o.revision().is_some()).count();
            println!("{} surviving operations; revised {revised} of {}", state.len(), outcomes.len());
        }
        Command::Loop { data, kb, chat } => {
            let c = loop_config(&cli)?;
            let d = read_dataset(data)?;
            let kb = load_kb(kb.as_deref())?;
            let backend = chat.backend(c.reasoner)?;
            let eval = d.revealed();
            let report = run_abl_with(&d, &kb, &c, &eval, backend.as_deref())?;
            let mut stats = format!("{STATS_HEADER}\n");
            for s in &report.stats {
                stats.push_str(&s.csv_row());
                stats.push('\n');
                println!("{}", s.csv_row());
            }
            save(&cli.out.join("stats.csv"), stats)?;
            save(&cli.out.join("model.ckpt"), report.model.to_bytes())?;
            save(&cli.out.join("hypotheses.txt"), report.state.to_dump())?;
            save(&cli.out.join("config.json"), serde_json::to_string_pretty(&c)?)?;
            let mut t = String::new();
            for (i, s) in &report.transcripts {
                t.push_str(&serde_json::json!({ "unlabeled_index": i, "loop": s }).to_string());
                t.push('\n');
            }
            save(&cli.out.join("transcripts.jsonl"), t)?;
        }
        Command::Eval { data, model, hypotheses } => {
            let d = read_dataset(data)?;
            let model = load_model(model)?;
            let samples = d.revealed();
            let (g, e) = reading_accuracy(&model, &samples)?;
            println!("glyph accuracy {g:.6}");
            println!("equation accuracy {e:.6}");
            if let Some(h) = hypotheses {
                let text = fs::read_to_string(h).with_context(|| format!("reading {}", h.display()))?;
                let state = HypothesisState::from_dump(&text)?;
                let judged: Vec<(bool, bool)> = samples
                    .iter()
                    .filter_map(|s| {
                        let p = model.classify_sequence(s).ok()?;
                        Some((chatabl::abl::level_under(&state, p.argmax_symbols()), s.veracity?))
                    })
                    .collect();
                let (pred, truth): (Vec<bool>, Vec<bool>) = judged.into_iter().unzip();
                let m = compute_metrics(&pred, &truth)?;
                println!(
                    "accuracy {:.6} precision {:.6} recall {:.6} f1 {:.6}",
                    m.accuracy, m.precision, m.recall, m.f1
                );
            }
        }
        Command::Experiment { kb, chat } => {
            let mut c: ExperimentConfig = load_json(cli.config.as_deref())?;
            if let Some(f) = cli.labeled_frac {
                c.labeled_fractions = vec![f];
            }
            if let Some(r) = cli.reasoner {
                c.loop_config.reasoner = r;
            }
            if let Some(s) = cli.seed {
                c.data_seed = s;
                c.test_seed = s.wrapping_add(1);
                c.loop_config.model_seed = s.wrapping_add(2);
                c.loop_config.judge_seed = s.wrapping_add(3);
            }
            let kb = load_kb(kb.as_deref())?;
            let backend = chat.backend(c.loop_config.reasoner)?;
            let results = run_experiment(&c, &kb, &cli.out, backend.as_deref())?;
            for r in &results {
                for (method, m) in &r.rows {
                    println!(
                        "{method:>13} {:.2}: accuracy {:.4} f1 {:.4} auc {}",
                        r.labeled_fraction,
                        m.accuracy,
                        m.f1,
                        m.auc.map_or("-".to_string(), |a| format!("{a:.4}"))
                    );
                }
            }
            println!("reports in {}", cli.out.display());
        }
    }
    Ok(())
}
