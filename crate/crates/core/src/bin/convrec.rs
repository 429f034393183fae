use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use convrec::adaptive::StoppingConfig;
use convrec::catalog::{Catalog, LoadOptions, Strategy, DEFAULT_STATE_CAP};
use convrec::elicitation::ElicitOptions;
use convrec::evaluation::{emit_report, replay, sweep_threshold, Order};
use convrec::inference::ContradictionMode;
use convrec::learning::{learn, write_back, LearnOptions};
use convrec::model::{Model, ModelChoice};
use convrec::service::{serve, AppState, EventStore};
use convrec::sessions::{read_sessions_file, write_sessions};
use convrec::synth::{property_free_catalog, sample_sessions, CatalogShape};

#[derive(Parser)]
#[command(name = "convrec", version, about = "Bayesian conversational recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a catalogue and report its shape and warnings.
    Validate {
        catalog: PathBuf,
        #[command(flatten)]
        load: LoadArgs,
    },
    /// Build the model and write it as an inspection document.
    Elicit {
        #[arg(long)]
        catalog: PathBuf,
        #[command(flatten)]
        load: LoadArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Blend the catalogue's tables with counts from a session log.
    Learn {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        log: PathBuf,
        /// Equivalent sample size for every table.
        #[arg(long, default_value_t = 1.0)]
        ess: f64,
        /// Per-table override, e.g. `property:event=5` or `question:Q3=2`.
        #[arg(long = "ess-table", value_name = "TABLE=ESS")]
        ess_table: Vec<String>,
        /// Skip observations on forbidden cells instead of failing.
        #[arg(long)]
        lenient: bool,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        load: LoadArgs,
    },
    /// Replay a session log and write metric curves.
    Simulate {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[command(flatten)]
        stop: StopArgs,
        #[arg(long)]
        out: PathBuf,
        /// Ask questions in catalogue order instead of adaptively.
        #[arg(long)]
        static_order: bool,
        /// Stopping targets for the threshold sweep; defaults to powers of two up to n.
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<usize>,
        #[command(flatten)]
        load: LoadArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Run the HTTP session API.
    Serve {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long, env = "CONVREC_ADDR", default_value = "127.0.0.1:8080")]
        addr: String,
        /// Append-only session event log; sessions in it are restored on start.
        #[arg(long)]
        events: Option<PathBuf>,
        #[command(flatten)]
        load: LoadArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Generate a random catalogue and a noiseless (or noisy) session log.
    Synth {
        #[arg(long, default_value_t = 500)]
        items: usize,
        #[arg(long, default_value_t = 20)]
        questions: usize,
        #[arg(long, default_value_t = 200)]
        sessions: usize,
        #[arg(long, default_value_t = 2)]
        min_answers: usize,
        #[arg(long, default_value_t = 6)]
        max_answers: usize,
        #[arg(long, default_value_t = 0.15)]
        extra_answer_rate: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out_catalog: PathBuf,
        #[arg(long)]
        out_log: PathBuf,
    },
}

#[derive(Args)]
struct LoadArgs {
    /// Ignore unknown keys in the catalogue document.
    #[arg(long)]
    allow_unknown_keys: bool,
    #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
    state_cap: usize,
}

impl LoadArgs {
    fn load(&self, path: &Path) -> Result<Arc<Catalog>> {
        let options = LoadOptions {
            allow_unknown_keys: self.allow_unknown_keys,
            state_cap: self.state_cap,
        };
        let catalog = Catalog::load(path, &options).with_context(|| format!("loading {}", path.display()))?;
        for w in catalog.warnings() {
            tracing::warn!("{w}");
        }
        Ok(Arc::new(catalog))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Auto,
    PropertyFree,
    Properties,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Ujs,
    Ups,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long = "model", value_enum, default_value = "auto")]
    kind: KindArg,
    /// Strategy for every question of a property-free model, overriding tags.
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
}

impl ModelArgs {
    fn build(&self, catalog: Arc<Catalog>) -> Result<Model> {
        let choice = match self.kind {
            KindArg::Auto => ModelChoice::Auto,
            KindArg::PropertyFree => ModelChoice::PropertyFree,
            KindArg::Properties => ModelChoice::Properties,
        };
        let options = ElicitOptions {
            force: self.strategy.map(|s| match s {
                StrategyArg::Ujs => Strategy::Ujs,
                StrategyArg::Ups => Strategy::Ups,
            }),
            ..ElicitOptions::default()
        };
        Ok(Model::build(catalog, choice, &options)?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Strict,
    Soft,
}

#[derive(Args)]
struct StopArgs {
    #[arg(long)]
    stop_s: Option<usize>,
    #[arg(long)]
    max_questions: Option<usize>,
    #[arg(long, value_enum, default_value = "strict")]
    mode: ModeArg,
}

impl StopArgs {
    fn config(&self) -> StoppingConfig {
        StoppingConfig {
            stop_s: self.stop_s,
            max_questions: self.max_questions,
            mode: match self.mode {
                ModeArg::Strict => ContradictionMode::Strict,
                ModeArg::Soft => ContradictionMode::Soft,
            },
        }
    }
}

fn write_json(out: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => {
            use std::io::Write;
            match std::io::stdout().lock().write_all(text.as_bytes()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                r => r?,
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { catalog, load } => {
            let c = load.load(&catalog)?;
            let feasible = c.feasible_joint_states()?;
            println!(
                "{}: {} items, {} questions, {} properties, {} feasible joint states, {} warnings",
                catalog.display(),
                c.n_items(),
                c.n_questions(),
                c.properties().len(),
                feasible.len(),
                c.warnings().len()
            );
            for w in c.warnings() {
                println!("warning: {w}");
            }
        }
        Command::Elicit {
            catalog,
            load,
            model,
            out,
        } => {
            let m = model.build(load.load(&catalog)?)?;
            write_json(out.as_deref(), &m.export())?;
        }
        Command::Learn {
            catalog,
            log,
            ess,
            ess_table,
            lenient,
            out,
            load,
        } => {
            let c = load.load(&catalog)?;
            let m = Model::build(c.clone(), ModelChoice::Properties, &ElicitOptions::default())?;
            let sessions = read_sessions_file(&log, &c)?;
            let mut options = LearnOptions {
                ess,
                lenient,
                ..LearnOptions::default()
            };
            for spec in ess_table {
                let Some((name, value)) = spec.rsplit_once('=') else {
                    bail!("--ess-table expects TABLE=ESS, got `{spec}`");
                };
                options.per_table.insert(name.to_string(), value.parse()?);
            }
            let outcome = learn(&m, &sessions, &options)?;
            for r in &outcome.rejected {
                tracing::warn!("skipped observation: {}", r.reason);
            }
            if !outcome.skipped_sessions.is_empty() {
                tracing::warn!("{} sessions carried no usable evidence", outcome.skipped_sessions.len());
            }
            let doc = write_back(&c, &outcome.tables)?;
            write_json(Some(&out), &doc)?;
            println!("learned {} tables from {} sessions", outcome.tables.len(), sessions.len());
        }
        Command::Simulate {
            catalog,
            log,
            stop,
            out,
            static_order,
            sweep,
            load,
            model,
        } => {
            let c = load.load(&catalog)?;
            let m = model.build(c.clone())?;
            let sessions = read_sessions_file(&log, &c)?;
            let order = if static_order { Order::Static } else { Order::Adaptive };
            let config = stop.config();
            let metrics = replay(&m, &sessions, &config, order)?;
            let s_values = if sweep.is_empty() {
                std::iter::successors(Some(1usize), |s| Some(s * 2))
                    .take_while(|&s| s < c.n_items())
                    .chain(std::iter::once(c.n_items()))
                    .collect()
            } else {
                sweep
            };
            let points = sweep_threshold(&m, &sessions, &s_values, &config, order)?;
            let files = emit_report(&metrics, &points, &out)?;
            println!(
                "{} sessions, mean FI {}, {} contradictions",
                metrics.sessions.len(),
                metrics.mean_fi.map_or("n/a".to_string(), |f| format!("{f:.4}")),
                metrics.contradictions
            );
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Serve {
            catalog,
            addr,
            events,
            load,
            model,
        } => {
            let m = Arc::new(model.build(load.load(&catalog)?)?);
            let state = match events {
                Some(path) => AppState::with_store(m, EventStore::open(path)?)?,
                None => AppState::new(m),
            };
            tokio::runtime::Runtime::new()?.block_on(serve(&addr, Arc::new(state)))?;
        }
        Command::Synth {
            items,
            questions,
            sessions,
            min_answers,
            max_answers,
            extra_answer_rate,
            noise,
            seed,
            out_catalog,
            out_log,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shape = CatalogShape {
                items,
                questions,
                min_answers,
                max_answers,
                extra_answer_rate,
                random_strategies: false,
            };
            let doc = property_free_catalog(&mut rng, &shape);
            let c = Arc::new(Catalog::from_document(doc.clone(), &LoadOptions::default())?);
            let m = Model::build(c.clone(), ModelChoice::Auto, &ElicitOptions::default())?;
            let drawn = sample_sessions(&m, &mut rng, sessions, noise);
            let logs: Vec<_> = drawn.into_iter().map(|s| s.log).collect();
            write_json(Some(&out_catalog), &doc)?;
            write_sessions(fs::File::create(&out_log)?, &c, &logs)?;
            println!("wrote {} and {}", out_catalog.display(), out_log.display());
        }
    }
    Ok(())
}
