//! `daoforge` — compile DAOLang programs, run retrieval, synthesize
//! proposals end to end, validate or classify payloads, and run the
//! benchmark harness.
//!
//! Exit codes: 0 success, 1 compile/eval or validation failure,
//! 2 I/O or configuration error, 3 synthesis failure, 4 fallback
//! interpreter failure. Stdout carries machine-readable JSON only;
//! diagnostics go to stderr.

mod bench;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use daoforge_core::evaluator::ProposalPayload;
use daoforge_core::pipeline::{
    classify_equivalence, fallback, interpret_fallback, sanity_check_source, synthesize,
    EtherscanAbiSource, FixtureAbiSource, Generator, GeneratorExtractor, LiveGenerator,
    RelationExtractor, RuleExtractor, ScriptedGenerator, TemplateGenerator,
    DEFAULT_SIMILARITY_THRESHOLD,
};
use daoforge_core::retrieval::{assign_labels, lcr_retrieve};
use daoforge_core::{eval_program, parse, Registry};

use config::{Config, Env, GeneratorChoice};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> CliError {
        CliError { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> CliError {
        CliError::new(2, message)
    }

    pub fn compile(message: impl Into<String>) -> CliError {
        CliError::new(1, message)
    }

    pub fn synthesis(message: impl Into<String>) -> CliError {
        CliError::new(3, message)
    }

    pub fn fallback(message: impl Into<String>) -> CliError {
        CliError::new(4, message)
    }
}

#[derive(Parser)]
#[command(name = "daoforge", version, about = "DAOLang governance proposal toolchain")]
struct Cli {
    /// JSON configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Hermetic providers only (the default mode)
    #[arg(long, global = true)]
    offline: bool,
    /// Enable live generator/embedding/ABI endpoints (requires API keys)
    #[arg(long, global = true)]
    live: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a .dao program into a proposal payload
    Compile {
        file: PathBuf,
        /// Registry file (overrides the config)
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Write the payload JSON here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank sample-database entries for an utterance
    Retrieve {
        #[arg(long)]
        utterance: String,
        /// Maximum samples to return (overrides the config)
        #[arg(long)]
        k: Option<usize>,
    },
    /// Translate an utterance into a program and payload
    Synthesize {
        #[arg(long)]
        utterance: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a program, or classify a generated payload against a golden one
    Validate {
        #[arg(long)]
        program: Option<PathBuf>,
        #[arg(long)]
        generated: Option<PathBuf>,
        #[arg(long)]
        golden: Option<PathBuf>,
    },
    /// Run utterance/golden-payload cases and report match levels
    Bench {
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        /// Skip program synthesis and use only the fallback interpreter
        #[arg(long)]
        no_synthesizer: bool,
        /// Write the report JSON here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}

/// Global flags every command sees.
struct Ctx {
    config: Option<PathBuf>,
    live: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.offline && cli.live {
        return Err(CliError::config("--offline and --live are mutually exclusive"));
    }
    let ctx = Ctx { config: cli.config, live: cli.live };
    match cli.command {
        Command::Compile { file, registry, out } => cmd_compile(&ctx, &file, registry, out),
        Command::Retrieve { utterance, k } => cmd_retrieve(&ctx, &utterance, k),
        Command::Synthesize { utterance, out } => cmd_synthesize(&ctx, &utterance, out),
        Command::Validate { program, generated, golden } => {
            cmd_validate(&ctx, program, generated, golden)
        }
        Command::Bench { cases, k, no_synthesizer, out } => {
            cmd_bench(&ctx, &cases, k, no_synthesizer, out)
        }
    }
}

fn load_env(ctx: &Ctx) -> Result<Env, CliError> {
    let path = ctx
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("this command needs --config <path>"))?;
    Env::load(Config::load(path)?, ctx.live)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|err| CliError::config(format!("cannot write {}: {err}", path.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_compile(
    ctx: &Ctx,
    file: &Path,
    registry_path: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let registry = match registry_path {
        Some(path) => Registry::load(&path).map_err(|err| CliError::config(err.to_string()))?,
        None => load_env(ctx)?.registry,
    };
    let source = std::fs::read_to_string(file)
        .map_err(|err| CliError::config(format!("cannot read {}: {err}", file.display())))?;
    let program = parse(&source).map_err(|err| CliError::compile(err.to_string()))?;
    let payload = eval_program(&program, &registry).map_err(|err| CliError::compile(err.to_string()))?;
    let json = serde_json::to_string_pretty(&payload).expect("payload serializes");
    emit(out.as_deref(), &json)
}

fn cmd_retrieve(ctx: &Ctx, utterance: &str, k: Option<usize>) -> Result<(), CliError> {
    let env = load_env(ctx)?;
    let k = k.unwrap_or(env.config.k);
    let extractor = RuleExtractor { lexicon: &env.lexicon, registry: &env.registry };
    let labeled = extractor
        .extract(utterance)
        .map_err(|err| CliError::synthesis(err.to_string()))?;
    let labels = assign_labels(&labeled.normalized, &labeled, &env.registry);
    let vector = env
        .embedding
        .embed(&labeled.normalized)
        .map_err(|err| CliError::config(err.to_string()))?;
    for retrieved in lcr_retrieve(&labels, &vector, &env.db, k) {
        let line = serde_json::json!({
            "id": retrieved.sample.id,
            "matchedLabels": retrieved.matched_labels,
            "marginalGain": retrieved.marginal_gain,
            "distance": retrieved.distance,
        });
        println!("{line}");
    }
    Ok(())
}

fn build_generator<'a>(ctx: &Ctx, env: &'a Env) -> Result<Box<dyn Generator + 'a>, CliError> {
    if ctx.live {
        let api_key = std::env::var("GENERATOR_API_KEY")
            .map_err(|_| CliError::config("live mode needs the GENERATOR_API_KEY env var"))?;
        return Ok(Box::new(LiveGenerator {
            base_url: env
                .config
                .generator_url
                .clone()
                .unwrap_or_else(|| "https://api.openai.com/v1".into()),
            api_key,
            model: env.config.generator_model.clone().unwrap_or_else(|| "gpt-4o".into()),
        }));
    }
    match env.config.generator {
        GeneratorChoice::Template | GeneratorChoice::Live => {
            Ok(Box::new(TemplateGenerator { registry: &env.registry }))
        }
        GeneratorChoice::Scripted => {
            let path = env.config.fixture_dir.join("scripted_responses.json");
            let text = std::fs::read_to_string(&path).map_err(|err| {
                CliError::config(format!("cannot read script {}: {err}", path.display()))
            })?;
            let responses: Vec<String> = serde_json::from_str(&text)
                .map_err(|err| CliError::config(format!("bad script file: {err}")))?;
            Ok(Box::new(ScriptedGenerator::new(responses)))
        }
    }
}

fn cmd_synthesize(ctx: &Ctx, utterance: &str, out: Option<PathBuf>) -> Result<(), CliError> {
    let env = load_env(ctx)?;
    let generator = build_generator(ctx, &env)?;
    let labeled = if ctx.live {
        let extractor = GeneratorExtractor { generator: generator.as_ref(), lexicon: &env.lexicon };
        extractor.extract(utterance).map_err(|err| CliError::synthesis(err.to_string()))?
    } else {
        let extractor = RuleExtractor { lexicon: &env.lexicon, registry: &env.registry };
        extractor.extract(utterance).map_err(|err| CliError::synthesis(err.to_string()))?
    };
    let threshold = env.config.similarity_threshold.unwrap_or(DEFAULT_SIMILARITY_THRESHOLD);

    let synthesis = synthesize(
        &labeled,
        &env.db,
        env.config.k,
        env.embedding.as_ref(),
        generator.as_ref(),
        &env.registry,
        env.config.max_retries,
        env.config.token_budget,
    );
    match synthesis {
        Ok(outcome) => {
            let payload = eval_program(&outcome.program, &env.registry)
                .map_err(|err| CliError::compile(err.to_string()))?;
            let doc = serde_json::json!({
                "program": outcome.source,
                "attempts": outcome.attempts,
                "retrievedSamples": outcome.retrieved_ids,
                "payload": payload,
            });
            emit(out.as_deref(), &serde_json::to_string_pretty(&doc).expect("doc serializes"))
        }
        Err(synth_err) => {
            // atypical request: hand it to the ABI-driven interpreter when a
            // target contract is identifiable at all
            if fallback::resolve_target(&labeled, None, &env.registry).is_none() {
                return Err(CliError::synthesis(synth_err.to_string()));
            }
            let abi_source: Box<dyn daoforge_core::pipeline::AbiSource> = if ctx.live {
                let api_key = std::env::var("ETHERSCAN_API_KEY")
                    .map_err(|_| CliError::config("live mode needs the ETHERSCAN_API_KEY env var"))?;
                Box::new(EtherscanAbiSource {
                    base_url: env
                        .config
                        .etherscan_url
                        .clone()
                        .unwrap_or_else(|| "https://api.etherscan.io/v2/api".into()),
                    api_key,
                    chain_id: env.registry.home_chain_id,
                })
            } else {
                Box::new(FixtureAbiSource { dir: env.config.fixture_dir.clone() })
            };
            eprintln!("synthesis failed, trying the fallback interpreter: {synth_err}");
            let payload =
                interpret_fallback(&labeled, None, abi_source.as_ref(), &env.registry, threshold)
                    .map_err(|err| CliError::fallback(err.to_string()))?;
            let doc = serde_json::json!({
                "program": null,
                "payload": payload,
            });
            emit(out.as_deref(), &serde_json::to_string_pretty(&doc).expect("doc serializes"))
        }
    }
}

fn cmd_validate(
    ctx: &Ctx,
    program: Option<PathBuf>,
    generated: Option<PathBuf>,
    golden: Option<PathBuf>,
) -> Result<(), CliError> {
    match (program, generated, golden) {
        (Some(path), None, None) => {
            let env = load_env(ctx)?;
            let source = std::fs::read_to_string(&path)
                .map_err(|err| CliError::config(format!("cannot read {}: {err}", path.display())))?;
            let report = sanity_check_source(&source, &env.registry);
            let doc = serde_json::json!({
                "valid": report.is_clean(),
                "diagnostics": report.diagnostics.iter().map(|d| d.to_string()).collect::<Vec<_>>(),
            });
            println!("{}", serde_json::to_string_pretty(&doc).expect("doc serializes"));
            if report.is_clean() {
                Ok(())
            } else {
                Err(CliError::compile("program failed validation"))
            }
        }
        (None, Some(generated), Some(golden)) => {
            let env = load_env(ctx)?;
            let generated = load_payload(&generated)?;
            let golden = load_payload(&golden)?;
            let level = classify_equivalence(&generated, &golden, &env.model);
            println!("{}", serde_json::json!({ "matchLevel": level.to_string() }));
            Ok(())
        }
        _ => Err(CliError::config(
            "pass either --program <file.dao>, or --generated <payload.json> with --golden <payload.json>",
        )),
    }
}

fn load_payload(path: &Path) -> Result<ProposalPayload, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|err| CliError::config(format!("cannot read {}: {err}", path.display())))?;
    ProposalPayload::from_json(&text)
        .map_err(|err| CliError::config(format!("bad payload {}: {err}", path.display())))
}

fn cmd_bench(
    ctx: &Ctx,
    cases_dir: &Path,
    k: Option<usize>,
    no_synthesizer: bool,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let env = load_env(ctx)?;
    let k = k.unwrap_or(env.config.k);
    let cases = bench::load_cases(cases_dir)?;
    let report = bench::run_bench(&cases, &env, k, no_synthesizer);
    eprint!("{}", bench::render_table(&report));
    emit(out.as_deref(), &serde_json::to_string_pretty(&report).expect("report serializes"))
}
