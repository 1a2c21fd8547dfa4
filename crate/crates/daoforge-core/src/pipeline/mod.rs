//! The synthesis pipeline: relation extraction, retrieval-augmented program
//! generation, validation, state simulation, and equivalence classification.
//!
//! `synthesize` drives the generate/validate/retry loop; validation runs the
//! real evaluator statement by statement so diagnostics match evaluation
//! behavior exactly.

pub mod extract;
pub mod fallback;
pub mod generate;
pub mod simulate;

use std::fmt;

use thiserror::Error;

use crate::ast::Program;
use crate::evaluator::{eval_statement, EvalState};
use crate::parser::parse;
use crate::registry::Registry;
use crate::retrieval::{assign_labels, lcr_retrieve, EmbeddingProvider, ProviderError, SampleDb};

pub use extract::{
    match_actions, Entity, EntityKind, ExtractorError, GeneratorExtractor, LabeledUtterance,
    MatchedAction, RelationExtractor, RoleAssignment, RuleExtractor,
};
pub use fallback::{
    interpret_fallback, AbiFunction, AbiSource, AbiSourceError, EtherscanAbiSource, FallbackError,
    FixtureAbiSource, DEFAULT_SIMILARITY_THRESHOLD,
};
pub use generate::{
    build_prompt, Generator, GeneratorError, LiveGenerator, PromptTooLarge, ScriptedGenerator,
    TemplateGenerator,
};
pub use simulate::{
    classify_equivalence, simulate, MatchLevel, SimulationError, StateDelta, StateKey, StateModel,
    StateModelError, Subject,
};

/// One validation problem, tied to a statement when known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    pub statement: Option<usize>,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.statement {
            Some(index) => write!(f, "statement {}: {}", index + 1, self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// The sanity-check result; diagnostics are data, not errors.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub diagnostics: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.diagnostics.is_empty()
    }

    pub fn lines(&self) -> String {
        self.diagnostics.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n")
    }
}

/// Validates a parsed program against the registry by evaluating it
/// statement by statement, collecting every failure instead of stopping at
/// the first.
pub fn sanity_check(program: &Program, registry: &Registry) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut state = EvalState::default();
    for (index, statement) in program.statements.iter().enumerate() {
        state.counter = index;
        if let Err(err) = eval_statement(statement, &mut state, registry) {
            report.diagnostics.push(ValidationIssue { statement: Some(index), message: err.to_string() });
        }
    }
    report
}

/// Parses and validates generator output; parse errors become diagnostics.
pub fn sanity_check_source(source: &str, registry: &Registry) -> ValidationReport {
    match parse(source) {
        Ok(program) => sanity_check(&program, registry),
        Err(err) => ValidationReport {
            diagnostics: vec![ValidationIssue { statement: None, message: err.to_string() }],
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthesisError {
    #[error("synthesis failed after {attempts} attempts:\n{diagnostics}")]
    Failed { attempts: u32, diagnostics: String },
    #[error(transparent)]
    Prompt(#[from] PromptTooLarge),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// A successful synthesis with its provenance.
#[derive(Debug, Clone)]
pub struct SynthesisOutcome {
    pub program: Program,
    pub source: String,
    /// 1 means the first attempt validated.
    pub attempts: u32,
    pub retrieved_ids: Vec<String>,
}

/// Retrieves samples, prompts the generator, validates the result, and
/// re-prompts with the full diagnostic list until a program validates or
/// the retry budget runs out.
#[allow(clippy::too_many_arguments)]
pub fn synthesize(
    labeled: &LabeledUtterance,
    db: &SampleDb,
    k: usize,
    provider: &dyn EmbeddingProvider,
    generator: &dyn Generator,
    registry: &Registry,
    max_retries: u32,
    token_budget: usize,
) -> Result<SynthesisOutcome, SynthesisError> {
    let x_labels = assign_labels(&labeled.normalized, labeled, registry);
    let x_vector = provider.embed(&labeled.normalized)?;
    let retrieved = lcr_retrieve(&x_labels, &x_vector, db, k);
    let samples: Vec<&crate::retrieval::Sample> = retrieved.iter().map(|r| r.sample).collect();
    let retrieved_ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let base_prompt = build_prompt(labeled, &samples, token_budget)?;

    let mut prompt = base_prompt.clone();
    let mut last_diagnostics = String::new();
    let attempts = max_retries + 1;
    for attempt in 1..=attempts {
        match generator.complete(&prompt) {
            Ok(source) => {
                let report = sanity_check_source(&source, registry);
                if report.is_clean() {
                    let program = parse(&source).expect("validated source parses");
                    return Ok(SynthesisOutcome { program, source, attempts: attempt, retrieved_ids });
                }
                last_diagnostics = report.lines();
            }
            Err(err) => {
                last_diagnostics = err.to_string();
            }
        }
        // the full diagnostic list rides along verbatim on the retry
        prompt = format!(
            "{base_prompt}\nThe previous program was rejected with these diagnostics:\n{last_diagnostics}\n\nRespond with only the corrected DAOLang program.\n"
        );
    }
    Err(SynthesisError::Failed { attempts, diagnostics: last_diagnostics })
}
