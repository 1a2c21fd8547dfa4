//! Benchmark harness: replay utterance/golden-payload cases through the
//! offline pipeline and report per-case match levels, aggregate counts,
//! the pass rate, and a per-category breakdown.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use daoforge_core::evaluator::ProposalPayload;
use daoforge_core::pipeline::{
    classify_equivalence, interpret_fallback, synthesize, FixtureAbiSource, MatchLevel,
    RelationExtractor, RuleExtractor, TemplateGenerator, DEFAULT_SIMILARITY_THRESHOLD,
};
use daoforge_core::eval_program;

use crate::config::Env;
use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BenchCase {
    pub name: String,
    pub category: String,
    pub utterance: String,
    pub golden: ProposalPayload,
}

#[derive(Debug, Clone, Serialize, Default)]
#[serde(rename_all = "camelCase")]
pub struct LevelCounts {
    pub em: usize,
    pub fe: usize,
    pub sa: usize,
    pub ei: usize,
}

impl LevelCounts {
    fn record(&mut self, level: MatchLevel) {
        match level {
            MatchLevel::EM => self.em += 1,
            MatchLevel::FE => self.fe += 1,
            MatchLevel::SA => self.sa += 1,
            MatchLevel::EI => self.ei += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.em + self.fe + self.sa + self.ei
    }

    pub fn pass_rate(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            1.0
        } else {
            (self.em + self.fe) as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CaseResult {
    pub name: String,
    pub category: String,
    pub level: MatchLevel,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CategoryCounts {
    #[serde(flatten)]
    pub counts: LevelCounts,
    pub total: usize,
    pub pass_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchReport {
    pub k: usize,
    pub re: bool,
    pub ps: bool,
    pub si: bool,
    pub cases: Vec<CaseResult>,
    pub counts: LevelCounts,
    pub pass_rate: f64,
    pub per_category: BTreeMap<String, CategoryCounts>,
}

/// Reads every `*.json` case in the directory, sorted by file name.
pub fn load_cases(dir: &Path) -> Result<Vec<BenchCase>, CliError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|err| CliError::config(format!("cannot read cases dir {}: {err}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "json").unwrap_or(false))
        .collect();
    paths.sort();
    let mut cases = Vec::with_capacity(paths.len());
    for path in paths {
        let text = std::fs::read_to_string(&path)
            .map_err(|err| CliError::config(format!("cannot read case {}: {err}", path.display())))?;
        let case: BenchCase = serde_json::from_str(&text)
            .map_err(|err| CliError::config(format!("malformed case {}: {err}", path.display())))?;
        cases.push(case);
    }
    Ok(cases)
}

/// Runs one case through the offline pipeline; any failure along the way
/// classifies as EI.
pub fn run_case(case: &BenchCase, env: &Env, k: usize, no_synthesizer: bool) -> MatchLevel {
    let extractor = RuleExtractor { lexicon: &env.lexicon, registry: &env.registry };
    let Ok(labeled) = extractor.extract(&case.utterance) else {
        return MatchLevel::EI;
    };
    let abi_source = FixtureAbiSource { dir: env.config.fixture_dir.clone() };
    let threshold = env.config.similarity_threshold.unwrap_or(DEFAULT_SIMILARITY_THRESHOLD);
    let payload: Option<ProposalPayload> = if no_synthesizer {
        interpret_fallback(&labeled, None, &abi_source, &env.registry, threshold).ok()
    } else {
        let generator = TemplateGenerator { registry: &env.registry };
        match synthesize(
            &labeled,
            &env.db,
            k,
            env.embedding.as_ref(),
            &generator,
            &env.registry,
            env.config.max_retries,
            env.config.token_budget,
        ) {
            Ok(outcome) => eval_program(&outcome.program, &env.registry).ok(),
            Err(_) => {
                // the agentic interpreter picks up what the synthesizer cannot express
                interpret_fallback(&labeled, None, &abi_source, &env.registry, threshold).ok()
            }
        }
    };
    match payload {
        Some(payload) => classify_equivalence(&payload, &case.golden, &env.model),
        None => MatchLevel::EI,
    }
}

pub fn run_bench(cases: &[BenchCase], env: &Env, k: usize, no_synthesizer: bool) -> BenchReport {
    let mut results = Vec::with_capacity(cases.len());
    let mut counts = LevelCounts::default();
    let mut per_category: BTreeMap<String, LevelCounts> = BTreeMap::new();
    for case in cases {
        let level = run_case(case, env, k, no_synthesizer);
        counts.record(level);
        per_category.entry(case.category.clone()).or_default().record(level);
        results.push(CaseResult { name: case.name.clone(), category: case.category.clone(), level });
    }
    let pass_rate = counts.pass_rate();
    BenchReport {
        k,
        re: true,
        ps: !no_synthesizer,
        si: true,
        cases: results,
        pass_rate,
        per_category: per_category
            .into_iter()
            .map(|(category, counts)| {
                let total = counts.total();
                let pass_rate = counts.pass_rate();
                (category, CategoryCounts { counts, total, pass_rate })
            })
            .collect(),
        counts,
    }
}

/// Renders the aligned text table, one configuration row plus the
/// per-category breakdown.
pub fn render_table(report: &BenchReport) -> String {
    let mut out = String::new();
    let headers = [
        "k",
        "RE",
        "PS",
        "SI",
        "Exact Match",
        "Functional Equivalence",
        "Semantic Analogy",
        "Error Identification",
        "Pass Rate (%)",
    ];
    let row = [
        report.k.to_string(),
        yes_no(report.re),
        yes_no(report.ps),
        yes_no(report.si),
        report.counts.em.to_string(),
        report.counts.fe.to_string(),
        report.counts.sa.to_string(),
        report.counts.ei.to_string(),
        format!("{:.2}", report.pass_rate * 100.0),
    ];
    let widths: Vec<usize> =
        headers.iter().zip(&row).map(|(h, r)| h.len().max(r.len())).collect();
    for (header, width) in headers.iter().zip(&widths) {
        out.push_str(&format!("{header:>width$}  "));
    }
    out.push('\n');
    for (cell, width) in row.iter().zip(&widths) {
        out.push_str(&format!("{cell:>width$}  "));
    }
    out.push('\n');
    if !report.per_category.is_empty() {
        out.push('\n');
        for (category, counts) in &report.per_category {
            out.push_str(&format!(
                "{category}: {} cases, EM {}, FE {}, SA {}, EI {}, pass {:.2}%\n",
                counts.total,
                counts.counts.em,
                counts.counts.fe,
                counts.counts.sa,
                counts.counts.ei,
                counts.pass_rate * 100.0
            ));
        }
    }
    out
}

fn yes_no(flag: bool) -> String {
    if flag { "yes".into() } else { "no".into() }
}
