//! Program generators and prompt construction.
//!
//! `Generator` is the pluggable text-completion interface. The template
//! generator is the deterministic offline path: it reads the labeled
//! analysis block out of the prompt and expands registry patterns into the
//! canonical program directly. The scripted generator replays canned
//! responses for tests; the live generator talks to a chat-completion
//! endpoint.

use std::collections::HashSet;
use std::sync::Mutex;

use serde::Deserialize;
use thiserror::Error;

use crate::registry::Registry;
use crate::retrieval::Sample;

use super::extract::{match_actions, LabeledUtterance};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeneratorError {
    #[error("generator endpoint unreachable: {0}")]
    Http(String),
    #[error("generator response malformed: {0}")]
    BadResponse(String),
    #[error("request not expressible: {0}")]
    Unsupported(String),
}

pub trait Generator {
    /// Provider name for reports and logs.
    fn identity(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, GeneratorError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("prompt needs ~{needed} tokens, budget is {budget}")]
pub struct PromptTooLarge {
    pub needed: usize,
    pub budget: usize,
}

const LABELED_BLOCK_OPEN: &str = "```labeled\n";
const BLOCK_CLOSE: &str = "\n```";

const LANGUAGE_PRIMER: &str = "\
You write DAOLang programs. DAOLang expresses DAO governance actions as a \
sequence of statements, one per line, each ended by `;`.

Statement forms:
  name <- expression;                      assignment
  net(proto:action(arg1,arg2,...));        transaction

Expressions: identifiers, decimal integers, 0x hex addresses, quoted \
strings, true/false, object literals {key: expr, ...}, network{chainId}, \
and protocol{0xaddress}.

Conventions:
  1. Bind each contract address to a descriptive identifier first.
  2. Declare the network (network{chainId}) and the protocol \
(protocol{0xaddress}) before using them in a transaction.
  3. Emit one transaction statement per action, referencing the bound \
network and protocol identifiers.
  4. Use only actions that appear in the examples or the request.

Steps: identify the intent and entities, pick the matching action, bind \
addresses to identifiers, then write the transaction.";

/// Estimated token count: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.len().div_ceil(4)
}

/// Builds the synthesis prompt: language primer, retrieved samples in
/// order, then the labeled utterance as a machine-readable block.
pub fn build_prompt(
    labeled: &LabeledUtterance,
    samples: &[&Sample],
    token_budget: usize,
) -> Result<String, PromptTooLarge> {
    let mut prompt = String::from(LANGUAGE_PRIMER);
    if !samples.is_empty() {
        prompt.push_str("\n\n## Examples\n");
        for (i, sample) in samples.iter().enumerate() {
            prompt.push_str(&format!("\n### Example {}\n", i + 1));
            prompt.push_str(&format!("Utterance: {}\n", sample.utterance));
            if !sample.labels.is_empty() {
                let labels: Vec<&str> = sample.labels.iter().map(String::as_str).collect();
                prompt.push_str(&format!("Labels: {}\n", labels.join(", ")));
            }
            prompt.push_str("Program:\n```dao\n");
            prompt.push_str(sample.program.trim_end());
            prompt.push_str("\n```\n");
            for note in &sample.annotations {
                prompt.push_str(&format!("- {note}\n"));
            }
        }
    }
    prompt.push_str("\n## Task\n");
    prompt.push_str(&format!("Utterance: {}\n", labeled.original));
    prompt.push_str("Labeled analysis:\n");
    prompt.push_str(LABELED_BLOCK_OPEN);
    prompt.push_str(&serde_json::to_string(labeled).expect("labeled utterance serializes"));
    prompt.push_str(BLOCK_CLOSE);
    prompt.push_str("\n\nRespond with only the DAOLang program.\n");

    let needed = estimate_tokens(&prompt);
    if needed > token_budget {
        return Err(PromptTooLarge { needed, budget: token_budget });
    }
    Ok(prompt)
}

/// Recovers the labeled analysis block embedded in a synthesis prompt.
pub fn labeled_block(prompt: &str) -> Option<LabeledUtterance> {
    let start = prompt.rfind(LABELED_BLOCK_OPEN)? + LABELED_BLOCK_OPEN.len();
    let end = prompt[start..].find(BLOCK_CLOSE)? + start;
    serde_json::from_str(&prompt[start..end]).ok()
}

/// Deterministic offline generator: expands matched registry patterns into
/// the canonical DAOLang program. Pure — the output depends only on the
/// prompt text.
pub struct TemplateGenerator<'a> {
    pub registry: &'a Registry,
}

impl Generator for TemplateGenerator<'_> {
    fn identity(&self) -> &str {
        "template"
    }

    fn complete(&self, prompt: &str) -> Result<String, GeneratorError> {
        let labeled = labeled_block(prompt).ok_or_else(|| {
            GeneratorError::BadResponse("prompt carries no labeled analysis block".into())
        })?;
        let actions = match_actions(&labeled, self.registry);
        if actions.is_empty() {
            return Err(GeneratorError::Unsupported(
                "no registry action matches the labeled utterance".into(),
            ));
        }
        emit_program(&labeled, &actions, self.registry)
    }
}

fn emit_program(
    labeled: &LabeledUtterance,
    actions: &[super::extract::MatchedAction],
    registry: &Registry,
) -> Result<String, GeneratorError> {
    let mut used_names: HashSet<String> = HashSet::new();
    let mut entity_vars: Vec<Option<String>> = vec![None; labeled.entities.len()];
    let mut declarations: Vec<String> = Vec::new();
    let mut network_vars: Vec<(u64, String)> = Vec::new();
    let mut protocol_vars: Vec<(String, String)> = Vec::new();
    let mut transactions: Vec<String> = Vec::new();

    let unique = |base: &str, used: &mut HashSet<String>| -> String {
        let base = if base.is_empty() { "x".to_string() } else { base.to_string() };
        if used.insert(base.clone()) {
            return base;
        }
        let mut n = 2;
        loop {
            let candidate = format!("{base}{n}");
            if used.insert(candidate.clone()) {
                return candidate;
            }
            n += 1;
        }
    };

    for action in actions {
        let spec = registry
            .action(&action.protocol, &action.action)
            .ok_or_else(|| GeneratorError::Unsupported(format!("unknown action {}", action.action)))?;
        let pattern = spec.pattern.as_ref().ok_or_else(|| {
            GeneratorError::Unsupported(format!("action {} has no pattern", action.action))
        })?;

        let network_var = match network_vars.iter().find(|(chain, _)| *chain == action.chain) {
            Some((_, var)) => var.clone(),
            None => {
                let symbol = registry
                    .network(action.chain)
                    .map(|n| n.symbol.clone())
                    .unwrap_or_else(|| format!("net{}", action.chain));
                let var = unique(&symbol, &mut used_names);
                declarations.push(format!("{var} <- network{{{}}};", action.chain));
                network_vars.push((action.chain, var.clone()));
                var
            }
        };

        let protocol_var = match protocol_vars.iter().find(|(name, _)| *name == action.protocol) {
            Some((_, var)) => var.clone(),
            None => {
                let protocol = registry
                    .protocol(&action.protocol)
                    .ok_or_else(|| GeneratorError::Unsupported("protocol missing".into()))?;
                let declared: Vec<String> = if pattern.declares.is_empty() {
                    protocol.roles.values().take(1).map(|a| a.to_string()).collect()
                } else {
                    pattern
                        .declares
                        .iter()
                        .filter_map(|role| protocol.role(role))
                        .map(|a| a.to_string())
                        .collect()
                };
                if declared.is_empty() {
                    return Err(GeneratorError::Unsupported(format!(
                        "protocol {} declares no addresses",
                        action.protocol
                    )));
                }
                let var = unique(&action.protocol, &mut used_names);
                declarations.push(format!("{var} <- protocol{{{}}};", declared.join(",")));
                protocol_vars.push((action.protocol.clone(), var.clone()));
                var
            }
        };

        let mut arg_tokens: Vec<String> = Vec::with_capacity(action.bindings.len());
        for ((role_name, entity_index), pattern_role) in
            action.bindings.iter().zip(pattern.roles.iter())
        {
            debug_assert_eq!(*role_name, pattern_role.role);
            let entity = &labeled.entities[*entity_index];
            match &pattern_role.var {
                Some(var_base) => {
                    let var = match &entity_vars[*entity_index] {
                        Some(existing) => existing.clone(),
                        None => {
                            let var = unique(var_base, &mut used_names);
                            declarations.push(format!("{var} <- {};", entity.canonical));
                            entity_vars[*entity_index] = Some(var.clone());
                            var
                        }
                    };
                    arg_tokens.push(var);
                }
                None => arg_tokens.push(entity.canonical.clone()),
            }
        }
        transactions.push(format!(
            "{network_var}({protocol_var}:{}({}));",
            action.action,
            arg_tokens.join(",")
        ));
    }

    let mut lines = declarations;
    lines.extend(transactions);
    Ok(lines.join("\n") + "\n")
}

/// Replays canned responses in order; the final response repeats once the
/// script runs out.
pub struct ScriptedGenerator {
    responses: Mutex<Vec<String>>,
}

impl ScriptedGenerator {
    pub fn new(responses: Vec<String>) -> ScriptedGenerator {
        ScriptedGenerator { responses: Mutex::new(responses) }
    }
}

impl Generator for ScriptedGenerator {
    fn identity(&self) -> &str {
        "scripted"
    }

    fn complete(&self, _prompt: &str) -> Result<String, GeneratorError> {
        let mut responses = self.responses.lock().expect("script lock");
        match responses.len() {
            0 => Err(GeneratorError::BadResponse("script exhausted".into())),
            1 => Ok(responses[0].clone()),
            _ => Ok(responses.remove(0)),
        }
    }
}

/// Chat-completion-backed generator.
pub struct LiveGenerator {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
}

impl Generator for LiveGenerator {
    fn identity(&self) -> &str {
        "live"
    }

    fn complete(&self, prompt: &str) -> Result<String, GeneratorError> {
        #[derive(Deserialize)]
        struct Message {
            content: String,
        }
        #[derive(Deserialize)]
        struct Choice {
            message: Message,
        }
        #[derive(Deserialize)]
        struct Response {
            choices: Vec<Choice>,
        }
        let client = reqwest::blocking::Client::new();
        let response = client
            .post(format!("{}/chat/completions", self.base_url.trim_end_matches('/')))
            .bearer_auth(&self.api_key)
            .json(&serde_json::json!({
                "model": self.model,
                "messages": [{ "role": "user", "content": prompt }]
            }))
            .send()
            .map_err(|err| GeneratorError::Http(err.to_string()))?;
        let parsed: Response =
            response.json().map_err(|err| GeneratorError::BadResponse(err.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| GeneratorError::BadResponse("no choices in reply".into()))
    }
}
