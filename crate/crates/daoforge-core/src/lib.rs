//! DAOLang compiler toolchain: parse governance programs, evaluate them
//! into ABI-encoded (optionally bridge-wrapped) proposal payloads, retrieve
//! few-shot samples with label-centric retrieval, and validate generated
//! payloads against golden proposals.

pub mod abi;
pub mod ast;
pub mod evaluator;
pub mod parser;
pub mod pipeline;
pub mod registry;
pub mod retrieval;

pub use ast::{make_value, pretty_print, Address, Expr, Program, Statement, Value, ValueKind};
pub use evaluator::{eval_program, resolve_action, wrap_cross_chain, Call, CallPayload, ProposalPayload};
pub use parser::{parse, tokenize};
pub use registry::Registry;
