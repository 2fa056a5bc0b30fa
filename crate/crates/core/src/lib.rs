//! GLP: parser, single-agent engine, multiagent
//! runtime with sealed envelopes, and a trace verifier.

pub mod corpus;
pub mod engine;
pub mod error;
pub mod lp_oracle;
pub mod multiagent;
pub mod parser;
pub mod program;
pub mod rewrite;
pub mod security;
pub mod session;
pub mod store;
pub mod term;
pub mod trace;
pub mod unify;
pub mod verifier;

pub use error::GlpError;
pub use store::{fresh_pair, Bindings, IdGen, Status, Store};
pub use term::{Number, Polarity, Term, Var};
