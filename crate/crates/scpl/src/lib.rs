//! Social contracts as executable logic programs.
//!
//! A contract is a set of guarded transition rules over agent states. Each
//! agent is a small state machine that acts by broadcasting, receives other
//! agents' acts in per-sender FIFO order, and, for human agents, consults an
//! [oracle](oracle) when the rules leave a choice open.
//!
//! The pipeline runs [`parser`] → [`staticcheck`] (the checks that make a
//! contract runnable, such as no explicit nondeterminism) → [`runtime`]
//! (driven by a [`scheduler`] and an [`oracle`]) → [`trace`]. The
//! [`verifier`] replays a trace against its contract. The [`gateway`] serves
//! a live run over WebSocket so people can operate human agents.
//!
//! ```
//! use scpl::{parser, staticcheck};
//!
//! let src = "activation [a#pinger]. pinger --> ping, pinger(done).";
//! let checked = staticcheck::check(parser::parse_program(src).unwrap());
//! assert!(checked.is_clean());
//! assert_eq!(checked.program.activation.len(), 1);
//! ```

pub mod decimal;
pub mod eval;
pub mod parser;
pub mod program;
pub mod term;
pub mod staticcheck;
pub mod oracle;
pub mod runtime;
pub mod scheduler;
pub mod trace;
pub mod verifier;
pub mod manifest;
pub mod gateway;
pub mod cli;
