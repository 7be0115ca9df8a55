//! Certain query answering over inconsistent databases under primary key
//! constraints.
//!
//! An inconsistent database may contain several facts of one relation that
//! agree on the relation's primary key; the maximal groups of such facts are
//! called *blocks*. A *repair* keeps exactly one fact per block. A Boolean
//! conjunctive query `q` is *certain* for a database `D` when every repair of
//! `D` satisfies `q`.
//!
//! The crate provides:
//!
//! - [`model`], [`parse`], [`eval`]: the data model (schemas, facts, blocks,
//!   repairs, conjunctive queries), text formats, and query evaluation;
//! - [`fixpoint`]: the inflationary k-set fixpoint `Cqk` and its two-atom
//!   extension `Cqk+`, with per-round derivation stamps and traces;
//! - [`oracle`]: ground-truth certainty by exhaustive or pruned search over
//!   repairs;
//! - [`sjf`]: static analysis of self-join-free queries (derivations,
//!   determinacy, attack graph, complexity classification);
//! - [`path`]: path-query machinery (prefix automaton, factor and prefix
//!   conditions on its language, the pair fixpoint);
//! - [`matching`]: the polynomial solver for the two-atom rotation query via
//!   bipartite matching, and the reverse reduction from saturating matching;
//! - [`generators`]: adversarial instance families and seeded random
//!   databases.

pub mod error;
pub mod eval;
pub mod fixpoint;
pub mod generators;
pub mod matching;
pub mod model;
pub mod oracle;
pub mod parse;
pub mod path;
pub mod sjf;

pub use error::Error;
pub use model::{Atom, Block, BlockId, ConjunctiveQuery, Database, Fact, FactId, Repair, Schema};
