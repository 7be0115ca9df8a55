//! Crate-wide error type.

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Syntax error in a database file or query string, with 1-based line.
    #[error("syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },

    /// A fact does not fit the declared arity or key split of its relation.
    #[error("arity mismatch at line {line}: {message}")]
    ArityMismatch { line: usize, message: String },

    /// Conflicting key declarations for one relation.
    #[error("inconsistent key split for relation `{relation}`: {message}")]
    InconsistentKey { relation: String, message: String },

    /// Relation declaration is malformed (bad arity or key index).
    #[error("bad relation declaration for `{relation}`: {message}")]
    BadRelation { relation: String, message: String },

    /// A query relation disagrees with the database schema.
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    /// An enumeration or search exceeded its configured limit.
    #[error("{what} limit exceeded (limit {limit})")]
    LimitExceeded { what: &'static str, limit: u64 },

    /// Operation requires a self-join-free query.
    #[error("query is not self-join-free")]
    NotSelfJoinFree,

    /// Operation requires a path query.
    #[error("query is not a path query")]
    NotPath,

    /// Operation requires a query with exactly two atoms.
    #[error("query has {0} atoms, expected exactly 2")]
    WrongAtomCount(usize),

    /// Argument outside its documented range.
    #[error("argument out of range: {0}")]
    OutOfRange(String),

    /// A structural invariant that should hold by construction was violated.
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    /// Malformed trace input during replay.
    #[error("bad trace: {0}")]
    BadTrace(String),
}
