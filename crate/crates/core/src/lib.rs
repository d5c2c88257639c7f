//! Pragma design-space exploration for high-level synthesis kernels.
//!
//! The pipeline: parse a kernel ([`frontend`]), enumerate its pragma design
//! space ([`space`]), label designs with the analytical cost model
//! ([`oracle`]), turn each design into a pragma-augmented program graph
//! ([`graph`]), train GNN surrogates ([`gnn`], [`trainer`]) on a database of
//! labelled designs ([`dbgen`]) and search with them ([`dse`]).

pub mod frontend;
pub mod oracle;
pub mod space;
pub mod corpus;
pub mod autodiff;
pub mod graph;
pub mod gnn;
pub mod context;
pub mod trainer;
pub mod dbgen;
pub mod dse;
