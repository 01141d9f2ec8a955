//! Executable encodings: tree automata and Σ-trees, the complete-graph
//! embedding of value-passing CCS, and the alternating bit protocol.

pub mod abp;
pub mod automata;
pub mod vccs;
