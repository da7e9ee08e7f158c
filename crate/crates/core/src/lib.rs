//! Shape and numeric invariant inference for free-list memory allocators.
//!
//! The analyzer abstracts allocator states by a two-level symbolic heap
//! (heap-list level over free-list level) paired with a data-word pure
//! domain, and checks itself against a byte-level concrete interpreter.

pub mod corpus;
pub mod engine;
pub mod memc;
pub mod num;
pub mod oracle;
pub mod pure;
pub mod shape;
pub mod transfer;
pub mod sym;
pub mod value;
