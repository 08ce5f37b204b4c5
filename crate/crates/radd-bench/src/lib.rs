//! Benchmark-only crate; see `benches/schemes.rs`.
