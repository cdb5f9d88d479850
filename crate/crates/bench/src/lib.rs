//! Benchmark-only crate; see `benches/shrinkage.rs`.
