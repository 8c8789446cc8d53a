//! Benchmark-only crate; see `benches/core_hot_paths.rs`.
