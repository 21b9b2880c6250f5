//! Benchmark-only crate; see `benches/workloads.rs`.
