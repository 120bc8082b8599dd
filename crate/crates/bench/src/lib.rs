//! Benchmarks for derangement-core live in `benches/core.rs`; run them with
//! `cargo bench -p derangement-bench`.
