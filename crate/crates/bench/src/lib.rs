//! Criterion benchmarks for slipflow; see `benches/solvers.rs`.
