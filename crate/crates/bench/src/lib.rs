//! Criterion benchmarks for the ufatd pipeline live in `benches/`.
