//! Criterion benchmarks for the descriptor pipeline live in `benches/`.
