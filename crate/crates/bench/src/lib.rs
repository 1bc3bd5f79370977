//! Criterion benchmarks for rngaudit-core; see `benches/`.
