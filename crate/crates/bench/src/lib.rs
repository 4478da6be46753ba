//! Criterion benchmarks for logsig-core; see `benches/`.
