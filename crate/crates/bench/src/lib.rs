//! Criterion benchmarks for the controller and simulation hot paths; see `benches/`.
