//! Criterion benchmarks for membrane-core live under `benches/`.
