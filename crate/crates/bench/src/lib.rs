//! Criterion benchmarks for the gridform kernels live in `benches/`.
