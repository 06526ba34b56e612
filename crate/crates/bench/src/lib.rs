//! Criterion benchmarks for the tptkit kernels; see `benches/`.
