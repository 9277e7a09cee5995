//! Criterion benchmarks for the scheme kernels; see `benches/`.
