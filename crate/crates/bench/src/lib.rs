//! Criterion benchmarks for the `fundform` kernels; see `benches/`.
