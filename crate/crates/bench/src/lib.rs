//! Criterion benchmarks for the metric and mask kernels; see `benches/`.
