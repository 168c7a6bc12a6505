//! Benchmarks for the simulator kernels live in `benches/`.
