//! Criterion benchmarks for `sccalib-core`; see `benches/`.
