//! Benchmark-only crate; the measured code lives in `flatgrid-core` and the
//! benchmarks in `benches/`.
