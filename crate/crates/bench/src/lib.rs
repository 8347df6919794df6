//! Criterion benchmarks for the grid operators; see `benches/operators.rs`.
