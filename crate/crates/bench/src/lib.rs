//! Benchmarks for the hot numeric paths live under `benches/`.
