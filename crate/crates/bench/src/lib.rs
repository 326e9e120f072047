//! Benchmarks live in `benches/`; run them with `cargo bench -p gpe2-bench`.
