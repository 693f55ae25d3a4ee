//! Benchmarks only; see `benches/filter.rs` and run `cargo bench -p terraphd-bench`.
