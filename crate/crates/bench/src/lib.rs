//! Benchmarks only; see benches/pipeline.rs.
