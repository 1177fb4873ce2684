//! Shared worker pool for parallel scans.
//!
//! The pool size comes from the `IMEXGLM_WORKERS` environment variable when
//! it holds a positive integer, otherwise from the available parallelism.
//! Results are always collected in input order, so output does not depend on
//! the worker count.

use std::sync::OnceLock;

use rayon::{ThreadPool, ThreadPoolBuilder};

pub const WORKERS_ENV: &str = "IMEXGLM_WORKERS";

pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn pool() -> &'static ThreadPool {
    static POOL: OnceLock<ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        ThreadPoolBuilder::new()
            .num_threads(worker_count())
            .thread_name(|i| format!("imexglm-worker-{i}"))
            .build()
            .expect("thread pool construction")
    })
}
