//! Wall-clock timing loop for the throughput benchmark. Runs serially on
//! the calling thread.

use std::time::Instant;

use antiqa_core::harness::bench::{BenchConfig, TimingSummary};

/// Calls `f` `warmup` times untimed, then `runs` times timed.
pub fn time_runs<T>(config: &BenchConfig, mut f: impl FnMut() -> T) -> Option<TimingSummary> {
    for _ in 0..config.warmup {
        std::hint::black_box(f());
    }
    let mut times = Vec::with_capacity(config.runs);
    for _ in 0..config.runs {
        let t = Instant::now();
        std::hint::black_box(f());
        times.push(t.elapsed().as_secs_f64());
    }
    TimingSummary::from_times(&times)
}
