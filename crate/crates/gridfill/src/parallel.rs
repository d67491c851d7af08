//! Deterministic fork-join map over a worker pool.
//!
//! `GRIDFILL_THREADS` caps the worker count (default: available
//! parallelism). Results are always collected in input order, so the
//! reduction downstream sees the same sequence regardless of how many
//! threads actually ran.

use std::sync::atomic::{AtomicUsize, Ordering};

/// Number of worker threads to use, honoring `GRIDFILL_THREADS`.
///
/// Unset, empty, zero, or unparsable values fall back to the machine's
/// available parallelism.
pub fn thread_count() -> usize {
    let default = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    match std::env::var("GRIDFILL_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => n,
            _ => default,
        },
        Err(_) => default,
    }
}

/// Applies `f` to every item and returns outputs in input order.
///
/// Work is distributed by an atomic cursor; each output lands in the slot
/// of its input, so the result is independent of scheduling. `f` must be
/// deterministic for the whole map to be.
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    let workers = thread_count().min(items.len()).max(1);
    if workers == 1 {
        return items.iter().map(|it| f(it)).collect();
    }
    let mut out: Vec<Option<U>> = (0..items.len()).map(|_| None).collect();
    let slots: Vec<std::sync::Mutex<&mut Option<U>>> =
        out.iter_mut().map(std::sync::Mutex::new).collect();
    let cursor = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let val = f(&items[i]);
                **slots[i].lock().unwrap() = Some(val);
            });
        }
    });
    drop(slots);
    out.into_iter().map(|v| v.unwrap()).collect()
}
