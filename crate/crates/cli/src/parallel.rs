use std::thread;

use mgd_core::{Error, Result};

/// Worker count from `MGD_THREADS`; unset or 0 means single-threaded.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var("MGD_THREADS") {
        Err(std::env::VarError::NotPresent) => Ok(1),
        Err(_) => Err(Error::InvalidArgument(
            "MGD_THREADS is not valid UTF-8".into(),
        )),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(0) => Ok(1),
            Ok(n) => Ok(n),
            Err(_) => Err(Error::InvalidArgument(format!(
                "MGD_THREADS must be a count, got {s:?}"
            ))),
        },
    }
}

/// Maps `f` over `items` on up to `threads` scoped workers, each taking a
/// contiguous chunk. Results come back in input order, so output does not
/// depend on the thread count.
pub fn map<I, O, F>(items: &[I], threads: usize, f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Sync,
{
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(|| part.iter().map(&f).collect::<Vec<O>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| match h.join() {
                Ok(v) => v,
                Err(p) => std::panic::resume_unwind(p),
            })
            .collect()
    })
}
