//! Process-wide runtime knobs.

use std::sync::OnceLock;

/// Environment variable that caps the worker-thread count, e.g.
/// `NHMM_THREADS=1` for a fully serial run.
pub const THREADS_ENV: &str = "NHMM_THREADS";

/// Applies the thread cap once per process. Must run before any parallel
/// work; later calls return the first outcome. Returns the applied cap, or
/// `None` when the variable is unset, unparsable, or the pool was already
/// built.
pub fn init_threads() -> Option<usize> {
    static APPLIED: OnceLock<Option<usize>> = OnceLock::new();
    *APPLIED.get_or_init(|| {
        let n: usize = std::env::var(THREADS_ENV).ok()?.trim().parse().ok()?;
        if n == 0 {
            return None;
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok()?;
        Some(n)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_initialization_is_stable() {
        let first = init_threads();
        assert_eq!(init_threads(), first);
    }
}
