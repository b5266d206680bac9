//! Thread-pool sizing.
//!
//! The environment variable `MESP_THREADS` caps intra-op parallelism:
//! `0` or `1` forces serial execution, any larger value sets the rayon pool
//! size, and unset/unparsable values leave rayon's default (one thread per
//! core). Work is always partitioned into fixed chunks whose internal
//! accumulation order does not depend on the number of threads, so results
//! are bitwise identical across any setting.

use std::sync::OnceLock;

static INIT: OnceLock<usize> = OnceLock::new();

/// Reads `MESP_THREADS` once and configures the global rayon pool before its
/// first use. Returns the effective thread count (0 = rayon default).
pub fn ensure_thread_pool() -> usize {
    *INIT.get_or_init(|| {
        let requested = std::env::var("MESP_THREADS")
            .ok()
            .and_then(|s| s.trim().parse::<usize>().ok());
        let threads = match requested {
            None => 0,           // leave rayon's default
            Some(n) => n.max(1), // 0 and 1 both mean serial
        };
        if threads > 0 {
            // Fails if a global pool already exists; results are identical
            // either way, only the degree of parallelism differs.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
        threads
    })
}

#[cfg(test)]
mod tests {
    #[test]
    fn ensure_is_idempotent() {
        let a = super::ensure_thread_pool();
        let b = super::ensure_thread_pool();
        assert_eq!(a, b);
    }
}
