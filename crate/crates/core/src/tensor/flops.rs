//! Opt-in floating-point operation counter.
//!
//! Kernels report their multiply/add count through [`record`]. Counting is
//! scoped to the calling thread, so concurrent evaluations never share a
//! counter.

use std::cell::Cell;

thread_local! {
    static COUNTER: Cell<Option<u64>> = const { Cell::new(None) };
}

/// Runs `f` with counting enabled and returns its result together with the
/// number of flops recorded by tensor kernels on this thread.
///
/// Nested scopes are supported: the inner count is also added to the outer one.
pub fn count_flops<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let outer = COUNTER.with(|c| c.replace(Some(0)));
    let out = f();
    let inner = COUNTER.with(|c| c.replace(outer)).unwrap_or(0);
    if outer.is_some() {
        record(inner);
    }
    (out, inner)
}

#[inline]
pub(crate) fn record(n: u64) {
    COUNTER.with(|c| {
        if let Some(v) = c.get() {
            c.set(Some(v + n));
        }
    });
}
