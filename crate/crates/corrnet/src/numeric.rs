//! Compensated floating-point accumulation.
//!
//! Sums are evaluated left to right with Neumaier compensation so the
//! result is deterministic and stable for series up to ~1e5 terms.

pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub(crate) fn compensated_mean<I: IntoIterator<Item = f64>>(values: I, count: usize) -> f64 {
    debug_assert!(count > 0);
    compensated_sum(values) / count as f64
}
