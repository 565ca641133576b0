//! Small numeric helpers shared across modules.
//!
//! Settlement sums must be invariant under permutation of the players
//! (anonymity is checked bitwise), so every sum over per-player terms goes
//! through [`stable_sum`], which orders the addends canonically before a
//! compensated summation.

/// Compensated (Kahan) sum over addends sorted by `total_cmp`.
///
/// The sort makes the result independent of input order, so permuting the
/// players of a session reproduces payoffs bit-for-bit.
pub fn stable_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut terms: Vec<f64> = xs.into_iter().collect();
    terms.sort_by(f64::total_cmp);
    kahan_sum(terms.iter().copied())
}

/// Plain compensated sum in iteration order. For fixed-order data (grid
/// quadrature) where permutation invariance is not at stake.
pub fn kahan_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for x in xs {
        let y = x - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Wager-weighted mean of `values`, permutation invariant.
pub fn stable_weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    debug_assert_eq!(values.len(), weights.len());
    let num = stable_sum(values.iter().zip(weights).map(|(v, w)| v * w));
    let den = stable_sum(weights.iter().copied());
    num / den
}
