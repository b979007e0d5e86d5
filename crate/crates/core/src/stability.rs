//! Pairwise stability for pooled lending matchings.
//!
//! A borrower-lender pair `(b, l)` blocks a matching when three things hold
//! at once: the pair is unmatched, `l` would rather fund `b` than keep its
//! current assignment (or has none), and the budget already committed to `b`
//! by lenders that `b` strictly prefers over `l` falls short of the request,
//! so `b` has room it would rather fill with `l`.
//!
//! The same condition can be written as one linear inequality per pair:
//!
//! ```text
//! c_b * z[b][l] + c_b * sum_{b' >_l b} z[b'][l] + sum_{l' >_b l} q_{l'} * z[b][l'] >= c_b
//! ```
//!
//! The first term fires when the pair is matched, the second when `l` funds a
//! borrower it strictly prefers over `b`, and the third accumulates the
//! budgets of preferred lenders already pooled by `b`. For every matching
//! with per-lender column sums at most one, a pair violates the inequality
//! exactly when it blocks, which is what makes the inequality usable as a
//! constraint inside the matching programs.
//!
//! All strict-preference sums use the tie-broken total orders from
//! [`PreferenceProfile`], never raw scores, so this oracle and the integer
//! program constraints agree even on tied utilities.

use crate::market::{MarketInstance, PreferenceProfile};
use ndarray::Array2;

/// Lenders currently pooled by borrower `b`, in ascending index order.
pub fn matched_lenders(z: &Array2<u8>, b: usize) -> Vec<usize> {
    (0..z.dim().1).filter(|&l| z[[b, l]] != 0).collect()
}

/// The borrower funded by lender `l`, if any. Requires column sums <= 1.
pub fn lender_assignment(z: &Array2<u8>, l: usize) -> Option<usize> {
    (0..z.dim().0).find(|&b| z[[b, l]] != 0)
}

/// Blocking-pair test, evaluated clause by clause on the match views.
pub fn is_blocking_pair(
    inst: &MarketInstance,
    prefs: &PreferenceProfile,
    z: &Array2<u8>,
    b: usize,
    l: usize,
) -> bool {
    if z[[b, l]] != 0 {
        return false;
    }
    // Lender side: l is unmatched or strictly prefers b to its assignment.
    if let Some(current) = lender_assignment(z, l) {
        if !prefs.lender_prefers(l, b, current) {
            return false;
        }
    }
    // Borrower side: the budget pooled from lenders b strictly prefers over l
    // does not cover the request, so b wants l's budget.
    let preferred_budget: f64 = matched_lenders(z, b)
        .into_iter()
        .filter(|&lp| prefs.borrower_prefers(b, lp, l))
        .map(|lp| inst.budgets[lp])
        .sum();
    preferred_budget < inst.requests[b]
}

/// Per-pair stability inequality, evaluated as a straight linear sum over z.
pub fn inequality_holds(
    inst: &MarketInstance,
    prefs: &PreferenceProfile,
    z: &Array2<u8>,
    b: usize,
    l: usize,
) -> bool {
    let c_b = inst.requests[b];
    let mut lhs = c_b * f64::from(z[[b, l]]);
    for bp in 0..inst.num_borrowers {
        if z[[bp, l]] != 0 && prefs.lender_prefers(l, bp, b) {
            lhs += c_b;
        }
    }
    for lp in 0..inst.num_lenders {
        if z[[b, lp]] != 0 && prefs.borrower_prefers(b, lp, l) {
            lhs += inst.budgets[lp];
        }
    }
    lhs >= c_b
}

/// All blocking pairs of `z`, in row-major (b, l) order.
pub fn blocking_pairs(
    inst: &MarketInstance,
    prefs: &PreferenceProfile,
    z: &Array2<u8>,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for b in 0..inst.num_borrowers {
        for l in 0..inst.num_lenders {
            if is_blocking_pair(inst, prefs, z, b, l) {
                out.push((b, l));
            }
        }
    }
    out
}

/// All pairs violating the stability inequality, in row-major (b, l) order.
pub fn inequality_violations(
    inst: &MarketInstance,
    prefs: &PreferenceProfile,
    z: &Array2<u8>,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for b in 0..inst.num_borrowers {
        for l in 0..inst.num_lenders {
            if !inequality_holds(inst, prefs, z, b, l) {
                out.push((b, l));
            }
        }
    }
    out
}

/// Result of cross-checking the two stability characterizations on one
/// matching. `consistent` is true when both routes flag the same pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub blocking: Vec<(usize, usize)>,
    pub violations: Vec<(usize, usize)>,
    pub consistent: bool,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.blocking.is_empty()
    }
}

/// Compute blocking pairs and inequality violations through their separate
/// code paths and report whether they coincide.
pub fn verify_equivalence(
    inst: &MarketInstance,
    prefs: &PreferenceProfile,
    z: &Array2<u8>,
) -> StabilityReport {
    let blocking = blocking_pairs(inst, prefs, z);
    let violations = inequality_violations(inst, prefs, z);
    let consistent = blocking == violations;
    StabilityReport {
        blocking,
        violations,
        consistent,
    }
}
