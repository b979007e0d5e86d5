//! Market primitives: instances, preference profiles, and matchings.
//!
//! A market couples `K` borrowers with `N` lenders (`K <= N`). Borrower `b`
//! carries a funding request `c_b` and a rate `eta_b`; lender `l` carries a
//! budget `q_l`. Borrower-side utilities `u_b(l)` are drawn uniformly on
//! (0, 1); lender-side utilities are `eta_b * q_l`, normalized by the global
//! maximum so the best entry is exactly 1. A matching assigns each lender to
//! at most one borrower, while a borrower may pool several lenders to cover
//! its request.
//!
//! Generation rejection-samples budgets until total budget covers total
//! request and the per-round matching program admits an integral solution, so
//! downstream engines never start from an unfundable market.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

/// Stream tags for deriving independent RNG streams from one root seed.
/// Each (seed, purpose, run) triple yields a reproducible generator that is
/// stable across thread counts and platforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Generation,
    GsUcb,
    GsBlemet,
    GsBlemetFair,
    Optimal,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Generation => 1,
            StreamPurpose::GsUcb => 2,
            StreamPurpose::GsBlemet => 3,
            StreamPurpose::GsBlemetFair => 4,
            StreamPurpose::Optimal => 5,
        }
    }
}

/// Deterministic generator for `(root_seed, purpose, run_index)`.
pub fn derive_rng(root_seed: u64, purpose: StreamPurpose, run_index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(root_seed);
    rng.set_stream((purpose.tag() << 32) | (run_index & 0xffff_ffff));
    rng
}

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("invalid parameter {name}: {detail}")]
    InvalidParameter { name: &'static str, detail: String },
    #[error("budget resampling exhausted after {retries} attempts without a fundable market")]
    FeasibilityRetryExhausted { retries: u32 },
}

/// Draw ranges and sizes for random instances.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub num_borrowers: usize,
    pub num_lenders: usize,
    /// Inclusive range for borrower requests.
    pub c_range: (f64, f64),
    /// Inclusive range for lender budgets.
    pub q_range: (f64, f64),
    /// Cap on budget resampling rounds before giving up.
    pub feasibility_retries: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            num_borrowers: 20,
            num_lenders: 60,
            c_range: (10.0, 50.0),
            q_range: (1.0, 30.0),
            feasibility_retries: 1000,
        }
    }
}

impl GenerationConfig {
    /// Degenerate ranges (low == high) are allowed and draw the constant.
    pub fn validate(&self) -> Result<(), MarketError> {
        let invalid = |name, detail: String| Err(MarketError::InvalidParameter { name, detail });
        if self.num_borrowers == 0 {
            return invalid("num_borrowers", "must be at least 1".into());
        }
        if self.num_lenders < self.num_borrowers {
            return invalid(
                "num_lenders",
                format!(
                    "must be >= num_borrowers ({} < {})",
                    self.num_lenders, self.num_borrowers
                ),
            );
        }
        for (name, (lo, hi)) in [("c_range", self.c_range), ("q_range", self.q_range)] {
            if !lo.is_finite() || !hi.is_finite() {
                return invalid(name, "bounds must be finite".into());
            }
            if lo <= 0.0 {
                return invalid(name, format!("lower bound must be positive, got {lo}"));
            }
            if lo > hi {
                return invalid(name, format!("lower bound {lo} exceeds upper bound {hi}"));
            }
        }
        if self.feasibility_retries == 0 {
            return invalid("feasibility_retries", "must be at least 1".into());
        }
        Ok(())
    }
}

/// One fully specified market: sizes, requests, budgets, rates, and both
/// utility matrices. `borrower_utils[[b, l]]` is `u_b(l)`;
/// `lender_utils[[l, b]]` is `u_l(b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketInstance {
    pub num_borrowers: usize,
    pub num_lenders: usize,
    pub requests: Vec<f64>,
    pub budgets: Vec<f64>,
    pub rates: Vec<f64>,
    pub borrower_utils: Array2<f64>,
    pub lender_utils: Array2<f64>,
    /// Root seed the instance was generated from (0 for hand-built ones).
    pub seed: u64,
}

impl MarketInstance {
    pub fn new(
        requests: Vec<f64>,
        budgets: Vec<f64>,
        rates: Vec<f64>,
        borrower_utils: Array2<f64>,
        lender_utils: Array2<f64>,
        seed: u64,
    ) -> Result<Self, MarketError> {
        let k = requests.len();
        let n = budgets.len();
        let invalid = |name, detail: String| Err(MarketError::InvalidParameter { name, detail });
        if k == 0 {
            return invalid("requests", "need at least one borrower".into());
        }
        if n < k {
            return invalid("budgets", format!("need at least as many lenders as borrowers ({n} < {k})"));
        }
        if rates.len() != k {
            return invalid("rates", format!("expected {k} entries, got {}", rates.len()));
        }
        if borrower_utils.dim() != (k, n) {
            return invalid("borrower_utils", format!("expected {k}x{n}, got {:?}", borrower_utils.dim()));
        }
        if lender_utils.dim() != (n, k) {
            return invalid("lender_utils", format!("expected {n}x{k}, got {:?}", lender_utils.dim()));
        }
        if requests.iter().any(|c| !c.is_finite() || *c <= 0.0) {
            return invalid("requests", "all requests must be finite and positive".into());
        }
        if budgets.iter().any(|q| !q.is_finite() || *q <= 0.0) {
            return invalid("budgets", "all budgets must be finite and positive".into());
        }
        if rates.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return invalid("rates", "all rates must lie strictly inside (0, 1)".into());
        }
        if borrower_utils.iter().chain(lender_utils.iter()).any(|u| !(*u >= 0.0 && *u <= 1.0)) {
            return invalid("utilities", "all utilities must lie in [0, 1]".into());
        }
        Ok(MarketInstance {
            num_borrowers: k,
            num_lenders: n,
            requests,
            budgets,
            rates,
            borrower_utils,
            lender_utils,
            seed,
        })
    }

    /// Elementwise total pair utility `u_b(l) + u_l(b)`, shaped borrower-major.
    pub fn total_utils(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.num_borrowers, self.num_lenders));
        for b in 0..self.num_borrowers {
            for l in 0..self.num_lenders {
                out[[b, l]] = self.borrower_utils[[b, l]] + self.lender_utils[[l, b]];
            }
        }
        out
    }
}

/// Lender-side utilities `eta_b * q_l`, normalized by the global maximum so
/// every entry lands in (0, 1] and the best pair scores exactly 1.
pub fn lender_utilities(rates: &[f64], budgets: &[f64]) -> Array2<f64> {
    let n = budgets.len();
    let k = rates.len();
    let mut raw = Array2::zeros((n, k));
    let mut max = f64::NEG_INFINITY;
    for l in 0..n {
        for b in 0..k {
            let v = rates[b] * budgets[l];
            raw[[l, b]] = v;
            if v > max {
                max = v;
            }
        }
    }
    assert!(max > 0.0, "rates and budgets must be positive");
    raw.mapv_inplace(|v| v / max);
    raw
}

/// Indices of candidates ranked by descending score. `+inf` sorts first,
/// ties break toward the lower index, and excluded candidates are dropped.
/// Scores must not be NaN.
pub fn rank_from_scores(scores: &[f64], excluded: &[bool]) -> Vec<usize> {
    assert_eq!(scores.len(), excluded.len());
    let mut order: Vec<usize> = (0..scores.len()).filter(|i| !excluded[*i]).collect();
    debug_assert!(order.iter().all(|&i| !scores[i].is_nan()));
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Strict preference orders on both sides, derived from score matrices with
/// the descending-score, index-tie-break rule. Positions are dense ranks:
/// position 0 is the most preferred counterparty.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceProfile {
    lender_order: Vec<Vec<usize>>,
    borrower_order: Vec<Vec<usize>>,
    lender_pos: Array2<usize>,
    borrower_pos: Array2<usize>,
}

impl PreferenceProfile {
    /// `lender_scores` is lender-major (`N x K`), `borrower_scores` is
    /// borrower-major (`K x N`).
    pub fn from_scores(lender_scores: &Array2<f64>, borrower_scores: &Array2<f64>) -> Self {
        let (n, k) = lender_scores.dim();
        assert_eq!(borrower_scores.dim(), (k, n), "score matrices disagree on market shape");
        let none_b = vec![false; k];
        let none_l = vec![false; n];
        let mut lender_order = Vec::with_capacity(n);
        let mut lender_pos = Array2::from_elem((n, k), usize::MAX);
        for l in 0..n {
            let row: Vec<f64> = lender_scores.row(l).to_vec();
            let order = rank_from_scores(&row, &none_b);
            for (pos, &b) in order.iter().enumerate() {
                lender_pos[[l, b]] = pos;
            }
            lender_order.push(order);
        }
        let mut borrower_order = Vec::with_capacity(k);
        let mut borrower_pos = Array2::from_elem((k, n), usize::MAX);
        for b in 0..k {
            let row: Vec<f64> = borrower_scores.row(b).to_vec();
            let order = rank_from_scores(&row, &none_l);
            for (pos, &l) in order.iter().enumerate() {
                borrower_pos[[b, l]] = pos;
            }
            borrower_order.push(order);
        }
        PreferenceProfile {
            lender_order,
            borrower_order,
            lender_pos,
            borrower_pos,
        }
    }

    pub fn num_lenders(&self) -> usize {
        self.lender_order.len()
    }

    pub fn num_borrowers(&self) -> usize {
        self.borrower_order.len()
    }

    /// Borrowers in lender `l`'s descending order of preference.
    pub fn lender_order(&self, l: usize) -> &[usize] {
        &self.lender_order[l]
    }

    /// Lenders in borrower `b`'s descending order of preference.
    pub fn borrower_order(&self, b: usize) -> &[usize] {
        &self.borrower_order[b]
    }

    /// True iff lender `l` strictly prefers borrower `b1` to `b2`.
    pub fn lender_prefers(&self, l: usize, b1: usize, b2: usize) -> bool {
        self.lender_pos[[l, b1]] < self.lender_pos[[l, b2]]
    }

    /// True iff borrower `b` strictly prefers lender `l1` to `l2`.
    pub fn borrower_prefers(&self, b: usize, l1: usize, l2: usize) -> bool {
        self.borrower_pos[[b, l1]] < self.borrower_pos[[b, l2]]
    }
}

/// A binary matching with its blocking indicators and the two match views
/// kept consistent with `z`: `lender_match[l]` is the borrower funded by `l`
/// (if any) and `borrower_match[b]` lists the lenders pooled by `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub z: Array2<u8>,
    pub w: Array2<u8>,
    pub lender_match: Vec<Option<usize>>,
    pub borrower_match: Vec<Vec<usize>>,
    pub objective: f64,
}

impl Matching {
    pub fn from_z_w(z: Array2<u8>, w: Array2<u8>, objective: f64) -> Result<Self, MarketError> {
        let (k, n) = z.dim();
        if w.dim() != (k, n) {
            return Err(MarketError::InvalidParameter {
                name: "w",
                detail: format!("expected {k}x{n}, got {:?}", w.dim()),
            });
        }
        let mut lender_match = vec![None; n];
        let mut borrower_match = vec![Vec::new(); k];
        for l in 0..n {
            for b in 0..k {
                if z[[b, l]] != 0 {
                    if lender_match[l].is_some() {
                        return Err(MarketError::InvalidParameter {
                            name: "z",
                            detail: format!("lender {l} assigned to more than one borrower"),
                        });
                    }
                    lender_match[l] = Some(b);
                    borrower_match[b].push(l);
                }
            }
        }
        Ok(Matching {
            z,
            w,
            lender_match,
            borrower_match,
            objective,
        })
    }
}

/// Generate an instance from a root seed, resampling budgets (keeping
/// requests, rates, and borrower utilities fixed) until the market is
/// fundable: total budget covers total request and the matching program has
/// an integral solution.
pub fn generate_instance(cfg: &GenerationConfig, seed: u64) -> Result<MarketInstance, MarketError> {
    generate_instance_with(cfg, seed, crate::solver::funding_feasible)
}

/// Same as [`generate_instance`] but with an injectable feasibility test,
/// used to exercise the retry logic in isolation.
pub fn generate_instance_with(
    cfg: &GenerationConfig,
    seed: u64,
    feasible: impl Fn(&[f64], &[f64]) -> bool,
) -> Result<MarketInstance, MarketError> {
    cfg.validate()?;
    let mut rng = derive_rng(seed, StreamPurpose::Generation, 0);
    let k = cfg.num_borrowers;
    let n = cfg.num_lenders;

    let requests: Vec<f64> = (0..k).map(|_| rng.random_range(cfg.c_range.0..=cfg.c_range.1)).collect();
    let rates: Vec<f64> = (0..k).map(|_| open_unit(&mut rng)).collect();
    let mut borrower_utils = Array2::zeros((k, n));
    for b in 0..k {
        for l in 0..n {
            borrower_utils[[b, l]] = open_unit(&mut rng);
        }
    }

    let total_request: f64 = requests.iter().sum();
    let mut budgets = None;
    for _ in 0..cfg.feasibility_retries {
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(cfg.q_range.0..=cfg.q_range.1)).collect();
        if q.iter().sum::<f64>() >= total_request && feasible(&requests, &q) {
            budgets = Some(q);
            break;
        }
    }
    let budgets = budgets.ok_or(MarketError::FeasibilityRetryExhausted {
        retries: cfg.feasibility_retries,
    })?;

    let lender_utils = lender_utilities(&rates, &budgets);
    MarketInstance::new(requests, budgets, rates, borrower_utils, lender_utils, seed)
}

/// Uniform draw strictly inside (0, 1).
fn open_unit(rng: &mut ChaCha12Rng) -> f64 {
    loop {
        let x: f64 = rng.random_range(0.0..1.0);
        if x > 0.0 {
            return x;
        }
    }
}
