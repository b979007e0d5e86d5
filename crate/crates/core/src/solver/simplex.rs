//! Dense dual simplex for box-constrained LP relaxations.
//!
//! Models arrive as `max c'x` subject to `Ax <= b` and `lb <= x <= ub` (every
//! `>=` row is negated by the caller). The all-slack basis is primal
//! infeasible but dual feasible once each structural variable starts at the
//! bound matching the sign of its objective coefficient, so the dual simplex
//! walks straight from that start: pick the most violated basic variable,
//! restore it to its bound, and keep reduced costs sign-feasible with the
//! usual bounded-variable ratio test. Ties break toward low indices so a
//! given model always pivots the same way.

use std::time::Instant;

const FEAS_TOL: f64 = 1e-7;
const PIVOT_TOL: f64 = 1e-9;
const FIXED_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    /// Iteration cap or deadline hit before optimality.
    Stalled,
}

/// One `<=` row in sparse form over structural variables.
#[derive(Debug, Clone)]
pub(crate) struct LeRow {
    pub coeffs: Vec<(u32, f64)>,
    pub rhs: f64,
}

/// Reusable LP data for one integer model: the dense prototype tableau is
/// built once and copied per relaxation, with node-specific bounds applied
/// on top.
pub(crate) struct LpProblem {
    pub n_struct: usize,
    m: usize,
    ncols: usize,
    obj: Vec<f64>,
    rows: Vec<LeRow>,
    proto: Vec<f64>,
}

#[derive(Default)]
pub(crate) struct LpScratch {
    tab: Vec<f64>,
    d: Vec<f64>,
    x_b: Vec<f64>,
    basis: Vec<usize>,
    row_of: Vec<i32>,
    at_upper: Vec<bool>,
    lbx: Vec<f64>,
    ubx: Vec<f64>,
    pivot_row: Vec<f64>,
}

impl LpProblem {
    pub fn new(n_struct: usize, obj: Vec<f64>, rows: Vec<LeRow>) -> Self {
        assert_eq!(obj.len(), n_struct);
        let m = rows.len();
        let ncols = n_struct + m;
        let mut proto = vec![0.0; m * ncols];
        for (i, row) in rows.iter().enumerate() {
            let base = i * ncols;
            for &(j, a) in &row.coeffs {
                proto[base + j as usize] += a;
            }
            proto[base + n_struct + i] = 1.0;
        }
        LpProblem {
            n_struct,
            m,
            ncols,
            obj,
            rows,
            proto,
        }
    }

    /// Solve the relaxation under the given structural bounds.
    pub fn solve(
        &self,
        lb: &[f64],
        ub: &[f64],
        ws: &mut LpScratch,
        deadline: Option<Instant>,
    ) -> LpOutcome {
        let (m, nc, ns) = (self.m, self.ncols, self.n_struct);
        ws.tab.clear();
        ws.tab.extend_from_slice(&self.proto);
        ws.d.clear();
        ws.d.extend_from_slice(&self.obj);
        ws.d.resize(nc, 0.0);
        ws.lbx.clear();
        ws.lbx.extend_from_slice(lb);
        ws.lbx.resize(nc, 0.0);
        ws.ubx.clear();
        ws.ubx.extend_from_slice(ub);
        ws.ubx.resize(nc, f64::INFINITY);
        ws.at_upper.clear();
        ws.at_upper.resize(nc, false);
        ws.basis.clear();
        ws.row_of.clear();
        ws.row_of.resize(nc, -1);
        for i in 0..m {
            ws.basis.push(ns + i);
            ws.row_of[ns + i] = i as i32;
        }
        // Dual-feasible start: positive reduced cost sits at the upper bound.
        for j in 0..ns {
            if ws.ubx[j] - ws.lbx[j] > FIXED_TOL && self.obj[j] > 0.0 {
                ws.at_upper[j] = true;
            }
        }
        ws.x_b.clear();
        ws.x_b.resize(m, 0.0);
        for (i, row) in self.rows.iter().enumerate() {
            let mut v = row.rhs;
            for &(j, a) in &row.coeffs {
                let j = j as usize;
                let xj = if ws.at_upper[j] { ws.ubx[j] } else { ws.lbx[j] };
                v -= a * xj;
            }
            ws.x_b[i] = v;
        }
        ws.pivot_row.clear();
        ws.pivot_row.resize(nc, 0.0);

        let max_iter = 400 + 40 * m + 4 * ns;
        for iter in 0..max_iter {
            if iter % 64 == 63 {
                if let Some(t) = deadline {
                    if Instant::now() >= t {
                        return LpOutcome::Stalled;
                    }
                }
            }
            // Leaving variable: largest bound violation among basics.
            let mut r = usize::MAX;
            let mut worst = FEAS_TOL;
            let mut above = false;
            for i in 0..m {
                let bv = ws.basis[i];
                let below_by = ws.lbx[bv] - ws.x_b[i];
                if below_by > worst {
                    worst = below_by;
                    r = i;
                    above = false;
                }
                let above_by = ws.x_b[i] - ws.ubx[bv];
                if above_by > worst {
                    worst = above_by;
                    r = i;
                    above = true;
                }
            }
            if r == usize::MAX {
                let x = self.extract(ws);
                let value = x.iter().zip(&self.obj).map(|(xi, ci)| xi * ci).sum();
                return LpOutcome::Optimal { x, value };
            }

            // Entering variable: bounded-variable dual ratio test.
            let base = r * nc;
            let mut enter = usize::MAX;
            let mut best_ratio = f64::INFINITY;
            for j in 0..nc {
                if ws.row_of[j] >= 0 || ws.ubx[j] - ws.lbx[j] <= FIXED_TOL {
                    continue;
                }
                let a = ws.tab[base + j];
                if a.abs() < PIVOT_TOL {
                    continue;
                }
                let usable = if above {
                    (!ws.at_upper[j] && a > 0.0) || (ws.at_upper[j] && a < 0.0)
                } else {
                    (!ws.at_upper[j] && a < 0.0) || (ws.at_upper[j] && a > 0.0)
                };
                if !usable {
                    continue;
                }
                let ratio = ws.d[j].abs() / a.abs();
                if ratio + 1e-12 < best_ratio {
                    best_ratio = ratio;
                    enter = j;
                }
            }
            if enter == usize::MAX {
                return LpOutcome::Infeasible;
            }
            self.pivot(ws, r, enter, above);
        }
        LpOutcome::Stalled
    }

    fn pivot(&self, ws: &mut LpScratch, r: usize, j: usize, above: bool) {
        let nc = self.ncols;
        let base = r * nc;
        let alpha = ws.tab[base + j];
        let leaving = ws.basis[r];
        let target = if above { ws.ubx[leaving] } else { ws.lbx[leaving] };
        let delta = (ws.x_b[r] - target) / alpha;
        let xj_old = if ws.at_upper[j] { ws.ubx[j] } else { ws.lbx[j] };

        for i in 0..self.m {
            if i != r {
                let a = ws.tab[i * nc + j];
                if a != 0.0 {
                    ws.x_b[i] -= a * delta;
                }
            }
        }

        let inv = 1.0 / alpha;
        for v in &mut ws.tab[base..base + nc] {
            *v *= inv;
        }
        ws.pivot_row.copy_from_slice(&ws.tab[base..base + nc]);
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = ws.tab[i * nc + j];
            if f != 0.0 {
                let row = &mut ws.tab[i * nc..i * nc + nc];
                for (v, p) in row.iter_mut().zip(&ws.pivot_row) {
                    *v -= f * p;
                }
            }
        }
        let f = ws.d[j];
        if f != 0.0 {
            for (v, p) in ws.d.iter_mut().zip(&ws.pivot_row) {
                *v -= f * p;
            }
        }

        ws.row_of[leaving] = -1;
        ws.at_upper[leaving] = above;
        ws.basis[r] = j;
        ws.row_of[j] = r as i32;
        ws.x_b[r] = xj_old + delta;
        ws.d[j] = 0.0;
    }

    fn extract(&self, ws: &LpScratch) -> Vec<f64> {
        let mut x = vec![0.0; self.n_struct];
        for (j, v) in x.iter_mut().enumerate() {
            *v = if ws.row_of[j] >= 0 {
                ws.x_b[ws.row_of[j] as usize]
            } else if ws.at_upper[j] {
                ws.ubx[j]
            } else {
                ws.lbx[j]
            }
            .clamp(ws.lbx[j], ws.ubx[j]);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(p: &LpProblem, lb: &[f64], ub: &[f64]) -> LpOutcome {
        p.solve(lb, ub, &mut LpScratch::default(), None)
    }

    #[test]
    fn caps_a_shared_resource() {
        // max x + y with x + y <= 1.5 on the unit box.
        let p = LpProblem::new(
            2,
            vec![1.0, 1.0],
            vec![LeRow {
                coeffs: vec![(0, 1.0), (1, 1.0)],
                rhs: 1.5,
            }],
        );
        match solve(&p, &[0.0, 0.0], &[1.0, 1.0]) {
            LpOutcome::Optimal { value, x } => {
                assert!((value - 1.5).abs() < 1e-9, "value {value}");
                assert!((x[0] + x[1] - 1.5).abs() < 1e-9);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn covering_row_forces_nothing_when_box_suffices() {
        // max 2x + y with x + y >= 1 (negated), optimum at the top corner.
        let p = LpProblem::new(
            2,
            vec![2.0, 1.0],
            vec![LeRow {
                coeffs: vec![(0, -1.0), (1, -1.0)],
                rhs: -1.0,
            }],
        );
        match solve(&p, &[0.0, 0.0], &[1.0, 1.0]) {
            LpOutcome::Optimal { value, .. } => assert!((value - 3.0).abs() < 1e-9),
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn covering_row_pulls_cheapest_variable_up() {
        // min x2 (as max -x2) with 10 x1 + 10 x2 >= 15, x in [0,1]^2.
        let p = LpProblem::new(
            2,
            vec![0.0, -1.0],
            vec![LeRow {
                coeffs: vec![(0, -10.0), (1, -10.0)],
                rhs: -15.0,
            }],
        );
        match solve(&p, &[0.0, 0.0], &[1.0, 1.0]) {
            LpOutcome::Optimal { x, value } => {
                assert!((x[0] - 1.0).abs() < 1e-9);
                assert!((x[1] - 0.5).abs() < 1e-9);
                assert!((value + 0.5).abs() < 1e-9);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn detects_infeasible_boxes() {
        // x <= -1 cannot meet x >= 0.
        let p = LpProblem::new(
            1,
            vec![1.0],
            vec![LeRow {
                coeffs: vec![(0, 1.0)],
                rhs: -1.0,
            }],
        );
        assert_eq!(solve(&p, &[0.0], &[1.0]), LpOutcome::Infeasible);
    }

    #[test]
    fn respects_fixed_variables() {
        // x fixed at 1, y free in [0,1], x + y <= 1 forces y = 0.
        let p = LpProblem::new(
            2,
            vec![0.0, 1.0],
            vec![LeRow {
                coeffs: vec![(0, 1.0), (1, 1.0)],
                rhs: 1.0,
            }],
        );
        match solve(&p, &[1.0, 0.0], &[1.0, 1.0]) {
            LpOutcome::Optimal { x, value } => {
                assert!((x[0] - 1.0).abs() < 1e-9);
                assert!(x[1].abs() < 1e-9);
                assert!(value.abs() < 1e-9);
            }
            other => panic!("unexpected outcome {other:?}"),
        }
    }

    #[test]
    fn fixed_infeasible_combination_is_reported() {
        let p = LpProblem::new(
            2,
            vec![0.0, 0.0],
            vec![LeRow {
                coeffs: vec![(0, 1.0), (1, 1.0)],
                rhs: 1.0,
            }],
        );
        // Both fixed at 1 violates x + y <= 1 with no freedom left.
        assert_eq!(solve(&p, &[1.0, 1.0], &[1.0, 1.0]), LpOutcome::Infeasible);
    }

    #[test]
    fn solution_is_primal_feasible_on_random_covering_models() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        for _ in 0..50 {
            let ns = rng.random_range(2..7);
            let m = rng.random_range(1..5);
            let mut rows = Vec::new();
            for _ in 0..m {
                let coeffs: Vec<(u32, f64)> = (0..ns)
                    .map(|j| (j as u32, rng.random_range(-3.0..3.0)))
                    .collect();
                rows.push(LeRow {
                    coeffs,
                    rhs: rng.random_range(-1.0..4.0),
                });
            }
            let obj: Vec<f64> = (0..ns).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = LpProblem::new(ns, obj, rows.clone());
            if let LpOutcome::Optimal { x, .. } = solve(&p, &vec![0.0; ns], &vec![1.0; ns]) {
                for row in &rows {
                    let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j as usize]).sum();
                    assert!(lhs <= row.rhs + 1e-6, "row violated: {lhs} > {}", row.rhs);
                }
                assert!(x.iter().all(|v| (-1e-9..=1.0 + 1e-9).contains(v)));
            }
        }
    }
}
