//! Concave QP over the probability simplex:
//! `max_w a.w - 1/2 w^T G w`, `w >= 0`, `sum w = 1`, with `G` PSD.
//!
//! Solved by a primal active-set method on the support of `w`, then
//! polished by pairwise coordinate ascent (mass moves from the worst active
//! coordinate to the best one along `e_i - e_j`, with an exact line search
//! clipped to feasibility). Every iterate is feasible, so its dual value is
//! a valid lower bound even when the loop stops early.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Default)]
pub struct SimplexQp {
    a: Vec<f64>,
    g: Vec<Vec<f64>>,
    w: Vec<f64>,
    gw: Vec<f64>,
}

impl SimplexQp {
    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// Adds a coordinate with zero weight (full weight if it is the first).
    /// `g_row[j] = G(new, j)` for existing `j`, followed by the diagonal entry.
    pub fn push(&mut self, a: f64, g_row: &[f64]) {
        let k = self.a.len();
        debug_assert_eq!(g_row.len(), k + 1);
        for (j, row) in self.g.iter_mut().enumerate() {
            row.push(g_row[j]);
        }
        self.g.push(g_row.to_vec());
        self.a.push(a);
        if k == 0 {
            self.w.push(1.0);
            self.gw.push(g_row[0]);
        } else {
            self.w.push(0.0);
            let gw_new = (0..k).map(|j| g_row[j] * self.w[j]).sum();
            self.gw.push(gw_new);
        }
    }

    /// Keeps only the coordinates in `keep` (in order), renormalizing weights.
    pub fn retain(&mut self, keep: &[usize]) {
        self.a = keep.iter().map(|&i| self.a[i]).collect();
        self.g = keep
            .iter()
            .map(|&i| keep.iter().map(|&j| self.g[i][j]).collect())
            .collect();
        let w: Vec<f64> = keep.iter().map(|&i| self.w[i]).collect();
        let total: f64 = w.iter().sum();
        self.w = if total > 0.0 {
            w.iter().map(|v| v / total).collect()
        } else {
            let mut w = vec![0.0; keep.len()];
            w[0] = 1.0;
            w
        };
        self.refresh_gw();
    }

    fn refresh_gw(&mut self) {
        let k = self.a.len();
        self.gw = (0..k).map(|i| (0..k).map(|j| self.g[i][j] * self.w[j]).sum()).collect();
    }

    /// Runs pairwise ascent until the KKT gap `max grad - min active grad`
    /// drops below `tol`, or `max_iter` moves. Returns the final KKT gap.
    pub fn solve(&mut self, tol: f64, max_iter: usize) -> f64 {
        let k = self.a.len();
        if k == 0 {
            return 0.0;
        }
        self.active_set(tol);
        self.refresh_gw();
        let mut kkt = f64::INFINITY;
        for it in 0..max_iter {
            if it > 0 && it % 512 == 0 {
                self.refresh_gw();
            }
            let mut up = 0;
            let mut up_val = f64::NEG_INFINITY;
            let mut dn = usize::MAX;
            let mut dn_val = f64::INFINITY;
            for i in 0..k {
                let gi = self.a[i] - self.gw[i];
                if gi > up_val {
                    up_val = gi;
                    up = i;
                }
                if self.w[i] > 0.0 && gi < dn_val {
                    dn_val = gi;
                    dn = i;
                }
            }
            kkt = up_val - dn_val;
            if kkt <= tol || up == dn {
                break;
            }
            let curv = self.g[up][up] + self.g[dn][dn] - 2.0 * self.g[up][dn];
            let mut t = if curv > 0.0 { kkt / curv } else { self.w[dn] };
            if t >= self.w[dn] {
                t = self.w[dn];
            }
            if t <= 0.0 {
                break;
            }
            self.w[up] += t;
            self.w[dn] -= t;
            if self.w[dn] < 1e-300 {
                self.w[dn] = 0.0;
            }
            for i in 0..k {
                self.gw[i] += t * (self.g[i][up] - self.g[i][dn]);
            }
        }
        let total: f64 = self.w.iter().sum();
        for w in &mut self.w {
            *w /= total;
        }
        kkt
    }

    /// Equality-constrained maximizer on the support `s`: solves
    /// `G_s w - a_s + nu 1 = 0`, `1^T w = 1`. A tiny ridge keeps the system
    /// nonsingular when `G_s` is rank deficient.
    fn support_solve(&self, s: &[usize]) -> Option<DVector<f64>> {
        let m = s.len();
        let diag_max = s.iter().map(|&i| self.g[i][i]).fold(0.0, f64::max);
        let ridge = 1e-13 * (1.0 + diag_max);
        let mut kkt = DMatrix::zeros(m + 1, m + 1);
        let mut rhs = DVector::zeros(m + 1);
        for (r, &i) in s.iter().enumerate() {
            for (c, &j) in s.iter().enumerate() {
                kkt[(r, c)] = self.g[i][j];
            }
            kkt[(r, r)] += ridge;
            kkt[(r, m)] = 1.0;
            kkt[(m, r)] = 1.0;
            rhs[r] = self.a[i];
        }
        rhs[m] = 1.0;
        let sol = kkt.lu().solve(&rhs)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(sol.rows(0, m).into_owned())
    }

    fn active_set(&mut self, tol: f64) {
        let k = self.a.len();
        let mut support: Vec<usize> = (0..k).filter(|&i| self.w[i] > 0.0).collect();
        for _ in 0..4 * k + 20 {
            let Some(target) = self.support_solve(&support) else {
                return;
            };
            let mut step = 1.0;
            let mut blocking = None;
            for (r, &i) in support.iter().enumerate() {
                let d = target[r] - self.w[i];
                if target[r] < 0.0 && d < 0.0 {
                    let t = self.w[i] / -d;
                    if t < step {
                        step = t;
                        blocking = Some(r);
                    }
                }
            }
            for (r, &i) in support.iter().enumerate() {
                self.w[i] = (self.w[i] + step * (target[r] - self.w[i])).max(0.0);
            }
            if let Some(r) = blocking {
                self.w[support[r]] = 0.0;
                support.remove(r);
                continue;
            }
            self.refresh_gw();
            let grad = |i: usize| self.a[i] - self.gw[i];
            let level = support.iter().map(|&i| grad(i)).fold(f64::INFINITY, f64::min);
            let entering = (0..k)
                .filter(|i| !support.contains(i))
                .map(|i| (i, grad(i)))
                .max_by(|x, y| x.1.total_cmp(&y.1));
            match entering {
                Some((i, gi)) if gi > level + tol => support.push(i),
                _ => return,
            }
        }
    }
}
