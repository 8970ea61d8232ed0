//! Sequential minimal optimization for the box-constrained SVM dual
//!
//! ```text
//! min  1/2 a'Qa + p'a   s.t.  y'a = 0,  0 <= a_t <= c
//! ```
//!
//! with `y_t = ±1` and `Q_st = y_s y_t K(x_s, x_t)`. Each step pairs the
//! maximal KKT violator with the partner giving the largest second-order
//! decrease of the objective; ties go to the lowest index. The solver stops
//! once the maximal violation drops below the tolerance.

/// Curvature floor for non positive-definite pairs.
const TAU: f64 = 1e-12;

/// Stopping tolerance on the KKT gap `m(a) - M(a)`.
pub(crate) const KKT_TOL: f64 = 1e-3;

/// Dual problem over `vars.len()` variables. Variable `t` refers to base
/// sample `vars[t]` of the dense `n x n` kernel matrix.
pub(crate) struct DualProblem<'a> {
    pub kernel: &'a [f64],
    pub n: usize,
    pub vars: Vec<usize>,
    pub y: Vec<f64>,
    pub p: Vec<f64>,
    pub c: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct DualSolution {
    pub alpha: Vec<f64>,
    /// Gradient `Qa + p` at the solution, kept incrementally by the solver.
    #[allow(dead_code)]
    pub grad: Vec<f64>,
    /// Decision offset; predictions are `sum y_t a_t K(x_t, x) - rho`.
    pub rho: f64,
    #[allow(dead_code)]
    pub iterations: usize,
    pub converged: bool,
}

impl DualProblem<'_> {
    #[inline]
    fn k(&self, s: usize, t: usize) -> f64 {
        self.kernel[self.vars[s] * self.n + self.vars[t]]
    }

    /// Kernel row of base sample `vars[s]`.
    #[inline]
    fn row(&self, s: usize) -> &[f64] {
        let b = self.vars[s] * self.n;
        &self.kernel[b..b + self.n]
    }

    #[inline]
    fn in_up(&self, t: usize, alpha: &[f64]) -> bool {
        if self.y[t] > 0.0 {
            alpha[t] < self.c
        } else {
            alpha[t] > 0.0
        }
    }

    #[inline]
    fn in_low(&self, t: usize, alpha: &[f64]) -> bool {
        if self.y[t] > 0.0 {
            alpha[t] > 0.0
        } else {
            alpha[t] < self.c
        }
    }

    /// Maximal KKT violation `m(a) - M(a)` and the index attaining `m(a)`.
    fn max_violation(&self, alpha: &[f64], grad: &[f64]) -> (Option<usize>, f64) {
        let mut g_max = f64::NEG_INFINITY;
        let mut g_max2 = f64::NEG_INFINITY;
        let mut i = None;
        for t in 0..alpha.len() {
            let yg = -self.y[t] * grad[t];
            if self.in_up(t, alpha) && yg > g_max {
                g_max = yg;
                i = Some(t);
            }
            if self.in_low(t, alpha) && -yg > g_max2 {
                g_max2 = -yg;
            }
        }
        (i, g_max + g_max2)
    }

    /// Working pair: `i` is the maximal violator; `j` maximizes the
    /// second-order decrease of the objective among the variables that
    /// violate KKT together with `i`.
    fn select(&self, alpha: &[f64], grad: &[f64], diag: &[f64]) -> (Option<usize>, Option<usize>, f64) {
        let (i, gap) = self.max_violation(alpha, grad);
        let Some(i) = i else {
            return (None, None, gap);
        };
        let g_max = -self.y[i] * grad[i];
        let kii = diag[i];
        let ki = self.row(i);
        let mut best = f64::INFINITY;
        let mut j = None;
        for t in 0..alpha.len() {
            if !self.in_low(t, alpha) {
                continue;
            }
            let b = g_max + self.y[t] * grad[t];
            if b <= 0.0 {
                continue;
            }
            let a = (kii + diag[t] - 2.0 * ki[self.vars[t]]).max(TAU);
            let obj = -(b * b) / a;
            if obj < best {
                best = obj;
                j = Some(t);
            }
        }
        (Some(i), j, gap)
    }

    pub fn solve(&self, max_iter: usize) -> DualSolution {
        let l = self.vars.len();
        let c = self.c;
        let mut alpha = vec![0.0; l];
        let mut grad = self.p.clone();
        let diag: Vec<f64> = (0..l).map(|t| self.k(t, t)).collect();
        let mut iterations = 0;
        let mut converged = false;

        while iterations < max_iter {
            let (i, j, gap) = self.select(&alpha, &grad, &diag);
            let (i, j) = match (i, j) {
                (Some(i), Some(j)) if gap >= KKT_TOL => (i, j),
                _ => {
                    converged = true;
                    break;
                }
            };
            iterations += 1;

            let (yi, yj) = (self.y[i], self.y[j]);
            let (kii, kjj, kij) = (diag[i], diag[j], self.k(i, j));
            let (old_i, old_j) = (alpha[i], alpha[j]);
            let (mut ai, mut aj) = (old_i, old_j);
            if yi != yj {
                let quad = (kii + kjj + 2.0 * (yi * yj * kij)).max(TAU);
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = ai - aj;
                ai += delta;
                aj += delta;
                if diff > 0.0 {
                    if aj < 0.0 {
                        aj = 0.0;
                        ai = diff;
                    }
                } else if ai < 0.0 {
                    ai = 0.0;
                    aj = -diff;
                }
                if diff > 0.0 {
                    if ai > c {
                        ai = c;
                        aj = c - diff;
                    }
                } else if aj > c {
                    aj = c;
                    ai = c + diff;
                }
            } else {
                let quad = (kii + kjj - 2.0 * (yi * yj * kij)).max(TAU);
                let delta = (grad[i] - grad[j]) / quad;
                let sum = ai + aj;
                ai -= delta;
                aj += delta;
                if sum > c {
                    if ai > c {
                        ai = c;
                        aj = sum - c;
                    }
                } else if aj < 0.0 {
                    aj = 0.0;
                    ai = sum;
                }
                if sum > c {
                    if aj > c {
                        aj = c;
                        ai = sum - c;
                    }
                } else if ai < 0.0 {
                    ai = 0.0;
                    aj = sum;
                }
            }
            alpha[i] = ai;
            alpha[j] = aj;

            let (si, sj) = (yi * (ai - old_i), yj * (aj - old_j));
            let (ki, kj) = (self.row(i), self.row(j));
            for ((g, &v), &y) in grad.iter_mut().zip(&self.vars).zip(&self.y) {
                *g += y * (si * ki[v] + sj * kj[v]);
            }
        }

        let rho = self.offset(&alpha, &grad);
        DualSolution {
            alpha,
            grad,
            rho,
            iterations,
            converged,
        }
    }

    /// Average of `y_t G_t` over free variables, or the midpoint of the
    /// feasible interval when every variable sits at a bound.
    fn offset(&self, alpha: &[f64], grad: &[f64]) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free, mut sum) = (0usize, 0.0);
        for t in 0..alpha.len() {
            let yg = self.y[t] * grad[t];
            let positive = self.y[t] > 0.0;
            if alpha[t] >= self.c {
                if positive {
                    lb = lb.max(yg);
                } else {
                    ub = ub.min(yg);
                }
            } else if alpha[t] <= 0.0 {
                if positive {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum += yg;
            }
        }
        if free > 0 {
            sum / free as f64
        } else if ub.is_finite() && lb.is_finite() {
            (ub + lb) / 2.0
        } else if ub.is_finite() {
            ub
        } else if lb.is_finite() {
            lb
        } else {
            0.0
        }
    }

    /// Largest KKT gap at a point, measured by a direct scan.
    #[cfg(test)]
    pub fn kkt_gap(&self, alpha: &[f64], grad: &[f64]) -> f64 {
        self.max_violation(alpha, grad).1.max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rbf(points: &[[f64; 2]], gamma: f64) -> Vec<f64> {
        let n = points.len();
        let mut k = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                let d2: f64 = (0..2).map(|d| (points[a][d] - points[b][d]).powi(2)).sum();
                k[a * n + b] = (-gamma * d2).exp();
            }
        }
        k
    }

    #[test]
    fn classification_dual_satisfies_kkt_by_scan() {
        let pts = [[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0], [0.5, 0.4]];
        let y = vec![1.0, 1.0, -1.0, -1.0, 1.0];
        let kernel = rbf(&pts, 2.0);
        let prob = DualProblem {
            kernel: &kernel,
            n: 5,
            vars: (0..5).collect(),
            y: y.clone(),
            p: vec![-1.0; 5],
            c: 10.0,
        };
        let sol = prob.solve(100_000);
        assert!(sol.converged);
        // equality constraint and box
        let eq: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(eq.abs() < 1e-10);
        assert!(sol.alpha.iter().all(|&a| (0.0..=10.0).contains(&a)));
        // recompute the gradient from scratch and rescan
        let grad: Vec<f64> = (0..5)
            .map(|s| {
                (0..5)
                    .map(|t| y[s] * y[t] * kernel[s * 5 + t] * sol.alpha[t])
                    .sum::<f64>()
                    - 1.0
            })
            .collect();
        for (g, h) in grad.iter().zip(&sol.grad) {
            assert!((g - h).abs() < 1e-9);
        }
        assert!(prob.kkt_gap(&sol.alpha, &grad) < KKT_TOL);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let pts = [[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
        let kernel = rbf(&pts, 1.0);
        let prob = DualProblem {
            kernel: &kernel,
            n: 4,
            vars: (0..4).collect(),
            y: vec![1.0, 1.0, -1.0, -1.0],
            p: vec![-1.0; 4],
            c: 100.0,
        };
        assert!(!prob.solve(1).converged);
    }
}
