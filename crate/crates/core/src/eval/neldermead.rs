//! Derivative-free simplex minimization.

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Simplex diameter fell below the tolerance before the iteration cap.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    /// Stop once every vertex is within this distance of the best one.
    pub diameter_tol: f64,
    pub max_iter: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            diameter_tol: 1e-8,
            max_iter: 5000,
        }
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl NelderMead {
    /// Minimizes `f` from `start`. The initial simplex perturbs each
    /// coordinate by 5% (or 0.00025 when it is zero). NaN objective values
    /// are treated as +inf.
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, f: F, start: &[f64]) -> NelderMeadResult {
        let steps: Vec<f64> = start
            .iter()
            .map(|&v| if v != 0.0 { 0.05 * v } else { 0.00025 })
            .collect();
        self.minimize_with_steps(f, start, &steps)
    }

    /// Like [`minimize`](Self::minimize) with explicit initial offsets per
    /// coordinate, for problems whose coordinates differ in scale.
    pub fn minimize_with_steps<F: FnMut(&[f64]) -> f64>(
        &self,
        mut f: F,
        start: &[f64],
        steps: &[f64],
    ) -> NelderMeadResult {
        assert_eq!(start.len(), steps.len(), "one step per coordinate");
        let n = start.len();
        let mut eval = |x: &[f64]| {
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
        for i in 0..n {
            let mut v = start.to_vec();
            v[i] += steps[i];
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();
        let mut iterations = 0;
        let mut converged = false;

        loop {
            // order vertices best to worst; stable so ties keep insertion order
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let diameter = simplex[1..]
                .iter()
                .map(|v| distance(v, &simplex[0]))
                .fold(0.0, f64::max);
            if diameter < self.diameter_tol {
                converged = true;
                break;
            }
            if iterations >= self.max_iter {
                break;
            }
            iterations += 1;

            let centroid: Vec<f64> = (0..n)
                .map(|d| simplex[..n].iter().map(|v| v[d]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                (0..n)
                    .map(|d| centroid[d] + t * (simplex[n][d] - centroid[d]))
                    .collect()
            };

            let reflected = along(-1.0);
            let fr = eval(&reflected);
            if fr < values[0] {
                let expanded = along(-2.0);
                let fe = eval(&expanded);
                if fe < fr {
                    simplex[n] = expanded;
                    values[n] = fe;
                } else {
                    simplex[n] = reflected;
                    values[n] = fr;
                }
                continue;
            }
            if fr < values[n - 1] {
                simplex[n] = reflected;
                values[n] = fr;
                continue;
            }
            let (contracted, fc) = if fr < values[n] {
                let c = along(-0.5);
                let fc = eval(&c);
                (c, fc)
            } else {
                let c = along(0.5);
                let fc = eval(&c);
                (c, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
                continue;
            }
            // shrink toward the best vertex
            for i in 1..=n {
                let v: Vec<f64> = (0..n)
                    .map(|d| simplex[0][d] + 0.5 * (simplex[i][d] - simplex[0][d]))
                    .collect();
                values[i] = eval(&v);
                simplex[i] = v;
            }
        }

        NelderMeadResult {
            x: simplex[0].clone(),
            value: values[0],
            iterations,
            converged,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let nm = NelderMead { diameter_tol: 1e-10, max_iter: 20_000 };
        let r = nm.minimize(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
        );
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn quadratic_bowl_in_five_dims() {
        let target = [1.0, -2.0, 0.5, 3.0, 0.0];
        let r = NelderMead::default().minimize(
            |x| x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum(),
            &[0.0; 5],
        );
        for (a, b) in r.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn cap_stops_early() {
        let r = NelderMead { diameter_tol: 0.0, max_iter: 10 }.minimize(|x| x[0] * x[0], &[5.0]);
        assert_eq!(r.iterations, 10);
        assert!(!r.converged);
    }
}
