//! Derivative-free minimisation (Nelder-Mead) used by the MLE benchmarks.

#[derive(Debug, Clone)]
pub struct NelderMead {
    pub max_evals: usize,
    /// Simplex diameter, relative to `1 + |x|`, below which the search stops.
    pub x_tol: f64,
    pub f_tol: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self { max_evals: 20_000, x_tol: 1e-8, f_tol: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

impl NelderMead {
    /// Minimises `f` from `x0`; `steps` sets the initial simplex edge per coordinate.
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, mut f: F, x0: &[f64], steps: &[f64]) -> Minimum {
        let n = x0.len();
        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        simplex.push(x0.to_vec());
        for i in 0..n {
            let mut v = x0.to_vec();
            v[i] += steps[i];
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

        let mut converged = false;
        while evals < self.max_evals {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let best = &simplex[0];
            let diameter = simplex[1..]
                .iter()
                .flat_map(|v| v.iter().zip(best).map(|(a, b)| (a - b).abs() / (1.0 + b.abs())))
                .fold(0.0, f64::max);
            if diameter < self.x_tol && (values[n] - values[0]).abs() <= self.f_tol * (1.0 + values[0].abs()) {
                converged = true;
                break;
            }

            let centroid: Vec<f64> =
                (0..n).map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
            let along =
                |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (w - c)).collect() };

            let xr = along(-1.0);
            let fr = eval(&xr, &mut evals);
            if fr < values[0] {
                let xe = along(-2.0);
                let fe = eval(&xe, &mut evals);
                if fe < fr {
                    simplex[n] = xe;
                    values[n] = fe;
                } else {
                    simplex[n] = xr;
                    values[n] = fr;
                }
            } else if fr < values[n - 1] {
                simplex[n] = xr;
                values[n] = fr;
            } else {
                let (xc, fc) = if fr < values[n] {
                    let xc = along(-0.5);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                } else {
                    let xc = along(0.5);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                };
                if fc < values[n].min(fr) {
                    simplex[n] = xc;
                    values[n] = fc;
                } else {
                    // shrink toward the best vertex
                    let best = simplex[0].clone();
                    for i in 1..=n {
                        simplex[i] = simplex[i].iter().zip(&best).map(|(v, b)| b + 0.5 * (v - b)).collect();
                        values[i] = eval(&simplex[i], &mut evals);
                    }
                }
            }
        }

        let (i, &f) = values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty simplex");
        Minimum { x: simplex[i].clone(), f, evals, converged }
    }
}
