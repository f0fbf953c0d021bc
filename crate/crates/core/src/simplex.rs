//! Minimal deterministic Nelder–Mead simplex minimizer.
//!
//! No randomness and no early heuristics; for a fixed objective, start point
//! and options the full trajectory is reproducible bit for bit.

/// Stopping and shape options.
#[derive(Copy, Clone, Debug)]
pub struct SimplexOptions {
    /// Initial displacement of each vertex along its axis.
    pub init_step: f64,
    /// Converged when the best-worst objective spread falls below this.
    pub f_tol: f64,
    /// Converged when the simplex diameter falls below this.
    pub x_tol: f64,
    /// Hard cap on objective evaluations.
    pub max_evals: usize,
    /// Scale the expansion/contraction/shrink coefficients with dimension
    /// (helps in high-dimensional searches).
    pub adaptive: bool,
    /// Give up early: after `.0` evaluations, stop if the best value is
    /// still above `.1`.
    pub abandon: Option<(usize, f64)>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            init_step: 0.1,
            f_tol: 1e-14,
            x_tol: 1e-10,
            max_evals: 2000,
            adaptive: false,
            abandon: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimize `f` starting from `x0`. `on_eval` observes every evaluation in
/// order (used by callers that track best-so-far histories).
pub fn nelder_mead<F, O>(
    mut f: F,
    x0: &[f64],
    opts: &SimplexOptions,
    mut on_eval: O,
) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
    O: FnMut(f64),
{
    let n = x0.len();
    assert!(n > 0, "empty start point");
    let nf = n as f64;
    let alpha = 1.0; // reflection
    let (gamma, rho, sigma) = if opts.adaptive && n > 2 {
        (1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (2.0, 0.5, 0.5)
    };
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize, on_eval: &mut O| -> f64 {
        *evals += 1;
        let v = f(x);
        on_eval(v);
        v
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += if x0[i] == 0.0 { opts.init_step } else { opts.init_step * x0[i].abs().max(1.0) };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals, &mut on_eval)).collect();

    let mut converged = false;
    while evals < opts.max_evals {
        if let Some((after, threshold)) = opts.abandon {
            let best = values.iter().cloned().fold(f64::INFINITY, f64::min);
            if evals >= after && best > threshold {
                break;
            }
        }
        // order vertices, ties broken by index for determinism
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        values = idx.iter().map(|&i| values[i]).collect();

        let spread = values[n] - values[0];
        let mut diameter: f64 = 0.0;
        for v in simplex.iter().skip(1) {
            let d: f64 = v.iter().zip(&simplex[0]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            diameter = diameter.max(d);
        }
        if spread.abs() < opts.f_tol && diameter < opts.x_tol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for v in simplex.iter().take(n) {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x;
            }
        }
        for c in centroid.iter_mut() {
            *c /= n as f64;
        }

        let reflect: Vec<f64> =
            centroid.iter().zip(&simplex[n]).map(|(c, w)| c + alpha * (c - w)).collect();
        let f_r = eval(&reflect, &mut evals, &mut on_eval);

        if f_r < values[0] {
            let expand: Vec<f64> =
                centroid.iter().zip(&reflect).map(|(c, r)| c + gamma * (r - c)).collect();
            let f_e = eval(&expand, &mut evals, &mut on_eval);
            if f_e < f_r {
                simplex[n] = expand;
                values[n] = f_e;
            } else {
                simplex[n] = reflect;
                values[n] = f_r;
            }
        } else if f_r < values[n - 1] {
            simplex[n] = reflect;
            values[n] = f_r;
        } else {
            let (candidate, f_c) = if f_r < values[n] {
                let outside: Vec<f64> =
                    centroid.iter().zip(&reflect).map(|(c, r)| c + rho * (r - c)).collect();
                let f = eval(&outside, &mut evals, &mut on_eval);
                (outside, f)
            } else {
                let inside: Vec<f64> =
                    centroid.iter().zip(&simplex[n]).map(|(c, w)| c - rho * (c - w)).collect();
                let f = eval(&inside, &mut evals, &mut on_eval);
                (inside, f)
            };
            if f_c < values[n].min(f_r) {
                simplex[n] = candidate;
                values[n] = f_c;
            } else {
                for i in 1..=n {
                    let v: Vec<f64> = simplex[0]
                        .iter()
                        .zip(&simplex[i])
                        .map(|(b, x)| b + sigma * (x - b))
                        .collect();
                    simplex[i] = v;
                    values[i] = eval(&simplex[i], &mut evals, &mut on_eval);
                    if evals >= opts.max_evals {
                        break;
                    }
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=n {
        if values[i] < values[best] {
            best = i;
        }
    }
    SimplexResult { x: simplex[best].clone(), value: values[best], evals, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_quadratic_bowl() {
        let r = nelder_mead(
            |x| (x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2),
            &[0.0, 0.0],
            &SimplexOptions::default(),
            |_| {},
        );
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6);
        assert!((r.x[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn handles_rosenbrock() {
        let r = nelder_mead(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &SimplexOptions { max_evals: 5000, ..Default::default() },
            |_| {},
        );
        assert!((r.x[0] - 1.0).abs() < 1e-3, "{:?}", r.x);
        assert!((r.x[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let run = || {
            nelder_mead(
                |x| x[0].powi(4) + (x[1] - 0.3).powi(2) + 0.1 * (x[0] * x[1]).sin(),
                &[0.7, -0.4],
                &SimplexOptions::default(),
                |_| {},
            )
        };
        let a = run();
        let b = run();
        assert_eq!(a.x, b.x);
        assert_eq!(a.value, b.value);
        assert_eq!(a.evals, b.evals);
    }
}
