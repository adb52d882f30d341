//! Local optimizers used for training.
//!
//! [`minimize_simplex`] is a derivative-free linear-model trust-region method
//! in the style of COBYLA (unconstrained, box-clipped): it keeps a simplex of
//! `n+1` evaluated points, steps a distance `rho` against the gradient of the
//! interpolating linear model, repairs simplex geometry when it degenerates,
//! and halves `rho` when neither helps.
//!
//! [`minimize_lbfgs`] is limited-memory BFGS with projection onto the box and
//! Armijo backtracking.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("evaluation budget must be at least 1")]
    ZeroBudget,
    #[error("bounds cover {got} coordinates, problem has {expected}")]
    BoundsLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub evaluations: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOptions {
    pub max_evaluations: usize,
    pub rho_begin: f64,
    pub rho_end: f64,
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions { max_evaluations: 100, rho_begin: 1.0, rho_end: 1e-6, bounds: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOptions {
    pub max_iterations: usize,
    pub memory: usize,
    pub bounds: Option<Vec<(f64, f64)>>,
    pub gradient_tolerance: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions { max_iterations: 10, memory: 10, bounds: None, gradient_tolerance: 1e-10 }
    }
}

fn project(x: &mut [f64], bounds: Option<&[(f64, f64)]>) {
    if let Some(b) = bounds {
        for (v, &(lo, hi)) in x.iter_mut().zip(b) {
            *v = v.clamp(lo, hi);
        }
    }
}

fn check_bounds(n: usize, bounds: Option<&[(f64, f64)]>) -> Result<(), OptimError> {
    match bounds {
        Some(b) if b.len() != n => Err(OptimError::BoundsLength { expected: n, got: b.len() }),
        _ => Ok(()),
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

struct Budgeted<F> {
    f: F,
    used: usize,
    limit: usize,
    best: Option<(Vec<f64>, f64)>,
}

impl<F: FnMut(&[f64]) -> f64> Budgeted<F> {
    fn eval(&mut self, x: &[f64]) -> Option<f64> {
        if self.used >= self.limit {
            return None;
        }
        self.used += 1;
        let v = sanitize((self.f)(x));
        if self.best.as_ref().is_none_or(|(_, b)| v < *b) {
            self.best = Some((x.to_vec(), v));
        }
        Some(v)
    }
}

struct Vertex {
    x: Vec<f64>,
    f: f64,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

/// Derivative-free minimization with a hard evaluation budget.
///
/// Returns the lowest value seen; stops early only once `rho` has reached
/// `rho_end` and a step at that radius fails.
pub fn minimize_simplex<F>(f: F, x0: &[f64], opts: &SimplexOptions) -> Result<OptimResult, OptimError>
where
    F: FnMut(&[f64]) -> f64,
{
    if opts.max_evaluations == 0 {
        return Err(OptimError::ZeroBudget);
    }
    let n = x0.len();
    let bounds = opts.bounds.as_deref();
    check_bounds(n, bounds)?;
    let mut ev = Budgeted { f, used: 0, limit: opts.max_evaluations, best: None };

    let mut start = x0.to_vec();
    project(&mut start, bounds);
    let f0 = ev.eval(&start).expect("budget ≥ 1");
    let initial_value = f0;
    let mut rho = opts.rho_begin;
    let mut iterations = 0;

    let mut verts = vec![Vertex { x: start.clone(), f: f0 }];
    'init: for i in 0..n {
        let mut x = start.clone();
        x[i] += rho;
        if let Some(b) = bounds {
            if x[i] > b[i].1 {
                x[i] = start[i] - rho;
            }
        }
        project(&mut x, bounds);
        match ev.eval(&x) {
            Some(v) => verts.push(Vertex { x, f: v }),
            None => break 'init,
        }
    }

    if n > 0 && verts.len() == n + 1 {
        let mut failures = 0usize;
        while ev.used < ev.limit {
            iterations += 1;
            let b = (0..verts.len())
                .min_by(|&i, &j| verts[i].f.total_cmp(&verts[j].f))
                .expect("non-empty simplex");
            let others: Vec<usize> = (0..verts.len()).filter(|&j| j != b).collect();
            let xb = verts[b].x.clone();
            let fb = verts[b].f;

            let d = DMatrix::from_fn(n, n, |r, c| verts[others[r]].x[c] - xb[c]);
            let df = DVector::from_iterator(n, others.iter().map(|&j| verts[j].f - fb));
            let svd = d.clone().svd(true, true);
            let tol = 1e-12 * rho.max(1e-300);
            let rank = svd.rank(tol);
            let null_dir = {
                let k = svd.singular_values.imin();
                svd.v_t.as_ref().expect("v_t").row(k).transpose()
            };
            let pinv = svd.pseudo_inverse(tol).expect("svd with vectors");
            let mut g = &pinv * &df;
            if g.iter().any(|v| !v.is_finite()) {
                g.fill(0.0);
            }

            // Geometry repair: a vertex too far from the pivot, or a simplex
            // that is flat in some direction.
            let mut repair: Option<(usize, DVector<f64>)> = None;
            if rank < n {
                let j = (0..n)
                    .filter(|&r| (d.row(r) * pinv.column(r))[0] < 0.999)
                    .max_by(|&p, &q| d.row(p).norm().total_cmp(&d.row(q).norm()))
                    .unwrap_or(0);
                repair = Some((j, null_dir));
            } else {
                let far = (0..n)
                    .max_by(|&p, &q| d.row(p).norm().total_cmp(&d.row(q).norm()))
                    .expect("n > 0");
                let flat = (0..n)
                    .max_by(|&p, &q| pinv.column(p).norm().total_cmp(&pinv.column(q).norm()))
                    .expect("n > 0");
                if d.row(far).norm() > 2.0 * rho {
                    repair = Some((far, pinv.column(far).into_owned()));
                } else if 1.0 / pinv.column(flat).norm() < 0.25 * rho {
                    repair = Some((flat, pinv.column(flat).into_owned()));
                }
            }

            if let Some((r, dir)) = repair {
                let norm = dir.norm();
                if norm > 0.0 && norm.is_finite() {
                    let preferred = if g.dot(&dir) > 0.0 { -1.0 } else { 1.0 };
                    let candidate = |sign: f64| {
                        let mut x: Vec<f64> =
                            xb.iter().zip(dir.iter()).map(|(x, u)| x + sign * rho * u / norm).collect();
                        project(&mut x, bounds);
                        x
                    };
                    let (a, b) = (candidate(preferred), candidate(-preferred));
                    let x = if dist(&b, &xb) > dist(&a, &xb) + 1e-12 * rho { b } else { a };
                    if dist(&x, &xb) > 0.0 {
                        let Some(fx) = ev.eval(&x) else { break };
                        verts[others[r]] = Vertex { x, f: fx };
                        continue;
                    }
                }
            }

            // Active bounds: drop gradient components that push outside the box.
            let mut dir = g.clone();
            if let Some(bs) = bounds {
                for (i, &(lo, hi)) in bs.iter().enumerate() {
                    if (xb[i] <= lo && dir[i] > 0.0) || (xb[i] >= hi && dir[i] < 0.0) {
                        dir[i] = 0.0;
                    }
                }
            }
            let dnorm = dir.norm();
            if failures < 2 && dnorm > 0.0 {
                let mut trial: Vec<f64> =
                    xb.iter().zip(dir.iter()).map(|(x, gi)| x - rho * gi / dnorm).collect();
                project(&mut trial, bounds);
                let step = DVector::from_iterator(n, trial.iter().zip(&xb).map(|(t, x)| t - x));
                if step.norm() > 0.0 {
                    let Some(ft) = ev.eval(&trial) else { break };
                    // Drop the vertex whose replacement keeps the largest
                    // simplex volume.
                    let r = (0..n)
                        .max_by(|&p, &q| {
                            step.dot(&pinv.column(p)).abs().total_cmp(&step.dot(&pinv.column(q)).abs())
                        })
                        .expect("n > 0");
                    verts[others[r]] = Vertex { x: trial, f: ft };
                    failures = if ft < fb { 0 } else { failures + 1 };
                    continue;
                }
            }

            failures = 0;
            if rho <= opts.rho_end {
                break;
            }
            rho = (rho * 0.5).max(opts.rho_end);
        }
    }

    let (x, value) = ev.best.take().expect("at least one evaluation");
    Ok(OptimResult { x, value, initial_value, evaluations: ev.used, iterations })
}

/// Projected L-BFGS. Each iteration is one accepted or rejected line search;
/// the objective never increases across accepted steps.
pub fn minimize_lbfgs<F, G>(
    mut f: F,
    mut grad: G,
    x0: &[f64],
    opts: &LbfgsOptions,
) -> Result<OptimResult, OptimError>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let bounds = opts.bounds.as_deref();
    check_bounds(n, bounds)?;
    let mut x = x0.to_vec();
    project(&mut x, bounds);
    let mut fx = sanitize(f(&x));
    let initial_value = fx;
    let mut evaluations = 1;
    let mut g = grad(&x);
    let mut history: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let pg_norm = {
            let mut probe: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - gi).collect();
            project(&mut probe, bounds);
            dist(&probe, &x)
        };
        if pg_norm < opts.gradient_tolerance {
            break;
        }

        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.last() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        if dot(&dir, &g) >= 0.0 {
            dir = g.iter().map(|v| -v).collect();
            history.clear();
        }

        let mut t = if history.is_empty() { 1.0 / pg_norm.max(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..30 {
            let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + t * di).collect();
            project(&mut trial, bounds);
            let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &step);
            if decrease >= 0.0 {
                t *= 0.5;
                continue;
            }
            let ft = sanitize(f(&trial));
            evaluations += 1;
            if ft <= fx + 1e-4 * decrease {
                accepted = Some((trial, ft, step));
                break;
            }
            t *= 0.5;
        }

        match accepted {
            Some((trial, ft, s)) => {
                let g_new = grad(&trial);
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 {
                    history.push((s, y, 1.0 / sy));
                    if history.len() > opts.memory {
                        history.remove(0);
                    }
                }
                x = trial;
                fx = ft;
                g = g_new;
            }
            None if !history.is_empty() => history.clear(),
            None => break,
        }
    }

    Ok(OptimResult { x, value: fx, initial_value, evaluations, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_stub_matches_grid_oracle() {
        let obj = |w: &[f64]| (w[0] - 0.3).powi(2);
        // grid-scan oracle
        let grid_best = (0..=1000)
            .map(|i| -1.0 + 2.0 * i as f64 / 1000.0)
            .min_by(|a, b| obj(&[*a]).total_cmp(&obj(&[*b])))
            .unwrap();
        assert!((grid_best - 0.3).abs() < 1e-3);

        let opts = SimplexOptions { max_evaluations: 100, ..Default::default() };
        let r = minimize_simplex(obj, &[0.0], &opts).unwrap();
        assert!((r.x[0] - grid_best).abs() < 0.05, "{:?}", r);
        assert!(r.evaluations <= 100);
    }

    #[test]
    fn budget_one_returns_start() {
        let opts = SimplexOptions { max_evaluations: 1, ..Default::default() };
        let r = minimize_simplex(|w| (w[0] - 0.3).powi(2) + w[1].powi(2), &[0.7, 0.1], &opts).unwrap();
        assert_eq!(r.x, vec![0.7, 0.1]);
        assert_eq!(r.evaluations, 1);
        assert_eq!(r.value, r.initial_value);
    }

    #[test]
    fn zero_budget_rejected() {
        let opts = SimplexOptions { max_evaluations: 0, ..Default::default() };
        assert_eq!(minimize_simplex(|_| 0.0, &[0.0], &opts).unwrap_err(), OptimError::ZeroBudget);
    }

    #[test]
    fn rosenbrock_descends_under_budget() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let mut count = 0;
        let opts = SimplexOptions { max_evaluations: 1000, rho_begin: 0.5, ..Default::default() };
        let r = minimize_simplex(
            |x| {
                count += 1;
                rosen(x)
            },
            &[-1.2, 1.0],
            &opts,
        )
        .unwrap();
        assert_eq!(count, r.evaluations);
        assert!(r.evaluations <= 1000);
        assert!(r.value < 5.0, "{r:?}");
    }

    #[test]
    fn quadratic_in_many_dimensions() {
        let target: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let obj = |x: &[f64]| x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let opts = SimplexOptions { max_evaluations: 100, ..Default::default() };
        let r = minimize_simplex(obj, &[0.0; 12], &opts).unwrap();
        assert_eq!(r.evaluations, 100);
        assert!(r.value < 0.01 * r.initial_value, "{r:?}");
    }

    #[test]
    fn trigonometric_landscape() {
        let t: Vec<f64> = (0..16).map(|i| 2.0 * (i as f64 * 0.7).sin()).collect();
        let f = |x: &[f64]| {
            let a: f64 = x.iter().zip(&t).map(|(x, t)| 1.0 - (x - t).cos()).sum();
            let b: f64 = x.windows(2).map(|w| w[0].sin() * w[1].sin()).sum();
            a + 0.3 * b
        };
        let r = minimize_simplex(f, &[0.5; 16], &SimplexOptions::default()).unwrap();
        // Reference COBYLA (rhobeg 1, 100 evaluations) reaches 1.948 here.
        assert!(r.value < 2.2, "{r:?}");
    }

    #[test]
    fn bounds_respected() {
        let bounds = Some(vec![(0.0, 1.0), (0.0, 1.0)]);
        let opts = SimplexOptions { max_evaluations: 60, bounds, ..Default::default() };
        let mut seen = Vec::new();
        let r = minimize_simplex(
            |x| {
                seen.push(x.to_vec());
                (x[0] + 2.0).powi(2) + (x[1] - 0.5).powi(2)
            },
            &[0.9, 0.9],
            &opts,
        )
        .unwrap();
        assert!(seen.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        assert!(r.x[0] < 1e-3 && (r.x[1] - 0.5).abs() < 0.05, "{r:?}");
    }

    #[test]
    fn lbfgs_quadratic() {
        let f = |x: &[f64]| 3.0 * (x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2);
        let g = |x: &[f64]| vec![6.0 * (x[0] - 1.0), 2.0 * (x[1] + 2.0)];
        let opts = LbfgsOptions { max_iterations: 30, ..Default::default() };
        let r = minimize_lbfgs(f, g, &[0.0, 0.0], &opts).unwrap();
        assert!(r.value < 1e-8, "{r:?}");
        assert!(r.iterations <= 30);
    }

    #[test]
    fn lbfgs_bounded_and_capped() {
        let f = |x: &[f64]| (x[0] - 5.0).powi(2);
        let g = |x: &[f64]| vec![2.0 * (x[0] - 5.0)];
        let opts = LbfgsOptions { max_iterations: 10, bounds: Some(vec![(-1.0, 2.0)]), ..Default::default() };
        let r = minimize_lbfgs(f, g, &[0.0], &opts).unwrap();
        assert!((r.x[0] - 2.0).abs() < 1e-12);
        assert!(r.iterations <= 10);
        assert!(r.value <= r.initial_value);
    }
}
