//! MUSE: multi-locality recursive search over initial points, plus the grid
//! driver and the random-search baseline.
//!
//! One MUSE instantiation starting from `best_pt` with `depth` budget:
//!
//! 1. stop if `depth ≤ 0`, else spend one unit of depth;
//! 2. evaluate the reflected point `min(max(U − best_pt, L) + ε_l, U)` and the
//!    neighbour `min(U, best_pt + ε_r)`, with `ε_l, ε_r ~ U[0, ε)`;
//! 3. if either beats the entry score, move there and recurse;
//! 4. if the better sibling ties the entry score, try `α·best_pt`; if it
//!    falls short, try `β·best_pt`. A strict improvement spends one more unit
//!    of depth and recurses, anything else returns.
//!
//! Each recursion level costs at most three evaluations, so an instantiation
//! performs at most `2·depth + 1` of them.

mod driver;

pub use driver::{
    combo_seed, driver, random_search_baseline, ComboOutcome, DriverConfig, DriverOutcome, GridParams,
    GridSpec,
};

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("invalid search arguments: {0}")]
    InvalidArgs(String),
    #[error("objective failed: {0}")]
    Objective(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Hyperparameters of one MUSE instantiation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchArgs {
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub depth: i64,
}

impl SearchArgs {
    /// Unit box `[0,1]^dim`.
    pub fn unit_box(dim: usize, epsilon: f64, alpha: f64, beta: f64, depth: i64) -> Self {
        SearchArgs { epsilon, alpha, beta, upper: vec![1.0; dim], lower: vec![0.0; dim], depth }
    }

    pub fn dim(&self) -> usize {
        self.upper.len()
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: String| Err(SearchError::InvalidArgs(m));
        if self.upper.len() != self.lower.len() || self.upper.is_empty() {
            return bad(format!("bounds of length {} and {}", self.lower.len(), self.upper.len()));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
            return bad("lower bound exceeds upper bound".into());
        }
        let span = self
            .upper
            .iter()
            .zip(&self.lower)
            .map(|(u, l)| u - l)
            .fold(0.0, f64::max);
        if !(self.epsilon > 0.0 && self.epsilon < span) {
            return bad(format!("epsilon {} must lie in (0, {span})", self.epsilon));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha {} must lie in (0, 1]", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta < self.alpha) {
            return bad(format!("beta {} must lie in (0, alpha)", self.beta));
        }
        Ok(())
    }

    pub fn contains(&self, pt: &[f64]) -> bool {
        pt.len() == self.dim()
            && pt
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(p, (l, u))| l <= p && p <= u)
    }
}

/// A scored point. The objective may return a different point than it was
/// given; the returned one is what the search keeps.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub score: f64,
    pub point: Vec<f64>,
}

/// Black-box score to maximize. Must be deterministic in `(point, params)`
/// and safe to call concurrently.
pub trait Objective<P>: Sync {
    fn run(&self, point: &[f64], params: &P) -> Result<Evaluation, String>;
}

impl<P, F> Objective<P> for F
where
    F: Fn(&[f64], &P) -> Result<Evaluation, String> + Sync,
{
    fn run(&self, point: &[f64], params: &P) -> Result<Evaluation, String> {
        self(point, params)
    }
}

/// Source of the locality offsets `ε_l`, `ε_r`.
pub trait Jitter {
    /// A value in `[0, epsilon)`.
    fn draw(&mut self, epsilon: f64) -> f64;
}

impl<R: Rng> Jitter for R {
    fn draw(&mut self, epsilon: f64) -> f64 {
        self.gen_range(0.0..epsilon)
    }
}

/// Always returns the same offset, clamped below `epsilon`. For pinned traces.
#[derive(Debug, Clone, Copy)]
pub struct FixedJitter(pub f64);

impl Jitter for FixedJitter {
    fn draw(&mut self, epsilon: f64) -> f64 {
        self.0.clamp(0.0, epsilon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Initial random point evaluated by the driver.
    Seed,
    /// Reflection across the box.
    Opposite,
    /// Offset from the current best.
    Neighbor,
    /// `α·best_pt` after a tie.
    Alpha,
    /// `β·best_pt` after a regression.
    Beta,
    /// Independent uniform draw (baseline).
    Random,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub branch: Branch,
    /// Centre of the locality the point was drawn from.
    pub center: Vec<f64>,
    pub point: Vec<f64>,
    pub score: f64,
    /// Best score after this evaluation.
    pub running_best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best_pt: Vec<f64>,
    pub best_sc: f64,
    pub trace: Vec<TraceEntry>,
}

impl SearchOutcome {
    pub fn evaluations(&self) -> usize {
        self.trace.len()
    }
}

/// An objective failure together with everything evaluated before it.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchFailure {
    pub error: SearchError,
    pub partial: SearchOutcome,
}

/// Reflected point `min(max(U − pt, L) + ε_l, U)`, elementwise.
pub fn opposite_point(pt: &[f64], args: &SearchArgs, jitter: f64) -> Vec<f64> {
    pt.iter()
        .zip(args.lower.iter().zip(&args.upper))
        .map(|(p, (l, u))| ((u - p).max(*l) + jitter).min(*u))
        .collect()
}

/// Neighbour `min(U, pt + ε_r)`, elementwise.
pub fn neighbor_point(pt: &[f64], args: &SearchArgs, jitter: f64) -> Vec<f64> {
    pt.iter()
        .zip(&args.upper)
        .map(|(p, u)| (p + jitter).min(*u))
        .collect()
}

fn reflection_center(pt: &[f64], args: &SearchArgs) -> Vec<f64> {
    opposite_point(pt, args, 0.0)
}

fn scaled(pt: &[f64], s: f64) -> Vec<f64> {
    pt.iter().map(|p| s * p).collect()
}

struct Recorder {
    outcome: SearchOutcome,
}

impl Recorder {
    fn record(&mut self, branch: Branch, center: Vec<f64>, ev: &Evaluation) {
        let running_best = self.outcome.best_sc.max(ev.score);
        self.outcome.trace.push(TraceEntry {
            branch,
            center,
            point: ev.point.clone(),
            score: ev.score,
            running_best: running_best.max(
                self.outcome.trace.last().map_or(f64::NEG_INFINITY, |t| t.running_best),
            ),
        });
    }

    fn fail(self, e: String) -> SearchFailure {
        SearchFailure { error: SearchError::Objective(e), partial: self.outcome }
    }
}

/// Runs one MUSE instantiation from `(best_pt, best_sc)`.
///
/// With `parallel` the two sibling evaluations of each level run on the
/// current rayon pool; results are identical either way because the offsets
/// are drawn before the evaluations start.
pub fn muse<P, O, J>(
    best_pt: Vec<f64>,
    best_sc: f64,
    args: &SearchArgs,
    params: &P,
    objective: &O,
    jitter: &mut J,
    parallel: bool,
) -> Result<SearchOutcome, SearchFailure>
where
    P: Sync,
    O: Objective<P> + ?Sized,
    J: Jitter + ?Sized,
{
    let mut rec = Recorder { outcome: SearchOutcome { best_pt, best_sc, trace: Vec::new() } };
    if let Err(e) = args.validate() {
        return Err(SearchFailure { error: e, partial: rec.outcome });
    }
    let mut depth = args.depth;

    loop {
        let prev = rec.outcome.best_sc;
        if depth <= 0 {
            return Ok(rec.outcome);
        }
        depth -= 1;

        let eps_l = jitter.draw(args.epsilon);
        let eps_r = jitter.draw(args.epsilon);
        let base = rec.outcome.best_pt.clone();
        let lpt = opposite_point(&base, args, eps_l);
        let rpt = neighbor_point(&base, args, eps_r);
        let (l, r) = if parallel {
            rayon::join(|| objective.run(&lpt, params), || objective.run(&rpt, params))
        } else {
            (objective.run(&lpt, params), objective.run(&rpt, params))
        };
        let l = match l {
            Ok(l) => l,
            Err(e) => return Err(rec.fail(e)),
        };
        rec.record(Branch::Opposite, reflection_center(&base, args), &l);
        let r = match r {
            Ok(r) => r,
            Err(e) => return Err(rec.fail(e)),
        };
        rec.record(Branch::Neighbor, base.clone(), &r);

        if l.score > rec.outcome.best_sc {
            rec.outcome.best_sc = l.score;
            rec.outcome.best_pt = l.point.clone();
        }
        if r.score > rec.outcome.best_sc {
            rec.outcome.best_sc = r.score;
            rec.outcome.best_pt = r.point.clone();
        }
        if prev < rec.outcome.best_sc {
            continue;
        }

        // No sibling improved: scale the best point by α on a tie, β when
        // both siblings fell short.
        let sibling_best = l.score.max(r.score);
        let (branch, factor) = if sibling_best == prev {
            (Branch::Alpha, args.alpha)
        } else {
            (Branch::Beta, args.beta)
        };
        let tmp = scaled(&rec.outcome.best_pt, factor);
        let ev = match objective.run(&tmp, params) {
            Ok(ev) => ev,
            Err(e) => return Err(rec.fail(e)),
        };
        rec.record(branch, tmp, &ev);
        if ev.score > rec.outcome.best_sc {
            rec.outcome.best_sc = ev.score;
            rec.outcome.best_pt = ev.point;
            depth -= 1;
            continue;
        }
        return Ok(rec.outcome);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn stub(target: f64) -> impl Fn(&[f64], &()) -> Result<Evaluation, String> + Sync {
        move |p: &[f64], _: &()| Ok(Evaluation { score: 1.0 - (p[0] - target).abs(), point: p.to_vec() })
    }

    fn args1(depth: i64) -> SearchArgs {
        SearchArgs::unit_box(1, 0.02, 0.9, 0.5, depth)
    }

    #[test]
    fn neighbor_examples() {
        let a = args1(1);
        assert!((neighbor_point(&[0.7], &a, 0.02)[0] - 0.72).abs() < 1e-15);
        assert_eq!(neighbor_point(&[1.0], &a, 0.01), vec![1.0]);
    }

    #[test]
    fn opposite_examples() {
        let a = args1(1);
        assert!((opposite_point(&[0.7], &a, 0.02)[0] - 0.32).abs() < 1e-15);
        assert_eq!(opposite_point(&[0.0], &a, 0.0), vec![1.0]);
        assert_eq!(opposite_point(&[0.0], &a, 0.015), vec![1.0]);
    }

    #[test]
    fn depth_zero_is_a_no_op() {
        let calls = AtomicUsize::new(0);
        let obj = |p: &[f64], _: &()| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok(Evaluation { score: 0.0, point: p.to_vec() })
        };
        let out = muse(vec![0.3], 0.4, &args1(0), &(), &obj, &mut FixedJitter(0.0), false).unwrap();
        assert_eq!(out.best_pt, vec![0.3]);
        assert_eq!(out.best_sc, 0.4);
        assert_eq!(calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn pinned_hand_trace() {
        let out = muse(vec![0.5], 0.6, &args1(1), &(), &stub(0.9), &mut FixedJitter(0.0), false).unwrap();
        let branches: Vec<Branch> = out.trace.iter().map(|t| t.branch).collect();
        assert_eq!(branches, [Branch::Opposite, Branch::Neighbor, Branch::Alpha]);
        assert_eq!(out.trace[0].point, vec![0.5]);
        assert_eq!(out.trace[1].point, vec![0.5]);
        assert!((out.trace[2].point[0] - 0.45).abs() < 1e-15);
        assert!((out.trace[2].score - 0.55).abs() < 1e-12);
        assert_eq!(out.best_sc, 0.6);
        assert_eq!(out.best_pt, vec![0.5]);
        assert_eq!(out.evaluations(), 3);
    }

    #[test]
    fn regression_takes_beta_branch() {
        // Peak at 0.5; siblings of 0.5 both score lower.
        let out = muse(vec![0.5], 1.0, &args1(2), &(), &stub(0.5), &mut FixedJitter(0.01), false).unwrap();
        assert_eq!(out.trace[2].branch, Branch::Beta);
        assert!((out.trace[2].point[0] - 0.25).abs() < 1e-15);
        assert_eq!(out.evaluations(), 3);
        assert_eq!(out.best_sc, 1.0);
    }

    #[test]
    fn improvement_recurses() {
        let out = muse(vec![0.1], 0.2, &args1(3), &(), &stub(0.95), &mut FixedJitter(0.01), false).unwrap();
        // first level: opposite 0.91 improves, recurse
        assert!((out.trace[0].point[0] - 0.91).abs() < 1e-12);
        assert!(out.best_sc > 0.95);
        assert!(out.evaluations() <= 7);
    }

    #[test]
    fn objective_failure_carries_partial_trace() {
        let calls = AtomicUsize::new(0);
        let obj = |p: &[f64], _: &()| {
            if calls.fetch_add(1, Ordering::SeqCst) >= 2 {
                Err("boom".to_string())
            } else {
                Ok(Evaluation { score: 0.1, point: p.to_vec() })
            }
        };
        let err = muse(vec![0.5], 0.1, &args1(3), &(), &obj, &mut FixedJitter(0.0), false).unwrap_err();
        assert_eq!(err.error, SearchError::Objective("boom".into()));
        assert_eq!(err.partial.trace.len(), 2);
    }

    #[test]
    fn invalid_args_rejected() {
        let mut a = args1(1);
        a.beta = 0.95;
        assert!(a.validate().is_err());
        let mut a = args1(1);
        a.epsilon = 1.5;
        assert!(a.validate().is_err());
        let mut a = args1(1);
        a.lower = vec![2.0];
        assert!(a.validate().is_err());
    }

    fn bumpy(p: &[f64], _: &()) -> Result<Evaluation, String> {
        let s = p.iter().enumerate().map(|(i, x)| ((i + 3) as f64 * x).sin()).sum::<f64>();
        // Quantize so ties happen, as they do for accuracies.
        Ok(Evaluation { score: (s * 20.0).round() / 20.0, point: p.to_vec() })
    }

    #[test]
    fn invariants_over_random_starts() {
        for seed in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = 1 + (seed % 4) as usize;
            let depth = 1 + (seed % 5) as i64;
            let args = SearchArgs::unit_box(dim, 0.02 + 0.1 * rng.gen::<f64>(), 0.9, 0.5, depth);
            let start: Vec<f64> = (0..dim).map(|_| rng.gen()).collect();
            let sc = bumpy(&start, &()).unwrap().score;
            let out = muse(start, sc, &args, &(), &bumpy, &mut rng, false).unwrap();
            assert!(out.evaluations() as i64 <= 2 * depth + 1);
            assert!(out.best_sc >= sc);
            assert!(args.contains(&out.best_pt));
            let mut last = sc;
            for t in &out.trace {
                assert!(args.contains(&t.point));
                assert!(t.running_best >= last);
                last = t.running_best;
                let cheb = t.point.iter().zip(&t.center).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(cheb < args.epsilon + 1e-12, "{t:?}");
            }
            let max = out.trace.iter().map(|t| t.score).fold(sc, f64::max);
            assert_eq!(out.best_sc, max);
        }
    }

    #[test]
    fn parallel_matches_serial() {
        let args = SearchArgs::unit_box(3, 0.05, 0.9, 0.5, 4);
        let run = |parallel| {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            muse(vec![0.2, 0.5, 0.7], 0.0, &args, &(), &bumpy, &mut rng, parallel).unwrap()
        };
        assert_eq!(run(false), run(true));
    }
}
