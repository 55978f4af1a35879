//! Limited-memory BFGS directions and a strong-Wolfe line search.

use crate::{HorstError, Result};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

pub const DEFAULT_MEMORY: usize = 5;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Curvature pairs `(s, y)` of the most recent iterations.
#[derive(Clone, Debug, Default)]
pub struct Lbfgs {
    pub memory: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl Lbfgs {
    pub fn new(memory: usize) -> Self {
        Lbfgs {
            memory,
            pairs: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Stores a pair when its curvature `<s, y>` is positive; returns whether
    /// it was kept.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        if !(sy > 0.0 && sy.is_finite()) || self.memory == 0 {
            return false;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
        true
    }

    /// Two-loop recursion. Without pairs the direction is `-g` rescaled so
    /// that its largest entry equals `first_step`.
    pub fn direction(&self, g: &[f64], first_step: f64) -> Vec<f64> {
        let Some((s_last, y_last, _)) = self.pairs.back() else {
            let gmax = norm_inf(g);
            let scale = if gmax > 0.0 { first_step / gmax } else { 0.0 };
            return g.iter().map(|v| -scale * v).collect();
        };
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = dot(s_last, y_last) / dot(y_last, y_last);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WolfeOptions {
    pub c1: f64,
    pub c2: f64,
    pub max_evals: usize,
}

impl Default for WolfeOptions {
    fn default() -> Self {
        WolfeOptions {
            c1: 1e-4,
            c2: 0.9,
            max_evals: 20,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LineSearchOutcome<E> {
    pub alpha: f64,
    pub value: f64,
    pub slope: f64,
    pub evals: usize,
    /// Both strong Wolfe conditions hold; otherwise the step is the best
    /// decrease seen.
    pub satisfied: bool,
    pub extra: E,
}

#[derive(Clone, Copy)]
struct Point {
    a: f64,
    f: f64,
    d: f64,
}

/// Minimiser of the cubic through two points with slopes, kept inside the
/// interval away from its ends; bisection when the cubic is unusable.
fn cubic_step(lo: Point, hi: Point) -> f64 {
    let (a, b) = if lo.a < hi.a { (lo.a, hi.a) } else { (hi.a, lo.a) };
    let margin = 0.1 * (b - a);
    let d1 = lo.d + hi.d - 3.0 * (lo.f - hi.f) / (lo.a - hi.a);
    let disc = d1 * d1 - lo.d * hi.d;
    let mid = 0.5 * (a + b);
    if !(disc >= 0.0) {
        return mid;
    }
    let d2 = (hi.a - lo.a).signum() * disc.sqrt();
    let t = hi.a - (hi.a - lo.a) * (hi.d + d2 - d1) / (hi.d - lo.d + 2.0 * d2);
    if t.is_finite() {
        t.clamp(a + margin, b - margin)
    } else {
        mid
    }
}

/// Strong-Wolfe line search along a descent direction. `eval(alpha)` returns
/// the objective, its directional derivative and any payload to keep.
pub fn wolfe_line_search<E, F>(phi0: f64, dphi0: f64, alpha0: f64, opts: &WolfeOptions, mut eval: F) -> Result<LineSearchOutcome<E>>
where
    F: FnMut(f64) -> Result<(f64, f64, E)>,
{
    if !(dphi0 < 0.0) {
        return Err(HorstError::invalid(format!(
            "line search needs a descent direction, directional derivative is {dphi0}"
        )));
    }
    let mut evals = 0;
    let mut best: Option<LineSearchOutcome<E>> = None;
    let mut run = |a: f64, evals: &mut usize, best: &mut Option<LineSearchOutcome<E>>| -> Result<Point> {
        let (f, d, e) = eval(a)?;
        *evals += 1;
        if f.is_finite() && best.as_ref().is_none_or(|b| f < b.value) {
            *best = Some(LineSearchOutcome {
                alpha: a,
                value: f,
                slope: d,
                evals: 0,
                satisfied: false,
                extra: e,
            });
        }
        Ok(Point { a, f, d })
    };
    let armijo = |p: &Point| p.f <= phi0 + opts.c1 * p.a * dphi0;
    let curvature = |p: &Point| p.d.abs() <= -opts.c2 * dphi0;

    let finish = |mut best: Option<LineSearchOutcome<E>>, evals: usize, ok: bool| {
        let mut b = best.take().expect("at least one evaluation");
        b.evals = evals;
        b.satisfied = ok;
        b
    };

    let mut prev = Point { a: 0.0, f: phi0, d: dphi0 };
    let mut a = alpha0;
    let bracket;
    loop {
        let p = run(a, &mut evals, &mut best)?;
        if !armijo(&p) || (evals > 1 && p.f >= prev.f) || !p.f.is_finite() {
            bracket = (prev, p);
            break;
        }
        if curvature(&p) {
            // The accepted point is the best one: it satisfies sufficient
            // decrease and nothing lower has been seen after it.
            let mut out = finish(best, evals, true);
            if out.alpha != p.a {
                out.satisfied = false;
            }
            return Ok(out);
        }
        if p.d >= 0.0 {
            bracket = (p, prev);
            break;
        }
        if evals >= opts.max_evals {
            return Ok(finish(best, evals, false));
        }
        prev = p;
        a *= 2.0;
    }
    let (mut lo, mut hi) = bracket;
    if !hi.f.is_finite() {
        hi.f = f64::MAX;
        hi.d = 0.0;
    }
    while evals < opts.max_evals {
        let a = if hi.f == f64::MAX { 0.5 * (lo.a + hi.a) } else { cubic_step(lo, hi) };
        let mut p = run(a, &mut evals, &mut best)?;
        if !p.f.is_finite() {
            p.f = f64::MAX;
            hi = p;
            continue;
        }
        if !armijo(&p) || p.f >= lo.f {
            hi = p;
        } else {
            if curvature(&p) {
                let mut out = finish(best, evals, true);
                if out.alpha != p.a {
                    out.satisfied = false;
                }
                return Ok(out);
            }
            if p.d * (hi.a - lo.a) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
        if (hi.a - lo.a).abs() <= 1e-14 * lo.a.abs().max(1e-300) {
            break;
        }
    }
    log::warn!("line search stopped after {evals} evaluations without a strong Wolfe point");
    Ok(finish(best, evals, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spd(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..n).map(|k| b[k * n + i] * b[k * n + j]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
            }
        }
        let rhs = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        (a, rhs)
    }

    fn matvec(a: &[f64], x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n).map(|i| dot(&a[i * n..(i + 1) * n], x)).collect()
    }

    #[test]
    fn empty_memory_gives_scaled_steepest_descent() {
        let l = Lbfgs::new(5);
        let d = l.direction(&[2.0, -4.0], 0.5);
        assert_eq!(d, vec![-0.25, 0.5]);
    }

    #[test]
    fn negative_curvature_pairs_are_dropped() {
        let mut l = Lbfgs::new(2);
        assert!(!l.push(vec![1.0, 0.0], vec![-1.0, 0.0]));
        assert!(l.push(vec![1.0, 0.0], vec![1.0, 0.0]));
        assert!(l.push(vec![0.0, 1.0], vec![0.0, 2.0]));
        assert!(l.push(vec![1.0, 1.0], vec![1.0, 1.0]));
        assert_eq!(l.len(), 2);
    }

    #[test]
    fn quadratic_with_exact_steps_reaches_the_minimiser() {
        let n = 8;
        let (a, b) = spd(n, 3);
        // Closed form: solve A x = b by Gaussian elimination.
        let mut m = a.clone();
        let mut x_star = b.clone();
        for k in 0..n {
            for i in k + 1..n {
                let f = m[i * n + k] / m[k * n + k];
                for j in k..n {
                    m[i * n + j] -= f * m[k * n + j];
                }
                x_star[i] -= f * x_star[k];
            }
        }
        for k in (0..n).rev() {
            for j in k + 1..n {
                x_star[k] -= m[k * n + j] * x_star[j];
            }
            x_star[k] /= m[k * n + k];
        }
        let mut l = Lbfgs::new(n);
        let mut x = vec![0.0; n];
        let grad = |x: &[f64]| -> Vec<f64> { matvec(&a, x).iter().zip(&b).map(|(u, v)| u - v).collect() };
        let mut g = grad(&x);
        let mut iters = 0;
        while norm_inf(&g) > 1e-13 && iters < n + 2 {
            let d = l.direction(&g, 1.0);
            assert!(dot(&d, &g) < 0.0);
            let step = -dot(&g, &d) / dot(&d, &matvec(&a, &d));
            let s: Vec<f64> = d.iter().map(|v| step * v).collect();
            let xn: Vec<f64> = x.iter().zip(&s).map(|(u, v)| u + v).collect();
            let gn = grad(&xn);
            l.push(s, gn.iter().zip(&g).map(|(u, v)| u - v).collect());
            x = xn;
            g = gn;
            iters += 1;
        }
        let err = x.iter().zip(&x_star).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "error {err} after {iters} iterations");
    }

    #[test]
    fn unit_quadratic_accepts_unit_step() {
        let out = wolfe_line_search(1.0, -2.0, 1.0, &WolfeOptions::default(), |a| {
            Ok(((a - 1.0) * (a - 1.0), 2.0 * (a - 1.0), ()))
        })
        .unwrap();
        assert_eq!(out.alpha, 1.0);
        assert!(out.satisfied);
    }

    #[test]
    fn random_quadratic_step_satisfies_both_conditions() {
        let opts = WolfeOptions::default();
        for seed in 0..20 {
            let n = 6;
            let (a, b) = spd(n, seed);
            let x0 = vec![0.0; n];
            let f = |x: &[f64]| 0.5 * dot(x, &matvec(&a, x)) - dot(&b, x);
            let g0: Vec<f64> = matvec(&a, &x0).iter().zip(&b).map(|(u, v)| u - v).collect();
            // Deliberately badly scaled descent direction.
            let d: Vec<f64> = g0.iter().map(|v| -v * (0.01 + seed as f64)).collect();
            let phi0 = f(&x0);
            let dphi0 = dot(&g0, &d);
            let out = wolfe_line_search(phi0, dphi0, 1.0, &opts, |al| {
                let x: Vec<f64> = x0.iter().zip(&d).map(|(u, v)| u + al * v).collect();
                let g: Vec<f64> = matvec(&a, &x).iter().zip(&b).map(|(u, v)| u - v).collect();
                Ok((f(&x), dot(&g, &d), ()))
            })
            .unwrap();
            assert!(out.satisfied, "seed {seed}");
            assert!(out.evals <= 20);
            assert!(out.value <= phi0 + opts.c1 * out.alpha * dphi0);
            assert!(out.slope.abs() <= -opts.c2 * dphi0);
        }
    }

    #[test]
    fn ascent_direction_is_rejected() {
        let r = wolfe_line_search(0.0, 1.0, 1.0, &WolfeOptions::default(), |_| Ok((0.0, 0.0, ())));
        assert!(r.is_err());
    }
}
