use std::collections::VecDeque;

use crate::scalar::{dot, max_abs, Real};

/// Limited-memory quasi-Newton minimizer over a box, with the search
/// direction restricted to variables not held at an active bound.
#[derive(Debug, Clone)]
pub struct ProjectedLbfgs<T> {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop once the projected gradient's max-norm falls below this.
    pub pg_tol: T,
    /// Stop once the relative decrease of `f` falls below this.
    pub f_tol: T,
}

impl<T: Real> Default for ProjectedLbfgs<T> {
    fn default() -> Self {
        Self {
            memory: 8,
            max_iter: 200,
            pg_tol: T::lit(1e-7),
            f_tol: T::lit(1e-12),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ProjectedGradient,
    SmallDecrease,
    LineSearch,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct LbfgsReport<T> {
    pub f: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub reason: StopReason,
}

fn project<T: Real>(x: &mut [T], lo: &[T], hi: &[T]) {
    for i in 0..x.len() {
        x[i] = x[i].max(lo[i]).min(hi[i]);
    }
}

fn projected_gradient_norm<T: Real>(x: &[T], g: &[T], lo: &[T], hi: &[T]) -> T {
    let mut m = T::zero();
    for i in 0..x.len() {
        let step = (x[i] - g[i]).max(lo[i]).min(hi[i]) - x[i];
        m = m.max(step.abs());
    }
    m
}

impl<T: Real> ProjectedLbfgs<T> {
    /// Minimizes `fg` (value, writing the gradient into its second argument)
    /// starting from `x`, which is projected onto `[lo, hi]` first and holds
    /// the result on return.
    pub fn minimize(
        &self,
        x: &mut [T],
        lo: &[T],
        hi: &[T],
        mut fg: impl FnMut(&[T], &mut [T]) -> T,
    ) -> LbfgsReport<T> {
        let n = x.len();
        project(x, lo, hi);
        let mut g = vec![T::zero(); n];
        let mut f = fg(x, &mut g);
        let mut evals = 1;
        let mut pairs: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::with_capacity(self.memory);
        let mut d = vec![T::zero(); n];
        let mut free = vec![true; n];
        let mut x_new = vec![T::zero(); n];
        let mut g_new = vec![T::zero(); n];
        let mut alpha_buf = vec![T::zero(); self.memory];

        for it in 0..self.max_iter {
            if projected_gradient_norm(x, &g, lo, hi) <= self.pg_tol {
                return self.report(f, it, evals, StopReason::ProjectedGradient);
            }
            for i in 0..n {
                free[i] =
                    !((x[i] <= lo[i] && g[i] > T::zero()) || (x[i] >= hi[i] && g[i] < T::zero()));
            }

            let mut steepest = pairs.is_empty();
            if !steepest {
                two_loop(&pairs, &g, &free, &mut d, &mut alpha_buf);
                let slope: T = (0..n).map(|i| g[i] * d[i]).sum();
                if !(slope < T::zero()) {
                    steepest = true;
                }
            }
            let mut accepted = None;
            for attempt in 0..2 {
                if steepest {
                    let gn = max_abs(&g).max(T::lit(1e-300));
                    for i in 0..n {
                        d[i] = if free[i] { -g[i] } else { T::zero() };
                    }
                    if it == 0 || attempt == 1 {
                        let scale = T::one().min(T::one() / gn);
                        d.iter_mut().for_each(|v| *v *= scale);
                    }
                }
                let mut alpha = T::one();
                for _ in 0..40 {
                    for i in 0..n {
                        x_new[i] = x[i] + alpha * d[i];
                    }
                    project(&mut x_new, lo, hi);
                    let decrease: T = (0..n).map(|i| g[i] * (x_new[i] - x[i])).sum();
                    let f_try = fg(&x_new, &mut g_new);
                    evals += 1;
                    if f_try.is_finite() && f_try <= f + T::lit(1e-4) * decrease {
                        accepted = Some(f_try);
                        break;
                    }
                    alpha *= T::lit(0.5);
                }
                if accepted.is_some() || steepest {
                    break;
                }
                pairs.clear();
                steepest = true;
            }
            let Some(f_next) = accepted else {
                return self.report(f, it, evals, StopReason::LineSearch);
            };

            let s: Vec<T> = (0..n).map(|i| x_new[i] - x[i]).collect();
            let y: Vec<T> = (0..n).map(|i| g_new[i] - g[i]).collect();
            let sy = dot(&s, &y);
            if sy > T::lit(1e-12) * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > T::zero() {
                if pairs.len() == self.memory {
                    pairs.pop_front();
                }
                pairs.push_back((s, y, T::one() / sy));
            }
            let small = (f - f_next).abs() <= self.f_tol * f.abs().max(f_next.abs()).max(T::one());
            x.copy_from_slice(&x_new);
            g.copy_from_slice(&g_new);
            f = f_next;
            if small {
                return self.report(f, it + 1, evals, StopReason::SmallDecrease);
            }
        }
        self.report(f, self.max_iter, evals, StopReason::MaxIter)
    }

    fn report(
        &self,
        f: T,
        iterations: usize,
        evaluations: usize,
        reason: StopReason,
    ) -> LbfgsReport<T> {
        LbfgsReport {
            f,
            iterations,
            evaluations,
            reason,
        }
    }
}

fn two_loop<T: Real>(
    pairs: &VecDeque<(Vec<T>, Vec<T>, T)>,
    g: &[T],
    free: &[bool],
    d: &mut [T],
    alpha: &mut [T],
) {
    let n = g.len();
    let masked_dot =
        |a: &[T], b: &[T]| -> T { (0..n).filter(|&i| free[i]).map(|i| a[i] * b[i]).sum() };
    for i in 0..n {
        d[i] = if free[i] { g[i] } else { T::zero() };
    }
    for (j, (s, y, rho)) in pairs.iter().enumerate().rev() {
        let a = *rho * masked_dot(s, d);
        alpha[j] = a;
        for i in 0..n {
            if free[i] {
                d[i] -= a * y[i];
            }
        }
    }
    let (s, y, _) = pairs.back().expect("non-empty history");
    let yy = masked_dot(y, y);
    let gamma = if yy > T::zero() {
        masked_dot(s, y) / yy
    } else {
        T::one()
    };
    let gamma = if gamma > T::zero() { gamma } else { T::one() };
    d.iter_mut().for_each(|v| *v *= gamma);
    for (j, (s, y, rho)) in pairs.iter().enumerate() {
        let b = *rho * masked_dot(y, d);
        for i in 0..n {
            if free[i] {
                d[i] += (alpha[j] - b) * s[i];
            }
        }
    }
    d.iter_mut().for_each(|v| *v = -*v);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let mut x = [-1.2, 1.0];
        let opt = ProjectedLbfgs {
            max_iter: 500,
            ..Default::default()
        };
        let r = opt.minimize(&mut x, &[-10.0; 2], &[10.0; 2], rosenbrock);
        assert!(r.f < 1e-10, "{r:?}");
        assert!((x[0] - 1.0).abs() < 1e-4 && (x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn active_bound_is_respected() {
        // Minimum of the bowl lies outside the box; the answer sits on the face.
        let mut x = [0.0f64, 0.0];
        let r = ProjectedLbfgs::default().minimize(&mut x, &[-1.0, -1.0], &[0.5, 1.0], |x, g| {
            g[0] = 2.0 * (x[0] - 2.0);
            g[1] = 2.0 * (x[1] + 0.25);
            (x[0] - 2.0).powi(2) + (x[1] + 0.25).powi(2)
        });
        assert_eq!(x[0], 0.5);
        assert!((x[1] + 0.25).abs() < 1e-8);
        assert!(r.reason != StopReason::LineSearch || r.f < 2.26);
    }

    #[test]
    fn fixed_variables_do_not_move() {
        let mut x = [3.0f64, 0.0];
        ProjectedLbfgs::default().minimize(&mut x, &[3.0, -5.0], &[3.0, 5.0], |x, g| {
            g[0] = 2.0 * x[0];
            g[1] = 2.0 * (x[1] - 1.0);
            x[0] * x[0] + (x[1] - 1.0).powi(2)
        });
        assert_eq!(x[0], 3.0);
        assert!((x[1] - 1.0).abs() < 1e-8);
    }
}
