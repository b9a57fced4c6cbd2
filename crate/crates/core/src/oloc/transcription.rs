use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::thermal::{LoadVector, PhysicsGraph, Trajectory};

/// Seconds per unit of the scaled final-time variable.
pub const TIME_SCALE: f64 = 100.0;
/// Admissible final time, seconds.
pub const T_END_MIN: f64 = 1.0;
pub const T_END_MAX: f64 = 500.0;
pub const MIN_SEGMENTS: usize = 8;

/// Trapezoidal direct transcription of the endurance problem on a normalized
/// time grid `τ_k = k / N`, `t = τ · t_end`.
///
/// Decision vector (all scaled):
/// `[θ_0, φ_0, θ_1, φ_1, .., θ_N, φ_N, ν_0, .., ν_N, s]` where
/// `θ = (T − T^t)/(T_max − T^t)`, `φ = ṁ_indp / ṁ_p`, `ν = u / m̈_max` and
/// `s = t_end / t_s` with `t_s` defaulting to 100 s.
#[derive(Debug, Clone)]
pub struct Transcription<'a, T: Real> {
    pg: &'a PhysicsGraph<T>,
    loads_w: Vec<T>,
    n_segments: usize,
    nt: usize,
    nq: usize,
    temp_scale: Vec<T>,
    time_scale: T,
    lower: Vec<T>,
    upper: Vec<T>,
    /// Scaled rows of the dependent edges over `[1, φ...]`.
    dep_rows: Vec<Vec<T>>,
}

/// Evaluation buffers reused across calls.
#[derive(Debug, Clone)]
pub struct Workspace<T> {
    f: Vec<T>,
    jt: Vec<T>,
    jq: Vec<T>,
    temps: Vec<T>,
    flows: Vec<T>,
    weights: Vec<T>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Residuals<T> {
    pub max_defect: T,
    pub max_path: T,
}

impl<'a, T: Real> Transcription<'a, T> {
    pub fn new(pg: &'a PhysicsGraph<T>, loads: &LoadVector<T>, n_segments: usize) -> Result<Self> {
        if n_segments < MIN_SEGMENTS {
            return Err(Error::Validation(format!(
                "at least {MIN_SEGMENTS} segments required, got {n_segments}"
            )));
        }
        if loads.len() != pg.n_cphx() {
            return Err(Error::Dimension {
                expected: pg.n_cphx(),
                got: loads.len(),
            });
        }
        let p = pg.params();
        let nt = pg.n_temps();
        let nq = pg.n_controls();
        let upper_t = pg.upper_bounds();
        let temp_scale: Vec<T> = upper_t.iter().map(|&u| u - p.sink_temp).collect();
        if temp_scale.iter().any(|&s| !(s > T::zero())) {
            return Err(Error::Validation(
                "temperature bounds must exceed the sink temperature".into(),
            ));
        }
        let init = pg.initial_temps();

        let n_vars = (n_segments + 1) * (nt + 2 * nq) + 1;
        let mut lower = vec![T::zero(); n_vars];
        let mut upper = vec![T::zero(); n_vars];
        let far = T::lit(-1e3);
        for k in 0..=n_segments {
            let base = k * (nt + nq);
            for i in 0..nt {
                if k == 0 {
                    let th = (init[i] - p.sink_temp) / temp_scale[i];
                    lower[base + i] = th;
                    upper[base + i] = th;
                } else {
                    lower[base + i] = far;
                    upper[base + i] = T::one();
                }
            }
            for j in 0..nq {
                lower[base + nt + j] = T::zero();
                upper[base + nt + j] = T::one();
            }
        }
        let cbase = (n_segments + 1) * (nt + nq);
        for i in cbase..n_vars - 1 {
            lower[i] = -T::one();
            upper[i] = T::one();
        }
        lower[n_vars - 1] = T::lit(T_END_MIN / TIME_SCALE);
        upper[n_vars - 1] = T::lit(T_END_MAX / TIME_SCALE);

        let layout = pg.layout();
        let dep_rows = layout
            .dependent_edges()
            .iter()
            .map(|&e| layout.edge_row(e).to_vec())
            .collect();

        Ok(Self {
            pg,
            loads_w: loads.watts(),
            n_segments,
            nt,
            nq,
            temp_scale,
            time_scale: T::lit(TIME_SCALE),
            lower,
            upper,
            dep_rows,
        })
    }

    /// Rescales the final-time variable so that `s = 1` means `seconds`.
    /// Bounds on `t_end` are unchanged.
    pub fn with_time_scale(mut self, seconds: T) -> Self {
        let si = self.s_index();
        self.time_scale = seconds;
        self.lower[si] = T::lit(T_END_MIN) / seconds;
        self.upper[si] = T::lit(T_END_MAX) / seconds;
        self
    }

    pub fn time_scale(&self) -> T {
        self.time_scale
    }

    pub fn physics(&self) -> &PhysicsGraph<T> {
        self.pg
    }

    pub fn n_segments(&self) -> usize {
        self.n_segments
    }

    pub fn n_vars(&self) -> usize {
        self.lower.len()
    }

    /// Number of control variables (`u` at every grid node).
    pub fn n_control_vars(&self) -> usize {
        (self.n_segments + 1) * self.nq
    }

    pub fn n_state_vars(&self) -> usize {
        (self.n_segments + 1) * (self.nt + self.nq)
    }

    pub fn n_equalities(&self) -> usize {
        self.n_segments * (self.nt + self.nq)
    }

    pub fn n_inequalities(&self) -> usize {
        (self.n_segments + 1) * 2 * self.dep_rows.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    fn state(&self, k: usize) -> usize {
        k * (self.nt + self.nq)
    }

    fn control(&self, k: usize) -> usize {
        self.n_state_vars() + k * self.nq
    }

    fn s_index(&self) -> usize {
        self.n_vars() - 1
    }

    pub fn workspace(&self) -> Workspace<T> {
        let m = self.n_segments + 1;
        Workspace {
            f: vec![T::zero(); m * self.nt],
            jt: vec![T::zero(); m * self.nt * self.nt],
            jq: vec![T::zero(); m * self.nt * self.nq],
            temps: vec![T::zero(); self.nt],
            flows: vec![T::zero(); self.nq],
            weights: vec![T::zero(); self.n_equalities()],
        }
    }

    /// Physical grid times for scaled decision vector `x`.
    pub fn grid(&self, x: &[T]) -> Vec<T> {
        let t_end = self.t_end(x);
        let n = T::from_usize(self.n_segments).unwrap();
        (0..=self.n_segments)
            .map(|k| t_end * T::from_usize(k).unwrap() / n)
            .collect()
    }

    pub fn t_end(&self, x: &[T]) -> T {
        x[self.s_index()] * self.time_scale
    }

    pub fn temps_at(&self, x: &[T], k: usize) -> Vec<T> {
        let sink = self.pg.params().sink_temp;
        let b = self.state(k);
        (0..self.nt)
            .map(|i| sink + self.temp_scale[i] * x[b + i])
            .collect()
    }

    pub fn flows_at(&self, x: &[T], k: usize) -> Vec<T> {
        let pump = self.pg.params().pump_flow;
        let b = self.state(k) + self.nt;
        x[b..b + self.nq].iter().map(|&p| p * pump).collect()
    }

    pub fn controls_at(&self, x: &[T], k: usize) -> Vec<T> {
        let slew = self.pg.params().slew_limit;
        let b = self.control(k);
        x[b..b + self.nq].iter().map(|&v| v * slew).collect()
    }

    /// Decision vector interpolated from a simulated trajectory over
    /// `[0, t_end]`, with controls from finite differences of the flows.
    pub fn initial_guess(&self, traj: &Trajectory<T>, t_end: T) -> Vec<T> {
        let p = self.pg.params();
        let mut x = vec![T::zero(); self.n_vars()];
        let t_end = t_end.max(T::lit(T_END_MIN)).min(T::lit(T_END_MAX));
        let n = T::from_usize(self.n_segments).unwrap();
        let mut flows = Vec::with_capacity(self.n_segments + 1);
        for k in 0..=self.n_segments {
            let t = t_end * T::from_usize(k).unwrap() / n;
            let (temps, q) = sample(traj, t);
            let b = self.state(k);
            for i in 0..self.nt {
                x[b + i] = (temps[i] - p.sink_temp) / self.temp_scale[i];
            }
            for j in 0..self.nq {
                x[b + self.nt + j] = q[j] / p.pump_flow;
            }
            flows.push(q);
        }
        let dt = t_end / n;
        for k in 0..=self.n_segments {
            let (a, b) = if k == self.n_segments {
                (k - 1, k)
            } else {
                (k, k + 1)
            };
            for j in 0..self.nq {
                let u = (flows[b][j] - flows[a][j]) / dt / p.slew_limit;
                x[self.control(k) + j] = u.max(-T::one()).min(T::one());
            }
        }
        x[self.s_index()] = t_end / self.time_scale;
        for i in 0..x.len() {
            x[i] = x[i].max(self.lower[i]).min(self.upper[i]);
        }
        x
    }

    fn eval_nodes(&self, x: &[T], ws: &mut Workspace<T>, with_jacobian: bool) {
        let nt = self.nt;
        let nq = self.nq;
        let p = self.pg.params();
        for k in 0..=self.n_segments {
            let b = self.state(k);
            for i in 0..nt {
                ws.temps[i] = p.sink_temp + self.temp_scale[i] * x[b + i];
            }
            for j in 0..nq {
                ws.flows[j] = x[b + nt + j] * p.pump_flow;
            }
            let f = &mut ws.f[k * nt..(k + 1) * nt];
            self.pg
                .derivative_into(&ws.temps, &ws.flows, &self.loads_w, f);
            for i in 0..nt {
                f[i] /= self.temp_scale[i];
            }
            if with_jacobian {
                self.pg.jacobian_into(
                    &ws.temps,
                    &ws.flows,
                    &mut ws.jt[k * nt * nt..(k + 1) * nt * nt],
                    &mut ws.jq[k * nt * nq..(k + 1) * nt * nq],
                );
            }
        }
    }

    /// Defect equalities and path inequalities (`g <= 0`), both scaled.
    pub fn constraints(&self, x: &[T], ws: &mut Workspace<T>, eq: &mut [T], ineq: &mut [T]) {
        self.eval_nodes(x, ws, false);
        self.fill_constraints(x, ws, eq, ineq);
    }

    fn fill_constraints(&self, x: &[T], ws: &Workspace<T>, eq: &mut [T], ineq: &mut [T]) {
        let (nt, nq) = (self.nt, self.nq);
        let p = self.pg.params();
        let c = self.half_step() * x[self.s_index()] * self.time_scale;
        let a = p.slew_limit / p.pump_flow;
        for k in 0..self.n_segments {
            let (b0, b1) = (self.state(k), self.state(k + 1));
            let e = k * (nt + nq);
            for i in 0..nt {
                eq[e + i] = x[b1 + i] - x[b0 + i] - c * (ws.f[k * nt + i] + ws.f[(k + 1) * nt + i]);
            }
            let (u0, u1) = (self.control(k), self.control(k + 1));
            for j in 0..nq {
                eq[e + nt + j] = x[b1 + nt + j] - x[b0 + nt + j] - c * a * (x[u0 + j] + x[u1 + j]);
            }
        }
        let nd = self.dep_rows.len();
        for k in 0..=self.n_segments {
            let b = self.state(k) + nt;
            for (r, row) in self.dep_rows.iter().enumerate() {
                let mut v = row[0];
                for j in 0..nq {
                    v += row[1 + j] * x[b + j];
                }
                ineq[(k * nd + r) * 2] = -v;
                ineq[(k * nd + r) * 2 + 1] = v - T::one();
            }
        }
    }

    fn half_step(&self) -> T {
        T::lit(0.5) / T::from_usize(self.n_segments).unwrap()
    }

    pub fn residuals(&self, x: &[T], ws: &mut Workspace<T>) -> Residuals<T> {
        let mut eq = vec![T::zero(); self.n_equalities()];
        let mut ineq = vec![T::zero(); self.n_inequalities()];
        self.constraints(x, ws, &mut eq, &mut ineq);
        Residuals {
            max_defect: eq.iter().fold(T::zero(), |m, v| m.max(v.abs())),
            max_path: ineq.iter().fold(T::zero(), |m, &v| m.max(v)),
        }
    }

    /// Augmented Lagrangian of `−weight · s` with multipliers `lambda`
    /// (equalities) and `mu` (inequalities) and penalty `rho`. Writes the
    /// gradient into `grad`.
    #[allow(clippy::too_many_arguments)]
    pub fn augmented_lagrangian(
        &self,
        x: &[T],
        weight: T,
        lambda: &[T],
        mu: &[T],
        rho: T,
        ws: &mut Workspace<T>,
        eq: &mut [T],
        ineq: &mut [T],
        grad: &mut [T],
    ) -> T {
        let (nt, nq) = (self.nt, self.nq);
        let p = self.pg.params();
        self.eval_nodes(x, ws, true);
        self.fill_constraints(x, ws, eq, ineq);
        grad.iter_mut().for_each(|g| *g = T::zero());
        let si = self.s_index();
        let mut value = -weight * x[si];
        grad[si] = -weight;

        let mut w = std::mem::take(&mut ws.weights);
        for i in 0..eq.len() {
            let c = eq[i];
            value += lambda[i] * c + T::lit(0.5) * rho * c * c;
            w[i] = lambda[i] + rho * c;
        }

        let hs = self.half_step() * self.time_scale;
        let c = hs * x[si];
        let a = p.slew_limit / p.pump_flow;
        let pump = p.pump_flow;
        let mut ds = T::zero();
        for k in 0..=self.n_segments {
            let b = self.state(k);
            let uk = self.control(k);
            let prev = (k > 0).then(|| (k - 1) * (nt + nq));
            let next = (k < self.n_segments).then(|| k * (nt + nq));
            // Direct terms from θ_{k+1} − θ_k and φ_{k+1} − φ_k.
            if let Some(e) = prev {
                for i in 0..nt + nq {
                    grad[b + i] += w[e + i];
                }
            }
            if let Some(e) = next {
                for i in 0..nt + nq {
                    grad[b + i] -= w[e + i];
                }
            }
            // Both neighbouring defects share the node's derivative term.
            let wsum = |i: usize| {
                let mut s = T::zero();
                if let Some(e) = prev {
                    s += w[e + i];
                }
                if let Some(e) = next {
                    s += w[e + i];
                }
                s
            };
            let f = &ws.f[k * nt..(k + 1) * nt];
            let jt = &ws.jt[k * nt * nt..(k + 1) * nt * nt];
            let jq = &ws.jq[k * nt * nq..(k + 1) * nt * nq];
            for i in 0..nt {
                let wi = wsum(i);
                if wi == T::zero() {
                    continue;
                }
                ds -= hs * wi * f[i];
                let coef = c * wi / self.temp_scale[i];
                let row = &jt[i * nt..(i + 1) * nt];
                for j in 0..nt {
                    if row[j] != T::zero() {
                        grad[b + j] -= coef * row[j] * self.temp_scale[j];
                    }
                }
                for j in 0..nq {
                    grad[b + nt + j] -= coef * jq[i * nq + j] * pump;
                }
            }
            for j in 0..nq {
                let vj = wsum(nt + j);
                ds -= hs * a * vj * x[uk + j];
                grad[uk + j] -= c * a * vj;
            }
        }
        grad[si] += ds;

        let nd = self.dep_rows.len();
        for k in 0..=self.n_segments {
            let b = self.state(k) + nt;
            for (r, row) in self.dep_rows.iter().enumerate() {
                for side in 0..2 {
                    let idx = (k * nd + r) * 2 + side;
                    let m = mu[idx];
                    let shifted = (m + rho * ineq[idx]).max(T::zero());
                    value += (shifted * shifted - m * m) / (T::lit(2.0) * rho);
                    if shifted > T::zero() {
                        let sign = if side == 0 { -T::one() } else { T::one() };
                        for j in 0..nq {
                            grad[b + j] += shifted * sign * row[1 + j];
                        }
                    }
                }
            }
        }
        ws.weights = w;
        value
    }
}

fn sample<T: Real>(traj: &Trajectory<T>, t: T) -> (Vec<T>, Vec<T>) {
    let n = traj.times.len();
    if t <= traj.times[0] || n == 1 {
        return (traj.temps[0].clone(), traj.flows[0].clone());
    }
    if t >= traj.times[n - 1] {
        return (traj.temps[n - 1].clone(), traj.flows[n - 1].clone());
    }
    let k = traj.times.partition_point(|&x| x <= t).max(1) - 1;
    let w = (t - traj.times[k]) / (traj.times[k + 1] - traj.times[k]);
    let lerp = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&p, &q)| p + w * (q - p)).collect();
    (
        lerp(&traj.temps[k], &traj.temps[k + 1]),
        lerp(&traj.flows[k], &traj.flows[k + 1]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigGraph;
    use crate::thermal::ThermalParams;

    fn build(parents: Vec<Option<usize>>) -> PhysicsGraph<f64> {
        PhysicsGraph::build(
            &ConfigGraph::new(parents).unwrap(),
            &ThermalParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn dimensions() {
        let series = build(vec![None, Some(0), Some(1)]);
        let tr = Transcription::new(&series, &LoadVector(vec![5.0; 3]), 20).unwrap();
        assert_eq!(tr.n_control_vars(), 0);
        assert_eq!(tr.n_vars(), tr.n_state_vars() + 1);

        let par = build(vec![None; 3]);
        let tr = Transcription::new(&par, &LoadVector(vec![5.0; 3]), 20).unwrap();
        assert_eq!(tr.n_control_vars(), 2 * 21);
        let u = tr.control(0);
        assert_eq!(tr.lower()[u], -1.0);
        assert_eq!(tr.upper()[u], 1.0);
        assert!(Transcription::new(&par, &LoadVector(vec![5.0; 3]), 7).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let pg = build(vec![None, None, None]);
        let tr = Transcription::new(&pg, &LoadVector(vec![7.0, 4.0, 9.0]), 8).unwrap();
        let mut ws = tr.workspace();
        let n = tr.n_vars();
        let mut x: Vec<f64> = (0..n)
            .map(|i| {
                let (lo, hi) = (tr.lower()[i].max(-0.5), tr.upper()[i]);
                lo + (hi - lo) * (0.3 + 0.4 * ((i * 7919) % 13) as f64 / 13.0)
            })
            .collect();
        x[n - 1] = 0.1;
        // Push one dependent flow negative so an inequality term is active.
        x[tr.state(3) + tr.nt] = 0.9;
        x[tr.state(3) + tr.nt + 1] = 0.4;
        let lambda: Vec<f64> = (0..tr.n_equalities())
            .map(|i| 0.01 * (i % 5) as f64)
            .collect();
        let mu: Vec<f64> = (0..tr.n_inequalities())
            .map(|i| 0.02 * (i % 3) as f64)
            .collect();
        let mut eq = vec![0.0; tr.n_equalities()];
        let mut ineq = vec![0.0; tr.n_inequalities()];
        let mut g = vec![0.0; n];
        tr.augmented_lagrangian(
            &x, 3.0, &lambda, &mu, 30.0, &mut ws, &mut eq, &mut ineq, &mut g,
        );
        let mut scratch = vec![0.0; n];
        let mut f_at = |x: &[f64]| {
            tr.augmented_lagrangian(
                x,
                3.0,
                &lambda,
                &mu,
                30.0,
                &mut ws,
                &mut eq,
                &mut ineq,
                &mut scratch,
            )
        };
        for i in 0..n {
            let h = 1e-6;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (f_at(&xp) - f_at(&xm)) / (2.0 * h);
            assert!(
                (fd - g[i]).abs() <= 1e-5 * (1.0 + fd.abs()),
                "component {i}: analytic {} vs fd {fd}",
                g[i]
            );
        }
    }

    #[test]
    fn simulated_guess_has_small_defects() {
        use crate::thermal::{simulate, ConstantFlows};
        let pg = build(vec![None; 2]);
        let loads = LoadVector(vec![5.0, 6.0]);
        let traj = simulate(&pg, &loads, &ConstantFlows(vec![0.2]), 8.0, 0.01).unwrap();
        let tr = Transcription::new(&pg, &loads, 64).unwrap();
        let x = tr.initial_guess(&traj, 8.0);
        let r = tr.residuals(&x, &mut tr.workspace());
        assert!(r.max_defect < 5e-3, "{r:?}");
        assert!(r.max_path <= 0.0);
    }
}
