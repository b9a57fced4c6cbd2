use std::io::Write;

use serde::Serialize;

use super::params::LoadVector;
use super::physics::PhysicsGraph;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Independent branch flows as a function of time.
pub trait FlowPolicy<T: Real> {
    fn flows_at(&self, t: T, out: &mut [T]);
}

impl<T: Real, F: Fn(T, &mut [T])> FlowPolicy<T> for F {
    fn flows_at(&self, t: T, out: &mut [T]) {
        self(t, out)
    }
}

/// Holds every independent flow constant.
#[derive(Debug, Clone)]
pub struct ConstantFlows<T>(pub Vec<T>);

impl<T: Real> FlowPolicy<T> for ConstantFlows<T> {
    fn flows_at(&self, _t: T, out: &mut [T]) {
        out.copy_from_slice(&self.0);
    }
}

/// Linear interpolation of independent flows between grid nodes, held
/// constant outside the grid.
#[derive(Debug, Clone)]
pub struct InterpolatedFlows<T> {
    pub times: Vec<T>,
    pub flows: Vec<Vec<T>>,
}

impl<T: Real> FlowPolicy<T> for InterpolatedFlows<T> {
    fn flows_at(&self, t: T, out: &mut [T]) {
        let n = self.times.len();
        if n == 0 {
            return;
        }
        if t <= self.times[0] {
            out.copy_from_slice(&self.flows[0]);
            return;
        }
        if t >= self.times[n - 1] {
            out.copy_from_slice(&self.flows[n - 1]);
            return;
        }
        let k = self.times.partition_point(|&x| x <= t).max(1) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = (t - t0) / (t1 - t0);
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.flows[k][j] + w * (self.flows[k + 1][j] - self.flows[k][j]);
        }
    }
}

/// Time history of a simulation: temperatures (°C) and independent flows
/// (kg/s) on a uniform grid.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "")]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    pub temps: Vec<Vec<T>>,
    pub flows: Vec<Vec<T>>,
}

struct Rk4<'a, T: Real> {
    pg: &'a PhysicsGraph<T>,
    loads_w: Vec<T>,
    k: [Vec<T>; 4],
    scratch: Vec<T>,
    q: Vec<T>,
}

impl<'a, T: Real> Rk4<'a, T> {
    fn new(pg: &'a PhysicsGraph<T>, loads: &LoadVector<T>) -> Result<Self> {
        if loads.len() != pg.n_cphx() {
            return Err(Error::Dimension {
                expected: pg.n_cphx(),
                got: loads.len(),
            });
        }
        let nt = pg.n_temps();
        Ok(Self {
            pg,
            loads_w: loads.watts(),
            k: std::array::from_fn(|_| vec![T::zero(); nt]),
            scratch: vec![T::zero(); nt],
            q: vec![T::zero(); pg.n_controls()],
        })
    }

    fn step(&mut self, policy: &impl FlowPolicy<T>, t: T, dt: T, y: &mut [T]) {
        let half = dt * T::lit(0.5);
        let stages = [T::zero(), half, half, dt];
        for s in 0..4 {
            policy.flows_at(t + stages[s], &mut self.q);
            if s == 0 {
                self.scratch.copy_from_slice(y);
            } else {
                for i in 0..y.len() {
                    self.scratch[i] = y[i] + stages[s] * self.k[s - 1][i];
                }
            }
            let (scratch, q) = (&self.scratch, &self.q);
            self.pg
                .derivative_into(scratch, q, &self.loads_w, &mut self.k[s]);
        }
        let sixth = dt / T::lit(6.0);
        for i in 0..y.len() {
            y[i] +=
                sixth * (self.k[0][i] + T::lit(2.0) * (self.k[1][i] + self.k[2][i]) + self.k[3][i]);
        }
    }
}

fn step_count<T: Real>(t_max: T, dt: T) -> Result<usize> {
    if !(dt > T::zero() && dt.is_finite()) || !(t_max >= T::zero() && t_max.is_finite()) {
        return Err(Error::Validation(format!(
            "invalid horizon {t_max} / step {dt}"
        )));
    }
    let steps = (t_max / dt - T::lit(1e-9)).ceil().max(T::zero());
    steps
        .to_usize()
        .ok_or_else(|| Error::Validation("step count overflow".into()))
}

/// Fixed-step classical RK4 from the initial temperatures. Flows come from
/// `policy`; keeping them within bounds and slew limits is up to the caller.
pub fn simulate<T: Real>(
    pg: &PhysicsGraph<T>,
    loads: &LoadVector<T>,
    policy: &impl FlowPolicy<T>,
    t_max: T,
    dt: T,
) -> Result<Trajectory<T>> {
    simulate_from(pg, loads, policy, pg.initial_temps(), t_max, dt)
}

pub fn simulate_from<T: Real>(
    pg: &PhysicsGraph<T>,
    loads: &LoadVector<T>,
    policy: &impl FlowPolicy<T>,
    initial: Vec<T>,
    t_max: T,
    dt: T,
) -> Result<Trajectory<T>> {
    let steps = step_count(t_max, dt)?;
    let mut rk = Rk4::new(pg, loads)?;
    let mut y = initial;
    let mut q = vec![T::zero(); pg.n_controls()];
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        temps: Vec::with_capacity(steps + 1),
        flows: Vec::with_capacity(steps + 1),
    };
    policy.flows_at(T::zero(), &mut q);
    traj.times.push(T::zero());
    traj.temps.push(y.clone());
    traj.flows.push(q.clone());
    for k in 0..steps {
        let t = T::from_usize(k).unwrap() * dt;
        rk.step(policy, t, dt, &mut y);
        let t_next = T::from_usize(k + 1).unwrap() * dt;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: k + 1,
                time: t_next.to_f64_lossy(),
            });
        }
        policy.flows_at(t_next, &mut q);
        traj.times.push(t_next);
        traj.temps.push(y.clone());
        traj.flows.push(q.clone());
    }
    Ok(traj)
}

/// First crossing of any temperature bound, linearly interpolated between
/// the bracketing steps. `None` if the trajectory never crosses.
pub fn endurance_from_trajectory<T: Real>(traj: &Trajectory<T>, upper: &[T]) -> Option<T> {
    for k in 0..traj.times.len() {
        if let Some(t) = crossing_in(&traj.temps[k], upper) {
            let _ = t;
            if k == 0 {
                return Some(traj.times[0]);
            }
            return Some(interpolate_crossing(
                traj.times[k - 1],
                traj.times[k],
                &traj.temps[k - 1],
                &traj.temps[k],
                upper,
            ));
        }
    }
    None
}

fn crossing_in<T: Real>(temps: &[T], upper: &[T]) -> Option<usize> {
    temps.iter().zip(upper).position(|(&x, &u)| x >= u)
}

fn interpolate_crossing<T: Real>(t0: T, t1: T, y0: &[T], y1: &[T], upper: &[T]) -> T {
    let mut best = t1;
    for i in 0..y0.len() {
        if y1[i] >= upper[i] {
            let frac = if y0[i] >= upper[i] {
                T::zero()
            } else {
                (upper[i] - y0[i]) / (y1[i] - y0[i])
            };
            best = best.min(t0 + frac * (t1 - t0));
        }
    }
    best
}

/// Endurance from a direct simulation that stops at the first bound crossing.
/// Equivalent to `endurance_from_trajectory(simulate(..))` without storing
/// the trajectory.
pub fn simulate_endurance<T: Real>(
    pg: &PhysicsGraph<T>,
    loads: &LoadVector<T>,
    policy: &impl FlowPolicy<T>,
    t_max: T,
    dt: T,
) -> Result<Option<T>> {
    let steps = step_count(t_max, dt)?;
    let upper = pg.upper_bounds();
    let mut rk = Rk4::new(pg, loads)?;
    let mut y = pg.initial_temps();
    if crossing_in(&y, &upper).is_some() {
        return Ok(Some(T::zero()));
    }
    let mut prev = y.clone();
    for k in 0..steps {
        let t = T::from_usize(k).unwrap() * dt;
        prev.copy_from_slice(&y);
        rk.step(policy, t, dt, &mut y);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: k + 1,
                time: (t + dt).to_f64_lossy(),
            });
        }
        if crossing_in(&y, &upper).is_some() {
            return Ok(Some(interpolate_crossing(t, t + dt, &prev, &y, &upper)));
        }
    }
    Ok(None)
}

/// Writes `t, T_<node>..., mdot_<edge>...` rows; temperatures in °C, edge
/// flows in kg/s.
pub fn write_trajectory_csv<T: Real>(
    traj: &Trajectory<T>,
    pg: &PhysicsGraph<T>,
    out: impl Write,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(pg.nodes().iter().map(|n| format!("T_{}", n.label())));
    header.extend((0..pg.n_cphx()).map(|e| format!("mdot_{}", e + 1)));
    w.write_record(&header)?;
    let pump = pg.params().pump_flow;
    for k in 0..traj.times.len() {
        let mut row = vec![traj.times[k].to_string()];
        row.extend(traj.temps[k].iter().map(|x| x.to_string()));
        row.extend(
            pg.layout()
                .edge_flows(pump, &traj.flows[k])
                .iter()
                .map(|x| x.to_string()),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigGraph;
    use crate::thermal::ThermalParams;

    fn pg(parents: Vec<Option<usize>>) -> PhysicsGraph<f64> {
        PhysicsGraph::build(
            &ConfigGraph::new(parents).unwrap(),
            &ThermalParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn interpolated_midpoint_crossing() {
        let traj = Trajectory {
            times: vec![0.0, 1.0, 2.0, 3.0],
            temps: vec![vec![41.0], vec![43.0], vec![44.0], vec![46.0]],
            flows: vec![vec![]; 4],
        };
        assert_eq!(endurance_from_trajectory(&traj, &[45.0]), Some(2.5));
        assert_eq!(endurance_from_trajectory(&traj, &[50.0]), None);
    }

    #[test]
    fn zero_loads_cool_toward_sink() {
        let g = pg(vec![None, None, Some(1)]);
        let sink = g.params().sink_temp;
        let policy = ConstantFlows(vec![0.2]);
        let traj = simulate(&g, &LoadVector(vec![0.0; 3]), &policy, 60.0, 0.02).unwrap();
        let mut prev = f64::INFINITY;
        for temps in &traj.temps {
            let dev = temps.iter().map(|t| (t - sink).abs()).fold(0.0, f64::max);
            assert!(dev <= prev + 1e-12);
            prev = dev;
        }
        assert!(prev < 2.0);
    }

    #[test]
    fn identical_parallel_branches_swap_exactly() {
        let g = pg(vec![None, None, None]);
        let loads = LoadVector(vec![6.0, 6.0, 9.0]);
        let a = simulate(&g, &loads, &ConstantFlows(vec![0.12, 0.12]), 5.0, 0.02).unwrap();
        let last = a.temps.last().unwrap();
        assert_eq!(last[0], last[1]);
        assert_eq!(last[3], last[4]);
    }

    #[test]
    fn rk4_order_is_four() {
        let g = pg(vec![None, Some(0)]);
        let loads = LoadVector(vec![5.0, 3.0]);
        let policy = |t: f64, out: &mut [f64]| {
            let _ = (t, out);
        };
        let run = |dt: f64| {
            simulate(&g, &loads, &policy, 4.0, dt)
                .unwrap()
                .temps
                .last()
                .unwrap()
                .clone()
        };
        let (a, b, c) = (run(0.2), run(0.1), run(0.05));
        let diff = |x: &[f64], y: &[f64]| {
            x.iter()
                .zip(y)
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max)
        };
        let ratio = diff(&a, &b) / diff(&b, &c);
        assert!(ratio.log2() >= 3.5, "observed order {}", ratio.log2());
    }

    #[test]
    fn early_stop_matches_full_trajectory() {
        let g = pg(vec![None]);
        let loads = LoadVector(vec![8.0]);
        let policy = ConstantFlows(vec![]);
        let full = simulate(&g, &loads, &policy, 100.0, 0.02).unwrap();
        let a = endurance_from_trajectory(&full, &g.upper_bounds()).unwrap();
        let b = simulate_endurance(&g, &loads, &policy, 100.0, 0.02)
            .unwrap()
            .unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn divergence_is_reported() {
        let g = pg(vec![None, None]);
        let loads = LoadVector(vec![5.0, 5.0]);
        let bad = |_t: f64, out: &mut [f64]| out[0] = 1e6;
        let err = simulate(&g, &loads, &bad, 10.0, 0.5).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn interpolated_policy() {
        let p = InterpolatedFlows {
            times: vec![0.0, 2.0, 4.0],
            flows: vec![vec![0.0], vec![0.2], vec![0.1]],
        };
        let mut out = [0.0f64];
        p.flows_at(1.0, &mut out);
        assert!((out[0] - 0.1).abs() < 1e-15);
        p.flows_at(3.0, &mut out);
        assert!((out[0] - 0.15).abs() < 1e-15);
        p.flows_at(9.0, &mut out);
        assert_eq!(out[0], 0.1);
    }

    #[test]
    fn csv_header_names_nodes_and_edges() {
        let g = pg(vec![None, Some(0)]);
        let traj = simulate(
            &g,
            &LoadVector(vec![1.0, 1.0]),
            &ConstantFlows(vec![]),
            0.04,
            0.02,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &g, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "t,T_wall1,T_wall2,T_fluid1,T_fluid2,T_tank,T_llhx_wall,T_llhx_hot,T_llhx_cold,mdot_1,mdot_2"
        );
        assert_eq!(text.lines().count(), 4);
    }
}
