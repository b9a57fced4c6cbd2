use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lbfgs::ProjectedLbfgs;
use super::transcription::{Residuals, Transcription, T_END_MAX};
use crate::config::ConfigGraph;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::thermal::{
    simulate, simulate_endurance, ConstantFlows, InterpolatedFlows, LoadVector, PhysicsGraph,
    ThermalParams, Trajectory,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub segments: usize,
    pub defect_tol: f64,
    pub path_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub initial_penalty: f64,
    /// Step of the RK4 integrator used for warm starts and for scoring.
    pub sim_dt: f64,
    /// Random feasible constant splits tried after the two standard starts.
    pub extra_starts: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            segments: 24,
            defect_tol: 1e-4,
            path_tol: 1e-3,
            max_outer: 30,
            max_inner: 200,
            initial_penalty: 100.0,
            sim_dt: 0.02,
            extra_starts: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    /// No independent flows: the trajectory is fixed by the loads.
    SeriesFastPath,
    Collocation,
    ConstantPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub kind: CandidateKind,
    /// 0 = equal split, 1 = load-proportional, then the random starts.
    pub start: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Violations<T: Real> {
    pub max_defect: T,
    pub max_path: T,
}

impl<T: Real> Violations<T> {
    fn total(&self) -> T {
        self.max_defect + self.max_path
    }
}

/// Best policy found for one configuration and load vector.
///
/// `t_end` is the endurance of the returned flow policy when re-simulated
/// with RK4 at `sim_dt` (flows linearly interpolated between grid nodes);
/// `transcribed_t_end` is the final time of the discretized problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct OlocSolution<T: Real> {
    pub t_end: T,
    pub converged: bool,
    pub grid: Vec<T>,
    /// Temperatures (°C) followed by independent flows (kg/s) per grid node.
    pub states: Vec<Vec<T>>,
    /// Flow rates of change (kg/s²) per grid node.
    pub controls: Vec<Vec<T>>,
    pub violations: Violations<T>,
    pub transcribed_t_end: T,
    pub objective_history: Vec<T>,
    pub source: Candidate,
}

impl<T: Real> OlocSolution<T> {
    pub fn n_controls(&self) -> usize {
        self.controls.first().map_or(0, Vec::len)
    }

    /// Independent flows at each grid node.
    pub fn flows(&self) -> Vec<Vec<T>> {
        let nq = self.n_controls();
        self.states
            .iter()
            .map(|s| s[s.len() - nq..].to_vec())
            .collect()
    }

    pub fn policy(&self) -> InterpolatedFlows<T> {
        InterpolatedFlows {
            times: self.grid.clone(),
            flows: self.flows(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, out: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Maximizes endurance for configuration `g`.
pub fn solve<T: Real>(
    g: &ConfigGraph,
    params: &ThermalParams<T>,
    loads: &LoadVector<T>,
    opts: &SolveOptions,
) -> Result<OlocSolution<T>> {
    let pg = PhysicsGraph::build(g, params)?;
    solve_physics(&pg, g, loads, opts)
}

pub fn solve_physics<T: Real>(
    pg: &PhysicsGraph<T>,
    g: &ConfigGraph,
    loads: &LoadVector<T>,
    opts: &SolveOptions,
) -> Result<OlocSolution<T>> {
    if loads.len() != pg.n_cphx() {
        return Err(Error::Dimension {
            expected: pg.n_cphx(),
            got: loads.len(),
        });
    }
    let dt = T::lit(opts.sim_dt);
    let cap = T::lit(T_END_MAX);
    let n_seg = opts.segments;
    if pg.n_controls() == 0 {
        let tr = Transcription::new(pg, loads, n_seg)?;
        let policy = ConstantFlows(Vec::new());
        let t_end = simulate_endurance(pg, loads, &policy, cap, dt)?.unwrap_or(cap);
        return constant_solution(
            pg,
            loads,
            &tr,
            &[],
            t_end,
            dt,
            Candidate {
                kind: CandidateKind::SeriesFastPath,
                start: 0,
            },
        );
    }

    let tr = Transcription::new(pg, loads, n_seg)?;
    let pump = pg.params().pump_flow;
    let layout = pg.layout();
    let mut starts = vec![
        layout.equal_split(g, pump),
        layout.load_proportional(g, pump, loads.kw()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.extra_starts {
        let w: Vec<T> = (0..g.n_nodes())
            .map(|_| T::lit(rng.gen_range(0.05..1.0)))
            .collect();
        starts.push(layout.weighted_split(g, pump, |c| w[c]));
    }

    let mut best: Option<OlocSolution<T>> = None;
    let mut any_converged = false;
    for (si, q0) in starts.iter().enumerate() {
        let constant = ConstantFlows(q0.clone());
        let e0 = simulate_endurance(pg, loads, &constant, cap, dt)?.unwrap_or(cap);
        let collocated = collocate(pg, loads, &tr, q0, e0, opts, si)?;
        any_converged |= collocated.converged;
        let fixed = constant_solution(
            pg,
            loads,
            &tr,
            q0,
            e0,
            dt,
            Candidate {
                kind: CandidateKind::ConstantPolicy,
                start: si,
            },
        )?;
        for cand in [collocated, fixed] {
            let better = match &best {
                None => true,
                Some(b) => {
                    cand.t_end > b.t_end
                        || (cand.t_end == b.t_end && cand.violations.total() < b.violations.total())
                }
            };
            if better {
                best = Some(cand);
            }
        }
    }
    let mut sol = best
        .ok_or_else(|| Error::NonConvergence("no candidate produced a finite endurance".into()))?;
    sol.converged = any_converged;
    Ok(sol)
}

fn constant_solution<T: Real>(
    pg: &PhysicsGraph<T>,
    loads: &LoadVector<T>,
    tr: &Transcription<'_, T>,
    q: &[T],
    t_end: T,
    dt: T,
    source: Candidate,
) -> Result<OlocSolution<T>> {
    let traj = simulate(pg, loads, &ConstantFlows(q.to_vec()), t_end, dt)?;
    let x = tr.initial_guess(&traj, t_end);
    let n = tr.n_segments();
    let grid = tr.grid(&x);
    let states = (0..=n)
        .map(|k| {
            let mut s = tr.temps_at(&x, k);
            s.extend_from_slice(q);
            s
        })
        .collect();
    Ok(OlocSolution {
        t_end,
        converged: true,
        grid,
        states,
        controls: vec![vec![T::zero(); q.len()]; n + 1],
        violations: Violations {
            max_defect: T::zero(),
            max_path: T::zero(),
        },
        transcribed_t_end: t_end,
        objective_history: vec![t_end],
        source,
    })
}

fn collocate<T: Real>(
    pg: &PhysicsGraph<T>,
    loads: &LoadVector<T>,
    tr: &Transcription<'_, T>,
    q0: &[T],
    e0: T,
    opts: &SolveOptions,
    start: usize,
) -> Result<OlocSolution<T>> {
    let dt = T::lit(opts.sim_dt);
    let horizon = e0.max(T::one());
    let traj = simulate(pg, loads, &ConstantFlows(q0.to_vec()), horizon, dt)?;
    let tr = &tr.clone().with_time_scale(horizon);
    let mut x = tr.initial_guess(&traj, horizon);
    let (converged, res, history) = augmented_lagrangian(tr, &mut x, opts);

    let n = tr.n_segments();
    let grid = tr.grid(&x);
    let states: Vec<Vec<T>> = (0..=n)
        .map(|k| {
            let mut s = tr.temps_at(&x, k);
            s.extend(tr.flows_at(&x, k));
            s
        })
        .collect();
    let controls = (0..=n).map(|k| tr.controls_at(&x, k)).collect();
    let mut sol = OlocSolution {
        t_end: T::zero(),
        converged,
        grid,
        states,
        controls,
        violations: Violations {
            max_defect: res.max_defect,
            max_path: res.max_path,
        },
        transcribed_t_end: tr.t_end(&x),
        objective_history: history,
        source: Candidate {
            kind: CandidateKind::Collocation,
            start,
        },
    };
    let resim = simulate_endurance(pg, loads, &sol.policy(), T::lit(T_END_MAX), dt);
    sol.t_end = match resim {
        Ok(Some(t)) => t,
        Ok(None) => T::lit(T_END_MAX),
        Err(_) => T::zero(),
    };
    Ok(sol)
}

fn augmented_lagrangian<T: Real>(
    tr: &Transcription<'_, T>,
    x: &mut [T],
    opts: &SolveOptions,
) -> (bool, Residuals<T>, Vec<T>) {
    let mut ws = tr.workspace();
    let mut eq = vec![T::zero(); tr.n_equalities()];
    let mut ineq = vec![T::zero(); tr.n_inequalities()];
    let mut lambda = vec![T::zero(); eq.len()];
    let mut mu = vec![T::zero(); ineq.len()];
    let mut rho = T::lit(opts.initial_penalty);
    let inner = ProjectedLbfgs {
        max_iter: opts.max_inner,
        ..Default::default()
    };
    let (dtol, ptol) = (T::lit(opts.defect_tol), T::lit(opts.path_tol));
    let mut history = Vec::new();
    let mut prev_violation = T::infinity();
    let mut prev_t = T::nan();
    let mut converged = false;
    let mut res = Residuals::default();
    let weight = tr.time_scale() / tr.t_end(x);

    for _ in 0..opts.max_outer {
        inner.minimize(x, tr.lower(), tr.upper(), |x, g| {
            tr.augmented_lagrangian(x, weight, &lambda, &mu, rho, &mut ws, &mut eq, &mut ineq, g)
        });
        tr.constraints(x, &mut ws, &mut eq, &mut ineq);
        res = Residuals {
            max_defect: eq.iter().fold(T::zero(), |m, v| m.max(v.abs())),
            max_path: ineq.iter().fold(T::zero(), |m, &v| m.max(v)),
        };
        let t = tr.t_end(x);
        history.push(t);
        for i in 0..eq.len() {
            lambda[i] += rho * eq[i];
        }
        for i in 0..ineq.len() {
            mu[i] = (mu[i] + rho * ineq[i]).max(T::zero());
        }
        let feasible = res.max_defect <= dtol && res.max_path <= ptol;
        if feasible && (t - prev_t).abs() <= T::lit(1e-4) * t {
            converged = true;
            break;
        }
        prev_t = t;
        let violation = (res.max_defect / dtol).max(res.max_path / ptol);
        if violation > T::lit(0.25) * prev_violation {
            rho = (rho * T::lit(10.0)).min(T::lit(1e8));
        }
        prev_violation = violation;
    }
    (converged, res, history)
}

/// Independent check of a solution by fine-step re-simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FeasibilityReport<T: Real> {
    /// Largest temperature excess over its bound on `[0, t_end]`, °C.
    pub max_violation: T,
    pub resimulated_t_end: T,
    /// `|transcribed − resimulated| / resimulated`.
    pub mismatch: T,
    pub mismatch_flag: bool,
}

pub const VERIFY_DT: f64 = 0.001;
pub const MISMATCH_TOL: f64 = 0.02;

pub fn verify_feasibility<T: Real>(
    sol: &OlocSolution<T>,
    pg: &PhysicsGraph<T>,
    loads: &LoadVector<T>,
) -> Result<FeasibilityReport<T>> {
    let dt = T::lit(VERIFY_DT);
    let policy = sol.policy();
    let traj: Trajectory<T> = simulate(pg, loads, &policy, sol.t_end, dt)?;
    let upper = pg.upper_bounds();
    let mut worst = T::zero();
    for temps in &traj.temps {
        for (x, u) in temps.iter().zip(&upper) {
            worst = worst.max(*x - *u);
        }
    }
    let resim =
        simulate_endurance(pg, loads, &policy, T::lit(T_END_MAX), dt)?.unwrap_or(T::lit(T_END_MAX));
    let mismatch = (sol.transcribed_t_end - resim).abs() / resim.max(T::lit(1e-12));
    Ok(FeasibilityReport {
        max_violation: worst,
        resimulated_t_end: resim,
        mismatch,
        mismatch_flag: mismatch > T::lit(MISMATCH_TOL),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oloc::brute_force_piecewise_oracle;

    fn graph(parents: Vec<Option<usize>>) -> ConfigGraph {
        ConfigGraph::new(parents).unwrap()
    }

    fn params() -> ThermalParams<f64> {
        ThermalParams::default()
    }

    #[test]
    fn series_fast_path_matches_fine_integration() {
        let g = graph(vec![Some(2), None, Some(1)]);
        let loads = LoadVector(vec![7.0, 11.0, 5.0]);
        let sol = solve(&g, &params(), &loads, &SolveOptions::default()).unwrap();
        assert_eq!(sol.source.kind, CandidateKind::SeriesFastPath);
        assert_eq!(sol.n_controls(), 0);
        let pg = PhysicsGraph::build(&g, &params()).unwrap();
        let fine = simulate_endurance(&pg, &loads, &ConstantFlows(vec![]), 500.0, 0.001)
            .unwrap()
            .unwrap();
        assert!(
            (sol.t_end - fine).abs() / fine <= 5e-3,
            "{} vs {fine}",
            sol.t_end
        );

        let report = verify_feasibility(&sol, &pg, &loads).unwrap();
        assert!(report.mismatch <= 5e-3, "{report:?}");
        assert!(!report.mismatch_flag);
    }

    #[test]
    fn equal_loads_give_equal_flows() {
        let g = graph(vec![None, None, None]);
        let p = params();
        let loads = LoadVector(vec![5.0, 5.0, 5.0]);
        let sol = solve(&g, &p, &loads, &SolveOptions::default()).unwrap();
        let third = p.pump_flow / 3.0;
        for q in sol.flows() {
            for v in q {
                assert!((v - third).abs() <= 0.02 * third, "{v}");
            }
        }
        let pg = PhysicsGraph::build(&g, &p).unwrap();
        let baseline = simulate_endurance(&pg, &loads, &ConstantFlows(vec![third; 2]), 500.0, 0.02)
            .unwrap()
            .unwrap();
        assert!(sol.t_end >= 0.99 * baseline);
    }

    #[test]
    fn doubling_loads_shortens_endurance() {
        let g = graph(vec![None, Some(0), None]);
        let loads = LoadVector(vec![6.0, 4.5, 8.0]);
        let opts = SolveOptions {
            segments: 16,
            ..Default::default()
        };
        let a = solve(&g, &params(), &loads, &opts).unwrap();
        let doubled = LoadVector(loads.0.iter().map(|d| 2.0 * d).collect());
        let b = solve(&g, &params(), &doubled, &opts).unwrap();
        assert!(b.t_end < a.t_end, "{} !< {}", b.t_end, a.t_end);
    }

    #[test]
    fn repeated_solves_are_identical() {
        let g = graph(vec![None, None, Some(1)]);
        let loads = LoadVector(vec![9.0, 12.5, 6.0]);
        let opts = SolveOptions {
            segments: 12,
            extra_starts: 1,
            seed: 3,
            ..Default::default()
        };
        let a = solve(&g, &params(), &loads, &opts).unwrap();
        let b = solve(&g, &params(), &loads, &opts).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn collocated_solution_is_consistent_with_resimulation() {
        let g = graph(vec![None, None]);
        let p = params();
        let loads = LoadVector(vec![12.0, 6.0]);
        let sol = solve(&g, &p, &loads, &SolveOptions::default()).unwrap();
        let pg = PhysicsGraph::build(&g, &p).unwrap();
        let report = verify_feasibility(&sol, &pg, &loads).unwrap();
        if sol.source.kind == CandidateKind::Collocation {
            assert!(sol.violations.max_path <= 1e-3);
            assert!(report.mismatch <= 0.02, "{report:?}");
        }
        assert!(report.max_violation <= 0.05, "{report:?}");
    }

    #[test]
    fn corrupted_flows_are_detected() {
        let g = graph(vec![None, None, None]);
        let p = params();
        let loads = LoadVector(vec![8.0, 8.0, 4.0]);
        let sol = solve(&g, &p, &loads, &SolveOptions::default()).unwrap();
        let pg = PhysicsGraph::build(&g, &p).unwrap();
        let good = verify_feasibility(&sol, &pg, &loads).unwrap();

        let mut bad = sol.clone();
        let nq = bad.n_controls();
        for (s, c) in bad.states.iter_mut().zip(bad.controls.iter_mut()) {
            let len = s.len();
            s[len - nq..].iter_mut().for_each(|q| *q = 0.0);
            c.iter_mut().for_each(|u| *u = 0.0);
        }
        let report = verify_feasibility(&bad, &pg, &loads).unwrap();
        assert!(
            report.max_violation > 0.0 || report.resimulated_t_end < good.resimulated_t_end,
            "{report:?}"
        );
    }

    #[test]
    fn solver_is_not_beaten_by_oracle() {
        let g = graph(vec![None, None]);
        let p = params();
        let loads = LoadVector(vec![11.0, 7.0]);
        let oracle = brute_force_piecewise_oracle(&g, &p, &loads, 3, 5, 0.02).unwrap();
        let sol = solve(&g, &p, &loads, &SolveOptions::default()).unwrap();
        assert!(
            sol.t_end >= 0.99 * oracle.t_end,
            "{} vs {}",
            sol.t_end,
            oracle.t_end
        );
    }

    #[test]
    fn wrong_load_count_is_rejected() {
        let g = graph(vec![None, None]);
        let err = solve(
            &g,
            &params(),
            &LoadVector(vec![1.0]),
            &SolveOptions::default(),
        );
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }

    #[test]
    fn solution_json_has_expected_fields() {
        let g = graph(vec![None, None]);
        let sol = solve(
            &g,
            &params(),
            &LoadVector(vec![6.0, 9.0]),
            &SolveOptions {
                segments: 8,
                ..Default::default()
            },
        )
        .unwrap();
        let v: serde_json::Value = serde_json::from_str(&sol.to_json().unwrap()).unwrap();
        for key in [
            "t_end",
            "converged",
            "grid",
            "states",
            "controls",
            "violations",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["grid"].as_array().unwrap().len(), 9);
    }
}
