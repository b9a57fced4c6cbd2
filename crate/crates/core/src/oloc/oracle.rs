use serde::{Deserialize, Serialize};

use crate::config::ConfigGraph;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::thermal::{
    simulate_endurance, ConstantFlows, FlowPolicy, LoadVector, PhysicsGraph, ThermalParams,
};

use super::transcription::T_END_MAX;

/// Largest number of profiles the oracle will evaluate.
pub const ORACLE_CAP: f64 = 1e6;

/// Piecewise-constant flow targets followed at the slew limit.
///
/// Segment `j` starts at `j · segment_length`; the last segment never ends.
/// The flows begin at the first targets and, after each boundary, move toward
/// the new targets at the slew limit.
#[derive(Debug, Clone)]
pub struct RateLimitedSteps<T> {
    segment_length: T,
    slew: T,
    targets: Vec<Vec<T>>,
    /// Flow values at each segment start.
    starts: Vec<Vec<T>>,
}

impl<T: Real> RateLimitedSteps<T> {
    pub fn new(targets: Vec<Vec<T>>, segment_length: T, slew: T) -> Self {
        let mut starts = Vec::with_capacity(targets.len());
        if let Some(first) = targets.first() {
            starts.push(first.clone());
        }
        for j in 1..targets.len() {
            let prev = &starts[j - 1];
            let next = track(prev, &targets[j - 1], slew, segment_length);
            starts.push(next);
        }
        Self {
            segment_length,
            slew,
            targets,
            starts,
        }
    }

    pub fn targets(&self) -> &[Vec<T>] {
        &self.targets
    }
}

fn track<T: Real>(from: &[T], to: &[T], slew: T, elapsed: T) -> Vec<T> {
    from.iter()
        .zip(to)
        .map(|(&a, &b)| {
            let reach = slew * elapsed;
            if b > a {
                (a + reach).min(b)
            } else {
                (a - reach).max(b)
            }
        })
        .collect()
}

impl<T: Real> FlowPolicy<T> for RateLimitedSteps<T> {
    fn flows_at(&self, t: T, out: &mut [T]) {
        if self.targets.is_empty() {
            return;
        }
        let k = self.targets.len();
        let seg = (t / self.segment_length)
            .floor()
            .to_usize()
            .unwrap_or(0)
            .min(k - 1);
        let elapsed = (t - T::from_usize(seg).unwrap() * self.segment_length).max(T::zero());
        let v = track(&self.starts[seg], &self.targets[seg], self.slew, elapsed);
        out.copy_from_slice(&v);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct OracleResult<T: Real> {
    pub t_end: T,
    /// Target independent flows per segment, kg/s.
    pub levels: Vec<Vec<T>>,
    pub segment_length: T,
    pub evaluated: usize,
}

/// Exhaustive search over piecewise-constant independent-flow profiles with
/// `levels` evenly spaced values in `[0, ṁ_p]` on `segments` segments. The
/// segment length is the equal-split endurance divided by `segments`. Ties go
/// to the first profile in lexicographic level order.
pub fn brute_force_piecewise_oracle<T: Real>(
    g: &ConfigGraph,
    params: &ThermalParams<T>,
    loads: &LoadVector<T>,
    segments: usize,
    levels: usize,
    dt: T,
) -> Result<OracleResult<T>> {
    if segments == 0 || levels < 2 {
        return Err(Error::Validation(
            "oracle needs >= 1 segment and >= 2 levels".into(),
        ));
    }
    let pg = PhysicsGraph::build(g, params)?;
    let dof = pg.n_controls();
    let size = (levels as f64).powi((dof * segments) as i32);
    if size > ORACLE_CAP {
        return Err(Error::SearchSpace {
            size,
            cap: ORACLE_CAP,
        });
    }
    let cap = T::lit(T_END_MAX);
    let pump = params.pump_flow;
    let equal = pg.layout().equal_split(g, pump);
    let base = simulate_endurance(&pg, loads, &ConstantFlows(equal), cap, dt)?.unwrap_or(cap);
    let seg_len = base / T::from_usize(segments).unwrap();

    if dof == 0 {
        return Ok(OracleResult {
            t_end: base,
            levels: vec![Vec::new(); segments],
            segment_length: seg_len,
            evaluated: 1,
        });
    }

    let step = pump / T::from_usize(levels - 1).unwrap();
    let mut admissible = Vec::new();
    let mut idx = vec![0usize; dof];
    loop {
        let q: Vec<T> = idx
            .iter()
            .map(|&i| step * T::from_usize(i).unwrap())
            .collect();
        if pg.layout().bound_violation(pump, &q) <= T::lit(1e-12) {
            admissible.push(q);
        }
        if !odometer(&mut idx, levels) {
            break;
        }
    }

    let mut best: Option<(T, Vec<Vec<T>>)> = None;
    let mut evaluated = 0;
    let mut pick = vec![0usize; segments];
    loop {
        let targets: Vec<Vec<T>> = pick.iter().map(|&i| admissible[i].clone()).collect();
        let policy = RateLimitedSteps::new(targets, seg_len, params.slew_limit);
        let t = simulate_endurance(&pg, loads, &policy, cap, dt)?.unwrap_or(cap);
        evaluated += 1;
        if best.as_ref().is_none_or(|(b, _)| t > *b) {
            best = Some((t, policy.targets().to_vec()));
        }
        if !odometer_msd(&mut pick, admissible.len()) {
            break;
        }
    }
    let (t_end, levels) = best.expect("at least one admissible profile");
    Ok(OracleResult {
        t_end,
        levels,
        segment_length: seg_len,
        evaluated,
    })
}

// Little-endian counter; false once it wraps.
fn odometer(idx: &mut [usize], base: usize) -> bool {
    for d in idx.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

// Counter with the first digit most significant.
fn odometer_msd(idx: &mut [usize], base: usize) -> bool {
    for d in idx.iter_mut().rev() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}
