use serde::Serialize;

use super::layout::FlowLayout;
use super::params::{LoadVector, ThermalParams};
use crate::config::ConfigGraph;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ThermalNode {
    CphxWall(usize),
    CphxFluid(usize),
    TankFluid,
    LlhxWall,
    LlhxHotFluid,
    LlhxColdFluid,
}

/// Which bound and initial value a node uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundClass {
    Wall,
    Fluid,
    SinkSide,
}

impl ThermalNode {
    pub fn label(&self) -> String {
        match self {
            Self::CphxWall(i) => format!("wall{}", i + 1),
            Self::CphxFluid(i) => format!("fluid{}", i + 1),
            Self::TankFluid => "tank".into(),
            Self::LlhxWall => "llhx_wall".into(),
            Self::LlhxHotFluid => "llhx_hot".into(),
            Self::LlhxColdFluid => "llhx_cold".into(),
        }
    }

    pub fn bound_class(&self) -> BoundClass {
        match self {
            Self::CphxWall(_) | Self::LlhxWall => BoundClass::Wall,
            Self::CphxFluid(_) | Self::TankFluid | Self::LlhxHotFluid => BoundClass::Fluid,
            Self::LlhxColdFluid => BoundClass::SinkSide,
        }
    }
}

/// Flow carried by an advective stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FlowSource {
    Pump,
    Sink,
    Edge(usize),
}

/// Advection from `from` (a dynamic node, or the sink reservoir when `None`)
/// into `to`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Stream {
    pub flow: FlowSource,
    pub from: Option<usize>,
    pub to: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(bound = "")]
pub struct Convection<T: Real> {
    pub a: usize,
    pub b: usize,
    pub conductance: T,
}

/// Dynamic temperatures plus independent branch flows.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct StateVector<T: Real> {
    pub temps: Vec<T>,
    pub flows: Vec<T>,
}

/// Typed thermal network for one configuration.
///
/// Dynamic node order: CPHX walls `0..n`, CPHX fluids `n..2n`, tank `2n`,
/// LLHX wall `2n+1`, LLHX hot side `2n+2`, LLHX cold side `2n+3`. Advection
/// runs tank → branch chains → merge → LLHX hot side → tank; the cold side
/// is fed from the sink reservoir. The merge is expressed through one stream
/// per leaf into the hot side, which is the flow-weighted mixing temperature
/// times the merged flow.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "")]
pub struct PhysicsGraph<T: Real> {
    n_cphx: usize,
    nodes: Vec<ThermalNode>,
    capacity: Vec<T>,
    convection: Vec<Convection<T>>,
    streams: Vec<Stream>,
    /// Stream index → coefficient row over `[pump, indp.., sink]` (the routing
    /// operator `Z`).
    routing: Vec<Vec<T>>,
    layout: FlowLayout<T>,
    params: ThermalParams<T>,
    leaves: Vec<usize>,
}

/// Total merged flow below which the mixing temperature falls back to the
/// plain mean of the branch exits.
pub const MERGE_FLOW_EPS: f64 = 1e-9;

impl<T: Real> PhysicsGraph<T> {
    pub fn build(g: &ConfigGraph, params: &ThermalParams<T>) -> Result<Self> {
        params.validate()?;
        let n = g.n_nodes();
        if n == 0 {
            return Err(Error::Validation("configuration has no CPHX".into()));
        }
        let layout = FlowLayout::new(g);
        let wall = |i: usize| i;
        let fluid = |i: usize| n + i;
        let tank = 2 * n;
        let lw = 2 * n + 1;
        let hot = 2 * n + 2;
        let cold = 2 * n + 3;

        let mut nodes = Vec::with_capacity(2 * n + 4);
        nodes.extend((0..n).map(ThermalNode::CphxWall));
        nodes.extend((0..n).map(ThermalNode::CphxFluid));
        nodes.extend([
            ThermalNode::TankFluid,
            ThermalNode::LlhxWall,
            ThermalNode::LlhxHotFluid,
            ThermalNode::LlhxColdFluid,
        ]);

        let p = params;
        let mut capacity = vec![p.cphx_wall_mass * p.c_wall; n];
        capacity.extend(std::iter::repeat_n(p.cphx_fluid_mass * p.c_fluid, n));
        capacity.extend([
            p.tank_fluid_mass * p.c_fluid,
            p.llhx_wall_mass * p.c_wall,
            p.llhx_hot_fluid_mass * p.c_fluid,
            p.llhx_cold_fluid_mass * p.c_fluid,
        ]);

        let mut convection: Vec<Convection<T>> = (0..n)
            .map(|i| Convection {
                a: wall(i),
                b: fluid(i),
                conductance: p.ha_cphx,
            })
            .collect();
        convection.push(Convection {
            a: hot,
            b: lw,
            conductance: p.ha_llhx_hot,
        });
        convection.push(Convection {
            a: lw,
            b: cold,
            conductance: p.ha_llhx_cold,
        });

        let mut streams = Vec::new();
        for v in 0..n {
            let from = g.parent(v).map_or(tank, fluid);
            streams.push(Stream {
                flow: FlowSource::Edge(v),
                from: Some(from),
                to: fluid(v),
            });
        }
        let leaves: Vec<usize> = (0..n).filter(|&v| g.is_leaf(v)).collect();
        for &v in &leaves {
            streams.push(Stream {
                flow: FlowSource::Edge(v),
                from: Some(fluid(v)),
                to: hot,
            });
        }
        streams.push(Stream {
            flow: FlowSource::Pump,
            from: Some(hot),
            to: tank,
        });
        streams.push(Stream {
            flow: FlowSource::Sink,
            from: None,
            to: cold,
        });

        let width = 2 + layout.n_independent();
        let routing = streams
            .iter()
            .map(|s| {
                let mut row = vec![T::zero(); width];
                match s.flow {
                    FlowSource::Pump => row[0] = T::one(),
                    FlowSource::Sink => row[width - 1] = T::one(),
                    FlowSource::Edge(e) => row[..width - 1].copy_from_slice(layout.edge_row(e)),
                }
                row
            })
            .collect();

        Ok(Self {
            n_cphx: n,
            nodes,
            capacity,
            convection,
            streams,
            routing,
            layout,
            params: params.clone(),
            leaves,
        })
    }

    pub fn n_cphx(&self) -> usize {
        self.n_cphx
    }

    /// Number of dynamic temperatures (`2n + 4`).
    pub fn n_temps(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_controls(&self) -> usize {
        self.layout.n_independent()
    }

    pub fn nodes(&self) -> &[ThermalNode] {
        &self.nodes
    }

    pub fn capacity(&self) -> &[T] {
        &self.capacity
    }

    pub fn convection(&self) -> &[Convection<T>] {
        &self.convection
    }

    pub fn streams(&self) -> &[Stream] {
        &self.streams
    }

    /// Routing operator `Z`: one row per stream over `[pump, indp.., sink]`.
    pub fn routing(&self) -> &[Vec<T>] {
        &self.routing
    }

    pub fn layout(&self) -> &FlowLayout<T> {
        &self.layout
    }

    pub fn params(&self) -> &ThermalParams<T> {
        &self.params
    }

    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn wall_index(&self, cphx: usize) -> usize {
        cphx
    }

    pub fn fluid_index(&self, cphx: usize) -> usize {
        self.n_cphx + cphx
    }

    pub fn initial_temps(&self) -> Vec<T> {
        let p = &self.params;
        self.nodes
            .iter()
            .map(|n| match n.bound_class() {
                BoundClass::Wall => p.wall_temp0,
                BoundClass::Fluid => p.fluid_temp0,
                BoundClass::SinkSide => p.sink_side_temp0,
            })
            .collect()
    }

    pub fn upper_bounds(&self) -> Vec<T> {
        let p = &self.params;
        self.nodes
            .iter()
            .map(|n| match n.bound_class() {
                BoundClass::Wall => p.wall_temp_max,
                BoundClass::Fluid => p.fluid_temp_max,
                BoundClass::SinkSide => p.sink_side_temp_max,
            })
            .collect()
    }

    /// All stream flows: `Z · [pump; indp; sink]`.
    pub fn stream_flows(&self, indp: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.streams.len()];
        self.stream_flows_into(indp, &mut out);
        out
    }

    fn stream_flows_into(&self, indp: &[T], out: &mut [T]) {
        let p = &self.params;
        for (row, slot) in self.routing.iter().zip(out.iter_mut()) {
            let last = row.len() - 1;
            let mut f = row[0] * p.pump_flow + row[last] * p.sink_flow;
            for (c, &q) in row[1..last].iter().zip(indp) {
                if *c != T::zero() {
                    f += *c * q;
                }
            }
            *slot = f;
        }
    }

    /// Flow-weighted temperature of the merged branch exits.
    pub fn mixed_temperature(&self, temps: &[T], indp: &[T]) -> T {
        let edges = self.layout.edge_flows(self.params.pump_flow, indp);
        let total: T = self.leaves.iter().map(|&v| edges[v]).sum();
        if total.abs() < T::lit(MERGE_FLOW_EPS) {
            let k = T::from_usize(self.leaves.len()).unwrap();
            self.leaves
                .iter()
                .map(|&v| temps[self.fluid_index(v)])
                .sum::<T>()
                / k
        } else {
            self.leaves
                .iter()
                .map(|&v| edges[v] * temps[self.fluid_index(v)])
                .sum::<T>()
                / total
        }
    }

    /// `dT/dt` in K/s for every dynamic node. `loads_w` is in watts.
    pub fn derivative_into(&self, temps: &[T], indp: &[T], loads_w: &[T], out: &mut [T]) {
        let mut flows = [T::zero(); 64];
        let flows: &mut [T] = if self.streams.len() <= 64 {
            &mut flows[..self.streams.len()]
        } else {
            return self.derivative_alloc(temps, indp, loads_w, out);
        };
        self.stream_flows_into(indp, flows);
        self.heat_rates(temps, flows, loads_w, out);
        for (o, c) in out.iter_mut().zip(&self.capacity) {
            *o /= *c;
        }
    }

    fn derivative_alloc(&self, temps: &[T], indp: &[T], loads_w: &[T], out: &mut [T]) {
        let flows = self.stream_flows(indp);
        self.heat_rates(temps, &flows, loads_w, out);
        for (o, c) in out.iter_mut().zip(&self.capacity) {
            *o /= *c;
        }
    }

    /// Net heat rate into every node (W), before dividing by capacity.
    fn heat_rates(&self, temps: &[T], flows: &[T], loads_w: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
        for c in &self.convection {
            let q = c.conductance * (temps[c.a] - temps[c.b]);
            out[c.b] += q;
            out[c.a] -= q;
        }
        let cf = self.params.c_fluid;
        for (s, &f) in self.streams.iter().zip(flows) {
            let upstream = s.from.map_or(self.params.sink_temp, |u| temps[u]);
            out[s.to] += f * cf * (upstream - temps[s.to]);
        }
        for (i, &w) in loads_w.iter().enumerate() {
            out[self.wall_index(i)] += w;
        }
    }

    pub fn derivative(&self, state: &StateVector<T>, loads: &LoadVector<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_temps()];
        self.derivative_into(&state.temps, &state.flows, &loads.watts(), &mut out);
        out
    }

    /// Jacobians of `dT/dt` with respect to temperatures (row-major,
    /// `n_temps × n_temps`) and independent flows (`n_temps × n_controls`).
    pub fn jacobian_into(&self, temps: &[T], indp: &[T], jt: &mut [T], jq: &mut [T]) {
        let nt = self.n_temps();
        let nq = self.n_controls();
        jt.iter_mut().for_each(|x| *x = T::zero());
        jq.iter_mut().for_each(|x| *x = T::zero());
        for c in &self.convection {
            let g = c.conductance;
            jt[c.b * nt + c.b] -= g / self.capacity[c.b];
            jt[c.b * nt + c.a] += g / self.capacity[c.b];
            jt[c.a * nt + c.a] -= g / self.capacity[c.a];
            jt[c.a * nt + c.b] += g / self.capacity[c.a];
        }
        let cf = self.params.c_fluid;
        let flows = self.stream_flows(indp);
        for ((s, &f), row) in self.streams.iter().zip(&flows).zip(&self.routing) {
            let cap = self.capacity[s.to];
            jt[s.to * nt + s.to] -= f * cf / cap;
            if let Some(u) = s.from {
                jt[s.to * nt + u] += f * cf / cap;
            }
            let upstream = s.from.map_or(self.params.sink_temp, |u| temps[u]);
            let gap = cf * (upstream - temps[s.to]) / cap;
            for j in 0..nq {
                let z = row[1 + j];
                if z != T::zero() {
                    jq[s.to * nq + j] += z * gap;
                }
            }
        }
    }

    /// Energy balance at the derivative level: returns
    /// `(Σ C_i dT_i/dt, Σ P + ṁ_t c_f (T^t − T_cold))`. Internal advection and
    /// convection cancel, so both sides agree to rounding.
    pub fn energy_balance(&self, temps: &[T], indp: &[T], loads_w: &[T]) -> (T, T) {
        let mut d = vec![T::zero(); self.n_temps()];
        self.derivative_into(temps, indp, loads_w, &mut d);
        let stored: T = d.iter().zip(&self.capacity).map(|(&x, &c)| x * c).sum();
        let p = &self.params;
        let cold = temps[2 * self.n_cphx + 3];
        let external =
            loads_w.iter().copied().sum::<T>() + p.sink_flow * p.c_fluid * (p.sink_temp - cold);
        (stored, external)
    }
}
