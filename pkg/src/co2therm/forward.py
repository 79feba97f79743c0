"""Coupled CO2/temperature balance evaluation and forward integration.

The CO2 field is purely advective with an occupancy source; the thermal
field adds conduction through the resistance edges and a per-person heat
source.  Both share the same flow field and occupancy, so they are
integrated jointly with a fixed-step RK4 scheme.  Boundary (ambient) zones
carry prescribed states, held piecewise-constant between the samples of the
ambient series.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._backend import simulate_coupled
from .errors import ConfigError
from .network import (
    FlowAssignment,
    TreeCotree,
    ZoneNetwork,
    dependent_flow_matrix,
)


def macaulay(x: float) -> float:
    """Positive-part bracket: x for x >= 0, else 0."""
    return x if x >= 0.0 else 0.0


@dataclass(frozen=True)
class AmbientSeries:
    """Piecewise-constant boundary signal (a scalar is held forever)."""

    times: np.ndarray
    values: np.ndarray

    @classmethod
    def from_value(cls, value) -> "AmbientSeries":
        if np.isscalar(value):
            return cls(times=np.array([0.0]), values=np.array([float(value)]))
        if isinstance(value, AmbientSeries):
            return value
        times, values = value
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or times.size == 0:
            raise ConfigError("ambient series needs matching 1-d times/values")
        if np.any(np.diff(times) <= 0):
            raise ConfigError("ambient series times must be strictly increasing")
        return cls(times=times, values=values)

    def at(self, t) -> np.ndarray:
        """Value of the active piece; held at the last sample beyond the end."""
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1,
                      0, self.values.size - 1)
        return self.values[idx]


@dataclass(frozen=True)
class AirKnowns:
    """Known inputs of the CO2 balance."""

    q_exh: float          # exhalation flow per person [m^3/s]
    c_exh: float          # exhaled CO2 volume fraction [ppm]
    ambient_co2: AmbientSeries

    def __post_init__(self):
        if self.q_exh <= 0 or self.c_exh <= 0:
            raise ConfigError("q_exh and c_exh must be positive")
        object.__setattr__(self, "ambient_co2",
                           AmbientSeries.from_value(self.ambient_co2))


@dataclass(frozen=True)
class ThermalKnowns:
    """Known inputs of the thermal balance."""

    cp_air: float         # [J/(kg K)]
    rho_air: float        # [kg/m^3]
    q_ppl: float          # sensible heat per person [W]
    ambient_temp: AmbientSeries

    def __post_init__(self):
        if self.cp_air <= 0 or self.rho_air <= 0 or self.q_ppl <= 0:
            raise ConfigError("cp_air, rho_air and q_ppl must be positive")
        object.__setattr__(self, "ambient_temp",
                           AmbientSeries.from_value(self.ambient_temp))


@dataclass(frozen=True)
class PhysicalParams:
    """Inferred physical parameters of one forward evaluation."""

    occupancy: np.ndarray          # persons per interior zone
    independent_flows: np.ndarray  # [m^3/s], cotree order
    resistances: np.ndarray        # [K/W] per thermal edge
    capacitances: np.ndarray       # [J/K] per interior zone

    def __post_init__(self):
        for name in ("occupancy", "independent_flows", "resistances",
                     "capacitances"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=float))
        if np.any(self.occupancy < 0):
            raise ConfigError("occupancy must be non-negative")
        if np.any(self.resistances <= 0) or np.any(self.capacitances <= 0):
            raise ConfigError("resistances and capacitances must be positive")


@dataclass(frozen=True)
class Trajectory:
    """Per-zone CO2 [ppm] and temperature [degC] series on a shared grid."""

    times: np.ndarray
    co2: np.ndarray    # (n_zones, n_times)
    temp: np.ndarray   # (n_zones, n_times)
    zone_ids: tuple[str, ...]

    def __post_init__(self):
        n_z, n_t = len(self.zone_ids), self.times.size
        if self.co2.shape != (n_z, n_t) or self.temp.shape != (n_z, n_t):
            raise ConfigError("trajectory matrices must be zones x times")

    def rows(self, zone_ids) -> np.ndarray:
        index = {z: i for i, z in enumerate(self.zone_ids)}
        return np.array([index[z] for z in zone_ids])


def co2_rhs(state, flows: FlowAssignment, params: PhysicalParams,
            knowns: AirKnowns, network: ZoneNetwork) -> np.ndarray:
    """CO2 rate [ppm/s] per interior zone; boundary states are prescribed.

    Reference implementation of the upwind balance; the integrator uses the
    kernel backends, which are tested against this function.
    """
    state = np.asarray(state, dtype=float)
    occ = dict(zip(network.interior_ids, params.occupancy))
    rates = []
    for zid in network.interior_ids:
        i = network.zone_index[zid]
        zone = network.zones[i]
        total = occ[zid] * knowns.q_exh * knowns.c_exh
        for e in network.flow_edges_at(zid):
            a = network.orientation(e, zid)
            qe = flows.flows[e.id]
            j = network.zone_index[e.dst if e.src == zid else e.src]
            total += macaulay(-a * qe) * state[j] - macaulay(a * qe) * state[i]
        rates.append(total / zone.volume)
    return np.array(rates)


def thermal_rhs(state, flows: FlowAssignment, params: PhysicalParams,
                knowns: ThermalKnowns, network: ZoneNetwork) -> np.ndarray:
    """Temperature rate [degC/s] per interior zone."""
    state = np.asarray(state, dtype=float)
    occ = dict(zip(network.interior_ids, params.occupancy))
    caps = dict(zip(network.interior_ids, params.capacitances))
    res = dict(zip((e.id for e in network.thermal_edges), params.resistances))
    rho_cp = knowns.rho_air * knowns.cp_air
    rates = []
    for zid in network.interior_ids:
        i = network.zone_index[zid]
        total = occ[zid] * knowns.q_ppl
        for e in network.thermal_edges:
            if zid not in (e.a, e.b):
                continue
            j = network.zone_index[e.b if e.a == zid else e.a]
            total += (state[j] - state[i]) / res[e.id]
        for e in network.flow_edges_at(zid):
            a = network.orientation(e, zid)
            qe = flows.flows[e.id]
            j = network.zone_index[e.dst if e.src == zid else e.src]
            total += rho_cp * (macaulay(-a * qe) * state[j]
                               - macaulay(a * qe) * state[i])
        rates.append(total / caps[zid])
    return np.array(rates)


class SimContext:
    """Precomputed topology arrays for repeated forward evaluations."""

    def __init__(self, network: ZoneNetwork, decomp: TreeCotree):
        self.network = network
        self.decomp = decomp
        zi = network.zone_index
        self.n_zones = len(network.zones)
        self.flow_src = np.array([zi[e.src] for e in network.flow_edges],
                                 dtype=np.int32)
        self.flow_dst = np.array([zi[e.dst] for e in network.flow_edges],
                                 dtype=np.int32)
        self.th_a = np.array([zi[e.a] for e in network.thermal_edges],
                             dtype=np.int32)
        self.th_b = np.array([zi[e.b] for e in network.thermal_edges],
                             dtype=np.int32)
        self.is_boundary = np.array(
            [1 if z.kind == "boundary" else 0 for z in network.zones],
            dtype=np.uint8)
        self.interior_cols = np.array(
            [zi[z] for z in network.interior_ids], dtype=np.int64)
        self.inv_vol = np.zeros(self.n_zones)
        for z in network.zones:
            if z.kind == "interior":
                self.inv_vol[zi[z.id]] = 1.0 / z.volume

    @cached_property
    def flow_map(self) -> np.ndarray:
        return dependent_flow_matrix(self.network, self.decomp)


def _substep_grid(times: np.ndarray, substep: float):
    dts = np.diff(times)
    if np.any(dts <= 0):
        raise ConfigError("output time grid must be strictly increasing")
    if substep <= 0:
        raise ConfigError("substep must be positive")
    n_sub = np.maximum(np.rint(dts / substep).astype(np.int64), 1)
    if np.any(np.abs(n_sub * substep - dts) > 1e-9 * np.maximum(dts, 1.0)):
        raise ConfigError("substep must divide every output interval")
    starts = []
    for k, t0 in enumerate(times[:-1]):
        starts.append(t0 + substep * np.arange(n_sub[k]))
    sub_times = np.concatenate(starts) if starts else np.empty(0)
    return n_sub, sub_times


def integrate(initial_co2, initial_temp, params: PhysicalParams,
              air: AirKnowns, thermal: ThermalKnowns, network: ZoneNetwork,
              decomp: TreeCotree, times, substep: float,
              occupancy_fn=None, context: SimContext | None = None) -> Trajectory:
    """Integrate both fields over ``times``, sampling exactly at the grid.

    ``occupancy_fn`` (t -> persons per interior zone) overrides the constant
    occupancy in ``params``; it is evaluated at each substep start, so
    right-continuous schedules switch exactly on aligned grid points.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 1:
        raise ConfigError("times must be a non-empty 1-d grid")
    ctx = context if context is not None else SimContext(network, decomp)
    n_sub, sub_times = _substep_grid(times, substep)
    n_steps = sub_times.size
    n_int = len(network.interior_ids)

    initial_co2 = np.asarray(initial_co2, dtype=float)
    initial_temp = np.asarray(initial_temp, dtype=float)
    if initial_co2.shape != (n_int,) or initial_temp.shape != (n_int,):
        raise ConfigError("initial states must cover every interior zone")

    if n_steps == 0:
        occ_steps = np.zeros((1, n_int))
    elif occupancy_fn is None:
        occ_steps = np.broadcast_to(params.occupancy, (n_steps, n_int))
    else:
        occ_steps = np.array([occupancy_fn(t) for t in sub_times], dtype=float)
        if occ_steps.shape != (n_steps, n_int):
            raise ConfigError("occupancy_fn must return one value per interior zone")

    occ_zones = np.zeros((max(n_steps, 1), ctx.n_zones))
    occ_zones[:, ctx.interior_cols] = occ_steps
    occ_zones = np.ascontiguousarray(occ_zones)

    amb_c = np.ascontiguousarray(air.ambient_co2.at(sub_times)) if n_steps \
        else np.zeros(1)
    amb_t = np.ascontiguousarray(thermal.ambient_temp.at(sub_times)) if n_steps \
        else np.zeros(1)

    q_all = ctx.flow_map @ params.independent_flows
    cond = 1.0 / params.resistances
    inv_cap = np.zeros(ctx.n_zones)
    inv_cap[ctx.interior_cols] = 1.0 / params.capacitances

    c_init = np.zeros(ctx.n_zones)
    t_init = np.zeros(ctx.n_zones)
    c_init[ctx.interior_cols] = initial_co2
    t_init[ctx.interior_cols] = initial_temp
    boundary = ctx.is_boundary.astype(bool)
    c_init[boundary] = air.ambient_co2.at(times[0])
    t_init[boundary] = thermal.ambient_temp.at(times[0])

    out_c = np.empty((times.size, ctx.n_zones))
    out_t = np.empty((times.size, ctx.n_zones))
    simulate_coupled(c_init, t_init, ctx.flow_src, ctx.flow_dst,
                     np.ascontiguousarray(q_all), ctx.th_a, ctx.th_b,
                     np.ascontiguousarray(cond), ctx.inv_vol, inv_cap,
                     ctx.is_boundary, occ_zones, amb_c, amb_t, n_sub,
                     float(substep), air.q_exh * air.c_exh, thermal.q_ppl,
                     thermal.rho_air * thermal.cp_air, out_c, out_t)

    # Boundary rows carry the prescribed series at the output instants.
    out_c[:, boundary] = air.ambient_co2.at(times)[:, None]
    out_t[:, boundary] = thermal.ambient_temp.at(times)[:, None]
    return Trajectory(times=times, co2=np.ascontiguousarray(out_c.T),
                      temp=np.ascontiguousarray(out_t.T),
                      zone_ids=tuple(z.id for z in network.zones))


def forward_co2(params: PhysicalParams, air: AirKnowns,
                thermal: ThermalKnowns, network: ZoneNetwork,
                decomp: TreeCotree, initial_co2, initial_temp, times,
                substep: float, **kw) -> Trajectory:
    """CO2 forward map; runs the joint integration and returns it whole."""
    return integrate(initial_co2, initial_temp, params, air, thermal,
                     network, decomp, times, substep, **kw)


def forward_thermal(params: PhysicalParams, air: AirKnowns,
                    thermal: ThermalKnowns, network: ZoneNetwork,
                    decomp: TreeCotree, initial_co2, initial_temp, times,
                    substep: float, **kw) -> Trajectory:
    """Thermal forward map; temperature shares flows/occupancy with CO2."""
    return integrate(initial_co2, initial_temp, params, air, thermal,
                     network, decomp, times, substep, **kw)


class WindowSimulator:
    """Repeated fixed-grid simulation of flat parameter vectors.

    Precomputes every topology- and grid-dependent array once so the
    per-evaluation cost inside MCMC stays close to the kernel runtime.
    Returns interior-zone matrices shaped (n_interior, n_times).
    """

    def __init__(self, network: ZoneNetwork, decomp: TreeCotree, layout,
                 air: AirKnowns, thermal: ThermalKnowns, times, substep: float):
        self.ctx = SimContext(network, decomp)
        self.layout = layout
        self.slices = layout.slices()
        self.times = np.asarray(times, dtype=float)
        self.substep = float(substep)
        self.n_sub, self.sub_times = _substep_grid(self.times, substep)
        n_steps = max(self.sub_times.size, 1)
        self.amb_c = (np.array(air.ambient_co2.at(self.sub_times), dtype=float)
                      if self.sub_times.size else np.zeros(1))
        self.amb_t = (np.array(thermal.ambient_temp.at(self.sub_times), dtype=float)
                      if self.sub_times.size else np.zeros(1))
        self.n_steps = n_steps
        self.src_co2 = air.q_exh * air.c_exh
        self.src_heat = thermal.q_ppl
        self.rho_cp = thermal.rho_air * thermal.cp_air
        self.amb_c_out = air.ambient_co2.at(self.times)
        self.amb_t_out = thermal.ambient_temp.at(self.times)
        self.flow_map = self.ctx.flow_map
        self.n_calls = 0

    def simulate_flat(self, flat: np.ndarray):
        """Simulate one flat theta; returns (co2, temp) interior matrices."""
        self.n_calls += 1
        ctx = self.ctx
        sl = self.slices

        occ_zones = np.zeros((self.n_steps, ctx.n_zones))
        occ_zones[:, ctx.interior_cols] = flat[sl["occupancy"]]
        q_all = self.flow_map @ flat[sl["flows"]]
        cond = 1.0 / flat[sl["resistances"]]
        inv_cap = np.zeros(ctx.n_zones)
        inv_cap[ctx.interior_cols] = 1.0 / flat[sl["capacitances"]]

        c_init = np.zeros(ctx.n_zones)
        t_init = np.zeros(ctx.n_zones)
        c_init[ctx.interior_cols] = flat[sl["co2_init"]]
        t_init[ctx.interior_cols] = flat[sl["temp_init"]]

        out_c = np.empty((self.times.size, ctx.n_zones))
        out_t = np.empty((self.times.size, ctx.n_zones))
        simulate_coupled(c_init, t_init, ctx.flow_src, ctx.flow_dst,
                         np.ascontiguousarray(q_all), ctx.th_a, ctx.th_b,
                         np.ascontiguousarray(cond), ctx.inv_vol, inv_cap,
                         ctx.is_boundary, occ_zones, self.amb_c, self.amb_t,
                         self.n_sub, self.substep, self.src_co2,
                         self.src_heat, self.rho_cp, out_c, out_t)
        return out_c[:, ctx.interior_cols].T, out_t[:, ctx.interior_cols].T
