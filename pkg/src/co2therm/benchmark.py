"""Synthetic office benchmark: data generation, error metrics and sweeps.

The packaged ``benchmark.toml`` (plus network/prior files) encodes the
standard 8-zone layout: four single offices, two meeting rooms, a split
hallway and an ambient node.  Occupancy is piecewise constant with one
switch; boundary flows stay constant throughout.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, DataError
from .forward import (
    AirKnowns,
    PhysicalParams,
    ThermalKnowns,
    WindowSimulator,
    integrate,
)
from .network import TreeCotree, ZoneNetwork, build_network, tree_cotree_decompose
from .params import BlockLayout
from .priors import PriorModel
from .windows import (
    InferenceConfig,
    WindowPlan,
    WindowResult,
    run_moving_window,
)


@dataclass(frozen=True)
class OccupancySchedule:
    """Piecewise-constant occupancy, right-continuous at each breakpoint."""

    breakpoints: tuple[tuple[float, np.ndarray], ...]

    def __post_init__(self):
        if not self.breakpoints:
            raise ConfigError("schedule needs at least one breakpoint")
        times = [t for t, _ in self.breakpoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("breakpoint times must be strictly increasing")
        cleaned = tuple((float(t), np.asarray(v, dtype=float))
                        for t, v in self.breakpoints)
        if any(np.any(v < 0) for _, v in cleaned):
            raise ConfigError("occupancies must be non-negative")
        object.__setattr__(self, "breakpoints", cleaned)

    def occupancy_at(self, t: float) -> np.ndarray:
        if t < self.breakpoints[0][0]:
            raise DataError(f"t={t} precedes the first schedule breakpoint")
        value = self.breakpoints[0][1]
        for bt, v in self.breakpoints:
            if t >= bt:
                value = v
            else:
                break
        return value


def occupancy_at(schedule: OccupancySchedule, t: float) -> np.ndarray:
    return schedule.occupancy_at(t)


@dataclass(frozen=True)
class NoiseSpec:
    sigma_co2: float
    sigma_temp: float
    seed: int = 0

    def __post_init__(self):
        if self.sigma_co2 < 0 or self.sigma_temp < 0:
            raise ConfigError("noise scales must be non-negative")


@dataclass(frozen=True)
class Dataset:
    """Observed (and optionally noiseless) per-zone series plus ambient."""

    times: np.ndarray
    co2: np.ndarray              # (n_interior, N) observed
    temp: np.ndarray
    zone_ids: tuple[str, ...]
    ambient_co2: np.ndarray      # (N,)
    ambient_temp: np.ndarray
    noiseless_co2: np.ndarray | None = None
    noiseless_temp: np.ndarray | None = None

    def __post_init__(self):
        n = self.times.size
        shape = (len(self.zone_ids), n)
        for name in ("co2", "temp"):
            if getattr(self, name).shape != shape:
                raise DataError(f"dataset field {name} must have shape {shape}")
        for name in ("ambient_co2", "ambient_temp"):
            if getattr(self, name).shape != (n,):
                raise DataError(f"dataset field {name} must have shape ({n},)")
        for name in ("noiseless_co2", "noiseless_temp"):
            val = getattr(self, name)
            if val is not None and val.shape != shape:
                raise DataError(f"dataset field {name} must have shape {shape}")


def generate_synthetic(network: ZoneNetwork, decomp: TreeCotree,
                       schedule: OccupancySchedule, truth: PhysicalParams,
                       air: AirKnowns, thermal: ThermalKnowns,
                       duration: float, sample_dt: float, substep: float,
                       noise: NoiseSpec) -> Dataset:
    """Forward-simulate the ground truth and add Gaussian sensor noise.

    The noiseless twin is kept alongside; regenerating with a different seed
    changes only the noise.
    """
    n_out = int(round(duration / sample_dt)) + 1
    times = sample_dt * np.arange(n_out)
    traj = integrate(
        initial_co2=np.full(len(network.interior_ids),
                            float(air.ambient_co2.at(0.0))),
        initial_temp=np.full(len(network.interior_ids),
                             float(thermal.ambient_temp.at(0.0))),
        params=truth, air=air, thermal=thermal, network=network,
        decomp=decomp, times=times, substep=substep,
        occupancy_fn=schedule.occupancy_at)
    rows = traj.rows(network.interior_ids)
    clean_co2 = traj.co2[rows]
    clean_temp = traj.temp[rows]
    rng = np.random.default_rng(noise.seed)
    obs_co2 = clean_co2 + rng.standard_normal(clean_co2.shape) * noise.sigma_co2
    obs_temp = clean_temp + rng.standard_normal(clean_temp.shape) * noise.sigma_temp
    return Dataset(times=times, co2=obs_co2, temp=obs_temp,
                   zone_ids=network.interior_ids,
                   ambient_co2=np.asarray(air.ambient_co2.at(times), dtype=float),
                   ambient_temp=np.asarray(thermal.ambient_temp.at(times), dtype=float),
                   noiseless_co2=clean_co2, noiseless_temp=clean_temp)


def rmse(pred, data) -> float:
    """Root-mean-square error over all zone-time entries (field units)."""
    pred = np.asarray(pred, dtype=float)
    data = np.asarray(data, dtype=float)
    if pred.shape != data.shape:
        raise DataError(f"shape mismatch: {pred.shape} vs {data.shape}")
    return float(np.sqrt(np.mean((pred - data) ** 2)))


def nrmse(pred, data) -> float:
    """RMSE normalized by the mean absolute prediction, in percent."""
    pred = np.asarray(pred, dtype=float)
    scale = float(np.mean(np.abs(pred)))
    if scale <= 0.0:
        raise DataError("nRMSE undefined for a zero-mean prediction")
    return 100.0 * rmse(pred, data) / scale


def nrmse_zone_mean(pred, data) -> float:
    """Per-zone nRMSE averaged over zones (matrix rows)."""
    pred = np.asarray(pred, dtype=float)
    data = np.asarray(data, dtype=float)
    if pred.shape != data.shape or pred.ndim != 2:
        raise DataError("need matching 2-d zone x time matrices")
    vals = [nrmse(pred[j], data[j]) for j in range(pred.shape[0])]
    return float(np.mean(vals))


@dataclass(frozen=True)
class BenchmarkSetup:
    """Everything the packaged benchmark configuration pins down."""

    network: ZoneNetwork
    decomp: TreeCotree
    layout: BlockLayout
    air: AirKnowns
    thermal: ThermalKnowns
    truth: PhysicalParams
    schedule: OccupancySchedule
    noise: NoiseSpec
    duration: float
    sample_dt: float
    substep: float
    infer: InferenceConfig
    prior_model: PriorModel
    constants: dict
    sweep_window_sizes: tuple[int, ...]
    sweep_noise_pairs: tuple[tuple[float, float], ...]
    sweep_eval_interval: tuple[float, float]
    sweep_mode: str

    def regenerate(self, noise: NoiseSpec | None = None) -> Dataset:
        return generate_synthetic(self.network, self.decomp, self.schedule,
                                  self.truth, self.air, self.thermal,
                                  self.duration, self.sample_dt, self.substep,
                                  noise if noise is not None else self.noise)


def _require_keys(raw: dict, required: set, optional: set, where: str) -> None:
    missing = required - set(raw)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")
    unknown = set(raw) - required - optional
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def load_benchmark(path: str | Path | None = None) -> BenchmarkSetup:
    """Load a benchmark TOML plus the network/prior files it references.

    With no path, the packaged default benchmark configuration is used.
    """
    import json

    if path is None:
        root = resources.files("co2therm.configs")
        raw = tomllib.loads(root.joinpath("benchmark.toml").read_text())
        read = lambda name: root.joinpath(name).read_text()  # noqa: E731
    else:
        path = Path(path)
        raw = tomllib.loads(path.read_text())
        read = lambda name: (path.parent / name).read_text()  # noqa: E731

    _require_keys(raw, {"schema_version", "files", "constants", "truth",
                        "schedule", "simulate", "noise", "infer"},
                  {"sweep"}, "benchmark config")
    if raw["schema_version"] != 1:
        raise ConfigError(f"unsupported schema_version {raw['schema_version']}")

    _require_keys(raw["files"], {"network", "priors"}, set(), "files")
    network = build_network(json.loads(read(raw["files"]["network"])))
    decomp = tree_cotree_decompose(network, network.preferred_independent)
    layout = BlockLayout.for_network(network, decomp)
    prior_model = PriorModel.from_config(
        json.loads(read(raw["files"]["priors"])), layout)

    const = raw["constants"]
    _require_keys(const, {"ambient_temp_c", "ambient_co2_ppm",
                          "initial_temp_c", "initial_co2_ppm", "q_exh_m3s",
                          "c_exh_ppm", "q_ppl_w", "cp_air_j_per_kg_k",
                          "rho_air_kg_m3"}, set(), "constants")
    air = AirKnowns(q_exh=const["q_exh_m3s"], c_exh=const["c_exh_ppm"],
                    ambient_co2=const["ambient_co2_ppm"])
    thermal = ThermalKnowns(cp_air=const["cp_air_j_per_kg_k"],
                            rho_air=const["rho_air_kg_m3"],
                            q_ppl=const["q_ppl_w"],
                            ambient_temp=const["ambient_temp_c"])

    truth_raw = raw["truth"]
    _require_keys(truth_raw, {"independent_flows_m3s", "resistances_k_per_w",
                              "capacitances_j_per_k"}, set(), "truth")
    flows = np.asarray(truth_raw["independent_flows_m3s"], dtype=float)
    if flows.shape != (len(decomp.cotree_edges),):
        raise ConfigError("truth.independent_flows_m3s length must match the "
                          "independent edge count")
    res_map = truth_raw["resistances_k_per_w"]
    missing = [e.id for e in network.thermal_edges if e.id not in res_map]
    if missing or len(res_map) != len(network.thermal_edges):
        raise ConfigError(f"truth resistances must cover exactly the thermal "
                          f"edges (missing {missing})")
    resistances = np.array([float(res_map[e.id]) for e in network.thermal_edges])
    cap_map = truth_raw["capacitances_j_per_k"]
    missing = [z for z in network.interior_ids if z not in cap_map]
    if missing or len(cap_map) != len(network.interior_ids):
        raise ConfigError(f"truth capacitances must cover exactly the interior "
                          f"zones (missing {missing})")
    capacitances = np.array([float(cap_map[z]) for z in network.interior_ids])

    sched_raw = raw["schedule"]
    _require_keys(sched_raw, {"switch_min", "pre", "post"}, set(), "schedule")
    ids = network.interior_ids

    def _vec(d: dict) -> np.ndarray:
        bad = set(d) - set(ids)
        if bad:
            raise ConfigError(f"schedule names unknown zones {sorted(bad)}")
        return np.array([float(d.get(z, 0.0)) for z in ids])

    schedule = OccupancySchedule(breakpoints=(
        (0.0, _vec(sched_raw["pre"])),
        (60.0 * float(sched_raw["switch_min"]), _vec(sched_raw["post"]))))

    # Occupancy in the truth params is the pre-switch vector; the schedule
    # overrides it during generation.
    truth = PhysicalParams(occupancy=_vec(sched_raw["pre"]), independent_flows=flows,
                           resistances=resistances, capacitances=capacitances)

    sim_raw = raw["simulate"]
    _require_keys(sim_raw, {"duration_min", "sample_dt_s", "substep_s"},
                  set(), "simulate")
    noise_raw = raw["noise"]
    _require_keys(noise_raw, {"sigma_co2_ppm", "sigma_temp_c", "seed"},
                  set(), "noise")
    noise = NoiseSpec(sigma_co2=float(noise_raw["sigma_co2_ppm"]),
                      sigma_temp=float(noise_raw["sigma_temp_c"]),
                      seed=int(noise_raw["seed"]))

    infer_raw = raw["infer"]
    _require_keys(infer_raw, {"window_size", "step", "iterations", "burn_in"},
                  {"forecast_horizon", "target_accept", "adapt_exponent",
                   "initial_scale", "seed", "predictive_draws", "thin",
                   "map_init", "first_window_sign_scan", "scan_max_patterns",
                   "proposal_floor_fraction"},
                  "infer")
    infer = InferenceConfig(
        window_size=int(infer_raw["window_size"]), step=int(infer_raw["step"]),
        forecast_horizon=int(infer_raw.get("forecast_horizon", 0)),
        iterations=int(infer_raw["iterations"]),
        burn_in=int(infer_raw["burn_in"]),
        target_accept=float(infer_raw.get("target_accept", 0.234)),
        adapt_exponent=float(infer_raw.get("adapt_exponent", 2.0 / 3.0)),
        initial_scale=float(infer_raw.get("initial_scale", 0.01)),
        seed=int(infer_raw.get("seed", 0)),
        predictive_draws=int(infer_raw.get("predictive_draws", 500)),
        thin=int(infer_raw.get("thin", 10)),
        substep=float(sim_raw["substep_s"]),
        map_init=str(infer_raw.get("map_init", "polish")),
        first_window_sign_scan=bool(
            infer_raw.get("first_window_sign_scan", True)),
        scan_max_patterns=int(infer_raw.get("scan_max_patterns", 64)),
        proposal_floor_fraction=float(
            infer_raw.get("proposal_floor_fraction", 0.05)))

    sweep_raw = raw.get("sweep", {})
    _require_keys(sweep_raw, set(), {"window_sizes", "noise_pairs",
                                     "eval_start_min", "eval_end_min", "mode"},
                  "sweep")
    return BenchmarkSetup(
        network=network, decomp=decomp, layout=layout, air=air,
        thermal=thermal, truth=truth, schedule=schedule, noise=noise,
        duration=60.0 * float(sim_raw["duration_min"]),
        sample_dt=float(sim_raw["sample_dt_s"]),
        substep=float(sim_raw["substep_s"]), infer=infer,
        prior_model=prior_model, constants=dict(const),
        sweep_window_sizes=tuple(int(w) for w in
                                 sweep_raw.get("window_sizes", ())),
        sweep_noise_pairs=tuple((float(a), float(b)) for a, b in
                                sweep_raw.get("noise_pairs", ())),
        sweep_eval_interval=(60.0 * float(sweep_raw.get("eval_start_min", 80.0)),
                             60.0 * float(sweep_raw.get("eval_end_min", 120.0))),
        sweep_mode=str(sweep_raw.get("mode", "final_only")))


def _index_of_time(times: np.ndarray, t: float, what: str) -> int:
    idx = int(np.searchsorted(times, t - 1e-9))
    if idx >= times.size or abs(times[idx] - t) > 1e-6:
        raise ConfigError(f"{what} {t} s does not land on the sample grid")
    return idx


def sweep(setup: BenchmarkSetup, window_sizes=None, noise_pairs=None,
          eval_interval=None, mode: str | None = None,
          infer: InferenceConfig | None = None) -> list[dict]:
    """nRMSE of the verification-interval forecast per (size, noise) cell.

    Each cell regenerates the noisy dataset at its noise pair, infers on
    window(s) ending where the verification interval starts, and scores the
    posterior-mean forecast against the noiseless truth.  ``mode``
    ``"final_only"`` (default) runs just the window ending at the interval
    start; ``"chained"`` runs the full warm-started sequence up to it.
    """
    window_sizes = list(setup.sweep_window_sizes if window_sizes is None
                        else window_sizes)
    noise_pairs = list(setup.sweep_noise_pairs if noise_pairs is None
                       else noise_pairs)
    t_a, t_b = (setup.sweep_eval_interval if eval_interval is None
                else eval_interval)
    mode = setup.sweep_mode if mode is None else mode
    if mode not in ("final_only", "chained"):
        raise ConfigError(f"unknown sweep mode {mode!r}")
    base_infer = setup.infer if infer is None else infer

    rows: list[dict] = []
    cell = 0
    for size in window_sizes:
        for sig_c, sig_t in noise_pairs:
            cell += 1
            noise = NoiseSpec(sigma_co2=sig_c, sigma_temp=sig_t,
                              seed=setup.noise.seed + cell)
            dataset = setup.regenerate(noise)
            ia = _index_of_time(dataset.times, t_a, "eval interval start")
            ib = _index_of_time(dataset.times, t_b, "eval interval end")
            horizon = ib - ia + 1
            start = ia - size
            if start < 0:
                raise ConfigError(f"window size {size} does not fit before "
                                  f"the verification interval")
            cfg = replace(base_infer, window_size=size,
                          forecast_horizon=horizon,
                          seed=base_infer.seed + 1000 * cell)
            if mode == "final_only":
                plans = [WindowPlan(start_index=start, window_size=size,
                                    step=max(cfg.step, 1),
                                    forecast_horizon=horizon)]
            else:
                plans = [
                    WindowPlan(start_index=s, window_size=size,
                               step=cfg.step, forecast_horizon=horizon)
                    for s in range(start % cfg.step, start + 1, cfg.step)
                ]
            results = run_moving_window(dataset, setup.prior_model, cfg,
                                        setup.air, setup.thermal,
                                        setup.network, setup.decomp,
                                        setup.layout, plans=plans)
            final = results[-1]
            pred = final.predictive
            # Forecast part of the predictive grid covering [t_a, t_b].
            t0 = dataset.times[start]
            sel = np.isclose(pred.times[None, :] + t0,
                             dataset.times[ia:ib + 1, None], atol=1e-6).any(axis=0)
            truth_sl = slice(ia, ib + 1)
            for field, pred_mat, true_mat in (
                    ("co2", pred.co2_mean[:, sel], dataset.noiseless_co2[:, truth_sl]),
                    ("temp", pred.temp_mean[:, sel], dataset.noiseless_temp[:, truth_sl])):
                rows.append({"window_size": size, "sigma_co2": sig_c,
                             "sigma_temp": sig_t, "field": field,
                             "nrmse_pct": nrmse(pred_mat, true_mat)})
    return rows


def forecast_eval(results: list[WindowResult], dataset: Dataset,
                  horizon: int, setup: BenchmarkSetup) -> list[dict]:
    """Mean-over-zones nRMSE of the posterior-mean forecast after each window.

    Windows whose horizon runs past the dataset are truncated and flagged;
    windows with no forecast samples are skipped.
    """
    if horizon < 1:
        raise DataError("forecast horizon must be at least 1 sample")
    rows: list[dict] = []
    for idx, result in enumerate(results):
        end = result.plan.start_index + result.plan.window_size
        avail = min(horizon, dataset.times.size - end)
        if avail < 1:
            continue
        start = result.plan.start_index
        t0 = dataset.times[start]
        times = dataset.times[start:end + avail] - t0
        plan = WindowPlan(start_index=start,
                          window_size=result.plan.window_size,
                          step=result.plan.step, forecast_horizon=avail)
        w_air, w_thermal = _window_knowns_for(dataset, plan, setup)
        sim = WindowSimulator(setup.network, setup.decomp, setup.layout,
                              w_air, w_thermal, times, setup.infer.substep)
        co2, temp = sim.simulate_flat(result.posterior_mean.flat())
        sl = slice(end, end + avail)
        for field, pred, obs in (("co2", co2[:, -avail:], dataset.co2[:, sl]),
                                 ("temp", temp[:, -avail:], dataset.temp[:, sl])):
            rows.append({"window_index": idx,
                         "window_end_time_s": float(dataset.times[end - 1]),
                         "field": field,
                         "mean_nrmse_pct": nrmse_zone_mean(pred, obs),
                         "truncated": bool(avail < horizon)})
    return rows


def _window_knowns_for(dataset: Dataset, plan: WindowPlan,
                       setup: BenchmarkSetup):
    from .windows import window_knowns

    return window_knowns(dataset, plan, setup.air, setup.thermal)


def window_data_for(dataset: Dataset, start: int, size: int):
    """Convenience slice used by scripts and tests."""
    from .windows import slice_window

    return slice_window(dataset, WindowPlan(start_index=start,
                                            window_size=size, step=size))
