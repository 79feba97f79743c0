"""Command-line driver: simulate, infer, forecast, sweep, calibrate, evaluate.

Every run writes a ``run_manifest.json`` (config hashes, seeds, versions,
backend) into its output directory; manifests carry no timestamps so equal
inputs reproduce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, io
from .benchmark import forecast_eval, load_benchmark, nrmse, rmse, sweep
from .errors import Co2thermError
from .windows import make_plans, run_moving_window

#: Default output directory when --out is omitted.
OUT_ENV_VAR = "CO2THERM_OUT"


def _ensure_outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve_out(args) -> str:
    out = getattr(args, "out", None) or os.environ.get(OUT_ENV_VAR)
    if not out:
        raise Co2thermError(
            f"no output location: pass --out or set {OUT_ENV_VAR}")
    return out


def _cmd_simulate(args) -> int:
    setup = load_benchmark(args.config)
    noise = setup.noise if args.seed is None else replace(setup.noise,
                                                          seed=args.seed)
    dataset = setup.regenerate(noise)
    out = _ensure_outdir(_resolve_out(args))
    io.write_dataset_csv(dataset, out / "dataset.csv")
    io.write_dataset_csv(dataset, out / "dataset_truth.csv", noiseless=True)
    io.write_run_manifest(out, "simulate", _config_paths(args.config),
                          {"noise_seed": noise.seed})
    print(f"wrote {out / 'dataset.csv'} ({dataset.times.size} samples)")
    return 0


def _config_paths(config) -> list:
    if config is None:
        return []
    base = Path(config)
    paths = [base]
    try:
        raw = base.read_text()
    except OSError:
        return paths
    import sys as _sys
    if _sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    try:
        files = tomllib.loads(raw).get("files", {})
    except tomllib.TOMLDecodeError:
        return paths
    for name in files.values():
        paths.append(base.parent / name)
    return paths


def _cmd_infer(args) -> int:
    setup = load_benchmark(args.config)
    dataset = io.read_dataset_csv(args.data, setup.network.interior_ids)
    cfg = setup.infer
    if args.paper_scale:
        cfg = replace(cfg, iterations=100000, burn_in=50000)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.windows is not None:
        plans = make_plans(dataset.times.size, cfg.window_size, cfg.step,
                           cfg.forecast_horizon)[: args.windows]
    else:
        plans = None
    results = run_moving_window(dataset, setup.prior_model, cfg, setup.air,
                                setup.thermal, setup.network, setup.decomp,
                                setup.layout, plans=plans)
    out = _ensure_outdir(_resolve_out(args))
    io.write_windows_csv(results, setup.layout, out / "windows.csv")
    for idx, res in enumerate(results):
        io.write_predictive_csv(res, setup.network.interior_ids,
                                out / f"predictive_{idx:04d}.csv")
    io.write_run_manifest(out, "infer", _config_paths(args.config),
                          {"chain_seed": cfg.seed,
                           "data": str(Path(args.data))})
    print(f"wrote {out / 'windows.csv'} ({len(results)} windows)")
    return 0


def _cmd_forecast(args) -> int:
    setup = load_benchmark(args.config)
    data_path = args.data
    if data_path is None:
        import json

        manifest = Path(args.results) / "run_manifest.json"
        if manifest.exists():
            data_path = json.loads(manifest.read_text())["seeds"].get("data")
    if data_path is None:
        raise Co2thermError("no --data given and the results manifest does "
                            "not record one")
    dataset = io.read_dataset_csv(data_path, setup.network.interior_ids)
    rows_meta = io.read_windows_csv(Path(args.results) / "windows.csv",
                                    setup.layout)
    from .params import ParameterVector
    from .windows import PredictiveBands, WindowPlan, WindowResult

    results = []
    for rec in rows_meta:
        empty = np.empty((0, 0))
        plan = WindowPlan(start_index=rec["start_index"],
                          window_size=rec["window_size"],
                          step=max(setup.infer.step, 1),
                          forecast_horizon=args.horizon)
        bands = PredictiveBands(times=np.empty(0), co2_mean=empty,
                                co2_lower=empty, co2_upper=empty,
                                temp_mean=empty, temp_lower=empty,
                                temp_upper=empty)
        results.append(WindowResult(
            plan=plan,
            posterior_mean=ParameterVector.from_flat(setup.layout, rec["mean"]),
            samples=np.empty((0, setup.layout.dim)),
            acceptance_rate=rec["acceptance_rate"], predictive=bands,
            q025=np.zeros(setup.layout.dim), q975=np.zeros(setup.layout.dim),
            start_time=rec["start_time_s"]))
    rows = forecast_eval(results, dataset, args.horizon, setup)
    out = _ensure_outdir(_resolve_out(args))
    io.write_rows_csv(rows, ["window_index", "window_end_time_s", "field",
                             "mean_nrmse_pct", "truncated"],
                      out / "forecast_eval.csv")
    io.write_run_manifest(out, "forecast", _config_paths(args.config),
                          {"horizon": args.horizon, "data": str(data_path)})
    print(f"wrote {out / 'forecast_eval.csv'} ({len(rows)} rows)")
    return 0


def _cmd_sweep(args) -> int:
    setup = load_benchmark(args.config)
    rows = sweep(setup)
    out = _ensure_outdir(_resolve_out(args))
    io.write_rows_csv(rows, ["window_size", "sigma_co2", "sigma_temp",
                             "field", "nrmse_pct"], out / "sweep.csv")
    io.write_run_manifest(out, "sweep", _config_paths(args.config),
                          {"chain_seed": setup.infer.seed,
                           "noise_seed": setup.noise.seed})
    print(f"wrote {out / 'sweep.csv'} ({len(rows)} rows)")
    return 0


def _cmd_calibrate(args) -> int:
    try:
        t0, t1 = (float(v) for v in args.baseline.split(":"))
    except ValueError:
        raise Co2thermError(
            f"--baseline must be t0:t1 in seconds, got {args.baseline!r}")
    setup = load_benchmark(args.config)
    schema = io.default_schema(setup.network.interior_ids)
    table = io.load_sensor_csv(args.data, schema)
    calibrated, offsets = io.offset_calibrate(table, (t0, t1))
    out = _ensure_outdir(Path(args.out).parent)
    io.write_table_csv(calibrated, args.out)
    rows = [{"field": field, "zone": zone, "offset": float(off)}
            for field, per_zone in offsets.items()
            for zone, off in per_zone.items()]
    io.write_rows_csv(rows, ["field", "zone", "offset"],
                      Path(args.out).with_suffix(".offsets.csv"))
    io.write_run_manifest(out, "calibrate", _config_paths(args.config),
                          {"baseline": args.baseline,
                           "data": str(Path(args.data))})
    print(f"wrote {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    setup = load_benchmark(args.config)
    pred = io.read_dataset_csv(args.pred, setup.network.interior_ids)
    truth = io.read_dataset_csv(args.truth, setup.network.interior_ids)
    print("field  rmse        nrmse")
    for field in ("co2", "temp"):
        p = getattr(pred, field)
        t = getattr(truth, field)
        print(f"{field:5s}  {rmse(p, t):<10.4f}  {nrmse(p, t):.4f}%")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="co2therm",
        description="Coupled CO2-temperature network simulation and "
                    "moving-window Bayesian inference")
    parser.add_argument("--version", action="version",
                        version=f"co2therm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate the synthetic benchmark")
    p.add_argument("--config", default=None,
                   help="benchmark TOML (default: packaged benchmark)")
    p.add_argument("--out", default=None,
                   help=f"output directory (default: ${OUT_ENV_VAR})")
    p.add_argument("--seed", type=int, default=None,
                   help="override the noise seed")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("infer", help="moving-window inference on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None,
                   help=f"output directory (default: ${OUT_ENV_VAR})")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--windows", type=int, default=None,
                   help="limit to the first N windows")
    p.add_argument("--paper-scale", action="store_true",
                   help="run 100k iterations / 50k burn-in per window")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("forecast", help="post-window forecast evaluation")
    p.add_argument("--results", required=True,
                   help="directory produced by `infer`")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--data", default=None,
                   help="dataset CSV (default: recorded in the manifest)")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_forecast)

    p = sub.add_parser("sweep", help="window-size x noise nRMSE sweep")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None,
                   help=f"output directory (default: ${OUT_ENV_VAR})")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("calibrate", help="offset-calibrate a sensor CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--baseline", required=True, help="t0:t1 in seconds")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("evaluate", help="RMSE/nRMSE between two dataset CSVs")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.func is _cmd_forecast and args.out is None:
        args.out = args.results
    try:
        return args.func(args)
    except Co2thermError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
