"""
Command-line interface.

Every command reads the station and maxima tables, runs one step of the
pipeline and emits delimiter-separated tables, either into ``--out DIR`` or
to stdout (each table preceded by a ``# name`` line). Settings come from
CLI flags, then the JSON file given by ``--config`` or ``$ROIFLOOD_CONFIG``,
then built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluation as ev
from . import gev, io
from .errors import RoiFloodError
from .regional import predict_params
from .roi import RegionCache, RoiConfig, find_roi, find_roi_atsite
from .station import CovariateSchema, Station
from .synth import SynthConfig, generate_basin, save_basin

log = logging.getLogger("roiflood")


class UsageError(Exception):
    pass


def _float_list(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _return_periods(text: str) -> tuple[float, ...]:
    vals = _float_list(text)
    if any(not v > 1 for v in vals):
        raise argparse.ArgumentTypeError("return periods must exceed 1")
    return vals


def _name_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


class Emitter:
    def __init__(self, out: str | None, stream=None):
        self.out = Path(out) if out else None
        self.stream = stream or sys.stdout
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)

    def table(self, name: str, rows, columns) -> None:
        if self.out is not None:
            io.write_table(rows, columns, self.out / f"{name}.csv")
        else:
            self.stream.write(f"# {name}\n")
            io.write_table(rows, columns, self.stream)
            self.stream.write("\n")


def _settings(args) -> io.RunConfig:
    cli = {
        "epsilon": args.epsilon,
        "min_J": args.min_J,
        "max_J": args.max_J,
        "grid_step": args.grid_step,
        "tau": args.tau,
        "seed": args.seed,
        "jobs": args.jobs,
        "alpha": args.alpha,
        "n_strata": args.n_strata,
    }
    for key in ("T", "R", "methods", "C", "r"):
        cli[key] = getattr(args, key, None)
    return io.resolve_config(io.load_config(args.config), cli)


def _roi_config(cfg: io.RunConfig, atsite: bool) -> RoiConfig:
    return RoiConfig(
        epsilon=cfg.epsilon,
        min_J=cfg.min_J_for(atsite),
        max_J=cfg.max_J,
        grid_step=cfg.grid_step,
        tau=cfg.tau,
    )


def _load(args) -> list[Station]:
    if not args.stations:
        raise UsageError("--stations is required")
    return io.load_basin(args.stations, args.maxima)


def _pick(stations, sid) -> Station:
    for s in stations:
        if s.id == sid:
            return s
    raise UsageError(f"unknown station {sid!r}")


def _params_row(sid, p: gev.GevParams, *extra):
    return (sid, p.mu, p.sigma, p.xi) + extra


def _strata(cfg: io.RunConfig, stations):
    if cfg.strata is not None:
        return ev.Strata(cfg.strata)
    return ev.Strata.default(stations, cfg.n_strata)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_fit_local(args, cfg, out: Emitter) -> None:
    st = _pick(_load(args), args.station)
    fit = gev.fit_local(st.maxima)
    out.table(
        "params",
        [_params_row(st.id, fit.params, fit.loglik, int(fit.converged), st.n)],
        ("station", "mu", "sigma", "xi", "loglik", "converged", "n"),
    )
    out.table("return_levels", ev.emit_return_level_curve(fit.params, cfg.T), ev.RETURN_LEVEL_COLUMNS)
    out.table("qq", ev.emit_qq(fit.params, st.maxima), ev.QQ_COLUMNS)


def _emit_region(out: Emitter, roi, mode: str) -> None:
    spec = roi.weights
    out.table(
        "roi_summary",
        [(roi.members.target, mode, roi.J, roi.training_error, roi.n_fits, roi.n_failed)],
        ("target", "mode", "J", "training_error", "n_fits", "n_failed"),
    )
    terms = ("centroid",) + spec.schema.names
    out.table("roi_weights", list(zip(terms, spec.weights.tolist())), ("term", "weight"))
    out.table(
        "roi_members",
        [(i + 1, sid, d) for i, (sid, d) in enumerate(zip(roi.members.members, roi.members.distances))],
        ("rank", "station", "distance"),
    )


def cmd_fit_atsite(args, cfg, out: Emitter) -> None:
    stations = _load(args)
    target = _pick(stations, args.station)
    schema = CovariateSchema(cfg.attributes)
    roi = find_roi_atsite(target, stations, _roi_config(cfg, atsite=True), schema)
    p = predict_params(roi.model, target)
    out.table(
        "params",
        [_params_row(target.id, p, roi.J, roi.training_error)],
        ("station", "mu", "sigma", "xi", "J", "training_error"),
    )
    out.table("return_levels", ev.emit_return_level_curve(p, cfg.T), ev.RETURN_LEVEL_COLUMNS)
    out.table("qq", ev.emit_qq(p, target.maxima), ev.QQ_COLUMNS)
    _emit_region(out, roi, "atsite")


def cmd_estimate(args, cfg, out: Emitter) -> None:
    pool = [s for s in _load(args) if s.gauged]
    targets = io.build_stations(io.load_stations(args.target_attrs))
    schema = CovariateSchema(cfg.attributes)
    config = _roi_config(cfg, atsite=False)
    cache = RegionCache()
    T = np.asarray(cfg.T, dtype=float)
    rows = []
    for t in targets:
        roi = find_roi(t, pool, config, schema, cache=cache)
        levels = np.atleast_1d(gev.return_level(T, predict_params(roi.model, t)))
        spec = ev.specific_discharge(levels, t.attributes["size_km2"])
        for Tv, q, qs in zip(T, levels, np.atleast_1d(spec)):
            rows.append((t.id, float(Tv), float(q), float(qs), roi.J))
    out.table("estimates", rows, ("station", "T", "estimate", "specific_discharge", "J"))


def cmd_roi(args, cfg, out: Emitter) -> None:
    stations = _load(args)
    target = _pick(stations, args.target)
    schema = CovariateSchema(cfg.attributes)
    if args.atsite:
        roi = find_roi_atsite(target, stations, _roi_config(cfg, atsite=True), schema)
    else:
        roi = find_roi(target.ungauged(), stations, _roi_config(cfg, atsite=False), schema)
    _emit_region(out, roi, "atsite" if args.atsite else "ungauged")


def cmd_loo(args, cfg, out: Emitter) -> None:
    stations = [s for s in _load(args) if s.gauged]
    schema = CovariateSchema(cfg.attributes)
    local = ev.local_fit_all(stations)
    T_tune = 100.0 if 100.0 in cfg.T else cfg.T[0]
    methods = []
    for name in cfg.methods:
        if name == "roi":
            methods.append(ev.RoiMethod(_roi_config(cfg, atsite=False)))
        elif name == "cluster":
            C = cfg.C if cfg.C is not None else ev.tune_cluster_count(stations, schema, T_tune, local_fits=local)
            methods.append(ev.ClusterMethod(C))
        elif name == "cca":
            r = cfg.r if cfg.r is not None else ev.tune_cca_radius(stations, schema, T_tune, local_fits=local)
            methods.append(ev.CcaMethod(r))
        else:
            raise UsageError(f"unknown method {name!r}; choose from roi, cluster, cca")
    report = ev.loo_evaluate(stations, methods, cfg.T, schema, local, n_jobs=cfg.jobs)
    out.table(
        "loo_rows",
        [(r.station, r.method, r.T, r.estimate, r.baseline, r.rel_dev) for r in report.rows],
        ev.LOO_COLUMNS,
    )
    out.table(
        "loo_aggregates",
        [(a.method, a.T, a.bias, a.rmse, a.n, a.n_missing) for a in report.aggregates],
        ev.AGGREGATE_COLUMNS,
    )
    out.table("loo_failures", report.failures, ("station", "method", "reason"))
    settings = [(m.name, "C", m.C) for m in methods if isinstance(m, ev.ClusterMethod)]
    settings += [(m.name, "r", m.r) for m in methods if isinstance(m, ev.CcaMethod)]
    out.table("loo_settings", settings, ("method", "setting", "value"))


def cmd_bootstrap(args, cfg, out: Emitter) -> None:
    stations = [s for s in _load(args) if s.gauged]
    target = _pick(stations, args.station)
    schema = CovariateSchema(cfg.attributes)
    strata = _strata(cfg, stations)
    T = tuple(float(t) for t in cfg.T)
    modes = ("local", "atsite") if args.mode == "both" else (args.mode,)
    rows, summary = [], []
    for mode in modes:
        if mode == "local":
            est = ev.LocalEstimator(target.id, T)
            params = gev.fit_local(target.maxima).params
        else:
            est = ev.AtsiteEstimator(target.id, T, _roi_config(cfg, atsite=True), schema)
            roi = find_roi_atsite(target, stations, est.config, schema)
            params = predict_params(roi.model, target)
        res = ev.stratified_bootstrap(stations, strata, cfg.R, est, cfg.alpha, cfg.seed, cfg.jobs)
        rows += [(mode,) + r for r in ev.emit_return_level_curve(params, T, res)]
        summary.append((mode, res.R, res.n_failed, res.alpha))
    out.table("bootstrap", rows, ("mode",) + ev.RETURN_LEVEL_COLUMNS)
    out.table("bootstrap_summary", summary, ("mode", "R", "n_failed", "alpha"))
    out.table("strata", strata.intervals, ("first_year", "last_year"))


def cmd_synth(args, cfg, out: Emitter) -> None:
    if not args.out:
        raise UsageError("synth needs --out DIR")
    settings = {}
    if args.config:
        with open(args.config) as f:
            settings = json.load(f)
    if args.seed is not None:
        settings["seed"] = args.seed
    config = SynthConfig.from_dict(settings)
    basin = generate_basin(config)
    save_basin(basin, args.out)
    out.table(
        "truth",
        [_params_row(sid, p) for sid, p in basin.true_params.items()],
        ("station", "mu", "sigma", "xi"),
    )
    with open(Path(args.out) / "synth_config.json", "w") as f:
        json.dump(config.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("data and run settings")
    g.add_argument("--stations", help="station attribute table")
    g.add_argument("--maxima", help="annual maxima table")
    g.add_argument("--config", help="JSON settings file (default: $%s)" % io.CONFIG_ENV)
    g.add_argument("--out", help="write tables into this directory instead of stdout")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--jobs", type=int, default=None, help="worker processes")
    g.add_argument("--epsilon", type=float, default=None, help="minimum weight per distance term")
    g.add_argument("--min-J", dest="min_J", type=int, default=None)
    g.add_argument("--max-J", dest="max_J", type=int, default=None)
    g.add_argument("--grid-step", dest="grid_step", type=float, default=None)
    g.add_argument("--tau", type=float, default=None, help="weight of the target's own record")
    g.add_argument("--alpha", type=float, default=None, help="bootstrap interval level")
    g.add_argument("--n-strata", dest="n_strata", type=int, default=None)
    g.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="roiflood", description="Regional flood frequency estimation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-local", parents=[common], help="local GEV fit at one station")
    p.add_argument("--station", required=True)
    p.add_argument("--T", type=_return_periods)
    p.set_defaults(func=cmd_fit_local)

    p = sub.add_parser("fit-atsite", parents=[common], help="GEV fit on the station's optimal region")
    p.add_argument("--station", required=True)
    p.add_argument("--T", type=_return_periods)
    p.set_defaults(func=cmd_fit_atsite)

    p = sub.add_parser("estimate", parents=[common], help="return levels at ungauged sites")
    p.add_argument("--target-attrs", dest="target_attrs", required=True)
    p.add_argument("--T", type=_return_periods)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("roi", parents=[common], help="optimal region of influence for a station")
    p.add_argument("--target", required=True)
    p.add_argument("--atsite", action="store_true", help="use the target's record in the search")
    p.set_defaults(func=cmd_roi)

    p = sub.add_parser("loo", parents=[common], help="leave-one-out comparison of methods")
    p.add_argument("--methods", type=_name_list)
    p.add_argument("--T", type=_return_periods)
    p.add_argument("--C", type=int, help="cluster count (tuned when omitted)")
    p.add_argument("--r", type=float, help="CCA radius (tuned when omitted)")
    p.set_defaults(func=cmd_loo)

    p = sub.add_parser("bootstrap", parents=[common], help="stratified bootstrap intervals")
    p.add_argument("--station", required=True)
    p.add_argument("--R", type=int)
    p.add_argument("--T", type=_return_periods)
    p.add_argument("--mode", choices=("local", "atsite", "both"), default="both")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic basin")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _settings(args) if args.command != "synth" else io.RunConfig()
        args.func(args, cfg, Emitter(args.out))
    except UsageError as exc:
        parser.exit(2, f"roiflood {args.command}: error: {exc}\n")
    except (RoiFloodError, ValueError, OSError, KeyError, np.linalg.LinAlgError) as exc:
        print(f"roiflood {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
