"""Command-line front end: parse a YAML run config, dispatch bound
computations, persist CSV rows plus a JSON provenance sidecar.

The CSV column order is frozen (figure scripts depend on it):

    scenario, n, J, K, Ka_or_pa, L, eps_or_targets, seed, n_samples, P,
    Eb_dB, bound_value, argmin_params, wall_time_s

Numeric cells use repr() formatting, so a rerun with the same seed is
byte-identical except for wall_time_s.  Infeasible sweep points carry nan in
the P / Eb_dB / bound_value cells and {"infeasible": true} in argmin_params.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time

import numpy as np
import yaml

from . import csir, mc, model, nocsi, noka, pilot, search
from .model import ErrorTargets, KnownKa, PowerPoint, RandomKa, SystemParams

SCENARIOS = ("csir-ach", "csir-conv", "nocsi-ach", "nocsi-conv",
             "noka-ach", "noka-conv", "pilot-ach", "scaling")

CSV_COLUMNS = ("scenario", "n", "J", "K", "Ka_or_pa", "L", "eps_or_targets",
               "seed", "n_samples", "P", "Eb_dB", "bound_value",
               "argmin_params", "wall_time_s")

SCHEMA_VERSION = 1

DEFAULTS = {
    "seed": 0,
    "n_search": 500,
    "n_final": 10000,
    "threads": 1,
    "search": {"eb_db_lo": -10.0, "eb_db_hi": 40.0, "coarse_db": 0.1,
               "refine_db": 0.01},
    "bound": {},
}


class ConfigError(Exception):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def load_config(path: str) -> dict:
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return cfg


def normalize(cfg: dict) -> dict:
    """Apply defaults and validate; raises ConfigError listing every problem."""
    problems = []
    out = dict(cfg)
    for key, val in DEFAULTS.items():
        if isinstance(val, dict):
            out[key] = {**val, **(cfg.get(key) or {})}
        else:
            out.setdefault(key, val)

    scenario = out.get("scenario")
    if scenario not in SCENARIOS:
        problems.append(f"scenario must be one of {SCENARIOS}, got {scenario!r}")

    for key in ("n", "J", "K", "L"):
        v = out.get(key)
        if not isinstance(v, int) or v < 1:
            problems.append(f"{key} must be a positive integer, got {v!r}")

    noka_like = scenario in ("noka-ach", "noka-conv")
    if noka_like:
        pa = out.get("pa")
        if pa is None or not (0.0 <= float(pa) <= 1.0):
            problems.append(f"pa must lie in [0, 1], got {pa!r}")
        for key in ("eps_md", "eps_fa"):
            v = out.get(key)
            if v is None or not (0.0 < float(v) < 1.0):
                problems.append(f"{key} must lie in (0, 1), got {v!r}")
    elif scenario != "scaling":
        ka = out.get("ka")
        if ka is None and "ka_frac" in out and isinstance(out.get("K"), int):
            ka = int(round(out["ka_frac"] * out["K"]))
            out["ka"] = ka
        if scenario in ("pilot-ach",):
            out.setdefault("ka", out.get("K"))
            ka = out["ka"]
        if not isinstance(ka, int) or ka < 1:
            problems.append(f"ka must be a positive integer, got {ka!r}")
        elif isinstance(out.get("K"), int) and ka > out["K"]:
            problems.append(f"ka={ka} exceeds K={out['K']}")
        eps = out.get("eps")
        if eps is None or not (0.0 < float(eps) < 1.0):
            problems.append(f"eps must lie in (0, 1), got {eps!r}")

    sweep = out.get("sweep")
    if sweep is not None:
        axis = sweep.get("axis")
        if axis not in ("ka", "K", "L", "n"):
            problems.append(f"sweep.axis must be ka|K|L|n, got {axis!r}")
        values = sweep.get("values")
        if not isinstance(values, list) or not values:
            problems.append("sweep.values must be a nonempty list")
    else:
        out["sweep"] = {"axis": "ka" if not noka_like else "K",
                        "values": [out.get("ka" if not noka_like else "K")]}

    if scenario == "scaling":
        sc = out.get("scaling") or {}
        if sc.get("regime") not in ("csir", "nocsi"):
            problems.append("scaling.regime must be csir|nocsi")
        if not isinstance(out.get("sweep"), dict) \
                or out["sweep"].get("axis") != "n":
            problems.append("scaling runs sweep over axis 'n'")
        eps = out.get("eps")
        if eps is None or not (0.0 < float(eps) < 1.0):
            problems.append(f"eps must lie in (0, 1), got {eps!r}")

    if scenario == "pilot-ach":
        pl = out.get("pilot") or {}
        out["pilot"] = pl
        if pl.get("kind", "orthogonal") not in ("orthogonal", "sphere", "dft"):
            problems.append("pilot.kind must be orthogonal|sphere|dft")

    if not out.get("output"):
        problems.append("output path is required")

    if problems:
        raise ConfigError(problems)
    return out


def _sweep_params(cfg: dict, value) -> dict:
    axis = cfg["sweep"]["axis"]
    params = {k: cfg.get(k) for k in ("n", "J", "K", "L", "ka", "pa")}
    params[axis] = value
    if axis == "K":
        if "ka_frac" in cfg:
            params["ka"] = int(round(cfg["ka_frac"] * value))
        elif cfg["scenario"] == "pilot-ach":
            params["ka"] = value
    if axis == "n" and cfg["scenario"] == "scaling":
        ladder = cfg.get("scaling", {}).get("ladder", {})
        for key, rule in ladder.items():
            params[key] = rule["mult"] * value ** rule.get("pow", 0)
            if key in ("K", "L", "ka"):
                params[key] = max(1, int(round(params[key])))
    return params


def _mc_config(cfg: dict) -> mc.McConfig:
    return mc.McConfig(n_search=cfg["n_search"], n_final=cfg["n_final"],
                       master_seed=cfg["seed"], threads=cfg["threads"])


def _region_grid(cfg: dict):
    b = cfg["bound"]
    omegas = b.get("omegas")
    nus = b.get("nus")
    if omegas is None and nus is None:
        return None
    return csir.default_region_grid(omegas, nus)


def _pprime_divisors(cfg: dict):
    return tuple(cfg["bound"].get("pprime_divisors", model.PPRIME_DIVISORS))


def _ach_ebmin(cfg: dict, sp: SystemParams, eps: float, mccfg, bound_at):
    """Shared energy search: n_search during the scan, n_final at the optimum."""
    s = cfg["search"]
    divisors = _pprime_divisors(cfg)

    def feasible_value(P: float, n_samples: int, stop: float | None):
        best = math.inf
        arg = None
        for c in divisors:
            pp = PowerPoint(P=P, Pprime=P / c)
            val, a = bound_at(sp, pp, n_samples, stop)
            if val < best:
                best, arg = val, {"Pprime_divisor": c, **a}
            if stop is not None and best <= stop:
                break
        return best, arg

    spec = search.EbSearchSpec(targets=ErrorTargets.pupe(eps),
                               eb_db_lo=s["eb_db_lo"], eb_db_hi=s["eb_db_hi"],
                               coarse_db=s["coarse_db"],
                               refine_db=s["refine_db"])
    res = search.ebmin(
        lambda P: (feasible_value(P, cfg["n_search"], eps)[0],), sp, spec)
    if not res.feasible:
        return res, math.nan, {"infeasible": True}
    final_val, arg = feasible_value(res.p, cfg["n_final"], None)
    arg = arg or {}
    if final_val > eps:
        arg["final_above_target"] = True
    return res, final_val, arg


def _dispatch(cfg: dict, params: dict):
    scenario = cfg["scenario"]
    mccfg = _mc_config(cfg)
    b = cfg["bound"]

    if scenario in ("csir-ach", "csir-conv", "nocsi-ach", "nocsi-conv",
                    "pilot-ach"):
        sp = SystemParams(n=params["n"], J=params["J"], K=params["K"],
                          L=params["L"], activity=KnownKa(params["ka"]))
        eps = float(cfg["eps"])
    elif scenario in ("noka-ach", "noka-conv"):
        sp = SystemParams(n=params["n"], J=params["J"], K=params["K"],
                          L=params["L"], activity=RandomKa(float(params["pa"])))
        targets = ErrorTargets.md_fa(float(cfg["eps_md"]), float(cfg["eps_fa"]))

    if scenario == "csir-ach":
        grid = _region_grid(cfg) or csir.default_region_grid(
            omegas=[0.0, 0.25, 0.5], nus=np.arange(0.5, 2.01, 0.1))
        mode = "known-set" if sp.ka == sp.K else "random-access"

        def bound_at(sp, pp, n_samples, stop):
            res = csir.pupe_csir_upper(sp, pp, mccfg, mode=mode,
                                       gr_grid=grid if mode == "random-access"
                                       else None,
                                       n_samples=n_samples, eps_hint=eps,
                                       stop_above=stop)
            return res.value, dict(res.argmin_params)

        res, val, arg = _ach_ebmin(cfg, sp, eps, mccfg, bound_at)
        return res, val, arg

    if scenario == "nocsi-ach":
        grid = _region_grid(cfg) or csir.default_region_grid(
            omegas=[0.0, 0.5], nus=np.arange(0.5, 2.01, 0.1))

        def bound_at(sp, pp, n_samples, stop):
            res = nocsi.pupe_nocsi_upper(sp, pp, mccfg, gr_grid=grid,
                                         n_samples=n_samples, eps_hint=eps,
                                         stop_above=stop)
            return res.value, dict(res.argmin_params)

        res, val, arg = _ach_ebmin(cfg, sp, eps, mccfg, bound_at)
        return res, val, arg

    if scenario == "pilot-ach":
        pl = cfg.get("pilot", {})
        n_p = int(pl.get("n_p", sp.K))
        res = pilot.ebmin_pilot(
            sp, eps, mccfg, n_p=n_p, kind=pl.get("kind", "orthogonal"),
            alphas=pl.get("alphas"),
            eb_db_range=(cfg["search"]["eb_db_lo"], cfg["search"]["eb_db_hi"]),
            coarse_db=cfg["search"]["coarse_db"],
            refine_db=cfg["search"]["refine_db"],
            pprime_divisors=_pprime_divisors(cfg),
            nu_grid=b.get("nus"), n_samples=cfg["n_search"])
        if not res.feasible:
            return res, math.nan, {"infeasible": True}
        return res, math.nan, dict(res.argmin_params)

    if scenario == "csir-conv":
        res = csir.csir_converse_min_power(
            sp, eps, mccfg, mode=b.get("mode", "mc"),
            eb_db_range=(cfg["search"]["eb_db_lo"], cfg["search"]["eb_db_hi"]),
            n_samples=cfg["n_search"])
        return res, math.nan, dict(res.argmin_params)

    if scenario == "nocsi-conv":
        res = nocsi.nocsi_converse_min_power(
            sp, eps, mccfg, mode=b.get("mode", "closed"),
            eb_db_range=(cfg["search"]["eb_db_lo"], cfg["search"]["eb_db_hi"]),
            n_samples=cfg["n_search"])
        return res, math.nan, dict(res.argmin_params)

    if scenario == "noka-ach":
        radius_range = b.get("radius_range", list(range(0, 26)))
        grid = None
        if b.get("omegas") is not None or b.get("nus") is not None:
            grid = noka.default_noka_grid(
                tuple(b.get("omegas", noka.DEFAULT_NOKA_OMEGAS)),
                b.get("nus"))
        res = noka.ebmin_noka(
            sp, targets, radius_range=radius_range, cfg=mccfg,
            eb_db_range=(cfg["search"]["eb_db_lo"], cfg["search"]["eb_db_hi"]),
            coarse_db=cfg["search"]["coarse_db"],
            refine_db=cfg["search"]["refine_db"],
            pprime_divisors=_pprime_divisors(cfg),
            gr_grid=grid, n_samples=cfg["n_search"])
        if not res.feasible:
            return res, math.nan, {"infeasible": True}
        return res, math.nan, dict(res.argmin_params)

    if scenario == "noka-conv":
        res = noka.noka_converse_min_power(
            sp, targets, mccfg,
            eb_db_range=(cfg["search"]["eb_db_lo"], cfg["search"]["eb_db_hi"]),
            n_samples=cfg["n_search"])
        return res, math.nan, dict(res.argmin_params)

    if scenario == "scaling":
        sc = cfg["scaling"]
        ladder = lambda n: _sweep_params(cfg, n)
        out = search.scaling_sweep(sc["regime"], ladder, [params["n"]],
                                   float(cfg["eps"]), mccfg,
                                   n_samples=cfg["n_search"])
        row = out["rows"][0]
        P = float(params.get("P", math.nan))
        eb = (10.0 * math.log10(params["n"] * P / params["J"])
              if P > 0 else math.nan)
        res = model.BoundResult(value=row["bound"], p=P, eb_db=eb)
        return res, row["bound"], {"regime": sc["regime"]}

    raise ValueError(f"unhandled scenario {scenario!r}")


def _fmt(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def run(config_path: str, overrides: dict | None = None) -> int:
    cfg = normalize(load_config(config_path))
    for key, val in (overrides or {}).items():
        if val is not None:
            cfg[key] = val
    _mc_config(cfg)  # validates sample counts early
    scenario = cfg["scenario"]
    rows = []
    sidecar_points = []
    for value in cfg["sweep"]["values"]:
        params = _sweep_params(cfg, value)
        t0 = time.perf_counter()
        res, bound_value, arg = _dispatch(cfg, params)
        wall = time.perf_counter() - t0
        if scenario in ("noka-ach", "noka-conv"):
            ka_or_pa = params["pa"]
            eps_or_targets = f"{cfg['eps_md']}|{cfg['eps_fa']}"
        else:
            ka_or_pa = params.get("ka", params.get("K"))
            eps_or_targets = str(cfg["eps"])
        if not res.feasible:
            p_out, eb_out, bound_out = math.nan, math.nan, math.nan
            arg = {"infeasible": True, **(arg or {})}
        else:
            p_out = res.p if res.p is not None else math.nan
            eb_out = res.eb_db if res.eb_db is not None else math.nan
            bound_out = bound_value
        rows.append({
            "scenario": scenario,
            "n": params["n"], "J": params["J"], "K": params["K"],
            "Ka_or_pa": ka_or_pa, "L": params["L"],
            "eps_or_targets": eps_or_targets,
            "seed": cfg["seed"], "n_samples": cfg["n_final"],
            "P": _fmt(float(p_out)), "Eb_dB": _fmt(float(eb_out)),
            "bound_value": _fmt(float(bound_out)),
            "argmin_params": json.dumps(arg or {}, sort_keys=True),
            "wall_time_s": f"{wall:.3f}",
        })
        sidecar_points.append({"sweep_value": value, "flags": res.flags,
                               "argmin": arg or {},
                               "per_t_terms": res.per_t_terms})
    with open(cfg["output"], "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    sidecar = {
        "schema_version": SCHEMA_VERSION,
        "config": {k: v for k, v in cfg.items() if k != "output"},
        "points": sidecar_points,
    }
    with open(cfg["output"] + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True, default=str)
    return 0


def validate(config_path: str) -> int:
    try:
        cfg = normalize(load_config(config_path))
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"error: {problem}", file=sys.stderr)
        return 2
    print("ok")
    print(yaml.safe_dump(cfg, sort_keys=True).rstrip())
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ramimo",
        description="Energy-per-bit bounds for massive random access over "
                    "MIMO Rayleigh fading")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a config and write CSV + JSON")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--samples", type=int, default=None,
                       help="override n_final")
    p_run.add_argument("--threads", type=int, default=None)
    p_run.add_argument("--output", default=None)
    p_val = sub.add_parser("validate", help="check a config without running")
    p_val.add_argument("config")
    args = parser.parse_args(argv)
    if args.command == "validate":
        return validate(args.config)
    overrides = {"seed": args.seed, "threads": args.threads,
                 "output": args.output}
    if args.samples is not None:
        overrides["n_final"] = args.samples
    try:
        return run(args.config, overrides)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"error: {problem}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
