"""Command line entry point: ``degiorgi <command> ...``.

Every JSON output carries a manifest naming the inputs, so a result file can
be regenerated from itself. Only the ``timestamp`` field varies between
identical runs.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import PROOF_FORM, THEOREM_FORM, CylinderGeometry, bound_report
from .energy import membership_report
from .errors import DeGiorgiError
from .exponents import (
    ANISOTROPIC_DNL, DNL_STANDARD, ORLICZ_POWER, ExponentConfig, classify, derive_indices,
    kappa_s, translate_example,
)
from .fields import AnisotropicGrid, export_csv, read_field, write_field
from .iteration import build_cylinders, build_ladder, compute_trace, resolve_mode, run_de_giorgi
from .solver import OperatorSpec, heat_gaussian, parse_initial, solve, stable_tau
from .truncation import g_minus, g_plus, lemma21_sandwich

_BOX = [[-math.pi, -math.pi], [math.pi, math.pi]]

# Frozen gamma values come from one calibration run per preset (safety 1.25).
PRESETS = {
    "heat3d": {
        "spec": {"kind": DNL_STANDARD, "N": 2, "m": 1.0, "p": 2.0, "bc": "periodic",
                 "lo": _BOX[0], "hi": _BOX[1]},
        "grid": {"extents": [64, 64], "t_steps": 256, "substeps": 1},
        "T": 0.25,
        "initial": "gaussian:1.0,1.0",
        "geom": {"center_x": [0.0, 0.0], "center_t": 0.25, "rho": [1.0, 1.0], "theta": 0.03},
        "gamma": 0.119,
        "levels": [0.2, 0.4, 0.6],
        "nest": [1.0, 0.8, 0.6],
        "C0": 2.0,
        "J": 10,
        "tol": 1e-8,
    },
    "aniso2d": {
        "spec": {"kind": ANISOTROPIC_DNL, "m": [1.0, 1.0], "p": [2.0, 3.0], "bc": "periodic",
                 "lo": _BOX[0], "hi": _BOX[1]},
        "grid": {"extents": [64, 64], "t_steps": 161, "substeps": "auto"},
        "T": 1.6,
        "initial": "gaussian:1.0,1.5",
        "geom": {"center_x": [0.0, 0.0], "center_t": 1.6, "rho": [1.0, 0.3], "theta": 0.2},
        "gamma": 0.0141,
        "levels": [0.1, 0.2, 0.3],
        "nest": [1.0, 0.8, 0.6],
        "C0": 2.0,
        "J": 10,
        "tol": 1e-8,
    },
}

CLASSIFY_PRESETS = {
    "heat3d": ("dnl_standard", 2, {"m": 1.0, "p": 2.0}),
    "dnl-standard": ("dnl_standard", 3, {"m": 1.0, "p": 2.0}),
    "orlicz": ("orlicz_power", 3, {"m": 1.0, "n": 1.0, "p": 2.0, "q": 2.5}),
    "aniso2d": ("anisotropic_dnl", None, {"m": [1.0, 1.0], "p": [2.0, 3.0]}),
}


# -- plumbing ----------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)


def manifest(command: str, parameters: dict, inputs: dict) -> dict:
    return {"tool": "degiorgi", "version": __version__, "command": command,
            "parameters": parameters, "inputs": inputs,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()}


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _file_input(path):
    data = Path(path).read_bytes()
    return {"path": str(path), "sha256": hashlib.sha256(data).hexdigest()}


def _json_input(path):
    return {"path": str(path), "content": _load_json(path)}


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _emit(args, payload: dict, summary: list[str]):
    if args.json:
        print(dumps(payload))
    else:
        print("\n".join(summary))


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _parse_value(text):
    vals = _floats(text)
    return vals[0] if len(vals) == 1 and "," not in text else vals


# -- classify ----------------------------------------------------------------

def condition_text(config: ExponentConfig) -> list[str]:
    """The regime conditions written out with the numbers of ``config``."""
    d = derive_indices(config)
    rep = classify(config)
    slope = d.p
    offset = d.p * (1.0 - d.L) + d.N * (d.p * d.lambda_over_p - d.L)
    rel = {"supercritical": "<", "critical": "=", "subcritical": ">"}[rep.criticality]
    lines = [
        f"Lambda = max_i n_i(q_i-1) = {d.Lambda:.12g} ({rep.diffusion})",
        f"L = max(1, Lambda) = {d.L:.12g}",
        f"M = p|lambda/p| + (m+1)p/N = {d.p * d.lambda_over_p:.12g} + {(d.m + 1) * d.p / d.N:.12g}"
        f" = {d.M:.12g}",
        f"L {rel} M: {rep.criticality}",
        f"kappa_s = {slope:.12g}*s + {offset:.12g}",
    ]
    if rep.s_min is not None:
        lines.append(f"kappa_s > 0 iff s > s_min = {rep.s_min:.12g}")
    lines.append(f"p = {d.p:.12g}, m = {d.m:.12g}, p_* = {d.p_star:.12g}, gamma0 = {d.gamma0:.12g}")
    return lines


def _config_from_args(args) -> tuple[ExponentConfig, dict]:
    if getattr(args, "config", None):
        return ExponentConfig.load(args.config), {"config": _json_input(args.config)}
    if getattr(args, "preset", None):
        kind, N, params = CLASSIFY_PRESETS[args.preset]
        return translate_example(kind, N, **params), {"preset": args.preset}
    if getattr(args, "example", None):
        params = dict(kv.split("=", 1) for kv in args.set or [])
        params = {k: _parse_value(v) for k, v in params.items()}
        cfg = translate_example(args.example, args.N, **params)
        return cfg, {"example": args.example, "N": args.N, "params": params}
    raise DeGiorgiError("give --config, --preset or --example")


def cmd_classify(args):
    cfg, inputs = _config_from_args(args)
    rep = classify(cfg)
    d = derive_indices(cfg)
    out = {"manifest": manifest("classify", {}, inputs), "config": cfg.to_dict(),
           "regime": rep.to_dict(), "indices": d.to_dict(), "conditions": condition_text(cfg)}
    if args.s is not None:
        out["kappa_s"] = kappa_s(cfg, args.s, strict=False)
    _emit(args, out, condition_text(cfg))
    return 0


# -- bound / g-eval ----------------------------------------------------------

def cmd_bound(args):
    cfg = ExponentConfig.load(args.config)
    geom = CylinderGeometry.load(args.geom)
    rep = bound_report(cfg, geom, args.mass, args.s, args.gamma, args.form)
    params = {"mass": args.mass, "s": args.s, "gamma": args.gamma, "form": args.form}
    out = {"manifest": manifest("bound", params, {"config": _json_input(args.config),
                                                  "geom": _json_input(args.geom)}), **rep}
    if args.csv:
        _write_csv(args.csv, ["H", "R", "gamma", "bound"], [[rep["H"], rep["R"], args.gamma, rep["bound"]]])
    _emit(args, out, [f"H = {rep['H']:.12g}", f"R = {rep['R']:.12g}",
                      f"bound = {rep['bound']:.12g} ({rep['theorem']})"])
    return 0


def cmd_g_eval(args):
    gp, gm = g_plus(args.a, args.b, args.m), g_minus(args.a, args.b, args.m)
    sw = lemma21_sandwich(args.a, args.b, args.m)
    row = {"a": args.a, "b": args.b, "m": args.m, "value": gp, "g_plus": gp, "g_minus": gm,
           "lower": float(sw.lower), "upper": float(sw.upper), "gamma": sw.gamma}
    out = {"manifest": manifest("g-eval", {"a": args.a, "b": args.b, "m": args.m}, {}), **row}
    if args.csv:
        _write_csv(args.csv, list(row), [list(row.values())])
    _emit(args, out, [f"g_plus = {gp:.17g}", f"g_minus = {gm:.17g}",
                      f"sandwich [{sw.lower:.6g}, {sw.upper:.6g}] with gamma = {sw.gamma:.6g}"])
    return 0


# -- solve -------------------------------------------------------------------

def _random_initial(grid, amp, seed, bumps=4):
    rng = np.random.default_rng(seed)
    xs = grid.space_mesh()
    u = np.zeros(grid.extents)
    for _ in range(bumps):
        c = [rng.uniform(grid.axis(i)[0], grid.axis(i)[-1]) * 0.5 for i in range(grid.N)]
        w = rng.uniform(0.5, 1.0)
        u += rng.uniform(0.2, 1.0) * np.exp(-sum((x - ci) ** 2 for x, ci in zip(xs, c)) / (2 * w * w))
    return amp * u / max(u.max(), 1e-300)


def build_grid(spec: OperatorSpec, grid_data: dict, T: float) -> tuple[AnisotropicGrid, object]:
    grid_data = dict(grid_data)
    substeps = grid_data.pop("substeps", 1)
    if "spacings" in grid_data:
        grid = AnisotropicGrid(**grid_data)
    else:
        grid = spec.grid(grid_data["extents"], T, grid_data["t_steps"])
    return grid, substeps


def initial_data(spec: OperatorSpec, grid: AnisotropicGrid, text: str, seed: int | None):
    gauss = parse_initial(text)
    if gauss is not None:
        return heat_gaussian(grid, 0.0, gauss[0], gauss[1], periodic=spec.periodic)
    if text.startswith("random:"):
        return _random_initial(grid, float(text.split(":", 1)[1]), seed)
    field = read_field(text)
    return field.samples[-1]


def resolve_substeps(spec, u0, grid, T, substeps, margin=1.3):
    if substeps != "auto":
        return int(substeps)
    tau = stable_tau(spec, u0, grid.spacings)
    return max(1, int(math.ceil(T / (grid.t_steps - 1) / tau * margin)))


def run_solve(spec, grid_data, T, initial, seed=None):
    grid, substeps = build_grid(spec, grid_data, T)
    u0 = initial_data(spec, grid, initial, seed)
    substeps = resolve_substeps(spec, u0, grid, T, substeps)
    return solve(spec, u0, T, grid, substeps=substeps)


def cmd_solve(args):
    spec = OperatorSpec.from_dict(_load_json(args.spec))
    field = run_solve(spec, _load_json(args.grid), args.T, args.initial, args.seed)
    write_field(args.output, field)
    if args.csv:
        export_csv(args.csv, field)
    meta = {k: v for k, v in field.metadata.items() if k != "mass"}
    mass = field.metadata["mass"]
    out = {"manifest": manifest("solve", {"T": args.T, "initial": args.initial, "seed": args.seed},
                                {"spec": _json_input(args.spec), "grid": _json_input(args.grid)}),
           "output": Path(args.output).name, "metadata": meta,
           "mass_drift": max(abs(v - mass[0]) for v in mass)}
    _emit(args, out, [f"wrote {args.output}", f"steps = {meta['steps']}, substeps = {meta['substeps']}",
                      f"clip events = {meta['clip_events']}, mass drift = {out['mass_drift']:.3e}"])
    return 0


# -- verify-energy / iterate -------------------------------------------------

def nested_geoms(geom: CylinderGeometry, nest):
    return [geom.scaled(f, f) for f in nest]


def cmd_verify_energy(args):
    field = read_field(args.field)
    cfg = ExponentConfig.load(args.config)
    geom = CylinderGeometry.load(args.geom)
    rep = membership_report(field, cfg, args.levels, nested_geoms(geom, args.nest),
                            periodic=args.periodic, fit=not args.no_fit, threads=args.threads)
    params = {"levels": args.levels, "nest": args.nest, "periodic": args.periodic,
              "fit": not args.no_fit, "C0": args.C0}
    out = {"manifest": manifest("verify-energy", params, {
        "field": _file_input(args.field), "config": _json_input(args.config),
        "geom": _json_input(args.geom)}), **rep.to_dict(), "passes": rep.passes(args.C0)}
    if args.csv:
        _write_csv(args.csv, ["geom", "k", "lhs", "rhs", "ratio"],
                   [[i // len(args.levels), L.k, L.lhs_total, L.rhs_total, L.ratio]
                    for i, L in enumerate(rep.ledgers)])
    _emit(args, out, [f"C = {rep.constant:.6g} over {len(rep.ledgers)} tests",
                      "pass" if rep.passes(args.C0) else f"fail: C > {args.C0}"])
    return 0 if rep.passes(args.C0) else 1


def cmd_iterate(args):
    field = read_field(args.field)
    cfg = ExponentConfig.load(args.config)
    geom = CylinderGeometry.load(args.geom)
    mode = resolve_mode(cfg, args.mode)
    d = derive_indices(cfg)
    trace = compute_trace(field, cfg, build_ladder(args.k, d.m, args.J), build_cylinders(geom, args.J),
                          mode, args.s, B=args.B, tol=args.tol, threads=args.threads)
    params = {"k": args.k, "s": args.s, "mode": mode, "J": args.J, "B": args.B, "tol": args.tol}
    out = {"manifest": manifest("iterate", params, {
        "field": _file_input(args.field), "config": _json_input(args.config),
        "geom": _json_input(args.geom)}), "trace": trace.to_dict()}
    if args.csv:
        _write_csv(args.csv, ["j", "k_j", "y_j"], trace.csv_rows())
    _emit(args, out, [f"y_0 = {trace.y[0]:.6g}, y_J = {trace.y[-1]:.6g}", trace.verdict])
    return 0 if trace.converged else 1


# -- report ------------------------------------------------------------------

def _report_setup(args):
    if args.preset:
        setup = json.loads(json.dumps(PRESETS[args.preset]))
        inputs = {"preset": args.preset}
    else:
        missing = [n for n in ("spec", "grid", "geom", "T", "gamma") if getattr(args, n) is None]
        if missing:
            raise DeGiorgiError(f"report without --preset needs {', '.join('--' + n for n in missing)}")
        setup = dict(PRESETS["heat3d"])
        setup.update(spec=_load_json(args.spec), grid=_load_json(args.grid),
                     geom=_load_json(args.geom), T=args.T, gamma=args.gamma)
        inputs = {"spec": _json_input(args.spec), "grid": _json_input(args.grid),
                  "geom": _json_input(args.geom)}
    for key in ("initial", "gamma", "C0", "J", "tol"):
        val = getattr(args, key, None)
        if val is not None:
            setup[key] = val
    if args.levels is not None:
        setup["levels"] = args.levels
    return setup, inputs


def run_report(setup: dict, threads: int = 1, seed=None):
    """solve -> verify-energy -> iterate -> sup verdict; returns (payload, series, ok)."""
    stages = {}
    stage = "setup"
    try:
        spec = OperatorSpec.from_dict(setup["spec"])
        cfg = spec.config()
        geom = CylinderGeometry.from_dict(setup["geom"])
        stage = "solve"
        field = run_solve(spec, setup["grid"], setup["T"], setup["initial"], seed)
        meta = dict(field.metadata)
        mass = meta.pop("mass")
        stages["solve"] = {"metadata": meta, "mass_drift": max(abs(v - mass[0]) for v in mass)}
        stage = "verify-energy"
        mem = membership_report(field, cfg, setup["levels"], nested_geoms(geom, setup["nest"]),
                                periodic=spec.periodic, threads=threads)
        stages["verify-energy"] = {**mem.to_dict(), "C0": setup["C0"], "passes": mem.passes(setup["C0"])}
        stage = "iterate"
        trace, verdict = run_de_giorgi(field, cfg, geom, setup["gamma"], J=setup["J"],
                                       tol=setup["tol"], threads=threads)
        stages["iterate"] = {**trace.to_dict(), "passes": trace.converged}
        stages["sup-verdict"] = verdict.to_dict()
    except (DeGiorgiError, ValueError) as exc:
        return {"failed_stage": stage, "error": str(exc), "stages": stages}, {}, False
    ok = all(s["passes"] for s in stages.values() if "passes" in s)
    series = {
        "trace.csv": (["j", "k_j", "y_j"], trace.csv_rows()),
        "membership.csv": (["geom", "k", "lhs", "rhs", "ratio"],
                           [[i // len(setup["levels"]), L.k, L.lhs_total, L.rhs_total, L.ratio]
                            for i, L in enumerate(mem.ledgers)]),
        "mass.csv": (["t", "mass"], list(zip(field.grid.times.tolist(), mass))),
    }
    payload = {"regime": classify(cfg).to_dict(), "stages": stages, "passes": ok}
    return payload, series, ok


def cmd_report(args):
    setup, inputs = _report_setup(args)
    payload, series, ok = run_report(setup, args.threads, args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, (header, rows) in series.items():
        _write_csv(out_dir / name, header, rows)
    doc = {"manifest": manifest("report", {"setup": setup, "seed": args.seed}, inputs),
           "outputs": sorted(series), **payload}
    (out_dir / "report.json").write_text(dumps(doc) + "\n")
    lines = [f"wrote {out_dir / 'report.json'}"]
    if "failed_stage" in payload:
        lines.append(f"stage {payload['failed_stage']} failed: {payload['error']}")
    else:
        st = payload["stages"]
        lines += [f"membership C = {st['verify-energy']['C']:.6g}",
                  f"iteration: {st['iterate']['verdict']}",
                  f"sup / bound = {st['sup-verdict']['ratio']:.6g}",
                  "PASS" if ok else "FAIL"]
    _emit(args, doc, lines)
    return 0 if ok else 1


# -- parser ------------------------------------------------------------------

def _add_config_source(p):
    p.add_argument("--config", help="exponent config JSON")
    p.add_argument("--preset", choices=sorted(CLASSIFY_PRESETS))
    p.add_argument("--example", choices=[DNL_STANDARD, ORLICZ_POWER, ANISOTROPIC_DNL])
    p.add_argument("--N", type=int)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="example parameter; comma-separated for per-axis values")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--json", action="store_true", default=d(False),
                   help="print JSON instead of a summary")
    p.add_argument("--csv", default=d(None), help="write the command's series to this CSV file")
    p.add_argument("--threads", type=int, default=d(1))
    p.add_argument("--seed", type=int, default=d(None), help="seed for random test fields")
    return p


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand
    ap = argparse.ArgumentParser(prog="degiorgi", parents=[_global_flags(False)],
                                 description="Parabolic De Giorgi class laboratory")
    common = _global_flags(True)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", parents=[common], help="regime of an exponent config")
    _add_config_source(p)
    p.add_argument("--s", type=float)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("bound", parents=[common], help="explicit sup bound")
    p.add_argument("--config", required=True)
    p.add_argument("--geom", required=True)
    p.add_argument("--mass", type=float, required=True)
    p.add_argument("--s", type=float)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--form", choices=[PROOF_FORM, THEOREM_FORM], default=PROOF_FORM)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("g-eval", parents=[common], help="truncation energy g(a, b)")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--m", type=float, required=True)
    p.set_defaults(func=cmd_g_eval)

    p = sub.add_parser("solve", parents=[common], help="finite-difference solution")
    p.add_argument("--spec", required=True)
    p.add_argument("--initial", required=True, help="field file, gaussian:sigma,amp or random:amp")
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify-energy", parents=[common], help="energy inequality ledgers")
    p.add_argument("--field", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--geom", required=True)
    p.add_argument("--levels", type=_floats, required=True)
    p.add_argument("--nest", type=_floats, default=[1.0, 0.8, 0.6])
    p.add_argument("--periodic", action="store_true")
    p.add_argument("--no-fit", action="store_true")
    p.add_argument("--C0", type=float, default=2.0)
    p.set_defaults(func=cmd_verify_energy)

    p = sub.add_parser("iterate", parents=[common], help="De Giorgi trace at level k")
    p.add_argument("--field", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--geom", required=True)
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--s", type=float)
    p.add_argument("--mode", choices=["auto", "super", "crit", "sub"], default="auto")
    p.add_argument("--J", type=int, default=10)
    p.add_argument("--B", type=float, default=2.0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_iterate)

    p = sub.add_parser("report", parents=[common], help="full pipeline bundle")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--spec")
    p.add_argument("--grid")
    p.add_argument("--geom")
    p.add_argument("--T", type=float)
    p.add_argument("--initial")
    p.add_argument("--gamma", type=float)
    p.add_argument("--levels", type=_floats)
    p.add_argument("--C0", type=float)
    p.add_argument("--J", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--out", default="report")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DeGiorgiError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
