"""Experiment configs, orchestration, and report bundles.

A study is described by a flat ``key = value`` text file (fractions like
1/2 are accepted wherever floats are); every key can be overridden on the
command line with ``--set key=value``. Each run writes a bundle directory
(CSV tables, summary.json, solver_stats.log) atomically: the bundle is
staged in a temp directory and renamed into place. CSV bodies are fully
deterministic; wall-clock timings go only to the stats log.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import shutil
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .geometry import BoxRegion, PatchLayout, PlateShape
from .sparse_linalg import SolverError

__all__ = ["ExperimentConfig", "run", "emit_csv", "main"]

EXIT_VALIDATION = 2
EXIT_SOLVER = 3


# --------------------------------------------------------------------------
# config parsing

def _parse_number(text: str) -> float:
    text = text.strip()
    if "/" in text:
        num, den = text.split("/")
        return float(num) / float(den)
    return float(text)


def _parse_value(kind: str, text: str):
    text = text.strip()
    if kind == "float":
        return _parse_number(text)
    if kind == "int":
        return int(text)
    if kind == "str":
        return text
    if kind == "floatlist":
        return [_parse_number(t) for t in text.split(",") if t.strip()]
    if kind == "intlist":
        return [int(t) for t in text.split(",") if t.strip()]
    if kind == "points":
        pairs = [t for t in text.split(";") if t.strip()]
        return [tuple(_parse_number(c) for c in p.strip(" ()").split(",")) for p in pairs]
    raise ValueError(f"unknown value kind {kind}")


_COMMON_KEYS = {"study": "str", "out": "str", "jobs": "int"}

_SCHEMAS = {
    "capacity": {
        "plate": "str", "radius": "float", "half_side": "float", "vertices": "points",
        "levels": "intlist", "probe_r": "float",
    },
    "cell": {
        "plate": "str", "radius": "float", "half_side": "float", "vertices": "points",
        "epsilons": "floatlist", "R": "float", "h_den": "int", "tol": "float",
    },
    "homog": {
        "plate": "str", "radius": "float", "half_side": "float", "vertices": "points",
        "regime": "str", "p": "float", "q": "float", "epsilons": "floatlist",
        "domain_lo": "points", "domain_hi": "points",
        "source": "str", "source_amplitude": "float", "source_center": "points",
        "source_radius": "float", "fit": "int", "tol": "float",
    },
    "perforated": {
        "plate": "str", "radius": "float", "half_side": "float", "vertices": "points",
        "mode": "str", "epsilons": "floatlist",
        "outer_lo": "points", "outer_hi": "points",
        "inner_lo": "points", "inner_hi": "points",
        "source": "str", "source_amplitude": "float", "source_center": "points",
        "source_radius": "float", "tol": "float", "hz_den": "int",
    },
    "resonance": {
        "plate": "str", "radius": "float", "half_side": "float", "vertices": "points",
        "mode": "str", "eps": "float", "delta": "float", "L": "float", "h_den": "int",
        "k_min": "float", "k_max": "float", "k_steps": "int",
        "inner_lo": "points", "inner_hi": "points",
        "source_center": "points", "source_radius": "float",
        "solve_tol": "float", "max_iter": "int", "locate": "int",
    },
}


class ExperimentConfig:
    """Validated flat key-value configuration of one study."""

    def __init__(self, values: dict):
        study = values.get("study")
        if study not in _SCHEMAS:
            raise ValueError(f"unknown or missing study {study!r}; "
                             f"expected one of {sorted(_SCHEMAS)}")
        schema = {**_COMMON_KEYS, **_SCHEMAS[study]}
        unknown = set(values) - set(schema)
        if unknown:
            raise ValueError(f"unknown config keys for study {study}: {sorted(unknown)}")
        self.study = study
        self.values = dict(values)

    @staticmethod
    def load(path: str, overrides: dict | None = None) -> "ExperimentConfig":
        raw: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected 'key = value'")
                key, _, val = line.partition("=")
                raw[key.strip()] = val.strip()
        raw.update(overrides or {})
        study = raw.get("study")
        if study not in _SCHEMAS:
            raise ValueError(f"unknown or missing study {study!r}")
        schema = {**_COMMON_KEYS, **_SCHEMAS[study]}
        parsed = {}
        for key, text in raw.items():
            if key not in schema:
                raise ValueError(f"unknown config key {key!r} for study {study}")
            parsed[key] = text if key == "study" else _parse_value(schema[key], text)
        return ExperimentConfig(parsed)

    def get(self, key, default=None):
        return self.values.get(key, default)

    def require(self, key):
        if key not in self.values:
            raise ValueError(f"missing required config key {key!r}")
        return self.values[key]


def _plate_from(cfg: ExperimentConfig) -> PlateShape:
    kind = cfg.get("plate", "disk")
    if kind == "disk":
        return PlateShape.disk(cfg.get("radius", 1.0))
    if kind == "square":
        return PlateShape.square(cfg.get("half_side", 1.0))
    if kind == "polygon":
        return PlateShape.polygon(cfg.require("vertices"))
    raise ValueError(f"unknown plate kind {kind!r}")


def _source_from(cfg: ExperimentConfig, box: BoxRegion):
    name = cfg.get("source", "constant")
    amp = cfg.get("source_amplitude", -1.0)
    if name == "constant":
        return lambda X, Y, Z: np.full_like(X, amp)
    if name == "sine":
        lo, ext = box.lo, box.extents
        return lambda X, Y, Z: amp * (np.sin(np.pi * (X - lo[0]) / ext[0])
                                      * np.sin(np.pi * (Y - lo[1]) / ext[1])
                                      * np.sin(np.pi * (Z - lo[2]) / ext[2]))
    if name == "blob":
        from .helmholtz_resonance import bump_source
        center = cfg.require("source_center")[0]
        radius = cfg.get("source_radius", 0.25)
        return bump_source(center, radius, amp)
    raise ValueError(f"unknown source {name!r}")


# --------------------------------------------------------------------------
# report emission

def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def emit_csv(rows, path: str, columns=None):
    """Write homogeneous row dicts: header + comma-separated 12-digit values."""
    rows = list(rows)
    if rows:
        keys = list(rows[0].keys()) if columns is None else list(columns)
        for r in rows:
            if list(r.keys()) != keys and columns is None:
                raise ValueError("rows are not homogeneous")
    else:
        keys = list(columns or [])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(keys) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(r.get(k, "")) for k in keys) + "\n")


class ReportBundle:
    def __init__(self, path: str):
        self.path = path
        self.tables: dict[str, list] = {}
        self.summary: dict = {}
        self.log_lines: list[str] = []

    def log(self, msg: str):
        self.log_lines.append(msg)

    def write(self, final_dir: str):
        parent = os.path.dirname(os.path.abspath(final_dir)) or "."
        os.makedirs(parent, exist_ok=True)
        tmp = tempfile.mkdtemp(prefix=".bundle-", dir=parent)
        try:
            for name, rows in self.tables.items():
                emit_csv(rows, os.path.join(tmp, name + ".csv"))
            with open(os.path.join(tmp, "summary.json"), "w", encoding="utf-8") as fh:
                json.dump(self.summary, fh, indent=2, sort_keys=True)
                fh.write("\n")
            with open(os.path.join(tmp, "solver_stats.log"), "w", encoding="utf-8") as fh:
                fh.write("\n".join(self.log_lines) + ("\n" if self.log_lines else ""))
            if os.path.exists(final_dir):
                shutil.rmtree(final_dir)
            os.replace(tmp, final_dir)
        except Exception:
            shutil.rmtree(tmp, ignore_errors=True)
            raise


def _pool_map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# studies

def _run_capacity(cfg: ExperimentConfig, bundle: ReportBundle, jobs: int):
    from .capacity import plate_capacity
    plate = _plate_from(cfg)
    levels = cfg.get("levels", [3])

    def one(n):
        t0 = time.perf_counter()
        r = plate_capacity(plate, n)
        bundle.log(f"capacity level {n}: {r.panels} panels, {time.perf_counter()-t0:.1f}s")
        return {"plate": cfg.get("plate", "disk"), "n": n, "panels": r.panels,
                "c_omega": r.c_omega, "dipole_x": r.dipole[0], "dipole_y": r.dipole[1],
                "error_estimate": r.error_estimate}

    rows = _pool_map(one, list(levels), jobs)
    bundle.tables["capacity"] = rows
    bundle.summary["c_omega"] = rows[-1]["c_omega"]
    bundle.summary["levels"] = list(levels)


def _run_cell(cfg: ExperimentConfig, bundle: ReportBundle, jobs: int):
    from .cell_steklov import cell_eigenvalue
    plate = _plate_from(cfg)
    eps_list = cfg.require("epsilons")
    if not eps_list:
        raise ValueError("epsilons list is empty")
    R = cfg.get("R", 4.0)
    den = cfg.get("h_den", 8)
    if den < 8:
        raise ValueError("h_den must be >= 8 (h = eps / h_den <= eps / 8)")
    tol = cfg.get("tol", 1e-8)

    def one(eps):
        t0 = time.perf_counter()
        r = cell_eigenvalue(eps, R, eps / den, plate, tol=tol)
        bundle.log(f"cell eps={eps}: lam={r.lam:.6e}, {time.perf_counter()-t0:.1f}s")
        return {"epsilon": eps, "R": R, "h": eps / den, "lambda": r.lam,
                "lambda_over_eps": r.lam / eps, "residual": r.residual}

    rows = _pool_map(one, sorted(eps_list, reverse=True), jobs)
    bundle.tables["cell"] = rows
    e = np.array([r["epsilon"] for r in rows])
    q = np.array([r["lambda_over_eps"] for r in rows])
    extrap = float(q[0]) if len(rows) == 1 else float(np.polyfit(e, q, 1)[1])
    bundle.summary["lambda_over_eps_extrapolated"] = extrap


def _run_homog(cfg: ExperimentConfig, bundle: ReportBundle, jobs: int):
    from .capacity import plate_capacity
    from .homogenization_lab import (MixedBvpSpec, convergence_study, fit_effective_Q,
                                     grid_for_layout, schedule_delta, solve_perturbed)
    plate = _plate_from(cfg)
    regime = cfg.require("regime")
    p = cfg.get("p")
    q = cfg.get("q", 0.0)
    eps_list = cfg.require("epsilons")
    if not eps_list:
        raise ValueError("epsilons list is empty")
    lo = cfg.get("domain_lo", [(0.0, 0.0, -1.0)])[0]
    hi = cfg.get("domain_hi", [(2.0, 2.0, 0.0)])[0]
    tol = cfg.get("tol", 1e-9)
    probe = grid_for_layout(max(eps_list), schedule_delta(regime, max(eps_list), p), lo, hi)
    f = _source_from(cfg, probe)
    t0 = time.perf_counter()
    report = convergence_study(regime, eps_list, q, f, plate, lo, hi, p, tol=tol)
    bundle.log(f"homog study {regime}: {time.perf_counter()-t0:.1f}s")
    rows = []
    do_fit = bool(cfg.get("fit", 1)) and regime == "pfix"
    c_omega = plate_capacity(plate, 3).c_omega if do_fit else None
    for r in report.rows:
        row = dict(r)
        row.setdefault("l2_err", row.get("l2_err_paper", ""))
        row.setdefault("h1_err", row.get("h1_err_paper", ""))
        if do_fit:
            eps = r["eps"]
            delta = r["delta"]
            domain = grid_for_layout(eps, delta, lo, hi)
            layout = PatchLayout(plate, eps, delta, domain.top_face_rect())
            u = solve_perturbed(MixedBvpSpec(domain, layout, q,
                                             np.asarray(_sample(domain, f))), tol=tol)
            t0 = time.perf_counter()
            fit = fit_effective_Q(u, domain, f, q, layout, c_omega, tol=tol)
            bundle.log(f"fit eps={eps}: Q_emp={fit.Q_emp:.4f}, {time.perf_counter()-t0:.1f}s")
            row["q_emp"] = fit.Q_emp
            row["q_cand_paper"] = fit.candidates["paper"]
            row["q_cand_flux"] = fit.candidates["flux"]
        else:
            row["q_emp"] = row["q_cand_paper"] = row["q_cand_flux"] = ""
        rows.append(row)
    cols = ["eps", "delta", "h", "l2_err", "h1_err", "trace_norm",
            "q_emp", "q_cand_paper", "q_cand_flux"]
    bundle.tables["homog"] = [{c: r.get(c, "") for c in cols} for r in rows]
    bundle.summary["regime"] = regime
    bundle.summary["monotone"] = report.monotone
    if do_fit and rows:
        bundle.summary["q_emp"] = rows[-1]["q_emp"]


def _sample(box, f):
    from .homogenization_lab import sample_on_grid
    return sample_on_grid(box, f)


def _run_perforated(cfg: ExperimentConfig, bundle: ReportBundle, jobs: int):
    from .perforated_lab import ScreenMode, decoupling_study
    plate = _plate_from(cfg)
    mode = ScreenMode(cfg.require("mode"))
    regime = "pinf" if mode is ScreenMode.DIRICHLET else "p0"
    eps_list = cfg.require("epsilons")
    if not eps_list:
        raise ValueError("epsilons list is empty")
    o_lo = cfg.get("outer_lo", [(-1.0, -1.0, -2.0)])[0]
    o_hi = cfg.get("outer_hi", [(3.0, 3.0, 1.0)])[0]
    i_lo = cfg.get("inner_lo", [(0.0, 0.0, -1.0)])[0]
    i_hi = cfg.get("inner_hi", [(2.0, 2.0, 0.0)])[0]
    probe = BoxRegion.make(o_lo, o_hi, (o_hi[0] - o_lo[0]))
    F = _source_from(cfg, probe)
    hz_den = cfg.get("hz_den")
    z_rule = None
    if hz_den:
        z_rule = lambda eps, delta: delta / hz_den
    t0 = time.perf_counter()
    rows = decoupling_study(o_lo, o_hi, i_lo, i_hi, mode, regime, eps_list, F,
                            plate, tol=cfg.get("tol", 1e-9), z_coarsen=z_rule)
    bundle.log(f"perforated study {mode.value}: {time.perf_counter()-t0:.1f}s")
    cols = ["eps", "delta", "inner_err", "outer_err", "screen_trace_or_jump"]
    bundle.tables["perforated"] = [{c: r[c] for c in cols} for r in rows]
    bundle.summary["mode"] = mode.value
    bundle.summary["regime"] = regime


def _run_resonance(cfg: ExperimentConfig, bundle: ReportBundle, jobs: int):
    from .helmholtz_resonance import (ScatterSpec, bump_source, locate_pole,
                                      reference_eigenfrequency, response_scan)
    from .perforated_lab import ScreenMode
    plate = _plate_from(cfg)
    mode = ScreenMode(cfg.get("mode", "neumann"))
    eps = cfg.require("eps")
    delta = cfg.get("delta", math.sqrt(eps) if mode is ScreenMode.NEUMANN else eps * eps)
    i_lo = cfg.get("inner_lo", [(0.0, 0.0, -1.0)])[0]
    i_hi = cfg.get("inner_hi", [(2.0, 2.0, 0.0)])[0]
    den = cfg.get("h_den", 4)
    h = eps * delta / den
    inner = BoxRegion.make(i_lo, i_hi, h)
    layout = PatchLayout(plate, eps, delta, inner.top_face_rect())
    center = cfg.get("source_center", [(1.0, 1.0, -0.5)])[0]
    F = bump_source(center, cfg.get("source_radius", 0.35))
    spec = ScatterSpec(inner, layout, mode, F, L=cfg.get("L", 2.0))
    k0 = reference_eigenfrequency(inner, mode)
    k_min = cfg.get("k_min", 0.9 * k0)
    k_max = cfg.get("k_max", 1.1 * k0)
    steps = cfg.get("k_steps", 9)
    solve_tol = cfg.get("solve_tol", 1e-8)
    max_iter = cfg.get("max_iter", 30000)
    t0 = time.perf_counter()
    scan = response_scan(spec, np.linspace(k_min, k_max, steps),
                         tol=solve_tol, max_iter=max_iter)
    bundle.log(f"resonance scan ({steps} points): {time.perf_counter()-t0:.1f}s")
    bundle.tables["resonance"] = [
        {"k_re": float(k), "k_im": 0.0, "amplitude": float(a)}
        for k, a in zip(scan.k_values, scan.amplitudes)]
    bundle.summary["k0"] = k0
    bundle.summary["peak_k"] = scan.peak_k
    bundle.summary["fitted_peak"] = scan.fitted_peak
    bundle.summary["half_width"] = scan.half_width
    if cfg.get("locate", 1):
        second = None
        if scan.fitted_peak is not None and scan.half_width is not None:
            second = scan.fitted_peak - 1j * scan.half_width
        t0 = time.perf_counter()
        pole = locate_pole(spec, scan.peak_k, second_point=second,
                           solve_tol=solve_tol, max_iter=max_iter)
        bundle.log(f"pole iteration ({pole.iterations} solves): {time.perf_counter()-t0:.1f}s")
        bundle.summary["pole"] = {"tau_re": pole.tau.real, "tau_im": pole.tau.imag,
                                  "k0": pole.k0, "residual": pole.residual}


_RUNNERS = {
    "capacity": _run_capacity,
    "cell": _run_cell,
    "homog": _run_homog,
    "perforated": _run_perforated,
    "resonance": _run_resonance,
}


def run(cfg: ExperimentConfig) -> ReportBundle:
    """Execute one study and write its bundle; returns the in-memory bundle."""
    out = cfg.get("out")
    if not out:
        raise ValueError("missing required config key 'out'")
    jobs = cfg.get("jobs", os.cpu_count() or 1)
    bundle = ReportBundle(out)
    _RUNNERS[cfg.study](cfg, bundle, jobs)
    bundle.write(out)
    return bundle


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="screenlab",
        description="Boundary-homogenization experiments: capacity, cell eigenvalue, "
                    "alternating boundary conditions, perforated screens, resonance poles.")
    parser.add_argument("study", choices=sorted(_SCHEMAS),
                        help="which study to run")
    parser.add_argument("--config", required=True, help="key = value config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    parser.add_argument("--out", help="output bundle directory (overrides config)")
    parser.add_argument("--jobs", type=int, help="parallel jobs (default: cpu count)")
    args = parser.parse_args(argv)

    overrides = {}
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects KEY=VALUE, got {item!r}", file=sys.stderr)
            return EXIT_VALIDATION
        key, _, val = item.partition("=")
        overrides[key.strip()] = val.strip()
    if args.out:
        overrides["out"] = args.out
    if args.jobs:
        overrides["jobs"] = str(args.jobs)
    overrides["study"] = args.study

    try:
        cfg = ExperimentConfig.load(args.config, overrides)
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        bundle = run(cfg)
    except (ValueError,) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        fail = ReportBundle(cfg.get("out"))
        fail.log(f"solver failure: {exc}")
        try:
            fail.write(cfg.get("out"))
        except OSError:
            pass
        return EXIT_SOLVER
    print(f"bundle written to {bundle.path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
