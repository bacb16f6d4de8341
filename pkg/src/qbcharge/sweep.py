"""Sweeps over manifest grids, convergence reports, fit pipelines, plot scripts.

A sweep writes one trajectory CSV per grid point, ``index.json`` (the fully
resolved manifest and the point list, deterministic) and ``summary.json``
(wall times and check counters, which vary between runs). Workers only
compute; the parent process writes every file.
"""
from __future__ import annotations

import json
import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis.curves import (fit_damped_cosine, fit_saturation, is_oscillatory,
                              period_window)
from .analysis.scaling import (fit_charging_rate_scaling, fit_damping_scaling,
                               fit_frequency_scaling, fit_saturation_levels)
from .collision import ProtocolConfig, Trajectory, run_protocol, trajectory_filename
from .exceptions import RankDeficiencyError, ShapeMismatchError
from .manifest import RunManifest
from .transmon import TransmonSpec, solve_spectrum

log = logging.getLogger(__name__)

INDEX_NAME = "index.json"
SUMMARY_NAME = "summary.json"
FITS_NAME = "fits.json"
DEVIATION_THRESHOLD = 1e-3
# Coherent fits span this many oscillation periods from n = 0.
FIT_PERIODS = 10


def _run_point(config: ProtocolConfig):
    t0 = time.perf_counter()
    try:
        traj = run_protocol(config)
    except Exception as exc:  # isolate the point; the collector records it
        return None, f"{type(exc).__name__}: {exc}", 0, time.perf_counter() - t0
    return traj, None, traj.checks, time.perf_counter() - t0


def _density_rows(trajs, qs):
    """Rows (n, q, dE/E_f) for trajectories that share every axis except q."""
    rows = []
    for q, traj in zip(qs, trajs):
        rows += [(int(n), q, e) for n, e in zip(traj.n, traj.stored_energy)]
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


def _point_id(cfg: ProtocolConfig) -> str:
    return trajectory_filename(cfg)[:-4]


def run_sweep(manifest: RunManifest, output_dir=None, workers: int | None = None) -> dict:
    """Run every grid point of ``manifest``; returns the summary document."""
    out = Path(output_dir) if output_dir is not None else manifest.resolved_output()
    out.mkdir(parents=True, exist_ok=True)
    workers = workers or manifest.resolved_workers()
    configs = manifest.configs()
    log.info("sweep %s: %d grid points, %d workers", manifest.name, len(configs), workers)
    t0 = time.perf_counter()
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point, configs))
    else:
        results = [_run_point(c) for c in configs]

    points, failures, timings = [], [], {}
    checks = 0
    trajs = {}
    for cfg, (traj, err, n_checks, wall) in zip(configs, results):
        fname = trajectory_filename(cfg)
        entry = {"id": _point_id(cfg), "file": fname, "g": cfg.coupling_g, "tau": cfg.tau,
                 "q": cfg.ancilla.q, "c": cfg.ancilla.c}
        timings[fname] = wall
        if err is None:
            (out / fname).write_text(traj.csv_text(), newline="")
            entry["status"] = "ok"
            checks += n_checks
            trajs[(cfg.coupling_g, cfg.tau, cfg.ancilla.c, cfg.ancilla.q)] = traj
        else:
            entry["status"] = "failed"
            entry["error"] = err
            failures.append({"file": fname, "error": err})
            log.error("grid point %s failed: %s", fname, err)
        points.append(entry)

    densities = []
    if len(manifest.q) > 1:
        for g in manifest.g:
            for tau in manifest.tau:
                for c in manifest.c:
                    got = [(q, trajs[(g, tau, c, q)]) for q in manifest.q if (g, tau, c, q) in trajs]
                    if not got:
                        continue
                    name = f"density_r{manifest.transmon.ej_over_ec:g}_g{g:g}_tau{tau:g}_c{c:g}.csv"
                    rows = _density_rows([t for _, t in got], [q for q, _ in got])
                    text = "n,q,delta_E_over_Ef\n" + "".join(
                        f"{n},{q:.12g},{e:.12g}\n" for n, q, e in rows)
                    (out / name).write_text(text, newline="")
                    densities.append({"file": name, "g": g, "tau": tau, "c": c})

    index = {"manifest": manifest.to_dict(), "product_size": manifest.product_size,
             "points": points, "densities": densities}
    (out / INDEX_NAME).write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    summary = {"name": manifest.name, "product_size": manifest.product_size,
               "completed": len(points) - len(failures), "failed": failures,
               "validity_checks": checks, "wall_time_s": time.perf_counter() - t0,
               "point_wall_time_s": timings, "workers": workers, "output_dir": str(out)}
    (out / SUMMARY_NAME).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def convergence_report(spec: TransmonSpec, probe: ProtocolConfig, variants=None,
                       threshold: float = DEVIATION_THRESHOLD) -> dict:
    """Compare the probe trajectory under enlarged truncations.

    ``variants`` is a list of ``(charge_cutoff, battery_levels)``; by default
    the battery window grows by 5 and doubles, and the charge cutoff grows by
    10 and doubles. Deviations are the largest |dE(n)| difference in units
    of the base E_f.
    """
    if variants is None:
        n0, d0 = spec.charge_cutoff, spec.battery_levels
        variants = [(n0, d0 + 5), (n0, 2 * d0), (n0 + 10, d0), (2 * n0, d0)]
    base_cfg = replace(probe, transmon=spec)
    base = run_protocol(base_cfg)
    base_spec = solve_spectrum(spec)
    nb = base_spec.bound_count
    rows = []
    for n_max, d in variants:
        vspec = replace(spec, charge_cutoff=int(n_max), battery_levels=int(d))
        vs = solve_spectrum(vspec)
        traj = run_protocol(replace(probe, transmon=vspec))
        dev = float(np.max(np.abs(traj.stored_energy * vs.e_f - base.stored_energy * base_spec.e_f))
                    / base_spec.e_f)
        k = min(nb, base_spec.dim, vs.dim)
        shift = float(np.max(np.abs(vs.levels[:k] - base_spec.levels[:k])
                             / np.maximum(np.abs(base_spec.levels[:k]), 1.0)))
        rows.append({"charge_cutoff": int(n_max), "battery_levels": int(d),
                     "max_deviation": dev, "bound_level_shift": shift,
                     "flagged": bool(dev > threshold)})
    return {"base": {"charge_cutoff": spec.charge_cutoff, "battery_levels": spec.battery_levels},
            "probe": {"g": probe.coupling_g, "tau": probe.tau, "q": probe.ancilla.q,
                      "c": probe.ancilla.c, "n_collisions": probe.n_collisions},
            "threshold": threshold, "rows": rows,
            "flagged": any(r["flagged"] for r in rows)}


def _load_index(index_path):
    index_path = Path(index_path)
    return index_path.parent, json.loads(index_path.read_text())


def _fit_point(traj: Trajectory) -> tuple[str, dict]:
    if is_oscillatory(traj.stored_energy):
        stop = period_window(traj, FIT_PERIODS)[1]
        truncated = stop > int(traj.n[-1]) + 1
        fit = fit_damped_cosine(traj, (0, stop))
        return "damped_cosine", {"omega": fit.omega, "gamma": fit.gamma,
                                 "amplitude_scale": fit.amplitude_scale,
                                 "residual_rms": fit.residual_rms, "converged": fit.converged,
                                 "window": list(fit.window), "window_truncated": truncated}
    f, rate = fit_saturation(traj)
    return "saturation", {"f": f, "gamma": rate}


def fit_index(index_path, write: bool = True) -> dict:
    """Fit every trajectory of a sweep and the scaling laws its grid supports."""
    root, index = _load_index(index_path)
    fits = {"damped_cosine": {}, "saturation": {}, "errors": {}}
    for p in index["points"]:
        if p.get("status") != "ok":
            continue
        traj = Trajectory.from_csv(root / p["file"])
        try:
            kind, res = _fit_point(traj)
        except (ShapeMismatchError, ValueError) as exc:
            fits["errors"][p["id"]] = str(exc)
            continue
        fits[kind][p["id"]] = {"g": p["g"], "tau": p["tau"], "q": p["q"], "c": p["c"], **res}

    groups = {}
    for kind in ("damped_cosine", "saturation"):
        for rec in fits[kind].values():
            groups.setdefault((kind, rec["tau"], rec["c"]), []).append(rec)
    laws = {}
    for (kind, tau, c), recs in sorted(groups.items()):
        key = f"tau={tau:g},c={c:g}"
        if kind == "damped_cosine":
            ok = [r for r in recs if r["converged"]]
            attempts = [("frequency_power_law", fit_frequency_scaling,
                         [(r["g"], r["q"], r["omega"]) for r in ok]),
                        ("damping_power_law", fit_damping_scaling,
                         [(r["g"], r["q"], r["gamma"]) for r in ok])]
        else:
            attempts = [("charging_rate_power_law", fit_charging_rate_scaling,
                         [(r["g"], r["q"], r["gamma"]) for r in recs]),
                        ("saturation_level_linear", fit_saturation_levels,
                         [(r["g"], r["q"], r["f"]) for r in recs])]
        for law, fn, pts in attempts:
            try:
                laws.setdefault(law, {})[key] = fn(pts).to_dict() if pts else {
                    "skipped": "no converged points"}
            except (RankDeficiencyError, ValueError) as exc:
                laws.setdefault(law, {})[key] = {"skipped": str(exc)}
    fits.update(laws)
    if write:
        (root / FITS_NAME).write_text(json.dumps(_finite(fits), indent=2, sort_keys=True) + "\n")
    return fits


def _finite(obj):
    """JSON has no NaN; write null instead."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


_TRAJ_SCRIPT = '''"""Stored energy and efficiency of {file}."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
with open(here / "{rel}") as fh:
    rows = list(csv.DictReader(fh))
n = [int(r["n"]) for r in rows]
de = [float(r["delta_E_over_Ef"]) for r in rows]
eff = [float(r["efficiency"]) if r["efficiency"] else float("nan") for r in rows]

fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6, 6))
ax1.plot(n, de)
ax1.set_ylabel("stored energy / E_f")
ax1.set_title("g={g:g}, tau={tau:g}, q={q:g}, c={c:g}")
ax2.plot(n, eff)
ax2.set_ylabel("efficiency")
ax2.set_xlabel("collisions n")
fig.tight_layout()
fig.savefig(here / "{stem}.png", dpi=150)
'''

_DENSITY_SCRIPT = '''"""Stored energy over (n, q) from {file}."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

here = Path(__file__).resolve().parent
with open(here / "{rel}") as fh:
    rows = [(int(r["n"]), float(r["q"]), float(r["delta_E_over_Ef"])) for r in csv.DictReader(fh)]
ns = sorted({{r[0] for r in rows}})
qs = sorted({{r[1] for r in rows}})
grid = np.full((len(qs), len(ns)), np.nan)
col = {{n: i for i, n in enumerate(ns)}}
row = {{q: i for i, q in enumerate(qs)}}
for n, q, e in rows:
    grid[row[q], col[n]] = e

fig, ax = plt.subplots(figsize=(7, 4))
mesh = ax.pcolormesh(ns, qs, grid, shading="nearest", vmin=0.0)
fig.colorbar(mesh, ax=ax, label="stored energy / E_f")
ax.set_xlabel("collisions n")
ax.set_ylabel("q")
ax.set_title("g={g:g}, tau={tau:g}, c={c:g}")
fig.tight_layout()
fig.savefig(here / "{stem}.png", dpi=150)
'''


def emit_plot_scripts(index_path, script_dir=None) -> list[Path]:
    """Write one matplotlib script per trajectory and per density table.

    Nothing is plotted here; the scripts read the CSVs next to the index.
    """
    root, index = _load_index(index_path)
    points = [p for p in index.get("points", []) if p.get("status") == "ok"]
    densities = index.get("densities", [])
    if not points and not densities:
        warnings.warn(f"{index_path}: index lists no trajectories; no scripts written",
                      RuntimeWarning, stacklevel=2)
        return []
    script_dir = Path(script_dir) if script_dir is not None else root / "plots"
    script_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for p, template in [(p, _TRAJ_SCRIPT) for p in points] + [(d, _DENSITY_SCRIPT) for d in densities]:
        csv_path = root / p["file"]
        if not csv_path.is_file():
            raise FileNotFoundError(f"index references missing CSV {csv_path}")
        stem = Path(p["file"]).stem
        rel = Path(_relpath(csv_path, script_dir)).as_posix()
        text = template.format(file=p["file"], rel=rel, stem=stem, g=p["g"], tau=p["tau"],
                               q=p.get("q", math.nan), c=p["c"])
        target = script_dir / f"plot_{stem}.py"
        target.write_text(text, newline="")
        written.append(target)
    return written


def _relpath(path: Path, start: Path) -> str:
    return os.path.relpath(path.resolve(), start.resolve())
