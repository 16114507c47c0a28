"""Run orchestration shared by the CLI and the acceptance suite."""

from __future__ import annotations

import math
import os
import platform
import shutil
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import RunConfig
from .diagnostics import (
    FIT_HEADER,
    FLUX_HEADER,
    HORIZON_HEADER,
    FluxRangeError,
    HorizonSeries,
    PowerLawFit,
    default_window,
    epsilon_scaling_report,
    fit_power_law,
    flux_table,
    foliation_indices,
    horizon_series,
    relative_drift,
    richardson_order,
)
from .evolution import (
    Field,
    ManufacturedSolution,
    RecordPlan,
    evolve,
    evolve_manufactured,
    write_snapshot,
)
from .grid import EvolutionGrid
from .io import write_csv, write_json
from .modes import ConfigurationError

__all__ = [
    "CONVERGENCE_HEADER",
    "RunProducts",
    "build_grid",
    "charge_study",
    "check_only_epsilon_differs",
    "convergence_study",
    "execute",
    "worker_count",
    "write_products",
]

CONVERGENCE_HEADER = "quantity,h_coarse,h_mid,h_fine,order"
CHARGE_HEADER = "eps_a,eps_b,shift_a,shift_b,ratio,floor,detected"


def worker_count(n_jobs: int) -> int:
    cap = os.environ.get("ERNWAVE_THREADS")
    avail = os.cpu_count() or 1
    if cap:
        try:
            avail = max(1, min(avail, int(cap)))
        except ValueError:
            raise ConfigurationError(f"ERNWAVE_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(avail, n_jobs))


def build_grid(cfg: RunConfig) -> EvolutionGrid:
    return EvolutionGrid(cfg.grid_spec(), cfg.angular_obj(), cfg.background_obj())


def _backend(cfg):
    return None if cfg.run.backend == "auto" else cfg.run.backend


def _auto_taus(grid, R):
    span = grid.n_v * grid.h
    cand = np.linspace(grid.spec.v0 + 0.2 * span, grid.spec.v0 + 0.9 * span, 36)
    taus = []
    for t in cand:
        j = int(round((t - grid.spec.v0) / grid.h))
        tau = float(grid.v[j])
        try:
            foliation_indices(grid, tau, R)
        except FluxRangeError:
            continue
        if tau not in taus:
            taus.append(tau)
    return taus


def _proxy_rows(grid, proxies):
    """Interior rows whose retarded time is nearest each requested ``u``."""
    u = grid.u
    out = {}
    for target in proxies:
        i = int(np.argmin(np.abs(u[:-1] - target)))
        if 1 <= i <= grid.n_u - 1 and abs(u[i] - target) <= max(grid.h, 0.01 * abs(target)):
            out[float(target)] = i
    return out


def plan_for(cfg: RunConfig, grid: EvolutionGrid):
    d = cfg.diagnostics
    taus = list(d.tau_list) if d.tau_list else _auto_taus(grid, d.R)
    rows, cols = set(), set()
    for tau in taus:
        j, i = foliation_indices(grid, tau, d.R)
        rows |= {i - 1, i, i + 1}
        cols |= {j - 1, j, j + 1}
    proxies = _proxy_rows(grid, d.proxy_u)
    for i in proxies.values():
        rows |= {i - 1, i, i + 1}
    stride = d.snapshot_stride or max(1, math.ceil(max(grid.n_u, grid.n_v) / 100))
    plan = RecordPlan(full=False, rows=tuple(sorted(rows)), cols=tuple(sorted(cols)),
                      tail_rows=5, snapshot_stride=stride, region_r0=d.r0,
                      bulk_deltas=(d.bulk_delta,),
                      weighted_deltas=tuple(sorted(set(d.weighted_deltas) | {d.series_delta})))
    return plan, taus, proxies


@dataclass
class RunProducts:
    cfg: RunConfig
    field: Field
    series: HorizonSeries | None = None
    proxies: dict = field(default_factory=dict)
    flux_rows: list = field(default_factory=list)
    fits: list = field(default_factory=list)
    taus: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)
    mms_error: float | None = None


def _safe_fit(name, t, y, window, out):
    y = np.abs(np.asarray(y, float))
    t = np.asarray(t, float)
    sel = (t >= window[0]) & (t <= window[1])
    if sel.sum() < 8 or np.any(~(y[sel] > 0)) or np.any(t[sel] <= 0):
        return None
    f = fit_power_law(t, y, window)
    out.append((name, f))
    return f


def fit_products(cfg: RunConfig, series: HorizonSeries, fld: Field, proxies, flux_rows):
    fits = []
    window = default_window(series.v, cfg.diagnostics.fit_fraction)
    _safe_fit("psi", series.v, series.psi, window, fits)
    _safe_fit("Tpsi", series.v, series.Tpsi, window, fits)
    _safe_fit("PhiH2", series.v, series.PhiH2, window, fits)
    if fld.grid.n_modes > 1:
        _safe_fit("dtheta_psi", series.v, series.dtheta_psi, window, fits)
    for dlt, arr in sorted(fld.weighted_max.items()):
        _safe_fit(f"PhiH2_weighted_delta{dlt:g}", fld.grid.v, arr, window, fits)
    for u, s in sorted(proxies.items()):
        _safe_fit(f"PhiH2_u{u:g}", s.v, s.PhiH2, window, fits)
    # I^p = near-horizon flux plus the T-flux bridge, l=0 sector, no commutation
    rows = [r for r in flux_rows if r[2] == 0 and r[3] == "0" and r[4] == "base"]
    for p in sorted({r[1] for r in rows}):
        sel = [r for r in rows if r[1] == p]
        t = np.array([r[0] for r in sel])
        y = np.array([r[5] + r[6] for r in sel])
        if len(t) >= 2:
            _safe_fit(f"I_p{p:g}", t, y, default_window(t, cfg.diagnostics.fit_fraction), fits)
    return fits


def execute(cfg: RunConfig, fluxes: bool = True) -> RunProducts:
    t0 = time.time()
    grid = build_grid(cfg)
    if cfg.run.mode == "manufactured":
        d = cfg.data
        if d.r_center - d.half_width < 1.2 * cfg.background.mass:
            raise ConfigurationError("manufactured solutions need data support inside r >= 1.2M")
        sol = ManufacturedSolution(d.epsilon, 0.1, d.r_center, d.half_width, d.modes)
        fld, err = evolve_manufactured(grid, sol, cfg.nonlinearity_obj(), _backend(cfg))
        prod = RunProducts(cfg, fld, mms_error=err)
        prod.manifest = _manifest(cfg, grid, fld, time.time() - t0, extra={"manufactured_max_error": err})
        return prod
    plan, taus, proxy_rows = plan_for(cfg, grid)
    fld = evolve(grid, cfg.initial_data(), cfg.nonlinearity_obj(), plan, _backend(cfg))
    series = horizon_series(fld, cfg.diagnostics.series_delta)
    proxies = {u: horizon_series(fld, cfg.diagnostics.series_delta, row=i)
               for u, i in proxy_rows.items()}
    prod = RunProducts(cfg, fld, series, proxies, taus=taus)
    if fluxes and taus:
        d = cfg.diagnostics
        sectors = ("0", ">=1", "all") if grid.n_modes > 1 else ("0",)
        prod.flux_rows = flux_table(fld, taus, d.p_list, (0, 1), sectors, ("base", "commuted"),
                                    d.R, d.r1, d.bulk_delta)
    prod.fits = fit_products(cfg, series, fld, proxies, prod.flux_rows)
    prod.manifest = _manifest(cfg, grid, fld, time.time() - t0, series=series, proxies=proxies)
    return prod


def _manifest(cfg, grid, fld, wall, series=None, proxies=None, extra=None):
    man = {
        "code_version": __version__,
        "config": cfg.to_dict(),
        "wall_time_s": wall,
        "evolution_time_s": fld.wall_time,
        "backend": fld.backend,
        "created_unix": time.time(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "grid": {
            "n_u": grid.n_u, "n_v": grid.n_v, "h": grid.h,
            "compactify": grid.spec.compactify,
            "u_match": grid.u_s, "stretch_K": grid.K,
            "n_modes": grid.n_modes, "n_nodes": grid.angular.n_nodes,
        },
        "corrector_max_updates": list(fld.corrector),
    }
    if series is not None:
        man["horizon_row"] = {"row": series.row, "u": series.u,
                              "r_minus_M_min": float(series.r_minus_M.min()),
                              "r_minus_M_max": float(series.r_minus_M.max())}
    if proxies:
        man["proxy_rows"] = {f"{u:g}": {"row": s.row, "r_minus_M_max": float(s.r_minus_M.max())}
                             for u, s in proxies.items()}
    if extra:
        man.update(extra)
    return man


def _series_rows(series: HorizonSeries):
    return series.table().tolist()


def _stage(outdir):
    """Temporary sibling directory; files move into ``outdir`` only on success."""
    outdir = os.path.abspath(outdir)
    parent = os.path.dirname(outdir) or "."
    try:
        os.makedirs(parent, exist_ok=True)
        return tempfile.mkdtemp(prefix=".ernwave-", dir=parent), outdir
    except OSError as exc:
        raise ConfigurationError(f"output directory {outdir} is not writable: {exc.strerror}") from exc


def _commit(tmp, outdir):
    try:
        os.makedirs(outdir, exist_ok=True)
        if not os.access(outdir, os.W_OK):
            raise PermissionError(13, "Permission denied")
        for name in sorted(os.listdir(tmp)):
            os.replace(os.path.join(tmp, name), os.path.join(outdir, name))
    except OSError as exc:
        raise ConfigurationError(f"output directory {outdir} is not writable: {exc.strerror}") from exc
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def write_products(prod: RunProducts, outdir) -> None:
    tmp, outdir = _stage(outdir)
    try:
        if prod.mms_error is None:
            write_snapshot(prod.field, os.path.join(tmp, "snapshot.csv"))
            write_csv(os.path.join(tmp, "horizon_series.csv"), HORIZON_HEADER,
                      _series_rows(prod.series))
            for u, s in sorted(prod.proxies.items()):
                write_csv(os.path.join(tmp, f"proxy_series_u{u:g}.csv"), HORIZON_HEADER,
                          _series_rows(s))
            write_csv(os.path.join(tmp, "flux_report.csv"), FLUX_HEADER, prod.flux_rows)
            write_csv(os.path.join(tmp, "fits.csv"), FIT_HEADER,
                      [f.row(name) for name, f in prod.fits])
        else:
            write_snapshot(prod.field, os.path.join(tmp, "snapshot.csv"),
                           stride=max(1, max(prod.field.grid.n_u, prod.field.grid.n_v) // 100))
        write_json(os.path.join(tmp, "manifest.json"), prod.manifest)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    _commit(tmp, outdir)


# -- convergence ------------------------------------------------------------------

def _check_levels(levels):
    levels = [float(h) for h in levels]
    if len(levels) < 3:
        raise ConfigurationError("a convergence study needs at least three levels")
    for a, b in zip(levels, levels[1:]):
        if abs(a / b - 2.0) > 1e-9:
            raise ConfigurationError(f"levels must be in 2:1 ratio, got {a:g} -> {b:g}")
    return levels


def _level_summary(cfg: RunConfig):
    """Per-level quantities for the convergence table (runs in worker processes)."""
    if cfg.run.mode == "manufactured":
        prod = execute(cfg)
        g = prod.field.grid
        return {"h": g.h, "mms_error": prod.mms_error,
                "probe": prod.field.phi[:, :, 0].copy()}
    grid = build_grid(cfg)
    fld = evolve(grid, cfg.initial_data(), cfg.nonlinearity_obj(),
                 RecordPlan(tail_rows=5), _backend(cfg))
    s = horizon_series(fld, cfg.diagnostics.series_delta)
    span = s.v[-1] - s.v[0]
    out = {"h": grid.h, "series": s,
           "PhiH_drift": relative_drift(s.v, s.PhiH, s.v[0] + 0.5 * span)}
    try:
        out["HNL0_drift"] = relative_drift(
            s.v, s.HNL0, s.v[0] + (1 - cfg.diagnostics.fit_fraction) * span)
    except Exception:
        out["HNL0_drift"] = math.nan
    return out


def _map(fn, items):
    n = worker_count(len(items))
    if n == 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _pair_order(a, b):
    if not (a > 0 and b > 0):
        return math.nan
    return math.log2(a / b)


def convergence_study(cfg: RunConfig, levels):
    """Rows ``(quantity, h_coarse, h_mid, h_fine, order)`` over the last three levels."""
    levels = _check_levels(levels)
    cfgs = [cfg.with_spacing(h) for h in levels]
    results = _map(_level_summary, cfgs)
    rows = []
    for k in range(len(levels) - 2):
        c, m, f = results[k:k + 3]
        hs = (c["h"], m["h"], f["h"])
        if cfg.run.mode == "manufactured":
            rows.append(("manufactured_error", *hs, _pair_order(m["mms_error"], f["mms_error"])))
            rows.append(("solution_probe", *hs, richardson_order(
                c["probe"], m["probe"][::2, ::2], f["probe"][::4, ::4])))
        else:
            sc, sm, sf = c["series"], m["series"], f["series"]
            rows.append(("solution_probe", *hs, richardson_order(
                sc.psi, sm.psi[::2], sf.psi[::4])))
            rows.append(("PhiH_drift", *hs, _pair_order(m["PhiH_drift"], f["PhiH_drift"])))
            rows.append(("HNL0_drift", *hs, _pair_order(m["HNL0_drift"], f["HNL0_drift"])))
    return rows, results


# -- charge scaling -----------------------------------------------------------------

def check_only_epsilon_differs(cfg_a: RunConfig, cfg_b: RunConfig):
    da, db = cfg_a.to_dict(), cfg_b.to_dict()
    da["data"].pop("epsilon")
    db["data"].pop("epsilon")
    da.pop("output")
    db.pop("output")
    if da != db:
        diff = sorted(f"{s}.{k}" for s in da for k in da[s] if da[s][k] != db[s].get(k))
        raise ConfigurationError(f"runs must differ only in epsilon; also differ in {diff}")


def charge_study(cfg: RunConfig, eps_pair):
    if len(eps_pair) != 2:
        raise ConfigurationError("--eps takes exactly two amplitudes")
    cfgs = [cfg.replace("data", epsilon=float(e)) for e in eps_pair]
    check_only_epsilon_differs(*cfgs)
    fields = []
    for c in cfgs:
        grid = build_grid(c)
        fields.append(evolve(grid, c.initial_data(), c.nonlinearity_obj(),
                             RecordPlan(tail_rows=5), _backend(c)))
    if fields[0].grid.spec != fields[1].grid.spec:
        raise ConfigurationError("charge study needs identical grids")
    series = [horizon_series(f) for f in fields]
    rep = epsilon_scaling_report(series[0], series[1])
    return rep, series, cfgs


def write_charge(rep, series, cfgs, outdir, wall):
    tmp, outdir = _stage(outdir)
    try:
        write_csv(os.path.join(tmp, "charge_report.csv"), CHARGE_HEADER,
                  [(cfgs[0].data.epsilon, cfgs[1].data.epsilon, rep.shift_a, rep.shift_b,
                    rep.ratio, rep.floor, rep.detected)])
        for c, s in zip(cfgs, series):
            write_csv(os.path.join(tmp, f"horizon_series_eps{c.data.epsilon:g}.csv"),
                      HORIZON_HEADER, _series_rows(s))
        write_json(os.path.join(tmp, "manifest.json"), {
            "code_version": __version__, "config": cfgs[0].to_dict(),
            "epsilons": [c.data.epsilon for c in cfgs], "wall_time_s": wall,
            "created_unix": time.time(), "message": rep.message})
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    _commit(tmp, outdir)


def write_convergence(rows, results, cfg, levels, outdir, wall):
    tmp, outdir = _stage(outdir)
    try:
        write_csv(os.path.join(tmp, "convergence.csv"), CONVERGENCE_HEADER, rows)
        for h, res in zip(levels, results):
            if "series" in res:
                sub = os.path.join(tmp, f"level_h{h:g}")
                os.makedirs(sub)
                write_csv(os.path.join(sub, "horizon_series.csv"), HORIZON_HEADER,
                          _series_rows(res["series"]))
        write_json(os.path.join(tmp, "manifest.json"), {
            "code_version": __version__, "config": cfg.to_dict(), "levels": list(levels),
            "wall_time_s": wall, "created_unix": time.time()})
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    _commit(tmp, outdir)
