"""Experiment configuration, execution and CSV output.

A configuration is a flat ``key = value`` text file; ``#`` starts a comment.
Unspecified keys fall back to the model's registered defaults. See
``README.md`` for the full key list.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .baselines import long_path, qvp_multi_streaming, subsampling_sweep
from .core import EnsembleConfig, EstimateSeries, InvalidInputError, NotAvailableError
from .estimator import estimate_series
from .models import effective_truth, get_model

SERIES_HEADER = ("t", "param", "estimate", "truth", "rel_error", "residual_norm", "cond_estimate")
SUBSAMPLING_HEADER = ("delta_h", "estimator", "param", "estimate")
FAST_PROFILE = {"N": 500, "m": 50}
FAST_BASELINE_PATHS = 10

_INT_KEYS = {"n", "N", "m", "seed", "baselines.n_paths", "baselines.n_windows"}
_FLOAT_KEYS = {"h", "epsilon", "ic_min", "ic_max", "h_int", "baselines.path_length",
               "baselines.x0", "baselines.qvp_length"}
_INT_LIST_KEYS = {"drift_exponents", "diff_exponents", "baselines.delta_list",
                  "baselines.qvp_deltas"}
_STR_KEYS = {"model", "out_dir", "name", "time_grid", "drift_tie"}
_BOOL_KEYS = {"baselines.enabled"}


class ConfigError(InvalidInputError):
    def __init__(self, msg, source="<config>", line=None, key=None):
        where = source if line is None else f"{source}:{line}"
        if key:
            where += f" [{key}]"
        super().__init__(f"{where}: {msg}")


def _parse_bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _parse_list(v: str, typ):
    return tuple(typ(x) for x in v.replace(",", " ").split())


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse config text into a typed flat dict (unknown keys are errors)."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", source, lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", source, lineno)
        if key in out:
            raise ConfigError("duplicate key", source, lineno, key)
        try:
            if key in _INT_KEYS:
                out[key] = int(val)
            elif key in _FLOAT_KEYS or key.startswith("params."):
                out[key] = float(val)
            elif key in _INT_LIST_KEYS:
                out[key] = _parse_list(val, int)
            elif key in _BOOL_KEYS:
                out[key] = _parse_bool(val)
            elif key in _STR_KEYS:
                out[key] = val
            else:
                raise ConfigError("unknown key", source, lineno, key)
        except ValueError as exc:
            raise ConfigError(f"bad value {val!r}: {exc}", source, lineno, key) from None
    if "model" not in out:
        raise ConfigError("missing required key 'model'", source)
    return out


def load_config(path) -> dict:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        cfg = parse_config(fh.read(), str(path))
    cfg.setdefault("name", path.stem)
    return cfg


def ic_grid(m: int, lo: float, hi: float, slow_dim: int = 1) -> np.ndarray:
    """``m`` equally spaced initial conditions on ``[lo, hi]`` (a tensor grid in 2D).

    In two dimensions ``m`` is factored as ``a * b`` with ``a`` the largest
    divisor not exceeding ``sqrt(m)``.
    """
    if m < 1 or not hi >= lo:
        raise InvalidInputError(f"invalid initial-condition grid m={m} on [{lo}, {hi}]")
    if slow_dim == 1:
        return np.linspace(lo, hi, m)
    if slow_dim != 2:
        raise InvalidInputError("initial-condition grids are implemented for 1 or 2 dimensions")
    a = max(d for d in range(1, int(math.isqrt(m)) + 1) if m % d == 0)
    b = m // a
    g1, g2 = np.meshgrid(np.linspace(lo, hi, a), np.linspace(lo, hi, b), indexing="ij")
    return np.column_stack([g1.ravel(), g2.ravel()])


def parse_time_grid(spec: Optional[str], n: int) -> list:
    """``None``: 100 evenly spaced steps; ``all``; ``every:k``; or explicit step counts."""
    if spec is None or spec.strip() == "":
        stride = max(1, n // 100)
        grid = list(range(stride, n + 1, stride))
        return grid if grid[-1] == n else grid + [n]
    s = spec.strip().lower()
    if s == "all":
        return list(range(1, n + 1))
    if s.startswith("every:"):
        k = int(s.split(":", 1)[1])
        if k < 1:
            raise InvalidInputError("time grid stride must be positive")
        grid = list(range(k, n + 1, k))
        return grid if grid and grid[-1] == n else grid + [n]
    grid = sorted(set(_parse_list(spec, int)))
    if not grid or grid[0] < 1 or grid[-1] > n:
        raise InvalidInputError(f"time grid steps must lie in [1, {n}]")
    return grid


def _parse_tie(v):
    if v is None or str(v).strip().lower() in ("", "none"):
        return None
    return np.array(_parse_list(v, float) if isinstance(v, str) else v, dtype=np.float64)


@dataclass
class ExperimentResult:
    name: str
    series: EstimateSeries
    series_path: Optional[Path] = None
    subsampling: list = field(default_factory=list)
    subsampling_path: Optional[Path] = None


def resolve(config: dict, fast: bool = False) -> dict:
    """Merge a parsed config with model defaults into a complete experiment description."""
    reg = get_model(config["model"])
    overrides = {k[len("params."):]: v for k, v in config.items() if k.startswith("params.")}
    if "epsilon" in config:
        overrides["epsilon"] = config["epsilon"]
    if "h_int" in config:
        overrides["h_int"] = config["h_int"]
    params = reg.resolve_params(overrides)
    d = reg.experiment_defaults(params)
    d.update({k: v for k, v in config.items() if not k.startswith("params.")})
    if fast:
        for k, v in FAST_PROFILE.items():
            d[k] = min(int(d[k]), v)
        if d.get("baselines.n_paths"):
            d["baselines.n_paths"] = min(d["baselines.n_paths"], FAST_BASELINE_PATHS)
    d["params"] = params
    d.setdefault("seed", 0)
    d.setdefault("name", reg.name)
    d.setdefault("drift_exponents", (1,) if reg.matrix and d.get("drift_model") == "linear" else ())
    d.setdefault("diff_exponents", (0,))
    if reg.matrix and d.get("drift_model") == "none":
        d["drift_exponents"] = ()
    return d


def augment(series: EstimateSeries, derived: list, truth: dict) -> EstimateSeries:
    """Append derived names (fixed multiples of estimated parameters) to a series."""
    rows, diags = [], []
    names = list(series.names)
    extra = [(nm, src, sc) for nm, src, sc in derived if src in series.names]
    names += [nm for nm, _, _ in extra if nm not in names]
    for row, dg in zip(series.estimates, series.diagnostics):
        row = dict(row)
        dg = dict(dg)
        for nm, src, sc in extra:
            row[nm] = sc * row[src]
            dg[nm] = dg[src]
        rows.append(row)
        diags.append(dg)
    tr = {nm: v for nm, v in truth.items() if nm in names}
    return EstimateSeries(times=list(series.times), estimates=rows, truth=tr, diagnostics=diags,
                          names=tuple(names))


def run_experiment(config, fast: bool = False, out_dir=None, threads: Optional[int] = None,
                   write: bool = True) -> ExperimentResult:
    """Run one experiment from a config dict or file path and write its CSV files."""
    if not isinstance(config, dict):
        config = load_config(config)
    d = resolve(config, fast)
    reg = get_model(d["model"])
    params = d["params"]
    model = reg.build(params)
    n = int(d["n"])
    ics = ic_grid(int(d["m"]), float(d["ic_min"]), float(d["ic_max"]), model.slow_dim)
    cfg = EnsembleConfig(h=float(d["h"]), n=n, N=int(d["N"]), ics=ics, master_seed=int(d["seed"]))
    grid = parse_time_grid(d.get("time_grid"), n)
    try:
        truth = effective_truth(reg.name, params)
    except NotAvailableError:
        truth = {}
    tie = _parse_tie(d.get("drift_tie"))
    series = estimate_series(model, cfg, d["drift_exponents"], d["diff_exponents"], grid,
                             truth=truth, drift_tie=tie, threads=threads)
    series = augment(series, reg.derived(params), truth)
    result = ExperimentResult(name=d["name"], series=series)

    if d.get("baselines.enabled"):
        result.subsampling = run_baselines(model, d, threads)

    if write:
        out = Path(out_dir or d.get("out_dir") or ".")
        out.mkdir(parents=True, exist_ok=True)
        result.series_path = out / f"{d['name']}.csv"
        write_series_csv(series, result.series_path)
        if d.get("baselines.enabled"):
            result.subsampling_path = out / "subsampling.csv"
            write_subsampling_csv(result.subsampling, result.subsampling_path)
    return result


def run_baselines(model, d: dict, threads=None) -> list:
    """Classical estimators: subsampling sweep on one long path, optional multi-path QVP."""
    if model.slow_dim != 1 or model.is_ode:
        raise InvalidInputError("baselines are implemented for scalar stochastic models")
    h = float(d["h"])
    seed = int(d["seed"])
    rows = []
    deltas = d.get("baselines.delta_list", (1, 2, 5, 10, 20, 50, 100, 200, 500, 1000))
    T = float(d.get("baselines.path_length", 5000.0))
    x0 = float(d.get("baselines.x0", 0.5))
    path = long_path(model, x0, h, T, seed)
    for he, mle, qvp in subsampling_sweep(path, h, deltas):
        rows.append((he, "mle", "drift_1", mle))
        rows.append((he, "qvp", "diff_0", qvp))
    n_paths = int(d.get("baselines.n_paths", 0))
    if n_paths > 0:
        J_g = tuple(d["diff_exponents"])
        qd = d.get("baselines.qvp_deltas", (1,))
        T_q = float(d.get("baselines.qvp_length", 1000.0))
        n_q = int(round(T_q / h))
        n_w = int(d.get("baselines.n_windows", int(round(T_q))))
        theta, _, _ = qvp_multi_streaming(model, x0, h, n_q, seed, n_paths, qd, J_g, n_w,
                                          threads=threads)
        for j, v in zip(J_g, theta):
            rows.append((min(qd) * h, "qvp_multi", f"diff_{j}", float(v)))
    return rows


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return format(float(v), ".17g")


def series_rows(series: EstimateSeries):
    for t, row, dg in zip(series.times, series.estimates, series.diagnostics):
        for nm in series.names:
            est = row[nm]
            tr = series.truth.get(nm)
            rel = abs(est - tr) / abs(tr) if tr not in (None, 0.0) else None
            resid, cond = dg.get(nm, (None, None))
            yield (_fmt(t), nm, _fmt(est), _fmt(tr), _fmt(rel), _fmt(resid), _fmt(cond))


def _write(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_series_csv(series: EstimateSeries, path):
    _write(path, SERIES_HEADER, series_rows(series))


def write_subsampling_csv(rows, path):
    _write(path, SUBSAMPLING_HEADER, ((_fmt(a), b, c, _fmt(v)) for a, b, c, v in rows))


def _num(s):
    return None if s == "" else float(s)


def read_series_csv(path) -> EstimateSeries:
    """Inverse of :func:`write_series_csv`."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != SERIES_HEADER:
            raise InvalidInputError(f"{path}: unexpected header {header}")
        times, rows, diags, names, truth = [], [], [], [], {}
        for rec in reader:
            t = float(rec[0])
            if not times or times[-1] != t:
                times.append(t)
                rows.append({})
                diags.append({})
            nm = rec[1]
            if nm not in names:
                names.append(nm)
            rows[-1][nm] = float(rec[2])
            if rec[3] != "":
                truth[nm] = float(rec[3])
            resid, cond = _num(rec[5]), _num(rec[6])
            diags[-1][nm] = (math.nan if resid is None else resid,
                             math.nan if cond is None else cond)
    return EstimateSeries(times=times, estimates=rows, truth=truth, diagnostics=diags,
                          names=tuple(names))


def read_subsampling_csv(path) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [(float(a), b, c, float(v)) for a, b, c, v in reader]
