"""Command-line entry point: ``artifact <kind> [--config f.yaml] [--override k=v ...]``."""
from __future__ import annotations

import argparse
import copy
import math
import platform
import re
import sys
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .io import read_json, write_csv, write_json

KINDS = ("spectrum", "edges", "windows", "train", "theory-curves", "speciation",
         "memgap", "validate", "sample")

# Canonical schema; every key is listed with its default.
DEFAULTS: dict = {
    "kind": "edges",
    "seed": 0,
    "out": "results",
    "threads": 1,
    "mixture": {
        "weights": [0.5, 0.5],
        "variances": [0.5, 0.25],
        "centroid_gram": [[0.0, 0.0], [0.0, 0.0]],
    },
    "sizes": {"N": 100, "P": 6000, "M": 3000},
    "t": 0.001,
    "training": {
        "eta_factor": 5e-5,
        "tau_min": 1e-2,
        "tau_max": 1e2,
        "snapshots": 60,
        "runs": 50,
        "noise_draws": 100,
        "n_test": 2000,
        "threshold": 1.0,
    },
    "solver": {
        "grid_points": 10000,
        "lambda_min": 1e-8,
        "lambda_max": 1e2,
        "auto_extend": True,
        "n_eps": 60,
        "eps_start": 100.0,
        "eps_stop": 1e-9,
        "tol": 1e-12,
        "maxit": 200,
    },
    "windows": {"sigma1_sq": 0.5, "v_grid": [0.25, 0.5, 1.0], "b1_grid": [0.25, 0.5, 0.75]},
    "speciation": {
        "sizes": [[50, 100], [500, 1000]],
        "imbalance": "weak",
        "b": [0.7, 0.3],
        "a": 0.5,
        "t_tilde": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
        "M": 2000,
        "runs": None,
        "method": "gep",
        "variance": 0.5,
    },
    "memgap": {
        "descriptors": None,
        "thresholds": [1.2],
        "b_grid": [0.25, 0.5, 0.75],
        "N": 100,
        "P": 10000,
        "M": 500,
        "t": 0.01,
        "runs": 1,
    },
    "sample": {"n": 1000, "time": None},
}


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads exponent floats without a dot (``1e-4``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:[0-9][0-9_]*(?:\.[0-9_]*)?(?:[eE][-+]?[0-9]+)?|\.[0-9_]+(?:[eE][-+]?[0-9]+)?"""
               r"""|[-+]?\.(?:inf|Inf|INF)|\.(?:nan|NaN|NAN))$"""),
    list("-+0123456789."))


def _yaml(text: str):
    return yaml.load(text, Loader=_Loader)


def _numeric(*vals) -> bool:
    return all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals)


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid config:\n  - " + "\n  - ".join(problems))


def _merge(base: dict, upd: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in upd.items():
        if k not in base:
            raise ConfigError([f"unknown key {path + k!r}"])
        if isinstance(base[k], dict) and isinstance(v, dict):
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = v
    return out


def apply_override(cfg: dict, item: str) -> dict:
    """``a.b.c=value`` with value parsed as YAML."""
    if "=" not in item:
        raise ConfigError([f"override {item!r} is not key=value"])
    key, raw = item.split("=", 1)
    value = _yaml(raw)
    parts = key.strip().split(".")
    upd: dict = {}
    cur = upd
    for p in parts[:-1]:
        cur[p] = {}
        cur = cur[p]
    cur[parts[-1]] = value
    return _merge(cfg, upd)


@dataclass
class ExperimentConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def from_dict(cls, d: dict | None) -> "ExperimentConfig":
        return cls(_merge(DEFAULTS, d or {}))

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(_yaml(Path(path).read_text()) or {})

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def dump(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True)

    def __getitem__(self, k):
        return self.data[k]

    def mixture_spec(self, N: int | None = None):
        from .gmm import MixtureSpec
        m = self.data["mixture"]
        return MixtureSpec(tuple(m["weights"]), tuple(m["variances"]),
                           np.asarray(m["centroid_gram"], dtype=float),
                           N or self.data["sizes"]["N"])

    def validate(self) -> None:
        d = self.data
        bad: list[str] = []

        def num(path, v, lo=None, strict=True, integer=False):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                bad.append(f"{path} must be a finite number, got {v!r}")
                return
            if integer and int(v) != v:
                bad.append(f"{path} must be an integer, got {v!r}")
            if lo is not None and (v <= lo if strict else v < lo):
                bad.append(f"{path} must be {'>' if strict else '>='} {lo}, got {v!r}")

        if d["kind"] not in KINDS:
            bad.append(f"kind must be one of {KINDS}, got {d['kind']!r}")
        num("seed", d["seed"], 0, strict=False, integer=True)
        num("threads", d["threads"], 0, integer=True)
        for k in ("N", "P", "M"):
            num(f"sizes.{k}", d["sizes"][k], 0, integer=True)
        num("t", d["t"], 0)
        try:
            self.mixture_spec()
        except (ValueError, TypeError) as exc:
            bad.append(f"mixture: {exc}")
        tr = d["training"]
        for k in ("eta_factor", "tau_min", "tau_max"):
            num(f"training.{k}", tr[k], 0)
        if _numeric(tr["tau_min"], tr["tau_max"]) and tr["tau_min"] >= tr["tau_max"]:
            bad.append("training.tau_min must be below training.tau_max")
        for k in ("snapshots", "runs", "noise_draws", "n_test"):
            num(f"training.{k}", tr[k], 0, integer=True)
        num("training.threshold", tr["threshold"], 1.0, strict=False)
        so = d["solver"]
        num("solver.grid_points", so["grid_points"], 2, strict=False, integer=True)
        num("solver.lambda_min", so["lambda_min"], 0)
        num("solver.lambda_max", so["lambda_max"], 0)
        num("solver.n_eps", so["n_eps"], 2, strict=False, integer=True)
        num("solver.eps_start", so["eps_start"], 0)
        num("solver.eps_stop", so["eps_stop"], 0)
        num("solver.tol", so["tol"], 0)
        num("solver.maxit", so["maxit"], 0, integer=True)
        if _numeric(so["lambda_min"], so["lambda_max"]) and not so["lambda_min"] < so["lambda_max"]:
            bad.append("solver.lambda_min must be below solver.lambda_max")
        if _numeric(so["eps_stop"], so["eps_start"]) and not so["eps_stop"] < so["eps_start"]:
            bad.append("solver.eps_stop must be below solver.eps_start")
        w = d["windows"]
        num("windows.sigma1_sq", w["sigma1_sq"], 0)
        for v in w["v_grid"]:
            num("windows.v_grid[]", v, 0)
        for b in w["b1_grid"]:
            num("windows.b1_grid[]", b, 0)
            if isinstance(b, (int, float)) and b >= 1:
                bad.append(f"windows.b1_grid entries must be < 1, got {b}")
        sp = d["speciation"]
        if sp["imbalance"] not in ("weak", "strong", "subextensive"):
            bad.append(f"speciation.imbalance must be weak|strong|subextensive, got {sp['imbalance']!r}")
        if sp["method"] not in ("gep", "largetime"):
            bad.append("speciation.method must be gep|largetime")
        if not (_numeric(sp["a"]) and 0 <= sp["a"] <= 1):
            bad.append(f"speciation.a must lie in [0, 1], got {sp['a']!r}")
        for pair in sp["sizes"]:
            if not (isinstance(pair, (list, tuple)) and len(pair) == 2 and _numeric(*pair) and min(pair) >= 1):
                bad.append(f"speciation.sizes entries must be [N, P] positive, got {pair}")
        for tt in sp["t_tilde"]:
            num("speciation.t_tilde[]", tt, 0)
        num("speciation.M", sp["M"], 0, integer=True)
        if sp["runs"] is not None:
            num("speciation.runs", sp["runs"], 0, integer=True)
        mg = d["memgap"]
        if d["kind"] == "memgap" and not mg["descriptors"]:
            bad.append("memgap.descriptors must name a descriptor CSV")
        for th in mg["thresholds"]:
            num("memgap.thresholds[]", th, 1.0, strict=False)
        for b in mg["b_grid"]:
            if not (isinstance(b, (int, float)) and 0 < b < 1):
                bad.append(f"memgap.b_grid entries must lie in (0, 1), got {b!r}")
        for k in ("N", "P", "M", "runs"):
            num(f"memgap.{k}", mg[k], 0, integer=True)
        num("memgap.t", mg["t"], 0)
        num("sample.n", d["sample"]["n"], 0, integer=True)
        if d["sample"]["time"] is not None:
            num("sample.time", d["sample"]["time"], 0, strict=False)
        if bad:
            raise ConfigError(bad)


def seed_protocol(master: int, index: int, label: str) -> int:
    """Child seed for stream ``label`` of run ``index``: SeedSequence spawn keys
    (index, crc32(label)) under the master entropy, reduced to one uint64."""
    if master < 0 or index < 0:
        raise ValueError("seeds and indices must be non-negative")
    ss = np.random.SeedSequence(int(master), spawn_key=(int(index), zlib.crc32(label.encode())))
    return int(ss.generate_state(1, np.uint64)[0])


# ------------------------------------------------------------------ helpers

def _clock(cfg):
    from .gmm import DiffusionClock
    return DiffusionClock(float(cfg["t"]))


def _spectral_inputs(cfg):
    from . import spectral
    so = cfg["solver"]
    eps = spectral.default_eps_schedule(int(so["n_eps"]), float(so["eps_start"]), float(so["eps_stop"]))
    return eps


def _grid(cfg, params):
    from . import spectral
    so = cfg["solver"]
    lo, hi, n = float(so["lambda_min"]), float(so["lambda_max"]), int(so["grid_points"])
    if so["auto_extend"]:
        per_decade = (n - 1) / math.log10(hi / lo)
        return spectral.auto_grid(params, per_decade, lo, hi)
    return np.geomspace(lo, hi, n)


def _solve(cfg):
    from . import spectral
    sz = cfg["sizes"]
    spec = cfg.mixture_spec()
    params = spectral.SpectralParams.from_spec(spec, _clock(cfg), sz["P"] / sz["N"], sz["M"] / sz["N"])
    so = cfg["solver"]
    sol = spectral.solve_grid(params, _grid(cfg, params), _spectral_inputs(cfg),
                              tol=float(so["tol"]), maxit=int(so["maxit"]))
    return params, sol


def _taus(cfg):
    tr = cfg["training"]
    return np.geomspace(tr["tau_min"], tr["tau_max"], int(tr["snapshots"]))


class _Cells:
    """Per-cell JSON checkpoints under out/cells so interrupted sweeps resume."""

    def __init__(self, out: Path, name: str):
        self.dir = out / "cells" / name
        self.dir.mkdir(parents=True, exist_ok=True)

    def get(self, key: str, fn):
        f = self.dir / f"{key}.json"
        if f.exists():
            return read_json(f)
        val = fn()
        write_json(f, val)
        return val


def _curves_to_json(c) -> dict:
    return {k: np.asarray(v).tolist() for k, v in c.columns().items()}


def _curves_from_json(d: dict, weights):
    from .dynamics import ErrorCurves
    C = len(weights)
    return ErrorCurves(np.array(d["tau"]), np.array(d["e_train"]), np.array(d["e_test"]),
                       np.array([d[f"e_test_c{i + 1}"] for i in range(C)]),
                       np.array([d[f"e_score_c{i + 1}"] for i in range(C)]), tuple(weights))


def _times_summary(curves, taus, threshold) -> list[dict]:
    from .dynamics import extract_times
    out = []
    for c, row in enumerate(curves.e_test_c):
        tm = extract_times(taus, row, threshold)
        out.append({"class": c, "tau_g": tm.tau_g, "tau_m": tm.tau_m, "crossed": tm.crossed})
    return out


# ------------------------------------------------------------------ runners

def _run_spectrum(cfg, out, man):
    params, sol = _solve(cfg)
    write_csv(out / "spectrum.csv", sol.columns())
    loc, w = sol.point_mass
    write_json(out / "spectrum.json", {
        "bulks": sol.bulk_intervals(), "continuous_mass": sol.continuous_mass(),
        "point_mass": {"location": loc, "weight": w}, "diagnostics": sol.diagnostics,
        "S": params.S, "K": params.K})
    man["diagnostics"] += sol.diagnostics
    return ["spectrum.csv", "spectrum.json"]


def _run_edges(cfg, out, man):
    from . import spectral
    params, sol = _solve(cfg)
    ed = spectral.solve_edges(params, sol)
    write_json(out / "edges.json", ed.to_dict())
    man["diagnostics"] += ed.diagnostics
    return ["edges.json"]


def _run_windows(cfg, out, man):
    from . import spectral
    from .gmm import DiffusionClock, MixtureSpec
    w = cfg["windows"]
    sz = cfg["sizes"]
    cells = _Cells(out, "windows")
    rows = []
    for v in w["v_grid"]:
        for b1 in w["b1_grid"]:
            def cell(v=v, b1=b1):
                spec = MixtureSpec((b1, 1 - b1), (w["sigma1_sq"], v * w["sigma1_sq"]),
                                   np.zeros((2, 2)), 1)
                params = spectral.SpectralParams.from_spec(spec, DiffusionClock(cfg["t"]),
                                                           sz["P"] / sz["N"], sz["M"] / sz["N"])
                sol = spectral.solve_grid(params, _grid(cfg, params), _spectral_inputs(cfg))
                try:
                    ed = spectral.solve_edges(params, sol)
                    return {"w_g": ed.w_g, "w_m": ed.w_m, "merged": ed.merged}
                except ValueError:
                    return {"w_g": None, "w_m": None, "merged": True}
            r = cells.get(f"v{v:g}_b{b1:g}", cell)
            rows.append({"v": v, "b1": b1, **r})
    write_csv(out / "windows.csv", {k: [r[k] for r in rows] for k in ("v", "b1", "w_g", "w_m", "merged")})
    return ["windows.csv"]


def _run_curves(cfg, out, man, simulate: bool):
    from .dynamics import average_curves, simulate_curves, theory_curves
    sz, tr = cfg["sizes"], cfg["training"]
    spec = cfg.mixture_spec()
    clock = _clock(cfg)
    taus = _taus(cfg)
    label = "train" if simulate else "theory"
    cells = _Cells(out, label)
    seeds = [seed_protocol(cfg["seed"], r, label) for r in range(int(tr["runs"]))]
    man["seeds"][label] = seeds

    def one(r):
        def go():
            if simulate:
                c = simulate_curves(spec, sz["P"], sz["M"], clock, taus, seeds[r], tr["noise_draws"],
                                    tr["n_test"], tr["eta_factor"])
            else:
                c = theory_curves(spec, sz["P"], sz["M"], clock, taus, seeds[r])
            return _curves_to_json(c)
        return _curves_from_json(cells.get(f"run{r:04d}", go), spec.weights)

    with ThreadPoolExecutor(max_workers=int(cfg["threads"])) as pool:
        runs = list(pool.map(one, range(int(tr["runs"]))))
    avg = average_curves(runs)
    name = "train_curves" if simulate else "theory_curves"
    write_csv(out / f"{name}.csv", avg.columns())
    write_json(out / f"{name}_times.json", _times_summary(avg, avg.taus, tr["threshold"]))
    return [f"{name}.csv", f"{name}_times.json"]


def _run_speciation(cfg, out, man):
    from .gmm import MixtureSpec, orthogonal_gram
    from .speciation import Imbalance, speciation_sweep
    sp = cfg["speciation"]
    tmpl = MixtureSpec((0.5, 0.5), (sp["variance"], sp["variance"]), orthogonal_gram([1.0, 1.0]), 1)
    imb = Imbalance(sp["imbalance"], tuple(sp["b"]) if sp["b"] else None, float(sp["a"]))
    files = []
    summary = []
    seed = seed_protocol(cfg["seed"], 0, "speciation")
    man["seeds"]["speciation"] = seed
    curves = speciation_sweep(tmpl, [tuple(s) for s in sp["sizes"]], imb, sp["t_tilde"], int(sp["M"]),
                              sp["runs"], seed, sp["method"])
    for c in curves:
        rows = list(c.rows())
        f = f"speciation_N{c.N}_P{c.P}.csv"
        write_csv(out / f, {k: [r[k] for r in rows] for k in rows[0]})
        files.append(f)
        summary.append({"N": c.N, "P": c.P, "runs": c.n_runs, "crossing": c.crossing().tolist(),
                        "predicted_t_tilde": c.prediction.t_tilde_s.tolist(),
                        "predicted_t": c.prediction.t_s.tolist(), "note": c.prediction.note,
                        "flags": c.flags})
        man["diagnostics"] += c.flags
    write_json(out / "speciation.json", summary)
    return files + ["speciation.json"]


def _run_memgap(cfg, out, man):
    from .memgap import GapConfig, gap_sweep, read_descriptors, write_results
    mg = cfg["memgap"]
    gc = GapConfig(N=int(mg["N"]), P=int(mg["P"]), M=int(mg["M"]), t=float(mg["t"]),
                   n_runs=int(mg["runs"]), seed=seed_protocol(cfg["seed"], 0, "memgap"),
                   taus=(1e-2, 1e5, 300))
    man["seeds"]["memgap"] = gc.seed
    res = gap_sweep(read_descriptors(mg["descriptors"]), mg["thresholds"], mg["b_grid"], gc)
    write_results(out / "memgap.csv", res)
    return ["memgap.csv"]


def _run_sample(cfg, out, man):
    from .gmm import DiffusionClock, forward_noise, realize_centroids, sample_dataset
    spec = cfg.mixture_spec()
    rng = np.random.default_rng(seed_protocol(cfg["seed"], 0, "sample"))
    cents = realize_centroids(spec, rng)
    ds = sample_dataset(spec, cents, int(cfg["sample"]["n"]), rng)
    X = ds.X
    if cfg["sample"]["time"] is not None:
        X = forward_noise(X, DiffusionClock(float(cfg["sample"]["time"])), rng)[0]
    cols = {"label": ds.labels}
    for j in range(X.shape[1]):
        cols[f"x{j}"] = X[:, j]
    write_csv(out / "samples.csv", cols)
    man["diagnostics"] += list(ds.warnings)
    return ["samples.csv"]


def _run_validate(cfg, out, man):
    checks = validation_suite(int(cfg["seed"]))
    write_json(out / "validate.json", checks)
    man["diagnostics"] += [f"{c['name']}: {'PASS' if c['pass'] else 'FAIL'}" for c in checks]
    if not all(c["pass"] for c in checks):
        man["status"] = "failed-checks"
    return ["validate.json"]


def validation_suite(seed: int = 0) -> list[dict]:
    """Small oracle checks: GEP vs Monte Carlo, closed form vs GD, density vs histogram."""
    from . import covariance as cv, dynamics as dy, spectral
    from .gmm import DiffusionClock, MixtureSpec, orthogonal_gram, realize_centroids, sample_dataset
    rng = np.random.default_rng(seed)
    out = []
    N, P, M = 40, 400, 400
    clock = DiffusionClock(0.01)
    spec = MixtureSpec((0.5, 0.5), (0.5, 0.25), orthogonal_gram([1.0, 1.0]), N)
    W = rng.standard_normal((P, N))
    cents = realize_centroids(spec, rng)
    data = sample_dataset(spec, cents, M, rng)
    Ue, Ve = cv.empirical_UV(data, W, clock, 100, rng)
    Ug = cv.gep_U(data, W, spec, cents, clock, rng)
    tv = cv.histogram_tv(np.linalg.eigvalsh(Ue.U), np.linalg.eigvalsh(Ug.U), bins=30)
    out.append({"name": "gep-vs-mc", "value": tv, "tol": 0.15, "pass": tv <= 0.15})
    ev, evec = np.linalg.eigh(Ue.U)
    eta = dy.gd_learning_rate(N, clock)
    res = dy.train_gd(W, data, clock, eta, 2000, [2000], U=Ue.U, V=Ve.V)
    A_cf = dy.closed_form_readout(ev, evec, Ve.V, clock, float(res.taus[0]))
    err = float(np.linalg.norm(res.snapshots[0] - A_cf) / np.linalg.norm(A_cf))
    out.append({"name": "closed-form-vs-gd", "value": err, "tol": 1e-3, "pass": err <= 1e-3})
    cspec = spec.replace(centroid_gram=np.zeros((2, 2)))
    Np, Pp, Mp = 20, 1200, 600
    params = spectral.SpectralParams.from_spec(cspec.replace(dim=Np), clock, Pp / Np, Mp / Np)
    sol = spectral.solve_grid(params)
    Wp = rng.standard_normal((Pp, Np))
    cp = np.zeros((2, Np))
    dp = sample_dataset(cspec.replace(dim=Np), cp, Mp, rng)
    evp = np.linalg.eigvalsh(cv.gep_U(dp, Wp, cspec.replace(dim=Np), cp, clock, rng).U)
    tvd = density_histogram_tv(sol, evp)
    out.append({"name": "density-vs-histogram", "value": tvd, "tol": 0.1, "pass": tvd <= 0.1})
    return out


def density_histogram_tv(sol, evals: np.ndarray, bins: int = 60) -> float:
    """TV distance between the solver density and an eigenvalue histogram on the
    common support (the point mass and everything below the leftmost bulk removed)."""
    lo = sol.bulk_intervals()[0][0]
    e = np.asarray(evals)
    e = e[e >= lo * (1 - 1e-3)]
    lam = sol.lam
    edges = np.geomspace(lo * (1 - 1e-3), max(e.max(), sol.bulk_intervals()[-1][1]) * 1.001, bins + 1)
    h, _ = np.histogram(e, edges)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (sol.rho[1:] + sol.rho[:-1]) * np.diff(lam))])
    th = np.diff(np.interp(edges, lam, cdf))
    return 0.5 * float(np.abs(h / h.sum() - th / th.sum()).sum())


RUNNERS = {
    "spectrum": _run_spectrum,
    "edges": _run_edges,
    "windows": _run_windows,
    "train": lambda c, o, m: _run_curves(c, o, m, True),
    "theory-curves": lambda c, o, m: _run_curves(c, o, m, False),
    "speciation": _run_speciation,
    "memgap": _run_memgap,
    "validate": _run_validate,
    "sample": _run_sample,
}


def run(cfg: ExperimentConfig) -> int:
    """Validate, dispatch, and always leave a manifest describing what was written."""
    cfg.validate()
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    man = {"config": cfg.to_dict(), "version": __version__, "python": platform.python_version(),
           "numpy": np.__version__, "seeds": {"master": cfg["seed"]}, "diagnostics": [],
           "files": [], "status": "running"}
    from . import spectral
    man["saddle_backend"] = spectral.BACKEND
    t0 = time.time()
    try:
        man["files"] = RUNNERS[cfg["kind"]](cfg, out, man)
        if man["status"] == "running":
            man["status"] = "ok"
    except Exception as exc:
        man["status"] = "error"
        man["error"] = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        man["wall_time_s"] = time.time() - t0
        (out / "config.yaml").write_text(cfg.dump())
        write_json(out / "manifest.json", man)
    return 0 if man["status"] == "ok" else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="artifact", description=__doc__)
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--threads", type=int)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        d = cfg.to_dict()
        d["kind"] = args.kind
        if args.seed is not None:
            d["seed"] = args.seed
        if args.out is not None:
            d["out"] = str(args.out)
        if args.threads is not None:
            d["threads"] = args.threads
        for item in args.override:
            d = apply_override(d, item)
        cfg = ExperimentConfig(d)
        return run(cfg)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
