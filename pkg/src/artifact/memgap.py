"""Memorization gaps between a reference class and a partner class built from
per-class descriptors (variance, normalised centroid norm, cosine)."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dynamics import ErrorCurves, average_curves, extract_times, theory_curves
from .gep import TANH, Activation
from .gmm import DiffusionClock, MixtureSpec

DESCRIPTOR_COLUMNS = ("pair_id", "ref_variance", "ref_norm", "partner_variance",
                      "partner_norm", "cosine")
RESULT_COLUMNS = ("pair_id", "b_partner", "threshold", "gap", "tau_m_ref", "tau_m_partner",
                  "tau_g_ref", "tau_g_partner", "flags")


@dataclass(frozen=True)
class PairDescriptor:
    pair_id: str
    ref_variance: float
    ref_norm: float
    partner_variance: float
    partner_norm: float
    cosine: float
    b_partner: float = 0.5

    def __post_init__(self) -> None:
        vals = (self.ref_variance, self.ref_norm, self.partner_variance,
                self.partner_norm, self.cosine, self.b_partner)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"{self.pair_id}: descriptors must be finite")
        if self.ref_variance <= 0 or self.partner_variance <= 0:
            raise ValueError(f"{self.pair_id}: variances must be positive")
        if self.ref_norm < 0 or self.partner_norm < 0:
            raise ValueError(f"{self.pair_id}: norms must be non-negative")
        if abs(self.cosine) > 1:
            raise ValueError(f"{self.pair_id}: |cosine| must be <= 1")
        if not 0 < self.b_partner < 1:
            raise ValueError(f"{self.pair_id}: b_partner must lie in (0, 1)")

    @property
    def variance_ratio(self) -> float:
        """r_v = reference variance / partner variance."""
        return self.ref_variance / self.partner_variance

    def with_b(self, b: float) -> "PairDescriptor":
        return PairDescriptor(self.pair_id, self.ref_variance, self.ref_norm,
                              self.partner_variance, self.partner_norm, self.cosine, float(b))

    def swapped(self) -> "PairDescriptor":
        return PairDescriptor(self.pair_id, self.partner_variance, self.partner_norm,
                              self.ref_variance, self.ref_norm, self.cosine, 1.0 - self.b_partner)

    def to_spec(self, N: int) -> MixtureSpec:
        """Class 0 is the reference, class 1 the partner."""
        off = self.cosine * self.ref_norm * self.partner_norm
        gram = np.array([[self.ref_norm ** 2, off], [off, self.partner_norm ** 2]])
        return MixtureSpec((1.0 - self.b_partner, self.b_partner),
                           (self.ref_variance, self.partner_variance), gram, N)


@dataclass(frozen=True)
class GapConfig:
    N: int = 100
    P: int = 10_000
    M: int = 500
    t: float = 0.01
    n_runs: int = 1
    seed: int = 0
    taus: tuple[float, float, int] = (1e-2, 1e5, 300)  # log-spaced (lo, hi, n)
    activation: str = "tanh"

    def __post_init__(self) -> None:
        if min(self.N, self.P, self.M, self.n_runs) < 1:
            raise ValueError("N, P, M and n_runs must be positive")
        if self.t <= 0:
            raise ValueError("t must be positive")
        lo, hi, n = self.taus
        if not (0 < lo < hi and int(n) >= 3):
            raise ValueError("taus must be (lo, hi, n) with 0 < lo < hi, n >= 3")

    def tau_grid(self) -> np.ndarray:
        lo, hi, n = self.taus
        return np.geomspace(lo, hi, int(n))


@dataclass
class GapResult:
    pair_id: str
    b_partner: float
    threshold: float
    gap: float | None
    tau_m_ref: float | None
    tau_m_partner: float | None
    tau_g_ref: float
    tau_g_partner: float
    flags: list[str] = field(default_factory=list)

    def row(self) -> dict:
        d = asdict(self)
        d["flags"] = ";".join(self.flags)
        return d


class _CurveCache:
    """Averaged curves keyed on the constructed spec; identical specs share results."""

    def __init__(self, config: GapConfig, activation: Activation | str):
        self.cfg = config
        self.act = activation
        self.store: dict[bytes, ErrorCurves] = {}

    def get(self, spec: MixtureSpec) -> ErrorCurves:
        key = repr((spec.weights, spec.variances, spec.centroid_gram.tobytes(), spec.dim)).encode()
        if key not in self.store:
            cfg = self.cfg
            clock = DiffusionClock(cfg.t)
            taus = cfg.tau_grid()
            seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_runs)
            runs = [theory_curves(spec, cfg.P, cfg.M, clock, taus, np.random.default_rng(s), self.act)
                    for s in seeds]
            self.store[key] = average_curves(runs)
        return self.store[key]


def _gap(desc: PairDescriptor, curves: ErrorCurves, threshold: float) -> GapResult:
    taus = curves.taus
    ref = extract_times(taus, curves.e_test_c[0], threshold)
    par = extract_times(taus, curves.e_test_c[1], threshold)
    flags = []
    if not ref.crossed:
        flags.append("reference never crossed threshold")
    if not par.crossed:
        flags.append("partner never crossed threshold")
    gap = ref.tau_m - par.tau_m if ref.crossed and par.crossed else None
    return GapResult(desc.pair_id, desc.b_partner, threshold, gap, ref.tau_m, par.tau_m,
                     ref.tau_g, par.tau_g, flags)


def gap_from_descriptors(desc: PairDescriptor, config: GapConfig | None = None,
                         threshold: float = 1.2, activation: Activation | str | None = None,
                         _cache: _CurveCache | None = None) -> GapResult:
    """Signed gap tau_m(reference) - tau_m(partner) of the class test losses,
    each crossing ``threshold`` times its initial value 1."""
    cfg = config or GapConfig()
    if threshold < 1.0:
        raise ValueError("threshold is a multiple of the initial loss and must be >= 1")
    cache = _cache or _CurveCache(cfg, activation or cfg.activation or TANH)
    return _gap(desc, cache.get(desc.to_spec(cfg.N)), threshold)


def gap_sweep(descriptors: Iterable[PairDescriptor], thresholds: Sequence[float] = (1.2,),
              b_grid: Sequence[float] = (0.25, 0.5, 0.75),
              config: GapConfig | None = None) -> list[GapResult]:
    """Cross product over descriptors, partner weights and thresholds."""
    cfg = config or GapConfig()
    cache = _CurveCache(cfg, cfg.activation)
    out = []
    for d in descriptors:
        for b in b_grid:
            db = d.with_b(b)
            curves = cache.get(db.to_spec(cfg.N))
            for th in thresholds:
                out.append(_gap(db, curves, float(th)))
    return out


def read_descriptors(path: str | Path) -> list[PairDescriptor]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(DESCRIPTOR_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"descriptor CSV lacks columns {sorted(missing)}")
        return [PairDescriptor(r["pair_id"], *(float(r[k]) for k in DESCRIPTOR_COLUMNS[1:]))
                for r in reader]


def write_results(path: str | Path, results: Sequence[GapResult]) -> None:
    from .io import write_csv
    cols = {k: [r.row()[k] for r in results] for k in RESULT_COLUMNS}
    write_csv(path, cols)
