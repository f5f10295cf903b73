"""Numerical checks of the three sufficient conditions for positive solutions.

For ``lambda > 0``, ``p > 1`` and constants ``m, M`` on a partition ``D = D1 + D2``:

* cond1: ``sup_D E[tau] <= M^(1-p) / lambda``
* cond2: ``inf_D1 Lambda[D1] >= m^(1-p) / lambda``
* cond3: ``M * sup_D2 E[tau] * (sup_D2 Lambda[D2])^p <= (m / lambda)^p``

where ``Lambda[V](x)`` is the expected time spent in ``V`` before exit.
Suprema and infima are taken over finite grids.  Every verdict comes with
conservative and anti-conservative variants obtained by shifting the
estimated side by ``z`` standard errors.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from . import oracles
from ._util import digest
from .errors import InputError
from .estimators import Quantity, extremum_over
from .geometry import (Annulus, Ball, DomainSpec, Mask, Partition, Union, radial_grid,
                       ray_points, sample_interior)
from .simulate import EulerMaruyama, SimParams

NAMES = ("cond1", "cond2", "cond3")


@dataclass(frozen=True)
class EstimatorConfig:
    """How the sup/inf quantities are estimated.

    ``step_scaling="domain"`` multiplies the Euler-Maruyama step by ``L**2``
    (``L`` the outer radius, or half the largest bounding-box side), so the
    number of steps per path does not grow with the size of the domain.
    """

    params: SimParams = field(default_factory=SimParams)
    n_paths: int = 1000
    grid_size: int = 64
    sample_grid_size: int = 512
    z: float = 3.0
    use_oracle: bool = True
    truncation_threshold: float = 1e-6
    grid_seed: int = 0
    step_scaling: Literal["absolute", "domain"] = "absolute"
    workers: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n_paths < 2:
            raise InputError("n_paths must be at least 2")
        if self.grid_size < 1 or self.sample_grid_size < 1:
            raise InputError("grid sizes must be positive")
        if self.step_scaling not in ("absolute", "domain"):
            raise InputError(f"unknown step scaling {self.step_scaling!r}")

    def params_for(self, domain: DomainSpec) -> SimParams:
        if self.step_scaling == "absolute" or not self.params.is_em:
            return self.params
        L = _length_scale(domain)
        return replace(self.params, scheme=EulerMaruyama(self.params.scheme.step_h * L * L))

    def to_json(self) -> dict:
        return {"params": self.params.to_json(), "n_paths": self.n_paths,
                "grid_size": self.grid_size, "sample_grid_size": self.sample_grid_size,
                "z": self.z, "use_oracle": self.use_oracle,
                "truncation_threshold": self.truncation_threshold,
                "grid_seed": self.grid_seed, "step_scaling": self.step_scaling}

    @classmethod
    def from_json(cls, obj: dict, seed: int | None = None, workers: int | None = None):
        obj = dict(obj or {})
        params = SimParams.from_json(obj.pop("params", {}), seed)
        return cls(params=params, workers=workers, **obj)


def _length_scale(domain: DomainSpec) -> float:
    if isinstance(domain, Ball):
        return domain.radius
    if isinstance(domain, Annulus):
        return domain.r_outer
    lo, hi = domain.bounding_box()
    return float(np.max(hi - lo)) / 2


@dataclass(frozen=True)
class Hypotheses:
    """``lambda, p, m, M`` and the partition they refer to.

    ``m <= M`` is part of the hypotheses but is checked (and reported) by
    ``check_conditions`` rather than enforced here, so that saturated
    constants violating it can still be evaluated.
    """

    lam: float
    p: float
    m: float
    M: float
    partition: Partition

    def __post_init__(self):
        if not self.p > 1:
            raise InputError(f"p must exceed 1, got {self.p}")
        if not self.lam > 0:
            raise InputError(f"lambda must be positive, got {self.lam}")
        if not (self.m > 0 and self.M > 0):
            raise InputError("m and M must be positive")

    @property
    def m_le_M(self) -> bool:
        return self.m <= self.M


@dataclass
class ConditionResult:
    """One inequality ``lhs <= rhs`` (kind "le") or ``lhs >= rhs`` (kind "ge")."""

    lhs: float
    rhs: float
    kind: Literal["le", "ge"]
    lhs_std_error: float = 0.0
    z: float = 3.0
    # saturated constants reproduce their side only up to rounding
    rtol: float = 1e-12

    def _margin(self, lhs):
        return self.rhs - lhs if self.kind == "le" else lhs - self.rhs

    def _holds(self, lhs):
        return self._margin(lhs) >= -self.rtol * max(abs(lhs), abs(self.rhs))

    @property
    def margin(self) -> float:
        return self._margin(self.lhs)

    @property
    def verdict(self) -> bool:
        return bool(self._holds(self.lhs))

    @property
    def conservative(self) -> bool:
        shift = self.z * self.lhs_std_error
        return bool(self._holds(self.lhs + shift if self.kind == "le" else self.lhs - shift))

    @property
    def anti_conservative(self) -> bool:
        shift = self.z * self.lhs_std_error
        return bool(self._holds(self.lhs - shift if self.kind == "le" else self.lhs + shift))

    def to_json(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "margin": self.margin,
                "verdict": self.verdict, "lhs_std_error": self.lhs_std_error,
                "conservative": self.conservative, "anti_conservative": self.anti_conservative}


@dataclass
class Extremum:
    """A sup/inf value with its standard error and where it came from."""

    value: float
    std_error: float
    source: Literal["oracle", "monte-carlo"]
    arg_point: list | None = None
    truncated_fraction: float = 0.0
    table: list | None = None

    def to_json(self) -> dict:
        out = {"value": self.value, "std_error": self.std_error, "source": self.source,
               "arg_point": self.arg_point, "truncated_fraction": self.truncated_fraction}
        if self.table is not None:
            out["table"] = self.table
        return out


@dataclass
class Quantities:
    """The four extrema the conditions are built from."""

    sup_exit: Extremum
    sup_exit_d2: Extremum
    inf_occ_d1: Extremum
    sup_occ_d2: Extremum
    grids: dict

    def tainted(self, threshold: float) -> bool:
        return any(q.truncated_fraction > threshold for q in
                   (self.sup_exit, self.sup_exit_d2, self.inf_occ_d1, self.sup_occ_d2))

    def to_json(self) -> dict:
        return {"sup_exit": self.sup_exit.to_json(), "sup_exit_d2": self.sup_exit_d2.to_json(),
                "inf_occ_d1": self.inf_occ_d1.to_json(), "sup_occ_d2": self.sup_occ_d2.to_json(),
                "grids": self.grids}


@dataclass
class ConditionsReport:
    cond1: ConditionResult
    cond2: ConditionResult
    cond3: ConditionResult
    lam: float
    p: float
    m: float
    M: float
    quantities: Quantities
    tainted: bool = False

    @property
    def m_le_M(self) -> bool:
        return bool(self.m <= self.M)

    @property
    def failed(self) -> list[str]:
        out = [n for n in NAMES if not getattr(self, n).verdict]
        if not self.m_le_M:
            out.append("m_le_M")
        return out

    @property
    def holds(self) -> bool:
        return not self.failed

    def conditions(self):
        return {n: getattr(self, n) for n in NAMES}

    def to_json(self) -> dict:
        return {"lambda": self.lam, "p": self.p, "m": self.m, "M": self.M,
                **{n: c.to_json() for n, c in self.conditions().items()},
                "m_le_M": self.m_le_M, "failed": self.failed, "holds": self.holds,
                "tainted": self.tainted, "quantities": self.quantities.to_json()}


# grids and radial structure

def _radial_interval(dom) -> tuple[float, float] | None:
    if isinstance(dom, Ball):
        return 0.0, dom.radius
    if isinstance(dom, Annulus):
        return dom.r_inner, dom.r_outer
    return None


def _concentric(partition: Partition) -> bool:
    d1, parent = partition.d1, partition.parent
    return (parent.is_radial() and d1.is_radial()
            and np.array_equal(np.asarray(d1.center), np.asarray(parent.center)))


def _d2_intervals(partition: Partition):
    """Closed radial intervals making up the closure of ``D2`` (concentric case)."""
    lo, hi = _radial_interval(partition.parent)
    a, b = _radial_interval(partition.d1)
    out = []
    if a > lo:
        out.append((lo, a))
    if b < hi:
        out.append((b, hi))
    return out


def build_grid(domain: DomainSpec, region: Mask, cfg: EstimatorConfig, *,
               extra_radii=(), radial: bool | None = None) -> tuple[np.ndarray, dict]:
    """Evaluation points in ``region``: radial when possible, sampled otherwise.

    A ray only represents ``region`` when the region is rotation invariant
    about the domain center; pass ``radial=False`` otherwise.
    """
    if radial is None:
        radial = domain.is_radial()
    if radial:
        pts = radial_grid(domain, cfg.grid_size, region=region)
        if len(extra_radii):
            pts = np.concatenate([pts, ray_points(domain.center, extra_radii)])
            radii = np.linalg.norm(pts - np.asarray(domain.center), axis=1)
            pts = pts[np.argsort(radii, kind="stable")]
        info = {"kind": "radial", "size": int(pts.shape[0]), "extra_radii": list(extra_radii)}
    else:
        base = region.include if region.include is not None else domain
        pts = sample_interior(base, cfg.sample_grid_size, cfg.grid_seed)
        pts = pts[region.contains(pts) & domain.contains(pts)]
        info = {"kind": "sampled", "size": int(pts.shape[0]), "seed": cfg.grid_seed}
    if pts.shape[0] == 0:
        raise InputError("the region contains no grid points; refine the grid")
    return pts, info


def _inner_radii(domain, partition):
    """Boundary radii of a concentric ``D1`` lying strictly inside ``domain``."""
    lo, hi = _radial_interval(domain)
    return [r for r in _radial_interval(partition.d1) if lo < r < hi]


# oracle branch

def _exit_oracle(domain):
    """Radial exit-time profile ``f(r)`` and its maximiser, or None."""
    c = np.asarray(domain.center, dtype=np.float64)
    if isinstance(domain, Ball):
        T, d = domain.radius, domain.dim
        return (lambda r: (T * T - r * r) / d), 0.0
    if isinstance(domain, Annulus) and domain.dim == 3:
        spec = oracles.AnnulusSpec3D(domain.r_inner, domain.r_outer, tuple(c))
        _, z = oracles.annulus_sup_exit_time(spec)
        return (lambda r: float(oracles.annulus_exit_time_radial(spec, r))), z
    return None


def _sup_unimodal(f, peak, intervals):
    best, arg = -math.inf, None
    for a, b in intervals:
        for r in ((peak,) if a <= peak <= b else (a, b)):
            v = float(f(r))
            if v > best:
                best, arg = v, r
    return best, arg


def _oracle_exits(domain, partition):
    found = _exit_oracle(domain)
    if found is None:
        return None
    f, peak = found
    lo, hi = _radial_interval(domain)
    full, r_full = _sup_unimodal(f, peak, [(lo, hi)])
    sup_exit = Extremum(full, 0.0, "oracle", ray_points(domain.center, [r_full])[0].tolist())
    if not _concentric(partition):
        return sup_exit, None
    d2, r2 = _sup_unimodal(f, peak, _d2_intervals(partition))
    return sup_exit, Extremum(d2, 0.0, "oracle", ray_points(domain.center, [r2])[0].tolist())


def _mc(domain, quantity, mode, grid, params, cfg) -> Extremum:
    ext = extremum_over(domain, quantity, mode, grid, params, cfg.n_paths, workers=cfg.workers)
    est = ext.arg_estimate
    return Extremum(ext.value, est.std_error, "monte-carlo", np.asarray(ext.arg_point).tolist(),
                    ext.truncated_fraction,
                    [{"x": r["x"], "mean": r["mean"], "std_error": r["std_error"]}
                     for r in ext.table()])


def estimate_quantities(domain: DomainSpec, partition: Partition,
                        cfg: EstimatorConfig = EstimatorConfig()) -> Quantities:
    """Estimate ``sup_D E[tau]``, ``sup_D2 E[tau]``, ``inf_D1 Lambda[D1]`` and ``sup_D2 Lambda[D2]``.

    For a concentric partition of a ball or annulus the grids are radial and
    also contain the radii of the interface between ``D1`` and ``D2`` (the
    interface belongs to ``D2``; it bounds ``D1`` from outside, which is
    where the occupation infimum sits).
    """
    if partition.parent != domain:
        raise InputError("the partition must be of the given domain")
    partition.validate(seed=cfg.grid_seed)
    params = cfg.params_for(domain)
    concentric = domain.is_radial() and _concentric(partition)
    interface = _inner_radii(domain, partition) if concentric else []

    full_grid, full_info = build_grid(domain, Mask(), cfg)
    d1_grid, d1_info = build_grid(domain, partition.d1_mask, cfg, extra_radii=interface,
                                  radial=concentric)
    d2_grid, d2_info = build_grid(domain, partition.d2_mask, cfg, extra_radii=interface,
                                  radial=concentric)
    grids = {"D": full_info, "D1": d1_info, "D2": d2_info,
             "oracle_exit": False, "scheme": params.to_json()}

    oracle = _oracle_exits(domain, partition) if cfg.use_oracle else None
    if oracle is not None:
        sup_exit, sup_exit_d2 = oracle
        grids["oracle_exit"] = True
    else:
        sup_exit = sup_exit_d2 = None
    if sup_exit is None:
        sup_exit = _mc(domain, Quantity.exit(), "sup", full_grid, params, cfg)
    if sup_exit_d2 is None:
        sup_exit_d2 = _mc(domain, Quantity.exit(), "sup", d2_grid, params, cfg)
    inf_occ = _mc(domain, Quantity.occupation(partition.d1_mask), "inf", d1_grid, params, cfg)
    sup_occ = _mc(domain, Quantity.occupation(partition.d2_mask), "sup", d2_grid, params, cfg)
    return Quantities(sup_exit, sup_exit_d2, inf_occ, sup_occ, grids)


def evaluate(hyp: Hypotheses, q: Quantities, z: float = 3.0,
             truncation_threshold: float = 1e-6) -> ConditionsReport:
    lam, p, m, M = hyp.lam, hyp.p, hyp.m, hyp.M
    c1 = ConditionResult(q.sup_exit.value, M ** (1 - p) / lam, "le", q.sup_exit.std_error, z)
    c2 = ConditionResult(q.inf_occ_d1.value, m ** (1 - p) / lam, "ge", q.inf_occ_d1.std_error, z)
    a, b = q.sup_exit_d2, q.sup_occ_d2
    lhs3 = M * a.value * b.value ** p
    # delta method for a product of two independent estimates
    rel = math.hypot(a.std_error / a.value if a.value else 0.0,
                     p * b.std_error / b.value if b.value else 0.0)
    c3 = ConditionResult(lhs3, (m / lam) ** p, "le", abs(lhs3) * rel, z)
    return ConditionsReport(c1, c2, c3, lam, p, m, M, q, q.tainted(truncation_threshold))


def check_conditions(hyp: Hypotheses, cfg: EstimatorConfig = EstimatorConfig(), *,
                     quantities: Quantities | None = None) -> ConditionsReport:
    """Evaluate cond1-cond3 and ``m <= M`` for the given constants."""
    domain = hyp.partition.parent
    q = quantities or estimate_quantities(domain, hyp.partition, cfg)
    return evaluate(hyp, q, cfg.z, cfg.truncation_threshold)


@dataclass
class FeasibilityResult:
    constants: tuple[float, float] | None
    report: ConditionsReport

    @property
    def feasible(self) -> bool:
        return self.constants is not None

    def to_json(self) -> dict:
        return {"feasible": self.feasible,
                "m": None if self.constants is None else self.constants[0],
                "M": None if self.constants is None else self.constants[1],
                "report": self.report.to_json()}


def find_feasible_constants(domain: DomainSpec, partition: Partition, lam: float, p: float,
                            cfg: EstimatorConfig = EstimatorConfig(), *,
                            quantities: Quantities | None = None) -> FeasibilityResult:
    """Saturate cond1 for ``M`` and cond2 for ``m``, then test cond3 and ``m <= M``.

    Returns the pair ``(m, M)`` only when every check passes.
    """
    if not p > 1:
        raise InputError(f"p must exceed 1, got {p}")
    if not lam > 0:
        raise InputError(f"lambda must be positive, got {lam}")
    q = quantities or estimate_quantities(domain, partition, cfg)
    M = oracles.M_constant(q.sup_exit.value, lam, p)
    if not q.inf_occ_d1.value > 0:
        raise InputError("the occupation infimum over D1 is zero; refine the grid or D1")
    m = (lam * q.inf_occ_d1.value) ** (1.0 / (1.0 - p))
    report = evaluate(Hypotheses(lam, p, m, M, partition), q, cfg.z, cfg.truncation_threshold)
    return FeasibilityResult((m, M) if report.holds else None, report)


def example1_bound(T: float, d: int, p: float, lam: float) -> float:
    """Lower bound on ``m^(p^2)`` implied by cond1-cond3 on a ball of radius ``T``.

    ``(lambda T^2 / d)^((2-p)/(1-p)) / lambda``; a feasible ``m`` must reach it.
    """
    if not p > 1:
        raise InputError(f"p must exceed 1, got {p}")
    return (lam * T * T / d) ** ((2 - p) / (1 - p)) / lam


def example2_inequality_report(delta: float, T: float, p: float, lam: float) -> dict:
    """Both sides of ``M^(2-p^2) < S^((2-p^2)/(1-p))`` on the 3-D annulus ``(delta, T)``.

    ``S = T^2 + T delta + delta^2``.  ``M`` saturates cond1 using the
    reference supremum ``annulus_sup_exit_time_printed``; ``*_exact`` entries
    repeat the evaluation with the true maximum of the exit time.  The
    comparison is reported, not enforced.
    """
    if not 1 < p < math.sqrt(2):
        raise InputError(f"p must lie in (1, sqrt 2), got {p}")
    spec = oracles.AnnulusSpec3D(delta, T)
    e = 2 - p * p
    sup_printed = oracles.annulus_sup_exit_time_printed(spec)
    sup_exact, z = oracles.annulus_sup_exit_time(spec)
    M = oracles.M_constant(sup_printed, lam, p)
    M_exact = oracles.M_constant(sup_exact, lam, p)
    bound = spec.s ** (e / (1 - p))
    return {
        "delta": delta, "T": T, "p": p, "lambda": lam, "exponent": e,
        "sup_exit": sup_printed, "M": M,
        "M_exponent_side": M ** e, "bound_side": bound,
        "printed_direction_holds": bool(M ** e < bound),
        "sup_exit_exact": sup_exact, "argmax_radius": z, "M_exact": M_exact,
        "M_exponent_side_exact": M_exact ** e,
        "printed_direction_holds_exact": bool(M_exact ** e < bound),
    }


# multiplicity

@dataclass
class MultiplicitySet:
    index_set: tuple[int, ...]
    m_hat: float
    M_hat: float
    d1_hat: DomainSpec
    report: ConditionsReport | None = None

    def to_json(self) -> dict:
        return {"index_set": list(self.index_set), "m_hat": self.m_hat, "M_hat": self.M_hat,
                "d1_hat": self.d1_hat.to_json(),
                "report": None if self.report is None else self.report.to_json()}


def check_disjoint(components, n: int = 2000, seed: int = 0) -> None:
    """Sampled check that no component overlaps another."""
    for i, ci in enumerate(components):
        pts = sample_interior(ci, n, seed + i)
        for j, cj in enumerate(components):
            if j != i and np.any(cj.contains(pts)):
                raise InputError(f"components {i + 1} and {j + 1} overlap")


def multiplicity_enumerate(domain: DomainSpec, components, m_values, M_values, lam: float,
                           p: float, cfg: EstimatorConfig | None = EstimatorConfig(),
                           ) -> list[MultiplicitySet]:
    """All ``2^s - 1`` hypothesis sets built from unions of the components.

    Index sets are 1-based.  For each, ``m_hat`` is the largest and ``M_hat``
    the smallest of the selected per-component constants, and ``D1`` is the
    union of the selected components.  ``cfg=None`` skips the condition
    checks.
    """
    s = len(components)
    if s < 1:
        raise InputError("need at least one component")
    if len(m_values) != s or len(M_values) != s:
        raise InputError("one (m, M) pair per component")
    check_disjoint(components)
    out = []
    for size in range(1, s + 1):
        for idx in itertools.combinations(range(s), size):
            parts = [components[i] for i in idx]
            d1 = parts[0] if size == 1 else Union(parts)
            m_hat = max(m_values[i] for i in idx)
            M_hat = min(M_values[i] for i in idx)
            report = None
            if cfg is not None:
                hyp = Hypotheses(lam, p, m_hat, M_hat, Partition(d1, domain))
                report = check_conditions(hyp, cfg)
            out.append(MultiplicitySet(tuple(i + 1 for i in idx), m_hat, M_hat, d1, report))
    return out


# sweeps

A_FRACTION = 0.25
B_FRACTION = 0.75


def sweep_partition(family: str, params: dict) -> tuple[DomainSpec, Partition]:
    """Domain and partition for one sweep row.

    ball: ``D1 = A(a T, b T)``.  annulus: ``D1`` spans the fractions ``a..b``
    of whichever side of the exit-time maximiser is wider, so the maximiser
    stays in ``D2``.
    """
    d = int(params.get("dim", 3))
    c = (0.0,) * d
    T = float(params["T"])
    if family == "ball":
        dom = Ball(c, T)
        d1 = Annulus(c, A_FRACTION * T, B_FRACTION * T)
    elif family == "annulus":
        delta = float(params["delta"])
        dom = Annulus(c, delta, T)
        _, z = oracles.annulus_sup_exit_time(oracles.AnnulusSpec3D(delta, T, c))
        lo, hi = (delta, z) if z - delta > T - z else (z, T)
        d1 = Annulus(c, lo + A_FRACTION * (hi - lo), lo + B_FRACTION * (hi - lo))
    else:
        raise InputError(f"unknown family {family!r}")
    return dom, Partition(d1, dom)


def _grid_rows(ranges: dict):
    keys = sorted(ranges)
    for values in itertools.product(*(list(ranges[k]) for k in keys)):
        yield dict(zip(keys, values))


def _row_seed(base: int, key: str) -> int:
    return (base ^ int(key, 16)) % 2**64


def feasibility_sweep(family: str, ranges: dict, cfg: EstimatorConfig = EstimatorConfig(),
                      store: str | os.PathLike | None = None) -> list[dict]:
    """``find_feasible_constants`` at every vertex of a parameter grid.

    ``ranges`` maps ``T``, ``p``, ``lambda`` (and ``delta`` for annuli) to
    lists of values.  Rows are keyed by the parameters and the estimator
    configuration; with a ``store`` path, rows already in that JSONL file
    are reused and new rows are appended.  A failing row records its error
    and the sweep continues.
    """
    needed = {"T", "p", "lambda"} | ({"delta"} if family == "annulus" else set())
    missing = needed - set(ranges)
    if missing:
        raise InputError(f"missing sweep ranges: {sorted(missing)}")
    done = {}
    if store is not None and os.path.exists(store):
        with open(store) as fh:
            for line in fh:
                if line.strip():
                    row = json.loads(line)
                    done[row["key"]] = row
    cfg_digest = digest(cfg.to_json())
    rows = []
    for params in _grid_rows(ranges):
        key = digest({"family": family, "params": params, "config": cfg_digest})
        if key in done:
            rows.append(done[key])
            continue
        row = {"key": key, "family": family, "params": params, "config_digest": cfg_digest}
        try:
            dom, part = sweep_partition(family, params)
            row_cfg = replace(cfg, params=replace(cfg.params,
                                                  seed=_row_seed(cfg.params.seed, key)))
            res = find_feasible_constants(dom, part, float(params["lambda"]),
                                          float(params["p"]), row_cfg)
            rep = res.report
            row.update({"feasible": res.feasible, "failed": rep.failed, "m": rep.m, "M": rep.M,
                        "margins": {n: c.margin for n, c in rep.conditions().items()},
                        "tainted": rep.tainted, "error": None})
        except (InputError, RuntimeError, ArithmeticError) as exc:
            row.update({"feasible": None, "failed": None, "error": f"{type(exc).__name__}: {exc}"})
        rows.append(row)
        if store is not None:
            with open(store, "a") as fh:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    return rows
