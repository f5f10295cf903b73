"""Monte Carlo estimates of exit times, occupation times and Green potentials.

Every estimate at a point uses path indices ``0 .. n-1`` of the configured
seed.  Estimates that are compared with each other therefore share their
Brownian increments, which turns monotonicity and additivity of occupation
times into exact, path-by-path identities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from ._util import digest
from .errors import InputError, UnsupportedSchemeError
from .geometry import DomainSpec, Mask, as_mask
from .simulate import Integrand, PathBatch, SimParams, as_integrand, run_paths


@dataclass
class Estimate:
    mean: float
    std_error: float
    n_paths: int
    truncated_fraction: float
    config_digest: str
    # total Euler-Maruyama steps behind the mean (exit and occupation estimates):
    # integer sums make additivity identities exact
    step_total: int | None = None
    samples: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_samples(cls, values, truncated, config_digest, step_total=None, keep=False):
        values = np.asarray(values, dtype=np.float64)
        n = values.shape[0]
        se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        return cls(float(np.mean(values)), se, n, float(np.mean(truncated)), config_digest,
                   step_total, values if keep else None)

    def to_json(self) -> dict:
        out = {"mean": self.mean, "std_error": self.std_error, "n_paths": self.n_paths,
               "truncated_fraction": self.truncated_fraction,
               "config_digest": self.config_digest}
        if self.step_total is not None:
            out["step_total"] = self.step_total
        return out


@dataclass
class ExtremumEstimate:
    value: float
    arg_point: np.ndarray
    per_point: list
    mode: Literal["sup", "inf"]

    @property
    def arg_estimate(self) -> Estimate:
        return self.per_point[self.arg_index][1]

    @property
    def arg_index(self) -> int:
        means = [e.mean for _, e in self.per_point]
        return int(np.argmax(means) if self.mode == "sup" else np.argmin(means))

    @property
    def truncated_fraction(self) -> float:
        return max(e.truncated_fraction for _, e in self.per_point)

    def table(self) -> list[dict]:
        return [{"x": np.asarray(x).tolist(), **e.to_json()} for x, e in self.per_point]

    def to_json(self) -> dict:
        return {"value": self.value, "arg_point": np.asarray(self.arg_point).tolist(),
                "mode": self.mode, "per_point": self.table()}


def _config(kind, domain, x, params, n, extra=None):
    return digest({"quantity": kind, "domain": domain.to_json(), "x": np.asarray(x).tolist(),
                   "params": params.to_json(), "n": n, "extra": extra})


def _check_n(n):
    if n < 2:
        raise InputError("need at least 2 paths for a standard error")


def expected_exit_time(domain: DomainSpec, x, params: SimParams, n: int, *,
                       workers: int | None = None, keep_samples: bool = False) -> Estimate:
    """Mean exit time ``E_x[tau_D]`` over ``n`` paths."""
    _check_n(n)
    batch = run_paths(domain, x, params, n, workers=workers)
    total = int(batch.steps.sum()) if params.is_em else None
    return Estimate.from_samples(batch.exit_time, batch.truncated,
                                 _config("exit", domain, x, params, n), total, keep_samples)


def expected_occupation(domain: DomainSpec, region, x, params: SimParams, n: int, *,
                        workers: int | None = None, keep_samples: bool = False) -> Estimate:
    """Mean time spent in ``region`` before leaving ``domain``.

    ``region`` is a ``DomainSpec`` or a ``Mask`` (e.g. the complement part of
    a partition).  Euler-Maruyama only.
    """
    _check_n(n)
    if not params.is_em:
        raise UnsupportedSchemeError("occupation times need the Euler-Maruyama scheme")
    mask = as_mask(region)
    batch = run_paths(domain, x, params, n, integrand=Integrand(mask=mask), workers=workers)
    return Estimate.from_samples(batch.functional, batch.truncated,
                                 _config("occupation", domain, x, params, n, mask.to_json()),
                                 int(batch.counts.sum()), keep_samples)


def green_apply(domain: DomainSpec, f, x, params: SimParams, n: int, *,
                workers: int | None = None, cap: float = 1e12,
                keep_samples: bool = False) -> Estimate:
    """Green potential ``G_D f(x) = E_x[int_0^tau f(W_t) dt]``.

    ``f`` may be a number (a constant source), an ``Integrand``, or a
    vectorised callable on ``(m, d)`` arrays.
    """
    _check_n(n)
    if not params.is_em:
        raise UnsupportedSchemeError("Green potentials need the Euler-Maruyama scheme")
    if isinstance(f, (int, float)):
        ig = Integrand(scale=float(f), cap=cap)
    else:
        ig = as_integrand(f, cap)
    batch = run_paths(domain, x, params, n, integrand=ig, workers=workers)
    total = int(batch.counts.sum()) if ig.is_count else None
    return Estimate.from_samples(batch.functional, batch.truncated,
                                 _config("green", domain, x, params, n, _describe(ig)),
                                 total, keep_samples)


def _describe(ig: Integrand):
    out = {"scale": ig.scale, "mask": as_mask(ig.mask).to_json(), "power": ig.power}
    if ig.field is not None:
        out["field"] = getattr(ig.field, "digest", lambda: repr(ig.field))()
    if ig.func is not None:
        out["func"] = getattr(ig.func, "__qualname__", repr(ig.func))
    return out


@dataclass(frozen=True)
class Quantity:
    """What ``extremum_over`` evaluates at each grid point."""

    kind: Literal["exit", "occupation", "green"] = "exit"
    region: DomainSpec | Mask | None = None
    f: object = None

    @classmethod
    def exit(cls):
        return cls("exit")

    @classmethod
    def occupation(cls, region):
        return cls("occupation", region=region)

    @classmethod
    def green(cls, f):
        return cls("green", f=f)

    def evaluate(self, domain, x, params, n, workers=None) -> Estimate:
        if self.kind == "exit":
            return expected_exit_time(domain, x, params, n, workers=workers)
        if self.kind == "occupation":
            return expected_occupation(domain, self.region, x, params, n, workers=workers)
        if self.kind == "green":
            return green_apply(domain, self.f, x, params, n, workers=workers)
        raise InputError(f"unknown quantity {self.kind!r}")


def extremum_over(domain: DomainSpec, quantity: Quantity, mode: Literal["sup", "inf"], grid,
                  params: SimParams, n_per_point: int, *, over=None,
                  workers: int | None = None) -> ExtremumEstimate:
    """Sup or inf over a finite grid of the per-point estimates.

    All grid points reuse the same path indices.  ``over`` (a domain or mask)
    is the set the extremum is meant to range over; grid points must lie in
    it.
    """
    if mode not in ("sup", "inf"):
        raise InputError(f"mode must be 'sup' or 'inf', got {mode!r}")
    grid = np.atleast_2d(np.asarray(grid, dtype=np.float64))
    if grid.size == 0 or grid.shape[0] == 0:
        raise InputError("extremum over an empty grid")
    if over is not None:
        inside = as_mask(over).contains(grid)
        if not np.all(inside):
            raise InputError(f"grid point {grid[~inside][0].tolist()} is outside the region")
    per_point = [(x, quantity.evaluate(domain, x, params, n_per_point, workers)) for x in grid]
    means = np.array([e.mean for _, e in per_point])
    i = int(np.argmax(means) if mode == "sup" else np.argmin(means))
    return ExtremumEstimate(float(means[i]), grid[i], per_point, mode)


def batch_summary(batch: PathBatch) -> dict:
    return {"n": len(batch), "mean_exit_time": float(batch.exit_time.mean()),
            "truncated": int(batch.truncated.sum())}
