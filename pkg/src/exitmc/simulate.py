"""Brownian path sampling: exit times, occupation times and path integrals.

The process is standard Brownian motion ``W_t = x + B_t`` (generator one half
of the Laplacian).  Two schemes are available:

* ``EulerMaruyama`` steps ``W_{k+1} = W_k + sqrt(h) xi_k`` and declares the
  path exited at the first sample outside the domain; ``tau = K h`` where
  ``K`` is that step index.  Path integrals use the left-endpoint rule over
  the pre-exit samples ``W_0 .. W_{K-1}``.
* ``WalkOnSpheres`` jumps to a uniform point on the largest inscribed sphere
  and adds ``r**2 / d`` (the mean exit time of that sphere) per jump, stopping
  inside the ``eps_shell`` of the boundary.  Its per-path time is a
  conditional expectation, so only averages estimate ``E[tau]``.

Per-path results depend only on ``(domain, x0, params, path_index)``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from . import backend
from .errors import ConfigurationError, InputError, UnboundedIntegrandError, UnsupportedSchemeError
from .geometry import DomainSpec, Mask, as_mask

BLOCK = 1024


@dataclass(frozen=True)
class EulerMaruyama:
    step_h: float = 1e-4

    def __post_init__(self):
        if not self.step_h > 0:
            raise InputError(f"step_h must be positive, got {self.step_h}")


@dataclass(frozen=True)
class WalkOnSpheres:
    eps_shell: float = 1e-4

    def __post_init__(self):
        if not self.eps_shell > 0:
            raise InputError(f"eps_shell must be positive, got {self.eps_shell}")


Scheme = Union[EulerMaruyama, WalkOnSpheres]


@dataclass(frozen=True)
class SimParams:
    scheme: Scheme = field(default_factory=EulerMaruyama)
    max_steps: int = 10_000_000
    seed: int = 0
    antithetic: bool = False
    # Brownian-bridge exit correction; reserved, not implemented
    bridge_correction: bool = False

    def __post_init__(self):
        if self.max_steps < 1:
            raise InputError("max_steps must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise InputError("seed must fit in an unsigned 64-bit integer")
        if self.bridge_correction:
            raise ConfigurationError("Brownian-bridge correction is not implemented")

    @property
    def is_em(self) -> bool:
        return isinstance(self.scheme, EulerMaruyama)

    def to_json(self) -> dict:
        if self.is_em:
            scheme = {"type": "em", "step_h": self.scheme.step_h}
        else:
            scheme = {"type": "wos", "eps_shell": self.scheme.eps_shell}
        return {"scheme": scheme, "max_steps": self.max_steps, "seed": self.seed,
                "antithetic": self.antithetic}

    @classmethod
    def from_json(cls, obj: dict, seed: int | None = None) -> "SimParams":
        sch = obj.get("scheme", {"type": "em"})
        if sch.get("type", "em") == "em":
            scheme = EulerMaruyama(sch.get("step_h", 1e-4))
        elif sch["type"] == "wos":
            scheme = WalkOnSpheres(sch.get("eps_shell", 1e-4))
        else:
            raise InputError(f"unknown scheme {sch['type']!r}")
        return cls(scheme=scheme, max_steps=int(obj.get("max_steps", 10_000_000)),
                   seed=int(obj.get("seed", 0) if seed is None else seed),
                   antithetic=bool(obj.get("antithetic", False)))


@dataclass(frozen=True)
class PathOutcome:
    exit_time: float
    exit_point: tuple
    functional_value: float
    truncated: bool
    steps: int
    count: int = 0


@dataclass
class PathBatch:
    """Per-path arrays for path indices ``start .. start + n - 1``."""

    steps: np.ndarray
    exit_time: np.ndarray
    exit_point: np.ndarray
    functional: np.ndarray
    counts: np.ndarray
    truncated: np.ndarray
    start: int = 0

    def __len__(self):
        return self.steps.shape[0]

    def outcome(self, i: int) -> PathOutcome:
        return PathOutcome(float(self.exit_time[i]), tuple(self.exit_point[i].tolist()),
                           float(self.functional[i]), bool(self.truncated[i]),
                           int(self.steps[i]), int(self.counts[i]))


@dataclass(frozen=True)
class FieldArrays:
    """Flat description of a scalar field for the kernels."""

    kind: int
    center: np.ndarray
    radii: np.ndarray
    values: np.ndarray
    nodes: np.ndarray
    k: int = 1
    absorb: float = 0.0


@dataclass(frozen=True)
class Integrand:
    """``g(x) = scale * 1_mask(x) * phi(x)`` accumulated along a path.

    ``phi`` is 1 when neither ``field`` nor ``func`` is set,
    ``max(u(x), 0) ** power`` for a field ``u`` (anything with a
    ``kernel_arrays()`` method), or ``func(X)`` for a vectorised callable
    taking an ``(m, d)`` array.  Callables run on the numpy backend only.
    """

    scale: float = 1.0
    mask: Mask = field(default_factory=Mask)
    field: object = None
    power: float = 1.0
    func: Callable | None = None
    cap: float = math.inf

    @property
    def is_count(self) -> bool:
        return self.field is None and self.func is None and self.scale == 1.0


def default_workers() -> int:
    env = os.environ.get("EXITMC_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


_EMPTY_OPS = np.zeros(0, dtype=np.int32)
_EMPTY_PRM = np.zeros(0, dtype=np.float64)


def _mask_program(dom):
    if dom is None:
        return _EMPTY_OPS, _EMPTY_PRM
    return dom.program()


def _check_start(domain: DomainSpec, x0) -> np.ndarray:
    x = np.ascontiguousarray(x0, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != domain.dim:
        raise InputError(f"start point must have dimension {domain.dim}")
    if not domain.contains(x):
        raise InputError(f"start point {x.tolist()} is not inside the domain")
    return x


def run_paths(domain: DomainSpec, x0, params: SimParams, n: int, *, start: int = 0,
              integrand: Integrand | None = None, workers: int | None = None,
              backend_name: str | None = None) -> PathBatch:
    """Simulate paths ``start .. start + n - 1`` from ``x0``.

    ``integrand=None`` records exit data only; an ``Integrand`` additionally
    accumulates ``sum_k g(W_k)`` over the pre-exit samples.  Work is split
    into fixed blocks of path indices, so ``workers`` never changes results.
    """
    if n < 1:
        raise InputError("n must be at least 1")
    if start < 0:
        raise InputError("path indices must be non-negative")
    x = _check_start(domain, x0)
    d = domain.dim
    ops, prm = domain.program()
    kern = backend.kernels(backend_name)
    steps = np.zeros(n, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    acc = np.zeros(n)
    pts = np.zeros((n, d))
    trunc = np.zeros(n, dtype=np.uint8)
    blocks = [(b, min(BLOCK, n - b)) for b in range(0, n, BLOCK)]

    if params.is_em:
        h = params.scheme.step_h
        sqrt_h = math.sqrt(h)
        if integrand is None:
            mode = 0
        elif integrand.is_count:
            mode = 1
        else:
            mode = 2
        ig = integrand or Integrand()
        mask = as_mask(ig.mask)
        iops, iprm = _mask_program(mask.include)
        eops, eprm = _mask_program(mask.exclude)
        fa = _field_arrays(ig, d)
        if ig.func is not None:
            kern = backend.kernels("python")
        extra = {"func": ig.func} if ig.func is not None else {}

        def work(block):
            b, m = block
            return kern.em_block(
                ops, prm, iops, iprm, eops, eprm, mode, fa.kind, fa.center, fa.radii,
                fa.values, fa.nodes, fa.k, fa.absorb, float(ig.power), float(ig.scale),
                float(ig.cap), x, params.seed, start + b, m, sqrt_h, params.max_steps,
                params.antithetic, steps[b:b + m], counts[b:b + m], acc[b:b + m],
                pts[b:b + m], trunc[b:b + m], **extra)

        errs = _map(work, blocks, workers)
        errs = [e for e in errs if e is not None]
        if errs:
            _, g, point = min(errs)
            raise UnboundedIntegrandError(point, g, ig.cap)
        exit_time = steps * h
        if mode == 1:
            functional = counts * h
        elif mode == 2:
            functional = acc * h
        else:
            functional = np.zeros(n)
    else:
        if integrand is not None:
            raise UnsupportedSchemeError(
                "walk-on-spheres only samples exit times; use the Euler-Maruyama scheme")
        eps = params.scheme.eps_shell
        exit_time = np.zeros(n)

        def work(block):
            b, m = block
            kern.wos_block(ops, prm, x, params.seed, start + b, m, eps, params.max_steps,
                           params.antithetic, steps[b:b + m], exit_time[b:b + m],
                           pts[b:b + m], trunc[b:b + m])

        _map(work, blocks, workers)
        functional = np.zeros(n)
    return PathBatch(steps, exit_time, pts, functional, counts, trunc.astype(bool), start)


def _map(fn, items, workers):
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(items) == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _field_arrays(ig: Integrand, d: int) -> FieldArrays:
    if ig.field is None:
        z = np.zeros(1)
        return FieldArrays(0, np.zeros(d), z, z, np.zeros((1, d)), 1, 0.0)
    fa = ig.field.kernel_arrays()
    if fa.kind == 0:
        raise ConfigurationError("constant fields are expressed through Integrand.scale")
    return fa


def exit_sample(domain: DomainSpec, x0, params: SimParams, path_index: int) -> PathOutcome:
    """Exit time and exit point of a single path."""
    return run_paths(domain, x0, params, 1, start=path_index, workers=1).outcome(0)


def occupation_sample(domain: DomainSpec, region, x0, params: SimParams,
                      path_index: int) -> PathOutcome:
    """Time spent in ``region`` before leaving ``domain`` (Euler-Maruyama only)."""
    if not params.is_em:
        raise UnsupportedSchemeError("occupation times need the Euler-Maruyama scheme")
    ig = Integrand(mask=as_mask(region))
    return run_paths(domain, x0, params, 1, start=path_index, integrand=ig,
                     workers=1).outcome(0)


def functional_sample(domain: DomainSpec, g, x0, params: SimParams, path_index: int, *,
                      cap: float = 1e12) -> PathOutcome:
    """``h * sum_k g(W_k)`` over the pre-exit samples of one path.

    ``g`` is an ``Integrand`` or a vectorised callable on ``(m, d)`` arrays.
    """
    if not params.is_em:
        raise UnsupportedSchemeError("path integrals need the Euler-Maruyama scheme")
    ig = as_integrand(g, cap)
    return run_paths(domain, x0, params, 1, start=path_index, integrand=ig,
                     workers=1).outcome(0)


def as_integrand(g, cap: float = 1e12) -> Integrand:
    if isinstance(g, Integrand):
        return g
    if callable(g):
        return Integrand(func=g, cap=cap)
    raise InputError("g must be an Integrand or a callable")
