"""Fixed-point iteration for ``u = G_D(lambda u^p)`` on node-sampled fields.

``(Tu)(x) = E_x[int_0^tau lambda u(W_t)^p dt]`` is estimated at every node
with the same path indices (common random numbers), both across nodes and
across iterations.  Under Brownian motion with generator ``Delta / 2`` a
fixed point solves ``Delta u + 2 lambda u^p = 0``; ``residual_check`` takes
the factor as a parameter.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.spatial import cKDTree

from . import _fallback, oracles
from ._util import digest
from .conditions import EstimatorConfig, Hypotheses, _concentric, build_grid
from .errors import ConfigurationError, GeometryTooThinError, InputError
from .estimators import Quantity, extremum_over, green_apply
from .geometry import (Annulus, Ball, DomainSpec, Partition, domain_from_json, lattice_nodes,
                       radial_grid)
from .simulate import FieldArrays, Integrand, SimParams

INTERP_KIND = {"radial": _fallback.FIELD_RADIAL, "nearest": _fallback.FIELD_NEAREST,
               "idw": _fallback.FIELD_IDW}


class Field:
    """Values at interior nodes, interpolated in between and zero outside.

    ``interp`` is ``"idw"`` (inverse squared distance over the ``k`` nearest
    nodes), ``"nearest"``, or ``"radial"`` (piecewise linear in the distance
    to the center of a ball or annulus, pinned to 0 on the boundary
    spheres).  Points outside the domain, or within ``absorb`` of its
    boundary, evaluate to 0.
    """

    def __init__(self, domain: DomainSpec, nodes, values, *, interp: str = "idw", k: int = 8,
                 absorb: float = 0.0):
        nodes = np.ascontiguousarray(np.atleast_2d(np.asarray(nodes, dtype=np.float64)))
        values = np.ascontiguousarray(np.asarray(values, dtype=np.float64).reshape(-1))
        if nodes.shape[0] == 0:
            raise ConfigurationError("a field needs at least one node")
        if nodes.shape[1] != domain.dim or values.shape[0] != nodes.shape[0]:
            raise InputError("nodes must be (n, dim) with one value per node")
        if not np.all(np.isfinite(values)):
            raise InputError("field values must be finite")
        if interp not in INTERP_KIND:
            raise ConfigurationError(f"unknown interpolation {interp!r}")
        if k < 1:
            raise ConfigurationError("k must be at least 1")
        if not np.all(domain.contains(nodes)):
            raise InputError("all nodes must lie inside the domain")
        self.domain = domain
        self.nodes = nodes
        self.values = values
        self.interp = interp
        self.k = int(k)
        self.absorb = float(absorb)
        self._tree = None
        if interp == "radial":
            self._radii, self._radial_values = self._radial_profile()

    def _radial_profile(self):
        dom = self.domain
        if not dom.is_radial():
            raise ConfigurationError("radial interpolation needs a ball or annulus")
        r = np.linalg.norm(self.nodes - np.asarray(dom.center), axis=1)
        radii, inv = np.unique(r, return_inverse=True)
        vals = np.bincount(inv, weights=self.values) / np.bincount(inv)
        if isinstance(dom, Annulus):
            radii = np.concatenate([[dom.r_inner], radii, [dom.r_outer]])
            vals = np.concatenate([[0.0], vals, [0.0]])
        else:
            radii = np.concatenate([radii, [dom.radius]])
            vals = np.concatenate([vals, [0.0]])
        return np.ascontiguousarray(radii), np.ascontiguousarray(vals)

    def with_values(self, values) -> "Field":
        return Field(self.domain, self.nodes, values, interp=self.interp, k=self.k,
                     absorb=self.absorb)

    @classmethod
    def constant(cls, domain, nodes, c: float, **kw) -> "Field":
        nodes = np.atleast_2d(np.asarray(nodes, dtype=np.float64))
        return cls(domain, nodes, np.full(nodes.shape[0], float(c)), **kw)

    def kernel_arrays(self) -> FieldArrays:
        kind = INTERP_KIND[self.interp]
        if kind == _fallback.FIELD_RADIAL:
            return FieldArrays(kind, np.asarray(self.domain.center, dtype=np.float64),
                               self._radii, self._radial_values, self.nodes, 1, self.absorb)
        return FieldArrays(kind, np.zeros(self.domain.dim), np.zeros(1), self.values,
                           self.nodes, self.k, self.absorb)

    def __call__(self, x):
        X = np.atleast_2d(np.asarray(x, dtype=np.float64))
        s = self.domain.signed_distance(X)
        fa = self.kernel_arrays()
        if self._tree is None and fa.kind != _fallback.FIELD_RADIAL:
            self._tree = cKDTree(self.nodes)
        u = _fallback.field_values(fa.kind, fa.center, fa.radii, fa.values, fa.nodes, fa.k, X,
                                   self._tree)
        u = np.where((s < 0) & (-s >= self.absorb), u, 0.0)
        return u if np.ndim(x) > 1 else u[0]

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def digest(self) -> str:
        return digest(self.header())

    def header(self) -> dict:
        return {"domain": self.domain.to_json(), "interp": self.interp, "k": self.k,
                "absorb": self.absorb, "nodes": self.nodes, "values": self.values}

    def to_jsonl(self, path, extra: dict | None = None) -> None:
        head = {"record": "field", "domain": self.domain.to_json(), "interp": self.interp,
                "k": self.k, "absorb": self.absorb, "n": int(self.nodes.shape[0]),
                "digest": self.digest(), **(extra or {})}
        with open(path, "w") as fh:
            fh.write(json.dumps(head, sort_keys=True) + "\n")
            for x, v in zip(self.nodes.tolist(), self.values.tolist()):
                fh.write(json.dumps({"x": x, "u": v}) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "Field":
        with open(path) as fh:
            head = json.loads(fh.readline())
            rows = [json.loads(line) for line in fh if line.strip()]
        return cls(domain_from_json(head["domain"]), [r["x"] for r in rows],
                   [r["u"] for r in rows], interp=head["interp"], k=head["k"],
                   absorb=head["absorb"])


def radial_nodes(domain: DomainSpec, n: int, direction=None) -> np.ndarray:
    """``n`` nodes on a ray, at the midpoints of equal radial cells."""
    return radial_grid(domain, n, direction=direction)


def seed_field(partition: Partition, nodes, m: float, width: float | None = None,
               **kw) -> Field:
    """``u = m`` on ``D1``, decaying linearly to 0 within ``width`` of it.

    The default width is half the distance from ``D1`` to the boundary of
    ``D``, measured on the nodes, so the field is ``m`` on ``D1``, lies in
    ``[0, m]`` everywhere and vanishes near the boundary.
    """
    dom = partition.parent
    nodes = np.atleast_2d(np.asarray(nodes, dtype=np.float64))
    s1 = partition.d1.signed_distance(nodes)
    if width is None:
        inside = s1 < 0
        if not inside.any():
            raise InputError("no node lies in D1")
        width = 0.5 * float(np.min(-dom.signed_distance(nodes[inside])))
    if not width > 0:
        raise InputError("width must be positive")
    vals = m * np.clip(1.0 - np.maximum(s1, 0.0) / width, 0.0, 1.0)
    return Field(dom, nodes, vals, **kw)


def _integrand(u: Field, lam: float, p: float) -> Integrand:
    return Integrand(scale=lam, field=u, power=p)


def apply_T(u: Field, lam: float, p: float, params: SimParams, n_per_node: int, *,
            workers: int | None = None, return_errors: bool = False):
    """``(Tu)(x) = G_D(lambda u^p)(x)`` at every node of ``u``, clamped at 0.

    Every node uses path indices ``0 .. n_per_node - 1``.
    """
    if not p > 1:
        raise InputError(f"p must exceed 1, got {p}")
    if not lam > 0:
        raise InputError(f"lambda must be positive, got {lam}")
    n = u.nodes.shape[0]
    vals = np.zeros(n)
    errs = np.zeros(n)
    if np.any(u.values > 0):
        ig = _integrand(u, lam, p)
        for i, x in enumerate(u.nodes):
            est = green_apply(u.domain, ig, x, params, n_per_node, workers=workers)
            vals[i] = max(est.mean, 0.0)
            errs[i] = est.std_error
    out = u.with_values(vals)
    return (out, errs) if return_errors else out


@dataclass
class IterationTrace:
    sup_change: list = field(default_factory=list)
    norm: list = field(default_factory=list)
    ratio: list = field(default_factory=list)
    ratio_se: list = field(default_factory=list)
    std_error: list = field(default_factory=list)
    C: float = math.nan
    C_se: float = 0.0
    M: float = math.nan
    sup_exit: float = math.nan
    status: Literal["converged", "max_iter", "diverged"] = "max_iter"
    warnings: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def iterations(self) -> int:
        return len(self.sup_change)

    def to_json(self) -> dict:
        return {"sup_change": self.sup_change, "norm": self.norm, "ratio": self.ratio,
                "ratio_se": self.ratio_se, "std_error": self.std_error, "C": self.C,
                "C_se": self.C_se, "M": self.M, "sup_exit": self.sup_exit,
                "status": self.status, "converged": self.converged,
                "warnings": self.warnings}


def sup_exit_time(domain: DomainSpec, nodes, params: SimParams, n: int,
                  workers: int | None = None) -> tuple[float, float]:
    """``sup E[tau]``: closed form for balls and 3-D annuli, else the max over ``nodes``."""
    if isinstance(domain, Ball):
        return domain.radius**2 / domain.dim, 0.0
    if isinstance(domain, Annulus) and domain.dim == 3:
        spec = oracles.AnnulusSpec3D(domain.r_inner, domain.r_outer, tuple(domain.center))
        return oracles.annulus_sup_exit_time(spec)[0], 0.0
    ext = extremum_over(domain, Quantity.exit(), "sup", nodes, params, n, workers=workers)
    return ext.value, ext.arg_estimate.std_error


def picard_solve(domain: DomainSpec, lam: float, p: float, u0: Field, params: SimParams, *,
                 tol: float = 1e-6, max_iter: int = 50, n_per_node: int = 2000,
                 M_hint: float | None = None, workers: int | None = None):
    """Iterate ``u <- Tu`` from ``u0`` until the sup-norm change drops below ``tol``.

    ``C = lambda p M^(p-1) sup E[tau]`` with ``M = max(M_hint, |u0|)`` is the
    Lipschitz constant of ``T`` on the ball of radius ``M``; the iteration is
    run regardless, with a warning when ``C >= 1``.  A norm above
    ``10 * max(M_hint, |u0|)`` stops the iteration with status "diverged".
    """
    if u0.domain != domain:
        raise InputError("u0 must be defined on the domain being solved")
    if max_iter < 1:
        raise InputError("max_iter must be at least 1")
    bound = max(M_hint or 0.0, u0.sup_norm())
    sup_exit, sup_se = sup_exit_time(domain, u0.nodes, params, n_per_node, workers)
    trace = IterationTrace(M=bound, sup_exit=sup_exit)
    trace.C = lam * p * bound ** (p - 1) * sup_exit if bound > 0 else 0.0
    trace.C_se = lam * p * bound ** (p - 1) * sup_se if bound > 0 else 0.0
    if trace.C >= 1:
        msg = f"contraction estimate C = {trace.C:.4g} >= 1; convergence is not guaranteed"
        trace.warnings.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    limit = 10 * bound
    u, prev_err = u0, np.zeros(u0.nodes.shape[0])
    for _ in range(max_iter):
        new, err = apply_T(u, lam, p, params, n_per_node, workers=workers, return_errors=True)
        diff = np.abs(new.values - u.values)
        change = float(np.max(diff))
        j = int(np.argmax(diff))
        change_se = math.hypot(err[j], prev_err[j])
        if trace.sup_change:
            last = trace.sup_change[-1]
            ratio = change / last if last > 0 else 0.0
            last_se = trace.std_error[-1]
            rel = math.hypot(change_se / change if change else 0.0, last_se / last if last else 0.0)
            trace.ratio.append(ratio)
            trace.ratio_se.append(ratio * rel)
        trace.sup_change.append(change)
        trace.std_error.append(change_se)
        trace.norm.append(new.sup_norm())
        u, prev_err = new, err
        if limit > 0 and new.sup_norm() > limit or not np.all(np.isfinite(new.values)):
            trace.status = "diverged"
            break
        if change < tol:
            trace.status = "converged"
            break
    return u, trace


@dataclass
class ResidualReport:
    sup_residual: float
    normalized: float
    per_node: list
    n_eligible: int
    stencil_h: float
    factor: float
    mode: str

    def to_json(self) -> dict:
        return {"sup_residual": self.sup_residual, "normalized": self.normalized,
                "n_eligible": self.n_eligible, "stencil_h": self.stencil_h,
                "factor": self.factor, "mode": self.mode, "per_node": self.per_node}

    def to_csv(self, path) -> None:
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            d = len(self.per_node[0]["x"]) if self.per_node else 0
            w.writerow([f"x{i}" for i in range(d)] + ["u", "laplacian", "residual"])
            for row in self.per_node:
                w.writerow(row["x"] + [row["u"], row["laplacian"], row["residual"]])


def residual_check(u: Field, lam: float, p: float, stencil_h: float, *, factor: float = 2.0,
                   mode: Literal["nonlinear", "constant"] = "nonlinear",
                   source: float = 1.0) -> ResidualReport:
    """Central-difference ``Delta_h u + factor * lambda u^p`` at nodes with full stencils.

    ``mode="constant"`` replaces ``lambda u^p`` by ``source``; with the exit
    time field and ``source = 1`` the residual vanishes up to stencil error.
    The normalized residual divides by ``lambda |u|^p`` (``source`` in
    constant mode).
    """
    if not stencil_h > 0:
        raise InputError("stencil_h must be positive")
    if mode not in ("nonlinear", "constant"):
        raise InputError(f"unknown residual mode {mode!r}")
    dom = u.domain
    d = dom.dim
    eligible = -dom.signed_distance(u.nodes) > stencil_h * math.sqrt(d)
    X = u.nodes[eligible]
    if X.shape[0] == 0:
        raise GeometryTooThinError(
            f"no node is farther than {stencil_h * math.sqrt(d):.3g} from the boundary")
    u0 = u.values[eligible]
    lap = np.zeros(X.shape[0])
    for i in range(d):
        e = np.zeros(d)
        e[i] = stencil_h
        lap = lap + (u(X + e) + u(X - e) - 2 * u0)
    lap = lap / (stencil_h * stencil_h)
    if mode == "nonlinear":
        src = lam * np.maximum(u0, 0.0) ** p
        scale = lam * u.sup_norm() ** p
    else:
        src = np.full(X.shape[0], float(source))
        scale = abs(source)
    r = lap + factor * src
    sup_r = float(np.max(np.abs(r)))
    normalized = sup_r / scale if scale > 0 else (0.0 if sup_r == 0 else math.inf)
    rows = [{"x": x, "u": a, "laplacian": b, "residual": c}
            for x, a, b, c in zip(X.tolist(), u0.tolist(), lap.tolist(), r.tolist())]
    return ResidualReport(sup_r, normalized, rows, int(X.shape[0]), stencil_h, factor, mode)


def exit_time_field(domain: DomainSpec, spacing: float, **kw) -> Field:
    """Closed-form exit-time field of a ball on a lattice (constant-source oracle)."""
    if not isinstance(domain, Ball):
        raise InputError("the closed-form exit-time field is available for balls only")
    nodes = lattice_nodes(domain, spacing, origin=np.asarray(domain.center))
    r2 = np.sum((nodes - np.asarray(domain.center)) ** 2, axis=1)
    return Field(domain, nodes, (domain.radius**2 - r2) / domain.dim, **kw)


@dataclass
class MembershipReport:
    inf_d1: float
    sup_d2: float
    norm: float
    m: float
    M: float
    inf_d1_se: float = 0.0
    sup_d2_se: float = 0.0

    @property
    def i(self) -> bool:
        return bool(self.inf_d1 >= self.m)

    @property
    def ii(self) -> bool:
        return bool(self.sup_d2 <= self.m)

    @property
    def iii(self) -> bool:
        return bool(self.norm <= self.M)

    @property
    def margins(self) -> dict:
        return {"i": self.inf_d1 - self.m, "ii": self.m - self.sup_d2, "iii": self.M - self.norm}

    def to_json(self) -> dict:
        return {"i": self.i, "ii": self.ii, "iii": self.iii, "margins": self.margins,
                "inf_d1": self.inf_d1, "inf_d1_se": self.inf_d1_se, "sup_d2": self.sup_d2,
                "sup_d2_se": self.sup_d2_se, "norm": self.norm, "m": self.m, "M": self.M}


def membership_B(u: Field, hyp: Hypotheses, cfg: EstimatorConfig = EstimatorConfig()
                 ) -> MembershipReport:
    """Check ``inf_D1 L[D1] >= m``, ``sup_D2 L[D2] <= m`` and ``|u| <= M``.

    ``L[V](y) = E_y[int_0^tau u(W_s) 1_V(W_s) ds]``, estimated on the same
    grids as the condition checks.
    """
    part = hyp.partition
    dom = part.parent
    if u.domain != dom:
        raise InputError("the field must live on the partitioned domain")
    params = cfg.params_for(dom)
    norm = u.sup_norm()
    if not np.any(u.values > 0):
        return MembershipReport(0.0, 0.0, norm, hyp.m, hyp.M)
    concentric = dom.is_radial() and _concentric(part)
    out = []
    for mask, mode in ((part.d1_mask, "inf"), (part.d2_mask, "sup")):
        grid, _ = build_grid(dom, mask, cfg, radial=concentric)
        q = Quantity.green(Integrand(mask=mask, field=u))
        ext = extremum_over(dom, q, mode, grid, params, cfg.n_paths, workers=cfg.workers)
        out.append((ext.value, ext.arg_estimate.std_error))
    (a, a_se), (b, b_se) = out
    return MembershipReport(a, b, norm, hyp.m, hyp.M, a_se, b_se)
