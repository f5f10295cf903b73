"""Bounded open domains in R^d built from balls and annuli.

Domains are immutable value objects.  Every operation works on either a single
point of shape ``(d,)`` or a batch of shape ``(n, d)``.

Signed distances follow the usual CSG conventions: negative inside, positive
outside, ``max`` for differences and ``min`` for unions.  For compositions the
value is a lower bound on the true distance in magnitude, which is what the
walk-on-spheres scheme needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateDomainError, InputError

MIN_DIM = 3
MAX_STACK = 32

# opcodes of the compiled signed-distance program (mirrored in _core.pyx)
OP_BALL = 1
OP_ANNULUS = 2
OP_DIFF = 3
OP_UNION = 4


def _as_points(x, dim):
    pts = np.asarray(x, dtype=np.float64)
    if pts.ndim == 1:
        if pts.shape[0] != dim:
            raise InputError(f"point has dimension {pts.shape[0]}, domain has {dim}")
    elif pts.ndim == 2:
        if pts.shape[1] != dim:
            raise InputError(f"points have dimension {pts.shape[1]}, domain has {dim}")
    else:
        raise InputError("expected a point (d,) or a batch of points (n, d)")
    if not np.all(np.isfinite(pts)):
        raise InputError("points must have finite coordinates")
    return pts


def _radius(pts, center):
    # explicit left-to-right sum; the compiled kernel accumulates the same way
    diff = pts - center
    if diff.ndim == 1:
        s = 0.0
        for k in range(diff.shape[0]):
            s = s + diff[k] * diff[k]
    else:
        s = np.zeros(diff.shape[0])
        for k in range(diff.shape[1]):
            s = s + diff[:, k] * diff[:, k]
    return np.sqrt(s)


class DomainSpec:
    """Base class of all domain variants."""

    dim: int

    def signed_distance(self, x):
        raise NotImplementedError

    def contains(self, x):
        """True strictly inside the open set; boundary points are outside."""
        return self.signed_distance(x) < 0

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def program(self) -> tuple[np.ndarray, np.ndarray]:
        """Flatten into ``(ops, params)`` for the compiled kernels.

        ``ops`` holds ``(opcode, argument)`` pairs in postfix order; the
        argument is a parameter offset for primitives and a part count for
        unions.
        """
        ops: list[int] = []
        params: list[float] = []
        self._emit(ops, params)
        depth = _stack_depth(ops)
        if depth > MAX_STACK:
            raise InputError(f"domain nesting too deep ({depth} > {MAX_STACK})")
        return np.asarray(ops, dtype=np.int32), np.asarray(params, dtype=np.float64)

    def _emit(self, ops, params):
        raise NotImplementedError

    @property
    def center(self):
        return None

    def is_radial(self) -> bool:
        """True for a ball or annulus, i.e. rotation invariant about ``center``."""
        return False

    def __eq__(self, other):
        return type(self) is type(other) and self.to_json() == other.to_json()

    def __hash__(self):
        return hash(repr(self.to_json()))


def _stack_depth(ops):
    sp = best = 0
    for i in range(0, len(ops), 2):
        op, arg = ops[i], ops[i + 1]
        if op in (OP_BALL, OP_ANNULUS):
            sp += 1
        elif op == OP_DIFF:
            sp -= 1
        elif op == OP_UNION:
            sp -= arg - 1
        best = max(best, sp)
    return best


def _check_center(center, dim):
    c = np.asarray(center, dtype=np.float64)
    if c.ndim != 1 or not np.all(np.isfinite(c)):
        raise InputError("center must be a finite vector")
    if dim is None:
        dim = c.shape[0]
    if c.shape[0] != dim:
        raise InputError(f"center has dimension {c.shape[0]}, expected {dim}")
    if dim < MIN_DIM:
        raise InputError(f"dimension must be at least {MIN_DIM}, got {dim}")
    c.setflags(write=False)
    return c, dim


class Ball(DomainSpec):
    def __init__(self, center, radius, dim=None):
        self._center, self.dim = _check_center(center, dim)
        if not radius > 0 or not np.isfinite(radius):
            raise InputError(f"ball radius must be positive, got {radius}")
        self.radius = float(radius)

    @property
    def center(self):
        return self._center

    def is_radial(self):
        return True

    def signed_distance(self, x):
        pts = _as_points(x, self.dim)
        return _radius(pts, self._center) - self.radius

    def bounding_box(self):
        return self._center - self.radius, self._center + self.radius

    def to_json(self):
        return {"type": "ball", "center": self._center.tolist(), "radius": self.radius,
                "dim": self.dim}

    def _emit(self, ops, params):
        ops += [OP_BALL, len(params)]
        params += self._center.tolist() + [self.radius]

    def __repr__(self):
        return f"Ball(center={self._center.tolist()}, radius={self.radius})"


class Annulus(DomainSpec):
    """Spherical shell ``r_inner < |x - center| < r_outer``."""

    def __init__(self, center, r_inner, r_outer, dim=None):
        self._center, self.dim = _check_center(center, dim)
        if not 0 < r_inner < r_outer or not np.isfinite(r_outer):
            raise InputError(f"annulus needs 0 < r_inner < r_outer, got {r_inner}, {r_outer}")
        self.r_inner = float(r_inner)
        self.r_outer = float(r_outer)

    @property
    def center(self):
        return self._center

    def is_radial(self):
        return True

    def signed_distance(self, x):
        pts = _as_points(x, self.dim)
        r = _radius(pts, self._center)
        return np.maximum(r - self.r_outer, self.r_inner - r)

    def bounding_box(self):
        return self._center - self.r_outer, self._center + self.r_outer

    def to_json(self):
        return {"type": "annulus", "center": self._center.tolist(), "r_inner": self.r_inner,
                "r_outer": self.r_outer, "dim": self.dim}

    def _emit(self, ops, params):
        ops += [OP_ANNULUS, len(params)]
        params += self._center.tolist() + [self.r_inner, self.r_outer]

    def __repr__(self):
        return (f"Annulus(center={self._center.tolist()}, r_inner={self.r_inner}, "
                f"r_outer={self.r_outer})")


class Difference(DomainSpec):
    """``outer`` with the closure of ``hole`` removed (an open set)."""

    def __init__(self, outer: DomainSpec, hole: DomainSpec):
        if outer.dim != hole.dim:
            raise InputError("difference parts must share the dimension")
        lo_o, hi_o = outer.bounding_box()
        lo_h, hi_h = hole.bounding_box()
        if not (np.all(lo_h > lo_o) and np.all(hi_h < hi_o)):
            raise InputError("difference hole must lie strictly inside the outer bounding box")
        self.outer = outer
        self.hole = hole
        self.dim = outer.dim

    def signed_distance(self, x):
        return np.maximum(self.outer.signed_distance(x), -self.hole.signed_distance(x))

    def bounding_box(self):
        return self.outer.bounding_box()

    def to_json(self):
        return {"type": "difference", "outer": self.outer.to_json(),
                "hole": self.hole.to_json(), "dim": self.dim}

    def _emit(self, ops, params):
        self.outer._emit(ops, params)
        self.hole._emit(ops, params)
        ops += [OP_DIFF, 0]

    def __repr__(self):
        return f"Difference({self.outer!r}, {self.hole!r})"


class Union(DomainSpec):
    def __init__(self, parts: Sequence[DomainSpec]):
        parts = tuple(parts)
        if not parts:
            raise InputError("union needs at least one part")
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise InputError("union parts must share the dimension")
        self.parts = parts
        self.dim = parts[0].dim

    def signed_distance(self, x):
        out = self.parts[0].signed_distance(x)
        for part in self.parts[1:]:
            out = np.minimum(out, part.signed_distance(x))
        return out

    def bounding_box(self):
        boxes = [p.bounding_box() for p in self.parts]
        return (np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0))

    def to_json(self):
        return {"type": "union", "parts": [p.to_json() for p in self.parts], "dim": self.dim}

    def _emit(self, ops, params):
        for part in self.parts:
            part._emit(ops, params)
        if len(self.parts) > 1:
            ops += [OP_UNION, len(self.parts)]

    def __repr__(self):
        return f"Union({list(self.parts)!r})"


def domain_from_json(obj: dict) -> DomainSpec:
    """Build a domain from its JSON description (see ``DomainSpec.to_json``)."""
    try:
        kind = obj["type"]
        dim = obj.get("dim")
        if kind == "ball":
            dom = Ball(obj["center"], obj["radius"], dim)
        elif kind == "annulus":
            dom = Annulus(obj["center"], obj["r_inner"], obj["r_outer"], dim)
        elif kind == "difference":
            dom = Difference(domain_from_json(obj["outer"]), domain_from_json(obj["hole"]))
        elif kind == "union":
            dom = Union([domain_from_json(p) for p in obj["parts"]])
        else:
            raise InputError(f"unknown domain type {kind!r}")
    except KeyError as exc:
        raise InputError(f"domain description missing field {exc.args[0]!r}") from None
    if dim is not None and dom.dim != dim:
        raise InputError(f"domain declares dim={dim} but its parts have dim={dom.dim}")
    return dom


def contains(domain: DomainSpec, x):
    return domain.contains(x)


def signed_distance(domain: DomainSpec, x):
    return domain.signed_distance(x)


def sample_interior(domain: DomainSpec, n: int, seed: int, *, min_rate: float = 1e-6,
                    max_draws: int = 50_000_000) -> np.ndarray:
    """``n`` points uniform in ``domain`` by rejection from its bounding box."""
    if n < 1:
        raise InputError("n must be at least 1")
    rng = np.random.default_rng(seed)
    lo, hi = domain.bounding_box()
    accepted = []
    count = draws = 0
    batch = max(4 * n, 1024)
    while count < n:
        pts = rng.uniform(lo, hi, size=(batch, domain.dim))
        keep = pts[domain.contains(pts)]
        accepted.append(keep)
        count += keep.shape[0]
        draws += batch
        if count < n and draws >= max(2_000_000, 1.0 / min_rate) and count / draws < min_rate:
            raise DegenerateDomainError(
                f"acceptance rate {count / draws:.3g} below {min_rate:g} after {draws} draws")
        if count < n and draws >= max_draws:
            raise DegenerateDomainError(f"only {count} of {n} points accepted in {draws} draws")
        batch = min(4 * batch, 4_000_000)
    return np.concatenate(accepted)[:n]


def radial_grid(domain: DomainSpec, n: int, *, direction=None, region: "DomainSpec | Mask | None" = None):
    """``n`` equispaced points on a ray from the center of a ball or annulus.

    Radii are the midpoints of ``n`` equal cells spanning the radial extent,
    so no point lies on the boundary.  If ``region`` is given, points outside
    it are dropped.
    """
    if not domain.is_radial():
        raise InputError("radial grids need a ball or annulus")
    lo = domain.r_inner if isinstance(domain, Annulus) else 0.0
    hi = domain.r_outer if isinstance(domain, Annulus) else domain.radius
    radii = lo + (np.arange(n) + 0.5) * (hi - lo) / n
    pts = ray_points(domain.center, radii, direction)
    if region is not None:
        pts = pts[region.contains(pts)]
    return pts


def ray_points(center, radii, direction=None):
    center = np.asarray(center, dtype=np.float64)
    if direction is None:
        direction = np.zeros_like(center)
        direction[0] = 1.0
    direction = np.asarray(direction, dtype=np.float64)
    direction = direction / np.linalg.norm(direction)
    return center + np.outer(np.asarray(radii, dtype=np.float64), direction)


def lattice_nodes(domain: DomainSpec, spacing: float, *, origin=None) -> np.ndarray:
    """Cartesian lattice points inside ``domain`` (lattice through ``origin``)."""
    lo, hi = domain.bounding_box()
    origin = np.zeros(domain.dim) if origin is None else np.asarray(origin, dtype=np.float64)
    axes = []
    for k in range(domain.dim):
        i0 = int(np.ceil((lo[k] - origin[k]) / spacing))
        i1 = int(np.floor((hi[k] - origin[k]) / spacing))
        axes.append(origin[k] + spacing * np.arange(i0, i1 + 1))
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    return mesh[domain.contains(mesh)]


def regular_boundary(domain: DomainSpec) -> bool:
    """Certify that every boundary point satisfies the Poincare cone condition.

    Only smooth primitives are certified: balls, annuli, and a ball minus a
    ball whose closure sits strictly inside it.  Anything else returns False,
    meaning "not certified" rather than "irregular".
    """
    if isinstance(domain, (Ball, Annulus)):
        return True
    if isinstance(domain, Difference) and isinstance(domain.outer, Ball) \
            and isinstance(domain.hole, Ball):
        gap = np.linalg.norm(domain.outer.center - domain.hole.center) + domain.hole.radius
        return bool(gap < domain.outer.radius)
    return False


@dataclass(frozen=True)
class Mask:
    """Indicator of ``include`` minus ``exclude`` (either may be omitted).

    ``exclude`` is removed as an open set, so points on its boundary count as
    inside the mask.  This is how the complement ``D2 = D \\ D1`` of a
    partition is represented without building a separate domain.
    """

    include: DomainSpec | None = None
    exclude: DomainSpec | None = None

    def contains(self, x):
        pts = np.asarray(x, dtype=np.float64)
        out = np.ones(pts.shape[:-1], dtype=bool) if pts.ndim == 2 else np.bool_(True)
        if self.include is not None:
            out = out & self.include.contains(pts)
        if self.exclude is not None:
            out = out & ~self.exclude.contains(pts)
        return out

    @property
    def dim(self):
        dom = self.include if self.include is not None else self.exclude
        return None if dom is None else dom.dim

    def to_json(self):
        return {"include": None if self.include is None else self.include.to_json(),
                "exclude": None if self.exclude is None else self.exclude.to_json()}


def as_mask(region) -> Mask:
    if region is None:
        return Mask()
    if isinstance(region, Mask):
        return region
    if isinstance(region, DomainSpec):
        return Mask(include=region)
    raise InputError(f"cannot use {type(region).__name__} as a region")


@dataclass(frozen=True)
class Partition:
    """``D1`` inside ``parent``; ``D2`` is everything in ``parent`` not in ``D1``."""

    d1: DomainSpec
    parent: DomainSpec

    def __post_init__(self):
        if self.d1.dim != self.parent.dim:
            raise InputError("partition parts must share the dimension")

    def validate(self, n: int = 2000, seed: int = 0) -> None:
        """Check ``d1`` inside ``parent`` on sampled points of ``d1``."""
        pts = sample_interior(self.d1, n, seed)
        outside = ~self.parent.contains(pts)
        if outside.any():
            raise InputError(f"D1 is not contained in D: e.g. {pts[outside][0].tolist()}")

    @property
    def d1_mask(self) -> Mask:
        return Mask(include=self.d1)

    @property
    def d2_mask(self) -> Mask:
        return Mask(include=self.parent, exclude=self.d1)

    def in_d2(self, x):
        return self.d2_mask.contains(x)

    def to_json(self):
        return {"d1": self.d1.to_json(), "parent": self.parent.to_json()}
