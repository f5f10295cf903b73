"""Pure-numpy path kernels, used when the compiled extension is unavailable.

Paths of a block advance in lockstep and exited paths are dropped from the
working arrays.  Each path's arithmetic is identical to ``_core.pyx``, so the
two backends agree path by path: integer step counts match exactly and
floating-point functionals match up to the last-bit differences between libm
and numpy's vectorised ``log``/``pow``.
"""

import numpy as np
from scipy.spatial import cKDTree

from . import rng
from .geometry import OP_ANNULUS, OP_BALL, OP_DIFF, OP_UNION, _radius

MODE_EXIT = 0
MODE_COUNT = 1
MODE_FUNCTIONAL = 2

FIELD_CONST = 0
FIELD_RADIAL = 1
FIELD_NEAREST = 2
FIELD_IDW = 3


def sdf_program(ops, prm, X):
    d = X.shape[1]
    stack = []
    for i in range(0, len(ops), 2):
        op, arg = int(ops[i]), int(ops[i + 1])
        if op == OP_BALL:
            stack.append(_radius(X, prm[arg:arg + d]) - prm[arg + d])
        elif op == OP_ANNULUS:
            r = _radius(X, prm[arg:arg + d])
            stack.append(np.maximum(r - prm[arg + d + 1], prm[arg + d] - r))
        elif op == OP_DIFF:
            b = stack.pop()
            stack[-1] = np.maximum(stack[-1], -b)
        elif op == OP_UNION:
            parts = stack[-arg:]
            del stack[-arg:]
            v = parts[0]
            for w in parts[1:]:
                v = np.minimum(v, w)
            stack.append(v)
    return stack[0]


def in_mask(iops, iprm, eops, eprm, X):
    out = np.ones(X.shape[0], dtype=bool)
    if len(iops):
        out &= sdf_program(iops, iprm, X) < 0
    if len(eops):
        out &= ~(sdf_program(eops, eprm, X) < 0)
    return out


def field_values(kind, center, radii, values, nodes, k, X, tree=None):
    """Interpolated field values at the rows of ``X`` (no boundary rule)."""
    if kind == FIELD_RADIAL:
        r = _radius(X, center)
        n = radii.shape[0]
        j = np.clip(np.searchsorted(radii, r, side="right") - 1, 0, max(n - 2, 0))
        if n == 1:
            return np.full(r.shape, values[0])
        slope = (values[j + 1] - values[j]) / (radii[j + 1] - radii[j])
        u = slope * (r - radii[j]) + values[j]
        u = np.where(r <= radii[0], values[0], u)
        return np.where(r >= radii[n - 1], values[n - 1], u)
    kk = 1 if kind == FIELD_NEAREST else min(k, nodes.shape[0])
    if tree is None:
        tree = cKDTree(nodes)
    _, idx = tree.query(X, k=kk)
    idx = idx.reshape(X.shape[0], kk)
    d = X.shape[1]
    d2 = np.zeros(idx.shape)
    for j in range(d):
        t = X[:, j, None] - nodes[idx, j]
        d2 = d2 + t * t
    # order by the recomputed distances, ties by node index (as the kernel does)
    order = np.lexsort((idx, d2), axis=1)
    d2 = np.take_along_axis(d2, order, axis=1)
    idx = np.take_along_axis(idx, order, axis=1)
    vals = values[idx]
    if kind == FIELD_NEAREST:
        return vals[:, 0]
    exact = d2[:, 0] == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        num = np.zeros(X.shape[0])
        den = np.zeros(X.shape[0])
        for j in range(kk):
            w = 1.0 / d2[:, j]
            num = num + w * vals[:, j]
            den = den + w
        u = num / den
    return np.where(exact, vals[:, 0], u)


def integrand_values(field_kind, fcenter, fradii, fvalues, fnodes, fk, fabsorb, fpower,
                     fscale, X, s, tree=None):
    if field_kind == FIELD_CONST:
        return np.full(X.shape[0], fscale)
    u = field_values(field_kind, fcenter, fradii, fvalues, fnodes, fk, X, tree)
    u = np.where(-s < fabsorb, 0.0, u)
    u = np.where(u > 0.0, u, 0.0)
    if fpower != 1.0:
        u = np.power(u, fpower)
    return fscale * u


def em_block(ops, prm, iops, iprm, eops, eprm, mode, field_kind, fcenter, fradii, fvalues,
             fnodes, fk, fabsorb, fpower, fscale, cap, x0, seed, start, n, sqrt_h, max_steps,
             antithetic, out_steps, out_count, out_acc, out_pt, out_trunc, func=None):
    d = x0.shape[0]
    masked = len(iops) > 0 or len(eops) > 0
    keys, sign = rng.path_keys(seed, np.arange(start, start + n, dtype=np.uint64), antithetic)
    X = np.tile(np.asarray(x0, dtype=np.float64), (n, 1))
    ids = np.arange(n)
    count = np.zeros(n, dtype=np.int64)
    acc = np.zeros(n)
    errors = []
    tree = cKDTree(fnodes) if field_kind in (FIELD_NEAREST, FIELD_IDW) else None
    out_trunc[:] = 0
    step = 0
    while ids.size:
        s = sdf_program(ops, prm, X)
        done = ~(s < 0)
        if step >= max_steps:
            out_trunc[ids[~done]] = 1
            done[:] = True
        if done.any():
            fin = ids[done]
            out_steps[fin] = step
            out_count[fin] = count[done]
            out_acc[fin] = acc[done]
            out_pt[fin] = X[done]
            keep = ~done
            ids, X, keys, sign, count, acc, s = (a[keep] for a in (ids, X, keys, sign, count, acc, s))
            if not ids.size:
                break
        if mode == MODE_COUNT:
            count += in_mask(iops, iprm, eops, eprm, X)
        elif mode == MODE_FUNCTIONAL:
            inside = in_mask(iops, iprm, eops, eprm, X) if masked else np.ones(ids.size, bool)
            g = np.zeros(ids.size)
            if inside.any():
                if func is not None:
                    g[inside] = fscale * np.asarray(func(X[inside]), dtype=np.float64)
                else:
                    g[inside] = integrand_values(field_kind, fcenter, fradii, fvalues, fnodes,
                                                 fk, fabsorb, fpower, fscale, X[inside],
                                                 s[inside], tree)
            bad = np.abs(g) > cap
            if bad.any():
                for j in np.flatnonzero(bad):
                    errors.append((start + int(ids[j]), float(g[j]), X[j].tolist()))
                keep = ~bad
                ids, X, keys, sign, count, acc, g = (a[keep] for a in (ids, X, keys, sign, count, acc, g))
            acc = acc + g
        base = step * d
        for i in range(d):
            X[:, i] = X[:, i] + sqrt_h * rng.normals(keys, sign, base + i)
        step += 1
    if errors:
        return min(errors)
    return None


def wos_block(ops, prm, x0, seed, start, n, eps, max_steps, antithetic, out_steps, out_time,
              out_pt, out_trunc):
    d = x0.shape[0]
    keys, sign = rng.path_keys(seed, np.arange(start, start + n, dtype=np.uint64), antithetic)
    X = np.tile(np.asarray(x0, dtype=np.float64), (n, 1))
    ids = np.arange(n)
    t = np.zeros(n)
    dd = float(d)
    out_trunc[:] = 0
    step = 0
    while ids.size:
        r = -sdf_program(ops, prm, X)
        done = r < eps
        if step >= max_steps:
            out_trunc[ids[~done]] = 1
            done[:] = True
        if done.any():
            fin = ids[done]
            out_steps[fin] = step
            out_time[fin] = t[done]
            out_pt[fin] = X[done]
            keep = ~done
            ids, X, keys, sign, t, r = (a[keep] for a in (ids, X, keys, sign, t, r))
            if not ids.size:
                break
        base = step * d
        Z = np.empty_like(X)
        norm2 = np.zeros(ids.size)
        for i in range(d):
            Z[:, i] = rng.normals(keys, sign, base + i)
            norm2 = norm2 + Z[:, i] * Z[:, i]
        scale = r / np.sqrt(norm2)
        for i in range(d):
            X[:, i] = X[:, i] + scale * Z[:, i]
        t = t + r * r / dd
        step += 1


def normals_block(seed, path_index, n, antithetic=False):
    keys, sign = rng.path_keys(seed, np.array([path_index], dtype=np.uint64), antithetic)
    return [float(rng.normals(keys, sign, i)[0]) for i in range(n)]
