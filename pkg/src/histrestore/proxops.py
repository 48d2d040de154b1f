"""Proximity operators for the split lifted energy.

Planes are stacked on axis 0.  Gradients use forward differences with a
Neumann (replicate) boundary: the difference at the last row/column is 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy import fft
from scipy.sparse.linalg import LinearOperator, cg

from .field import Histogram, cdf_of

__all__ = [
    "GradientField",
    "ProxWeights",
    "CouplingSolveError",
    "grad",
    "div_adjoint",
    "shrink",
    "prox_l1",
    "prox_l1_isotropic",
    "project_monotone_column",
    "project_monotone_planes",
    "project_gradient_coupling",
    "prox_wasserstein",
]

COUPLING_TOL = 1e-10


class CouplingSolveError(RuntimeError):
    def __init__(self, residual: float):
        super().__init__(f"gradient coupling solve did not converge (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True, eq=False)
class GradientField:
    """Forward differences of the free planes, each of shape ``(planes, height, width)``."""

    gx: np.ndarray
    gy: np.ndarray

    def __post_init__(self):
        gx = np.asarray(self.gx, dtype=float)
        gy = np.asarray(self.gy, dtype=float)
        if gx.shape != gy.shape or gx.ndim != 3:
            raise ValueError(f"gradient components must share a 3-D shape, got {gx.shape} and {gy.shape}")
        if not (np.all(np.isfinite(gx)) and np.all(np.isfinite(gy))):
            raise ValueError("gradient field has non-finite entries")
        object.__setattr__(self, "gx", gx)
        object.__setattr__(self, "gy", gy)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.gx.shape

    @classmethod
    def zeros(cls, shape) -> "GradientField":
        return cls(np.zeros(shape), np.zeros(shape))

    def l1(self) -> float:
        return float(np.abs(self.gx).sum() + np.abs(self.gy).sum())

    def l2_per_pixel(self) -> float:
        return float(np.sqrt(self.gx**2 + self.gy**2).sum())


@dataclass(frozen=True)
class ProxWeights:
    lam: float
    nu: float
    gamma: float

    def __post_init__(self):
        for name in ("lam", "nu", "gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def grad(u: np.ndarray) -> GradientField:
    """Forward differences along width (``gx``) and height (``gy``)."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 2:
        u = u[None]
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, :, :-1] = u[:, :, 1:] - u[:, :, :-1]
    gy[:, :-1, :] = u[:, 1:, :] - u[:, :-1, :]
    return GradientField(gx, gy)


def div_adjoint(g: GradientField) -> np.ndarray:
    """Adjoint of :func:`grad`, i.e. ``grad^T g`` (minus the discrete divergence)."""
    out = np.zeros(g.shape)
    out[:, :, :-1] -= g.gx[:, :, :-1]
    out[:, :, 1:] += g.gx[:, :, :-1]
    out[:, :-1, :] -= g.gy[:, :-1, :]
    out[:, 1:, :] += g.gy[:, :-1, :]
    return out


def shrink(a, t):
    """Soft thresholding ``sign(a) * max(|a| - t, 0)``."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("shrink threshold must be nonnegative")
    a = np.asarray(a, dtype=float)
    return np.sign(a) * np.maximum(np.abs(a) - t, 0.0)


def prox_l1(g: GradientField, t: float) -> GradientField:
    return GradientField(shrink(g.gx, t), shrink(g.gy, t))


def prox_l1_isotropic(g: GradientField, t: float) -> GradientField:
    """Prox of ``t * sum |(gx, gy)|_2``, shrinking each gradient vector as a whole."""
    norm = np.sqrt(g.gx**2 + g.gy**2)
    scale = np.maximum(1.0 - t / np.maximum(norm, 1e-300), 0.0)
    return GradientField(g.gx * scale, g.gy * scale)


def _pav_nonincreasing(y: np.ndarray) -> np.ndarray:
    """Pool-adjacent-violators fit of a non-increasing sequence (unit weights)."""
    values: list[float] = []
    counts: list[int] = []
    for v in y:
        values.append(float(v))
        counts.append(1)
        while len(values) > 1 and values[-2] < values[-1]:
            n = counts[-2] + counts[-1]
            merged = (values[-2] * counts[-2] + values[-1] * counts[-1]) / n
            values.pop()
            counts.pop()
            values[-1] = merged
            counts[-1] = n
    return np.repeat(values, counts)


def project_monotone_column(v, linear_shift=None) -> np.ndarray:
    """Project one column onto ``1 = w_0 >= w_1 >= ... >= w_k = 0``.

    Solves ``argmin 0.5 * |w - (v - linear_shift)|^2`` over non-increasing
    columns in the box with pinned ends.  Once the ends are pinned to 1 and
    0 they add nothing beyond the box, and clipping an isotonic fit to a box
    gives the box-constrained isotonic fit, so PAV followed by clipping is
    exact.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 3:
        raise ValueError("column needs at least 3 entries (k >= 2)")
    y = v if linear_shift is None else v - np.asarray(linear_shift, dtype=float)
    out = np.empty_like(y)
    out[0], out[-1] = 1.0, 0.0
    out[1:-1] = np.clip(_pav_nonincreasing(y[1:-1]), 0.0, 1.0)
    return out


@numba.njit(cache=True)
def _pav_clip_columns(y, out):
    # y, out: (columns, n); each row is one column of free planes
    m, n = y.shape
    vals = np.empty(n)
    cnts = np.empty(n)
    for c in range(m):
        top = 0
        for i in range(n):
            vals[top] = y[c, i]
            cnts[top] = 1.0
            top += 1
            while top > 1 and vals[top - 2] < vals[top - 1]:
                total = cnts[top - 2] + cnts[top - 1]
                vals[top - 2] = (vals[top - 2] * cnts[top - 2] + vals[top - 1] * cnts[top - 1]) / total
                cnts[top - 2] = total
                top -= 1
        i = 0
        for b in range(top):
            v = min(max(vals[b], 0.0), 1.0)
            for _ in range(int(cnts[b])):
                out[c, i] = v
                i += 1


def project_monotone_planes(interior: np.ndarray, shift=None) -> np.ndarray:
    """Column-wise monotone projection of the free planes, shape ``(k - 1, ...)``.

    Same map as :func:`project_monotone_column` applied to every pixel.
    """
    y = np.asarray(interior, dtype=float)
    if shift is not None:
        y = y - shift
    n = y.shape[0]
    cols = np.ascontiguousarray(y.reshape(n, -1).T)
    out = np.empty_like(cols)
    _pav_clip_columns(cols, out)
    return np.ascontiguousarray(out.T).reshape(y.shape)


def _neumann_eigenvalues(height: int, width: int) -> np.ndarray:
    ey = 4.0 * np.sin(np.pi * np.arange(height) / (2 * height)) ** 2
    ex = 4.0 * np.sin(np.pi * np.arange(width) / (2 * width)) ** 2
    return ey[:, None] + ex[None, :]


def _normal_operator(u: np.ndarray) -> np.ndarray:
    return u + div_adjoint(grad(u))


def project_gradient_coupling(phi, g: GradientField, method: str = "dct"):
    """Euclidean projection of ``(phi, g)`` onto ``{(u, v): v = grad u}``.

    Solves ``(I + grad^T grad) u = phi + grad^T g`` plane by plane, either
    by cosine-transform diagonalization (``"dct"``) or conjugate gradients
    (``"cg"``).  Returns ``(u, grad(u))``.
    """
    phi = np.asarray(phi, dtype=float)
    squeeze = phi.ndim == 2
    if squeeze:
        phi = phi[None]
    if phi.shape != g.shape:
        raise ValueError(f"shape mismatch: values {phi.shape}, gradient {g.shape}")
    rhs = phi + div_adjoint(g)
    _, h, w = rhs.shape
    if method == "dct":
        denom = 1.0 + _neumann_eigenvalues(h, w)
        u = fft.idctn(fft.dctn(rhs, type=2, axes=(1, 2), norm="ortho") / denom,
                      type=2, axes=(1, 2), norm="ortho")
    elif method == "cg":
        size = h * w
        op = LinearOperator(
            (size, size), matvec=lambda x: _normal_operator(x.reshape(1, h, w)).ravel(), dtype=float
        )
        u = np.empty_like(rhs)
        for p in range(rhs.shape[0]):
            sol, _ = cg(op, rhs[p].ravel(), rtol=1e-14, atol=1e-13, maxiter=10 * size)
            u[p] = sol.reshape(h, w)
    else:
        raise ValueError(f"unknown coupling solver {method!r}")
    residual = float(np.abs(_normal_operator(u) - rhs).max())
    if residual > COUPLING_TOL * max(1.0, float(np.abs(rhs).max())):
        raise CouplingSolveError(residual)
    v = grad(u)
    if squeeze:
        return u[0], v
    return u, v


def prox_wasserstein(planes, prior: Histogram, t: float, cost_power: float = 1.0) -> np.ndarray:
    """Prox of ``t * W1(marginal(phi), prior)`` on a stack of ``k + 1`` planes.

    Each free plane ``l`` is shifted by a constant ``c_l`` solving
    ``min_c 0.5 * N * c^2 + t * dg * |T_l - c|`` with
    ``T_l = 1 - mean(phi_l) - F_prior(g_l)``; that is, the plane mean moves
    toward the value matching the prior distribution function by at most
    ``t * dg / N``.  Planes 0 and ``k`` are returned unchanged.
    """
    if cost_power != 1.0:
        raise ValueError("the Wasserstein prox is only available for the cost |g1 - g2|")
    if t < 0:
        raise ValueError("prox parameter must be nonnegative")
    planes = np.asarray(planes, dtype=float)
    k = planes.shape[0] - 1
    if prior.grid.k != k:
        raise ValueError(f"prior has {prior.grid.k} levels but the field has {k}")
    n_pix = planes[0].size
    means = planes[1:-1].reshape(k - 1, -1).mean(axis=1)
    target = 1.0 - means - cdf_of(prior).values[:-1]
    step = t * prior.grid.step / n_pix
    shift = target - shrink(target, step)
    out = planes.copy()
    out[1:-1] += shift[:, None, None]
    return out
