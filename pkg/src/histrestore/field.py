"""Images, histograms and lifted fields.

A grayvalue image ``u`` on a grid of ``k`` levels is represented in lifted
form by ``k + 1`` planes per pixel.  Plane ``l`` holds the indicator of the
upper level set ``{u >= g_{l+1}}``; planes 0 and ``k`` are pinned to 1 and 0.
The drop between planes ``l - 1`` and ``l`` carries the mass of grayvalue
``g_l = (l - 1) / (k - 1)``.

Arrays are stored plane-major with shape ``(k + 1, height, width)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LevelGrid",
    "Image",
    "LiftedField",
    "Histogram",
    "Cdf",
    "lift",
    "threshold",
    "marginal_histogram",
    "histogram_of",
    "cdf_of",
    "level_index",
    "quantize",
]

MASS_TOL = 1e-12
FIELD_TOL = 1e-9


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LevelGrid:
    """Uniform grid of ``k`` grayvalues ``0 = g_1 < ... < g_k = 1``."""

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise ValueError(f"level grid needs k >= 2, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))

    @property
    def levels(self) -> np.ndarray:
        return np.arange(self.k) / (self.k - 1)

    @property
    def step(self) -> float:
        return 1.0 / (self.k - 1)


@dataclass(frozen=True, eq=False)
class Image:
    """Grayvalue image with intensities in ``[0, 1]``, shape ``(height, width)``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"image must be a non-empty 2-D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("image contains non-finite intensities")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError(
                f"intensities must lie in [0, 1], got range [{data.min()}, {data.max()}]"
            )
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))


@dataclass(frozen=True, eq=False)
class LiftedField:
    """Relaxed lifted field in the discrete set of monotone columns.

    Parameters
    ----------
    planes : array of shape ``(k + 1, height, width)``
        Plane-major values ``phi(x, l)``.
    check : bool
        Validate boundary planes, box and monotonicity (tolerance ``FIELD_TOL``).
    """

    planes: np.ndarray
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        planes = np.asarray(self.planes, dtype=float)
        if planes.ndim != 3 or planes.shape[0] < 3:
            raise ValueError(f"lifted field needs shape (k+1, h, w) with k >= 2, got {planes.shape}")
        if self.check:
            violation = constraint_violation(planes)
            if violation > FIELD_TOL:
                raise ValueError(f"field violates the monotone-column constraints by {violation:.3g}")
        object.__setattr__(self, "planes", _frozen(planes))

    @property
    def k(self) -> int:
        return self.planes.shape[0] - 1

    @property
    def grid(self) -> LevelGrid:
        return LevelGrid(self.k)

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    @property
    def size(self) -> int:
        return self.height * self.width

    @property
    def interior(self) -> np.ndarray:
        """Free planes ``1..k-1``."""
        return self.planes[1:-1]

    def column(self, i: int, j: int) -> np.ndarray:
        return self.planes[:, i, j]

    @classmethod
    def from_interior(cls, interior, check=True) -> "LiftedField":
        interior = np.asarray(interior, dtype=float)
        ones = np.ones((1,) + interior.shape[1:])
        return cls(np.concatenate([ones, interior, 0.0 * ones]), check=check)


def constraint_violation(planes: np.ndarray) -> float:
    """Largest violation of boundary, box and monotonicity constraints."""
    planes = np.asarray(planes, dtype=float)
    worst = max(
        np.abs(planes[0] - 1.0).max(),
        np.abs(planes[-1]).max(),
        (-planes).max(initial=0.0),
        (planes - 1.0).max(initial=0.0),
        np.diff(planes, axis=0).max(initial=0.0),
    )
    return float(max(worst, 0.0))


@dataclass(frozen=True, eq=False)
class Histogram:
    """Probability vector over the levels of ``grid``."""

    grid: LevelGrid
    mass: np.ndarray

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=float)
        if mass.shape != (self.grid.k,):
            raise ValueError(f"histogram needs {self.grid.k} bins, got shape {mass.shape}")
        if np.any(mass < 0) or not np.all(np.isfinite(mass)):
            raise ValueError("histogram masses must be finite and nonnegative")
        total = mass.sum()
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"histogram masses sum to {total!r}, expected 1")
        object.__setattr__(self, "mass", _frozen(mass))

    @classmethod
    def normalized(cls, grid: LevelGrid, weights) -> "Histogram":
        """Build from nonnegative weights, rescaling them to unit mass."""
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive sum")
        return cls(grid, w / w.sum())

    @classmethod
    def dirac(cls, grid: LevelGrid, index: int) -> "Histogram":
        mass = np.zeros(grid.k)
        mass[index] = 1.0
        return cls(grid, mass)

    def __eq__(self, other):
        if not isinstance(other, Histogram):
            return NotImplemented
        return self.grid == other.grid and bool(np.array_equal(self.mass, other.mass))


@dataclass(frozen=True, eq=False)
class Cdf:
    """Distribution function sampled at the grid levels."""

    grid: LevelGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.k,):
            raise ValueError(f"cdf needs {self.grid.k} values, got shape {values.shape}")
        if np.any(np.diff(values) < -MASS_TOL):
            raise ValueError("cdf must be non-decreasing")
        if abs(values[-1] - 1.0) > MASS_TOL or values.min() < -MASS_TOL:
            raise ValueError("cdf must stay in [0, 1] and end at 1")
        object.__setattr__(self, "values", _frozen(values))


def level_index(values, k: int) -> np.ndarray:
    """0-based index of the nearest level, ties resolved toward the lower level."""
    scaled = np.asarray(values, dtype=float) * (k - 1)
    idx = np.ceil(scaled - 0.5).astype(np.int64)
    return np.clip(idx, 0, k - 1)


def quantize(image: Image, grid: LevelGrid) -> Image:
    """Snap every intensity to its nearest grid level."""
    return Image(grid.levels[level_index(image.data, grid.k)])


def lift(image: Image, grid: LevelGrid) -> LiftedField:
    """Binary lifted field of ``image`` on ``grid``.

    Column ``x`` equals 1 on planes ``0..j`` and 0 from plane ``j + 1`` on,
    where ``j`` is the 0-based nearest-level index of ``u(x)``.
    """
    if not isinstance(grid, LevelGrid):
        grid = LevelGrid(grid)
    j = level_index(image.data, grid.k)
    planes = (np.arange(grid.k + 1)[:, None, None] <= j[None]).astype(float)
    return LiftedField(planes, check=False)


def threshold(field: LiftedField, alpha: float = 0.5) -> Image:
    """Image whose grayvalue at ``x`` is ``g_l`` for the first plane ``l`` with ``phi <= alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"threshold alpha must lie in (0, 1), got {alpha}")
    below = field.planes[1:] <= alpha
    # plane k is 0 so argmax always finds a hit
    first = np.argmax(below, axis=0)
    return Image(field.grid.levels[first])


def marginal_histogram(field: LiftedField) -> Histogram:
    """Grayvalue histogram carried by the drops of the lifted field."""
    drops = field.planes[:-1] - field.planes[1:]
    mass = drops.reshape(field.k, -1).mean(axis=1)
    # drops of a feasible field are >= -FIELD_TOL; clear that residue
    mass = np.clip(mass, 0.0, None)
    total = mass.sum()
    if abs(total - 1.0) > 0.1 * MASS_TOL:
        mass = mass / total
    return Histogram(field.grid, mass)


def histogram_of(image: Image, grid: LevelGrid) -> Histogram:
    """Nearest-level grayvalue histogram of ``image``, each pixel carrying mass ``1/N``."""
    idx = level_index(image.data, grid.k).ravel()
    counts = np.bincount(idx, minlength=grid.k)
    return Histogram(grid, counts / idx.size)


def cdf_of(h: Histogram) -> Cdf:
    values = np.cumsum(h.mass)
    values[-1] = 1.0
    return Cdf(h.grid, np.minimum(values, 1.0))
