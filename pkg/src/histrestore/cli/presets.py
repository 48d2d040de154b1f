"""Synthetic experiment presets at desk scale.

Each preset builds its inputs deterministically from a seed, runs the
histogram-prior arm (and the TV-only arm where a comparison is meaningful)
and returns images plus a JSON-ready comparison record.  Weights are
hand-picked for these synthetic inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..field import Histogram, Image, LevelGrid, histogram_of, level_index
from ..solver import DataTerm, Problem, SolverParams, SolveReport, solve
from ..transport import w1_cdf

NOISE_SIGMA = 0.1
RNG_NAME = "numpy.random.PCG64"


@dataclass
class PresetResult:
    name: str
    images: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    problems: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def add_noise(clean: np.ndarray, seed: int, sigma: float = NOISE_SIGMA) -> np.ndarray:
    """Additive Gaussian noise clamped to [0, 1]."""
    return np.clip(clean + _rng(seed).normal(0.0, sigma, clean.shape), 0.0, 1.0)


def region_histogram(values: np.ndarray, grid: LevelGrid) -> Histogram:
    return histogram_of(Image(np.asarray(values, dtype=float).reshape(1, -1)), grid)


def value_noise(shape, seed: int, octaves=(4, 8, 16), persistence: float = 0.5) -> np.ndarray:
    """Multi-octave value noise from bilinearly upsampled random lattices, scaled to [0, 1]."""
    rng = _rng(seed)
    h, w = shape
    out = np.zeros(shape)
    amp = 1.0
    for cells in octaves:
        lattice = rng.random((cells + 1, cells + 1))
        y = np.linspace(0, cells, h)
        x = np.linspace(0, cells, w)
        y0 = np.minimum(y.astype(int), cells - 1)
        x0 = np.minimum(x.astype(int), cells - 1)
        ty = (y - y0)[:, None]
        tx = (x - x0)[None, :]
        # smoothstep weights hide the lattice
        ty, tx = ty * ty * (3 - 2 * ty), tx * tx * (3 - 2 * tx)
        a = lattice[y0][:, x0]
        b = lattice[y0][:, x0 + 1]
        c = lattice[y0 + 1][:, x0]
        d = lattice[y0 + 1][:, x0 + 1]
        out += amp * ((a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty)
        amp *= persistence
    out -= out.min()
    return out / out.max()


def _disk(shape, center, radius) -> np.ndarray:
    yy, xx = np.mgrid[: shape[0], : shape[1]]
    return (yy - center[0]) ** 2 + (xx - center[1]) ** 2 <= radius**2


def _run(result: PresetResult, arm: str, problem: Problem, params: SolverParams) -> SolveReport:
    report = solve(problem, params)
    result.reports[arm] = report
    result.problems[arm] = problem
    result.images[f"{arm}_result"] = report.u_star
    return report


def stripes(seed: int = 0, params: SolverParams | None = None) -> PresetResult:
    """Noisy two-tone stripes; prior is the histogram of the clean image."""
    params = params or SolverParams(gamma=2.0, tol=1e-5, max_iter=3000)
    grid = LevelGrid(16)
    x = np.arange(64)
    clean = np.repeat(np.where((x // 8) % 2 == 0, 0.2, 0.8)[None, :], 64, axis=0)
    noisy = Image(add_noise(clean, seed))
    prior = histogram_of(Image(clean), grid)
    lam, nu = 0.2, 1.0
    res = PresetResult("stripes", settings=dict(k=grid.k, lam=lam, nu=nu, tv_lam=lam, seed=seed,
                                                noise_sigma=NOISE_SIGMA, rng=RNG_NAME))
    res.images.update(clean=Image(clean), input=noisy)
    w = _run(res, "wasserstein", Problem(noisy, grid, DataTerm(), prior, lam=lam, nu=nu), params)
    t = _run(res, "tv", Problem(noisy, grid, DataTerm(), prior, lam=lam, nu=0.0), params)
    res.metrics.update(
        w1_input=w1_cdf(histogram_of(noisy, grid), prior),
        w1_wasserstein=w1_cdf(histogram_of(w.u_star, grid), prior),
        w1_tv=w1_cdf(histogram_of(t.u_star, grid), prior),
        mse_wasserstein=float(np.mean((w.u_star.data - clean) ** 2)),
        mse_tv=float(np.mean((t.u_star.data - clean) ** 2)),
    )
    return res


def circle_tight(seed: int = 0, params: SolverParams | None = None) -> PresetResult:
    """Black/white halves with a disk to inpaint; the prior asks for slightly more white."""
    params = params or SolverParams(gamma=2.0, tol=1e-6, max_iter=5000)
    grid = LevelGrid(4)
    n = 32
    xx = np.arange(n)[None, :].repeat(n, axis=0)
    image = (xx >= n // 2).astype(float)
    mask = _disk((n, n), ((n - 1) / 2, (n - 1) / 2), 10)
    target = image.copy()
    target[mask] = (xx[mask] >= n // 2 - 3).astype(float)
    prior = histogram_of(Image(target), grid)
    shown = image.copy()
    shown[mask] = 0.5
    lam, nu = 0.5, 2.0
    res = PresetResult("circle-tight", settings=dict(k=grid.k, lam=lam, nu=nu, seed=seed))
    res.images.update(input=Image(shown), mask=Image(mask.astype(float)))
    r = _run(res, "wasserstein", Problem(Image(shown), grid, DataTerm.masked(mask), prior, lam=lam, nu=nu), params)
    res.metrics.update(
        nonintegral_fraction=r.nonintegral_fraction,
        nonintegral_fraction_mask=float(np.mean(
            (r.phi_star.interior[:, mask] > 0.05) & (r.phi_star.interior[:, mask] < 0.95))),
        w1_result=w1_cdf(histogram_of(r.u_star, grid), prior),
    )
    return res


def checker_inexact(seed: int = 0, params: SolverParams | None = None) -> PresetResult:
    """Checkerboard quadrants around a large disk; the prior asks for a half/half split."""
    params = params or SolverParams(gamma=2.0, tol=1e-6, max_iter=5000)
    grid = LevelGrid(4)
    n = 32
    yy, xx = np.mgrid[:n, :n]
    image = ((yy >= n // 2) ^ (xx >= n // 2)).astype(float)
    mask = _disk((n, n), ((n - 1) / 2, (n - 1) / 2), 13)
    prior = Histogram.normalized(grid, [0.5, 0.0, 0.0, 0.5])
    shown = image.copy()
    shown[mask] = 0.5
    lam, nu = 0.5, 2.0
    res = PresetResult("checker-inexact", settings=dict(k=grid.k, lam=lam, nu=nu, seed=seed))
    res.images.update(input=Image(shown), mask=Image(mask.astype(float)))
    r = _run(res, "wasserstein", Problem(Image(shown), grid, DataTerm.masked(mask), prior, lam=lam, nu=nu), params)
    res.metrics.update(
        nonintegral_fraction=r.nonintegral_fraction,
        w1_result=w1_cdf(histogram_of(r.u_star, grid), prior),
    )
    return res


def constant_inexact(seed: int = 0, params: SolverParams | None = None) -> PresetResult:
    """Nothing is known, the prior is half black and half white.

    Constant images are the best integral solutions with energy
    ``nu / 2``; the relaxation reaches 0 with every plane at 1/2.
    """
    params = params or SolverParams(gamma=2.0, tol=1e-6, max_iter=5000)
    grid = LevelGrid(8)
    n = 32
    mask = np.ones((n, n), dtype=bool)
    prior = Histogram.normalized(grid, [0.5] + [0.0] * (grid.k - 2) + [0.5])
    image = Image(np.full((n, n), 0.5))
    lam, nu = 1.0, 0.2
    res = PresetResult("constant-inexact", settings=dict(k=grid.k, lam=lam, nu=nu, seed=seed,
                                                         transport_cost_scale=nu))
    res.images.update(input=image)
    r = _run(res, "wasserstein", Problem(image, grid, DataTerm.masked(mask), prior, lam=lam, nu=nu), params)
    res.metrics.update(
        expected_primal=nu / 2,
        relaxed_energy=r.relaxed_energy,
        primal_energy=r.primal_energy,
        gap=r.gap,
    )
    return res


def contrast_denoise(seed: int = 0, params: SolverParams | None = None) -> PresetResult:
    """High-contrast blobs under noise; compares how much contrast each arm keeps."""
    params = params or SolverParams(gamma=2.0, tol=1e-5, max_iter=3000)
    grid = LevelGrid(16)
    n = 48
    clean = np.zeros((n, n))
    for center, radius in (((12, 12), 8), ((30, 34), 11), ((38, 10), 6)):
        clean[_disk((n, n), center, radius)] = 1.0
    noisy = Image(add_noise(clean, seed, sigma=0.2))
    prior = histogram_of(Image(clean), grid)
    lam, nu = 0.4, 1.0
    res = PresetResult("contrast-denoise", settings=dict(k=grid.k, lam=lam, nu=nu, seed=seed,
                                                         noise_sigma=0.2, rng=RNG_NAME))
    res.images.update(clean=Image(clean), input=noisy)
    w = _run(res, "wasserstein", Problem(noisy, grid, DataTerm(), prior, lam=lam, nu=nu), params)
    t = _run(res, "tv", Problem(noisy, grid, DataTerm(), prior, lam=lam, nu=0.0), params)
    white = clean > 0.5

    def contrast(u):
        return float(u.data[white].mean() - u.data[~white].mean())

    res.metrics.update(
        contrast_clean=contrast(Image(clean)),
        contrast_wasserstein=contrast(w.u_star),
        contrast_tv=contrast(t.u_star),
        w1_wasserstein=w1_cdf(histogram_of(w.u_star, grid), prior),
        w1_tv=w1_cdf(histogram_of(t.u_star, grid), prior),
    )
    return res


def _triple_labels(n: int) -> np.ndarray:
    yy, xx = np.mgrid[:n, :n]
    c = (n - 1) / 2
    angle = np.mod(np.arctan2(yy - c, xx - c) + np.pi / 2, 2 * np.pi)
    return np.minimum((angle // (2 * np.pi / 3)).astype(int), 2)


def triple_point(seed: int = 0, params: SolverParams | None = None) -> PresetResult:
    """Three sectors meeting in the middle; a square around the junction is inpainted."""
    params = params or SolverParams(gamma=2.0, tol=1e-6, max_iter=5000)
    grid = LevelGrid(3)
    n = 40
    labels = _triple_labels(n)
    clean = grid.levels[labels]
    c = (n - 1) / 2
    yy, xx = np.mgrid[:n, :n]
    mask = (np.abs(yy - c) <= 12) & (np.abs(xx - c) <= 12)
    prior = histogram_of(Image(clean), grid)
    shown = clean.copy()
    shown[mask] = 0.5
    lam, nu = 0.2, 1.0
    res = PresetResult("triple-point", settings=dict(k=grid.k, lam=lam, nu=nu, seed=seed))
    res.images.update(clean=Image(clean), input=Image(shown), mask=Image(mask.astype(float)))
    w = _run(res, "wasserstein", Problem(Image(shown), grid, DataTerm.masked(mask), prior, lam=lam, nu=nu), params)
    t = _run(res, "tv", Problem(Image(shown), grid, DataTerm.masked(mask), prior, lam=lam, nu=0.0), params)

    def balance_error(u):
        idx = level_index(u.data[mask], grid.k)
        shares = np.bincount(idx, minlength=grid.k) / idx.size
        return float(np.abs(shares - 1.0 / 3.0).max())

    res.metrics.update(
        balance_error_wasserstein=balance_error(w.u_star),
        balance_error_tv=balance_error(t.u_star),
        w1_wasserstein=w1_cdf(histogram_of(w.u_star, grid), prior),
        w1_tv=w1_cdf(histogram_of(t.u_star, grid), prior),
    )
    return res


def object_removal(seed: int = 0, params: SolverParams | None = None) -> PresetResult:
    """Cloud texture with a dark object; the prior comes from the clouds alone.

    No mask is given: a truncated quadratic data term lets the histogram
    prior overrule the object pixels.
    """
    params = params or SolverParams(gamma=2.0, tol=5e-5, max_iter=4000)
    grid = LevelGrid(16)
    n = 48
    clouds = 0.45 + 0.55 * value_noise((n, n), seed)
    yy, xx = np.mgrid[:n, :n]
    body = (np.abs(yy - 24) <= 2) & (np.abs(xx - 24) <= 11)
    wings = (np.abs(xx - 22) <= 2) & (np.abs(yy - 24) <= 9)
    obj = body | wings
    image = clouds.copy()
    image[obj] = 0.1
    prior = histogram_of(Image(clouds), grid)
    lam, nu, alpha = 0.02, 2.0, 0.03
    res = PresetResult("object-removal", settings=dict(k=grid.k, lam=lam, nu=nu, alpha=alpha, seed=seed,
                                                       rng=RNG_NAME))
    res.images.update(clean=Image(clouds), input=Image(image), object=Image(obj.astype(float)))
    w = _run(res, "wasserstein", Problem(Image(image), grid, DataTerm.truncated(alpha), prior, lam=lam, nu=nu),
             params)
    t = _run(res, "tv", Problem(Image(image), grid, DataTerm.truncated(alpha), prior, lam=lam, nu=0.0), params)
    res.metrics.update(
        w1_object_input=w1_cdf(region_histogram(image[obj], grid), prior),
        w1_object_wasserstein=w1_cdf(region_histogram(w.u_star.data[obj], grid), prior),
        w1_object_tv=w1_cdf(region_histogram(t.u_star.data[obj], grid), prior),
        w1_input=w1_cdf(histogram_of(Image(image), grid), prior),
        w1_wasserstein=w1_cdf(histogram_of(w.u_star, grid), prior),
    )
    return res


PRESETS = {
    "stripes": stripes,
    "circle-tight": circle_tight,
    "checker-inexact": checker_inexact,
    "constant-inexact": constant_inexact,
    "contrast-denoise": contrast_denoise,
    "triple-point": triple_point,
    "object-removal": object_removal,
}


def run_preset(name: str, seed: int = 0, params: SolverParams | None = None) -> PresetResult:
    try:
        builder = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown experiment {name!r}; valid names: {', '.join(PRESETS)}") from None
    return builder(seed=seed, params=params)
