"""Point configurations on the volume-n torus: wrapping, counting,
reference point processes, torus translations, perturbed lattices, and the
newline-delimited snapshot format.

The fundamental domain is the half-open box [-L/2, L/2)^d with L = n^(1/d),
so every point has a unique stored representative and boundary points are
never double counted.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TorusBox",
    "Window",
    "Configuration",
    "rng_from_seed",
    "RNG_NAME",
    "wrap",
    "torus_diff",
    "count_in",
    "sample_binomial",
    "sample_poisson",
    "perturbed_lattice",
    "perturbed_class_mask",
    "in_perturbed_class",
    "translate_torus",
    "write_snapshots",
    "read_snapshots",
    "SNAPSHOT_SCHEMA_VERSION",
]

SNAPSHOT_SCHEMA_VERSION = 1

# counter-based generator; the name is recorded in all run metadata
RNG_NAME = "philox4x64"


def rng_from_seed(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent reproducible stream `stream` of the master seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class TorusBox:
    """The torus Lambda_n = [-n^(1/d)/2, n^(1/d)/2)^d of volume n."""

    n: int
    d: int

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be positive integers")

    @property
    def side_length(self) -> float:
        return self.n ** (1.0 / self.d)

    @property
    def volume(self) -> float:
        return float(self.n)


def wrap(box: TorusBox, x):
    """Reduce to the fundamental domain [-L/2, L/2)^d."""
    L = box.side_length
    x = np.asarray(x, dtype=float)
    return x - L * np.floor(x / L + 0.5)


def torus_diff(box: TorusBox, x, y):
    """Wrapped difference x - y (the minimum-image separation)."""
    return wrap(box, np.asarray(x, dtype=float) - np.asarray(y, dtype=float))


@dataclass(frozen=True)
class Window:
    """Axis-aligned box Delta inside the fundamental domain."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower/upper must be vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError("window requires lower < upper componentwise")
        object.__setattr__(self, "lower", tuple(float(v) for v in lo))
        object.__setattr__(self, "upper", tuple(float(v) for v in hi))

    @classmethod
    def centered(cls, d: int, volume: float) -> "Window":
        half = 0.5 * volume ** (1.0 / d)
        return cls(lower=(-half,) * d, upper=(half,) * d)

    @property
    def d(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.upper) - np.asarray(self.lower)))

    def validate_inside(self, box: TorusBox) -> None:
        L = box.side_length
        if min(self.lower) < -L / 2 or max(self.upper) > L / 2:
            raise ValueError("window exceeds the fundamental domain")

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask over rows of points (shape (m, d) or (m,) for d=1)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float).reshape(-1, self.d))
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return np.all((pts >= lo) & (pts < hi), axis=1)


def _as_points(points, d: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return pts.reshape(0, d)
    if pts.ndim == 1:
        pts = pts.reshape(-1, d) if d == 1 else pts.reshape(1, d)
    return pts


@dataclass(frozen=True)
class Configuration:
    """Finite ordered point set in the fundamental domain of a torus.

    Points are wrapped at construction; bitwise-duplicate points are
    rejected (coincidence is measure zero for every sampler here, so a
    duplicate always indicates a bug upstream).
    """

    points: np.ndarray
    box: TorusBox

    def __post_init__(self):
        pts = _as_points(self.points, self.box.d)
        pts = wrap(self.box, pts)
        if len(pts) > 1:
            uniq = np.unique(pts, axis=0)
            if len(uniq) != len(pts):
                raise ValueError("duplicate points are rejected at insertion")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)


def count_in(gamma: Configuration, window: Window) -> int:
    """Counting function N_Delta(gamma)."""
    if len(gamma) == 0:
        return 0
    return int(np.count_nonzero(window.contains(gamma.points)))


def sample_binomial(box: TorusBox, N: int, rng: np.random.Generator,
                    region: Window | None = None) -> Configuration:
    """N i.i.d. uniform points in the region (default: the whole torus)."""
    if region is None:
        L = box.side_length
        pts = rng.uniform(-L / 2, L / 2, size=(N, box.d))
    else:
        lo = np.asarray(region.lower)
        hi = np.asarray(region.upper)
        pts = rng.uniform(lo, hi, size=(N, box.d))
    return Configuration(points=pts, box=box)


def sample_poisson(box: TorusBox, window: Window, intensity: float,
                   rng: np.random.Generator) -> Configuration:
    """Poisson(intensity * vol) count, then i.i.d. uniform positions."""
    if intensity < 0:
        raise ValueError("intensity must be nonnegative")
    mean = intensity * window.volume
    count = int(rng.poisson(mean)) if mean > 0 else 0
    return sample_binomial(box, count, rng, region=window)


def _lattice_centers_1d(n: int) -> np.ndarray:
    # unit cells [-n/2 + j - 1, -n/2 + j], centers at -n/2 + j - 1/2
    return -n / 2.0 + np.arange(1, n + 1) - 0.5


def perturbed_lattice(params, n: int, delta: float,
                      rng: np.random.Generator) -> Configuration:
    """One point uniform in the delta-neighborhood of each unit-cell center.

    In d=1 the box splits into exactly n unit cells, so there are no
    peripheral cells and the construction is the plain product of uniform
    draws; for d >= 2 the interior grid has floor(n^(1/d))^d cells and the
    n - r^d leftover points go to equal-volume peripheral slabs along the
    first axis, one per slab center.
    """
    if not (0.0 < delta < 0.5):
        raise ValueError("delta must lie in (0, 1/2)")
    d = params.d
    box = TorusBox(n=n, d=d)
    if d == 1:
        centers = _lattice_centers_1d(n)
        pts = centers + rng.uniform(-delta / 2, delta / 2, size=n)
        return Configuration(points=pts.reshape(-1, 1), box=box)
    L = box.side_length
    r = int(math.floor(L))
    axes = [-(r / 2.0) + np.arange(1, r + 1) - 0.5 for _ in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=1)
    extra = n - r**d
    if extra > 0:
        # peripheral region: the slab x_0 in [r/2, L/2), sliced into equal slabs
        width = (L / 2.0 - r / 2.0)
        slab_centers = []
        for j in range(extra):
            c = np.zeros(d)
            c[0] = r / 2.0 + (j + 0.5) * width / extra
            slab_centers.append(c)
        centers = np.vstack([centers, np.array(slab_centers)])
    pts = centers + rng.uniform(-delta / 2, delta / 2, size=centers.shape)
    return Configuration(points=pts, box=box)


def perturbed_class_mask(samples: np.ndarray, n: int, delta: float) -> np.ndarray:
    """Vectorized membership test for the one-point-per-cell class, d=1.

    samples: array (T, n) of T candidate configurations. A configuration is
    in the class iff its sorted points each lie within delta/2 of their cell
    center.
    """
    centers = _lattice_centers_1d(n)
    ordered = np.sort(np.asarray(samples, dtype=float), axis=1)
    return np.all(np.abs(ordered - centers) <= delta / 2.0, axis=1)


def in_perturbed_class(gamma: Configuration, delta: float) -> bool:
    """Membership test for one configuration (d=1)."""
    if gamma.box.d != 1:
        raise NotImplementedError("membership test implemented for d=1")
    n = gamma.box.n
    if len(gamma) != n:
        return False
    return bool(perturbed_class_mask(gamma.points.reshape(1, -1), n, delta)[0])


def translate_torus(gamma: Configuration, u) -> Configuration:
    """Shift every point by u and wrap; cardinality is preserved."""
    u = np.asarray(u, dtype=float).reshape(1, gamma.box.d)
    return Configuration(points=gamma.points + u, box=gamma.box)


# ---------------------------------------------------------------------------
# snapshot format: newline-delimited JSON records
# ---------------------------------------------------------------------------

def write_snapshots(path, configs, *, seed, s, beta) -> None:
    """One JSON record per configuration: {schema_version, seed, d, s, n,
    beta, points}. Files are newline-delimited, LF endings."""
    with open(path, "w", newline="\n") as f:
        for cfg in configs:
            rec = {
                "schema_version": SNAPSHOT_SCHEMA_VERSION,
                "seed": int(seed),
                "d": cfg.box.d,
                "s": float(s),
                "n": cfg.box.n,
                "beta": float(beta),
                "points": [[float(v) for v in p] for p in cfg.points],
            }
            f.write(json.dumps(rec) + "\n")


def read_snapshots(path):
    """Inverse of write_snapshots; returns a list of (record, Configuration)."""
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            box = TorusBox(n=int(rec["n"]), d=int(rec["d"]))
            cfg = Configuration(points=np.asarray(rec["points"], dtype=float), box=box)
            out.append((rec, cfg))
    return out
