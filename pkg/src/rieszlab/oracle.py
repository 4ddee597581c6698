"""Dense-grid oracles for small systems.

Everything in this module is deliberately slow and deliberately independent
of the Monte Carlo machinery: partition functions and expectations are
computed by tensor-product quadrature over the full configuration space, and
every returned number carries a tolerance measured by resolution doubling,
never assumed.  These are the values the samplers and estimators are tested
against.

Two tensor rules are available per axis.  "periodic-midpoint" places
equispaced nodes on the circle; for the smooth periodic Boltzmann integrand
it converges super-algebraically (periodic Euler-Maclaurin: every boundary
correction cancels), and on the equispaced grid translation symmetry is
exact, so the partition sweep pins one particle and drops a dimension.  It
is the default for exact_partition and exact_expectation.
"panel-gauss-legendre" splits each axis into panels at caller-supplied
breakpoints (window edges, typically) and applies a fixed-order rule per
panel.  Restricting such a rule to a window whose edges are breakpoints
yields again a valid composite rule, which is what the DLR residual
machinery relies on; anything integrating a window indicator wants this
scheme, since equispaced nodes only resolve a jump to first order.

Conventions for test functions:
  - expectation / DLR functionals: f(block) -> (M,) for block (M, n) of
    d = 1 configurations.
  - GNZ functionals: f(x, rest) -> (M,) for x (M,) and rest (M, n - 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .potential import (
    INF,
    AccuracyError,
    PeriodizedPotential,
    RieszParams,
)
from .torus import TorusBox, Window

SCHEME_MIDPOINT = "periodic-midpoint"
SCHEME_PANEL = "panel-gauss-legendre"
SCHEMES = (SCHEME_MIDPOINT, SCHEME_PANEL)

_CHUNK = 1 << 17  # configurations per block in tensor sweeps
_MEMO_DECIMALS = 12


class OracleValue(float):
    """A float that remembers how well it is known.

    ``tolerance`` is the measured agreement between the two finest
    quadrature resolutions, not a target.
    """

    tolerance: float

    def __new__(cls, value: float, tolerance: float) -> "OracleValue":
        obj = super().__new__(cls, value)
        obj.tolerance = float(tolerance)
        return obj

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return f"OracleValue({float(self)!r}, tolerance={self.tolerance!r})"


@dataclass
class QuadratureSpec:
    """Resolution request for the oracle routines.

    points_per_axis counts equispaced nodes per axis (periodic-midpoint) or
    Gauss-Legendre nodes per panel (panel-gauss-legendre, where the
    effective per-axis count is points times panels).  reported_tolerance
    is filled in by the routine that ran the doubling loop and starts out
    as None.
    """

    points_per_axis: int = 32
    scheme: str = SCHEME_MIDPOINT
    reported_tolerance: float | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown quadrature scheme {self.scheme!r}")
        if self.points_per_axis < 2:
            raise ValueError("points_per_axis must be at least 2")


def _axis_rule(
    lo: float,
    hi: float,
    points: int,
    breaks: tuple[float, ...] = (),
    scheme: str = SCHEME_PANEL,
) -> tuple[np.ndarray, np.ndarray]:
    """One-axis rule on [lo, hi]: equispaced midpoints or panel GL."""
    if scheme == SCHEME_MIDPOINT:
        if breaks:
            raise ValueError(
                "periodic-midpoint takes no panel breaks; use "
                "panel-gauss-legendre for windowed integrands"
            )
        step = (hi - lo) / points
        return lo + (np.arange(points) + 0.5) * step, np.full(points, step)
    edges = sorted({lo, hi, *(b for b in breaks if lo < b < hi)})
    base_x, base_w = np.polynomial.legendre.leggauss(points)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        half = 0.5 * (b - a)
        nodes.append(0.5 * (a + b) + half * base_x)
        weights.append(half * base_w)
    return np.concatenate(nodes), np.concatenate(weights)


def _tensor_blocks(size: int, n: int, chunk: int = _CHUNK):
    """Yield (M, n) index blocks enumerating the n-fold tensor grid."""
    total = size**n
    radix = size ** np.arange(n - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        flat = np.arange(start, stop, dtype=np.int64)
        yield (flat[:, None] // radix[None, :]) % size


def _wrap(diff: np.ndarray, length: float) -> np.ndarray:
    return diff - length * np.round(diff / length)


def _pair_matrix(nodes: np.ndarray, length: float, pot) -> np.ndarray:
    """pot evaluated on every wrapped node difference.

    All tensor-grid configurations draw coordinates from one axis rule, so
    every pair energy is a lookup in this (A, A) table; the grid sweeps
    below are pure integer gathers.
    """
    diffs = _wrap(nodes[:, None] - nodes[None, :], length)
    return np.asarray(pot.eval(diffs.ravel())).reshape(diffs.shape)


def _energy_from_idx(idx: np.ndarray, pair: np.ndarray) -> np.ndarray:
    n = idx.shape[1]
    if n < 2:
        return np.zeros(idx.shape[0])
    out = np.zeros(idx.shape[0])
    for i in range(n):
        for j in range(i + 1, n):
            out += pair[idx[:, i], idx[:, j]]
    return out


def _block_energy(block: np.ndarray, length: float, pot) -> np.ndarray:
    """Total pair energy for each row of a (M, n) coordinate block, d = 1."""
    n = block.shape[1]
    if n < 2:
        return np.zeros(block.shape[0])
    ii, jj = np.triu_indices(n, k=1)
    diffs = _wrap(block[:, ii] - block[:, jj], length)
    vals = np.asarray(pot.eval(diffs.ravel())).reshape(diffs.shape)
    return vals.sum(axis=1)


def _boltzmann(energies: np.ndarray, beta: float) -> np.ndarray:
    # beta = 0 must give weight 1 even on grid-diagonal (infinite-energy)
    # nodes; those are measure-zero artifacts of sharing nodes across axes.
    if beta == 0.0:
        return np.ones_like(energies)
    out = np.zeros_like(energies)
    finite = np.isfinite(energies)
    out[finite] = np.exp(-beta * energies[finite])
    return out


def _default_pot(params: RieszParams, n: int, pot):
    if pot is not None:
        return pot
    return PeriodizedPotential.build(params, n).tabulate()


def _doubling(run, quad: QuadratureSpec, tol: float, max_doublings: int = 6):
    """Run ``run(points)`` at doubling resolutions until two agree.

    Returns (fine_value, measured_diff, points_used).
    """
    points = quad.points_per_axis
    prev = run(points)
    for _ in range(max_doublings):
        points *= 2
        cur = run(points)
        diff = abs(cur - prev)
        if diff <= tol:
            return cur, diff, points
        prev = cur
    raise AccuracyError(
        f"quadrature did not reach {tol:g} after {max_doublings} doublings "
        f"(last diff {diff:g} at {points} points per panel)"
    )


def exact_partition(
    params: RieszParams,
    n: int,
    beta: float,
    quad: QuadratureSpec | None = None,
    tol: float = 1e-6,
    pot=None,
) -> OracleValue:
    """Canonical partition function by full tensor quadrature.

    Z = n^{-n} * integral over the n-fold torus power of exp(-beta H_n),
    i.e. the normalization against n i.i.d. uniform points.  d = 1 and
    n <= 4 only.  Under the default periodic-midpoint scheme the sweep
    costs points^{n-1} per evaluation: shifting every index by the same
    amount leaves the grid and the pair energies unchanged, so the sum
    over the diagonal orbit is the same term points times and the first
    particle can be pinned to node zero exactly.
    """
    if params.d != 1:
        raise NotImplementedError("exact_partition is d = 1 only")
    if not 1 <= n <= 4:
        raise ValueError("exact_partition supports 1 <= n <= 4")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    quad = quad or QuadratureSpec()
    pot = _default_pot(params, n, pot)
    box = TorusBox(n=n, d=params.d)
    half = box.side_length / 2.0

    def run(points: int) -> float:
        nodes, weights = _axis_rule(-half, half, points, scheme=quad.scheme)
        pair = _pair_matrix(nodes, box.side_length, pot)
        acc = 0.0
        if quad.scheme == SCHEME_MIDPOINT:
            for idx in _tensor_blocks(nodes.size, n - 1):
                full = np.concatenate(
                    [np.zeros((idx.shape[0], 1), dtype=np.int64), idx], axis=1
                )
                acc += float(_boltzmann(_energy_from_idx(full, pair), beta).sum())
            return acc * (box.side_length / points) ** n * points / float(n) ** n
        for idx in _tensor_blocks(nodes.size, n):
            w = np.prod(weights[idx], axis=1)
            acc += float(np.dot(w, _boltzmann(_energy_from_idx(idx, pair), beta)))
        return acc / float(n) ** n

    value, diff, _ = _doubling(run, quad, tol)
    quad.reported_tolerance = diff
    return OracleValue(value, diff)


def exact_expectation(
    f,
    params: RieszParams,
    n: int,
    beta: float,
    quad: QuadratureSpec | None = None,
    tol: float = 1e-6,
    pot=None,
    breaks: tuple[float, ...] = (),
) -> OracleValue:
    """Gibbs expectation of f by full tensor quadrature, d = 1, n <= 3.

    f maps a (M, n) block of configurations to (M,) values.  Smooth f works
    best under the default periodic-midpoint scheme; an f with jumps wants
    scheme="panel-gauss-legendre" with every discontinuity listed in breaks,
    so the composite rule converges at spectral rate between them.  f may
    diverge where the Boltzmann weight vanishes (the pair energy at a
    coincidence node): zero-weight nodes are dropped before the product.
    For beta = 0 every node carries weight, so f must then be finite
    everywhere on the grid.
    """
    if params.d != 1:
        raise NotImplementedError("exact_expectation is d = 1 only")
    if not 1 <= n <= 3:
        raise ValueError("exact_expectation supports 1 <= n <= 3")
    quad = quad or QuadratureSpec()
    pot = _default_pot(params, n, pot)
    box = TorusBox(n=n, d=params.d)
    half = box.side_length / 2.0

    def run(points: int) -> float:
        nodes, weights = _axis_rule(-half, half, points, breaks, quad.scheme)
        pair = _pair_matrix(nodes, box.side_length, pot)
        num = 0.0
        den = 0.0
        for idx in _tensor_blocks(nodes.size, n):
            w = np.prod(weights[idx], axis=1)
            bw = w * _boltzmann(_energy_from_idx(idx, pair), beta)
            fvals = np.asarray(f(nodes[idx]), dtype=float)
            # zero Boltzmann weight kills the node even if f diverges there
            # (f = pair energy at a coincidence node, say)
            with np.errstate(invalid="ignore"):
                num += float(np.where(bw == 0.0, 0.0, bw * fvals).sum())
            den += float(bw.sum())
        return num / den

    value, diff, _ = _doubling(run, quad, tol)
    quad.reported_tolerance = diff
    return OracleValue(value, diff)


def _window_breaks(window: Window) -> tuple[float, float]:
    return float(window.lower[0]), float(window.upper[0])


class _InnerConditional:
    """Conditional expectation of f inside a window, memoized over exteriors.

    For an exterior configuration ext (points outside the window) and a
    count m, computes

        E[f | gamma outside window = ext, N_window = m]

    against the m-fold tensor grid restricted to the window.  Exterior keys
    are rounded and sorted, so permutations of the same exterior hit the
    same cache entry.
    """

    def __init__(self, f, inner_nodes, inner_weights, length, beta, pot, n):
        self.f = f
        self.nodes = inner_nodes
        self.weights = inner_weights
        self.length = length
        self.beta = beta
        self.pot = pot
        self.n = n
        self._cache: dict[tuple, float] = {}

    def value(self, m: int, ext: np.ndarray) -> float:
        key = (m, tuple(np.sort(np.round(ext, _MEMO_DECIMALS))))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        out = self._compute(m, ext)
        self._cache[key] = out
        return out

    def _compute(self, m: int, ext: np.ndarray) -> float:
        if m == 0:
            block = np.broadcast_to(ext, (1, ext.size))
            return float(np.asarray(self.f(block), dtype=float)[0])
        num = 0.0
        den = 0.0
        n_ext = ext.size
        for idx in _tensor_blocks(self.nodes.size, m):
            eta = self.nodes[idx]
            w = np.prod(self.weights[idx], axis=1)
            # window Hamiltonian: pairs inside plus cross terms; the pure
            # exterior energy cancels in the ratio and is omitted.
            h = _block_energy(eta, self.length, self.pot)
            if n_ext:
                cross = _wrap(eta[:, :, None] - ext[None, None, :], self.length)
                cvals = np.asarray(self.pot.eval(cross.ravel())).reshape(cross.shape)
                h = h + cvals.sum(axis=(1, 2))
            full = np.empty((eta.shape[0], self.n))
            full[:, :m] = eta
            full[:, m:] = ext
            bw = w * _boltzmann(h, self.beta)
            num += float(np.dot(bw, np.asarray(self.f(full), dtype=float)))
            den += float(bw.sum())
        if den == 0.0:
            return 0.0
        return num / den


def dlr_residual(
    f,
    params: RieszParams,
    n: int,
    beta: float,
    window: Window,
    quad: QuadratureSpec | None = None,
    inner_quad: QuadratureSpec | None = None,
    tol: float = 1e-4,
    breaks: tuple[float, ...] = (),
    pot=None,
) -> OracleValue:
    """E[f] minus E[conditional expectation of f given the window exterior].

    Both sides are finite sums over the same outer tensor grid; the inner
    conditional integral runs over the outer grid restricted to the window
    (inner_quad None), or over an independent composite rule on the window
    when inner_quad is given.  The restricted form shares every node with
    the outer sum and its residual sits at rounding level by construction;
    the independent form measures the identity through genuine quadrature
    error.  d = 1, n <= 3.
    """
    if params.d != 1:
        raise NotImplementedError("dlr_residual is d = 1 only")
    if not 1 <= n <= 3:
        raise ValueError("dlr_residual supports 1 <= n <= 3")
    quad = quad or QuadratureSpec(points_per_axis=8, scheme=SCHEME_PANEL)
    if quad.scheme != SCHEME_PANEL or (
        inner_quad is not None and inner_quad.scheme != SCHEME_PANEL
    ):
        # window edges are panel breaks; the restriction trick needs them
        raise ValueError("dlr_residual requires the panel-gauss-legendre scheme")
    pot = _default_pot(params, n, pot)
    box = TorusBox(n=n, d=params.d)
    half = box.side_length / 2.0
    wlo, whi = _window_breaks(window)
    if not (-half <= wlo < whi <= half):
        raise ValueError("window must sit inside the fundamental domain")
    all_breaks = (wlo, whi) + tuple(breaks)
    inner_points = None if inner_quad is None else inner_quad.points_per_axis
    scale = max(1, quad.points_per_axis)

    def run(points: int) -> float:
        nodes, weights = _axis_rule(-half, half, points, all_breaks)
        inside = (nodes >= wlo) & (nodes < whi)
        if inner_quad is None:
            in_nodes, in_weights = nodes[inside], weights[inside]
        else:
            grow = max(1, points // scale)
            in_breaks = tuple(b for b in breaks if wlo < b < whi)
            in_nodes, in_weights = _axis_rule(
                wlo, whi, inner_points * grow, in_breaks
            )
        conditional = _InnerConditional(
            f, in_nodes, in_weights, box.side_length, beta, pot, n
        )
        pair = _pair_matrix(nodes, box.side_length, pot)
        num = 0.0
        den = 0.0
        for idx in _tensor_blocks(nodes.size, n):
            w = np.prod(weights[idx], axis=1)
            bw = w * _boltzmann(_energy_from_idx(idx, pair), beta)
            block = nodes[idx]
            fvals = np.asarray(f(block), dtype=float)
            mask = inside[idx]
            counts = mask.sum(axis=1)
            cond = np.empty(idx.shape[0])
            for m in range(n + 1):
                rows = np.nonzero(counts == m)[0]
                if rows.size == 0:
                    continue
                if m == 0:
                    # no interior points: the conditional is f of the
                    # exterior itself, contributing zero residual
                    cond[rows] = fvals[rows]
                    continue
                ext = block[rows][~mask[rows]].reshape(rows.size, n - m)
                key = np.round(np.sort(ext, axis=1), _MEMO_DECIMALS)
                uniq, inv = np.unique(key, axis=0, return_inverse=True)
                vals = np.array(
                    [conditional.value(m, uniq[u]) for u in range(len(uniq))]
                )
                cond[rows] = vals[np.ravel(inv)]
            num += float(np.dot(bw, fvals - cond))
            den += float(bw.sum())
        return num / den

    value, diff, _ = _doubling(run, quad, tol)
    quad.reported_tolerance = diff
    return OracleValue(value, diff)


def gnz_residual(
    f,
    params: RieszParams,
    n: int,
    beta: float,
    quad: QuadratureSpec | None = None,
    tol: float = 1e-4,
    breaks: tuple[float, ...] = (),
    pot=None,
) -> OracleValue:
    """Two-sided check of the integral characterization of the Gibbs law.

    Left side: E[sum over points x of f(x, gamma minus x)] on an n-fold
    grid.  Right side: Z^{-1} * n * |box|^{-n} * integral dx of the
    (n-1)-fold Boltzmann-weighted integral of f(x, gamma) exp(-beta
    H(gamma + x)).  The two sides run at different per-panel resolutions on
    purpose: with shared nodes the comparison would be an algebraic
    identity rather than a numerical one.  d = 1, n <= 3.
    """
    if params.d != 1:
        raise NotImplementedError("gnz_residual is d = 1 only")
    if not 1 <= n <= 3:
        raise ValueError("gnz_residual supports 1 <= n <= 3")
    quad = quad or QuadratureSpec(points_per_axis=16, scheme=SCHEME_PANEL)
    pot = _default_pot(params, n, pot)
    box = TorusBox(n=n, d=params.d)
    half = box.side_length / 2.0
    length = box.side_length

    def run(points: int) -> float:
        # left side and normalization on one rule
        nodes_a, weights_a = _axis_rule(-half, half, points, breaks, quad.scheme)
        pair_a = _pair_matrix(nodes_a, length, pot)
        num_left = 0.0
        z_sum = 0.0
        cols = np.arange(n)
        for idx in _tensor_blocks(nodes_a.size, n):
            w = np.prod(weights_a[idx], axis=1)
            bw = w * _boltzmann(_energy_from_idx(idx, pair_a), beta)
            block = nodes_a[idx]
            total = np.zeros(idx.shape[0])
            for i in range(n):
                total += np.asarray(f(block[:, i], block[:, cols != i]), dtype=float)
            num_left += float(np.dot(bw, total))
            z_sum += float(bw.sum())
        left = num_left / z_sum
        z_value = z_sum / float(n) ** n

        # right side on staggered rules so no node coincides with the left
        nodes_b, weights_b = _axis_rule(-half, half, points + 5, breaks, quad.scheme)
        nodes_x, weights_x = _axis_rule(-half, half, points + 3, breaks, quad.scheme)
        pair_b = _pair_matrix(nodes_b, length, pot)
        cross = np.asarray(
            pot.eval(_wrap(nodes_x[:, None] - nodes_b[None, :], length).ravel())
        ).reshape(nodes_x.size, nodes_b.size)
        right_sum = 0.0
        for idx in _tensor_blocks(nodes_b.size, n - 1):
            w = np.prod(weights_b[idx], axis=1)
            h_rest = _energy_from_idx(idx, pair_b)
            block = nodes_b[idx]
            for c in range(nodes_x.size):
                h_full = h_rest + cross[c, idx].sum(axis=1)
                fx = np.asarray(
                    f(np.full(idx.shape[0], nodes_x[c]), block), dtype=float
                )
                right_sum += weights_x[c] * float(
                    np.dot(w, fx * _boltzmann(h_full, beta))
                )
        right = right_sum * float(n) / (box.volume**n) / z_value
        return left - right

    value, diff, _ = _doubling(run, quad, tol)
    quad.reported_tolerance = diff
    return OracleValue(value, diff)


def reference_periodized(
    params: RieszParams, n: int, x, truncation: int
) -> np.ndarray:
    """Independent evaluation of the periodized interaction, d = 1.

    Whole-range summation per point with closed-form cell averages, term
    values in double precision but accumulated in an extended-precision
    (80-bit) register, so the representation error sits far below any
    truncation tail.  Shares no accumulation path with the production
    evaluator (symmetric shell chunks with double-precision compensated
    addition).  Ground truth for the truncation-error certificates.
    """
    if params.d != 1:
        raise NotImplementedError("reference_periodized is d = 1 only")
    s = params.s
    length = float(n) ** (1.0 / params.d)
    xs = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    out = np.empty(xs.size)
    shift = np.arange(1, truncation + 1, dtype=float) * length
    cell = ((shift + length / 2) ** (1 - s) - (shift - length / 2) ** (1 - s)) / (
        (1 - s) * length
    )
    c0 = 2.0 * (length / 2) ** (1 - s) / ((1 - s) * length)
    chunk = max(1, int(2e7) // max(1, truncation))
    with np.errstate(divide="ignore"):
        for start in range(0, xs.size, chunk):
            pts = xs[start : start + chunk, None]
            tail = (
                np.abs(pts + shift) ** (-s)
                + np.abs(pts - shift) ** (-s)
                - 2.0 * cell
            )
            head = np.abs(pts[:, 0]) ** (-s) - c0
            head[np.isinf(head)] = INF
            total = head.astype(np.longdouble) + np.sum(
                tail, axis=1, dtype=np.longdouble
            )
            out[start : start + chunk] = total.astype(float)
    return out if np.ndim(x) else out.reshape(())[()]
