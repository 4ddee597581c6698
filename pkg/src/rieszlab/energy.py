"""Energy functionals: total torus energy H_n, incremental move updates,
local fields, window-conditional energies, free-space move costs with
certified truncation, and the uniform-background (replicated) energies.

Two interactions coexist deliberately and are never substituted for each
other: window/total energies use the periodized g_n, move functions use the
free-space g (their difference is itself a quantity under test).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .potential import INF, RieszParams
from .torus import Configuration, TorusBox, Window, wrap

__all__ = [
    "EnergyBreakdown",
    "MoveCost",
    "ChargeBalanceError",
    "total_energy",
    "delta_move",
    "local_field",
    "local_energy_window",
    "move_cost_truncated",
    "move_tail_bound",
    "backgrounded_energy",
    "replicated_mean_energy",
]


class ChargeBalanceError(ValueError):
    """Raised when an operation requires exactly n points in Lambda_n."""


@dataclass(frozen=True)
class EnergyBreakdown:
    total: float
    pair_count: int
    singular: bool


@dataclass(frozen=True)
class MoveCost:
    """Truncated move cost with its configuration-dependent certificate."""

    value: float
    truncation_radius: int
    certified_error: float


def _pair_separations(points: np.ndarray, box: TorusBox) -> np.ndarray:
    """Wrapped differences x_i - x_j over i < j; (npairs,) in d=1, else (npairs, d)."""
    m = len(points)
    i, j = np.triu_indices(m, k=1)
    diffs = wrap(box, points[i] - points[j])
    if box.d == 1:
        return diffs.ravel()
    return diffs


def _eval_pot(pot, seps):
    """Evaluate g_n on separations with either evaluator (direct or table)."""
    return np.atleast_1d(pot.eval(seps))


def total_energy(gamma: Configuration, pot) -> EnergyBreakdown:
    """H_n(gamma) = sum over unordered pairs of g_n(x - y)."""
    m = len(gamma)
    pairs = m * (m - 1) // 2
    if m <= 1:
        return EnergyBreakdown(total=0.0, pair_count=pairs, singular=False)
    seps = _pair_separations(gamma.points, gamma.box)
    vals = _eval_pot(pot, seps)
    singular = bool(np.any(np.isinf(vals)))
    total = INF if singular else float(np.sum(vals))
    return EnergyBreakdown(total=total, pair_count=pairs, singular=singular)


def _field_at(x, points: np.ndarray, box: TorusBox, pot) -> float:
    """sum_y g_n(x - y) over the rows of points; inf when x hits a point."""
    if len(points) == 0:
        return 0.0
    diffs = wrap(box, np.asarray(x, dtype=float).reshape(1, -1) - points)
    if box.d == 1:
        diffs = diffs.ravel()
    vals = _eval_pot(pot, diffs)
    if np.any(np.isinf(vals)):
        return INF
    return float(np.sum(vals))


def delta_move(gamma: Configuration, i: int, x_new, pot) -> float:
    """H_n after moving point i to x_new, minus H_n before.

    Only the 2(|gamma|-1) affected pairs are touched. A proposal coinciding
    with another point returns +infinity.
    """
    pts = gamma.points
    if not (0 <= i < len(pts)):
        raise IndexError(f"point index {i} out of range")
    others = np.delete(pts, i, axis=0)
    new_field = _field_at(x_new, others, gamma.box, pot)
    if new_field == INF:
        return INF
    old_field = _field_at(pts[i], others, gamma.box, pot)
    return new_field - old_field


def local_field(x, gamma: Configuration, pot) -> float:
    """h_n(x, gamma) = sum_{y in gamma} g_n(x - y)."""
    return _field_at(x, gamma.points, gamma.box, pot)


def local_energy_window(eta: Configuration, gamma: Configuration,
                        window: Window, pot) -> float:
    """H_{n,Delta}(eta, gamma) = H_n(eta) + sum_{x in eta, y in gamma outside
    Delta} g_n(x - y).

    Satisfies H_{n,Delta}(eta, gamma) = H_n(eta u gamma_ext) - H_n(gamma_ext).
    """
    if len(eta) and not np.all(window.contains(eta.points)):
        raise ValueError("eta must lie inside the window")
    inner = total_energy(eta, pot).total
    if inner == INF:
        return INF
    ext = gamma.points[~window.contains(gamma.points)]
    if len(eta) == 0 or len(ext) == 0:
        return inner
    cross = 0.0
    for x in eta.points:
        f = _field_at(x, ext, gamma.box, pot)
        if f == INF:
            return INF
        cross += f
    return inner + cross


# ---------------------------------------------------------------------------
# free-space move functions
# ---------------------------------------------------------------------------

def _points_of(obj) -> np.ndarray:
    return obj.points if isinstance(obj, Configuration) else np.asarray(obj, dtype=float)


def _g_free(params: RieszParams, diffs: np.ndarray) -> np.ndarray:
    r = np.sqrt(np.sum(np.asarray(diffs, dtype=float).reshape(-1, params.d) ** 2, axis=1))
    with np.errstate(divide="ignore"):
        return np.where(r == 0.0, INF, r ** (-params.s))


def _shell_index(params: RieszParams, points: np.ndarray) -> np.ndarray:
    """k such that the point lies in Lambda_{k+1} minus Lambda_k."""
    pts = points.reshape(-1, params.d)
    sup = np.max(np.abs(pts), axis=1)
    return np.floor((2.0 * sup) ** params.d).astype(int)


def _window_radius(window: Window) -> float:
    corners = np.array(
        [np.maximum(np.abs(window.lower), np.abs(window.upper))]
    )
    return float(np.sqrt(np.sum(corners**2)))


def move_tail_bound(params: RieszParams, gamma, window: Window, p: int, *,
                    eta_count: int = 1, horizon: int | None = None,
                    kappa: float = 2.0) -> float:
    """Bound on the move-cost truncation error beyond Lambda_p.

    Observed shells contribute s 4^(s+1) rho N_Delta(eta) times
    N_shell(gamma) k^(-(s+1)/d); shells beyond the observation horizon are
    bounded with the intensity cap kappa (consecutive shells have unit
    volume). Valid when the window radius rho satisfies rho <= p^(1/d)/4,
    which makes |x - y| >= |y|/2 on the far region.
    """
    s, d = params.s, params.d
    pts = _points_of(gamma).reshape(-1, d)
    rho = _window_radius(window)
    if rho > p ** (1.0 / d) / 4.0:
        raise ValueError("window too large for this truncation: need rho <= p^(1/d)/4")
    if horizon is None:
        sup = float(np.max(np.abs(pts))) if len(pts) else 0.0
        horizon = max(p, int(math.floor((2.0 * sup) ** d)))
    q = (s + 1.0) / d
    shells = _shell_index(params, pts)
    observed = 0.0
    mask = (shells >= p) & (shells < horizon)
    if np.any(mask):
        counts = np.bincount(shells[mask])
        ks = np.nonzero(counts)[0]
        observed = float(np.sum(counts[ks] * ks.astype(float) ** (-q)))
    # integral comparison for the unobserved tail sum_{k >= horizon} k^-q
    tail = horizon ** (-q) + horizon ** (1.0 - q) / (q - 1.0)
    return s * 4.0 ** (s + 1.0) * rho * eta_count * (observed + kappa * tail)


def move_cost_truncated(params: RieszParams, eta, gamma, window: Window,
                        p: int, *, kappa: float = 2.0,
                        horizon: int | None = None) -> MoveCost:
    """M^(p)_Delta(eta, gamma): cost of moving the window points of eta from
    the origin into the exterior field of gamma, truncated to Lambda_p.

    Uses the free-space g. The exterior configuration occupying the origin
    makes the cost +infinity (the renormalization divides by g(y) there).
    """
    eta_pts = _points_of(eta).reshape(-1, params.d)
    gam_pts = _points_of(gamma).reshape(-1, params.d)
    half = p ** (1.0 / params.d) / 2.0
    in_box = np.max(np.abs(gam_pts), axis=1) <= half if len(gam_pts) else np.array([], bool)
    in_win = window.contains(gam_pts) if len(gam_pts) else np.array([], bool)
    ext = gam_pts[in_box & ~in_win]
    eta_in = eta_pts[window.contains(eta_pts)] if len(eta_pts) else eta_pts
    err = move_tail_bound(params, gamma, window, p, eta_count=len(eta_in),
                          horizon=horizon, kappa=kappa)
    if len(ext) and np.any(np.all(ext == 0.0, axis=1)):
        return MoveCost(value=INF, truncation_radius=p, certified_error=err)
    if len(eta_in) == 0 or len(ext) == 0:
        return MoveCost(value=0.0, truncation_radius=p, certified_error=err)
    gy = _g_free(params, ext)
    value = 0.0
    for x in eta_in:
        gxy = _g_free(params, ext - x.reshape(1, -1))
        if np.any(np.isinf(gxy)):
            return MoveCost(value=INF, truncation_radius=p, certified_error=err)
        value += float(np.sum(gxy - gy))
    return MoveCost(value=value, truncation_radius=p, certified_error=err)


# ---------------------------------------------------------------------------
# uniform-background energies (d=1 closed forms)
# ---------------------------------------------------------------------------

def _background_single_1d(x: np.ndarray, m: float, s: float) -> np.ndarray:
    """int over the volume-m box of |x - y|^(-s) dy, for |x| <= m/2."""
    return ((m / 2.0 - x) ** (1.0 - s) + (m / 2.0 + x) ** (1.0 - s)) / (1.0 - s)


def _background_double_1d(m: float, s: float) -> float:
    """Double integral of |x - y|^(-s) over the box squared."""
    return 2.0 * m ** (2.0 - s) / ((1.0 - s) * (2.0 - s))


def backgrounded_energy(params: RieszParams, gamma: Configuration) -> float:
    """Energy of the points interacting with each other and with a uniform
    background of opposite charge filling the box (d=1 closed forms):

        sum_pairs g(x-y) - sum_x int_box g(x-y) dy + (1/2) iint g,

    diagonal excluded; coincident points give +infinity.
    """
    if params.d != 1:
        raise NotImplementedError("backgrounded energy uses d=1 closed forms")
    m = float(gamma.box.n)
    s = params.s
    pts = gamma.points.ravel()
    half_bg = 0.5 * _background_double_1d(m, s)
    if len(pts) == 0:
        return half_bg
    single = float(np.sum(_background_single_1d(pts, m, s)))
    if len(pts) == 1:
        return half_bg - single
    i, j = np.triu_indices(len(pts), k=1)
    r = np.abs(pts[i] - pts[j])
    if np.any(r == 0.0):
        return INF
    pair = float(np.sum(r ** (-s)))
    return pair - single + half_bg


def replicated_mean_energy(params: RieszParams, gamma: Configuration, k: int) -> float:
    """Backgrounded energy of the (2k+1)^d-fold periodic replication of
    gamma, divided by the number of copies.

    Requires the charge balance |gamma| = n; the copies tile the volume
    (2k+1)^d n box exactly.
    """
    if params.d != 1:
        raise NotImplementedError("replication uses the d=1 backgrounded energy")
    n = gamma.box.n
    if len(gamma) != n:
        raise ChargeBalanceError(
            f"charge balance violated: |gamma| = {len(gamma)} but n = {n}"
        )
    copies = 2 * k + 1
    shifts = (np.arange(-k, k + 1, dtype=float) * float(n)).reshape(-1, 1)
    pts = (gamma.points.ravel()[None, :] + shifts).ravel()
    big = Configuration(points=pts.reshape(-1, 1), box=TorusBox(n=copies * n, d=1))
    return backgrounded_energy(params, big) / copies
