"""Canonical-ensemble Metropolis sampler on the torus, window-conditional
(DLR) resampling, window-swap moves, and torus stationarization.

The chain state caches the total energy and the per-point field vector
h_i = sum_{j != i} g_n(x_i - x_j), so a single-point move costs O(n)
potential evaluations. +infinity energies are guaranteed rejections decided
before any exponential is evaluated, so coincidences never produce NaNs.
"""
from __future__ import annotations

import math

import numpy as np

from .potential import INF
from .stats import batch_means_stderr, integrated_autocorr_time
from .torus import RNG_NAME, Configuration, TorusBox, Window, translate_torus, wrap
from .energy import EnergyBreakdown

__all__ = [
    "ChainState",
    "accept_probability",
    "metropolis_step",
    "run_chain",
    "dlr_resample_window",
    "swap_windows",
    "stationarize",
    "discretized_transition_matrix",
]


def accept_probability(delta_h: float, beta: float) -> float:
    """Metropolis acceptance min(1, e^(-beta dH)); +inf dH is always 0."""
    if delta_h == INF or math.isnan(delta_h):
        return 0.0
    if delta_h <= 0.0 or beta == 0.0:
        return 1.0
    return math.exp(-beta * delta_h)


class ChainState:
    """Mutable MCMC state: configuration, cached energies, RNG stream.

    The particle number is fixed along the chain; every kernel here
    conserves it. `audit` recomputes the caches from scratch and checks the
    running total to 1e-8 relative.
    """

    def __init__(self, gamma: Configuration, beta: float, rng: np.random.Generator,
                 pot, step_size: float | None = None):
        if beta < 0:
            raise ValueError("beta must be nonnegative")
        self.box: TorusBox = gamma.box
        self.beta = float(beta)
        self.rng = rng
        self.pot = pot
        self.points = np.array(gamma.points, dtype=float, copy=True)
        self.step_size = float(step_size) if step_size else self.box.side_length / 4.0
        self.accepted = 0
        self.proposed = 0
        self.fields = self._compute_fields(self.points)
        self.energy_total = 0.5 * float(np.sum(self.fields)) if len(self.points) else 0.0

    # -- cache plumbing ------------------------------------------------------

    def _row(self, x: np.ndarray, exclude: int | None = None) -> np.ndarray:
        """g_n(x - y) against every current point (optionally excluding one)."""
        pts = self.points
        diffs = wrap(self.box, x.reshape(1, -1) - pts)
        vals = np.atleast_1d(self.pot.eval(diffs.ravel() if self.box.d == 1 else diffs))
        if exclude is not None:
            vals = np.delete(vals, exclude)
        return vals

    def _compute_fields(self, pts: np.ndarray) -> np.ndarray:
        m = len(pts)
        if m == 0:
            return np.zeros(0)
        i, j = np.triu_indices(m, k=1)
        diffs = wrap(self.box, pts[i] - pts[j])
        vals = np.atleast_1d(self.pot.eval(diffs.ravel() if self.box.d == 1 else diffs))
        fields = np.zeros(m)
        np.add.at(fields, i, vals)
        np.add.at(fields, j, vals)
        return fields

    def config(self) -> Configuration:
        return Configuration(points=self.points.copy(), box=self.box)

    def energy(self) -> EnergyBreakdown:
        m = len(self.points)
        singular = not np.isfinite(self.energy_total)
        return EnergyBreakdown(
            total=self.energy_total, pair_count=m * (m - 1) // 2, singular=singular
        )

    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0

    def audit(self, rel_tol: float = 1e-8) -> None:
        fields = self._compute_fields(self.points)
        total = 0.5 * float(np.sum(fields)) if len(fields) else 0.0
        scale = max(1.0, abs(total))
        if not abs(total - self.energy_total) <= rel_tol * scale:
            raise RuntimeError(
                f"energy cache drift: cached {self.energy_total!r}, "
                f"recomputed {total!r}"
            )
        self.fields = fields
        self.energy_total = total

    def _apply_single_move(self, i: int, x_new: np.ndarray,
                           new_vals: np.ndarray) -> None:
        """Commit point i -> x_new given its new interaction row (no self)."""
        old_vals = self._row(self.points[i], exclude=i)
        delta = np.insert(new_vals - old_vals, i, 0.0)
        self.fields += delta
        self.fields[i] = float(np.sum(new_vals))
        self.energy_total += float(np.sum(new_vals) - np.sum(old_vals))
        self.points[i] = x_new


def _propose_and_accept(state: ChainState, i: int, x_new: np.ndarray) -> bool:
    """Shared accept/commit for single-point proposals."""
    state.proposed += 1
    new_vals = state._row(x_new, exclude=i)
    if np.any(np.isinf(new_vals)):
        return False
    delta_h = float(np.sum(new_vals)) - state.fields[i]
    if state.rng.random() < accept_probability(delta_h, state.beta):
        state._apply_single_move(i, x_new, new_vals)
        state.accepted += 1
        return True
    return False


def metropolis_step(state: ChainState) -> ChainState:
    """One canonical Metropolis update: uniform point, uniform cube
    displacement of side step_size, torus-wrapped, min(1, e^(-beta dH))."""
    m = len(state.points)
    if m == 0:
        return state
    i = int(state.rng.integers(m))
    disp = state.rng.uniform(-state.step_size / 2, state.step_size / 2, size=state.box.d)
    x_new = wrap(state.box, state.points[i] + disp)
    _propose_and_accept(state, i, x_new)
    return state


def run_chain(state: ChainState, n_steps: int, thin: int = 1, burn_in: int = 0,
              move=None, tune: bool = True, audit_every: int = 10**4):
    """Drive the chain for n_steps total (burn_in of them discarded).

    During burn-in the proposal scale is tuned toward 30-50% acceptance and
    then frozen (tuning afterwards would break detailed balance). Returns
    (samples, diagnostics): thinned configurations plus acceptance rate,
    integrated autocorrelation time of the energy, and its batch-means
    standard error.
    """
    if n_steps < burn_in:
        raise ValueError("n_steps must be >= burn_in")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    move = move or metropolis_step
    window_acc = [0, 0]

    for step in range(burn_in):
        before = state.accepted
        move(state)
        window_acc[0] += state.accepted - before
        window_acc[1] += 1
        if tune and window_acc[1] == 200:
            rate = window_acc[0] / 200.0
            if rate < 0.30:
                state.step_size = max(state.step_size / 1.25, 1e-6 * state.box.side_length)
            elif rate > 0.50:
                state.step_size = min(state.step_size * 1.25, state.box.side_length)
            window_acc = [0, 0]

    state.accepted = 0
    state.proposed = 0
    main_steps = n_steps - burn_in
    samples = []
    trace = np.empty(main_steps)
    accepted_since_audit = 0
    for step in range(1, main_steps + 1):
        before = state.accepted
        move(state)
        accepted_since_audit += state.accepted - before
        trace[step - 1] = state.energy_total
        if step % thin == 0:
            samples.append(state.config())
        if accepted_since_audit >= audit_every:
            state.audit()
            accepted_since_audit = 0

    diagnostics = {
        "acceptance_rate": state.acceptance_rate(),
        "autocorr_time": integrated_autocorr_time(trace) if main_steps >= 4 else 1.0,
        "energy_mean": float(trace.mean()) if main_steps else 0.0,
        "energy_stderr": batch_means_stderr(trace) if main_steps >= 20 else 0.0,
        "n_steps": n_steps,
        "burn_in": burn_in,
        "thin": thin,
        "step_size": state.step_size,
        "rng": RNG_NAME,
    }
    return samples, diagnostics


def dlr_resample_window(state: ChainState, window: Window, sweeps: int = 10) -> ChainState:
    """Resample the window interior from its conditional law given the
    exterior and the window count.

    Implemented as Metropolis-within-window sweeps with uniform-in-window
    independence proposals: exactly invariant for the conditional density
    for any sweep count (sweeps only buys decorrelation). Exterior points
    and the count N_Delta are untouched.
    """
    idx = np.nonzero(window.contains(state.points))[0]
    if len(idx) == 0:
        return state
    lo = np.asarray(window.lower)
    hi = np.asarray(window.upper)
    for _ in range(sweeps):
        for i in idx:
            x_new = state.rng.uniform(lo, hi)
            _propose_and_accept(state, int(i), x_new)
    return state


def swap_windows(state: ChainState, window: Window, u) -> str:
    """Propose exchanging the contents of Delta and Delta+u (translated by
    -u and +u respectively, torus convention) and accept with the Metropolis
    ratio. Returns "accepted", "rejected", or "overlap".

    The proposal is a deterministic measure-preserving involution, so the
    plain ratio is the correct acceptance.
    """
    u = np.asarray(u, dtype=float).reshape(state.box.d)
    pts = state.points
    in_a = window.contains(pts)
    in_b = window.contains(wrap(state.box, pts - u))
    if np.any(in_a & in_b):
        return "overlap"
    idx = np.nonzero(in_a | in_b)[0]
    state.proposed += 1
    if len(idx) == 0:
        state.accepted += 1
        return "accepted"
    moved_old = pts[idx]
    shift = np.where(in_a[idx, None], u, -u)
    moved_new = wrap(state.box, moved_old + shift)

    rest_mask = np.ones(len(pts), dtype=bool)
    rest_mask[idx] = False
    rest = pts[rest_mask]

    def cross_and_within(moved):
        if len(rest):
            dc = wrap(state.box, moved[:, None, :] - rest[None, :, :])
            cross = np.atleast_1d(
                state.pot.eval(dc.ravel() if state.box.d == 1 else dc.reshape(-1, state.box.d))
            ).reshape(len(moved), len(rest))
        else:
            cross = np.zeros((len(moved), 0))
        i, j = np.triu_indices(len(moved), k=1)
        if len(i):
            dw = wrap(state.box, moved[i] - moved[j])
            within = np.atleast_1d(
                state.pot.eval(dw.ravel() if state.box.d == 1 else dw)
            )
        else:
            within = np.zeros(0)
        return cross, within, (i, j)

    cross_new, within_new, ij = cross_and_within(moved_new)
    if np.any(np.isinf(cross_new)) or np.any(np.isinf(within_new)):
        return "rejected"
    cross_old, within_old, _ = cross_and_within(moved_old)
    delta_h = float(
        np.sum(cross_new) - np.sum(cross_old) + np.sum(within_new) - np.sum(within_old)
    )
    if not state.rng.random() < accept_probability(delta_h, state.beta):
        return "rejected"

    # commit: update positions, per-point fields, and the total
    state.points[idx] = moved_new
    rest_idx = np.nonzero(rest_mask)[0]
    if len(rest_idx):
        state.fields[rest_idx] += cross_new.sum(axis=0) - cross_old.sum(axis=0)
    i, j = ij
    within_rows_new = np.zeros(len(idx))
    within_rows_old = np.zeros(len(idx))
    if len(i):
        np.add.at(within_rows_new, i, within_new)
        np.add.at(within_rows_new, j, within_new)
        np.add.at(within_rows_old, i, within_old)
        np.add.at(within_rows_old, j, within_old)
    state.fields[idx] = cross_new.sum(axis=1) + within_rows_new
    state.energy_total += delta_h
    state.accepted += 1
    return "accepted"


def make_schedule(schedule: str, window: Window | None = None, u_list=(), *,
                  swap_every: int = 16, resample_every: int = 64,
                  sweeps: int = 2):
    """Compose a move function for run_chain.

    "plain" is single-site Metropolis. "dlr" adds periodic conditional
    resampling of the window interior. "swap" additionally proposes
    window exchanges toward distant translates (the count-transporting
    move), drawing u from u_list or uniformly when the list is empty.
    """
    if schedule == "plain":
        return metropolis_step
    if schedule not in ("dlr", "swap"):
        raise ValueError(f"unknown schedule {schedule!r}")
    if window is None:
        raise ValueError(f"schedule {schedule!r} needs a window")
    us = [np.asarray(u, dtype=float) for u in u_list]
    counter = {"step": 0}

    def move(state: ChainState) -> ChainState:
        metropolis_step(state)
        counter["step"] += 1
        k = counter["step"]
        if schedule == "swap" and k % swap_every == 0:
            if us:
                u = us[int(state.rng.integers(len(us)))]
            else:
                half = state.box.side_length / 2.0
                u = state.rng.uniform(-half, half, size=state.box.d)
            swap_windows(state, window, u)
        if k % resample_every == 0:
            dlr_resample_window(state, window, sweeps=sweeps)
        return state

    return move


def stationarize(gamma: Configuration, rng: np.random.Generator) -> Configuration:
    """Translate by a uniform torus vector (the translation-averaged law)."""
    L = gamma.box.side_length
    u = rng.uniform(-L / 2, L / 2, size=gamma.box.d)
    return translate_torus(gamma, u)


def discretized_transition_matrix(pot, box: TorusBox, beta: float,
                                  n_cells: int = 16):
    """Exact transition matrix of the production acceptance rule on the
    16-cell discretization of the two-point chain (d=1).

    States are ordered cell pairs; the proposal picks a point uniformly and
    a destination cell uniformly. Returns (pi, P) for the detailed-balance
    audit max |pi_x P_xy - pi_y P_yx| <= 1e-12.
    """
    if box.d != 1:
        raise NotImplementedError("audit is defined for d=1")
    L = box.side_length
    centers = -L / 2 + (np.arange(n_cells) + 0.5) * L / n_cells

    energy = np.empty((n_cells, n_cells))
    for a in range(n_cells):
        diffs = wrap(box, centers[a] - centers)
        energy[a] = np.atleast_1d(pot.eval(diffs))

    n_states = n_cells * n_cells
    e = energy.ravel()
    finite = ~np.isinf(e)
    weights = np.zeros(n_states)
    weights[finite] = np.exp(-beta * e[finite])
    pi = weights / weights.sum()

    P = np.zeros((n_states, n_states))
    q = 1.0 / (2.0 * n_cells)
    for a in range(n_cells):
        for b in range(n_cells):
            x = a * n_cells + b
            for c in range(n_cells):
                # move the first point to cell c
                y = c * n_cells + b
                if y != x:
                    P[x, y] += q * accept_probability(energy[c, b] - energy[a, b], beta)
                # move the second point to cell c
                y = a * n_cells + c
                if y != x:
                    P[x, y] += q * accept_probability(energy[a, c] - energy[a, b], beta)
            P[x, x] = 1.0 - P[x].sum()
    return pi, P
