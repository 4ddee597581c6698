"""Torus geometry, windows, point-process sampling, and snapshot IO."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rieszlab import (
    Configuration,
    TorusBox,
    Window,
    count_in,
    in_perturbed_class,
    perturbed_lattice,
    read_snapshots,
    rng_from_seed,
    sample_binomial,
    sample_poisson,
    torus_diff,
    translate_torus,
    wrap,
    write_snapshots,
)
from rieszlab.potential import RieszParams
from rieszlab.torus import perturbed_class_mask


def test_box_geometry():
    box = TorusBox(n=9, d=1)
    assert box.side_length == 9.0
    assert box.volume == 9.0
    with pytest.raises(ValueError):
        TorusBox(n=0, d=1)


@given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
@settings(max_examples=80, deadline=None)
def test_wrap_into_fundamental_domain(x):
    box = TorusBox(n=7, d=1)
    w = float(np.ravel(wrap(box, np.array([[x]])))[0])
    assert -3.5 <= w <= 3.5
    # wrapping is idempotent and preserves the class mod L
    assert math.isclose(
        float(np.ravel(wrap(box, np.array([[w]])))[0]), w, abs_tol=1e-9
    )
    assert math.isclose((x - w) / 7.0, round((x - w) / 7.0), abs_tol=1e-6)


def test_torus_diff_is_minimal_image():
    box = TorusBox(n=4, d=1)
    d = torus_diff(box, np.array([1.9]), np.array([-1.9]))
    assert math.isclose(float(np.ravel(d)[0]), -0.2, abs_tol=1e-12)


def test_window_validation():
    win = Window.centered(1, 2.0)
    assert win.volume == 2.0
    assert win.lower[0] == -1.0 and win.upper[0] == 1.0
    with pytest.raises(ValueError):
        Window(lower=(1.0,), upper=(0.0,))
    box = TorusBox(n=2, d=1)
    with pytest.raises(ValueError):
        Window.centered(1, 5.0).validate_inside(box)


def test_window_contains_half_open():
    win = Window.centered(1, 2.0)
    inside = win.contains(np.array([[-1.0], [0.0], [0.999], [1.0]]))
    assert inside.tolist() == [True, True, True, False]


def test_count_in_matches_bruteforce(rng):
    box = TorusBox(n=16, d=1)
    gamma = sample_binomial(box, 16, rng)
    win = Window(lower=(-3.0,), upper=(1.5,))
    brute = sum(1 for p in gamma.points.ravel() if -3.0 <= p < 1.5)
    assert count_in(gamma, win) == brute


def test_sampling_determinism():
    box = TorusBox(n=8, d=1)
    a = sample_binomial(box, 8, rng_from_seed(5))
    b = sample_binomial(box, 8, rng_from_seed(5))
    c = sample_binomial(box, 8, rng_from_seed(5, stream=1))
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)
    assert np.all(np.abs(a.points) <= 4.0)


def test_poisson_sampling_in_window(rng):
    box = TorusBox(n=64, d=1)
    win = Window(lower=(-8.0,), upper=(8.0,))
    counts = [len(sample_poisson(box, win, 1.0, rng)) for _ in range(200)]
    gamma = sample_poisson(box, win, 1.0, rng)
    assert np.all(win.contains(gamma.points))
    mean = np.mean(counts)
    # Poisson(16): the mean over 200 draws sits within 5 sigma
    assert abs(mean - 16.0) <= 5.0 * math.sqrt(16.0 / 200.0)
    assert len(sample_poisson(box, win, 0.0, rng)) == 0


def test_perturbed_lattice_membership(rng):
    p = RieszParams(d=1, s=0.5)
    for n in (3, 8):
        gamma = perturbed_lattice(p, n, 0.25, rng)
        assert len(gamma) == n
        assert in_perturbed_class(gamma, 0.25)
        # sorted spacing stays near one: one point per unit cell
        gaps = np.diff(np.sort(gamma.points.ravel()))
        assert np.all(np.abs(gaps - 1.0) <= 0.25)
    with pytest.raises(ValueError):
        perturbed_lattice(p, 4, 0.6, rng)


def test_perturbed_class_mask_vectorized(rng):
    samples = rng.uniform(-1.5, 1.5, size=(500, 3))
    mask = perturbed_class_mask(samples, 3, 0.4)
    centers = np.array([-1.0, 0.0, 1.0])
    for row, keep in zip(samples, mask):
        ok = np.all(np.abs(np.sort(row) - centers) <= 0.2)
        assert keep == ok


def test_translate_wraps_and_preserves_count(rng):
    box = TorusBox(n=4, d=1)
    gamma = sample_binomial(box, 4, rng)
    moved = translate_torus(gamma, 3.7)
    assert len(moved) == 4
    assert np.all(np.abs(moved.points) <= 2.0)
    # translating back is the identity modulo wrap
    back = translate_torus(moved, -3.7)
    assert np.allclose(np.sort(back.points.ravel()), np.sort(gamma.points.ravel()))


def test_snapshot_roundtrip(tmp_path, rng):
    box = TorusBox(n=5, d=1)
    configs = [sample_binomial(box, 5, rng) for _ in range(7)]
    path = tmp_path / "snaps.jsonl"
    write_snapshots(path, configs, seed=42, s=0.5, beta=1.5)
    back = read_snapshots(path)
    assert len(back) == 7
    for (rec, cfg), orig in zip(back, configs):
        assert rec["seed"] == 42 and rec["beta"] == 1.5 and rec["n"] == 5
        assert np.array_equal(cfg.points, orig.points)
        assert cfg.box == orig.box


def test_configuration_wraps_and_rejects_duplicates():
    box = TorusBox(n=2, d=1)
    gamma = Configuration(points=np.array([[5.0]]), box=box)
    assert math.isclose(float(gamma.points[0, 0]), -1.0, abs_tol=1e-12)
    with pytest.raises(ValueError):
        Configuration(points=np.array([[0.25], [0.25]]), box=box)
    # the stored array is frozen
    with pytest.raises(ValueError):
        gamma.points[0, 0] = 0.0
