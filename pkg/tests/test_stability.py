import numpy as np
import pytest

from cochlear_sim.params import PhysicalConstants
from cochlear_sim.solver import SimConfig, Simulator, simulate
from cochlear_sim.stability import (
    STABILITY_TOL,
    build_E,
    eigenvalues,
    max_eigenvalue_magnitude,
    nonlinear_stability_trace,
    stability_sweep,
)
from cochlear_sim.stimuli import make_tone

FS = 128000.0


def test_build_E_layout():
    H = np.arange(16.0).reshape(4, 4)
    K = -np.arange(16.0).reshape(4, 4)
    E = build_E(H, K)
    assert E.shape == (8, 8)
    np.testing.assert_array_equal(E[:4, :4], H)
    np.testing.assert_array_equal(E[:4, 4:], K)
    np.testing.assert_array_equal(E[4:, :4], np.eye(4))
    np.testing.assert_array_equal(E[4:, 4:], np.zeros((4, 4)))


def test_companion_matches_recursion_characteristic():
    """Every companion eigenvalue solves the quadratic recursion problem.

    For X_{j+1} = H X_j + K X_{j-1} the modes satisfy
    det(lambda^2 I - lambda H - K) = 0; check each eigenvalue via the
    smallest singular value of that pencil.
    """
    c = PhysicalConstants(N=5)
    sim = Simulator(SimConfig(constants=c, mode="linear", fs=FS))
    H, K = sim.matrices.H, sim.matrices.K
    E = build_E(H, K)
    ev = eigenvalues(E)
    assert ev.shape == (4 * c.N,)
    eye = np.eye(2 * c.N)
    for lam in ev:
        Q = lam**2 * eye - lam * H - K
        smin = np.linalg.svd(Q, compute_uv=False)[-1]
        scale = np.linalg.norm(Q)
        assert smin <= 1e-8 * max(scale, 1.0), lam


def test_companion_modes_propagate():
    # An eigenpair of E advances one recursion step by a factor lambda.
    c = PhysicalConstants(N=4)
    sim = Simulator(SimConfig(constants=c, mode="linear", fs=FS))
    E = build_E(sim.matrices.H, sim.matrices.K)
    w, V = np.linalg.eig(E)
    i = int(np.argmax(np.abs(w)))
    v = V[:, i]
    np.testing.assert_allclose(E @ v, w[i] * v, rtol=0, atol=1e-8 * np.abs(w[i]))


def test_passive_model_stable():
    c = PhysicalConstants(N=50)
    cfg = SimConfig(constants=c, mode="passive", fs=FS)
    (report,) = stability_sweep([FS], cfg)
    assert report.stable
    assert report.max_eig_magnitude < 1.0 + STABILITY_TOL


def test_sweep_orders_and_captures_errors():
    c = PhysicalConstants(N=30, gamma=0.5)
    cfg = SimConfig(constants=c, mode="linear", fs=FS)
    reports = stability_sweep([96000.0, -5.0, 128000.0], cfg)
    assert [r.fs for r in reports] == [96000.0, -5.0, 128000.0]
    assert reports[1].error is not None
    assert not reports[1].stable
    assert reports[0].error is None


def test_unstable_coarse_grid_detected():
    c = PhysicalConstants(N=120, gamma=1.0)
    cfg = SimConfig(constants=c, mode="linear", fs=FS)
    (report,) = stability_sweep([FS], cfg)
    assert not report.stable
    assert report.eig_count_outside_unit > 0


def test_nonlinear_trace_levels_shrink_radius():
    """Saturated feedback pushes the effective system toward stability."""
    c = PhysicalConstants(N=60, gamma=0.6)
    cfg = SimConfig(constants=c, mode="nonlinear", fs=FS, record_omega=True)
    sim = Simulator(cfg)
    u = make_tone(FS, 0.01, 3700.0, 120.0).samples
    r = sim.run(u)
    trace = nonlinear_stability_trace(sim, r, stride=400)
    steps, radii = zip(*trace)
    assert len(radii) >= 2
    assert all(np.isfinite(r) for r in radii)
    # at 120 dB the saturated gamma must not exceed the small-signal radius
    base = max_eigenvalue_magnitude(
        np.block([[sim.matrices.H, sim.matrices.K],
                  [np.eye(2 * c.N), np.zeros((2 * c.N, 2 * c.N))]]))
    assert max(radii) <= base + 1e-9
