"""Fixed-time-step simulation of the jointly discretized cochlear model.

Three modes:

* ``passive``  - BM-only resonators, no feedback (Appendix-E parameter set).
* ``linear``   - active feedback with constant gain; stepping uses the
  precomputed H, K, M matrices.
* ``nonlinear``- the feedback gain of every element is rescaled each step
  by omega = tanh(tau*p_a)/(tau*p_a), evaluated from the lagged feedback
  pressure; the implicit step is re-solved every sample.

The nonlinear re-solve eliminates the TM rows exactly (they are block
diagonal and untouched by the fluid coupling), reducing each step to an
N x N LU factorization instead of 2N x 2N.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from . import params as par
from .assembly import SystemMatrices, assemble, discrete_coefficients
from .errors import ConfigError, InsufficientHistory, NumericalBlowup

__all__ = [
    "SimConfig",
    "SimulationState",
    "CochleaResponse",
    "Simulator",
    "simulate",
    "pressure_field",
]

MODES = ("passive", "linear", "nonlinear")

# Displacements beyond this (m) are physically absurd and abort the run.
BLOWUP_LIMIT = 1e3


@dataclass(frozen=True)
class SimConfig:
    """Configuration of one simulation run."""

    constants: par.PhysicalConstants = field(default_factory=par.PhysicalConstants)
    mode: str = "nonlinear"
    fs: float = 128000.0
    passive: par.PassiveParams = field(default_factory=par.PassiveParams)
    record_tm: bool = False
    record_pressure: bool = False
    record_omega: bool = False
    record_stride: int = 1
    input_scale: float = par.INPUT_COUPLING   # frozen input-coupling calibration

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.fs <= 0:
            raise ConfigError("fs must be positive")
        if self.record_stride < 1:
            raise ConfigError("record_stride must be >= 1")
        if self.mode == "nonlinear" and self.constants.tau > 1.0:
            raise ConfigError("tau > 1 yields an unstable nonlinear system")


@dataclass
class SimulationState:
    """State of the recursion at step j (X_0 = X_{-1} = 0 at rest)."""

    X_j: np.ndarray
    X_jm1: np.ndarray
    omega: np.ndarray
    j: int = 0


@dataclass
class CochleaResponse:
    """Recorded time x position response fields."""

    bm: np.ndarray                 # T x N BM displacement, m
    fs: float                      # model sampling rate, Hz
    mode: str
    positions: np.ndarray          # element centers, m
    tm: np.ndarray | None = None   # T x N TM displacement, m
    pressure: np.ndarray | None = None  # T x N chamber pressure difference, Pa
    omega: np.ndarray | None = None     # T x N feedback scaling factors
    q: np.ndarray | None = None    # per-step basal excitation (accel units)
    record_stride: int = 1

    @property
    def record_fs(self) -> float:
        return self.fs / self.record_stride

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.bm.shape[0]) * self.record_stride / self.fs


class MiddleEar:
    """Second-order boundary oscillator converting ear-canal pressure (Pa)
    to stapes acceleration, discretized with the same first-order
    differences as the cochlear micro-model."""

    def __init__(self, constants: par.PhysicalConstants, dt: float):
        self.m = constants.m_ME
        self.c = constants.c_ME
        self.k = constants.k_ME
        self.dt = dt
        self.x = 0.0
        self.x_prev = 0.0

    def accelerate(self, p: float) -> float:
        """Advance one step under drive pressure p; return the stapes
        acceleration at this step."""
        dt = self.dt
        lhs = self.m / dt**2 + self.c / dt
        x_next = (p + (2.0 * self.m / dt**2 + self.c / dt) * self.x
                  - self.k * self.x - self.m / dt**2 * self.x_prev) / lhs
        acc = (x_next - 2.0 * self.x + self.x_prev) / dt**2
        self.x_prev, self.x = self.x, x_next
        return acc


class Simulator:
    """Owns the assembled matrices and per-step state for one model."""

    def __init__(self, config: SimConfig):
        self.config = config
        c = config.constants
        self.dt = 1.0 / config.fs
        self.positions = par.coefficient_positions(c)
        if config.mode == "passive":
            cf = par.characteristic_frequencies(c, self.positions)
            self.coeffs = par.passive_coefficients(config.passive, self.positions, cf)
            self.gamma0 = 0.0
            # The passive variant has its own (much heavier) BM mass; the
            # discretization must see it, or the effective resonance is
            # sqrt(m1_passive/m1_active) ~ 4.6x too high and the scheme
            # leaves its stability region.
            c_passive = replace(c, m1=config.passive.m1)
            self.matrices = assemble(c_passive, self.coeffs, config.fs,
                                     gamma=0.0, pin_tm=True)
        else:
            self.coeffs = par.active_coefficients(c, self.positions)
            self.gamma0 = c.gamma
            self.matrices = assemble(c, self.coeffs, config.fs, gamma=c.gamma)
        self.mvec = self.matrices.M @ self.matrices.w_input   # M F^{-1} e1
        if config.mode == "nonlinear":
            self._prepare_nonlinear()

    # -- nonlinear per-step machinery -------------------------------------

    def _prepare_nonlinear(self):
        """Precompute the gamma-independent pieces of the per-step solve."""
        c = self.config.constants
        dt = self.dt
        el = self.coeffs
        g = c.g
        self._base = discrete_coefficients(el, c, dt, gamma=0.0)
        # Sensitivities of the gamma-bearing coefficients to gamma_eff.
        self._dal1 = -g * el.c4 / dt
        self._dal0 = g * el.c4 / dt - g * el.k4
        self._dbe1 = el.c4 / dt
        self._dbe0 = -el.c4 / dt + el.k4
        self._w = self.matrices.w_input

    def _omega(self, state: SimulationState) -> np.ndarray:
        """Feedback scaling factors from the lagged feedback pressure."""
        c = self.config.constants
        el = self.coeffs
        x1, x2 = state.X_j[0::2], state.X_j[1::2]
        x1p, x2p = state.X_jm1[0::2], state.X_jm1[1::2]
        xf = c.g * x1 - x2
        xf_prev = c.g * x1p - x2p
        pa = -self.gamma0 * (el.c4 * (xf - xf_prev) / self.dt + el.k4 * xf)
        arg = c.tau * pa
        omega = np.ones_like(arg)
        nz = arg != 0.0
        omega[nz] = np.tanh(arg[nz]) / arg[nz]
        return omega

    # -- stepping ----------------------------------------------------------

    def step(self, state: SimulationState, u_j: float) -> SimulationState:
        """One linear step: X_{j+1} = H X_j + K X_{j-1} + M F^{-1} Q_j."""
        if not np.isfinite(u_j):
            raise NumericalBlowup(f"non-finite input at step {state.j}", step=state.j)
        m = self.matrices
        X_next = m.H @ state.X_j + m.K @ state.X_jm1 + u_j * self.mvec
        self._guard(X_next, state.j)
        return SimulationState(X_j=X_next, X_jm1=state.X_j,
                               omega=state.omega, j=state.j + 1)

    def nonlinear_step(self, state: SimulationState, u_j: float) -> SimulationState:
        """One step with per-element feedback gain gamma * omega.

        omega is evaluated from the lagged feedback pressure (backward
        difference over X_j, X_{j-1}), then the gamma-dependent
        coefficients are refreshed and the implicit system re-solved.
        """
        if not np.isfinite(u_j):
            raise NumericalBlowup(f"non-finite input at step {state.j}", step=state.j)
        omega = self._omega(state)
        geff = self.gamma0 * omega
        b = self._base
        al1 = b.alpha1 + geff * self._dal1
        al0 = b.alpha0 + geff * self._dal0
        be1 = b.beta1 + geff * self._dbe1
        be0 = b.beta0 + geff * self._dbe0

        G = self.matrices.G
        x1, x2 = state.X_j[0::2], state.X_j[1::2]
        x1p, x2p = state.X_jm1[0::2], state.X_jm1[1::2]

        # RHS of (A1 - Gamma) X_{j+1} = (-2G - A0) X_j + (G - Am1) X_{j-1} + S2^T U_j
        rb = G @ (x1p - 2.0 * x1) - (al0 * x1 + be0 * x2) \
            - b.alpha_m1 * x1p + u_j * self._w
        rt = -(b.eps0 * x1 + b.delta0 * x2) - b.delta_m1 * x2p

        # Eliminate the TM rows (block diagonal): X2 = (rt - eps1 X1)/delta1.
        d = al1 - be1 * b.eps1 / b.delta1
        R = -G.copy()
        np.fill_diagonal(R, d + R.diagonal())
        rhs = rb - be1 * rt / b.delta1
        x1_next = sla.lu_solve(sla.lu_factor(R, check_finite=False),
                               rhs, check_finite=False)
        x2_next = (rt - b.eps1 * x1_next) / b.delta1

        X_next = np.empty_like(state.X_j)
        X_next[0::2] = x1_next
        X_next[1::2] = x2_next
        self._guard(X_next, state.j)
        return SimulationState(X_j=X_next, X_jm1=state.X_j,
                               omega=omega, j=state.j + 1)

    @staticmethod
    def _guard(X: np.ndarray, j: int):
        peak = np.abs(X).max()
        if not np.isfinite(peak) or peak > BLOWUP_LIMIT:
            raise NumericalBlowup(
                f"state magnitude {peak:.3e} m at step {j} signals instability",
                step=j,
            )

    # -- full runs ----------------------------------------------------------

    def initial_state(self) -> SimulationState:
        twoN = 2 * self.config.constants.N
        return SimulationState(
            X_j=np.zeros(twoN), X_jm1=np.zeros(twoN),
            omega=np.ones(self.config.constants.N), j=0,
        )

    def run(self, stimulus: np.ndarray) -> CochleaResponse:
        """Drive the model with a pressure waveform (Pa) sampled at fs."""
        cfg = self.config
        stimulus = np.asarray(stimulus, dtype=float)
        if stimulus.ndim != 1:
            raise ConfigError("stimulus must be a 1-D sample sequence")
        N = cfg.constants.N
        T = stimulus.shape[0]
        stride = cfg.record_stride
        T_rec = (T + stride - 1) // stride

        bm = np.empty((T_rec, N))
        tm = np.empty((T_rec, N)) if cfg.record_tm else None
        om = np.empty((T_rec, N)) if cfg.record_omega else None
        pr = np.empty((T_rec, N)) if cfg.record_pressure else None
        q_series = np.empty(T)

        ear_constants = cfg.constants
        if cfg.mode == "passive":
            ear_constants = replace(
                cfg.constants, m_ME=cfg.passive.m_ME,
                k_ME=cfg.passive.k_ME, c_ME=cfg.passive.c_ME)
        ear = MiddleEar(ear_constants, self.dt)
        state = self.initial_state()
        step_fn = self.nonlinear_step if cfg.mode == "nonlinear" else self.step
        G, w = self.matrices.G, self.matrices.w_input
        bm_prev1 = np.zeros(N)   # X_j BM part
        bm_prev2 = np.zeros(N)   # X_{j-1} BM part
        try:
            for j in range(T):
                q_j = cfg.input_scale * ear.accelerate(stimulus[j])
                q_series[j] = q_j
                state = step_fn(state, q_j)
                if j % stride == 0:
                    r = j // stride
                    bm[r] = state.X_j[0::2]
                    if tm is not None:
                        tm[r] = state.X_j[1::2]
                    if om is not None:
                        om[r] = state.omega
                    if pr is not None:
                        pr[r] = G @ (state.X_j[0::2] - 2.0 * bm_prev1 + bm_prev2) \
                            + q_j * w
                bm_prev2, bm_prev1 = bm_prev1, state.X_j[0::2]
        except NumericalBlowup as exc:
            raise NumericalBlowup(str(exc), step=exc.step) from None
        return CochleaResponse(
            bm=bm, tm=tm, pressure=pr, omega=om, q=q_series,
            fs=cfg.fs, mode=cfg.mode, positions=self.positions,
            record_stride=stride,
        )


def simulate(stimulus: np.ndarray, config: SimConfig) -> CochleaResponse:
    """Assemble a model per ``config`` and run it over ``stimulus``."""
    return Simulator(config).run(stimulus)


def pressure_field(response: CochleaResponse, matrices: SystemMatrices) -> np.ndarray:
    """Reconstruct the chamber pressure difference from a recorded run.

    Requires stride-1 recording with the basal excitation series; the two
    earliest frames lack the needed history and are returned as zeros
    (the model starts from rest, where the pressure is zero).
    """
    if response.record_stride != 1:
        raise InsufficientHistory("pressure reconstruction needs stride-1 recording")
    if response.q is None:
        raise InsufficientHistory("response lacks the recorded excitation series")
    bm = response.bm
    if bm.shape[0] < 3:
        raise InsufficientHistory("need at least 3 consecutive recorded states")
    P = np.zeros_like(bm)
    G, w = matrices.G, matrices.w_input
    ddx = bm[2:] - 2.0 * bm[1:-1] + bm[:-2]
    P[2:] = ddx @ G.T + response.q[2:, None] * w[None, :]
    return P
