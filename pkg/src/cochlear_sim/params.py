"""Physical parameters and per-element coefficients of the cochlear model.

The active model uses position-dependent stiffness/damping profiles that
decay exponentially from base to apex; the passive variant keeps only the
basilar-membrane resonator per element, tuned through a characteristic-
frequency map so both variants share the same tonotopic axis.
"""

from __future__ import annotations

from dataclasses import dataclass, replace, fields

import numpy as np

from .errors import ConfigError

__all__ = [
    "PhysicalConstants",
    "ElementCoefficients",
    "INPUT_COUPLING",
    "PassiveParams",
    "element_positions",
    "coefficient_positions",
    "active_coefficients",
    "characteristic_frequencies",
    "passive_coefficients",
    "constants_from_file",
]

# Position offset (m) shared by all exponential coefficient profiles.
_X_OFFSET = 0.00375

# Input-coupling calibration: scale applied to the stapes acceleration
# derived from the ear-canal pressure before it drives the duct. The
# pressure-to-drive conversion has no published absolute value; this
# constant is calibrated (once, then frozen) so that the nonlinear
# feedback stays in its small-signal regime up to ~80 dB SPL and the
# tanh knee of the 3700 Hz input/output curve sits at the published
# input level. Both the fixed-step solver and the semi-discrete
# reference use the same constant, so cross-model comparisons are
# unaffected by its value.
INPUT_COUPLING = 1e-2


@dataclass(frozen=True)
class PhysicalConstants:
    """Global physical constants of the model (SI units).

    Defaults reproduce the published parameter set for the nonlinear
    active model; ``rho`` and ``g`` are not part of that table and default
    to water density and unity coupling respectively.
    """

    L: float = 0.035          # cochlear length, m
    H: float = 0.001          # chamber height, m
    rho: float = 1000.0       # fluid density, kg m^-3
    N: int = 500              # number of spatial elements
    gamma: float = 1.0        # active feedback gain
    g: float = 1.0            # RL/BM displacement proportionality
    tau: float = 1.0          # tanh saturation scale
    m1: float = 1.35e-2       # BM areal mass, kg m^-2
    m2: float = 2.3e-3        # TM areal mass, kg m^-2
    m_ME: float = 2.96e-2     # middle-ear mass, kg m^-2
    k_ME: float = 2.63e8      # middle-ear stiffness, N m^-3
    c_ME: float = 2.8e4       # middle-ear damping, N s m^-3

    def __post_init__(self):
        if self.L <= 0 or self.H <= 0 or self.rho <= 0:
            raise ConfigError("L, H and rho must be positive")
        if int(self.N) != self.N or self.N < 3:
            raise ConfigError(
                f"N must be an integer >= 3 (finite-difference stencil), got {self.N}"
            )
        if self.m1 <= 0 or self.m2 <= 0 or self.m_ME <= 0:
            raise ConfigError("masses must be positive")
        if self.tau > 1.0:
            raise ConfigError("tau > 1 yields an unstable feedback saturation")

    @property
    def dl(self) -> float:
        """Spatial segment length, m."""
        return self.L / self.N


@dataclass(frozen=True)
class ElementCoefficients:
    """Per-element stiffness (N m^-3) and damping (N s m^-3) profiles."""

    x: np.ndarray   # element start positions, m
    k1: np.ndarray
    k2: np.ndarray
    k3: np.ndarray
    k4: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    c3: np.ndarray
    c4: np.ndarray


@dataclass(frozen=True)
class PassiveParams:
    """Parameters of the passive (no feedback, BM-only) variant, which
    also carries its own middle-ear element."""

    m1: float = 0.28        # kg m^-2
    Q: float = 5.0          # resonator quality factor
    m_ME: float = 1.408     # kg m^-2
    k_ME: float = 2.592e8   # N m^-3
    c_ME: float = 3.2e4     # N s m^-3

    def __post_init__(self):
        if self.m1 <= 0:
            raise ConfigError("passive m1 must be positive")
        if self.Q <= 0:
            raise ConfigError("passive Q must be positive")
        if self.m_ME <= 0 or self.k_ME <= 0 or self.c_ME <= 0:
            raise ConfigError("passive middle-ear parameters must be positive")


def element_positions(constants: PhysicalConstants) -> np.ndarray:
    """Uniform spatial grid of element start coordinates.

    Returns N positions 0, dl, 2*dl, ... with dl = L/N.
    """
    if constants.N < 3:
        raise ConfigError("N must be >= 3")
    return np.arange(constants.N) * constants.dl


def coefficient_positions(constants: PhysicalConstants) -> np.ndarray:
    """Element center coordinates (n - 1/2)*dl used to evaluate the
    position-dependent coefficient profiles and reported as response
    positions."""
    return element_positions(constants) + 0.5 * constants.dl


def active_coefficients(
    constants: PhysicalConstants, positions: np.ndarray
) -> ElementCoefficients:
    """Evaluate the active-model coefficient profiles at each position."""
    x = np.asarray(positions, dtype=float)
    if x.min() < 0 or x.max() > constants.L:
        raise ConfigError("positions must lie within [0, L]")
    xo = x + _X_OFFSET
    return ElementCoefficients(
        x=x,
        k1=4.95e9 * np.exp(-320.0 * xo),
        k2=3.15e7 * np.exp(-352.0 * xo),
        k3=4.5e7 * np.exp(-320.0 * xo),
        k4=2.82e9 * np.exp(-320.0 * xo),
        c1=1.0 + 19700.0 * np.exp(-179.0 * xo),
        c2=113.0 * np.exp(-176.0 * xo),
        c3=22.5 * np.exp(-64.0 * xo),
        c4=9650.0 * np.exp(-164.0 * xo),
    )


def characteristic_frequencies(
    constants: PhysicalConstants, positions: np.ndarray
) -> np.ndarray:
    """Greenwood place-frequency map for the human cochlea,

        f(x) = 165.4 * (10**(2.1 * (1 - x/L)) - 0.88)  Hz,

    which tracks the positions where the active model's response actually
    peaks (16 kHz near 1.5 mm, 3.7 kHz near 12 mm, 2 kHz near 16.1 mm).
    The active model's local resonance sqrt(k1/m1)/2pi is NOT a usable
    substitute: it overestimates the basal frequency by a factor of ~2.5
    (53 kHz at the base), which both misplaces the map and, when used to
    set the passive stiffness, drives omega*dt past the time-stepping
    scheme's stability limit at every practical sampling rate.

    Serves as the single tonotopic map shared by the passive variant and
    the per-channel outer/middle-ear gains.
    """
    x = np.asarray(positions, dtype=float)
    if x.min() < 0 or x.max() > constants.L:
        raise ConfigError("positions must lie within [0, L]")
    return 165.4 * (10.0 ** (2.1 * (1.0 - x / constants.L)) - 0.88)


def passive_coefficients(
    passive: PassiveParams,
    positions: np.ndarray,
    cf_map: np.ndarray,
) -> ElementCoefficients:
    """Per-element coefficients of the passive model.

    k1 follows the resonance relation k1 = (2*pi*f)^2 * m1 (the
    dimensionally consistent reading), c1 = sqrt(k1*m1)/Q. All coupling
    and feedback coefficients are zero: the passive variant has no TM
    coupling and no feedback.
    """
    x = np.asarray(positions, dtype=float)
    f = np.asarray(cf_map, dtype=float)
    if f.shape != x.shape:
        raise ConfigError("cf_map must supply one frequency per element")
    if np.any(f <= 0):
        raise ConfigError("characteristic frequencies must be positive")
    k1 = (2.0 * np.pi * f) ** 2 * passive.m1
    c1 = np.sqrt(k1 * passive.m1) / passive.Q
    zeros = np.zeros_like(x)
    return ElementCoefficients(
        x=x, k1=k1, k2=zeros, k3=zeros, k4=zeros,
        c1=c1, c2=zeros, c3=zeros, c4=zeros,
    )


def constants_from_file(path) -> PhysicalConstants:
    """Load constants from a plain-text ``key=value`` file.

    Unknown keys are rejected; missing keys keep their defaults. Blank
    lines and lines starting with '#' are ignored.
    """
    valid = {f.name: f.type for f in fields(PhysicalConstants)}
    overrides = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in valid:
                raise ConfigError(f"{path}:{lineno}: unknown parameter {key!r}")
            try:
                overrides[key] = int(value) if key == "N" else float(value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    return replace(PhysicalConstants(), **overrides)
