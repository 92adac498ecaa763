"""Test stimuli and response analysis for the experiment suite.

SPL convention: a waveform is scaled so that an RMS-referenced peak
measure, 20*log10(max|x|/sqrt(2)) + 96, equals the target SPL. For a
sine this makes the scaling factor s = 10^((SPL-96)/20) / (max|x|/sqrt(2)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import ConfigError, NoResponse, WindowTooLong
from .solver import CochleaResponse, SimConfig, simulate

__all__ = [
    "Stimulus",
    "spl_scale",
    "measure_spl",
    "make_impulse",
    "make_tone",
    "make_chirp",
    "steady_state_profile",
    "transit_time",
    "excited_band",
    "io_curve",
]

SPL_REF_DB = 96.0


@dataclass(frozen=True)
class Stimulus:
    samples: np.ndarray   # pressure waveform, Pa
    fs: float
    spl_db: float
    kind: str             # impulse | tone | chirp | file

    @property
    def duration(self) -> float:
        return self.samples.shape[0] / self.fs


def spl_scale(x: np.ndarray, spl_db: float) -> np.ndarray:
    """Scale a waveform to the target SPL."""
    peak = np.abs(x).max()
    if peak == 0:
        return np.zeros_like(x)
    s = 10.0 ** ((spl_db - SPL_REF_DB) / 20.0) / (peak / np.sqrt(2.0))
    return s * x


def measure_spl(x: np.ndarray) -> float:
    """RMS-referenced peak SPL of a waveform (inverse of spl_scale)."""
    peak = np.abs(np.asarray(x)).max()
    if peak == 0:
        return -np.inf
    return 20.0 * np.log10(peak / np.sqrt(2.0)) + SPL_REF_DB


def _check_fs_dur(fs: float, duration: float):
    if fs <= 0:
        raise ConfigError("fs must be positive")
    if duration <= 0:
        raise ConfigError("duration must be positive")


def make_impulse(fs: float, duration: float, spl_db: float) -> Stimulus:
    """Single nonzero sample at t=0, scaled to the target SPL."""
    _check_fs_dur(fs, duration)
    x = np.zeros(int(round(fs * duration)))
    x[0] = 1.0
    return Stimulus(samples=spl_scale(x, spl_db), fs=fs, spl_db=spl_db,
                    kind="impulse")


def make_tone(fs: float, duration: float, f: float, spl_db: float) -> Stimulus:
    """Sine tone at frequency f, scaled to the target SPL."""
    _check_fs_dur(fs, duration)
    if not 0 < f < fs / 2:
        raise ConfigError(f"tone frequency {f} Hz violates 0 < f < fs/2")
    t = np.arange(int(round(fs * duration))) / fs
    x = np.sin(2.0 * np.pi * f * t)
    return Stimulus(samples=spl_scale(x, spl_db), fs=fs, spl_db=spl_db,
                    kind="tone")


def make_chirp(fs: float, duration: float, f_start: float, f_end: float,
               spl_db: float) -> Stimulus:
    """Linear instantaneous-frequency sweep from f_start to f_end."""
    _check_fs_dur(fs, duration)
    for f in (f_start, f_end):
        if not 0 < f < fs / 2:
            raise ConfigError(f"chirp frequency {f} Hz violates 0 < f < fs/2")
    t = np.arange(int(round(fs * duration))) / fs
    T = duration
    phase = 2.0 * np.pi * (f_start * t + (f_end - f_start) / (2.0 * T) * t**2)
    x = np.sin(phase)
    return Stimulus(samples=spl_scale(x, spl_db), fs=fs, spl_db=spl_db,
                    kind="chirp")


def steady_state_profile(
    response: CochleaResponse,
    f: float,
    window_ms: float = 30.0,
) -> np.ndarray:
    """Per-element DFT magnitude at the tone frequency over the final window.

    Uses the nearest frequency bin of an unwindowed DFT of the last
    ``window_ms`` of each element's displacement.
    """
    fs_rec = response.record_fs
    n_win = int(round(window_ms * 1e-3 * fs_rec))
    T = response.bm.shape[0]
    if n_win > T:
        raise WindowTooLong(
            f"window of {n_win} frames exceeds recording length {T}"
        )
    seg = response.bm[T - n_win:]
    spec = np.fft.rfft(seg, axis=0)
    k = int(round(f * n_win / fs_rec))
    k = min(k, spec.shape[0] - 1)
    return np.abs(spec[k])


def transit_time(
    response: CochleaResponse,
    threshold_frac: float = 0.5,
    apex_frac: float = 0.99,
) -> float:
    """Base-to-apex travel time of an impulse response, in seconds.

    Measured between the first crossings of the displacement envelope
    (analytic-signal magnitude) at the most basal element and at the
    element ``apex_frac`` of the way along the membrane; the threshold
    is ``threshold_frac`` of each element's own envelope peak.  The
    apical envelope builds up over several cycles of a slow wave, so a
    mid-height threshold is far more stable than a low one.
    """
    if not 0.0 < threshold_frac <= 1.0:
        raise ConfigError("threshold_frac must be in (0, 1]")
    n_apex = min(int(round(apex_frac * (response.bm.shape[1] - 1))),
                 response.bm.shape[1] - 1)
    dt_rec = 1.0 / response.record_fs

    def first_crossing(col):
        env = np.abs(signal.hilbert(response.bm[:, col]))
        peak = env.max()
        if peak == 0:
            raise NoResponse(f"element {col} never responded")
        return np.nonzero(env >= threshold_frac * peak)[0][0] * dt_rec

    return first_crossing(n_apex) - first_crossing(0)


def excited_band(
    response: CochleaResponse,
    threshold_frac: float = 0.5,
) -> tuple[float, float]:
    """Positional extent (x_lo, x_hi) in m of the strongly excited region.

    An element counts as excited if its peak displacement magnitude over
    the whole record reaches ``threshold_frac`` of the largest peak of
    any element. For a swept-frequency stimulus the apical edge of this
    band marks the place of the lowest swept frequency; include enough
    post-stimulus samples in the record for the final wavefront to reach
    its place (a 15-25 ms silent tail suffices), since the travel time
    to apical places is several milliseconds.
    """
    if not 0.0 < threshold_frac <= 1.0:
        raise ConfigError("threshold_frac must be in (0, 1]")
    profile = np.abs(response.bm).max(axis=0)
    if profile.max() == 0:
        raise NoResponse("no element ever responded")
    above = np.flatnonzero(profile >= threshold_frac * profile.max())
    return float(response.positions[above[0]]), float(response.positions[above[-1]])


def io_curve(
    frequency: float,
    spl_list,
    config: SimConfig,
    duration: float = 0.1,
    window_ms: float = 30.0,
) -> list[tuple[float, float]]:
    """Input SPL versus steady-state output power at the peak element.

    Output power is 20*log10 of the steady-state displacement magnitude
    at the element of maximum response (absolute level inherits the
    input-coupling calibration; differences and slopes do not).
    """
    out = []
    for spl in spl_list:
        if not 0.0 <= spl <= 140.0:
            raise ConfigError(f"SPL {spl} dB outside [0, 140]")
        stim = make_tone(config.fs, duration, frequency, spl)
        resp = simulate(stim.samples, config)
        profile = steady_state_profile(resp, frequency, window_ms=window_ms)
        out.append((float(spl), float(20.0 * np.log10(profile.max()))))
    return out
