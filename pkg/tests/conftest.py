"""Shared fixtures and helpers for the test suite."""

import numpy as np
import pytest
from scipy import signal

from cochlear_sim.params import PhysicalConstants


@pytest.fixture
def small_constants():
    """A grid small enough for dense brute-force linear algebra."""
    return PhysicalConstants(N=8)


@pytest.fixture
def desk_constants():
    """Desk-scale grid; the reduced feedback gain keeps it stable."""
    return PhysicalConstants(N=120, gamma=0.6)


def synth_vowel(formants, fs=16000.0, dur=0.1, f0=120.0):
    """Impulse train through two-pole formant resonators, Hann-shaped."""
    n = int(fs * dur)
    x = np.zeros(n)
    x[:: int(round(fs / f0))] = 1.0
    for fc, bw in formants:
        r = np.exp(-np.pi * bw / fs)
        th = 2 * np.pi * fc / fs
        b = [1 - 2 * r * np.cos(th) + r * r]
        a = [1, -2 * r * np.cos(th), r * r]
        x = signal.lfilter(b, a, x)
    return x * np.hanning(n)


VOWEL_FORMANTS = {
    "iy": [(270, 60), (2290, 90)],
    "eh": [(530, 60), (1840, 90)],
    "ae": [(660, 70), (1720, 100)],
    "aa": [(730, 70), (1090, 80)],
    "uw": [(300, 60), (870, 80)],
}
