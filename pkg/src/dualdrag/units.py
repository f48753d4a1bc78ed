"""Unit conversion at the package boundary.

Internally every frequency is an angular frequency in rad/ns and every time
is in ns. Config files and exported tables use MHz / GHz.
"""

import numpy as np

TWO_PI = 2.0 * np.pi


def mhz(f):
    """MHz -> rad/ns."""
    return TWO_PI * np.asarray(f, dtype=float) / 1e3 if np.ndim(f) else TWO_PI * float(f) / 1e3


def ghz(f):
    """GHz -> rad/ns."""
    return TWO_PI * np.asarray(f, dtype=float) if np.ndim(f) else TWO_PI * float(f)


def to_mhz(w):
    """rad/ns -> MHz."""
    return np.asarray(w, dtype=float) * 1e3 / TWO_PI if np.ndim(w) else float(w) * 1e3 / TWO_PI


def to_ghz(w):
    """rad/ns -> GHz."""
    return np.asarray(w, dtype=float) / TWO_PI if np.ndim(w) else float(w) / TWO_PI
