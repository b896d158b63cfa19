"""simkit/metrics.py"""

import numpy as np
from scipy.integrate import cumulative_trapezoid

from core.exceptions import GridMismatch, ZeroDenominator
from sysmodels.statespace import signal_norms


def _columns(signal):
    signal = np.asarray(signal, dtype=float)
    return signal[:, None] if signal.ndim == 1 else signal


def _matched(t, y, y_hat):
    t = np.asarray(t, dtype=float)
    y, y_hat = _columns(y), _columns(y_hat)
    if y.shape != y_hat.shape:
        raise GridMismatch(f"y has shape {y.shape}, y_hat has shape {y_hat.shape}")
    if y.shape[0] != t.size:
        raise GridMismatch(f"signals have {y.shape[0]} samples, grid has {t.size}")
    return t, y, y_hat


def _denominator(t, y, y_hat):
    energy = signal_norms(t, y).l2 ** 2 + signal_norms(t, y_hat).l2 ** 2
    if energy <= 0.0:
        raise ZeroDenominator("both outputs have zero energy")
    return float(np.sqrt(energy))


def empirical_rise(y, y_hat, t):
    """``|y - y_hat|_2 / sqrt(|y|_2^2 + |y_hat|_2^2)`` with trapezoidal norms."""
    t, y, y_hat = _matched(t, y, y_hat)
    return signal_norms(t, y - y_hat).l2 / _denominator(t, y, y_hat)


def empirical_sse(y, y_hat, t):
    """Sample sup of ``|y - y_hat|`` over the same joint-energy denominator."""
    t, y, y_hat = _matched(t, y, y_hat)
    return signal_norms(t, y - y_hat).linf / _denominator(t, y, y_hat)


def channel_rise(y, y_hat, t, index):
    """RISE of output ``index`` against the energy of every column of y and y_hat."""
    t, y, y_hat = _matched(t, y, y_hat)
    return signal_norms(t, y[:, index] - y_hat[:, index]).l2 / _denominator(t, y, y_hat)


def channel_sse(y, y_hat, t, index):
    t, y, y_hat = _matched(t, y, y_hat)
    return signal_norms(t, y[:, index] - y_hat[:, index]).linf / _denominator(t, y, y_hat)


def running_metrics(traj):
    """Both metrics evaluated on every prefix ``[0, t_k]``; zero while the denominator is."""
    t, y, y_hat = _matched(traj.t, traj.y, traj.y_hat)
    err = np.sum((y - y_hat) ** 2, axis=1)
    num = cumulative_trapezoid(err, t, initial=0.0)
    den = cumulative_trapezoid(np.sum(y**2, axis=1) + np.sum(y_hat**2, axis=1), t, initial=0.0)
    peak = np.maximum.accumulate(np.sqrt(err))
    root = np.sqrt(np.maximum(den, 0.0))
    positive = root > 0.0
    rise = np.zeros_like(t)
    sse = np.zeros_like(t)
    rise[positive] = np.sqrt(np.maximum(num[positive], 0.0)) / root[positive]
    sse[positive] = peak[positive] / root[positive]
    return rise, sse
