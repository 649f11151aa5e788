"""Multi-channel discriminative correlation filter in the Fourier domain.

The filter is stored split into per-channel numerators ``N = F conj(X)`` and
a shared real denominator ``D = sum_k |X_k|^2``; the response to a new sample
``z`` is ``ifft(sum_l N_l Z_l / (D + lambda))``. This is exactly ridge
regression with circular cross-correlation ``y[n] = sum_m h[m] z[m + n]``
(checked against a spatial brute-force solver in the tests).

Feature maps are channel-first arrays: ``(d, n)`` for 1-D filters and
``(d, h, w)`` for 2-D filters. Labels have the spatial shape only.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class DcfModel:
    numerators: np.ndarray      # complex, (d, *shape)
    denominator: np.ndarray     # real, shape
    label_spectrum: np.ndarray  # complex, shape
    lam: float = 0.01
    eta: float = 0.025

    @property
    def shape(self) -> tuple[int, ...]:
        return self.denominator.shape

    @property
    def ndim(self) -> int:
        return self.denominator.ndim


def _fft(a: np.ndarray, ndim: int) -> np.ndarray:
    axes = tuple(range(-ndim, 0))
    return np.fft.fftn(a, axes=axes)


def _terms(x: np.ndarray, label_spectrum: np.ndarray):
    X = _fft(x, label_spectrum.ndim)
    num = label_spectrum[None] * np.conj(X)
    den = (X.real ** 2 + X.imag ** 2).sum(axis=0)
    return num, den


def _check_features(x: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == len(shape):
        x = x[None]
    if x.ndim != len(shape) + 1 or x.shape[1:] != tuple(shape):
        raise ValueError(f"feature map shape {x.shape} does not match label shape {shape}")
    return x


def train_init(x, label, lam: float = 0.01, eta: float = 0.025) -> DcfModel:
    label = np.asarray(label, dtype=float)
    x = _check_features(x, label.shape)
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    F = _fft(label, label.ndim)
    num, den = _terms(x, F)
    return DcfModel(num, den, F, float(lam), float(eta))


def update(m: DcfModel, x, eta: float | None = None) -> DcfModel:
    """Exponential moving average of numerator and denominator with rate ``eta``."""
    eta = m.eta if eta is None else float(eta)
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"learning rate must be in (0, 1], got {eta}")
    x = _check_features(x, m.shape)
    if x.shape[0] != m.numerators.shape[0]:
        raise ValueError(f"expected {m.numerators.shape[0]} channels, got {x.shape[0]}")
    num, den = _terms(x, m.label_spectrum)
    return replace(m, numerators=(1 - eta) * m.numerators + eta * num,
                   denominator=(1 - eta) * m.denominator + eta * den)


def respond(m: DcfModel, z) -> np.ndarray:
    z = _check_features(z, m.shape)
    if z.shape[0] != m.numerators.shape[0]:
        raise ValueError(f"expected {m.numerators.shape[0]} channels, got {z.shape[0]}")
    Z = _fft(z, m.ndim)
    spec = (m.numerators * Z).sum(axis=0) / (m.denominator + m.lam)
    return np.fft.ifftn(spec, axes=tuple(range(-m.ndim, 0))).real


def _parabola_offset(l: float, c: float, r: float) -> float:
    den = l - 2.0 * c + r
    if den >= 0:
        return 0.0
    return (l - r) / (2.0 * den)


def peak_locate(response) -> tuple[np.ndarray, float]:
    """Sub-bin peak as signed circular shifts per axis, plus the peak value.

    Ties go to the lowest linear index. Each axis is refined by a parabola
    through the peak and its two circular neighbours; shifts wrap into
    ``(-n/2, n/2]``.
    """
    r = np.asarray(response, dtype=float)
    if r.size == 0:
        raise ValueError("empty response")
    idx = np.unravel_index(int(np.argmax(r)), r.shape)
    peak = float(r[idx])
    pos = np.empty(r.ndim)
    for ax, n in enumerate(r.shape):
        off = 0.0
        if n >= 3:
            lo = list(idx)
            hi = list(idx)
            lo[ax] = (idx[ax] - 1) % n
            hi[ax] = (idx[ax] + 1) % n
            off = _parabola_offset(r[tuple(lo)], peak, r[tuple(hi)])
        p = idx[ax] + off
        if p > n / 2:
            p -= n
        pos[ax] = p
    return pos, peak
