"""Multichannel dereverberation by weighted prediction error.

Late reverberation in each frequency bin is modeled as a linear
prediction from delayed past STFT frames across all channels. The
predicted tail is subtracted, leaving the direct path and early
reflections. Estimation alternates between a per-bin power estimate
``lambda`` and the prediction filters ``G`` that are optimal for it,
which makes the surrogate objective :func:`wpe_objective` non-increasing
from iteration to iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import NumericalError, ParameterError
from .signal import ComplexSpectrogram

DEFAULT_PSD_FLOOR = 1e-10


@dataclass(frozen=True)
class WpeConfig:
    """Settings for :func:`wpe`.

    Parameters
    ----------
    taps : int
        Prediction filter length K per channel.
    delay : int
        Frames D skipped before the prediction history starts; keeps the
        direct path and early reflections out of the regression.
    iterations : int
        Alternations between power estimation and filter estimation.
    psd_floor : float
        Lower bound epsilon on the per-bin power estimate.
    diagonal_loading : float
        Relative Tikhonov term: delta = diagonal_loading * trace(R) / (C*K)
        is added to the correlation matrix before solving.
    """

    taps: int = 10
    delay: int = 3
    iterations: int = 3
    psd_floor: float = DEFAULT_PSD_FLOOR
    diagonal_loading: float = 1e-6

    def __post_init__(self):
        if self.taps < 1 or self.delay < 1 or self.iterations < 1:
            raise ParameterError(
                f"taps, delay, iterations must be >= 1, got "
                f"{self.taps}, {self.delay}, {self.iterations}"
            )
        if not self.psd_floor > 0:
            raise ParameterError(f"psd_floor must be > 0, got {self.psd_floor}")
        if self.diagonal_loading < 0:
            raise ParameterError(
                f"diagonal_loading must be >= 0, got {self.diagonal_loading}"
            )


def frame_powers(spec: ComplexSpectrogram, floor: float = DEFAULT_PSD_FLOOR) -> np.ndarray:
    """Channel-averaged magnitude-squared per bin, floored at ``floor``.

    Returns
    -------
    ndarray, shape (frames, bins)
    """
    if not floor > 0:
        raise ParameterError(f"floor must be > 0, got {floor}")
    power = np.mean(np.abs(spec.values) ** 2, axis=2)
    return np.maximum(power, floor)


def wpe_objective(
    x: ComplexSpectrogram,
    y: ComplexSpectrogram,
    powers: np.ndarray,
    floor: float = DEFAULT_PSD_FLOOR,
) -> float:
    """Maximum-likelihood surrogate descended by the WPE iteration.

    Computes sum over (t, f) of mean_c |y(t,f,c)|^2 / powers(t,f)
    + log powers(t,f).

    Parameters
    ----------
    x, y : ComplexSpectrogram
        Observation and dereverberated estimate; shapes must match.
    powers : ndarray, shape (frames, bins)
        Per-bin power estimate, every entry >= floor.
    floor : float
        The floor the powers were computed with.
    """
    if x.values.shape != y.values.shape:
        raise ParameterError(
            f"shape mismatch: x {x.values.shape} vs y {y.values.shape}"
        )
    lam = np.asarray(powers, dtype=np.float64)
    if lam.shape != (y.frames, y.bins):
        raise ParameterError(
            f"powers shape {lam.shape} does not match (frames, bins) = "
            f"({y.frames}, {y.bins})"
        )
    if np.any(lam < floor):
        raise ParameterError(f"powers below the floor {floor}")
    mean_mag2 = np.mean(np.abs(y.values) ** 2, axis=2)
    return float(np.sum(mean_mag2 / lam + np.log(lam)))


def _stack_history(x: np.ndarray, taps: int, delay: int) -> np.ndarray:
    """Delayed frame stack per frequency.

    Parameters
    ----------
    x : ndarray, shape (bins, channels, frames)

    Returns
    -------
    ndarray, shape (bins, channels * taps, frames)
        Row block k holds the frames delayed by ``delay + k``; frames
        before the start of the signal are zeros.
    """
    n_bins, n_ch, n_frames = x.shape
    out = np.zeros((n_bins, n_ch * taps, n_frames), dtype=x.dtype)
    for k in range(taps):
        d = delay + k
        if d < n_frames:
            out[:, k * n_ch : (k + 1) * n_ch, d:] = x[:, :, : n_frames - d]
    return out


def _solve_hermitian(r: np.ndarray, p: np.ndarray, bin_index: int) -> np.ndarray:
    """Solve r @ g = p for Hermitian r, Cholesky first, pivoted LDL after."""
    try:
        factor = sla.cho_factor(r, lower=True, check_finite=False)
        return sla.cho_solve(factor, p, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    try:
        lu, d, perm = sla.ldl(r, lower=True)
        tri = lu[perm]
        w = sla.solve_triangular(
            tri, p[perm], lower=True, unit_diagonal=True, check_finite=False
        )
        v = np.linalg.solve(d, w)
        h = sla.solve_triangular(
            tri, v, lower=True, unit_diagonal=True, trans="C", check_finite=False
        )
        g = np.empty_like(h)
        g[perm] = h
        return g
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(
            f"prediction filter solve failed in frequency bin {bin_index}"
        ) from exc


def wpe(spec: ComplexSpectrogram, cfg: WpeConfig = WpeConfig()) -> ComplexSpectrogram:
    """Dereverberate a multichannel spectrogram.

    Per frequency bin and iteration: estimate per-bin powers from the
    current output (the observation on the first pass), stack the frames
    delayed by ``delay .. delay + taps - 1`` across channels, form the
    power-weighted correlation matrix and cross-correlation, solve for
    the prediction filters, and subtract the prediction. The output has
    the same shape as the input.

    Raises
    ------
    ParameterError
        Too few frames to estimate filters (needs frames - delay >=
        channels * taps and frames > delay + taps).
    NumericalError
        A correlation matrix was singular despite loading.
    """
    n_frames, n_bins, n_ch = spec.values.shape
    ck = n_ch * cfg.taps
    if n_frames <= cfg.delay + cfg.taps or n_frames - cfg.delay < ck:
        raise ParameterError(
            f"{n_frames} frames are too few for taps={cfg.taps}, delay={cfg.delay}, "
            f"channels={n_ch}"
        )

    x = np.ascontiguousarray(np.transpose(spec.values, (1, 2, 0)))  # (F, C, T)
    history = _stack_history(x, cfg.taps, cfg.delay)  # (F, CK, T)
    y = x

    for _ in range(cfg.iterations):
        lam = np.maximum(np.mean(np.abs(y) ** 2, axis=1), cfg.psd_floor)  # (F, T)
        weighted = history / lam[:, None, :]
        r = np.einsum("fit,fjt->fij", weighted, history.conj())
        p = np.einsum("fit,fjt->fij", weighted, x.conj())

        g = np.empty((n_bins, ck, n_ch), dtype=np.complex128)
        for f in range(n_bins):
            trace = r[f].trace().real
            if trace <= 0.0:  # silent bin, nothing to predict
                g[f] = 0.0
                continue
            rf = r[f] + (cfg.diagonal_loading * trace / ck) * np.eye(ck)
            g[f] = _solve_hermitian(rf, p[f], f)
        y = x - np.einsum("fic,fit->fct", g.conj(), history)

    return ComplexSpectrogram(
        values=np.transpose(y, (2, 0, 1)),
        params=spec.params,
        sample_rate_hz=spec.sample_rate_hz,
        source_length=spec.source_length,
    )
