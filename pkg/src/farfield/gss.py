"""Guided source separation and mask-based MVDR beamforming.

A complex angular central Gaussian mixture model (CACGMM) is fit to the
direction statistics z = x / ||x|| of a multichannel spectrogram. The
mixture has one class per speaker plus an always-active noise class;
diarization-derived activity acts as a time-varying prior that pins each
class to its speaker, which resolves the per-frequency permutation
ambiguity without any alignment step. The resulting posterior masks
drive spatial covariance estimates for a Souden-style MVDR beamformer.

:func:`gss_enhance` chains the full per-segment recipe: cut a context
window, dereverberate, fit the mixture, beamform the target class, and
return the trimmed time-domain estimate.
"""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ParameterError, RangeError
from .metrics import DiarizationSet
from .signal import ComplexSpectrogram, StftParams, WaveformBuffer, istft, stft
from .wpe import WpeConfig, wpe

log = logging.getLogger(__name__)

_TRACE_FLOOR = 1e-10
_INIT_JITTER = 1e-3
_LOADING_STEP = 1e-6


@dataclass(frozen=True)
class ActivityPattern:
    """Per-class frame activity: S speaker rows plus a final noise row.

    Parameters
    ----------
    speakers : tuple of str
        Class labels for rows 0..S-1; row S is the noise class.
    active : ndarray of bool, shape (S + 1, frames)
        The noise row must be all true, so every frame has at least one
        active class.
    """

    speakers: tuple
    active: np.ndarray

    def __post_init__(self):
        act = np.asarray(self.active, dtype=bool)
        if act.ndim != 2 or act.shape[0] != len(self.speakers) + 1:
            raise ParameterError(
                f"active must be (speakers + 1) x frames, got {act.shape} for "
                f"{len(self.speakers)} speakers"
            )
        if not act[-1].all():
            raise ParameterError("noise class row must be active at every frame")
        object.__setattr__(self, "speakers", tuple(self.speakers))
        object.__setattr__(self, "active", act)

    @property
    def n_classes(self) -> int:
        return self.active.shape[0]

    @property
    def n_frames(self) -> int:
        return self.active.shape[1]

    def class_index(self, speaker: str) -> int:
        try:
            return self.speakers.index(speaker)
        except ValueError:
            raise ParameterError(f"unknown speaker {speaker!r}") from None


@dataclass(frozen=True)
class CacgmmState:
    """CACGMM parameters: one Hermitian matrix per (frequency, class).

    ``B`` has shape (bins, classes, channels, channels), every matrix
    trace-normalized to the channel count. ``log_likelihood_trace``
    holds the average log-likelihood recorded at the start of each EM
    iteration; it is non-decreasing up to the covariance floor.
    """

    B: np.ndarray
    log_likelihood_trace: tuple = ()

    def __post_init__(self):
        b = np.asarray(self.B, dtype=np.complex128)
        if b.ndim != 4 or b.shape[2] != b.shape[3]:
            raise ParameterError(f"B must be (bins, classes, C, C), got {b.shape}")
        herm = np.max(np.abs(b - np.conj(np.swapaxes(b, 2, 3))))
        scale = max(float(np.max(np.abs(b))), 1.0)
        if herm > 1e-10 * scale:
            raise ParameterError(f"B not Hermitian within tolerance: deviation {herm:.3e}")
        object.__setattr__(self, "B", b)
        object.__setattr__(
            self, "log_likelihood_trace", tuple(float(v) for v in self.log_likelihood_trace)
        )


@dataclass(frozen=True)
class MaskSet:
    """Posterior masks gamma, shape (classes, frames, bins), simplex per bin."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=np.float64)
        if g.ndim != 3:
            raise ParameterError(f"gamma must be (classes, frames, bins), got {g.shape}")
        if np.any(g < 0.0) or np.any(g > 1.0 + 1e-12):
            raise ParameterError("gamma entries must lie in [0, 1]")
        if np.max(np.abs(g.sum(axis=0) - 1.0)) > 1e-9:
            raise ParameterError("gamma must sum to 1 over classes at every bin")
        object.__setattr__(self, "gamma", g)

    @property
    def n_classes(self) -> int:
        return self.gamma.shape[0]


@dataclass(frozen=True)
class BeamformerWeights:
    """MVDR solution: one complex weight vector per frequency bin."""

    w: np.ndarray  # (bins, channels)
    reference_channel: int

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.complex128)
        if w.ndim != 2:
            raise ParameterError(f"w must be (bins, channels), got {w.shape}")
        if not np.all(np.isfinite(w.view(np.float64))):
            raise ParameterError("beamformer weights must be finite")
        if not 0 <= self.reference_channel < w.shape[1]:
            raise ParameterError(
                f"reference channel {self.reference_channel} out of range"
            )
        object.__setattr__(self, "w", w)


def _unit_directions(values: np.ndarray):
    """Normalize bins to unit vectors; returns (z, nonzero mask) over (T, F)."""
    norm = np.linalg.norm(values, axis=2)
    nonzero = norm > 0.0
    z = np.where(nonzero[:, :, None], values / np.where(nonzero, norm, 1.0)[:, :, None], 0.0)
    return z, nonzero


def _log_densities(z: np.ndarray, b: np.ndarray):
    """Per-class log densities of unit vectors under the angular Gaussian.

    Parameters
    ----------
    z : ndarray, (frames, bins, channels)
    b : ndarray, (bins, classes, channels, channels)

    Returns
    -------
    log_dens : ndarray, (classes, frames, bins) up to the class-independent
        normalizing constant.
    quad : ndarray, (classes, frames, bins), the forms z^H B^{-1} z.
    """
    n_classes = b.shape[1]
    c = b.shape[2]
    log_dens = np.empty((n_classes, z.shape[0], z.shape[1]))
    quad = np.empty_like(log_dens)
    for k in range(n_classes):
        bk = b[:, k]
        sign, logdet = np.linalg.slogdet(bk)
        if np.any(sign.real <= 0) or not np.all(np.isfinite(logdet)):
            raise NumericalError(f"class {k} covariance is not positive definite")
        binv = np.linalg.inv(bk)  # (F, C, C)
        q = np.einsum("tfc,fcd,tfd->tf", z.conj(), binv, z).real
        q = np.maximum(q, 1e-30)  # exact arithmetic guarantees q >= 1/C
        quad[k] = q
        log_dens[k] = -logdet[None, :] - c * np.log(q)
    return log_dens, quad


def _posterior_from_logits(log_dens, activity, nonzero):
    """Normalize active-class logits into masks; exact zeros when inactive."""
    neg_inf = -np.inf
    logits = np.where(activity[:, :, None], log_dens, neg_inf)
    top = np.max(logits, axis=0)
    stable = np.exp(logits - top[None, :, :])
    total = stable.sum(axis=0)
    gamma = stable / total[None, :, :]
    # zero-norm bins carry no direction information: uniform over active
    n_active = activity.sum(axis=0).astype(np.float64)
    uniform = activity[:, :, None].astype(np.float64) / n_active[None, :, None]
    gamma = np.where(nonzero[None, :, :], gamma, uniform)
    return gamma


def cacgmm_posteriors(
    spec: ComplexSpectrogram, activity: ActivityPattern, state: CacgmmState
) -> MaskSet:
    """E-step: posterior class masks for every time-frequency bin.

    The unnormalized posterior of class k at bin (t, f) is
    1[active(k, t)] * det(B_{f,k})^{-1} * (z^H B_{f,k}^{-1} z)^{-C} with
    z the unit-normalized observation. Bins with zero norm receive the
    uniform posterior over the classes active at their frame.
    """
    _check_alignment(spec, activity, state)
    z, nonzero = _unit_directions(spec.values)
    log_dens, _ = _log_densities(z, state.B)
    gamma = _posterior_from_logits(log_dens, activity.active, nonzero)
    return MaskSet(gamma=gamma)


def _check_alignment(spec, activity, state):
    if activity.n_frames != spec.frames:
        raise ParameterError(
            f"activity covers {activity.n_frames} frames, spectrogram has {spec.frames}"
        )
    if state is not None:
        f, k, c, _ = state.B.shape
        if f != spec.bins or c != spec.channels or k != activity.n_classes:
            raise ParameterError(
                f"state B shape {state.B.shape} inconsistent with spectrogram "
                f"({spec.bins} bins, {spec.channels} channels) and "
                f"{activity.n_classes} classes"
            )


def _average_log_likelihood(log_dens, activity, nonzero, n_ch):
    """Mean over bins of log sum_k prior_k * density_k, constants included."""
    from scipy.special import gammaln, logsumexp

    n_active = activity.sum(axis=0).astype(np.float64)
    logits = np.where(
        activity[:, :, None], log_dens - np.log(n_active)[None, :, None], -np.inf
    )
    ll = logsumexp(logits, axis=0)
    const = gammaln(n_ch) - n_ch * np.log(np.pi) - np.log(2.0)
    valid = nonzero  # zero bins have no defined direction, skip them
    if not np.any(valid):
        return float(const)
    return float(np.mean(ll[valid]) + const)


def fit_cacgmm(
    spec: ComplexSpectrogram,
    activity: ActivityPattern,
    iterations: int = 20,
    seed: int = 0,
) -> tuple:
    """EM fit of the activity-guided CACGMM.

    Covariances start at the identity plus a small seeded Hermitian
    perturbation (scale 1e-3) that breaks the symmetry between classes
    whose activity rows coincide; with exact identity for every class
    the EM would start in a stationary point and never separate them.
    Each M-step re-estimates B from the posterior-weighted direction
    statistics, trace-normalizes to the channel count, and adds
    1e-10 * C to the diagonal.

    Returns
    -------
    (CacgmmState, MaskSet)
        Final parameters with one average log-likelihood entry per
        iteration, and the masks of a final E-step under them.
    """
    if iterations < 1:
        raise ParameterError(f"iterations must be >= 1, got {iterations}")
    _check_alignment(spec, activity, None)
    n_frames, n_bins, n_ch = spec.values.shape
    n_classes = activity.n_classes
    eps_b = 1e-10 * n_ch

    rng = np.random.default_rng(seed)
    jitter = rng.standard_normal((n_bins, n_classes, n_ch, n_ch)) + 1j * rng.standard_normal(
        (n_bins, n_classes, n_ch, n_ch)
    )
    jitter = jitter @ np.conj(np.swapaxes(jitter, 2, 3))
    jitter *= n_ch / np.trace(jitter, axis1=2, axis2=3).real[:, :, None, None]
    eye = np.eye(n_ch)
    b = (1.0 - _INIT_JITTER) * eye[None, None] + _INIT_JITTER * jitter

    z, nonzero = _unit_directions(spec.values)
    act = activity.active
    ever_active = act.any(axis=1)
    trace = []

    for _ in range(iterations):
        log_dens, quad = _log_densities(z, b)
        trace.append(_average_log_likelihood(log_dens, act, nonzero, n_ch))
        gamma = _posterior_from_logits(log_dens, act, nonzero)
        # zero-norm bins contribute no direction statistics
        weights = gamma * nonzero[None, :, :]
        for k in range(n_classes):
            if not ever_active[k]:
                continue  # keeps its initial covariance, masks stay zero
            wk = weights[k] / quad[k]  # (T, F)
            denom = weights[k].sum(axis=0)  # (F,)
            numer = np.einsum("tf,tfc,tfd->fcd", wk, z, z.conj())
            ok = denom > 0.0
            bk = b[:, k].copy()
            bk[ok] = n_ch * numer[ok] / denom[ok, None, None]
            bk = 0.5 * (bk + np.conj(np.swapaxes(bk, 1, 2)))
            tr = np.trace(bk, axis1=1, axis2=2).real
            tr = np.where(tr > 0.0, tr, 1.0)
            bk = bk * (n_ch / tr)[:, None, None] + eps_b * eye[None]
            b[:, k] = bk

    state = CacgmmState(B=b, log_likelihood_trace=tuple(trace))
    return state, cacgmm_posteriors(spec, activity, state)


def spatial_covariance(spec: ComplexSpectrogram, weights: np.ndarray) -> np.ndarray:
    """Mask-weighted spatial covariance matrices, one per frequency.

    Parameters
    ----------
    weights : ndarray, shape (frames, bins)
        Nonnegative bin weights, typically a posterior mask.

    Returns
    -------
    ndarray, shape (bins, channels, channels)
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (spec.frames, spec.bins):
        raise ParameterError(
            f"weights shape {w.shape} does not match (frames, bins)"
        )
    totals = w.sum(axis=0)
    if np.any(totals <= 0.0):
        raise ParameterError("weights sum to zero in at least one frequency bin")
    phi = np.einsum("tf,tfc,tfd->fcd", w, spec.values, np.conj(spec.values))
    return phi / totals[:, None, None]


def select_reference_channel(phi_ss: np.ndarray, phi_nn: np.ndarray) -> int:
    """Channel with the best aggregate target-to-noise power ratio.

    Scores channel c by sum over f of Phi_ss[f, c, c] / (Phi_nn[f, c, c]
    + 1e-10); ties resolve to the lowest index.
    """
    ss = np.asarray(phi_ss)
    nn = np.asarray(phi_nn)
    if ss.shape != nn.shape or ss.ndim != 3 or ss.shape[1] != ss.shape[2]:
        raise ParameterError(f"covariance stacks must match, got {ss.shape} and {nn.shape}")
    diag_ss = np.einsum("fcc->fc", ss).real
    diag_nn = np.einsum("fcc->fc", nn).real
    scores = np.sum(diag_ss / (diag_nn + _TRACE_FLOOR), axis=0)
    return int(np.argmax(scores))


def mvdr_weights(
    phi_ss: np.ndarray,
    phi_nn: np.ndarray,
    reference_channel: int | None = None,
    weight_cap: float = 1e4,
) -> BeamformerWeights:
    """Souden MVDR weights from target and noise covariances.

    w_f = (Phi_nn^{-1} Phi_ss u_ref) / max(trace(Phi_nn^{-1} Phi_ss), eps).
    A singular noise covariance is diagonally loaded once and retried;
    if it stays singular a numerical error names the bin. Weight vectors
    longer than ``weight_cap`` are rescaled onto the cap.
    """
    ss = np.asarray(phi_ss, dtype=np.complex128)
    nn = np.asarray(phi_nn, dtype=np.complex128)
    if ss.shape != nn.shape or ss.ndim != 3:
        raise ParameterError(f"covariance stacks must match, got {ss.shape} and {nn.shape}")
    n_bins, n_ch, _ = ss.shape
    if reference_channel is None:
        reference_channel = select_reference_channel(ss, nn)
    if not 0 <= reference_channel < n_ch:
        raise ParameterError(f"reference channel {reference_channel} out of range")

    w = np.empty((n_bins, n_ch), dtype=np.complex128)
    for f in range(n_bins):
        try:
            numer = np.linalg.solve(nn[f], ss[f])
        except np.linalg.LinAlgError:
            load = max(_LOADING_STEP * nn[f].trace().real / n_ch, _TRACE_FLOOR)
            try:
                numer = np.linalg.solve(nn[f] + load * np.eye(n_ch), ss[f])
            except np.linalg.LinAlgError as exc:
                raise NumericalError(
                    f"noise covariance singular in frequency bin {f}"
                ) from exc
        w[f] = numer[:, reference_channel] / max(numer.trace().real, _TRACE_FLOOR)

    norms = np.linalg.norm(w, axis=1)
    over = norms > weight_cap
    if np.any(over):
        w[over] *= (weight_cap / norms[over])[:, None]
    return BeamformerWeights(w=w, reference_channel=int(reference_channel))


def mvdr_beamform(
    spec: ComplexSpectrogram,
    masks: MaskSet,
    target_class: int,
    reference_channel: int | None = None,
    weight_cap: float = 1e4,
) -> ComplexSpectrogram:
    """Beamform one class of a masked mixture down to a single channel.

    Target and noise covariances are estimated from the class mask and
    its complement (the other classes pooled), then the Souden MVDR
    weights are applied: y(t, f) = w_f^H x(t, f).
    """
    if masks.gamma.shape[1:] != (spec.frames, spec.bins):
        raise ParameterError("masks do not match the spectrogram grid")
    if not 0 <= target_class < masks.n_classes:
        raise ParameterError(f"target class {target_class} out of range")
    gamma = masks.gamma[target_class]
    phi_ss = spatial_covariance(spec, gamma)
    phi_nn = spatial_covariance(spec, 1.0 - gamma)
    weights = mvdr_weights(phi_ss, phi_nn, reference_channel, weight_cap)
    y = np.einsum("fc,tfc->tf", np.conj(weights.w), spec.values)
    return ComplexSpectrogram(
        values=y[:, :, None],
        params=spec.params,
        sample_rate_hz=spec.sample_rate_hz,
        source_length=spec.source_length,
    )


@dataclass(frozen=True)
class GssConfig:
    """Settings for the end-to-end per-segment enhancement recipe."""

    stft: StftParams = StftParams()
    wpe: WpeConfig | None = WpeConfig()
    em_iterations: int = 20
    context_s: float = 15.0
    masking_postfilter: bool = False
    mask_floor: float = 0.1
    weight_cap: float = 1e4
    seed: int = 0

    def __post_init__(self):
        if self.em_iterations < 1:
            raise ParameterError("em_iterations must be >= 1")
        if self.context_s < 0:
            raise ParameterError("context_s must be >= 0")
        if not 0.0 <= self.mask_floor <= 1.0:
            raise ParameterError("mask_floor must lie in [0, 1]")


def segment_seed(base_seed: int, speaker: str, start_ms: int, end_ms: int) -> int:
    """Stable per-segment seed, independent of processing order."""
    tag = f"{speaker}|{start_ms}|{end_ms}".encode()
    return (base_seed * 1000003 + zlib.crc32(tag)) % (2**63)


def eligible_segments(
    segments: DiarizationSet, stft_params: StftParams, n_samples: int, sample_rate_hz: int
) -> list:
    """Segments that enhancement will produce output for, in time order.

    Segments extending outside the file raise a range error; segments
    shorter than one analysis frame are dropped with a warning. The
    returned list of (speaker, start_s, end_s) defines the output order
    shared by :func:`gss_enhance` and the command-line wrapper.
    """
    sessions = {s.session for s in segments.segments}
    if len(sessions) > 1:
        raise ParameterError(f"segments span multiple sessions: {sorted(sessions)}")
    duration = n_samples / sample_rate_hz
    kept = []
    for seg in sorted(segments.segments, key=lambda s: (s.start_s, s.end_s, s.speaker)):
        if seg.start_s < 0 or seg.end_s > duration + 1e-9:
            raise RangeError(
                f"segment {seg.speaker} [{seg.start_s}, {seg.end_s}] outside the "
                f"{duration:.3f} s file"
            )
        if (seg.end_s - seg.start_s) * sample_rate_hz < stft_params.frame_length:
            log.warning(
                "skipping segment %s [%.3f, %.3f]: shorter than one frame",
                seg.speaker,
                seg.start_s,
                seg.end_s,
            )
            continue
        kept.append((seg.speaker, seg.start_s, seg.end_s))
    return kept


def _window_activity(
    window_segments, speakers, win_start_s, n_frames, p: StftParams, rate: int
) -> ActivityPattern:
    """Frame activity of each speaker inside an analysis window."""
    active = np.zeros((len(speakers) + 1, n_frames), dtype=bool)
    active[-1] = True
    starts = np.arange(n_frames) * p.frame_shift - p.edge_padding
    ends = starts + p.frame_length
    for seg in window_segments:
        k = speakers.index(seg.speaker)
        a = (seg.start_s - win_start_s) * rate
        b = (seg.end_s - win_start_s) * rate
        active[k] |= (ends > a) & (starts < b)
    return ActivityPattern(speakers=tuple(speakers), active=active)


def gss_enhance(wav: WaveformBuffer, segments: DiarizationSet, cfg: GssConfig) -> dict:
    """Enhance every diarized segment of a session recording.

    For each target segment: cut the segment plus ``cfg.context_s`` of
    context each side (clipped to the file), dereverberate, build the
    activity pattern from all segments overlapping the window, fit the
    guided mixture model, beamform the target class, optionally apply
    the mask postfilter, synthesize, and trim the context away.

    Returns
    -------
    dict
        speaker -> list of mono WaveformBuffer, in segment time order
        (the order of :func:`eligible_segments`).
    """
    out: dict = {}
    if not segments.segments:
        return out
    rate = wav.sample_rate_hz
    todo = eligible_segments(segments, cfg.stft, wav.n_samples, rate)
    for speaker, start_s, end_s in todo:
        win_start = max(0.0, start_s - cfg.context_s)
        win_end = min(wav.n_samples / rate, end_s + cfg.context_s)
        lo = int(round(win_start * rate))
        hi = int(round(win_end * rate))
        chunk = WaveformBuffer(wav.samples[:, lo:hi], rate)

        spec = stft(chunk, cfg.stft)
        if cfg.wpe is not None:
            spec = wpe(spec, cfg.wpe)

        overlapping = [
            s
            for s in segments.segments
            if s.end_s > win_start and s.start_s < win_end
        ]
        speakers = sorted({s.speaker for s in overlapping})
        activity = _window_activity(
            overlapping, speakers, win_start, spec.frames, cfg.stft, rate
        )
        seed = segment_seed(
            cfg.seed, speaker, int(round(start_s * 1000)), int(round(end_s * 1000))
        )
        _, masks = fit_cacgmm(spec, activity, cfg.em_iterations, seed)
        target = speakers.index(speaker)
        enhanced = mvdr_beamform(spec, masks, target, weight_cap=cfg.weight_cap)
        if cfg.masking_postfilter:
            post = np.maximum(masks.gamma[target], cfg.mask_floor)
            enhanced = ComplexSpectrogram(
                values=enhanced.values * post[:, :, None],
                params=enhanced.params,
                sample_rate_hz=enhanced.sample_rate_hz,
                source_length=enhanced.source_length,
            )
        audio = istft(enhanced, cfg.stft, hi - lo)
        a = int(round(start_s * rate)) - lo
        b = int(round(end_s * rate)) - lo
        piece = WaveformBuffer(audio.samples[:, a:b], rate)
        out.setdefault(speaker, []).append(piece)
    return out
