"""Meeting-audio simulation with ground truth.

Shoebox room impulse responses come from the image-source model: every
mirror image up to a reflection order contributes an attenuated,
fractionally delayed spike. Dry utterances are convolved with their
RIRs, placed at onsets, summed, and optionally mixed with noise at a
target SNR. The returned bundle keeps the per-source reverberant images
and the exact noise component, so enhancement tests can measure
separation quality against known ground truth, and the mixture equals
the sum of the returned parts bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import ParameterError
from .metrics import DiarizationSet, DiarSegment
from .signal import WaveformBuffer

_SINC_HALF = 40  # 81-tap fractional-delay interpolator
_SEG_WIN_S = 0.025
_SEG_HOP_S = 0.010
_SEG_THRESHOLD = 10.0 ** (-40.0 / 20.0)  # -40 dBFS frame RMS
_SEG_MERGE_GAP_S = 0.3


def _check_inside(name: str, pos, dims) -> np.ndarray:
    p = np.asarray(pos, dtype=np.float64).reshape(-1)
    if p.shape != (3,):
        raise ParameterError(f"{name} must be a 3-vector, got shape {p.shape}")
    if np.any(p <= 0.0) or np.any(p >= dims):
        raise ParameterError(f"{name} = {p.tolist()} is not strictly inside the room")
    return p


@dataclass(frozen=True)
class RoomSpec:
    """Shoebox room with uniform wall absorption.

    Parameters
    ----------
    dimensions : (Lx, Ly, Lz) meters, all positive.
    absorption : wall energy absorption in (0, 1]; the per-bounce
        amplitude factor is (1 - absorption).
    max_order : highest total reflection count simulated.
    sample_rate_hz : output RIR sampling rate.
    source_positions, mic_positions : 3-vectors strictly inside the room.
    speed_of_sound : meters per second.
    """

    dimensions: tuple
    absorption: float
    max_order: int
    sample_rate_hz: int
    source_positions: tuple
    mic_positions: tuple
    speed_of_sound: float = 343.0

    def __post_init__(self):
        dims = np.asarray(self.dimensions, dtype=np.float64).reshape(-1)
        if dims.shape != (3,) or np.any(dims <= 0.0):
            raise ParameterError(f"dimensions must be 3 positive lengths, got {self.dimensions}")
        if not 0.0 < self.absorption <= 1.0:
            raise ParameterError(f"absorption must lie in (0, 1], got {self.absorption}")
        if self.max_order < 0:
            raise ParameterError(f"max_order must be >= 0, got {self.max_order}")
        if int(self.sample_rate_hz) <= 0:
            raise ParameterError(f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")
        if not self.speed_of_sound > 0:
            raise ParameterError(f"speed_of_sound must be > 0, got {self.speed_of_sound}")
        if not self.source_positions:
            raise ParameterError("source_positions must not be empty")
        if not self.mic_positions:
            raise ParameterError("mic_positions must not be empty")
        srcs = tuple(
            tuple(_check_inside(f"source_positions[{i}]", p, dims))
            for i, p in enumerate(self.source_positions)
        )
        mics = tuple(
            tuple(_check_inside(f"mic_positions[{i}]", p, dims))
            for i, p in enumerate(self.mic_positions)
        )
        object.__setattr__(self, "dimensions", tuple(dims))
        object.__setattr__(self, "source_positions", srcs)
        object.__setattr__(self, "mic_positions", mics)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))


def image_sources(room: RoomSpec, src: int, mic: int) -> tuple:
    """Image expansion of one source as seen from one microphone.

    Returns
    -------
    (delays, amplitudes, orders)
        Parallel arrays sorted by delay: arrival time in samples
        (fractional), amplitude (1 - absorption)^order / (4 pi dist),
        and the total reflection count of each image.
    """
    s = np.asarray(room.source_positions[src])
    m = np.asarray(room.mic_positions[mic])
    if np.allclose(s, m):
        raise ParameterError("source and microphone coincide")
    dims = np.asarray(room.dimensions)
    n = room.max_order
    reflect = 1.0 - room.absorption

    delays, amps, orders = [], [], []
    span = range(-n, n + 2)
    for p in product((0, 1), repeat=3):
        for r in product(span, repeat=3):
            order = sum(abs(r[d] - p[d]) + abs(r[d]) for d in range(3))
            if order > n:
                continue
            pos = (1.0 - 2.0 * np.asarray(p)) * s + 2.0 * np.asarray(r) * dims
            dist = float(np.linalg.norm(pos - m))
            delays.append(dist / room.speed_of_sound * room.sample_rate_hz)
            amps.append(reflect**order / (4.0 * math.pi * dist))
            orders.append(order)
    idx = np.argsort(delays, kind="stable")
    return (
        np.asarray(delays)[idx],
        np.asarray(amps)[idx],
        np.asarray(orders, dtype=np.int64)[idx],
    )


def image_source_rir(room: RoomSpec, src: int, mic: int) -> np.ndarray:
    """Room impulse response between one source and one microphone.

    Each image contributes amplitude * sinc(n - delay) under an 81-tap
    Hann window centered on the fractional delay; an image at an integer
    delay is therefore an exact single-sample spike.
    """
    delays, amps, _ = image_sources(room, src, mic)
    length = int(math.ceil(delays.max())) + _SINC_HALF + 2
    h = np.zeros(length)
    for t, a in zip(delays, amps):
        lo = max(0, int(math.ceil(t)) - _SINC_HALF)
        hi = min(length, int(math.floor(t)) + _SINC_HALF + 1)
        n = np.arange(lo, hi)
        x = n - t
        window = 0.5 + 0.5 * np.cos(np.pi * x / (_SINC_HALF + 1))
        h[lo:hi] += a * np.sinc(x) * window
    return h


def convolve(dry: WaveformBuffer, rir: np.ndarray) -> WaveformBuffer:
    """Full linear convolution of a mono waveform with an impulse response."""
    if dry.channels != 1:
        raise ParameterError(f"expected mono input, got {dry.channels} channels")
    kernel = np.asarray(rir, dtype=np.float64).reshape(-1)
    out = np.convolve(dry.samples[0], kernel)
    return WaveformBuffer(samples=out[np.newaxis, :], sample_rate_hz=dry.sample_rate_hz)


def _power(x: np.ndarray) -> float:
    return float(np.mean(np.square(x)))


def _match_channels(noise: WaveformBuffer, channels: int) -> np.ndarray:
    if noise.channels == channels:
        return noise.samples
    if noise.channels == 1:
        return np.broadcast_to(noise.samples, (channels, noise.n_samples))
    raise ParameterError(
        f"noise has {noise.channels} channels, expected 1 or {channels}"
    )


def add_noise_at_snr(
    clean: WaveformBuffer, noise: WaveformBuffer, snr_db: float, seed: int = 0
) -> WaveformBuffer:
    """Mix a randomly cropped noise into a signal at an exact average SNR.

    The crop offset is drawn from ``seed``; the noise is scaled so that
    10 log10(P_clean / P_noise) equals ``snr_db`` with powers averaged
    over the full extent and all channels.
    """
    if noise.n_samples < clean.n_samples:
        raise ParameterError(
            f"noise ({noise.n_samples}) shorter than clean ({clean.n_samples})"
        )
    if noise.sample_rate_hz != clean.sample_rate_hz:
        raise ParameterError("sample rates differ between clean and noise")
    samples = _match_channels(noise, clean.channels)
    rng = np.random.default_rng(seed)
    offset = int(rng.integers(0, noise.n_samples - clean.n_samples + 1))
    crop = samples[:, offset : offset + clean.n_samples]
    p_clean = _power(clean.samples)
    p_noise = _power(crop)
    if p_clean == 0.0:
        raise ParameterError("clean signal has zero power")
    if p_noise == 0.0:
        raise ParameterError("noise crop has zero power")
    scale = math.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    return WaveformBuffer(
        samples=clean.samples + scale * crop, sample_rate_hz=clean.sample_rate_hz
    )


@dataclass(frozen=True)
class PlannedSource:
    speaker: str
    audio: WaveformBuffer
    onset_s: float = 0.0

    def __post_init__(self):
        if self.onset_s < 0:
            raise ParameterError(f"onset must be >= 0, got {self.onset_s}")
        if self.audio.channels != 1:
            raise ParameterError("planned sources must be mono")


@dataclass(frozen=True)
class MixturePlan:
    """What to mix: dry sources with onsets, plus an optional noise floor.

    ``noise=None`` with an ``snr_db`` uses seeded white Gaussian noise;
    ``snr_db=None`` disables noise entirely.
    """

    sources: tuple
    snr_db: float | None = None
    noise: WaveformBuffer | None = None
    seed: int = 0
    session: str = "sim0"

    def __post_init__(self):
        if not self.sources:
            raise ParameterError("plan needs at least one source")
        if self.noise is not None and self.snr_db is None:
            raise ParameterError("snr_db is required when a noise source is given")
        object.__setattr__(self, "sources", tuple(self.sources))


@dataclass(frozen=True)
class MeetingResult:
    """Simulated mixture with its ground truth.

    The mixture equals sum of images plus noise exactly (same floats).
    """

    mixture: WaveformBuffer
    reference: DiarizationSet
    images: dict  # speaker -> WaveformBuffer (mics x samples)
    noise: WaveformBuffer | None


def _dry_segments(source: PlannedSource, session: str, rate: int) -> list:
    """Energy-gated speech segments of a dry source, onset applied."""
    win = int(round(_SEG_WIN_S * rate))
    hop = int(round(_SEG_HOP_S * rate))
    x = source.audio.samples[0]
    if x.size < win:
        return []
    n_frames = 1 + (x.size - win) // hop
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    rms = np.sqrt(np.mean(np.square(x[idx]), axis=1))
    active = rms > _SEG_THRESHOLD
    runs = []
    start = None
    for i, flag in enumerate(active):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, n_frames - 1))
    merged = []
    for a, b in runs:
        if merged and a * hop - (merged[-1][1] * hop + win) < _SEG_MERGE_GAP_S * rate:
            merged[-1] = (merged[-1][0], b)
        else:
            merged.append((a, b))
    out = []
    for a, b in merged:
        t0 = source.onset_s + a * hop / rate
        t1 = source.onset_s + min(b * hop + win, x.size) / rate
        out.append(DiarSegment(session, source.speaker, t0, t1))
    return out


def make_meeting(plan: MixturePlan, room: RoomSpec) -> MeetingResult:
    """Render a multichannel meeting mixture with ground truth.

    Every dry source is convolved with its RIR to every microphone and
    placed at its onset; the per-source images are summed and noise is
    added at the requested SNR. Reference segments come from the dry
    sources' frame energy. Deterministic given ``plan.seed``.
    """
    rate = room.sample_rate_hz
    for s in plan.sources:
        if s.audio.sample_rate_hz != rate:
            raise ParameterError(
                f"source {s.speaker} sample rate {s.audio.sample_rate_hz} != room rate {rate}"
            )
    if plan.noise is not None and plan.noise.sample_rate_hz != rate:
        raise ParameterError("noise sample rate differs from the room rate")
    if len(plan.sources) != len(room.source_positions):
        raise ParameterError(
            f"plan has {len(plan.sources)} sources but the room declares "
            f"{len(room.source_positions)} source positions"
        )
    n_mics = len(room.mic_positions)

    rirs = [
        [image_source_rir(room, si, mi) for mi in range(n_mics)]
        for si in range(len(plan.sources))
    ]
    length = 0
    for si, s in enumerate(plan.sources):
        onset = int(round(s.onset_s * rate))
        tail = max(len(r) for r in rirs[si])
        length = max(length, onset + s.audio.n_samples + tail - 1)

    images = {}
    clean = np.zeros((n_mics, length))
    segments = []
    for si, s in enumerate(plan.sources):
        onset = int(round(s.onset_s * rate))
        img = np.zeros((n_mics, length))
        for mi in range(n_mics):
            y = np.convolve(s.audio.samples[0], rirs[si][mi])
            img[mi, onset : onset + y.size] = y
        images[s.speaker] = WaveformBuffer(img, rate)
        clean += img
        segments.extend(_dry_segments(s, plan.session, rate))

    noise_buf = None
    mixture = clean
    if plan.snr_db is not None:
        rng = np.random.default_rng(plan.seed)
        if plan.noise is None:
            crop = rng.standard_normal((n_mics, length))
        else:
            if plan.noise.n_samples < length:
                raise ParameterError(
                    f"noise ({plan.noise.n_samples}) shorter than mixture ({length})"
                )
            samples = _match_channels(plan.noise, n_mics)
            offset = int(rng.integers(0, plan.noise.n_samples - length + 1))
            crop = samples[:, offset : offset + length]
        p_clean = _power(clean)
        p_noise = _power(crop)
        if p_clean == 0.0:
            raise ParameterError("mixture of sources has zero power")
        if p_noise == 0.0:
            raise ParameterError("noise crop has zero power")
        scale = math.sqrt(p_clean / (p_noise * 10.0 ** (plan.snr_db / 10.0)))
        noise_buf = WaveformBuffer(scale * crop, rate)
        mixture = clean + noise_buf.samples

    return MeetingResult(
        mixture=WaveformBuffer(mixture, rate),
        reference=DiarizationSet(segments=tuple(segments)),
        images=images,
        noise=noise_buf,
    )
