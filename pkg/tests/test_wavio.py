import struct
import wave

import numpy as np
import pytest

from farfield import DataError, ParameterError, WaveformBuffer, read_wav, write_wav

FS = 16000


def _ramp(channels=2, n=500):
    base = np.linspace(-0.9, 0.9, n)
    return WaveformBuffer(np.stack([base * (c + 1) / channels for c in range(channels)]), FS)


def test_pcm16_roundtrip(tmp_path):
    wav = _ramp()
    path = tmp_path / "a.wav"
    write_wav(path, wav, encoding="pcm16")
    back = read_wav(path)
    assert back.sample_rate_hz == FS
    assert back.samples.shape == wav.samples.shape
    assert np.max(np.abs(back.samples - wav.samples)) <= 1.0 / 32768


def test_float32_roundtrip(tmp_path):
    wav = _ramp(channels=3, n=777)
    path = tmp_path / "b.wav"
    write_wav(path, wav, encoding="float32")
    back = read_wav(path)
    np.testing.assert_array_equal(
        back.samples, wav.samples.astype(np.float32).astype(np.float64)
    )


def test_header_matches_stdlib_wave_reader(tmp_path):
    # the stdlib wave module is the header oracle
    wav = _ramp(channels=2, n=321)
    path = tmp_path / "c.wav"
    write_wav(path, wav, encoding="pcm16")
    with wave.open(str(path)) as fh:
        assert fh.getnchannels() == 2
        assert fh.getsampwidth() == 2
        assert fh.getframerate() == FS
        assert fh.getnframes() == 321


def test_channel_order_preserved(tmp_path):
    left = np.full(64, 0.25)
    right = np.full(64, -0.5)
    path = tmp_path / "d.wav"
    write_wav(path, WaveformBuffer(np.stack([left, right]), FS), encoding="float32")
    back = read_wav(path)
    np.testing.assert_allclose(back.samples[0], 0.25, atol=1e-7)
    np.testing.assert_allclose(back.samples[1], -0.5, atol=1e-7)


def test_pcm16_full_scale_clips(tmp_path):
    wav = WaveformBuffer(np.array([[1.5, 1.0, -1.5, -1.0]]), FS)
    path = tmp_path / "e.wav"
    write_wav(path, wav, encoding="pcm16")
    raw = path.read_bytes()[-8:]
    values = struct.unpack("<4h", raw)
    assert values == (32767, 32767, -32768, -32768)


def test_stdlib_written_file_is_readable(tmp_path):
    # cross-check the reader against a file produced by the stdlib writer
    rng = np.random.default_rng(0)
    pcm = (rng.uniform(-0.5, 0.5, size=256) * 32768).astype(np.int16)
    path = tmp_path / "f.wav"
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(8000)
        fh.writeframes(pcm.tobytes())
    back = read_wav(path)
    assert back.sample_rate_hz == 8000
    np.testing.assert_allclose(back.samples[0], pcm / 32768.0, atol=1e-9)


def test_rejects_bad_magic(tmp_path):
    path = tmp_path / "g.wav"
    path.write_bytes(b"OGGS" + b"\x00" * 64)
    with pytest.raises(DataError):
        read_wav(path)


def test_rejects_truncated_data(tmp_path):
    wav = _ramp(channels=1, n=100)
    path = tmp_path / "h.wav"
    write_wav(path, wav, encoding="pcm16")
    full = path.read_bytes()
    path.write_bytes(full[: len(full) - 50])
    with pytest.raises(DataError):
        read_wav(path)


def test_rejects_compressed_format_with_name(tmp_path):
    # hand-built header claiming mu-law (format tag 0x0007)
    fmt = struct.pack("<HHIIHH", 0x0007, 1, 8000, 8000, 1, 8)
    data = b"\x00" * 16
    body = (
        b"WAVE"
        + b"fmt " + struct.pack("<I", len(fmt)) + fmt
        + b"data" + struct.pack("<I", len(data)) + data
    )
    blob = b"RIFF" + struct.pack("<I", len(body)) + body
    path = tmp_path / "i.wav"
    path.write_bytes(blob)
    with pytest.raises(DataError, match="mu-law"):
        read_wav(path)


def test_rejects_missing_file(tmp_path):
    with pytest.raises((DataError, OSError)):
        read_wav(tmp_path / "missing.wav")


def test_write_rejects_unknown_encoding(tmp_path):
    with pytest.raises(ParameterError):
        write_wav(tmp_path / "j.wav", _ramp(), encoding="pcm24")