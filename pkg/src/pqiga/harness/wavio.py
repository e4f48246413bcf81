"""Minimal RIFF/WAVE reader (PCM16, float32) and PCM16 writer."""

from __future__ import annotations

import struct
import wave

import numpy as np

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class WavError(ValueError):
    pass


def _chunks(data):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack("<4sI", data[pos : pos + 8])
        body = data[pos + 8 : pos + 8 + size]
        yield cid, body, len(body) < size
        pos += 8 + size + (size & 1)


def read_wav(path):
    """Return ``(samples, sample_rate)``; stereo is averaged to mono."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12:
        raise WavError(f"{path}: truncated header, missing RIFF chunk")
    riff, _, wave_id = struct.unpack("<4sI4s", data[:12])
    if riff != b"RIFF" or wave_id != b"WAVE":
        raise WavError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    samples = None
    for cid, body, short in _chunks(data):
        if cid == b"fmt ":
            if short or len(body) < 16:
                raise WavError(f"{path}: truncated 'fmt ' chunk")
            fmt = struct.unpack("<HHIIHH", body[:16])
            tag = fmt[0]
            if tag == WAVE_FORMAT_EXTENSIBLE:
                if len(body) < 26:
                    raise WavError(f"{path}: truncated 'fmt ' extension")
                tag = struct.unpack("<H", body[24:26])[0]
                fmt = (tag,) + fmt[1:]
        elif cid == b"data":
            if fmt is None:
                raise WavError(f"{path}: 'data' chunk precedes missing 'fmt ' chunk")
            samples = body
            if short:
                samples = body[: len(body) - len(body) % fmt[4]]
            break
    if fmt is None:
        raise WavError(f"{path}: missing 'fmt ' chunk")
    if samples is None:
        raise WavError(f"{path}: missing 'data' chunk")
    tag, channels, rate, _, block_align, bits = fmt
    if channels < 1:
        raise WavError(f"{path}: invalid channel count {channels}")
    if tag == WAVE_FORMAT_PCM and bits == 16:
        x = np.frombuffer(samples, dtype="<i2").astype(float) / 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        x = np.frombuffer(samples, dtype="<f4").astype(float)
    else:
        raise WavError(f"{path}: unsupported encoding (format tag {tag}, {bits} bits)")
    x = x[: x.size - x.size % channels].reshape(-1, channels)
    return x.mean(axis=1), int(rate)


def write_wav(path, samples, sample_rate):
    """Write mono PCM16 (values clipped to [-1, 1), no dither)."""
    x = np.asarray(samples, dtype=float).reshape(-1)
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(sample_rate))
        w.writeframes(pcm.tobytes())
