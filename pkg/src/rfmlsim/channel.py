"""Receiver effects: AWGN, carrier frequency offset, and window slicing.

Noise convention: for a requested Es/N0 the complex noise has per-sample
variance ``sigma2 = Es / (Es/N0)``, split evenly between I and Q, where Es is
the measured energy per symbol of the reference signal. With unit-energy
RRC pulses and a matched-filter receiver this reproduces the textbook
uncoded error rates, e.g. ``Q(sqrt(2 Es/N0))`` for BPSK.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .rng import substream
from .signal import IqSignal, avg_energy_per_symbol


@dataclass(frozen=True)
class ChannelSpec:
    es_n0_db: float = math.inf
    freq_offset_norm: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not abs(self.freq_offset_norm) < 0.5:
            raise InvalidInputError(f"|freq offset| must be below 0.5, got {self.freq_offset_norm}")
        if math.isnan(self.es_n0_db) or self.es_n0_db == -math.inf:
            raise InvalidInputError(f"Es/N0 must be finite or +inf, got {self.es_n0_db}")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


def noise_variance(es: float, es_n0_db: float) -> float:
    """Total complex per-sample noise variance for energy per symbol ``es``."""
    if es_n0_db == math.inf:
        return 0.0
    return es * 10.0 ** (-es_n0_db / 10.0)


def complex_awgn(rng: np.random.Generator, n: int, variance: float) -> np.ndarray:
    scale = math.sqrt(variance / 2.0)
    noise = rng.standard_normal((2, n))
    return scale * (noise[0] + 1j * noise[1])


def rotate(samples: np.ndarray, freq_offset_norm: float) -> np.ndarray:
    if freq_offset_norm == 0.0:
        return samples
    t = np.arange(samples.size)
    return samples * np.exp(-2j * np.pi * freq_offset_norm * t)


def apply_channel(sig: IqSignal, spec: ChannelSpec, es_reference: float | None = None,
                  rng: np.random.Generator | None = None) -> IqSignal:
    """Rotate by the carrier offset, then add white complex Gaussian noise.

    ``es_reference`` fixes the Es used to calibrate the noise; by default it
    is measured from ``sig``. Noise is drawn from ``rng`` when given, else
    from the stream seeded by ``spec.seed``.
    """
    out = rotate(sig.samples, spec.freq_offset_norm)
    if spec.es_n0_db != math.inf:
        es = avg_energy_per_symbol(sig) if es_reference is None else float(es_reference)
        if rng is None:
            rng = substream(spec.seed)
        out = out + complex_awgn(rng, out.size, noise_variance(es, spec.es_n0_db))
    return sig.with_samples(out)


def to_tensor(samples: np.ndarray) -> np.ndarray:
    """Complex window -> real ``[1, 2, N]`` tensor (row 0 = I, row 1 = Q)."""
    return np.stack([samples.real, samples.imag])[None, :, :]


def from_tensor(tensor: np.ndarray) -> np.ndarray:
    t = np.asarray(tensor).reshape(2, -1)
    return t[0].astype(np.float64) + 1j * t[1].astype(np.float64)


def window_starts(length: int, input_size: int, start_offset: int) -> range:
    if not 0 <= start_offset < input_size:
        raise InvalidInputError(f"start offset must lie in [0, {input_size}), got {start_offset}")
    if length < start_offset + input_size:
        raise InvalidInputError(
            f"signal of {length} samples is too short for a {input_size}-sample window at offset {start_offset}"
        )
    count = (length - start_offset) // input_size
    return range(start_offset, start_offset + count * input_size, input_size)


def slice_windows(samples: np.ndarray, input_size: int, start_offset: int = 0) -> np.ndarray:
    """Non-overlapping complex windows, shape ``[W, input_size]``."""
    starts = window_starts(samples.size, input_size, start_offset)
    stop = starts.stop - starts.step + input_size
    return samples[starts.start:stop].reshape(len(starts), input_size)


def slice_examples(sig: IqSignal, input_size: int, start_offset: int = 0) -> np.ndarray:
    """Consecutive windows as real tensors, shape ``[W, 1, 2, input_size]``."""
    windows = slice_windows(sig.samples, input_size, start_offset)
    return np.stack([windows.real, windows.imag], axis=1)[:, None, :, :]
