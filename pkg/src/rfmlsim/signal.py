"""Complex baseband signals and the energy / power-ratio algebra.

Energy per symbol follows the discrete convention used throughout the
package::

    Es = (sps / N) * sum(|s_i|^2)

so a waveform built from unit-energy pulses carrying unit-energy symbols has
``Es == 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateInputError, InvalidInputError


@dataclass(frozen=True)
class IqSignal:
    """A finite complex sample sequence with its samples-per-symbol rate."""

    samples: np.ndarray
    sps: int

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 1:
            raise InvalidInputError(f"samples must be 1-D, got shape {samples.shape}")
        if samples.size < 1:
            raise InvalidInputError("signal must contain at least one sample")
        if int(self.sps) != self.sps or self.sps < 1:
            raise InvalidInputError(f"sps must be a positive integer, got {self.sps!r}")
        samples = samples.astype(np.complex128, copy=False)
        if not np.all(np.isfinite(samples)):
            raise InvalidInputError("signal contains NaN or Inf samples")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sps", int(self.sps))

    def __len__(self) -> int:
        return self.samples.size

    def with_samples(self, samples) -> "IqSignal":
        return IqSignal(samples, self.sps)

    def __add__(self, other: "IqSignal") -> "IqSignal":
        if not isinstance(other, IqSignal):
            return NotImplemented
        if other.sps != self.sps or len(other) != len(self):
            raise InvalidInputError("can only add signals of equal length and sps")
        return IqSignal(self.samples + other.samples, self.sps)


class RatioKind(str, Enum):
    ES_EJ = "Es/Ej"
    ES_N0 = "Es/N0"
    EJ_N0 = "Ej/N0"


@dataclass(frozen=True)
class PowerRatioDb:
    value_db: float
    kind: RatioKind = RatioKind.ES_EJ

    def __post_init__(self):
        if not math.isfinite(self.value_db):
            raise InvalidInputError(f"{self.kind.value} must be finite, got {self.value_db}")

    @property
    def linear(self) -> float:
        return 10.0 ** (self.value_db / 10.0)


def energy_per_symbol(samples: np.ndarray, sps: int) -> float:
    """Average energy per symbol of a raw complex (or I/Q-stacked real) array."""
    samples = np.asarray(samples)
    if samples.size == 0:
        raise InvalidInputError("cannot measure the energy of an empty signal")
    if np.iscomplexobj(samples):
        n = samples.size
        total = float(np.sum(samples.real.astype(np.float64) ** 2 + samples.imag.astype(np.float64) ** 2))
    else:
        # real tensors hold I and Q on separate rows: N complex samples = size / 2
        n = samples.size // 2
        total = float(np.sum(samples.astype(np.float64) ** 2))
    return sps * total / n


def avg_energy_per_symbol(sig: IqSignal) -> float:
    return energy_per_symbol(sig.samples, sig.sps)


def es_ej_linear(ratio) -> float:
    """Jamming energy per symbol for a given Es/Ej, with Es fixed at 1."""
    if isinstance(ratio, PowerRatioDb):
        if ratio.kind is not RatioKind.ES_EJ:
            raise InvalidInputError(f"expected an Es/Ej ratio, got {ratio.kind.value}")
        value_db = ratio.value_db
    else:
        value_db = float(ratio)
    return 10.0 ** (-value_db / 10.0)


def epsilon_for(es_ej_db: float, sps: int) -> float:
    """Per-coordinate FGSM step that gives a sign-gradient perturbation the
    requested energy per symbol.

    A sign vector has |z| = sqrt(2) per complex sample, hence energy
    ``2 * sps`` per symbol; scaling by ``eps`` multiplies that by ``eps**2``.
    ``es_ej_db = inf`` yields 0.
    """
    if int(sps) != sps or sps < 1:
        raise InvalidInputError(f"sps must be a positive integer, got {sps!r}")
    if es_ej_db == math.inf:
        return 0.0
    if math.isnan(es_ej_db) or es_ej_db == -math.inf:
        raise InvalidInputError(f"Es/J must be finite or +inf, got {es_ej_db}")
    return math.sqrt(10.0 ** (-es_ej_db / 10.0) / (2.0 * sps))


def normalize_avg_power(sig: IqSignal) -> IqSignal:
    """Scale a signal so its mean per-sample power is exactly 1."""
    power = float(np.mean(np.abs(sig.samples) ** 2))
    if power == 0.0:
        raise DegenerateInputError("cannot normalize an all-zero signal")
    return sig.with_samples(sig.samples / math.sqrt(power))
