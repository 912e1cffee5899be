"""Gray-coded linear modulation with root-raised-cosine pulse shaping.

Pulse shaping is cyclic: the symbol stream is padded on both sides with its
own wrapped-around symbols before a full convolution, and the group delay is
trimmed. The output therefore holds exactly ``num_symbols * sps`` samples in
which every symbol sees its complete pulse, and the matched filter in
:func:`demodulate` recovers every symbol (including the first and last)
without edge loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .signal import IqSignal


def _gray(k: np.ndarray) -> np.ndarray:
    return k ^ (k >> 1)


def _pam_levels(bits: int) -> np.ndarray:
    """Amplitude for each Gray label of a 2**bits-level PAM axis."""
    m = 1 << bits
    idx = np.arange(m)
    levels = np.empty(m)
    levels[_gray(idx)] = 2 * idx - (m - 1)
    return levels


def _psk(bits: int) -> np.ndarray:
    m = 1 << bits
    idx = np.arange(m)
    points = np.empty(m, dtype=complex)
    points[_gray(idx)] = np.exp(2j * np.pi * idx / m)
    return points


def _qam(bits: int) -> np.ndarray:
    half = bits // 2
    axis = _pam_levels(half)
    labels = np.arange(1 << bits)
    # high half of the label picks I, low half picks Q
    return axis[labels >> half] + 1j * axis[labels & ((1 << half) - 1)]


def _unit_energy(points: np.ndarray) -> np.ndarray:
    return points / np.sqrt(np.mean(np.abs(points) ** 2))


@dataclass(frozen=True)
class ModScheme:
    """A constellation indexed by its integer bit label (MSB first)."""

    name: str
    bits_per_symbol: int
    constellation: np.ndarray = field(repr=False)

    @property
    def order(self) -> int:
        return 1 << self.bits_per_symbol


def _build_schemes() -> dict[str, ModScheme]:
    return {
        "BPSK": ModScheme("BPSK", 1, np.array([-1.0 + 0j, 1.0 + 0j])),
        "QPSK": ModScheme("QPSK", 2, _unit_energy(_qam(2))),
        "PSK8": ModScheme("PSK8", 3, _psk(3)),
        "QAM16": ModScheme("QAM16", 4, _unit_energy(_qam(4))),
        "QAM64": ModScheme("QAM64", 6, _unit_energy(_qam(6))),
    }


SCHEMES = _build_schemes()
SCHEME_NAMES = tuple(SCHEMES)

_ALIASES = {"8PSK": "PSK8", "QAM-16": "QAM16", "QAM-64": "QAM64"}


def get_scheme(name: str) -> ModScheme:
    key = name.upper()
    key = _ALIASES.get(key, key)
    try:
        return SCHEMES[key]
    except KeyError:
        raise InvalidInputError(f"unknown modulation {name!r}; choose from {', '.join(SCHEMES)}") from None


@dataclass(frozen=True)
class PulseShape:
    sps: int = 8
    span_symbols: int = 8
    rolloff: float = 0.35

    def __post_init__(self):
        if not 0.0 < self.rolloff < 1.0:
            raise InvalidInputError(f"rolloff must lie in (0, 1), got {self.rolloff}")
        if self.sps < 2:
            raise InvalidInputError(f"sps must be >= 2, got {self.sps}")
        if self.span_symbols < 1:
            raise InvalidInputError(f"span must be >= 1 symbol, got {self.span_symbols}")

    @property
    def num_taps(self) -> int:
        return 2 * self.span_symbols * self.sps + 1

    @property
    def delay(self) -> int:
        return self.span_symbols * self.sps


def rrc_taps(shape: PulseShape) -> np.ndarray:
    """Unit-energy root-raised-cosine taps spanning ``2 * span`` symbols."""
    beta = shape.rolloff
    t = np.arange(-shape.delay, shape.delay + 1) / shape.sps
    h = np.empty_like(t)

    at_zero = np.isclose(t, 0.0, atol=1e-12)
    at_sing = np.isclose(np.abs(t), 1.0 / (4.0 * beta), atol=1e-12)
    regular = ~(at_zero | at_sing)

    tr = t[regular]
    num = np.sin(np.pi * tr * (1 - beta)) + 4 * beta * tr * np.cos(np.pi * tr * (1 + beta))
    den = np.pi * tr * (1 - (4 * beta * tr) ** 2)
    h[regular] = num / den
    h[at_zero] = 1 - beta + 4 * beta / np.pi
    h[at_sing] = (beta / math.sqrt(2)) * (
        (1 + 2 / np.pi) * math.sin(np.pi / (4 * beta)) + (1 - 2 / np.pi) * math.cos(np.pi / (4 * beta))
    )
    return h / np.sqrt(np.sum(h**2))


def _cyclic_filter(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Circular convolution of ``x`` with centred symmetric ``taps``."""
    d = (taps.size - 1) // 2
    padded = np.pad(x, d, mode="wrap")
    return np.convolve(padded, taps, mode="valid")


def bits_to_symbols(bits: np.ndarray, scheme: ModScheme) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64).ravel()
    k = scheme.bits_per_symbol
    if bits.size % k:
        raise InvalidInputError(f"{bits.size} bits is not a multiple of {k} bits/symbol for {scheme.name}")
    if bits.size and (bits.min() < 0 or bits.max() > 1):
        raise InvalidInputError("bits must be 0 or 1")
    weights = 1 << np.arange(k - 1, -1, -1)
    labels = bits.reshape(-1, k) @ weights
    return scheme.constellation[labels]


def symbols_to_bits(symbols: np.ndarray, scheme: ModScheme) -> np.ndarray:
    """Minimum-distance hard decisions followed by label-to-bit expansion."""
    symbols = np.asarray(symbols).ravel()
    dist = np.abs(symbols[:, None] - scheme.constellation[None, :])
    labels = np.argmin(dist, axis=1)
    k = scheme.bits_per_symbol
    shifts = np.arange(k - 1, -1, -1)
    return ((labels[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def modulate(bits, scheme: ModScheme, shape: PulseShape) -> IqSignal:
    """Map bits to symbols, upsample and pulse-shape.

    Returns ``num_symbols * sps`` samples with symbol ``k`` centred on sample
    ``k * sps`` and average energy per symbol close to 1.
    """
    symbols = bits_to_symbols(bits, scheme)
    if symbols.size == 0:
        raise InvalidInputError("need at least one symbol to modulate")
    upsampled = np.zeros(symbols.size * shape.sps, dtype=complex)
    upsampled[:: shape.sps] = symbols
    return IqSignal(_cyclic_filter(upsampled, rrc_taps(shape)), shape.sps)


def matched_filter_symbols(sig: IqSignal, shape: PulseShape) -> np.ndarray:
    """Matched-filter outputs sampled at symbol centres."""
    if sig.sps != shape.sps:
        raise InvalidInputError(f"signal sps {sig.sps} does not match pulse sps {shape.sps}")
    num_symbols = len(sig) // shape.sps
    if num_symbols < 1:
        raise InvalidInputError("signal is shorter than one symbol")
    x = sig.samples[: num_symbols * shape.sps]
    filtered = _cyclic_filter(x, rrc_taps(shape))
    return filtered[:: shape.sps]


def demodulate(sig: IqSignal, scheme: ModScheme, shape: PulseShape) -> np.ndarray:
    return symbols_to_bits(matched_filter_symbols(sig, shape), scheme)


def bit_error_rate(tx, rx) -> float:
    tx = np.asarray(tx).ravel()
    rx = np.asarray(rx).ravel()
    if tx.size != rx.size:
        raise InvalidInputError(f"bit streams differ in length: {tx.size} vs {rx.size}")
    if tx.size == 0:
        raise InvalidInputError("cannot compute BER of empty bit streams")
    return float(np.count_nonzero(tx != rx)) / tx.size


def count_bit_errors(tx, rx) -> int:
    tx = np.asarray(tx).ravel()
    rx = np.asarray(rx).ravel()
    if tx.size != rx.size:
        raise InvalidInputError(f"bit streams differ in length: {tx.size} vs {rx.size}")
    return int(np.count_nonzero(tx != rx))


def random_bits(rng: np.random.Generator, num_symbols: int, scheme: ModScheme) -> np.ndarray:
    return rng.integers(0, 2, size=num_symbols * scheme.bits_per_symbol, dtype=np.uint8)
