"""Power-constrained FGSM and Gaussian jamming.

The FGSM step is ``x* = x + eps * sign(grad_x L)`` with ``eps`` chosen by
:func:`~rfmlsim.signal.epsilon_for` so that the perturbation carries exactly
``10**(-Es/Ej / 10)`` energy per symbol (Es taken as 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import complex_awgn, noise_variance
from .classifier import ModelParams, input_gradient_sign_batches
from .errors import InvalidInputError
from .rng import substream
from .signal import IqSignal, energy_per_symbol, epsilon_for, es_ej_linear

FAMILIES = ("fgsm", "gaussian")
DEFAULT_DITHER_DB = 40.0


@dataclass(frozen=True)
class AttackSpec:
    family: str = "fgsm"
    es_ej_db: float = 10.0
    dither_es_n0_db: float | None = DEFAULT_DITHER_DB
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInputError(f"attack family must be one of {FAMILIES}, got {self.family!r}")
        if not math.isfinite(self.es_ej_db):
            raise InvalidInputError("Es/Ej must be finite")


@dataclass(frozen=True)
class AdversarialExample:
    clean: np.ndarray
    perturbation: np.ndarray
    adversarial: np.ndarray
    spec: AttackSpec


def sign_complex(grad: np.ndarray) -> np.ndarray:
    """Elementwise sign on the I and Q rows, with sign(0) = +1."""
    grad = np.asarray(grad)
    return np.where(grad >= 0, 1.0, -1.0).astype(grad.dtype if grad.dtype.kind == "f" else np.float64)


def _check_labels(labels, num_classes: int) -> np.ndarray:
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise InvalidInputError(f"label out of range [0, {num_classes})")
    return labels


def fgsm_perturbations(params: ModelParams, x: np.ndarray, labels, es_ej_db: float, sps: int) -> np.ndarray:
    """Batched FGSM perturbations ``eps * sign(grad)`` for ``x`` of shape [B, 1, 2, N]."""
    labels = _check_labels(labels, params.config.num_classes)
    eps = epsilon_for(es_ej_db, sps)
    grad = input_gradient_sign_batches(params, x, labels)
    return eps * sign_complex(grad).astype(np.float64)


def fgsm_untargeted(params: ModelParams, example: np.ndarray, label: int, es_ej_db: float, sps: int,
                    dither_es_n0_db: float | None = None, seed: int = 0) -> AdversarialExample:
    """Untargeted FGSM on one preprocessed ``[1, 2, N]`` example."""
    clean = np.asarray(example, dtype=np.float64).reshape(1, 2, -1)
    _check_labels(label, params.config.num_classes)
    probe = clean
    if dither_es_n0_db is not None:
        probe = dither(clean, dither_es_n0_db, sps, substream(seed, "dither"))
    spec = AttackSpec("fgsm", es_ej_db, dither_es_n0_db, seed)
    pert = fgsm_perturbations(params, probe[None], [label], es_ej_db, sps)[0]
    return AdversarialExample(clean, pert, clean + pert, spec)


def gaussian_perturbations(rng: np.random.Generator, shape: tuple, es_ej_db: float, sps: int) -> np.ndarray:
    """White Gaussian perturbations, each rescaled to the exact target energy."""
    noise = rng.standard_normal(shape)
    target = es_ej_linear(es_ej_db)
    flat = noise.reshape(shape[0], -1)
    measured = sps * np.sum(flat**2, axis=1) / (flat.shape[1] / 2)
    return (flat * np.sqrt(target / measured)[:, None]).reshape(shape)


def gaussian_jam(example: np.ndarray, es_ej_db: float, sps: int, seed: int = 0) -> AdversarialExample:
    clean = np.asarray(example, dtype=np.float64).reshape(1, 2, -1)
    pert = gaussian_perturbations(substream(seed, "gaussian-jam"), (1, *clean.shape), es_ej_db, sps)[0]
    return AdversarialExample(clean, pert, clean + pert, AttackSpec("gaussian", es_ej_db, None, seed))


def dither(x: np.ndarray, es_n0_db: float, sps: int, rng: np.random.Generator) -> np.ndarray:
    """Add complex Gaussian noise at ``es_n0_db`` relative to each example's own energy."""
    x = np.asarray(x, dtype=np.float64)
    batch = x.reshape(-1, 2, x.shape[-1])
    out = np.empty_like(batch)
    for i, ex in enumerate(batch):
        var = noise_variance(energy_per_symbol(ex, sps), es_n0_db)
        n = complex_awgn(rng, ex.shape[-1], var)
        out[i, 0] = ex[0] + n.real
        out[i, 1] = ex[1] + n.imag
    return out.reshape(x.shape)


def normalize_windows(x: np.ndarray) -> np.ndarray:
    """Scale each [1, 2, N] example of a batch to unit mean per-sample power."""
    power = np.sum(np.asarray(x, dtype=np.float64) ** 2, axis=(1, 2, 3)) / x.shape[-1]
    if np.any(power == 0):
        raise InvalidInputError("cannot normalise an all-zero window")
    return x / np.sqrt(power)[:, None, None, None]


def fgsm_directions(params: ModelParams, signals: np.ndarray, labels, input_size: int, sps: int,
                    dither_es_n0_db: float | None = None, rngs=None) -> np.ndarray:
    """Unscaled sign-gradient jamming waveforms for a batch of transmissions.

    ``signals`` is complex with shape [T, L]. Each row is cut into
    consecutive ``input_size`` windows starting at sample 0; every window is
    power-normalised and, if ``dither_es_n0_db`` is set, dithered with the
    matching generator from ``rngs`` before its gradient is taken. Samples
    past the last full window stay zero.
    """
    signals = np.atleast_2d(np.asarray(signals, dtype=complex))
    labels = _check_labels(labels, params.config.num_classes)
    count, length = signals.shape
    if labels.size != count:
        raise InvalidInputError(f"{labels.size} labels for {count} signals")
    if length < input_size:
        raise InvalidInputError(f"signal of {length} samples is shorter than one {input_size}-sample window")
    per = length // input_size
    covered = per * input_size
    win = signals[:, :covered].reshape(count * per, input_size)
    x = normalize_windows(np.stack([win.real, win.imag], axis=1)[:, None])
    if dither_es_n0_db is not None:
        if rngs is None or len(rngs) != count:
            raise InvalidInputError("dithering needs one generator per signal")
        x = np.concatenate([dither(x[t * per:(t + 1) * per], dither_es_n0_db, sps, rngs[t])
                            for t in range(count)])
    grad = input_gradient_sign_batches(params, x, np.repeat(labels, per))
    signs = sign_complex(grad).astype(np.float64)[:, 0]
    out = np.zeros((count, length), dtype=complex)
    out[:, :covered] = (signs[:, 0] + 1j * signs[:, 1]).reshape(count, covered)
    return out


def gaussian_direction(rng: np.random.Generator, length: int, sps: int) -> np.ndarray:
    """Complex white Gaussian waveform rescaled to the energy of a sign vector
    (``2 * sps`` per symbol), so ``eps`` scales both families identically."""
    z = rng.standard_normal(length) + 1j * rng.standard_normal(length)
    return z * math.sqrt(2 * sps / energy_per_symbol(z, sps))


def craft_jamming_signal(params: ModelParams, sig: IqSignal, label: int, input_size: int,
                         spec: AttackSpec) -> IqSignal:
    """Jamming waveform for a whole transmission.

    The signal is cut into consecutive classifier windows; each window is
    power-normalised (the classifier's own preprocessing), optionally
    dithered, and its loss-gradient sign taken. The signs are concatenated
    and scaled once by ``eps``; samples past the last full window get no
    perturbation. The result is in the units of ``sig`` and assumes its
    energy per symbol is 1. The Gaussian family returns white noise at the
    same energy instead.
    """
    if len(sig) < input_size:
        raise InvalidInputError(f"signal of {len(sig)} samples is shorter than one {input_size}-sample window")
    _check_labels(label, params.config.num_classes)
    rng = substream(spec.seed, "craft", spec.family)
    if spec.family == "gaussian":
        direction = gaussian_direction(rng, len(sig), sig.sps)
    else:
        direction = fgsm_directions(params, sig.samples[None], [label], input_size, sig.sps,
                                    spec.dither_es_n0_db, [rng])[0]
    return sig.with_samples(epsilon_for(spec.es_ej_db, sig.sps) * direction)
