"""Seeded Monte Carlo studies of evasion attacks against a trained classifier.

Every runner returns a list of :class:`TrialRecord`. All randomness is drawn
from substreams keyed by ``(seed, coordinates, trial)``, and work is split
into fixed units whose results are concatenated in a fixed order, so the
records do not depend on how many worker threads are used.

Axes that a study does not exercise hold neutral values: ``es_n0_db`` and
``es_ej_db`` are ``inf`` (no noise, no attack), ``cfo`` and ``time_offset``
are 0, ``bits_total`` is 0 when no bits were sent, and ``example_index`` is
-1 for synthetic transmissions.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .attack import dither, fgsm_directions, gaussian_direction, normalize_windows, sign_complex
from .channel import complex_awgn, noise_variance, rotate
from .classifier import ModelParams, forward, input_gradient_sign_batches
from .dataset import Dataset
from .errors import ConfigError, FileFormatError, InvalidInputError
from .metrics import difference_in_logits_batch, ej_n0_db, percentile_summary
from .modem import PulseShape, count_bit_errors, demodulate, get_scheme, modulate, random_bits
from .rng import substream
from .signal import IqSignal, avg_energy_per_symbol, epsilon_for

EXPERIMENTS = ("direct-access", "input-size", "logit-sweep", "mutation", "self-protect",
               "freq-offset", "time-offset")
FAMILIES = ("fgsm", "gaussian")
BER_FLOOR = 1e-6
_FORWARD_BATCH = 1024
_INF = math.inf


def _grid(start: float, stop: float, step: float) -> tuple:
    count = int(round((stop - start) / step)) + 1
    return tuple(round(start + i * step, 6) for i in range(count))


# ----------------------------------------------------------------------------
# records and CSV


@dataclass(frozen=True)
class TrialRecord:
    scheme: str
    input_size: int
    es_n0_db: float = _INF
    es_ej_db: float = _INF
    cfo: float = 0.0
    time_offset: int = 0
    family: str = "none"
    predicted: str = ""
    delta_logits: float = 0.0
    bit_errors: int = 0
    bits_total: int = 0
    trial: int = 0
    seed: int = 0
    example_index: int = -1
    logits: tuple = ()

    def __post_init__(self):
        if not 0 <= self.bit_errors <= self.bits_total:
            raise InvalidInputError(f"bit_errors {self.bit_errors} outside [0, {self.bits_total}]")

    @property
    def correct(self) -> bool:
        return self.predicted == self.scheme


CSV_FIELDS = tuple(f.name for f in fields(TrialRecord))
_INT_FIELDS = {"input_size", "time_offset", "bit_errors", "bits_total", "trial", "seed", "example_index"}
_FLOAT_FIELDS = {"es_n0_db", "es_ej_db", "cfo", "delta_logits"}


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ";".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value + 0.0)  # folds -0.0 into 0.0
    return str(value)


def write_records(path, records) -> None:
    """RFC 4180 CSV, UTF-8, header row of every TrialRecord field."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(CSV_FIELDS)
        for rec in records:
            writer.writerow([_fmt(getattr(rec, name)) for name in CSV_FIELDS])


def read_records(path) -> list[TrialRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_FIELDS:
            raise FileFormatError(f"{path}: header does not match the trial-record schema")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(CSV_FIELDS):
                raise FileFormatError(f"{path}:{lineno}: expected {len(CSV_FIELDS)} fields, got {len(row)}")
            kw = dict(zip(CSV_FIELDS, row))
            try:
                for name in _INT_FIELDS:
                    kw[name] = int(kw[name])
                for name in _FLOAT_FIELDS:
                    kw[name] = float(kw[name])
                kw["logits"] = tuple(float(v) for v in kw["logits"].split(";")) if kw["logits"] else ()
                out.append(TrialRecord(**kw))
            except ValueError as exc:
                raise FileFormatError(f"{path}:{lineno}: {exc}") from exc
    return out


# ----------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class SweepConfig:
    """Grids and knobs of one study. Use :func:`default_config` for the
    per-study defaults; unused fields are ignored by the runner."""

    experiment: str
    seed: int = 0
    trials: int = 100
    es_ej_grid: tuple = (0.0, 4.0, 8.0, 12.0, 16.0, 20.0, _INF)
    es_n0_grid: tuple = (_INF,)
    cfo_grid: tuple = (0.0,)
    time_offsets: tuple = (0,)
    schemes: tuple = ("BPSK",)
    families: tuple = ("fgsm",)
    dither_es_n0_db: float | None = None
    example_scheme: str = "BPSK"
    example_index: int = 0
    mutation_es_ej_db: float = 10.0
    max_examples: int = 0
    windows_per_trial: int = 2
    sps: int = 8
    span: int = 8
    rolloff: float = 0.35

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        for name in ("es_ej_grid", "es_n0_grid", "cfo_grid", "time_offsets", "schemes", "families"):
            value = tuple(getattr(self, name))
            if not value:
                raise ConfigError(f"{name} must not be empty")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "es_ej_grid", tuple(float(v) for v in self.es_ej_grid))
        object.__setattr__(self, "es_n0_grid", tuple(float(v) for v in self.es_n0_grid))
        object.__setattr__(self, "cfo_grid", tuple(float(v) for v in self.cfo_grid))
        object.__setattr__(self, "time_offsets", tuple(int(v) for v in self.time_offsets))
        object.__setattr__(self, "schemes", tuple(get_scheme(s).name for s in self.schemes))
        object.__setattr__(self, "example_scheme", get_scheme(self.example_scheme).name)
        if any(math.isnan(v) or v == -_INF for v in self.es_ej_grid + self.es_n0_grid):
            raise ConfigError("dB grids must hold finite values or inf")
        if any(not abs(f) < 0.5 for f in self.cfo_grid):
            raise ConfigError("frequency offsets must satisfy |f| < 0.5")
        if any(t < 0 for t in self.time_offsets):
            raise ConfigError("time offsets must be non-negative")
        if any(f not in FAMILIES for f in self.families):
            raise ConfigError(f"attack families must be drawn from {FAMILIES}")
        if self.trials < 1 or self.windows_per_trial < 1:
            raise ConfigError("trials and windows_per_trial must be positive")
        if self.max_examples < 0 or self.example_index < 0:
            raise ConfigError("max_examples and example_index must be non-negative")
        if not math.isfinite(self.mutation_es_ej_db):
            raise ConfigError("mutation_es_ej_db must be finite")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 bits")
        PulseShape(self.sps, self.span, self.rolloff)

    def replace(self, **changes) -> "SweepConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def default_config(experiment: str, **overrides) -> SweepConfig:
    """Per-study defaults, optionally overridden."""
    base = {
        "direct-access": dict(families=FAMILIES),
        "input-size": dict(es_ej_grid=_grid(0, 60, 5)),
        "logit-sweep": dict(es_ej_grid=_grid(40, 0, -1)),
        "mutation": dict(es_n0_grid=_grid(20, 0, -1), trials=1000),
        "self-protect": dict(es_n0_grid=_grid(0, 20, 2) + (_INF,), trials=2000, dither_es_n0_db=40.0),
        "freq-offset": dict(cfo_grid=_grid(-0.025, 0.025, 0.001), es_n0_grid=(10.0, 20.0),
                            schemes=("BPSK", "QPSK", "PSK8", "QAM16", "QAM64"), dither_es_n0_db=40.0),
        "time-offset": dict(time_offsets=tuple(range(128)), es_n0_grid=(10.0, 20.0),
                            schemes=("BPSK", "QPSK", "PSK8", "QAM16", "QAM64"), dither_es_n0_db=40.0),
    }
    if experiment not in base:
        raise ConfigError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
    return SweepConfig(experiment=experiment, **{**base[experiment], **overrides})


# ----------------------------------------------------------------------------
# helpers


def _run_units(fn, units, threads: int) -> list:
    """Apply ``fn`` to each unit and concatenate results in unit order."""
    if threads > 1 and len(units) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(fn, units))
    else:
        parts = [fn(u) for u in units]
    return [rec for part in parts for rec in part]


def _class_index(params: ModelParams, scheme: str) -> int:
    names = params.config.class_names
    if scheme not in names:
        raise InvalidInputError(f"model classes {names} do not include {scheme}")
    return names.index(scheme)


def _classify(params: ModelParams, x: np.ndarray, labels: np.ndarray):
    logits = forward(params, x, batch_size=_FORWARD_BATCH).astype(np.float64)
    return logits, np.argmax(logits, axis=1), difference_in_logits_batch(logits, labels)


def _energy_tensor_direction(rng: np.random.Generator, n: int, sps: int) -> np.ndarray:
    z = gaussian_direction(rng, n, sps)
    return np.stack([z.real, z.imag])[None]


def _check_model(params: ModelParams | None):
    if params is None:
        raise InvalidInputError("a trained model is required")


# ----------------------------------------------------------------------------
# direct access


def _evaluated_examples(ds: Dataset, cfg: SweepConfig) -> Dataset:
    if cfg.max_examples and cfg.max_examples < len(ds):
        pick = substream(cfg.seed, "subset").permutation(len(ds))[:cfg.max_examples]
        return ds.subset(np.sort(pick))
    return ds


def _attack_directions(params, x, labels, cfg: SweepConfig, family: str, indices) -> np.ndarray:
    """Unscaled perturbation directions (sign vectors or energy-matched noise)."""
    if family == "gaussian":
        return np.stack([_energy_tensor_direction(substream(cfg.seed, "gaussian", int(i)), x.shape[-1], cfg.sps)
                         for i in indices])
    probe = np.asarray(x, dtype=np.float64)
    if cfg.dither_es_n0_db is not None:
        probe = np.stack([dither(probe[k], cfg.dither_es_n0_db, cfg.sps, substream(cfg.seed, "dither", int(i)))
                          for k, i in enumerate(indices)])
    return sign_complex(input_gradient_sign_batches(params, probe, labels)).astype(np.float64)


def _direct_access(params: ModelParams, ds: Dataset, cfg: SweepConfig, threads: int) -> list[TrialRecord]:
    _check_model(params)
    if ds.spec.input_size != params.config.input_size:
        raise InvalidInputError(
            f"dataset input size {ds.spec.input_size} does not match model input size {params.config.input_size}")
    ds = _evaluated_examples(ds, cfg)
    names = ds.class_names
    labels = np.array([_class_index(params, names[l]) for l in ds.labels])
    x = ds.x.astype(np.float64)
    directions = {f: _attack_directions(params, x, labels, cfg, f, ds.indices) for f in cfg.families}
    n = params.config.input_size

    def unit(key):
        family, es_ej = key
        eps = epsilon_for(es_ej, cfg.sps)
        _, pred, delta = _classify(params, x + eps * directions[family], labels)
        return [
            TrialRecord(scheme=names[ds.labels[i]], input_size=n, es_n0_db=float(ds.es_n0[i]), es_ej_db=es_ej,
                        cfo=float(ds.cfo[i]), family=family, predicted=params.config.class_names[pred[i]],
                        delta_logits=float(delta[i]), trial=i, seed=cfg.seed, example_index=int(ds.indices[i]))
            for i in range(len(ds))
        ]

    return _run_units(unit, [(f, e) for f in cfg.families for e in cfg.es_ej_grid], threads)


def run_direct_access_sweep(params: ModelParams, test_set: Dataset, cfg: SweepConfig | None = None,
                            threads: int = 1) -> list[TrialRecord]:
    """Attack held-out examples at every Es/Ej with each family; no channel."""
    return _direct_access(params, test_set, cfg or default_config("direct-access"), threads)


def run_input_size_study(models: dict, test_sets: dict, cfg: SweepConfig | None = None, threads: int = 1):
    """FGSM direct-access sweep for each model; returns (records, rankings).

    ``models`` and ``test_sets`` map input size to parameters / held-out data.
    ``rankings`` lists ``(es_ej_db, (sizes ordered best first))``.
    """
    cfg = cfg or default_config("input-size")
    if not models or set(models) != set(test_sets):
        raise InvalidInputError("models and test sets must cover the same input sizes")
    records = []
    for size in sorted(models):
        if models[size].config.input_size != size:
            raise InvalidInputError(f"model registered as N={size} has input size {models[size].config.input_size}")
        records += _direct_access(models[size], test_sets[size], cfg.replace(families=("fgsm",)), threads)
    return records, accuracy_rankings(records)


def accuracy_rankings(records) -> list[tuple[float, tuple]]:
    """Input sizes ordered by accuracy (best first, ties to the smaller size)
    for every Es/Ej present in the records."""
    acc = accuracy_by(records, ("es_ej_db", "input_size"))
    grid = sorted({k[0] for k in acc})
    sizes = sorted({k[1] for k in acc})
    return [(e, tuple(sorted(sizes, key=lambda n: (-acc[(e, n)][0], n)))) for e in grid]


# ----------------------------------------------------------------------------
# single-example studies


def select_example(ds: Dataset, scheme: str, index: int):
    """The ``index``-th example of class ``scheme`` in ``ds``: (tensor, dataset index)."""
    scheme = get_scheme(scheme).name
    if scheme not in ds.class_names:
        raise InvalidInputError(f"dataset has no {scheme} examples")
    rows = np.flatnonzero(ds.labels == ds.class_names.index(scheme))
    if index >= rows.size:
        raise InvalidInputError(f"only {rows.size} {scheme} examples available, index {index} requested")
    return ds.x[rows[index]].astype(np.float64), int(ds.indices[rows[index]])


def _example_direction(params, example, label, cfg):
    x = np.asarray(example, dtype=np.float64).reshape(1, 1, 2, -1)
    return _attack_directions(params, x, np.array([label]), cfg, "fgsm", [0])[0]


def run_logit_sweep(params: ModelParams, example: np.ndarray, scheme: str, cfg: SweepConfig | None = None,
                    example_index: int = -1) -> list[TrialRecord]:
    """Logits of one example under FGSM at each Es/Ej of the grid."""
    _check_model(params)
    cfg = cfg or default_config("logit-sweep")
    label = _class_index(params, get_scheme(scheme).name)
    x = np.asarray(example, dtype=np.float64).reshape(1, 2, -1)
    d = _example_direction(params, x, label, cfg)
    batch = np.stack([x + epsilon_for(e, cfg.sps) * d for e in cfg.es_ej_grid])
    logits, pred, delta = _classify(params, batch, np.full(len(batch), label))
    names = params.config.class_names
    return [
        TrialRecord(scheme=names[label], input_size=params.config.input_size, es_ej_db=e, family="fgsm",
                    predicted=names[pred[k]], delta_logits=float(delta[k]), trial=k, seed=cfg.seed,
                    example_index=example_index, logits=tuple(float(v) for v in logits[k]))
        for k, e in enumerate(cfg.es_ej_grid)
    ]


def mutation_noise_variance(es_n0_db: float, sps: int) -> float:
    """Per-sample variance of the mutation-test noise at a nominal Es/N0.

    Noise energy per symbol is measured the same way as the perturbation's
    (``sps`` times the mean sample power) against the same nominal Es of 1,
    so Ej/N0 = Es/N0 - Es/Ej is the actual perturbation-to-noise power ratio.
    """
    return noise_variance(1.0, es_n0_db) / sps


def run_mutation_test(params: ModelParams, example: np.ndarray, scheme: str, cfg: SweepConfig | None = None,
                      example_index: int = -1, threads: int = 1) -> list[TrialRecord]:
    """Repeatedly add AWGN to one FGSM adversarial example.

    Noise power follows :func:`mutation_noise_variance`. Each noisy copy is
    power-normalised before classification, as any received window would be.
    """
    _check_model(params)
    cfg = cfg or default_config("mutation")
    label = _class_index(params, get_scheme(scheme).name)
    x = np.asarray(example, dtype=np.float64).reshape(1, 2, -1)
    n = x.shape[-1]
    es_ej = cfg.mutation_es_ej_db
    adv = x + epsilon_for(es_ej, cfg.sps) * _example_direction(params, x, label, cfg)
    names = params.config.class_names

    def unit(es_n0):
        var = mutation_noise_variance(es_n0, cfg.sps)
        batch = np.empty((cfg.trials, 1, 2, n))
        for t in range(cfg.trials):
            z = complex_awgn(substream(cfg.seed, "mutation", es_n0, t), n, var)
            batch[t] = adv + np.stack([z.real, z.imag])[None]
        _, pred, delta = _classify(params, normalize_windows(batch), np.full(cfg.trials, label))
        return [
            TrialRecord(scheme=names[label], input_size=n, es_n0_db=es_n0, es_ej_db=es_ej, family="fgsm",
                        predicted=names[pred[t]], delta_logits=float(delta[t]), trial=t, seed=cfg.seed,
                        example_index=example_index)
            for t in range(cfg.trials)
        ]

    return _run_units(unit, list(cfg.es_n0_grid), threads)


# ----------------------------------------------------------------------------
# transmitter-side (self-protect) studies


@dataclass
class _Batch:
    scheme: str
    label: int
    bits: list
    clean: np.ndarray                     # [T, L] complex, Es = 1
    directions: dict = field(default_factory=dict)  # family -> [T, L] complex


def _transmissions(params: ModelParams, cfg: SweepConfig, scheme: str) -> _Batch:
    n = params.config.input_size
    if n % cfg.sps:
        raise InvalidInputError(f"input size {n} is not a whole number of {cfg.sps}-sample symbols")
    mod = get_scheme(scheme)
    shape = PulseShape(cfg.sps, cfg.span, cfg.rolloff)
    num_symbols = cfg.windows_per_trial * n // cfg.sps
    bits, clean = [], []
    for t in range(cfg.trials):
        b = random_bits(substream(cfg.seed, "bits", scheme, t), num_symbols, mod)
        bits.append(b)
        clean.append(modulate(b, mod, shape).samples)
    batch = _Batch(scheme, _class_index(params, scheme), bits, np.array(clean))
    for family in cfg.families:
        if family == "gaussian":
            batch.directions[family] = np.array([
                gaussian_direction(substream(cfg.seed, "gaussian", scheme, t), batch.clean.shape[1], cfg.sps)
                for t in range(cfg.trials)])
        else:
            rngs = [substream(cfg.seed, "dither", scheme, t) for t in range(cfg.trials)]
            batch.directions[family] = fgsm_directions(
                params, batch.clean, np.full(cfg.trials, batch.label), n, cfg.sps, cfg.dither_es_n0_db, rngs)
    return batch


def _over_the_air(params: ModelParams, cfg: SweepConfig, batches: list[_Batch], measure_ber: bool,
                  threads: int) -> list[TrialRecord]:
    n = params.config.input_size
    shape = PulseShape(cfg.sps, cfg.span, cfg.rolloff)
    length = cfg.windows_per_trial * n
    if max(cfg.time_offsets) > length - n:
        raise ConfigError(f"time offsets up to {max(cfg.time_offsets)} need windows_per_trial > "
                          f"{cfg.windows_per_trial} at input size {n}")
    names = params.config.class_names
    by_scheme = {b.scheme: b for b in batches}

    def unit(key):
        scheme, family, es_ej, es_n0, cfo = key
        b = by_scheme[scheme]
        mod = get_scheme(scheme)
        tx = b.clean + epsilon_for(es_ej, cfg.sps) * b.directions[family]
        rx = np.empty_like(tx)
        errors = np.zeros(cfg.trials, dtype=np.int64)
        for t in range(cfg.trials):
            sig = tx[t]
            if cfo:
                sig = rotate(sig, cfo)
            if es_n0 != _INF:
                es = avg_energy_per_symbol(IqSignal(b.clean[t], cfg.sps))
                sig = sig + complex_awgn(substream(cfg.seed, "channel", scheme, es_n0, t), length,
                                         noise_variance(es, es_n0))
            rx[t] = sig
            if measure_ber:
                errors[t] = count_bit_errors(b.bits[t], demodulate(IqSignal(sig, cfg.sps), mod, shape))
        bits_total = b.bits[0].size if measure_ber else 0
        out = []
        labels = np.full(cfg.trials, b.label)
        for offset in cfg.time_offsets:
            win = rx[:, offset:offset + n]
            x = normalize_windows(np.stack([win.real, win.imag], axis=1)[:, None])
            _, pred, delta = _classify(params, x, labels)
            out += [
                TrialRecord(scheme=scheme, input_size=n, es_n0_db=es_n0, es_ej_db=es_ej, cfo=cfo,
                            time_offset=offset, family=family, predicted=names[pred[t]],
                            delta_logits=float(delta[t]), bit_errors=int(errors[t]), bits_total=bits_total,
                            trial=t, seed=cfg.seed)
                for t in range(cfg.trials)
            ]
        return out

    units = [(s, f, e, snr, c) for s in cfg.schemes for f in cfg.families for e in cfg.es_ej_grid
             for snr in cfg.es_n0_grid for c in cfg.cfo_grid]
    return _run_units(unit, units, threads)


def _transmitter_study(params, cfg, measure_ber, threads):
    _check_model(params)
    batches = [_transmissions(params, cfg, s) for s in cfg.schemes]
    return _over_the_air(params, cfg, batches, measure_ber, threads)


def run_self_protect_grid(params: ModelParams, cfg: SweepConfig | None = None, threads: int = 1):
    """Jam at the transmitter, pass through AWGN, score BER and eavesdropper accuracy."""
    cfg = cfg or default_config("self-protect")
    return _transmitter_study(params, cfg.replace(cfo_grid=(0.0,), time_offsets=(0,)), True, threads)


def run_freq_offset_sweep(params: ModelParams, cfg: SweepConfig | None = None, threads: int = 1):
    """Eavesdropper accuracy versus residual carrier offset."""
    cfg = cfg or default_config("freq-offset")
    return _transmitter_study(params, cfg.replace(time_offsets=(0,)), False, threads)


def run_time_offset_sweep(params: ModelParams, cfg: SweepConfig | None = None, threads: int = 1):
    """Eavesdropper accuracy versus misalignment of its classification window."""
    cfg = cfg or default_config("time-offset")
    return _transmitter_study(params, cfg.replace(cfo_grid=(0.0,)), False, threads)


# ----------------------------------------------------------------------------
# aggregation


def accuracy_by(records, keys: tuple) -> dict:
    """``{key values: (accuracy, count)}`` grouped by the named record fields."""
    hits, counts = defaultdict(int), defaultdict(int)
    for rec in records:
        k = tuple(getattr(rec, name) for name in keys)
        hits[k] += rec.correct
        counts[k] += 1
    return {k: (hits[k] / counts[k], counts[k]) for k in counts}


def ber_by(records, keys: tuple) -> dict:
    """``{key values: (bit error rate, bits)}``; groups with no bits are skipped."""
    errs, bits = defaultdict(int), defaultdict(int)
    for rec in records:
        k = tuple(getattr(rec, name) for name in keys)
        errs[k] += rec.bit_errors
        bits[k] += rec.bits_total
    return {k: (errs[k] / bits[k], bits[k]) for k in bits if bits[k]}


def mutation_summary(records) -> list[dict]:
    """Per Es/N0: Ej/N0 plus mean and quartiles of the logit margin."""
    groups = defaultdict(list)
    for rec in records:
        groups[(rec.es_n0_db, rec.es_ej_db)].append(rec.delta_logits)
    rows = []
    for (es_n0, es_ej), values in groups.items():
        s = percentile_summary(values)
        rows.append({"es_n0_db": es_n0, "ej_n0_db": ej_n0_db(es_n0, es_ej), "mean": s.mean,
                     "p25": s.p25, "p50": s.p50, "p75": s.p75})
    return rows


def self_protect_summary(records, censor_below: float = BER_FLOOR) -> list[dict]:
    """BER and accuracy per (scheme, family, Es/Ej, Es/N0); rows whose BER
    falls below ``censor_below`` are dropped."""
    keys = ("scheme", "family", "es_ej_db", "es_n0_db")
    acc = accuracy_by(records, keys)
    ber = ber_by(records, keys)
    rows = []
    for k, (a, count) in acc.items():
        if k not in ber or ber[k][0] < censor_below:
            continue
        rows.append({"scheme": k[0], "family": k[1], "es_ej_db": k[2], "es_n0_db": k[3],
                     "ber": ber[k][0], "accuracy": a, "trials": count})
    return rows
