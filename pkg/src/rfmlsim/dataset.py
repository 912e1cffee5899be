"""Synthetic modulation-classification datasets, balanced splits, persistence.

Each example is produced by modulating random bits (RRC span and roll-off
drawn from their grids), passing the waveform through AWGN and a carrier
offset drawn from the offset grid, cutting one window at a random position
in the burst and normalising it to unit average power.

File layout (little-endian)::

    magic       8 bytes  b"RFMLDS01"
    spec_len    u32
    spec        spec_len bytes of UTF-8 JSON (DatasetSpec fields)
    count       u32
    count x record:
        label   u16
        es_n0   f32   dB
        cfo     f32   fraction of the sample rate
        span    u8    one-sided RRC span in symbols
        rolloff f32
        iq      2*N f32: N in-phase samples, then N quadrature samples
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelSpec, apply_channel
from .errors import CorruptFileError, InvalidInputError, VersionMismatchError
from .modem import SCHEME_NAMES, PulseShape, get_scheme, modulate, random_bits
from .rng import substream
from .signal import IqSignal, normalize_avg_power

MAGIC = b"RFMLDS01"


def _grid(start: float, stop: float, step: float, digits: int = 6) -> tuple:
    count = int(round((stop - start) / step)) + 1
    return tuple(round(start + i * step, digits) for i in range(count))


@dataclass(frozen=True)
class DatasetSpec:
    input_size: int = 128
    schemes: tuple = SCHEME_NAMES
    sps: int = 8
    spans: tuple = (7, 8, 9, 10)
    rolloffs: tuple = (0.34, 0.35, 0.36)
    es_n0_grid: tuple = field(default_factory=lambda: _grid(0, 20, 2))
    cfo_grid: tuple = field(default_factory=lambda: _grid(-0.01, 0.01, 0.002))
    examples_per_class_per_snr: int = 220
    seed: int = 0

    def __post_init__(self):
        for name in ("schemes", "spans", "rolloffs", "es_n0_grid", "cfo_grid"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.input_size not in (128, 256, 512):
            raise InvalidInputError(f"input size must be 128, 256 or 512, got {self.input_size}")
        if self.sps < 2:
            raise InvalidInputError("sps must be at least 2")
        for name in self.schemes:
            get_scheme(name)
        if not all(0 < r < 1 for r in self.rolloffs):
            raise InvalidInputError(f"roll-off factors must lie in (0, 1): {self.rolloffs}")
        if not all(1 <= s <= 255 for s in self.spans):
            raise InvalidInputError(f"spans must lie in [1, 255]: {self.spans}")
        if not all(abs(f) < 0.5 for f in self.cfo_grid):
            raise InvalidInputError(f"frequency offsets must satisfy |f| < 0.5: {self.cfo_grid}")
        if not all(math.isfinite(s) for s in self.es_n0_grid):
            raise InvalidInputError("Es/N0 grid must be finite")
        if not (self.schemes and self.spans and self.rolloffs and self.es_n0_grid and self.cfo_grid):
            raise InvalidInputError("every grid must be non-empty")
        if self.examples_per_class_per_snr < 1:
            raise InvalidInputError("examples_per_class_per_snr must be positive")

    @property
    def num_examples(self) -> int:
        return len(self.schemes) * len(self.es_n0_grid) * self.examples_per_class_per_snr

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass(frozen=True)
class Example:
    tensor: np.ndarray
    label: int
    es_n0_db: float
    meta: dict


@dataclass
class Dataset:
    """Column-oriented example store; ``ds[i]`` yields an :class:`Example`."""

    spec: DatasetSpec
    x: np.ndarray          # [M, 1, 2, N] float32
    labels: np.ndarray     # [M] int64
    es_n0: np.ndarray      # [M] float32
    cfo: np.ndarray        # [M] float32
    span: np.ndarray       # [M] uint8
    rolloff: np.ndarray    # [M] float32
    indices: np.ndarray = None  # position of each example in the generated set

    def __post_init__(self):
        if self.indices is None:
            self.indices = np.arange(len(self.labels))

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def class_names(self) -> tuple:
        return self.spec.schemes

    def __getitem__(self, i: int) -> Example:
        return Example(
            tensor=self.x[i],
            label=int(self.labels[i]),
            es_n0_db=float(self.es_n0[i]),
            meta={
                "modulation": self.spec.schemes[self.labels[i]],
                "cfo": float(self.cfo[i]),
                "span": int(self.span[i]),
                "rolloff": float(self.rolloff[i]),
                "index": int(self.indices[i]),
            },
        )

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.spec, self.x[idx], self.labels[idx], self.es_n0[idx], self.cfo[idx],
                       self.span[idx], self.rolloff[idx], self.indices[idx])

    def equals(self, other: "Dataset") -> bool:
        return self.spec == other.spec and all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("x", "labels", "es_n0", "cfo", "span", "rolloff")
        )

    def cell_counts(self) -> dict[tuple[str, float], int]:
        out = {}
        for lab, snr in zip(self.labels, self.es_n0):
            key = (self.spec.schemes[lab], float(snr))
            out[key] = out.get(key, 0) + 1
        return out


# Symbols of burst ahead of the latest possible window start. Over 512 samples
# the carrier turns a full cycle at the smallest non-zero grid offset (0.2%),
# so a window's starting phase is spread round the circle, as it would be for a
# window cut from a continuous stream.
BURST_LEAD_SYMBOLS = 64


def generate_example(spec: DatasetSpec, label: int, snr_index: int, j: int):
    """One example for cell (label, snr_index), replica ``j``.

    The window starts at a uniformly random sample of a longer burst.
    """
    rng = substream(spec.seed, "example", label, snr_index, j)
    scheme = get_scheme(spec.schemes[label])
    span = int(rng.choice(spec.spans))
    rolloff = float(rng.choice(spec.rolloffs))
    cfo = float(rng.choice(spec.cfo_grid))
    es_n0 = float(spec.es_n0_grid[snr_index])
    num_symbols = -(-spec.input_size // spec.sps) + 1 + BURST_LEAD_SYMBOLS
    shape = PulseShape(spec.sps, span, rolloff)
    sig = modulate(random_bits(rng, num_symbols, scheme), scheme, shape)
    rx = apply_channel(sig, ChannelSpec(es_n0, cfo), rng=rng)
    offset = int(rng.integers(0, (BURST_LEAD_SYMBOLS + 1) * spec.sps))
    window = rx.samples[offset:offset + spec.input_size]
    window = normalize_avg_power(IqSignal(window, spec.sps)).samples
    tensor = np.stack([window.real, window.imag])[None].astype(np.float32)
    return tensor, es_n0, cfo, span, rolloff


def generate(spec: DatasetSpec) -> Dataset:
    m = spec.num_examples
    x = np.empty((m, 1, 2, spec.input_size), dtype=np.float32)
    labels = np.empty(m, dtype=np.int64)
    es_n0 = np.empty(m, dtype=np.float32)
    cfo = np.empty(m, dtype=np.float32)
    span = np.empty(m, dtype=np.uint8)
    rolloff = np.empty(m, dtype=np.float32)
    i = 0
    for label in range(len(spec.schemes)):
        for s in range(len(spec.es_n0_grid)):
            for j in range(spec.examples_per_class_per_snr):
                x[i], es_n0[i], cfo[i], span[i], rolloff[i] = generate_example(spec, label, s, j)
                labels[i] = label
                i += 1
    return Dataset(spec, x, labels, es_n0, cfo, span, rolloff)


def split(ds: Dataset, test_frac: float = 0.30, val_frac_of_train: float = 0.05, seed: int = 0):
    """Balanced random split into (train, val, test).

    Within every (class, Es/N0) cell: ``floor(test_frac * n)`` examples go to
    test and ``floor(val_frac_of_train * remaining)`` to validation; the rest
    train. Raises InvalidInputError if any cell would leave a split empty.
    """
    rng = substream(seed, "split")
    cells: dict[tuple, list[int]] = {}
    for i, key in enumerate(zip(ds.labels.tolist(), ds.es_n0.tolist())):
        cells.setdefault(key, []).append(i)
    train, val, test = [], [], []
    for key in sorted(cells):
        members = np.array(cells[key])
        members = members[rng.permutation(members.size)]
        n_test = int(math.floor(test_frac * members.size))
        n_val = int(math.floor(val_frac_of_train * (members.size - n_test)))
        n_train = members.size - n_test - n_val
        if min(n_test, n_val, n_train) < 1:
            raise InvalidInputError(
                f"cell {key} has {members.size} examples, too few for a non-empty train/val/test split"
            )
        test.extend(members[:n_test])
        val.extend(members[n_test:n_test + n_val])
        train.extend(members[n_test + n_val:])
    return tuple(ds.subset(np.sort(np.array(part))) for part in (train, val, test))


def _record_dtype(n: int) -> np.dtype:
    return np.dtype([("label", "<u2"), ("es_n0", "<f4"), ("cfo", "<f4"), ("span", "u1"),
                     ("rolloff", "<f4"), ("iq", "<f4", (2, n))])


def save(ds: Dataset, path) -> None:
    header = json.dumps(ds.spec.to_dict(), sort_keys=True).encode("utf-8")
    rec = np.empty(len(ds), dtype=_record_dtype(ds.spec.input_size))
    rec["label"] = ds.labels
    rec["es_n0"] = ds.es_n0
    rec["cfo"] = ds.cfo
    rec["span"] = ds.span
    rec["rolloff"] = ds.rolloff
    rec["iq"] = ds.x[:, 0]
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", len(header)) + header + struct.pack("<I", len(ds)))
        fh.write(rec.tobytes())


def load(path) -> Dataset:
    """Read a dataset file; raises CorruptFileError / VersionMismatchError on
    bad content and OSError on I/O failure."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        if data[:6] == MAGIC[:6] and len(data) >= 8:
            raise VersionMismatchError(f"unsupported dataset file version {data[6:8]!r}")
        raise CorruptFileError("not a dataset file (bad magic)")
    if len(data) < 12:
        raise CorruptFileError("unexpected end of file in header")
    (hlen,) = struct.unpack_from("<I", data, 8)
    pos = 12 + hlen
    if len(data) < pos + 4:
        raise CorruptFileError("unexpected end of file in header")
    try:
        spec = DatasetSpec.from_dict(json.loads(data[12:pos].decode("utf-8")))
    except (ValueError, TypeError) as exc:
        raise CorruptFileError(f"unreadable spec block: {exc}") from exc
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    dtype = _record_dtype(spec.input_size)
    if len(data) - pos != count * dtype.itemsize:
        raise CorruptFileError(
            f"expected {count} records ({count * dtype.itemsize} bytes), found {len(data) - pos} bytes"
        )
    rec = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    return Dataset(
        spec,
        x=rec["iq"][:, None].astype(np.float32),
        labels=rec["label"].astype(np.int64),
        es_n0=rec["es_n0"].astype(np.float32),
        cfo=rec["cfo"].astype(np.float32),
        span=rec["span"].astype(np.uint8),
        rolloff=rec["rolloff"].astype(np.float32),
    )
