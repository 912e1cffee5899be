"""Raw-IQ CNN: two convolutions, two dense layers, numpy forward/backward.

Layer stack (input ``[B, 1, 2, N]``)::

    conv1  256 x [1 x 7], no bias, width pad 3      -> [B, 256, 2, N]  ReLU
    conv2   80 x [2 x 7] + bias, width pad 3        -> [B, 80, 1, N]   (BN) ReLU
    flatten                                          -> [B, 80 N]
    fc1    256 + bias                                -> [B, 256]        (BN) ReLU
    fc2    num_classes + bias                        -> logits

With ``norm_mode="dropout"`` the BN layers are absent and dropout follows
every hidden ReLU instead.

Internally activations are kept time-major (``[B, N, features]``) so both
convolutions reduce to a handful of large GEMMs. The conv stack runs in
example chunks; inference-only calls drop each chunk's conv1 activations as
soon as conv2 has consumed them.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import InvalidInputError
from ..rng import substream

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
_CHUNK_ROWS = 32768


@dataclass(frozen=True)
class ModelConfig:
    input_size: int
    num_classes: int
    conv1_channels: int = 256
    conv2_channels: int = 80
    kernel_width: int = 7
    fc1_units: int = 256
    norm_mode: str = "batchnorm"
    dropout_rate: float = 0.5
    class_names: tuple = ()

    def __post_init__(self):
        if self.kernel_width % 2 != 1:
            raise InvalidInputError("kernel width must be odd")
        if self.norm_mode not in ("batchnorm", "dropout"):
            raise InvalidInputError(f"norm_mode must be 'batchnorm' or 'dropout', got {self.norm_mode!r}")
        if self.num_classes < 2 or self.input_size < 1:
            raise InvalidInputError("need >= 2 classes and a positive input size")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidInputError(f"dropout rate must lie in [0, 1), got {self.dropout_rate}")
        if self.class_names and len(self.class_names) != self.num_classes:
            raise InvalidInputError("class_names must have num_classes entries")
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def pad(self) -> int:
        return (self.kernel_width - 1) // 2

    @property
    def flat_features(self) -> int:
        return self.conv2_channels * self.input_size

    def to_dict(self) -> dict:
        d = asdict(self)
        d["class_names"] = list(self.class_names)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["class_names"] = tuple(d.get("class_names", ()))
        return cls(**d)

    def tensor_shapes(self) -> dict[str, tuple]:
        c1, c2, k, h = self.conv1_channels, self.conv2_channels, self.kernel_width, self.fc1_units
        shapes = {
            "conv1.weight": (c1, 1, 1, k),
            "conv2.weight": (c2, c1, 2, k),
            "conv2.bias": (c2,),
            "fc1.weight": (h, self.flat_features),
            "fc1.bias": (h,),
            "fc2.weight": (self.num_classes, h),
            "fc2.bias": (self.num_classes,),
        }
        if self.norm_mode == "batchnorm":
            for name, width in (("bn2", c2), ("bn3", h)):
                for stat in ("gamma", "beta", "running_mean", "running_var"):
                    shapes[f"{name}.{stat}"] = (width,)
        return shapes


@dataclass
class ModelParams:
    """Learned tensors plus the architecture they belong to.

    ``meta`` carries free-form provenance (training seed, split seed, ...)
    and is persisted alongside the config.
    """

    config: ModelConfig
    tensors: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = self.config.tensor_shapes()
        if set(expected) != set(self.tensors):
            missing = sorted(set(expected) - set(self.tensors))
            extra = sorted(set(self.tensors) - set(expected))
            raise InvalidInputError(f"tensor set mismatch: missing {missing}, unexpected {extra}")
        for name, shape in expected.items():
            if tuple(self.tensors[name].shape) != shape:
                raise InvalidInputError(f"{name} has shape {self.tensors[name].shape}, expected {shape}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    @property
    def dtype(self) -> np.dtype:
        return self.tensors["fc2.weight"].dtype

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config, {k: v.astype(dtype) for k, v in self.tensors.items()}, dict(self.meta))

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()}, dict(self.meta))

    def equals(self, other: "ModelParams") -> bool:
        if self.config != other.config or set(self.tensors) != set(other.tensors):
            return False
        return all(
            self.tensors[k].dtype == other.tensors[k].dtype and np.array_equal(self.tensors[k], other.tensors[k])
            for k in self.tensors
        )

    @property
    def learnable(self) -> list[str]:
        return [k for k in self.tensors if not k.endswith(("running_mean", "running_var"))]


def init_params(config: ModelConfig, seed: int = 0, dtype=np.float32) -> ModelParams:
    """Kaiming-uniform (fan-in) weights, zero biases, identity batch norm."""
    rng = substream(seed, "init")
    tensors = {}
    for name, shape in config.tensor_shapes().items():
        if name.endswith(".weight"):
            fan_in = int(np.prod(shape[1:]))
            bound = math.sqrt(6.0 / fan_in)
            tensors[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
        elif name.endswith(("gamma", "running_var")):
            tensors[name] = np.ones(shape, dtype=dtype)
        else:
            tensors[name] = np.zeros(shape, dtype=dtype)
    return ModelParams(config, tensors)


# ---------------------------------------------------------------- internals


def _check_batch(params: ModelParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    n = params.config.input_size
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[1:] != (1, 2, n):
        raise InvalidInputError(f"expected batch of shape [B, 1, 2, {n}], got {x.shape}")
    return x.astype(params.dtype, copy=False)


def _conv2_taps(params: ModelParams) -> np.ndarray:
    # [o, c, h, k] -> [k, h*c, o]
    w = params["conv2.weight"]
    k = w.shape[3]
    return np.ascontiguousarray(w.transpose(3, 2, 1, 0).reshape(k, -1, w.shape[0]))


def _conv1_windows(xc: np.ndarray, pad: int, width: int) -> np.ndarray:
    """``[c, 1, 2, N]`` -> sliding windows ``[c, N, 2, k]``."""
    xt = xc[:, 0].transpose(0, 2, 1)  # [c, N, 2]
    xp = np.pad(xt, ((0, 0), (pad, pad), (0, 0)))
    return np.lib.stride_tricks.sliding_window_view(xp, width, axis=1)


def _dropout_mask(rng, shape, rate, dtype):
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / dtype.type(1.0 - rate)


class _Trace:
    """Intermediate values kept between forward and backward."""

    __slots__ = ("x", "z2", "z2n", "bn2", "a2", "mask2", "flat", "z3", "z3n", "bn3", "a3", "mask3",
                 "masks1", "acts1", "train")


def _conv_stack_chunk(params: ModelParams, xc: np.ndarray, mask1=None):
    """conv1 -> ReLU (-> dropout) -> conv2 for one chunk.

    Returns (z2 [c, N, o], padded conv1 activations [c*(N+2p), 2*C1], windows).
    Activations are laid out ``[example, time, (iq, channel)]`` and flattened
    over the first two axes so each conv2 tap is one contiguous GEMM.
    """
    cfg = params.config
    c, n, p, k = xc.shape[0], cfg.input_size, cfg.pad, cfg.kernel_width
    w1 = params["conv1.weight"].reshape(cfg.conv1_channels, k)
    win = _conv1_windows(xc, p, k)
    z1 = win @ w1.T  # [c, N, 2, C1]
    a1 = np.maximum(z1, 0)
    if mask1 is not None:
        a1 *= mask1
    width = n + 2 * p
    feats = 2 * cfg.conv1_channels
    A = np.zeros((c, width, feats), dtype=a1.dtype)
    A[:, p:p + n] = a1.reshape(c, n, feats)
    A = A.reshape(c * width, feats)
    rows = c * width - 2 * p
    taps = _conv2_taps(params)
    Z = A[0:rows] @ taps[0]
    for j in range(1, k):
        Z += A[j:j + rows] @ taps[j]
    Zfull = np.zeros((c * width, cfg.conv2_channels), dtype=Z.dtype)
    Zfull[:rows] = Z
    z2 = Zfull.reshape(c, width, -1)[:, :n] + params["conv2.bias"]
    return z2, A, win


def _chunks(batch: int, n: int):
    step = max(1, _CHUNK_ROWS // (n + 6))
    for start in range(0, batch, step):
        yield slice(start, min(batch, start + step))


def _bn_forward(z, params, name, train, axes):
    gamma, beta = params[f"{name}.gamma"], params[f"{name}.beta"]
    if train:
        mean = z.mean(axis=axes)
        var = z.var(axis=axes)
        std = np.sqrt(var + BN_EPS)
        zhat = (z - mean) / std
        m = z.size // z.shape[-1]
        rm, rv = params[f"{name}.running_mean"], params[f"{name}.running_var"]
        rm *= 1 - BN_MOMENTUM
        rm += BN_MOMENTUM * mean
        rv *= 1 - BN_MOMENTUM
        rv += BN_MOMENTUM * var * (m / max(m - 1, 1))
    else:
        std = np.sqrt(params[f"{name}.running_var"] + BN_EPS)
        zhat = (z - params[f"{name}.running_mean"]) / std
    return gamma * zhat + beta, (zhat, std)


def _bn_backward(dy, params, name, cache, train, axes, grads):
    zhat, std = cache
    gamma = params[f"{name}.gamma"]
    dzhat = dy * gamma
    if grads is not None:
        grads[f"{name}.gamma"] = (dy * zhat).sum(axis=axes)
        grads[f"{name}.beta"] = dy.sum(axis=axes)
    if not train:
        return dzhat / std
    return (dzhat - dzhat.mean(axis=axes) - zhat * (dzhat * zhat).mean(axis=axes)) / std


def _forward(params: ModelParams, x: np.ndarray, train: bool = False, rng=None, keep: bool = False):
    cfg = params.config
    bn = cfg.norm_mode == "batchnorm"
    drop = cfg.norm_mode == "dropout" and train and cfg.dropout_rate > 0
    dtype = params.dtype
    t = _Trace()
    t.x, t.train = x, train
    B, n = x.shape[0], cfg.input_size

    z2 = np.empty((B, n, cfg.conv2_channels), dtype=dtype)
    t.masks1, t.acts1 = [], []
    for sl in _chunks(B, n):
        m1 = None
        if drop:
            m1 = _dropout_mask(rng, (sl.stop - sl.start, n, 2, cfg.conv1_channels), cfg.dropout_rate, dtype)
        t.masks1.append(m1)
        z2[sl], A, _ = _conv_stack_chunk(params, x[sl], m1)
        t.acts1.append(A if keep else None)
    t.z2 = z2

    if bn:
        t.z2n, t.bn2 = _bn_forward(z2, params, "bn2", train, (0, 1))
    else:
        t.z2n = z2
    a2 = np.maximum(t.z2n, 0)
    t.mask2 = None
    if drop:
        t.mask2 = _dropout_mask(rng, a2.shape, cfg.dropout_rate, dtype)
        a2 = a2 * t.mask2
    t.flat = a2.reshape(B, -1)

    t.z3 = t.flat @ params["fc1.weight"].T + params["fc1.bias"]
    if bn:
        t.z3n, t.bn3 = _bn_forward(t.z3, params, "bn3", train, (0,))
    else:
        t.z3n = t.z3
    a3 = np.maximum(t.z3n, 0)
    t.mask3 = None
    if drop:
        t.mask3 = _dropout_mask(rng, a3.shape, cfg.dropout_rate, dtype)
        a3 = a3 * t.mask3
    t.a3 = a3
    logits = a3 @ params["fc2.weight"].T + params["fc2.bias"]
    return logits, t


def _backward(params: ModelParams, t: _Trace, dlogits: np.ndarray, want_params: bool, want_input: bool):
    cfg = params.config
    bn = cfg.norm_mode == "batchnorm"
    B, n, p, k = t.x.shape[0], cfg.input_size, cfg.pad, cfg.kernel_width
    grads = {} if want_params else None

    if want_params:
        grads["fc2.weight"] = dlogits.T @ t.a3
        grads["fc2.bias"] = dlogits.sum(axis=0)
    da3 = dlogits @ params["fc2.weight"]
    if t.mask3 is not None:
        da3 *= t.mask3
    dz3n = da3 * (t.z3n > 0)
    dz3 = _bn_backward(dz3n, params, "bn3", t.bn3, t.train, (0,), grads) if bn else dz3n
    if want_params:
        grads["fc1.weight"] = dz3.T @ t.flat
        grads["fc1.bias"] = dz3.sum(axis=0)
    da2 = (dz3 @ params["fc1.weight"]).reshape(B, n, cfg.conv2_channels)
    if t.mask2 is not None:
        da2 *= t.mask2
    dz2n = da2 * (t.z2n > 0)
    dz2 = _bn_backward(dz2n, params, "bn2", t.bn2, t.train, (0, 1), grads) if bn else dz2n
    if want_params:
        grads["conv2.bias"] = dz2.sum(axis=(0, 1))

    taps = _conv2_taps(params)
    w1 = params["conv1.weight"].reshape(cfg.conv1_channels, k)
    dtaps = np.zeros_like(taps) if want_params else None
    dw1 = np.zeros_like(w1) if want_params else None
    dx = np.zeros(t.x.shape, dtype=t.x.dtype) if want_input else None
    width = n + 2 * p

    for sl, m1, A in zip(_chunks(B, n), t.masks1, t.acts1):
        c = sl.stop - sl.start
        if A is None:
            A = _conv_stack_chunk(params, t.x[sl], m1)[1]
        win = _conv1_windows(t.x[sl], p, k)
        rows = c * width - 2 * p
        dZ = np.zeros((c, width, cfg.conv2_channels), dtype=dz2.dtype)
        dZ[:, :n] = dz2[sl]
        dZ = dZ.reshape(c * width, -1)[:rows]
        dA = np.zeros_like(A)
        for j in range(k):
            if want_params:
                dtaps[j] += A[j:j + rows].T @ dZ
            dA[j:j + rows] += dZ @ taps[j].T
        da1 = dA.reshape(c, width, -1)[:, p:p + n].reshape(c, n, 2, cfg.conv1_channels)
        a1 = A.reshape(c, width, -1)[:, p:p + n].reshape(c, n, 2, cfg.conv1_channels)
        # a1 > 0 exactly where the ReLU (and dropout, if any) let the signal through
        dz1 = da1 * (a1 > 0)
        if m1 is not None:
            dz1 *= m1
        if want_params:
            dw1 += dz1.reshape(-1, cfg.conv1_channels).T @ win.reshape(-1, k)
        if want_input:
            G = dz1 @ w1  # [c, N, 2, k]
            dxp = np.zeros((c, n + 2 * p, 2), dtype=G.dtype)
            for j in range(k):
                dxp[:, j:j + n] += G[..., j]
            dx[sl, 0] = dxp[:, p:p + n].transpose(0, 2, 1)

    if want_params:
        kk, hc, o = dtaps.shape
        grads["conv2.weight"] = dtaps.reshape(kk, 2, hc // 2, o).transpose(3, 2, 1, 0)
        grads["conv1.weight"] = dw1.reshape(params["conv1.weight"].shape)
    return dx, grads


def _softmax_xent(logits: np.ndarray, labels: np.ndarray):
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsum
    rows = np.arange(logits.shape[0])
    loss = -logp[rows, labels].mean()
    grad = np.exp(logp)
    grad[rows, labels] -= 1
    return float(loss), grad / logits.shape[0]


def _check_labels(labels, batch: int, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.size != batch:
        raise InvalidInputError(f"{labels.size} labels for a batch of {batch}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise InvalidInputError(f"labels must lie in [0, {num_classes})")
    return labels


# ---------------------------------------------------------------- public API


def forward(params: ModelParams, x: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    """Inference-mode logits ``[B, num_classes]``."""
    x = _check_batch(params, x)
    if x.shape[0] <= batch_size:
        return _forward(params, x)[0]
    return np.concatenate([_forward(params, x[i:i + batch_size])[0] for i in range(0, x.shape[0], batch_size)])


def loss(logits: np.ndarray, labels) -> float:
    """Mean categorical cross-entropy from raw logits."""
    logits = np.asarray(logits)
    labels = _check_labels(labels, logits.shape[0], logits.shape[1])
    return _softmax_xent(logits, labels)[0]


def loss_and_input_gradient(params: ModelParams, x: np.ndarray, labels):
    x = _check_batch(params, x)
    labels = _check_labels(labels, x.shape[0], params.config.num_classes)
    logits, trace = _forward(params, x, keep=True)
    value, dlogits = _softmax_xent(logits, labels)
    dx, _ = _backward(params, trace, dlogits, want_params=False, want_input=True)
    return value, dx


def input_gradient(params: ModelParams, x: np.ndarray, labels) -> np.ndarray:
    """Gradient of the batch-mean loss w.r.t. the input (inference mode)."""
    return loss_and_input_gradient(params, x, labels)[1]


def input_gradient_sign_batches(params: ModelParams, x: np.ndarray, labels, batch_size: int = 256) -> np.ndarray:
    """Input gradient computed in slices; each example's gradient is scaled by
    its slice size instead of the full batch, which leaves its sign intact."""
    x = _check_batch(params, x)
    out = np.empty_like(x)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    for i in range(0, x.shape[0], batch_size):
        out[i:i + batch_size] = input_gradient(params, x[i:i + batch_size], labels[i:i + batch_size])
    return out


def loss_and_param_gradients(params: ModelParams, x: np.ndarray, labels, train: bool = True, rng=None):
    x = _check_batch(params, x)
    labels = _check_labels(labels, x.shape[0], params.config.num_classes)
    logits, trace = _forward(params, x, train=train, rng=rng, keep=True)
    value, dlogits = _softmax_xent(logits, labels)
    _, grads = _backward(params, trace, dlogits, want_params=True, want_input=False)
    return value, grads, logits


def predict_top1(params_or_logits, x: np.ndarray | None = None) -> np.ndarray:
    """Argmax class; ties resolve to the lowest index.

    Accepts either ``(params, batch)`` or a logits array.
    """
    logits = forward(params_or_logits, x) if x is not None else np.asarray(params_or_logits)
    return np.argmax(logits, axis=1)
