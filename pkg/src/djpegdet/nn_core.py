"""Minimal neural-network substrate in double-precision numpy.

Provides exactly the operations the histogram/BiLSTM classifier needs:
parameter initialization, the LSTM cell recurrence, batch normalization,
inverted dropout with per-sequence masks, binary cross-entropy, the Adam
update, and hand-derived reverse-mode gradients (verified against central
finite differences in the test suite).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError, ShapeError


def ensure_finite(arr: np.ndarray, context: str = "tensor"):
    arr = np.asarray(arr)
    if not np.isfinite(arr).all():
        raise NumericalError(f"non-finite values in {context}")
    return arr


def sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# Initializers
# ---------------------------------------------------------------------------

def glorot_uniform(shape, fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform on [-L, L] with L = sqrt(6 / (fan_in + fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise DomainError("fan_in and fan_out must be >= 1")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def orthogonal_init(n: int, rng: np.random.Generator) -> np.ndarray:
    """Random n x n orthogonal matrix via sign-corrected QR of a normal draw."""
    if n < 1:
        raise DomainError("orthogonal_init needs n >= 1")
    a = rng.normal(size=(n, n))
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diag(r))


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability `rate`, kept entries
    scaled by 1/(1-rate) so inference needs no rescaling."""
    if not 0 <= rate < 1:
        raise DomainError("dropout rate must be in [0, 1)")
    if rate == 0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


# ---------------------------------------------------------------------------
# LSTM cell
# ---------------------------------------------------------------------------

# Gate packing order along the 4n axis.
_GATES = ("i", "f", "c", "o")


@dataclass
class LstmCellParams:
    """One direction's gate parameters, packed along a 4n axis in the order
    (input, forget, candidate, output).

    W: (m, 4n) input weights, V: (n, 4n) recurrent weights, b: (4n,) biases.
    The per-gate (n, m) / (n, n) matrices of the standard formulation are
    exposed as transposed views.
    """

    W: np.ndarray
    V: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        n = self.n
        if self.V.shape != (n, 4 * n) or self.b.shape != (4 * n,) or self.W.shape[1] != 4 * n:
            raise ShapeError(
                f"inconsistent LSTM parameter shapes W{self.W.shape} V{self.V.shape} b{self.b.shape}")

    @property
    def m(self) -> int:
        return self.W.shape[0]

    @property
    def n(self) -> int:
        return self.W.shape[1] // 4

    def _slice(self, gate):
        g = _GATES.index(gate)
        return slice(g * self.n, (g + 1) * self.n)

    @property
    def W_i(self): return self.W[:, self._slice("i")].T
    @property
    def W_f(self): return self.W[:, self._slice("f")].T
    @property
    def W_c(self): return self.W[:, self._slice("c")].T
    @property
    def W_o(self): return self.W[:, self._slice("o")].T
    @property
    def V_i(self): return self.V[:, self._slice("i")].T
    @property
    def V_f(self): return self.V[:, self._slice("f")].T
    @property
    def V_c(self): return self.V[:, self._slice("c")].T
    @property
    def V_o(self): return self.V[:, self._slice("o")].T
    @property
    def b_i(self): return self.b[self._slice("i")]
    @property
    def b_f(self): return self.b[self._slice("f")]
    @property
    def b_c(self): return self.b[self._slice("c")]
    @property
    def b_o(self): return self.b[self._slice("o")]


def init_lstm_params(m: int, n: int, rng: np.random.Generator) -> LstmCellParams:
    """Glorot-uniform input kernels, orthogonal recurrent kernels, zero
    biases except the forget gate's, which starts at one."""
    W = np.concatenate([glorot_uniform((m, n), m, n, rng) for _ in _GATES], axis=1)
    V = np.concatenate([orthogonal_init(n, rng) for _ in _GATES], axis=1)
    b = np.zeros(4 * n)
    b[n:2 * n] = 1.0
    return LstmCellParams(W, V, b)


def lstm_cell(x, s_prev, c_prev, params: LstmCellParams, masks=None):
    """One LSTM step; accepts (m,) vectors or (B, m) batches.

    masks, when given, is a pair (input_mask, recurrent_mask) applied to x
    and s_prev before the W / V products respectively.
    """
    squeeze = np.asarray(x).ndim == 1
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    s_prev = np.atleast_2d(np.asarray(s_prev, dtype=np.float64))
    c_prev = np.atleast_2d(np.asarray(c_prev, dtype=np.float64))
    n = params.n
    if x.shape[1] != params.m or s_prev.shape[1] != n or c_prev.shape[1] != n:
        raise ShapeError("lstm_cell input shapes do not match the parameters")
    if masks is not None:
        in_mask, rec_mask = masks
        x = x * in_mask
        s_prev = s_prev * rec_mask
    z = x @ params.W + s_prev @ params.V + params.b
    i = sigmoid(z[:, :n])
    f = sigmoid(z[:, n:2 * n])
    g = np.tanh(z[:, 2 * n:3 * n])
    o = sigmoid(z[:, 3 * n:])
    c = f * c_prev + i * g
    s = o * np.tanh(c)
    if squeeze:
        return s[0], c[0]
    return s, c


def lstm_run(x: np.ndarray, params: LstmCellParams,
             in_mask=None, rec_mask=None) -> tuple[np.ndarray, dict]:
    """Run the cell over a whole (B, T, m) sequence; returns the hidden
    states (B, T, n) and the cache needed for backpropagation through time.

    Masks are fixed per sequence: the same (B, m) / (B, n) masks apply at
    every step.
    """
    B, T, m = x.shape
    n = params.n
    xd = x if in_mask is None else x * in_mask[:, None, :]
    pre = xd @ params.W + params.b  # (B, T, 4n)

    gates = np.empty((B, T, 4 * n))
    cs = np.empty((B, T, n))
    tanhc = np.empty((B, T, n))
    ss = np.empty((B, T, n))
    sd_all = np.empty((B, T, n))  # dropped previous hidden state fed to V

    s = np.zeros((B, n))
    c = np.zeros((B, n))
    for t in range(T):
        sd = s if rec_mask is None else s * rec_mask
        sd_all[:, t] = sd
        z = pre[:, t] + sd @ params.V
        i = sigmoid(z[:, :n])
        f = sigmoid(z[:, n:2 * n])
        g = np.tanh(z[:, 2 * n:3 * n])
        o = sigmoid(z[:, 3 * n:])
        c = f * c + i * g
        tc = np.tanh(c)
        s = o * tc
        gates[:, t, :n] = i
        gates[:, t, n:2 * n] = f
        gates[:, t, 2 * n:3 * n] = g
        gates[:, t, 3 * n:] = o
        cs[:, t] = c
        tanhc[:, t] = tc
        ss[:, t] = s
    cache = {"xd": xd, "gates": gates, "c": cs, "tanhc": tanhc, "s": ss,
             "sd": sd_all, "in_mask": in_mask, "rec_mask": rec_mask, "params": params}
    return ss, cache


def lstm_run_backward(cache: dict, dstates: np.ndarray):
    """BPTT for :func:`lstm_run`.

    dstates: (B, T, n) gradient w.r.t. every emitted hidden state.
    Returns (dW, dV, db, dx) with dx shaped like the original input.
    """
    params: LstmCellParams = cache["params"]
    n = params.n
    gates, cs, tanhc, sd_all, xd = (cache["gates"], cache["c"], cache["tanhc"],
                                    cache["sd"], cache["xd"])
    B, T, _ = dstates.shape
    dz_all = np.empty((B, T, 4 * n))
    ds_carry = np.zeros((B, n))
    dc_carry = np.zeros((B, n))
    rec_mask = cache["rec_mask"]
    for t in range(T - 1, -1, -1):
        i = gates[:, t, :n]
        f = gates[:, t, n:2 * n]
        g = gates[:, t, 2 * n:3 * n]
        o = gates[:, t, 3 * n:]
        tc = tanhc[:, t]
        ds = dstates[:, t] + ds_carry
        do = ds * tc
        dc = dc_carry + ds * o * (1.0 - tc * tc)
        c_prev = cs[:, t - 1] if t > 0 else np.zeros((B, n))
        df = dc * c_prev
        di = dc * g
        dg = dc * i
        dc_carry = dc * f
        dz = dz_all[:, t]
        dz[:, :n] = di * i * (1.0 - i)
        dz[:, n:2 * n] = df * f * (1.0 - f)
        dz[:, 2 * n:3 * n] = dg * (1.0 - g * g)
        dz[:, 3 * n:] = do * o * (1.0 - o)
        ds_carry = dz @ params.V.T
        if rec_mask is not None:
            ds_carry = ds_carry * rec_mask
    flat_dz = dz_all.reshape(B * T, 4 * n)
    dW = xd.reshape(B * T, -1).T @ flat_dz
    dV = sd_all.reshape(B * T, n).T @ flat_dz
    db = flat_dz.sum(axis=0)
    dx = dz_all @ params.W.T
    if cache["in_mask"] is not None:
        dx = dx * cache["in_mask"][:, None, :]
    return dW, dV, db, dx


# ---------------------------------------------------------------------------
# Projector building block
# ---------------------------------------------------------------------------

def per_bin_affine(h: float, q: float, alphas, betas, gammas) -> np.ndarray:
    """C linear projections of one (histogram count, q-factor) pair:
    out_c = alpha_c * h + beta_c * q + gamma_c."""
    return np.asarray(alphas) * h + np.asarray(betas) * q + np.asarray(gammas)


# ---------------------------------------------------------------------------
# Batch normalization
# ---------------------------------------------------------------------------

@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = 1e-3
    momentum: float = 0.99

    @classmethod
    def create(cls, channels: int) -> "BatchNormState":
        return cls(np.ones(channels), np.zeros(channels),
                   np.zeros(channels), np.ones(channels))


def batch_norm(x: np.ndarray, state: BatchNormState, mode: str):
    """Normalize per channel; x is (batch, channels, *positions).

    Train mode normalizes with batch statistics and returns them so the
    caller can fold them into the running averages; infer mode uses the
    stored running statistics. Returns (y, cache_or_None).
    """
    if mode not in ("train", "infer"):
        raise DomainError(f"mode must be 'train' or 'infer', got {mode!r}")
    if x.ndim < 2 or x.shape[1] != state.gamma.shape[0]:
        raise ShapeError(f"input {x.shape} does not match {state.gamma.shape[0]} channels")
    axes = (0,) + tuple(range(2, x.ndim))
    shape = (1, -1) + (1,) * (x.ndim - 2)
    if mode == "infer":
        inv = 1.0 / np.sqrt(state.var + state.eps)
        y = (x - state.mean.reshape(shape)) * (state.gamma * inv).reshape(shape) \
            + state.beta.reshape(shape)
        return y, None
    mu = x.mean(axis=axes)
    var = x.var(axis=axes)
    inv = 1.0 / np.sqrt(var + state.eps)
    xhat = (x - mu.reshape(shape)) * inv.reshape(shape)
    y = state.gamma.reshape(shape) * xhat + state.beta.reshape(shape)
    cache = {"xhat": xhat, "inv": inv, "mu": mu, "var": var, "axes": axes, "shape": shape}
    return y, cache


def batch_norm_backward(dy: np.ndarray, state: BatchNormState, cache: dict):
    """Gradients through train-mode batch normalization (statistics included).

    Returns (dx, dgamma, dbeta).
    """
    xhat, inv, axes, shape = cache["xhat"], cache["inv"], cache["axes"], cache["shape"]
    m = dy.size // dy.shape[1]
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dxhat = dy * state.gamma.reshape(shape)
    term = (m * dxhat
            - dxhat.sum(axis=axes).reshape(shape)
            - xhat * (dxhat * xhat).sum(axis=axes).reshape(shape))
    dx = term * (inv.reshape(shape) / m)
    return dx, dgamma, dbeta


def batch_norm_update(state: BatchNormState, cache: dict):
    """Fold the batch statistics of one training step into the running ones."""
    state.mean = state.momentum * state.mean + (1 - state.momentum) * cache["mu"]
    state.var = state.momentum * state.var + (1 - state.momentum) * cache["var"]


# ---------------------------------------------------------------------------
# Loss and optimizer
# ---------------------------------------------------------------------------

def bce_loss(y_pred: np.ndarray, y_true: np.ndarray) -> float:
    """Batch-averaged binary cross-entropy with predictions clamped to
    [1e-7, 1 - 1e-7]."""
    p = np.clip(np.asarray(y_pred, dtype=np.float64), 1e-7, 1 - 1e-7)
    t = np.asarray(y_true, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"prediction/label shapes differ: {p.shape} vs {t.shape}")
    return float(-np.mean(t * np.log(p) + (1 - t) * np.log(1 - p)))


def bce_grad_logits(y_pred: np.ndarray, y_true: np.ndarray) -> np.ndarray:
    """Gradient of the batch-averaged BCE w.r.t. the pre-sigmoid logits."""
    y_pred = np.asarray(y_pred, dtype=np.float64)
    return (y_pred - np.asarray(y_true, dtype=np.float64)) / y_pred.shape[0]


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float):
    """Standard bias-corrected Adam update, in place on `params`."""
    state.step += 1
    t = state.step
    for name, g in grads.items():
        p = params[name]
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape mismatch for {name}: {p.shape} vs {g.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * (g * g)
        mhat = m / (1 - state.beta1 ** t)
        vhat = v / (1 - state.beta2 ** t)
        p -= lr * mhat / (np.sqrt(vhat) + state.eps)


# ---------------------------------------------------------------------------
# Checkpoint serialization (magic DJPM)
# ---------------------------------------------------------------------------

_DJPM_MAGIC = b"DJPM"
_DJPM_VERSION = 1


def save_checkpoint(path, config: dict, tensors: dict[str, np.ndarray]):
    """Named float64 tensors plus a JSON config block, little-endian."""
    blob = json.dumps(config, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_DJPM_MAGIC)
        fh.write(struct.pack("<BI", _DJPM_VERSION, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.asarray(tensors[name], dtype=np.float64)
            enc = name.encode()
            fh.write(struct.pack("<H", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        if fh.read(4) != _DJPM_MAGIC:
            raise DomainError(f"not a DJPM checkpoint: {path}")
        version, json_len = struct.unpack("<BI", fh.read(5))
        if version != _DJPM_VERSION:
            raise DomainError(f"unsupported DJPM version {version}")
        config = json.loads(fh.read(json_len))
        (count,) = struct.unpack("<I", fh.read(4))
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode()
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim)) if ndim else ()
            n = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape).copy()
            tensors[name] = arr
    return config, tensors
