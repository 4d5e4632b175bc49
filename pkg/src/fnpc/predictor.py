"""Two-layer nonlinear predictor: mapping-phase and coding-phase training.

The network predicts sample ``x[k]`` from the ``L`` preceding samples
(most recent first) through a tanh hidden layer of ``M - 1`` units and a
linear output neuron.  The hidden layer is trained once over a corpus and
then frozen; for every frame only the output weights and bias are refit,
and those ``M`` numbers are the frame's code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from fnpc.config import CodecConfig, Domain
from fnpc.dsp import NormStats


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or prediction."""


@dataclass(frozen=True, eq=False)
class MappingModel:
    """Frozen first layer plus the normalization stats it was trained with.

    Weights are stored as float64 arrays holding float32-representable
    values, so a model read back from disk is bit-identical to the one
    returned by `train_mapping`.
    """

    w1: np.ndarray  # (M-1, L)
    hidden_bias: np.ndarray  # (M-1,)
    norm: NormStats
    config: CodecConfig
    loss_history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        h, l = self.config.predictor.hidden_units, self.config.pred_window
        if self.w1.shape != (h, l) or self.hidden_bias.shape != (h,):
            raise ValueError(
                f"weight shapes {self.w1.shape}/{self.hidden_bias.shape} do not match "
                f"config (hidden={h}, window={l})"
            )
        if not (np.all(np.isfinite(self.w1)) and np.all(np.isfinite(self.hidden_bias))):
            raise ValueError("mapping weights must be finite")

    @property
    def domain(self) -> Domain:
        return self.config.domain

    @property
    def hidden_units(self) -> int:
        return self.w1.shape[0]

    @property
    def pred_window(self) -> int:
        return self.w1.shape[1]

    def same_weights(self, other: "MappingModel") -> bool:
        return (
            np.array_equal(self.w1, other.w1)
            and np.array_equal(self.hidden_bias, other.hidden_bias)
            and self.norm == other.norm
            and self.config.format_key() == other.config.format_key()
        )


@dataclass(frozen=True, eq=False)
class FrameCode:
    """One frame's adapted output layer plus the seed the decoder starts from."""

    w2: np.ndarray  # (M-1,)
    output_bias: float
    seed: np.ndarray  # (L,) first L normalized frame values
    frame_index: int
    domain: Domain = Domain.TIME
    loss_history: tuple = field(default=(), compare=False)

    @property
    def num_params(self) -> int:
        return self.w2.size + 1

    def same_as(self, other: "FrameCode") -> bool:
        return (
            np.array_equal(self.w2, other.w2)
            and self.output_bias == other.output_bias
            and np.array_equal(self.seed, other.seed)
            and self.frame_index == other.frame_index
            and self.domain == other.domain
        )


def as_f32(a):
    """Round to float32 precision but keep float64 storage."""
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def build_training_set(frame, pred_window: int) -> tuple[np.ndarray, np.ndarray]:
    """Sliding (input, target) pairs inside one frame.

    Returns ``inputs`` of shape ``(N - L, L)`` where row n is
    ``[x[k-1], x[k-2], ..., x[k-L]]`` and ``targets[n] = x[k]``.
    """
    x = np.asarray(frame, dtype=np.float64)
    n, l = x.size, pred_window
    if n <= l:
        raise ValueError(f"frame shorter than prediction window ({n} <= {l})")
    k = np.arange(l, n)[:, None]
    inputs = x[k - 1 - np.arange(l)[None, :]]
    return inputs, x[l:].copy()


def hidden_activations(w1, hidden_bias, inputs) -> np.ndarray:
    """tanh(inputs @ w1.T + b) for a batch of input rows."""
    return np.tanh(np.asarray(inputs) @ w1.T + hidden_bias)


def forward(model: MappingModel, w2, output_bias: float, x):
    """Single prediction. Returns ``(prediction, hidden, pre_activation)``."""
    x = np.asarray(x, dtype=np.float64)
    w2 = np.asarray(w2, dtype=np.float64)
    if x.shape != (model.pred_window,) or w2.shape != (model.hidden_units,):
        raise ValueError(
            f"dimension mismatch: input {x.shape}, w2 {w2.shape}, model "
            f"({model.hidden_units}, {model.pred_window})"
        )
    hidden = np.tanh(model.w1 @ x + model.hidden_bias)
    v = float(hidden @ w2 + output_bias)
    # identity output activation
    return v, hidden, v


def loss(predictions, targets) -> float:
    """Half the sum of squared prediction errors."""
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValueError("loss of empty sequences is undefined")
    return 0.5 * float(np.sum((t - p) ** 2))


# ---------------------------------------------------------------- gradients


def coding_gradients(hidden, targets, w2, output_bias):
    """d(loss)/d(w2), d(loss)/d(b2) with the first layer frozen."""
    e = targets - (hidden @ w2 + output_bias)
    return -(hidden.T @ e), -float(np.sum(e))


def mapping_gradients(w1, hidden_bias, w2, output_bias, inputs, targets):
    """Full backprop gradients of the batch loss w.r.t. all four parameter groups."""
    z = np.tanh(inputs @ w1.T + hidden_bias)
    e = targets - (z @ w2 + output_bias)
    g_w2 = -(z.T @ e)
    g_b2 = -float(np.sum(e))
    delta = -e[:, None] * w2[None, :] * (1.0 - z**2)
    return delta.T @ inputs, delta.sum(axis=0), g_w2, g_b2


def _batch_loss(w1, b1, w2, b2, inputs, targets):
    return loss(np.tanh(inputs @ w1.T + b1) @ w2 + b2, targets)


def gradient_check(model: MappingModel, w2, output_bias: float, training_set, epsilon: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Covers both the coding-phase gradient (w2, b2) and the mapping-phase
    gradient (w1, hidden bias, w2, b2).
    """
    inputs, targets = training_set
    w1 = model.w1.copy()
    b1 = model.hidden_bias.copy()
    w2 = np.asarray(w2, dtype=np.float64).copy()
    b2 = float(output_bias)

    g_w1, g_b1, g_w2, g_b2 = mapping_gradients(w1, b1, w2, b2, inputs, targets)
    z = hidden_activations(w1, b1, inputs)
    c_w2, c_b2 = coding_gradients(z, targets, w2, b2)
    analytic = [g_w1.ravel(), g_b1, g_w2, [g_b2], c_w2, [c_b2]]

    params = [w1, b1, w2]

    def numeric(arr):
        out = np.empty(arr.size)
        flat = arr.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + epsilon
            up = _batch_loss(w1, b1, w2, b2, inputs, targets)
            flat[i] = old - epsilon
            down = _batch_loss(w1, b1, w2, b2, inputs, targets)
            flat[i] = old
            out[i] = (up - down) / (2 * epsilon)
        return out

    num_w1, num_b1, num_w2 = (numeric(p) for p in params)
    num_b2 = (
        _batch_loss(w1, b1, w2, b2 + epsilon, inputs, targets)
        - _batch_loss(w1, b1, w2, b2 - epsilon, inputs, targets)
    ) / (2 * epsilon)
    numeric_all = [num_w1, num_b1, num_w2, [num_b2], num_w2, [num_b2]]

    worst = 0.0
    for a, n in zip(analytic, numeric_all):
        a = np.asarray(a, dtype=np.float64)
        n = np.asarray(n, dtype=np.float64)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


# ------------------------------------------------------------ mapping phase


@njit(cache=True)
def _sgd_epoch(stream, order, window, w1, b1, w2, b2, lr):
    hidden = w1.shape[0]
    x = np.empty(window)
    z = np.empty(hidden)
    total = 0.0
    for t in order:
        for j in range(window):
            x[j] = stream[t - 1 - j]
        y = b2[0]
        for i in range(hidden):
            a = b1[i]
            for j in range(window):
                a += w1[i, j] * x[j]
            z[i] = np.tanh(a)
            y += w2[i] * z[i]
        e = stream[t] - y
        total += 0.5 * e * e
        for i in range(hidden):
            d = lr * e * w2[i] * (1.0 - z[i] * z[i])
            w2[i] += lr * e * z[i]
            b1[i] += d
            for j in range(window):
                w1[i, j] += d * x[j]
        b2[0] += lr * e
    return total / order.size


def init_layer(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def train_mapping(stream, norm: NormStats, cfg: CodecConfig) -> MappingModel:
    """Train both layers by per-sample SGD over a normalized sample stream.

    Every position ``t >= L`` of `stream` yields one (input, target) pair;
    pairs are visited in a fresh seeded random order each epoch.  Only the
    first layer survives into the returned model.
    """
    pc = cfg.predictor
    stream = np.ascontiguousarray(stream, dtype=np.float64)
    l, h = pc.pred_window, pc.hidden_units
    if stream.size <= l:
        raise ValueError(f"mapping stream has {stream.size} samples, need more than {l}")
    rng = np.random.default_rng(pc.rng_seed)
    w1 = init_layer(rng, h, l)
    b1 = rng.uniform(-1.0 / np.sqrt(l), 1.0 / np.sqrt(l), size=h)
    w2 = init_layer(rng, 1, h)[0]
    b2 = rng.uniform(-1.0 / np.sqrt(h), 1.0 / np.sqrt(h), size=1)

    targets = np.arange(l, stream.size, dtype=np.int64)
    history = []
    for epoch in range(pc.map_epochs):
        order = rng.permutation(targets)
        mean_loss = _sgd_epoch(stream, order, l, w1, b1, w2, b2, pc.map_learning_rate)
        if not np.isfinite(mean_loss) or not np.all(np.isfinite(w1)):
            raise DivergenceError(
                f"divergence in mapping phase at epoch {epoch}: lower the mapping learning rate"
            )
        history.append(float(mean_loss))
    return MappingModel(as_f32(w1), as_f32(b1), norm, cfg, tuple(history))


# ------------------------------------------------------------- coding phase


def code_seed(rng_seed: int, frame_index: int) -> np.random.Generator:
    return np.random.default_rng([rng_seed, frame_index])


def fit_code(hidden, targets, w2, output_bias, iterations: int, rate: float):
    """Full-batch gradient descent on the output layer.

    The step is ``rate / sum_k(|z_k|^2 + 1)``; the denominator bounds the
    curvature of the loss in (w2, b2), so ``rate <= 1`` never increases it.
    Returns ``(w2, b2, losses)`` with ``losses[i]`` the loss before step i
    and the final entry the loss after the last step.
    """
    w2 = np.array(w2, dtype=np.float64)
    b2 = float(output_bias)
    step = rate / (float(np.sum(hidden**2)) + hidden.shape[0])
    losses = []
    for _ in range(iterations):
        e = targets - (hidden @ w2 + b2)
        losses.append(0.5 * float(e @ e))
        w2 += step * (hidden.T @ e)
        b2 += step * float(np.sum(e))
    e = targets - (hidden @ w2 + b2)
    losses.append(0.5 * float(e @ e))
    if not np.isfinite(losses[-1]):
        raise DivergenceError("coding divergence, reduce the coding learning rate")
    return w2, b2, losses


def code_frame(model: MappingModel, frame, frame_index: int = 0, cfg: CodecConfig | None = None) -> FrameCode:
    """Adapt the output layer to one (normalized) frame and return its code."""
    pc = (cfg or model.config).predictor
    frame = np.asarray(frame, dtype=np.float64)
    inputs, targets = build_training_set(frame, model.pred_window)
    hidden = hidden_activations(model.w1, model.hidden_bias, inputs)
    rng = code_seed(pc.rng_seed, frame_index)
    bound = 1.0 / np.sqrt(model.hidden_units)
    w2 = rng.uniform(-bound, bound, size=model.hidden_units)
    b2 = float(rng.uniform(-bound, bound))
    try:
        w2, b2, losses = fit_code(hidden, targets, w2, b2, pc.code_iterations, pc.code_learning_rate)
    except DivergenceError as exc:
        raise DivergenceError(f"frame {frame_index}: {exc}") from None
    return FrameCode(
        w2=as_f32(w2),
        output_bias=float(np.float32(b2)),
        seed=as_f32(frame[: model.pred_window]),
        frame_index=frame_index,
        domain=model.domain,
        loss_history=tuple(losses),
    )


@njit(cache=True)
def _free_run(out, window, w1, b1, w2, b2):
    hidden = w1.shape[0]
    for k in range(window, out.size):
        y = b2
        for i in range(hidden):
            a = b1[i]
            for j in range(window):
                a += w1[i, j] * out[k - 1 - j]
            y += w2[i] * np.tanh(a)
        out[k] = y


def predict_frame(model: MappingModel, code: FrameCode, frame_len: int | None = None) -> np.ndarray:
    """Free-run reconstruction of a frame from its code.

    The first L values are the transmitted seed; every later value is
    predicted from the L values produced before it.
    """
    n = frame_len or model.config.frame_len
    l = model.pred_window
    if code.w2.shape != (model.hidden_units,) or code.seed.shape != (l,):
        raise ValueError("code dimensions do not match the mapping model")
    out = np.empty(n)
    out[:l] = code.seed
    _free_run(out, l, model.w1, model.hidden_bias, code.w2, float(code.output_bias))
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"unstable free run in frame {code.frame_index}")
    return out


def teacher_forced(model: MappingModel, code: FrameCode, frame) -> np.ndarray:
    """One-step predictions using the true past samples (for diagnostics)."""
    frame = np.asarray(frame, dtype=np.float64)
    inputs, _ = build_training_set(frame, model.pred_window)
    out = frame.copy()
    out[model.pred_window :] = hidden_activations(model.w1, model.hidden_bias, inputs) @ code.w2 + code.output_bias
    return out
