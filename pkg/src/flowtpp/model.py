"""Joint continuous/discrete flow model over marked event sequences.

A GRU encodes the observed context into h_c. Conditioned on h_c, a vector
field predicts the time-derivative of inter-event times along a linear
noise-to-data path, and a classifier head denoises corrupted marks. Both are
trained jointly: squared error on the derivative plus alpha * cross-entropy
on the clean mark.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields

import numpy as np

from . import nn
from .errors import NumericalError, ValidationError
from .events import EventSequence, ForecastWindow
from .synthgen import categorical

log = logging.getLogger(__name__)


def sinusoidal_features(t, dim: int) -> np.ndarray:
    """Fixed sin/cos features of flow time t with log-spaced frequencies."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(np.linspace(0.0, np.log(1000.0), half))
    angles = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    horizon: int
    d: int = 64
    mark_embed_dim: int = 16
    time_embed_dim: int = 16
    t_embed_dim: int = 16
    vf_hidden: tuple = (128, 128)
    head_hidden: tuple = (128, 128)
    alpha: float = 1.0
    rate_mode: str = "context"
    manual_rate: float = 1.0
    pi0_mode: str = "uniform"
    lambda_min: float = 1e-6
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "vf_hidden", tuple(int(w) for w in self.vf_hidden))
        object.__setattr__(self, "head_hidden", tuple(int(w) for w in self.head_hidden))
        dims = (self.vocab_size, self.horizon, self.d, self.mark_embed_dim,
                self.time_embed_dim, self.t_embed_dim, *self.vf_hidden,
                *self.head_hidden)
        if any(int(v) < 1 for v in dims):
            raise ValidationError(f"all dims must be >= 1, got {dims}")
        if self.t_embed_dim % 2 != 0:
            raise ValidationError("t_embed_dim must be even (sin/cos pairs)")
        if self.alpha < 0:
            raise ValidationError(f"alpha must be >= 0, got {self.alpha}")
        if self.rate_mode not in ("context", "manual"):
            raise ValidationError(f"unknown rate_mode {self.rate_mode!r}")
        if self.pi0_mode not in ("uniform", "context"):
            raise ValidationError(f"unknown pi0_mode {self.pi0_mode!r}")
        if self.rate_mode == "manual" and not self.manual_rate > 0:
            raise ValidationError("manual_rate must be positive")
        if not self.lambda_min > 0:
            raise ValidationError("lambda_min must be positive")

    @property
    def input_dim(self) -> int:
        return 1 + self.vocab_size + self.t_embed_dim + self.d

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(f"unknown model config keys: {unknown}")
        return cls(**data)


@dataclass
class FlowSample:
    """A batch of flow-path draws; all fields are parallel arrays of length n."""

    t: np.ndarray
    x0: np.ndarray
    x1: np.ndarray
    x_t: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    y_t: np.ndarray
    window_idx: np.ndarray

    def __len__(self):
        return self.t.shape[0]


def interpolate_time(x0, x1, t):
    """Linear path value (1-t)*x0 + t*x1; endpoints are hit exactly."""
    return (1.0 - t) * np.asarray(x0, dtype=np.float64) + t * np.asarray(
        x1, dtype=np.float64
    )


def corrupt_mark(y1, t, pi0, rng: np.random.Generator) -> np.ndarray:
    """Mixture draw: keep the clean mark w.p. t, else draw from pi0."""
    y1 = np.atleast_1d(np.asarray(y1, dtype=np.int64))
    keep = rng.random(y1.shape[0]) < t
    y0 = categorical(np.asarray(pi0, dtype=np.float64), y1.shape[0], rng)
    return np.where(keep, y1, y0)


def estimate_lambda(context: EventSequence, lambda_min: float = 1e-6) -> float:
    """Reciprocal of the mean context inter-event time, floored at lambda_min."""
    if len(context) < 1:
        raise ValidationError("cannot estimate a rate from an empty context")
    return max(1.0 / float(np.mean(context.inter_times)), lambda_min)


def estimate_pi0(context: EventSequence, vocab_size: int) -> np.ndarray:
    """Laplace-smoothed empirical mark frequencies (pseudo-count 1)."""
    counts = np.bincount(context.marks, minlength=vocab_size).astype(np.float64)
    return (counts + 1.0) / (len(context) + vocab_size)


class Model:
    """Context encoder + vector field + mark-logit head over one ParamStore."""

    def __init__(self, config: ModelConfig, seed=0, init: bool = True):
        self.config = config
        self.store = nn.ParamStore()
        rng = np.random.default_rng([seed, 0]) if init else None
        self._build(rng)

    def _build(self, rng):
        cfg = self.config

        def normal(shape, scale):
            if rng is None:
                return np.zeros(shape)
            return rng.normal(0.0, scale, size=shape)

        def add_affine(prefix, sizes):
            for i in range(len(sizes) - 1):
                fan_in, fan_out = sizes[i], sizes[i + 1]
                self.store.add(f"{prefix}.{i}.W",
                               normal((fan_in, fan_out), 1.0 / np.sqrt(fan_in)))
                self.store.add(f"{prefix}.{i}.b", np.zeros(fan_out))

        self.store.add("mark_embed.table",
                       normal((cfg.vocab_size, cfg.mark_embed_dim), 1.0))
        add_affine("time_embed", [1, cfg.time_embed_dim])
        gru_in = cfg.mark_embed_dim + cfg.time_embed_dim
        for gate in ("z", "r", "h"):
            self.store.add(f"enc.W{gate}",
                           normal((gru_in, cfg.d), 1.0 / np.sqrt(gru_in)))
            self.store.add(f"enc.U{gate}",
                           normal((cfg.d, cfg.d), 1.0 / np.sqrt(cfg.d)))
            self.store.add(f"enc.b{gate}", np.zeros(cfg.d))
        self._vf_sizes = [cfg.input_dim, *cfg.vf_hidden, 1]
        self._head_sizes = [cfg.input_dim, *cfg.head_hidden, cfg.vocab_size]
        add_affine("vf", self._vf_sizes)
        add_affine("head", self._head_sizes)

    # ---- context encoding -------------------------------------------------

    def encode_contexts(self, contexts) -> nn.Tensor:
        """Run the GRU over each context; returns final hidden states (B, d).

        Variable lengths are handled by padding and a freeze mask, so padded
        steps leave the hidden state bit-identical.
        """
        cfg = self.config
        if not contexts:
            raise ValidationError("encode_contexts needs at least one context")
        for c in contexts:
            if c.vocab_size != cfg.vocab_size:
                raise ValidationError(
                    f"context vocab_size {c.vocab_size} != model {cfg.vocab_size}"
                )
            if len(c) < 1:
                raise ValidationError("context must contain at least one event")
        b = len(contexts)
        lens = np.array([len(c) for c in contexts])
        maxlen = int(lens.max())
        marks = np.zeros((b, maxlen), dtype=np.int64)
        logdts = np.zeros((b, maxlen))
        for i, c in enumerate(contexts):
            marks[i, : lens[i]] = c.marks
            logdts[i, : lens[i]] = np.log1p(c.inter_times)
        uniform = bool((lens == maxlen).all())
        active = (np.arange(maxlen)[None, :] < lens[:, None]).astype(np.float64)

        table = self.store["mark_embed.table"]
        h = nn.Tensor(np.zeros((b, cfg.d)))
        one = nn.Tensor(1.0)
        for k in range(maxlen):
            e_mark = table.take_rows(marks[:, k])
            e_time = nn.mlp_forward(self.store, logdts[:, k : k + 1],
                                    [1, cfg.time_embed_dim], prefix="time_embed")
            z = nn.concat([e_mark, e_time], axis=1)
            h_new = nn.gru_step(self.store, z, h, prefix="enc")
            if uniform:
                h = h_new
            else:
                m = nn.Tensor(active[:, k : k + 1])
                h = m * h_new + (one - m) * h
        return h

    def encode_context(self, context: EventSequence) -> nn.Tensor:
        return self.encode_contexts([context])

    # ---- rate / base-mark-distribution policy ------------------------------

    def window_rate(self, context: EventSequence) -> float:
        if self.config.rate_mode == "manual":
            return self.config.manual_rate
        return estimate_lambda(context, self.config.lambda_min)

    def window_pi0(self, context: EventSequence) -> np.ndarray:
        m = self.config.vocab_size
        if self.config.pi0_mode == "uniform":
            return np.full(m, 1.0 / m)
        return estimate_pi0(context, m)

    # ---- networks ----------------------------------------------------------

    def forward(self, x_t, y_t, t, h_rows) -> tuple:
        """Vector field value and mark logits at (x_t, y_t, t | h_c).

        h_rows is the per-sample context vector, already expanded to one row
        per sample; returns (v (n,1), logits (n,M)) as tape Tensors.
        """
        cfg = self.config
        x_t = np.atleast_1d(np.asarray(x_t, dtype=np.float64))
        y_t = np.atleast_1d(np.asarray(y_t, dtype=np.int64))
        n = x_t.shape[0]
        if np.any(y_t < 0) or np.any(y_t >= cfg.vocab_size):
            raise ValidationError("mark out of vocabulary in forward input")
        t_arr = np.full(n, t, dtype=np.float64) if np.ndim(t) == 0 else np.asarray(
            t, dtype=np.float64
        )
        onehot = np.zeros((n, cfg.vocab_size))
        onehot[np.arange(n), y_t] = 1.0
        feats = nn.concat(
            [
                nn.Tensor(x_t[:, None]),
                nn.Tensor(onehot),
                nn.Tensor(sinusoidal_features(t_arr, cfg.t_embed_dim)),
                h_rows if isinstance(h_rows, nn.Tensor) else nn.Tensor(h_rows),
            ],
            axis=1,
        )
        v = nn.mlp_forward(self.store, feats, self._vf_sizes, prefix="vf")
        logits = nn.mlp_forward(self.store, feats, self._head_sizes, prefix="head")
        return v, logits

    def predict(self, x_t, y_t, t, h_rows) -> tuple:
        """Forward pass returning plain arrays (v (n,), logits (n,M))."""
        v, logits = self.forward(x_t, y_t, t, h_rows)
        return v.data.ravel(), logits.data

    # ---- flow-path construction ---------------------------------------------

    def build_flow_batch(self, windows, rng: np.random.Generator) -> FlowSample:
        """Independent-coupling draws: every target event gets its own
        (t, x0, y_t); endpoints x1/y1 come from the window targets."""
        ts, x0s, x1s, y0s, y1s, yts, widx = [], [], [], [], [], [], []
        for i, w in enumerate(windows):
            lam = self.window_rate(w.context)
            pi0 = self.window_pi0(w.context)
            n = w.horizon
            t = rng.random(n)
            x0 = np.maximum(rng.exponential(1.0 / lam, size=n), 1e-300)
            x1 = w.target.inter_times
            y1 = w.target.marks
            y0 = categorical(pi0, n, rng)
            keep = rng.random(n) < t
            y_t = np.where(keep, y1, y0)
            ts.append(t)
            x0s.append(x0)
            x1s.append(x1)
            y0s.append(y0)
            y1s.append(y1)
            yts.append(y_t)
            widx.append(np.full(n, i, dtype=np.int64))
        t = np.concatenate(ts)
        x0 = np.concatenate(x0s)
        x1 = np.concatenate(x1s)
        return FlowSample(
            t=t,
            x0=x0,
            x1=x1,
            x_t=interpolate_time(x0, x1, t),
            y0=np.concatenate(y0s),
            y1=np.concatenate(y1s),
            y_t=np.concatenate(yts),
            window_idx=np.concatenate(widx),
        )

    # ---- losses --------------------------------------------------------------

    def _expand(self, h_c: nn.Tensor, batch: FlowSample) -> nn.Tensor:
        return h_c.take_rows(batch.window_idx)

    def loss_time(self, batch: FlowSample, h_c: nn.Tensor) -> nn.Tensor:
        if len(batch) == 0:
            raise ValidationError("empty flow batch")
        v, _ = self.forward(batch.x_t, batch.y_t, batch.t, self._expand(h_c, batch))
        target = nn.Tensor((batch.x1 - batch.x0)[:, None])
        return (v - target).square().mean()

    def loss_mark(self, batch: FlowSample, h_c: nn.Tensor) -> nn.Tensor:
        if len(batch) == 0:
            raise ValidationError("empty flow batch")
        _, logits = self.forward(batch.x_t, batch.y_t, batch.t,
                                 self._expand(h_c, batch))
        logp = nn.log_softmax(logits, axis=1)
        return -logp.select_columns(batch.y1).mean()

    def loss_total(self, batch: FlowSample, h_c: nn.Tensor, alpha=None) -> tuple:
        """Joint objective; returns (total Tensor, loss_time, loss_mark floats).

        Both heads share one forward pass so the tape is built once.
        """
        if len(batch) == 0:
            raise ValidationError("empty flow batch")
        alpha = self.config.alpha if alpha is None else alpha
        if alpha < 0:
            raise ValidationError(f"alpha must be >= 0, got {alpha}")
        v, logits = self.forward(batch.x_t, batch.y_t, batch.t,
                                 self._expand(h_c, batch))
        target = nn.Tensor((batch.x1 - batch.x0)[:, None])
        l_time = (v - target).square().mean()
        logp = nn.log_softmax(logits, axis=1)
        l_mark = -logp.select_columns(batch.y1).mean()
        total = l_time + nn.Tensor(float(alpha)) * l_mark
        return total, float(l_time.data), float(l_mark.data)

    # ---- persistence -----------------------------------------------------------

    def save_checkpoint(self, path, extra_config: dict | None = None):
        cfg: dict = {"model": self.config.to_dict()}
        if extra_config:
            cfg.update(extra_config)
        nn.save_checkpoint(path, cfg, self.store)

    @classmethod
    def from_checkpoint(cls, path) -> "Model":
        cfg_doc, state = nn.load_checkpoint(path)
        model_cfg = cfg_doc.get("model", cfg_doc)
        model = cls(ModelConfig.from_dict(model_cfg), init=False)
        model.store.load_state(state)
        return model


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr > 0:
            raise ValidationError(f"lr must be positive, got {self.lr}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def train(model: Model, windows, cfg: TrainConfig) -> list:
    """Minibatch Adam training; returns one trace row per epoch.

    Deterministic given cfg.seed: shuffling and all flow-path draws come from
    one derived stream, and batches are visited in a fixed order. A non-finite
    loss or gradient aborts with epoch/batch diagnostics.
    """
    if not windows:
        raise ValidationError("training needs at least one window")
    for w in windows:
        if not isinstance(w, ForecastWindow):
            raise ValidationError("training data must be forecast windows")
    rng = np.random.default_rng([cfg.seed, 1])
    trace = []
    n = len(windows)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        sums = np.zeros(3)
        count = 0
        for start in range(0, n, cfg.batch_size):
            batch_windows = [windows[i] for i in order[start : start + cfg.batch_size]]
            try:
                h_c = model.encode_contexts([w.context for w in batch_windows])
                batch = model.build_flow_batch(batch_windows, rng)
                total, l_time, l_mark = model.loss_total(batch, h_c)
                nn.backward(total)
                nn.adam_step(model.store, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps_opt)
            except NumericalError as exc:
                norms = {
                    path: float(np.linalg.norm(t.data))
                    for path, t in sorted(model.store.params.items())
                }
                worst = max(norms, key=norms.get)
                raise NumericalError(
                    f"training aborted at epoch {epoch}, batch {start // cfg.batch_size}: "
                    f"{exc} (largest parameter norm {norms[worst]:.3e} at {worst!r})"
                ) from exc
            k = len(batch)
            sums += k * np.array([float(total.data), l_time, l_mark])
            count += k
        row = {
            "epoch": epoch,
            "loss_total": float(sums[0] / count),
            "loss_time": float(sums[1] / count),
            "loss_mark": float(sums[2] / count),
        }
        trace.append(row)
        log.info(
            "epoch %d: loss_total=%.6f loss_time=%.6f loss_mark=%.6f",
            epoch, row["loss_total"], row["loss_time"], row["loss_mark"],
        )
    return trace
