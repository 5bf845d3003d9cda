"""Encoder (per-epoch conv stack + self-attention over the sequence), decoder, classifier."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .autodiff import functional as F
from .autodiff.nn import ConvTranspose1d, Conv1d, LayerNorm, Linear, Module, parameter
from .autodiff.tensor import Tensor, resolve_dtype
from .errors import ContractError, ShapeError


@dataclass
class ModelConfig:
    n: int = 256                 # samples per epoch
    C: int = 2                   # channels
    L: int = 8                   # epochs per sequence
    d: int = 64                  # feature dimension
    N: int = 5                   # number of stages
    conv_kernels: tuple = (7, 5, 3)
    conv_widths: tuple = (4, 8, 16)
    attn_layers: int = 2
    heads: int = 4
    ff_mult: int = 2
    dropout: float = 0.1
    precision: str = "f32"

    def __post_init__(self):
        self.conv_kernels = tuple(int(k) for k in self.conv_kernels)
        self.conv_widths = tuple(int(w) for w in self.conv_widths)
        self.validate()

    def validate(self) -> None:
        for name in ("n", "C", "L", "d", "N", "attn_layers", "heads", "ff_mult"):
            if getattr(self, name) <= 0:
                raise ContractError(f"model.{name} must be positive, got {getattr(self, name)}")
        if self.L < 2:
            raise ContractError(f"model.L must be >= 2, got {self.L}")
        if self.d % self.heads:
            raise ContractError(f"model.d={self.d} not divisible by model.heads={self.heads}")
        if len(self.conv_kernels) != len(self.conv_widths) or not self.conv_kernels:
            raise ContractError("model.conv_kernels and model.conv_widths must be non-empty and equal length")
        if any(k <= 0 or k % 2 == 0 for k in self.conv_kernels):
            raise ContractError(f"model.conv_kernels must be odd and positive, got {self.conv_kernels}")
        if self.n % self.downsample:
            raise ContractError(f"model.n={self.n} must be divisible by {self.downsample} (one halving per conv block)")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError(f"model.dropout must be in [0, 1), got {self.dropout}")
        resolve_dtype(self.precision)

    @property
    def downsample(self) -> int:
        return 2 ** len(self.conv_kernels)

    @property
    def dtype(self) -> np.dtype:
        return resolve_dtype(self.precision)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["conv_kernels"] = list(self.conv_kernels)
        out["conv_widths"] = list(self.conv_widths)
        return out


DESK = ModelConfig()
PAPER_SCALE = ModelConfig(n=3000, C=2, L=20, d=512, conv_widths=(64, 128, 128))


@dataclass
class FeatureBatch:
    """Sequence features ``(B, L, d)`` plus the source-domain id of each sequence."""
    features: Tensor
    domains: Optional[np.ndarray] = None
    pre_attention: Optional[Tensor] = field(default=None, repr=False)

    @property
    def shape(self) -> tuple:
        return self.features.shape


def _as_tensor(x, dtype) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x), dtype=dtype)


class ConvBlock(Module):
    """conv -> stride-2 average pooling -> layer norm over channels -> GELU."""

    def __init__(self, c_in, c_out, kernel, rng, dtype):
        self.conv = Conv1d(c_in, c_out, kernel, rng, dtype)
        self.norm = LayerNorm(c_out, dtype)

    def forward(self, x: Tensor) -> Tensor:
        return F.gelu(self.norm(F.avg_pool1d(self.conv(x), 2)))


class SelfAttention(Module):
    def __init__(self, d, heads, rng, dtype):
        self.heads = heads
        self.qkv = Linear(d, 3 * d, rng, dtype)
        self.out = Linear(d, d, rng, dtype)

    def forward(self, x: Tensor) -> Tensor:
        b, length, d = x.shape
        h, dh = self.heads, d // self.heads
        qkv = F.transpose(F.reshape(self.qkv(x), (b, length, 3, h, dh)), (2, 0, 3, 1, 4))
        q, k, v = qkv[0], qkv[1], qkv[2]                                  # (B, h, L, dh)
        scores = F.matmul(q, F.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(dh))
        ctx = F.matmul(F.softmax(scores, axis=-1), v)
        return self.out(F.reshape(F.transpose(ctx, (0, 2, 1, 3)), (b, length, d)))


class TransformerLayer(Module):
    """Pre-norm transformer layer; the residual stream itself is never normalized.

    Keeping the output un-normalized lets the feature scale shrink freely, which
    the alignment penalties (quadratic and quartic in that scale) depend on.
    """

    def __init__(self, d, heads, ff, dropout, rng, dtype):
        self.attn = SelfAttention(d, heads, rng, dtype)
        self.norm1 = LayerNorm(d, dtype)
        self.ff1 = Linear(d, ff, rng, dtype)
        self.ff2 = Linear(ff, d, rng, dtype)
        self.norm2 = LayerNorm(d, dtype)
        self.dropout = dropout

    def forward(self, x: Tensor, rng) -> Tensor:
        x = x + F.dropout(self.attn(self.norm1(x)), self.dropout, rng, self.training)
        y = self.ff2(F.gelu(self.ff1(self.norm2(x))))
        return x + F.dropout(y, self.dropout, rng, self.training)


class Encoder(Module):
    def __init__(self, cfg: ModelConfig, rng, dtype):
        self.cfg = cfg
        widths = (cfg.C,) + cfg.conv_widths
        self.blocks = [ConvBlock(widths[i], widths[i + 1], k, rng, dtype)
                       for i, k in enumerate(cfg.conv_kernels)]
        self.proj = Linear(cfg.conv_widths[-1], cfg.d, rng, dtype)
        self.pos = parameter(rng.normal(0.0, 0.02, (cfg.L, cfg.d)), dtype)
        self.layers = [TransformerLayer(cfg.d, cfg.heads, cfg.ff_mult * cfg.d, cfg.dropout, rng, dtype)
                       for _ in range(cfg.attn_layers)]

    def epoch_features(self, x: Tensor) -> Tensor:
        """Intra-epoch stage: the conv stack applied to every epoch independently."""
        b, length, n, c = x.shape
        z = F.reshape(x, (b * length, n, c))
        for block in self.blocks:
            z = block(z)
        z = self.proj(F.mean(z, axis=1))
        return F.reshape(z, (b, length, self.cfg.d))

    def forward(self, x: Tensor, rng) -> tuple:
        local = self.epoch_features(x)
        h = F.dropout(local + self.pos, self.cfg.dropout, rng, self.training)
        for layer in self.layers:
            h = layer(h, rng)
        return h, local


class Decoder(Module):
    """Projection to a short multi-channel signal, then transposed convs mirroring the encoder."""

    def __init__(self, cfg: ModelConfig, rng, dtype):
        self.cfg = cfg
        self.t0 = cfg.n // cfg.downsample
        self.proj = Linear(cfg.d, self.t0 * cfg.conv_widths[-1], rng, dtype)
        widths = (cfg.C,) + cfg.conv_widths
        self.ups = []
        self.norms = []
        for i in reversed(range(len(cfg.conv_kernels))):
            k = cfg.conv_kernels[i]
            self.ups.append(ConvTranspose1d(widths[i + 1], widths[i], k, rng, dtype,
                                            stride=2, padding=k // 2, output_padding=1))
            self.norms.append(LayerNorm(widths[i], dtype) if i > 0 else None)
        # Output layer starts at zero: until the decoder finds predictable structure,
        # the reconstruction term sends no gradient into the encoder.
        last = self.ups[-1]
        last.weight = parameter(np.zeros(last.weight.shape), dtype)

    def forward(self, h: Tensor) -> Tensor:
        b, length, d = h.shape
        z = F.reshape(self.proj(F.reshape(h, (b * length, d))), (b * length, self.t0, self.cfg.conv_widths[-1]))
        for up, norm in zip(self.ups, self.norms):
            z = up(F.gelu(z))
            if norm is not None:
                z = norm(z)
        return F.reshape(z, (b, length, self.cfg.n, self.cfg.C))


class SeqModel(Module):
    """Encoder ``g``, decoder ``d`` and per-epoch softmax classifier ``f``."""

    def __init__(self, cfg: ModelConfig = DESK, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        dtype = cfg.dtype
        init = np.random.default_rng(seed)
        self.encoder = Encoder(cfg, init, dtype)
        self.decoder = Decoder(cfg, init, dtype)
        self.classifier = Linear(cfg.d, cfg.N, init, dtype)
        self.dropout_rng = np.random.default_rng([seed, 1])

    def _check_input(self, x) -> Tensor:
        x = _as_tensor(x, self.cfg.dtype)
        want = (self.cfg.L, self.cfg.n, self.cfg.C)
        if x.ndim != 4 or tuple(x.shape[1:]) != want:
            raise ShapeError(f"expected batch of shape (B, {want[0]}, {want[1]}, {want[2]}), got {x.shape}")
        return x

    def encode(self, x, domains=None) -> FeatureBatch:
        x = self._check_input(x)
        h, local = self.encoder(x, self.dropout_rng)
        return FeatureBatch(h, None if domains is None else np.asarray(domains), local)

    def _features(self, feats) -> Tensor:
        h = feats.features if isinstance(feats, FeatureBatch) else _as_tensor(feats, self.cfg.dtype)
        if h.ndim != 3 or h.shape[2] != self.cfg.d:
            raise ShapeError(f"expected features (B, L, {self.cfg.d}), got {h.shape}")
        return h

    def decode(self, feats) -> Tensor:
        return self.decoder(self._features(feats))

    def logits(self, feats) -> Tensor:
        return self.classifier(self._features(feats))

    def classify(self, feats) -> Tensor:
        """Stage probabilities ``(B, L, N)``."""
        return F.softmax(self.logits(feats), axis=-1)

    def predict(self, x, batch_size: int = 64) -> np.ndarray:
        """Eval-mode argmax stage per epoch, ``(B, L)``."""
        was_training = self.training
        self.eval()
        try:
            x = np.asarray(x)
            out = [np.argmax(self.logits(self.encode(x[i : i + batch_size])).data, axis=-1)
                   for i in range(0, len(x), batch_size)]
        finally:
            self.train(was_training)
        return np.concatenate(out, axis=0) if out else np.zeros((0, self.cfg.L), dtype=np.int64)
