"""Labeled multi-domain oscillatory signals with a Markov stage process.

Each domain draws stage sequences from a shared transition matrix and renders
every epoch as a stage-dependent mixture of sinusoids plus coloured noise.  The
domain-specific distortions (frequency scaling, noise colour, waveform skew and
a rotation between channels) are all invariant to per-recording z-scoring, so
they survive normalization and give the models a real transfer problem.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, ShapeError

N_STAGES = 5
N_DOMAINS = 5
STAGE_NAMES = ("W", "N1", "N2", "N3", "REM")
FORMAT = "seqdg-domain/1"

# (frequency Hz, amplitude on channel 0, amplitude on channel 1) per stage.
DEFAULT_COMPONENTS = (
    ((10.0, 1.0, 0.3), (20.0, 0.5, 0.2), (0.6, 0.2, 1.2)),     # W: alpha/beta, eye movement
    ((6.0, 1.0, 0.4), (10.0, 0.3, 0.1), (0.6, 0.1, 0.3)),      # N1: theta
    ((13.0, 0.8, 0.3), (4.0, 0.8, 0.5)),                      # N2: spindle + slower wave
    ((2.0, 2.0, 1.0), (1.0, 0.8, 0.6)),                       # N3: slow high-amplitude waves
    ((5.0, 0.8, 0.3), (8.0, 0.5, 0.2), (1.0, 0.2, 1.2)),      # REM: mixed, rapid eye movement
)

DEFAULT_TRANSITIONS = (
    (0.80, 0.12, 0.04, 0.01, 0.03),
    (0.08, 0.50, 0.30, 0.02, 0.10),
    (0.03, 0.05, 0.75, 0.12, 0.05),
    (0.02, 0.01, 0.15, 0.82, 0.00),
    (0.05, 0.07, 0.08, 0.00, 0.80),
)

# Per-domain shift directions in [-1, 1]; scaled by the benchmark magnitude.
# Columns: frequency offset, noise tilt, waveform asymmetry, channel-mixing angle.
_SHIFT_DIRECTIONS = np.array([
    [-1.0, 0.5, 0.0, 1.0],
    [-0.5, -1.0, 1.0, -0.5],
    [0.0, 1.0, -0.5, 0.0],
    [0.5, -0.5, -1.0, -1.0],
    [1.0, 0.0, 0.5, 0.5],
])
_SHIFT_SCALE = np.array([0.15, 0.8, 0.6, math.pi / 6])


@dataclass(frozen=True)
class DomainSpec:
    domain_id: int
    seed: int
    components: tuple = DEFAULT_COMPONENTS
    transitions: tuple = DEFAULT_TRANSITIONS
    freq_offset: float = 0.0     # relative: every frequency is multiplied by (1 + freq_offset)
    noise_tilt: float = 1.0      # noise power spectrum falls as 1/f**tilt
    asymmetry: float = 0.0       # phase-distortion coefficient, |a| < 1; 0 gives pure sinusoids
    mix_angle: float = 0.0       # rotation (radians) applied to each channel pair
    noise_level: float = 0.6
    sample_rate: float = 100.0
    n: int = 256
    C: int = 2
    L: int = 8

    def validate(self) -> None:
        if len(self.components) != N_STAGES:
            raise ContractError(f"spec needs components for {N_STAGES} stages, got {len(self.components)}")
        trans = np.asarray(self.transitions, dtype=np.float64)
        if trans.shape != (N_STAGES, N_STAGES):
            raise ContractError(f"transition matrix must be {N_STAGES}x{N_STAGES}, got {trans.shape}")
        if np.any(trans < 0) or not np.allclose(trans.sum(axis=1), 1.0, atol=1e-12):
            raise ContractError("transition matrix rows must be non-negative and sum to 1")
        nyquist = self.sample_rate / 2
        for stage, comps in enumerate(self.components):
            for freq, *amps in comps:
                f = freq * (1.0 + self.freq_offset)
                if not 0.0 < f < nyquist:
                    raise ContractError(f"stage {stage}: shifted frequency {f:.3f} Hz outside (0, {nyquist})")
                if len(amps) != self.C:
                    raise ContractError(f"stage {stage}: expected {self.C} channel amplitudes, got {len(amps)}")
        if not -1.0 < self.asymmetry < 1.0:
            raise ContractError(f"asymmetry must lie in (-1, 1), got {self.asymmetry}")
        for name in ("n", "C", "L"):
            if getattr(self, name) <= 0:
                raise ContractError(f"spec.{name} must be positive")
        if self.noise_level < 0:
            raise ContractError("noise_level must be non-negative")

    def stationary(self) -> np.ndarray:
        return stationary_distribution(self.transitions)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["components"] = [[list(c) for c in comps] for comps in self.components]
        out["transitions"] = [list(r) for r in self.transitions]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        d = dict(d)
        d["components"] = tuple(tuple(tuple(float(v) for v in c) for c in comps) for comps in d["components"])
        d["transitions"] = tuple(tuple(float(v) for v in r) for r in d["transitions"])
        return cls(**d)


@dataclass
class DomainDataset:
    x: np.ndarray                 # (count, L, n, C) float32, z-scored per recording
    y: np.ndarray                 # (count, L) uint8 stage labels
    spec: DomainSpec
    norm_mean: np.ndarray         # (count, C) pre-normalization channel means
    norm_std: np.ndarray          # (count, C) pre-normalization channel stds
    index: Optional[np.ndarray] = field(default=None)  # rows of the parent dataset, for splits

    @property
    def domain_id(self) -> int:
        return self.spec.domain_id

    def __len__(self) -> int:
        return self.x.shape[0]

    def subset(self, rows) -> "DomainDataset":
        rows = np.asarray(rows, dtype=np.int64)
        parent = self.index if self.index is not None else np.arange(len(self))
        return DomainDataset(self.x[rows], self.y[rows], self.spec, self.norm_mean[rows],
                             self.norm_std[rows], parent[rows])


# ------------------------------------------------------------------ generation

def stationary_distribution(transitions) -> np.ndarray:
    trans = np.asarray(transitions, dtype=np.float64)
    vals, vecs = np.linalg.eig(trans.T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
    return v / v.sum()


def sample_stages(transitions, count: int, length: int, rng) -> np.ndarray:
    """Markov stage paths, initial stage from the stationary distribution."""
    trans = np.asarray(transitions, dtype=np.float64)
    cum = np.cumsum(trans, axis=1)
    cum[:, -1] = 1.0
    init = np.cumsum(stationary_distribution(trans))
    init[-1] = 1.0
    u = rng.random((count, length))
    out = np.empty((count, length), dtype=np.uint8)
    out[:, 0] = np.searchsorted(init, u[:, 0], side="right")
    for k in range(1, length):
        out[:, k] = [np.searchsorted(cum[s], v, side="right") for s, v in zip(out[:, k - 1], u[:, k])]
    return out


def colored_noise(shape, tilt: float, rng) -> np.ndarray:
    """Unit-variance noise along the last axis with power spectrum ~ 1/f**tilt (DC removed)."""
    n = shape[-1]
    spec = np.fft.rfft(rng.standard_normal(shape), axis=-1)
    f = np.fft.rfftfreq(n)
    gain = np.zeros_like(f)
    gain[1:] = f[1:] ** (-tilt / 2.0)
    noise = np.fft.irfft(spec * gain, n=n, axis=-1)
    return noise / noise.std(axis=-1, keepdims=True)


def mix_channels(x: np.ndarray, angle: float) -> np.ndarray:
    """Rotate consecutive channel pairs (last axis) by ``angle``."""
    if angle == 0.0 or x.shape[-1] < 2:
        return x
    c, s = math.cos(angle), math.sin(angle)
    out = x.copy()
    for a in range(0, x.shape[-1] - 1, 2):
        out[..., a] = c * x[..., a] - s * x[..., a + 1]
        out[..., a + 1] = s * x[..., a] + c * x[..., a + 1]
    return out


def render_epochs(spec: DomainSpec, stages: np.ndarray, rng) -> np.ndarray:
    """Raw (unnormalized) signals ``stages.shape + (n, C)`` for the given stage labels."""
    flat = stages.reshape(-1)
    m = flat.size
    t = np.arange(spec.n) / spec.sample_rate
    sig = np.zeros((m, spec.n, spec.C))
    scale = 1.0 + spec.freq_offset
    for stage, comps in enumerate(spec.components):
        rows = np.flatnonzero(flat == stage)
        if rows.size == 0:
            continue
        for freq, *amps in comps:
            jitter_f = 1.0 + 0.03 * rng.standard_normal(rows.size)
            jitter_a = rng.uniform(0.7, 1.3, rows.size)
            phase = rng.uniform(0.0, 2 * np.pi, rows.size)
            arg = 2 * np.pi * freq * scale * jitter_f[:, None] * t[None, :] + phase[:, None]
            wave = np.sin(arg + spec.asymmetry * np.sin(arg))
            sig[rows] += (jitter_a[:, None] * wave)[:, :, None] * np.asarray(amps)[None, None, :]
    noise = colored_noise((m, spec.C, spec.n), spec.noise_tilt, rng).transpose(0, 2, 1)
    sig = mix_channels(sig + spec.noise_level * noise, spec.mix_angle)
    return sig.reshape(stages.shape + (spec.n, spec.C))


def zscore(x: np.ndarray):
    """Normalize each recording (first axis) per channel (last axis)."""
    axes = tuple(range(1, x.ndim - 1))
    mean = x.mean(axis=axes, keepdims=True)
    std = x.std(axis=axes, keepdims=True)
    std = np.where(std > 0, std, 1.0)
    return (x - mean) / std, mean.reshape(x.shape[0], -1), std.reshape(x.shape[0], -1)


def generate_domain(spec: DomainSpec, sequences: int) -> DomainDataset:
    spec.validate()
    if sequences <= 0:
        raise ContractError(f"sequences must be positive, got {sequences}")
    rng = np.random.default_rng(spec.seed)
    stages = sample_stages(spec.transitions, sequences, spec.L, rng)
    raw = render_epochs(spec, stages, rng)
    x, mean, std = zscore(raw)
    # recentre after the float32 cast so the stored data itself is mean-free
    x32 = x.astype(np.float32)
    x32 -= x32.mean(axis=(1, 2), keepdims=True, dtype=np.float64).astype(np.float32)
    return DomainDataset(x32, stages, spec, mean, std)


def benchmark_specs(seed: int, magnitude: float, **overrides) -> list:
    if magnitude < 0:
        raise ContractError(f"shift magnitude must be >= 0, got {magnitude}")
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(N_DOMAINS)]
    specs = []
    for k, direction in enumerate(_SHIFT_DIRECTIONS):
        offset, tilt, asym, angle = magnitude * direction * _SHIFT_SCALE
        specs.append(DomainSpec(domain_id=k, seed=seeds[k], freq_offset=float(offset),
                                noise_tilt=float(1.0 + tilt), asymmetry=float(asym),
                                mix_angle=float(angle), **overrides))
    return specs


def make_benchmark(seed: int = 0, magnitude: float = 1.0, sequences: int = 200, **overrides) -> list:
    """Five domains sharing stage semantics, shifted apart by ``magnitude``."""
    return [generate_domain(spec, sequences) for spec in benchmark_specs(seed, magnitude, **overrides)]


def split_domain(ds: DomainDataset, fraction: float = 0.8, seed: int = 0):
    """Disjoint sequence-level (train, validation) split."""
    if not 0.0 < fraction < 1.0:
        raise ContractError(f"train fraction must be in (0, 1), got {fraction}")
    n_train = int(round(fraction * len(ds)))
    if n_train == 0 or n_train == len(ds):
        raise ContractError(f"split of {len(ds)} sequences at {fraction} leaves an empty side")
    perm = np.random.default_rng([seed, ds.domain_id]).permutation(len(ds))
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))


# ------------------------------------------------------------------ file format

def domain_filename(domain_id: int) -> str:
    return f"domain_{domain_id}.bin"


def save_domain(path, ds: DomainDataset) -> None:
    x = np.ascontiguousarray(ds.x, dtype="<f4")
    y = np.ascontiguousarray(ds.y, dtype=np.uint8)
    header = {
        "format": FORMAT,
        "domain_id": ds.domain_id,
        "shape": list(x.shape),
        "label_shape": list(y.shape),
        "spec": ds.spec.to_dict(),
        "byte_order": "little",
        "dtype": "f32",
        "norm_mean": ds.norm_mean.tolist(),
        "norm_std": ds.norm_std.tolist(),
    }
    if ds.index is not None:
        header["index"] = ds.index.tolist()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(x.tobytes())
        fh.write(y.tobytes())
    os.replace(tmp, path)


def load_domain(path) -> DomainDataset:
    with open(path, "rb") as fh:
        line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ContractError(f"{path}: unreadable header ({exc})") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise ContractError(f"{path}: not a {FORMAT} file")
    if header.get("byte_order") != "little" or header.get("dtype") != "f32":
        raise ContractError(f"{path}: unsupported encoding {header.get('byte_order')}/{header.get('dtype')}")
    shape, lshape = tuple(header["shape"]), tuple(header["label_shape"])
    nx = int(np.prod(shape)) * 4
    ny = int(np.prod(lshape))
    if len(payload) != nx + ny:
        raise ShapeError(f"{path}: payload has {len(payload)} bytes, header implies {nx + ny}")
    x = np.frombuffer(payload[:nx], dtype="<f4").reshape(shape).astype(np.float32)
    y = np.frombuffer(payload[nx:], dtype=np.uint8).reshape(lshape).copy()
    if y.size and y.max() >= N_STAGES:
        raise ContractError(f"{path}: label {int(y.max())} out of range")
    spec = DomainSpec.from_dict(header["spec"])
    index = np.asarray(header["index"], dtype=np.int64) if "index" in header else None
    return DomainDataset(x, y, spec, np.asarray(header["norm_mean"], dtype=np.float64),
                         np.asarray(header["norm_std"], dtype=np.float64), index)


def save_benchmark(directory, datasets: Sequence[DomainDataset]) -> list:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for ds in datasets:
        path = os.path.join(directory, domain_filename(ds.domain_id))
        save_domain(path, ds)
        paths.append(path)
    return paths


def clone_domains(ds: DomainDataset, count: int = N_DOMAINS) -> list:
    """``count`` copies of one dataset relabelled as distinct domains (identical content)."""
    return [DomainDataset(ds.x, ds.y, replace(ds.spec, domain_id=k), ds.norm_mean, ds.norm_std, ds.index)
            for k in range(count)]
