"""Origin and target samplers plus MNIST IDX ingestion.

Target batches are always row matrices laid out as [z; y]: the conditioning
block (z_dim columns, possibly none) first, then the data block.
"""

import gzip
import os
import struct
import sys
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from sklearn.datasets import make_swiss_roll

sys.path.append(os.path.dirname(os.path.dirname(__file__)))
from utils.logger_config import get_logger
from utils.validation import (
    BadMagicNumberError,
    ConfigError,
    DatasetFormatError,
    TruncatedFileError,
    ValidationError,
    as_matrix,
    require_probability_vector,
)

logger = get_logger(__name__)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

# Visual defaults for the low-dimensional targets; x stays inside [1, 5]
GMM3_MEANS = ((1.5, 0.5), (3.0, 2.0), (4.5, 1.0))
GMM3_SIGMAS = (0.2, 0.2, 0.2)
SINUSOID_NOISE_SIGMA = 0.1
SWISS_ROLL_NOISE_SIGMA = 0.05
SWISS_ROLL_SCALE = 5.0

TARGET_KINDS = ("gmm3", "noisy_sinusoid", "swiss_roll", "multinoulli", "mnist")
CONDITIONABLE_KINDS = ("gmm3", "noisy_sinusoid", "swiss_roll", "mnist")


def _check_count(count: int) -> int:
    if int(count) != count or count < 0:
        raise ValidationError("sample count must be a nonnegative integer", field="count",
                              details={"count": count})
    return int(count)


# ---------------------------------------------------------------------------
# Origin distribution
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class OriginSpec:
    """
    Mixed Bernoulli/uniform noise.

    With `mixed` the first dim/2 coordinates are Bernoulli(bernoulli_p) and the
    rest Uniform[uniform_low, uniform_high); otherwise every coordinate is uniform.
    """

    dim: int = 6
    bernoulli_p: float = 0.5
    uniform_low: float = 0.0
    uniform_high: float = 1.0
    mixed: bool = True

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigError("origin dimension must be a positive integer", field="origin.dim")
        if self.mixed and self.dim % 2:
            raise ConfigError(f"mixed origin needs an even dimension, got {self.dim}", field="origin.dim")
        if not 0.0 <= self.bernoulli_p <= 1.0:
            raise ConfigError("bernoulli_p must lie in [0, 1]", field="origin.bernoulli_p")
        if not self.uniform_low < self.uniform_high:
            raise ConfigError("uniform_low must be below uniform_high", field="origin.uniform_low")

    @property
    def bernoulli_dims(self) -> int:
        return self.dim // 2 if self.mixed else 0


def sample_origin(spec: OriginSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    count = _check_count(count)
    half = spec.bernoulli_dims
    bits = (rng.random((count, half)) < spec.bernoulli_p).astype(np.float64)
    uniform = rng.uniform(spec.uniform_low, spec.uniform_high, size=(count, spec.dim - half))
    return np.hstack([bits, uniform])


# ---------------------------------------------------------------------------
# Synthetic targets
# ---------------------------------------------------------------------------
def sample_gmm3(count: int, rng: np.random.Generator,
                means: Optional[Sequence[Sequence[float]]] = None,
                sigmas: Optional[Sequence[float]] = None) -> np.ndarray:
    """Equal-weight mixture of three isotropic 2-D Gaussians."""
    count = _check_count(count)
    means = np.asarray(GMM3_MEANS if means is None else means, dtype=np.float64)
    sigmas = np.asarray(GMM3_SIGMAS if sigmas is None else sigmas, dtype=np.float64)
    if means.shape != (3, 2) or sigmas.shape != (3,):
        raise ValidationError("gmm3 needs three 2-D means and three sigmas", field="target.means",
                              details={"means": means.shape, "sigmas": sigmas.shape})
    component = rng.integers(3, size=count)
    noise = rng.standard_normal((count, 2))
    return means[component] + sigmas[component, None] * noise


def sample_noisy_sinusoid(count: int, rng: np.random.Generator, x_low: float = 1.0,
                          x_high: float = 5.0, noise_sigma: float = SINUSOID_NOISE_SIGMA) -> np.ndarray:
    """Rows (x, sin x + noise) with x ~ Uniform[x_low, x_high)."""
    count = _check_count(count)
    if not x_low < x_high:
        raise ValidationError("x_low must be below x_high", field="target.x_low")
    x = rng.uniform(x_low, x_high, size=count)
    y = np.sin(x) + noise_sigma * rng.standard_normal(count)
    return np.column_stack([x, y])


def sample_swiss_roll(count: int, rng: np.random.Generator,
                      noise_sigma: float = SWISS_ROLL_NOISE_SIGMA,
                      scale: float = SWISS_ROLL_SCALE, return_parameter: bool = False):
    """
    2-D spiral (t cos t, t sin t) / scale with t ~ Uniform[1.5π, 4.5π].

    Noise is isotropic with standard deviation `noise_sigma` in output units.
    With `return_parameter` the spiral parameter t of every point is returned too.
    """
    count = _check_count(count)
    if count == 0:
        empty = np.empty((0, 2))
        return (empty, np.empty(0)) if return_parameter else empty
    seed = int(rng.integers(0, 2**31 - 1))
    roll, t = make_swiss_roll(n_samples=count, noise=noise_sigma * scale, random_state=seed)
    points = roll[:, [0, 2]] / scale
    return (points, np.asarray(t)) if return_parameter else points


def sample_multinoulli(probabilities: Sequence[float], count: int,
                       rng: np.random.Generator) -> np.ndarray:
    """One-hot rows; category k drawn with probability p_k."""
    p = require_probability_vector(probabilities)
    count = _check_count(count)
    categories = rng.choice(p.size, size=count, p=p)
    return np.eye(p.size)[categories]


# ---------------------------------------------------------------------------
# MNIST IDX files
# ---------------------------------------------------------------------------
def _read_file(path: str) -> bytes:
    if not os.path.exists(path):
        raise DatasetFormatError(f"file not found: {path}", field="path")
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as f:
        return f.read()


def _header(data: bytes, fields: int, path: str, expected_magic: int) -> tuple:
    size = 4 * fields
    if len(data) < size:
        raise TruncatedFileError(f"header truncated in {path}", field="path",
                                 details={"bytes": len(data), "needed": size})
    values = struct.unpack(f">{fields}I", data[:size])
    if values[0] != expected_magic:
        raise BadMagicNumberError(
            f"bad magic number 0x{values[0]:08x} in {path} (expected 0x{expected_magic:08x})",
            field="path",
            details={"magic": values[0], "expected": expected_magic},
        )
    return values


def read_idx_images(path: str) -> np.ndarray:
    """uint8 array of shape (count, rows, cols)."""
    data = _read_file(path)
    _, count, rows, cols = _header(data, 4, path, IMAGE_MAGIC)
    needed = 16 + count * rows * cols
    if len(data) < needed:
        raise TruncatedFileError(f"image data truncated in {path}", field="path",
                                 details={"bytes": len(data), "needed": needed})
    pixels = np.frombuffer(data, dtype=np.uint8, count=count * rows * cols, offset=16)
    return pixels.reshape(count, rows, cols)


def read_idx_labels(path: str) -> np.ndarray:
    data = _read_file(path)
    _, count = _header(data, 2, path, LABEL_MAGIC)
    if len(data) < 8 + count:
        raise TruncatedFileError(f"label data truncated in {path}", field="path",
                                 details={"bytes": len(data), "needed": 8 + count})
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=8)


@dataclass(frozen=True)
class MnistDataset:
    images: np.ndarray  # (count, rows * cols) in [0, 1]
    labels: np.ndarray  # (count,) in 0..9
    rows: int = 28
    cols: int = 28

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def conditioned(self, normalize_labels: bool = False) -> np.ndarray:
        """Records [z; y] with z the (optionally /9-scaled) label."""
        z = self.labels.astype(np.float64)
        if normalize_labels:
            z = z / 9.0
        return np.column_stack([z, self.images])


def load_mnist(images_path: str, labels_path: str) -> MnistDataset:
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise DatasetFormatError(
            f"image/label count mismatch: {images.shape[0]} images, {labels.shape[0]} labels",
            field="labels_path",
        )
    count, rows, cols = images.shape
    logger.info("Loaded MNIST", extra={"images": count, "rows": rows, "cols": cols})
    return MnistDataset(
        images=images.reshape(count, rows * cols).astype(np.float64) / 255.0,
        labels=labels.astype(np.int64),
        rows=rows,
        cols=cols,
    )


# ---------------------------------------------------------------------------
# Target definitions and sources
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class TargetSpec:
    kind: str
    conditioned: bool = False
    means: Optional[List[List[float]]] = None
    sigmas: Optional[List[float]] = None
    noise_sigma: Optional[float] = None
    x_low: float = 1.0
    x_high: float = 5.0
    scale: float = SWISS_ROLL_SCALE
    probabilities: Optional[List[float]] = None
    images_path: Optional[str] = None
    labels_path: Optional[str] = None
    normalize_labels: bool = False
    subset: Optional[int] = None

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ConfigError(f"unknown target kind '{self.kind}'; expected one of {', '.join(TARGET_KINDS)}",
                              field="target.kind")
        if self.conditioned and self.kind not in CONDITIONABLE_KINDS:
            raise ConfigError(f"target '{self.kind}' cannot be conditioned", field="target.conditioned")
        if self.kind == "multinoulli":
            try:
                require_probability_vector(self.probabilities, name="target.probabilities")
            except ValidationError as e:
                raise ConfigError(e.message, field="target.probabilities") from e
        if self.kind == "mnist" and not (self.images_path and self.labels_path):
            raise ConfigError("mnist target needs images_path and labels_path", field="target.images_path")
        if self.subset is not None and self.subset < 1:
            raise ConfigError("subset must be positive", field="target.subset")

    @property
    def z_dim(self) -> int:
        return 1 if self.conditioned else 0

    @property
    def categorical(self) -> bool:
        return self.kind == "multinoulli"


class TargetSource:
    """Draws [z; y] target batches from a generator function or a finite record set."""

    def __init__(self, draw: Callable[[int, np.random.Generator], np.ndarray], dim: int,
                 z_dim: int = 0, probabilities: Optional[np.ndarray] = None, name: str = "target"):
        self._draw = draw
        self.dim = int(dim)
        self.z_dim = int(z_dim)
        self.probabilities = probabilities
        self.name = name

    @property
    def y_dim(self) -> int:
        return self.dim - self.z_dim

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        batch = self._draw(_check_count(count), rng)
        return as_matrix(batch, name=self.name, dim=self.dim) if len(batch) else np.empty((0, self.dim))

    @classmethod
    def from_records(cls, records, z_dim: int = 0, name: str = "dataset") -> "TargetSource":
        """Finite dataset sampled uniformly with replacement."""
        records = as_matrix(records, name=name)
        if records.shape[0] == 0:
            raise ValidationError("dataset is empty", field=name)

        def draw(count, rng):
            return records[rng.integers(records.shape[0], size=count)]

        return cls(draw, dim=records.shape[1], z_dim=z_dim, name=name)


def build_target_source(spec: TargetSpec) -> TargetSource:
    if spec.kind == "gmm3":
        return TargetSource(lambda n, rng: sample_gmm3(n, rng, spec.means, spec.sigmas),
                            dim=2, z_dim=spec.z_dim, name="gmm3")
    if spec.kind == "noisy_sinusoid":
        sigma = SINUSOID_NOISE_SIGMA if spec.noise_sigma is None else spec.noise_sigma
        return TargetSource(lambda n, rng: sample_noisy_sinusoid(n, rng, spec.x_low, spec.x_high, sigma),
                            dim=2, z_dim=spec.z_dim, name="noisy_sinusoid")
    if spec.kind == "swiss_roll":
        sigma = SWISS_ROLL_NOISE_SIGMA if spec.noise_sigma is None else spec.noise_sigma
        return TargetSource(lambda n, rng: sample_swiss_roll(n, rng, sigma, spec.scale),
                            dim=2, z_dim=spec.z_dim, name="swiss_roll")
    if spec.kind == "multinoulli":
        p = require_probability_vector(spec.probabilities)
        return TargetSource(lambda n, rng: sample_multinoulli(p, n, rng),
                            dim=p.size, probabilities=p, name="multinoulli")

    dataset = load_mnist(spec.images_path, spec.labels_path)
    if spec.conditioned:
        records = dataset.conditioned(spec.normalize_labels)
    else:
        records = dataset.images
    if spec.subset is not None:
        records = records[:spec.subset]
    return TargetSource.from_records(records, z_dim=spec.z_dim, name="mnist")
