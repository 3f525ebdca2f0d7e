"""GCN encoder, linear classification head and the two training losses."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, IncompatibleCheckpointError, ShapeError

CHECKPOINT_FORMAT = "gate-ckpt-v1"
ENCODER_PARAMS = ("gcn_weight", "linear_weight", "linear_bias")
HEAD_PARAMS = ("classifier_weight", "classifier_bias")


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@dataclass
class GateModel:
    """One graph convolution, one linear layer (both ELU), then a linear head."""

    gcn_weight: Tensor
    linear_weight: Tensor
    linear_bias: Tensor
    classifier_weight: Tensor
    classifier_bias: Tensor

    @classmethod
    def init(cls, in_dim: int, hidden: int = 256, n_classes: int = 2,
             rng: np.random.Generator | int | None = None) -> "GateModel":
        rng = np.random.default_rng(rng)
        return cls(
            Tensor(glorot(rng, in_dim, hidden), requires_grad=True),
            Tensor(glorot(rng, hidden, hidden), requires_grad=True),
            Tensor(np.zeros((1, hidden)), requires_grad=True),
            Tensor(glorot(rng, hidden, n_classes), requires_grad=True),
            Tensor(np.zeros((1, n_classes)), requires_grad=True),
        )

    @property
    def in_dim(self) -> int:
        return self.gcn_weight.shape[0]

    @property
    def hidden(self) -> int:
        return self.gcn_weight.shape[1]

    def named_parameters(self) -> dict[str, Tensor]:
        return {name: getattr(self, name) for name in ENCODER_PARAMS + HEAD_PARAMS}

    def encoder_parameters(self) -> list[Tensor]:
        return [getattr(self, name) for name in ENCODER_PARAMS]

    def head_parameters(self) -> list[Tensor]:
        return [getattr(self, name) for name in HEAD_PARAMS]

    def parameters(self) -> list[Tensor]:
        return self.encoder_parameters() + self.head_parameters()

    def copy(self) -> "GateModel":
        return GateModel(**{k: Tensor(v.values.copy(), requires_grad=True)
                            for k, v in self.named_parameters().items()})

    def reset_head(self, rng: np.random.Generator | int | None = None) -> None:
        rng = np.random.default_rng(rng)
        n_classes = self.classifier_weight.shape[1]
        self.classifier_weight = Tensor(glorot(rng, self.hidden, n_classes), requires_grad=True)
        self.classifier_bias = Tensor(np.zeros((1, n_classes)), requires_grad=True)


def embed(model: GateModel, features, adjacency) -> Tensor:
    """Encoder output before column standardization: ``elu(elu(A X W) W_lin + b)``.

    ``adjacency=None`` stands for the identity.
    """
    x = ad.as_tensor(features)
    n = x.shape[0]
    if x.values.ndim != 2 or x.shape[1] != model.in_dim:
        raise ShapeError(f"features of shape {x.shape} do not match model input dim {model.in_dim}")
    if adjacency is not None:
        a = ad.as_tensor(adjacency)
        if a.shape != (n, n):
            raise ShapeError(f"adjacency {a.shape} does not match {n} subjects")
        if _is_identity(a.values):
            adjacency = None
    if adjacency is None:
        h1 = ad.elu(ad.matmul(x, model.gcn_weight))
    else:
        h1 = ad.elu(ad.matmul(a, ad.matmul(x, model.gcn_weight)))
    return ad.elu(ad.add(ad.matmul(h1, model.linear_weight), model.linear_bias))


def encode(model: GateModel, features, adjacency) -> Tensor:
    """Normalized embedding ``Z`` (columns zero-mean, unit sum of squares)."""
    return ad.column_standardize(embed(model, features, adjacency))


def _is_identity(a: np.ndarray) -> bool:
    return a.shape[0] == a.shape[1] and np.array_equal(a, np.eye(a.shape[0]))


def cca_ssl_loss(z_a, z_b, gamma: float) -> Tensor:
    """Negative mean row cosine plus ``gamma`` times both views' decorrelation penalty."""
    if gamma < 0:
        raise ConfigError(f"gamma must be nonnegative, got {gamma}")
    z_a, z_b = ad.as_tensor(z_a), ad.as_tensor(z_b)
    if z_a.shape != z_b.shape:
        raise ShapeError(f"view embeddings differ in shape: {z_a.shape} vs {z_b.shape}")
    eye = np.eye(z_a.shape[1])
    penalty = ad.add(decorrelation_penalty(z_a, eye), decorrelation_penalty(z_b, eye))
    return ad.add(ad.scale(ad.row_cosine_mean(z_a, z_b), -1.0), ad.scale(penalty, gamma))


def decorrelation_penalty(z, eye: np.ndarray | None = None) -> Tensor:
    """``||Z^T Z - I||_F^2``."""
    z = ad.as_tensor(z)
    if eye is None:
        eye = np.eye(z.shape[1])
    return ad.frobenius_sq(ad.subtract(ad.matmul(ad.transpose(z), z), eye))


def classify(model: GateModel, features) -> Tensor:
    """Logits with the graph replaced by the identity."""
    z = encode(model, features, None)
    return ad.add(ad.matmul(z, model.classifier_weight), model.classifier_bias)


def cross_entropy(logits, labels) -> Tensor:
    return ad.softmax_cross_entropy(logits, np.asarray(labels, dtype=np.int64))


def predict_proba(model: GateModel, features) -> np.ndarray:
    return ad.softmax(classify(model, features).values)


# -- checkpoints --------------------------------------------------------------

def save_checkpoint(model: GateModel, path: str | Path, config_hash: str = "",
                    extra: dict | None = None) -> Path:
    """Write parameters to an ``.npz`` container with a JSON metadata record."""
    path = Path(path)
    meta = {
        "format": CHECKPOINT_FORMAT,
        "config_hash": config_hash,
        "shapes": {k: list(v.shape) for k, v in model.named_parameters().items()},
        **(extra or {}),
    }
    arrays = {k: v.values for k, v in model.named_parameters().items()}
    with path.open("wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    return path


def load_checkpoint(path: str | Path, config_hash: str | None = None) -> tuple[GateModel, dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise IncompatibleCheckpointError(f"{path}: unknown checkpoint format {meta.get('format')!r}")
        if config_hash is not None and meta.get("config_hash") != config_hash:
            raise IncompatibleCheckpointError(
                f"{path}: checkpoint config hash {meta.get('config_hash')} != {config_hash}")
        params = {k: Tensor(data[k].copy(), requires_grad=True) for k in ENCODER_PARAMS + HEAD_PARAMS}
    return GateModel(**params), meta
