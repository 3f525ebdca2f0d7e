"""Central finite-difference checks for the autodiff primitives and the full loss."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .graph import GraphConfig, build_population_graph
from .model import GateModel, cca_ssl_loss, encode
from .signal import SubjectMeta


def numeric_gradients(f: Callable[..., float], arrays: Sequence[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    """Central differences of scalar ``f(*arrays)``; arrays are perturbed in place and restored."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = f(*arrays)
            flat[i] = orig - h
            down = f(*arrays)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max absolute difference over the larger max magnitude (0 if both vanish)."""
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)))
    return 0.0 if scale == 0 else float(np.max(np.abs(analytic - numeric)) / scale)


def check(fn: Callable[..., ad.Tensor], arrays: Sequence[np.ndarray], h: float = 1e-5) -> float:
    """Worst relative error between backward() and central differences for a scalar ``fn``."""
    leaves = [ad.Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    ad.backward(fn(*leaves))
    work = [np.array(a, dtype=np.float64) for a in arrays]
    numeric = numeric_gradients(lambda *xs: fn(*[ad.Tensor(x) for x in xs]).item(), work, h)
    return max(relative_error(leaf.grad, n) for leaf, n in zip(leaves, numeric))


def _weighted(w: np.ndarray) -> Callable[[ad.Tensor], ad.Tensor]:
    return lambda t: ad.total(ad.hadamard(t, ad.Tensor(w)))


def primitive_cases(rng: np.random.Generator, shape: tuple[int, int] = (5, 4)) -> dict:
    """One scalar-valued probe per primitive on random inputs of ``shape``."""
    n, m = shape
    x, y, bias = rng.standard_normal(shape), rng.standard_normal(shape), rng.standard_normal((1, m))
    wsq, wt, w = rng.standard_normal((n, n)), rng.standard_normal((m, n)), rng.standard_normal(shape)
    r, wr = _weighted(w), _weighted
    labels = rng.integers(0, m, n)
    picks = rng.integers(0, n, n + 1)
    wtake = rng.standard_normal((n + 1, m))
    return {
        "matmul": (lambda a, b: wr(wsq)(ad.matmul(a, ad.transpose(b))), [x, y]),
        "transpose": (lambda a: wr(wt)(ad.transpose(a)), [x]),
        "add": (lambda a, b: r(ad.add(a, b)), [x, bias]),
        "subtract": (lambda a, b: r(ad.subtract(a, b)), [x, y]),
        "scale": (lambda a: r(ad.scale(a, -1.7)), [x]),
        "hadamard": (lambda a, b: r(ad.hadamard(a, b)), [x, y]),
        "elu": (lambda a: r(ad.elu(a)), [x]),
        "row_l2_normalize": (lambda a: r(ad.row_l2_normalize(a)), [x]),
        "column_standardize": (lambda a: r(ad.column_standardize(a)), [x]),
        "frobenius_sq": (lambda a: ad.frobenius_sq(ad.hadamard(a, ad.Tensor(w))), [x]),
        "row_cosine_mean": (lambda a, b: ad.row_cosine_mean(a, b), [x, y]),
        "softmax_cross_entropy": (lambda a: ad.softmax_cross_entropy(a, labels), [x]),
        "mean": (lambda a: ad.mean(ad.hadamard(a, ad.Tensor(w))), [x]),
        "take_rows": (lambda a: wr(wtake)(ad.take_rows(a, picks)), [x]),
    }


def composed_case(rng: np.random.Generator, n_subjects: int = 6, in_dim: int = 5, hidden: int = 3):
    """The two-view loss through the encoder on a toy population graph, as a function of the encoder weights."""
    metas = [SubjectMeta(i % 2, {"sex": "FM"[i % 2], "age": 20.0 + i, "site": "a"}) for i in range(n_subjects)]
    xa, xb = rng.standard_normal((n_subjects, in_dim)), rng.standard_normal((n_subjects, in_dim))
    cfg = GraphConfig(k=2)
    adj_a = build_population_graph(xa, metas, cfg).adjacency
    adj_b = build_population_graph(xb, metas, cfg).adjacency
    model = GateModel.init(in_dim, hidden, rng=rng)
    head = (model.classifier_weight, model.classifier_bias)

    def loss(w, lw, b):
        m = GateModel(w, lw, b, *head)
        return cca_ssl_loss(encode(m, xa, adj_a), encode(m, xb, adj_b), 0.2)

    params = [model.gcn_weight.values, model.linear_weight.values, model.linear_bias.values]
    return loss, params


def max_error(seed: int, h: float = 1e-5) -> dict[str, float]:
    """Worst relative error of every primitive and of the composed loss for one seed."""
    rng = np.random.default_rng(seed)
    out = {name: check(fn, arrays, h) for name, (fn, arrays) in primitive_cases(rng).items()}
    loss, params = composed_case(rng)
    out["encoder+loss"] = check(loss, params, h)
    return out
