"""Independent reference computations used by the tests.

None of these call into the code paths they check.
"""
import math

import numpy as np
from scipy import integrate


def central_difference(f, arrays, h=1e-5):
    """Gradients of scalar ``f(*arrays)`` w.r.t. every array by central differences."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            up = f(*arrays)
            arr[idx] = orig - h
            down = f(*arrays)
            arr[idx] = orig
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def relative_error(analytic, numeric):
    """``max|a - n| / max(max|a|, max|n|)``; 0 when both vanish."""
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric)) / scale)


def jacobi_eigenvalues(sym, tol=1e-14, max_sweeps=100):
    """Cyclic Jacobi rotations on a symmetric matrix."""
    a = np.array(sym, dtype=float)
    n = a.shape[0]
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off < tol * max(1.0, np.abs(a).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))[::-1]


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def welch_pvalue_quadrature(a, b):
    """Welch t statistic and its two-sided p from integrating the t density."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    t = (a.mean() - b.mean()) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    log_c = math.lgamma((df + 1) / 2) - math.lgamma(df / 2) - 0.5 * math.log(df * math.pi)

    def density(x):
        return math.exp(log_c - (df + 1) / 2 * math.log1p(x * x / df))

    tail, _ = integrate.quad(density, abs(t), np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    return t, 2 * tail


def loop_cca_loss(za, zb, gamma):
    """Scalar-loop evaluation of the two-view loss."""
    n, h = len(za), len(za[0])
    cos_sum = 0.0
    for i in range(n):
        dot = sum(za[i][k] * zb[i][k] for k in range(h))
        na = math.sqrt(sum(x * x for x in za[i]))
        nb = math.sqrt(sum(x * x for x in zb[i]))
        cos_sum += dot / (na * nb)
    pen = 0.0
    for z in (za, zb):
        for p in range(h):
            for q in range(h):
                g = sum(z[i][p] * z[i][q] for i in range(n))
                pen += (g - (1.0 if p == q else 0.0)) ** 2
    return -cos_sum / n + gamma * pen
