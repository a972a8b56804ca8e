"""Kernel SVMs: RBF/polynomial kernels, an SMO dual solver and multiclass wrappers.

The binary solver minimizes ``0.5 a'Qa - sum(a)`` subject to ``0 <= a <= C`` and
``y'a = 0`` with ``Q_ij = y_i y_j K(x_i, x_j)``. Each step picks the maximal
violating pair and moves it analytically along the equality constraint.
"""
from __future__ import annotations

import json
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np

from ._accel import USE_NUMBA, njit

log = logging.getLogger(__name__)

RBF, POLY = 0, 1
_TAU = 1e-12
MODEL_FORMAT = "ecg-ident/model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    sigma: float = 0.5
    a: float = 1.0
    b: float = 0.0
    degree: float = 2.0

    def __post_init__(self):
        if self.kind not in ("rbf", "poly"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf" and not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.kind == "poly" and not self.degree > 0:
            raise ValueError("polynomial degree must be positive")

    @property
    def code(self) -> int:
        return RBF if self.kind == "rbf" else POLY

    @property
    def gamma(self) -> float:
        return 1.0 / (2.0 * self.sigma ** 2)

    @property
    def integer_degree(self) -> bool:
        return float(self.degree).is_integer()

    def to_dict(self) -> dict:
        if self.kind == "rbf":
            return {"kind": "rbf", "sigma": self.sigma}
        return {"kind": "poly", "a": self.a, "b": self.b, "degree": self.degree}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(**d)

    def label(self) -> str:
        if self.kind == "rbf":
            return f"rbf(sigma={self.sigma:g})"
        return f"poly(a={self.a:g},b={self.b:g},d={self.degree:g})"


def _poly_power(base, spec: KernelSpec):
    if not spec.integer_degree and np.any(base < 0):
        raise ValueError("fractional polynomial degree with a negative base a<x,x'>+b")
    return np.power(base, spec.degree)


def kernel_eval(spec: KernelSpec, x, x2) -> float:
    x = np.asarray(x, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x.shape != x2.shape:
        raise ValueError(f"dimension mismatch {x.shape} vs {x2.shape}")
    if spec.kind == "rbf":
        d = x - x2
        return float(math.exp(-float(d @ d) / (2.0 * spec.sigma ** 2)))
    return float(_poly_power(np.float64(spec.a * float(x @ x2) + spec.b), spec))


def gram(spec: KernelSpec, A, B) -> np.ndarray:
    """Kernel matrix between the rows of ``A`` and ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch {A.shape[1]} vs {B.shape[1]}")
    if spec.kind == "rbf":
        sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-spec.gamma * sq)
    return _poly_power(spec.a * (A @ B.T) + spec.b, spec)


@dataclass(frozen=True)
class TrainConfig:
    C: float = 1000.0
    kkt_tolerance: float = 1e-3
    max_passes_without_change: int = 10
    max_iterations: int = 1_000_000
    kernel_cache_budget: int = 4_000_000
    selection: str = "second-order"

    def __post_init__(self):
        if self.selection not in ("first-order", "second-order"):
            raise ValueError(f"unknown working-set selection {self.selection!r}")
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not self.kkt_tolerance > 0:
            raise ValueError("kkt_tolerance must be positive")
        if self.max_iterations < 1 or self.max_passes_without_change < 1:
            raise ValueError("iteration limits must be positive")


# ----------------------------------------------------------------------------
# SMO kernels

@njit(cache=True)
def _row_into(X, i, kind, gamma, pa, pb, deg, int_deg, out):
    n, d = X.shape
    for k in range(n):
        s = 0.0
        if kind == 0:
            for m in range(d):
                diff = X[i, m] - X[k, m]
                s += diff * diff
            out[k] = math.exp(-gamma * s)
        else:
            for m in range(d):
                s += X[i, m] * X[k, m]
            base = pa * s + pb
            if base < 0.0 and not int_deg:
                return False
            out[k] = base ** deg
    return True


@njit(cache=True)
def _smo_loops(X, y, C, kind, gamma, pa, pb, deg, int_deg, tol, max_iter, max_stall, cache_rows,
               second_order):
    """Returns (alpha, G, n_iter, status): status 0 converged, 1 iteration cap,
    2 stalled, 3 invalid kernel value."""
    n = X.shape[0]
    slots = min(n, max(cache_rows, 2))
    cache = np.empty((slots, n))
    slot_of = -np.ones(n, dtype=np.int64)
    row_of = -np.ones(slots, dtype=np.int64)
    stamp = np.zeros(slots, dtype=np.int64)
    clock = 0
    used = 0

    alpha = np.zeros(n)
    G = -np.ones(n)
    qd = np.empty(n)
    for k in range(n):
        s = 0.0
        if kind == 0:
            qd[k] = 1.0
        else:
            for m in range(X.shape[1]):
                s += X[k, m] * X[k, m]
            base = pa * s + pb
            if base < 0.0 and not int_deg:
                return alpha, G, 0, 3
            qd[k] = base ** deg

    stall = 0
    it = 0
    while it < max_iter:
        gmax = -np.inf
        gmin = np.inf
        i = -1
        j = -1
        for t in range(n):
            v = -y[t] * G[t]
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                if v > gmax:
                    gmax = v
                    i = t
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                if v < gmin:
                    gmin = v
                    j = t
        if i < 0 or j < 0 or gmax - gmin < tol:
            return alpha, G, it, 0

        # fetch kernel rows i and j through the LRU cache
        si = 0
        sj = 0
        for pick in range(2):
            r = i if pick == 0 else j
            if pick == 1 and second_order:
                # j maximizing the guaranteed decrease (v_i - v_t)^2 / eta_it
                Ki = cache[si]
                best = 0.0
                for t in range(n):
                    if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                        b = gmax + y[t] * G[t]
                        if b > 0.0:
                            e = qd[i] + qd[t] - 2.0 * Ki[t]
                            if e <= 0.0:
                                e = _TAU
                            gain = b * b / e
                            if gain > best:
                                best = gain
                                j = t
                r = j
                gmin = -y[j] * G[j]
            s = slot_of[r]
            if s < 0:
                if used < slots:
                    s = used
                    used += 1
                else:
                    s = 0
                    for q in range(1, slots):
                        if stamp[q] < stamp[s]:
                            s = q
                    slot_of[row_of[s]] = -1
                ok = _row_into(X, r, kind, gamma, pa, pb, deg, int_deg, cache[s])
                if not ok:
                    return alpha, G, it, 3
                slot_of[r] = s
                row_of[s] = r
            clock += 1
            stamp[s] = clock
            if pick == 0:
                si = s
            else:
                sj = s

        kij = cache[si, j]
        eta = qd[i] + qd[j] - 2.0 * kij
        if eta <= 0.0:
            eta = _TAU
        lam = (gmax - gmin) / eta
        room_i = C - alpha[i] if y[i] > 0 else alpha[i]
        room_j = alpha[j] if y[j] > 0 else C - alpha[j]
        hit_i = False
        hit_j = False
        if room_i <= lam:
            lam = room_i
            hit_i = True
        if room_j <= lam:
            lam = room_j
            hit_j = True
            hit_i = room_i <= lam
        if hit_i:
            alpha[i] = C if y[i] > 0 else 0.0
        else:
            alpha[i] += y[i] * lam
        if hit_j:
            alpha[j] = 0.0 if y[j] > 0 else C
        else:
            alpha[j] -= y[j] * lam
        for k in range(n):
            G[k] += y[k] * lam * (cache[si, k] - cache[sj, k])
        it += 1
        if lam <= 1e-15 * max(C, 1.0):
            stall += 1
            if stall >= max_stall:
                return alpha, G, it, 2
        else:
            stall = 0
    return alpha, G, it, 1


def _smo_numpy(X, y, C, spec: KernelSpec, tol, max_iter, max_stall, cache_rows, second_order=False):
    """Pure-numpy twin of :func:`_smo_loops` (same selection rule and step)."""
    n = X.shape[0]
    cache: OrderedDict[int, np.ndarray] = OrderedDict()
    slots = min(n, max(cache_rows, 2))

    def row(r):
        if r in cache:
            cache.move_to_end(r)
            return cache[r]
        if len(cache) >= slots:
            cache.popitem(last=False)
        if spec.kind == "rbf":
            diff = X - X[r]
            vals = np.exp(-spec.gamma * np.einsum("ij,ij->i", diff, diff))
        else:
            vals = _poly_power(spec.a * (X @ X[r]) + spec.b, spec)
        cache[r] = vals
        return vals

    alpha = np.zeros(n)
    G = -np.ones(n)
    if spec.kind == "rbf":
        qd = np.ones(n)
    else:
        qd = _poly_power(spec.a * np.einsum("ij,ij->i", X, X) + spec.b, spec)
    pos = y > 0
    stall = 0
    it = 0
    while it < max_iter:
        v = -y * G
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        if not up.any() or not low.any():
            return alpha, G, it, 0
        vu = np.where(up, v, -np.inf)
        vl = np.where(low, v, np.inf)
        i = int(np.argmax(vu))
        j = int(np.argmin(vl))
        gmax, gmin = vu[i], vl[j]
        if gmax - gmin < tol:
            return alpha, G, it, 0
        Ki = row(i)
        if second_order:
            b = gmax - vl
            e = qd[i] + qd - 2.0 * Ki
            e[e <= 0.0] = _TAU
            gain = np.where(b > 0.0, b * b / e, 0.0)
            j = int(np.argmax(gain))
            gmin = vl[j]
        Kj = row(j)
        eta = qd[i] + qd[j] - 2.0 * Ki[j]
        if eta <= 0.0:
            eta = _TAU
        lam = (gmax - gmin) / eta
        room_i = C - alpha[i] if y[i] > 0 else alpha[i]
        room_j = alpha[j] if y[j] > 0 else C - alpha[j]
        hit_i = hit_j = False
        if room_i <= lam:
            lam, hit_i = room_i, True
        if room_j <= lam:
            lam, hit_j = room_j, True
            hit_i = room_i <= lam
        alpha[i] = (C if y[i] > 0 else 0.0) if hit_i else alpha[i] + y[i] * lam
        alpha[j] = (0.0 if y[j] > 0 else C) if hit_j else alpha[j] - y[j] * lam
        G += y * lam * (Ki - Kj)
        it += 1
        if lam <= 1e-15 * max(C, 1.0):
            stall += 1
            if stall >= max_stall:
                return alpha, G, it, 2
        else:
            stall = 0
    return alpha, G, it, 1


def solve_dual(X, y, spec: KernelSpec, config: TrainConfig, use_numba: bool | None = None):
    """Run SMO; returns ``(alpha, G, n_iter, status)``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = X.shape[0]
    cache_rows = max(2, min(n, config.kernel_cache_budget // max(n, 1)))
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba:
        res = _smo_loops(X, y, float(config.C), spec.code, spec.gamma if spec.kind == "rbf" else 0.0,
                         float(spec.a), float(spec.b), float(spec.degree), spec.integer_degree,
                         float(config.kkt_tolerance), int(config.max_iterations),
                         int(config.max_passes_without_change), int(cache_rows),
                         config.selection == "second-order")
    else:
        res = _smo_numpy(X, y, float(config.C), spec, float(config.kkt_tolerance),
                         int(config.max_iterations), int(config.max_passes_without_change), cache_rows,
                         config.selection == "second-order")
    if res[3] == 3:
        raise ValueError("fractional polynomial degree with a negative base a<x,x'>+b")
    return res


# ----------------------------------------------------------------------------
# binary model

@dataclass
class BinarySvmModel:
    support_vectors: np.ndarray
    dual_weights: np.ndarray  # alpha_i * y_i
    bias: float
    kernel: KernelSpec
    converged: bool = True
    n_iter: int = 0
    dual_objective: float = float("nan")

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if len(self.dual_weights) == 0:
            return np.full(X.shape[0], self.bias)
        if X.shape[1] != self.support_vectors.shape[1]:
            raise ValueError("dimension mismatch with support vectors")
        return gram(self.kernel, X, self.support_vectors) @ self.dual_weights + self.bias

    def to_dict(self) -> dict:
        return {
            "support_vectors": self.support_vectors.tolist(),
            "dual_weights": self.dual_weights.tolist(),
            "bias": self.bias,
            "kernel": self.kernel.to_dict(),
            "converged": self.converged,
            "n_iter": self.n_iter,
        }

    @classmethod
    def from_dict(cls, d: dict, dim: int | None = None) -> "BinarySvmModel":
        sv = np.asarray(d["support_vectors"], dtype=np.float64)
        if sv.size == 0:
            sv = sv.reshape(0, dim or 0)
        return cls(sv, np.asarray(d["dual_weights"], dtype=np.float64), float(d["bias"]),
                   KernelSpec.from_dict(d["kernel"]), bool(d["converged"]), int(d["n_iter"]))


def decision_value(model: BinarySvmModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a single feature vector")
    return float(model.decision_function(x[None, :])[0])


def train_binary(X, y, kernel: KernelSpec, config: TrainConfig = TrainConfig(),
                 use_numba: bool | None = None) -> BinarySvmModel:
    """Soft-margin binary SVM with labels in {-1, +1}."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y lengths differ")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if X.shape[0] < 2 or np.all(y == y[0]):
        raise ValueError("binary training needs both classes")
    alpha, G, n_iter, status = solve_dual(X, y, kernel, config, use_numba)
    C = config.C
    v = -y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        bias = float(v[free].mean())
    else:
        pos = y > 0
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        hi = v[up].max() if up.any() else v[low].min()
        lo = v[low].min() if low.any() else v[up].max()
        bias = float(0.5 * (hi + lo))
    if status != 0:
        log.warning("SMO stopped before convergence (status %d after %d iterations)", status, n_iter)
    objective = float(alpha.sum() - 0.5 * alpha @ (G + 1.0))
    sv = alpha > 0
    return BinarySvmModel(X[sv].copy(), (alpha * y)[sv], bias, kernel, status == 0, int(n_iter),
                          objective)


# ----------------------------------------------------------------------------
# standardization

@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    mask: np.ndarray  # True for retained columns

    def apply(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return (X[:, self.mask] - self.mean[self.mask]) / self.std[self.mask]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "mask": self.mask.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64),
                   np.asarray(d["mask"], dtype=bool))


def fit_standardization(X, blocks: Sequence[str] | None = None) -> Standardizer:
    """Per-column mean and population std; constant columns are masked out.

    ``blocks`` optionally tags every column with a feature family. Each family is
    then rescaled to unit total variance so that families of very different width
    weigh equally in kernel distances: a family named ``"hpe"`` (already scale-free
    coefficients of unit-norm beats) is centered and divided by the square root of
    its summed variance; any other family is z-scored column-wise and divided by
    the square root of its retained column count.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    scale = np.maximum(np.abs(mean), 1.0)
    mask = std > 1e-12 * scale
    if blocks is None:
        return Standardizer(mean, std, mask)
    blocks = np.asarray(blocks, dtype=object)
    if blocks.shape != (X.shape[1],):
        raise ValueError("one block tag per column is required")
    divisor = std.copy()
    for tag in dict.fromkeys(blocks.tolist()):
        cols = (blocks == tag) & mask
        if not cols.any():
            continue
        if tag == "hpe":
            divisor[cols] = math.sqrt(float((std[cols] ** 2).sum()))
        else:
            divisor[cols] = std[cols] * math.sqrt(int(cols.sum()))
    return Standardizer(mean, divisor, mask)


def apply_standardization(params: Standardizer, X) -> np.ndarray:
    return params.apply(X)


# ----------------------------------------------------------------------------
# multiclass

@dataclass
class MulticlassModel:
    labels: list
    pairs: list[tuple[int, int]]  # indices into labels; first index is the +1 class
    models: list[BinarySvmModel]
    standardization: Standardizer
    kernel: KernelSpec
    C: float
    strategy: str = "ovo"
    feature_group: str = ""
    columns: list[str] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return all(m.converged for m in self.models)

    def decision_matrix(self, X) -> np.ndarray:
        Z = self.standardization.apply(X)
        return np.column_stack([m.decision_function(Z) for m in self.models])

    def predict_indices(self, X) -> np.ndarray:
        D = self.decision_matrix(X)
        k = len(self.labels)
        if self.strategy == "ovr":
            return np.argmax(D, axis=1)
        n = D.shape[0]
        votes = np.zeros((n, k))
        strength = np.zeros((n, k))
        for col, (p, q) in enumerate(self.pairs):
            d = D[:, col]
            win_p = d > 0
            votes[:, p] += win_p
            votes[:, q] += ~win_p
            strength[:, p] += np.where(win_p, np.abs(d), 0.0)
            strength[:, q] += np.where(win_p, 0.0, np.abs(d))
        out = np.empty(n, dtype=np.int64)
        for r in range(n):
            top = np.flatnonzero(votes[r] == votes[r].max())
            if len(top) > 1:
                s = strength[r, top]
                top = top[s == s.max()]
            out[r] = top[0]
        return out

    def predict(self, X) -> list:
        return [self.labels[i] for i in self.predict_indices(X)]

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "strategy": self.strategy,
            "labels": list(self.labels),
            "feature_group": self.feature_group,
            "columns": list(self.columns),
            "kernel": self.kernel.to_dict(),
            "C": self.C,
            "standardization": self.standardization.to_dict(),
            "models": [dict(m.to_dict(), pair=[self.labels[p], self.labels[q] if q >= 0 else None])
                       for m, (p, q) in zip(self.models, self.pairs)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MulticlassModel":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise ValueError("not a version-1 ecg-ident model document")
        labels = list(d["labels"])
        std = Standardizer.from_dict(d["standardization"])
        dim = int(std.mask.sum())
        index = {lab: i for i, lab in enumerate(labels)}
        models, pairs = [], []
        for md in d["models"]:
            models.append(BinarySvmModel.from_dict(md, dim))
            p, q = md["pair"]
            pairs.append((index[p], index.get(q, -1) if q is not None else -1))
        return cls(labels, pairs, models, std, KernelSpec.from_dict(d["kernel"]), float(d["C"]),
                   d["strategy"], d.get("feature_group", ""), list(d.get("columns", [])))


def save_model(path: str | Path, model: MulticlassModel) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path: str | Path) -> MulticlassModel:
    return MulticlassModel.from_dict(json.loads(Path(path).read_text()))


def train_multiclass(X, labels: Sequence, kernel: KernelSpec, config: TrainConfig = TrainConfig(),
                     strategy: str = "ovo", feature_group: str = "", columns=(),
                     blocks: Sequence[str] | None = None,
                     use_numba: bool | None = None) -> MulticlassModel:
    """Standardize on ``X`` then train one binary SVM per label pair (or per label for ``ovr``)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    labels = list(labels)
    if len(labels) != X.shape[0]:
        raise ValueError("X and labels lengths differ")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ValueError("multiclass training needs at least 2 distinct labels")
    std = fit_standardization(X, blocks)
    Z = std.apply(X)
    index = {lab: i for i, lab in enumerate(classes)}
    yi = np.array([index[lab] for lab in labels])
    models, pairs = [], []
    if strategy == "ovo":
        for p, q in combinations(range(len(classes)), 2):
            rows = (yi == p) | (yi == q)
            if not (yi == p).any() or not (yi == q).any():
                raise ValueError(f"pair ({classes[p]}, {classes[q]}) has an empty class")
            y = np.where(yi[rows] == p, 1.0, -1.0)
            models.append(train_binary(Z[rows], y, kernel, config, use_numba))
            pairs.append((p, q))
    elif strategy == "ovr":
        for p in range(len(classes)):
            y = np.where(yi == p, 1.0, -1.0)
            models.append(train_binary(Z, y, kernel, config, use_numba))
            pairs.append((p, -1))
    else:
        raise ValueError(f"unknown multiclass strategy {strategy!r}")
    return MulticlassModel(classes, pairs, models, std, kernel, float(config.C), strategy,
                           feature_group, list(columns))


def predict(model: MulticlassModel, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return model.predict(x[None, :])[0]
    return model.predict(x)
