"""k-fold cross-validation and exhaustive grid search over surrogate specs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fnn import TrainerConfig, fnn_fit
from .knn import knn_fit

FNN_FRACTIONS = ((0.75, 0.5, 0.5), (0.75, 0.25, 0.25), (0.75, 0.125, 0.125))
FNN_LAMBDAS = (0.0001, 0.001, 0.01, 0.1)


@dataclass(frozen=True)
class KnnSpec:
    k: int
    kind: str = "knn"

    def fit(self, X, Y):
        return knn_fit(X, Y, self.k)

    def size(self, n_in, n_out) -> int:
        return self.k

    def label(self) -> str:
        return f"knn(k={self.k})"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "k": self.k}


@dataclass(frozen=True)
class FnnSpec:
    hidden: tuple
    lam: float
    trainer: TrainerConfig = TrainerConfig()
    kind: str = "fnn"

    def fit(self, X, Y):
        return fnn_fit(X, Y, self.hidden, self.lam, self.trainer)

    def size(self, n_in, n_out) -> int:
        widths = (n_in, *self.hidden, n_out)
        return sum((a + 1) * b for a, b in zip(widths[:-1], widths[1:]))

    def label(self) -> str:
        return f"fnn(hidden={'-'.join(map(str, self.hidden))}, lam={self.lam:g})"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hidden": list(self.hidden), "lam": self.lam,
                "trainer": {k: getattr(self.trainer, k) for k in self.trainer.__dataclass_fields__}}


def spec_from_dict(doc: dict):
    if doc["kind"] == "knn":
        return KnnSpec(int(doc["k"]))
    if doc["kind"] == "fnn":
        return FnnSpec(tuple(doc["hidden"]), float(doc["lam"]), TrainerConfig(**doc.get("trainer", {})))
    raise ValueError(f"unknown model kind {doc['kind']!r}")


def knn_grid() -> list[int]:
    """Unique ``floor(2 ** (2 + 4 i / 14))`` for ``i = 0..14``."""
    return sorted({math.floor(2 ** (2 + 4 * i / 14)) for i in range(15)})


def fnn_architectures(n_in: int) -> list[tuple]:
    return [tuple(int(round(f * n_in)) for f in fracs) for fracs in FNN_FRACTIONS]


@dataclass(frozen=True)
class HyperGrid:
    fnn: tuple = ()
    knn: tuple = ()

    @classmethod
    def default(cls, n_in: int, trainer: TrainerConfig | None = None) -> "HyperGrid":
        trainer = trainer or TrainerConfig()
        fnn = tuple(FnnSpec(h, lam, trainer) for h in fnn_architectures(n_in) for lam in FNN_LAMBDAS)
        return cls(fnn, tuple(KnnSpec(k) for k in knn_grid()))

    def specs(self, kind: str) -> list:
        if kind not in ("fnn", "knn"):
            raise ValueError(f"unknown model kind {kind!r}")
        return list(getattr(self, kind))


@dataclass(frozen=True)
class CvResult:
    fold_errors: np.ndarray
    score: float


def kfold_indices(n: int, k: int = 5, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded partition into ``k`` folds as ``(train, validation)`` index pairs."""
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n (k={k}, n={n})")
    folds = np.array_split(np.random.default_rng(seed).permutation(n), k)
    return [(np.sort(np.concatenate(folds[:i] + folds[i + 1:])), np.sort(folds[i])) for i in range(k)]


def prediction_mse(model, X, Y) -> float:
    """Mean squared error of count predictions (negative outputs clipped to zero)."""
    pred = np.maximum(np.asarray(model.predict(X)).reshape(np.shape(Y)), 0.0)
    return float(np.mean((pred - Y) ** 2))


def kfold_cv(X, Y, spec, k: int = 5, seed: int = 0) -> CvResult:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    errors = np.array([prediction_mse(spec.fit(X[tr], Y[tr]), X[va], Y[va])
                       for tr, va in kfold_indices(len(X), k, seed)])
    return CvResult(errors, float(np.mean(errors)))


@dataclass
class GridSearchResult:
    best: object
    scores: list = field(default_factory=list)  # (spec, CvResult), grid order


def grid_search(X, Y, specs, k: int = 5, seed: int = 0) -> GridSearchResult:
    """Lowest CV score wins; ties go to the smaller model."""
    specs = list(specs)
    if not specs:
        raise ValueError("empty hyperparameter grid")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    n_train = len(X) - int(np.ceil(len(X) / k))
    scores = [(s, kfold_cv(X, Y, s, k, seed)) for s in specs
              if not (isinstance(s, KnnSpec) and s.k > n_train)]
    if not scores:
        raise ValueError("no grid cell fits the training folds")
    n_out = Y.shape[1] if Y.ndim > 1 else 1
    best = min(scores, key=lambda item: (item[1].score, item[0].size(X.shape[1], n_out)))[0]
    return GridSearchResult(best, scores)
