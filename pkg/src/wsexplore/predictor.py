"""Linear accuracy-loss surrogate.

The network-level loss of a combination is modelled as a weighted sum of
the losses each layer showed when clustered alone::

    al(ktuple) ~= sum_i alpha_i * al_i(k_i)

The weights are fitted by ordinary least squares, without intercept unless
asked for.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import InfeasibleError, RankDeficientError, WSError

#: Above this condition number the normal equations are abandoned for an
#: orthogonal least-squares solve.
COND_LIMIT = 1e10


@dataclass(frozen=True)
class RegressionSample:
    features: tuple
    target: float


@dataclass
class PredictionModel:
    alphas: np.ndarray
    intercept: Optional[float] = None
    n_samples: int = 0
    rmse_train: float = 0.0
    mae_train: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n_layers(self) -> int:
        return len(self.alphas)

    def predict_features(self, features) -> float:
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.n_layers:
            raise WSError(f"expected {self.n_layers} features, got {features.shape[-1]}")
        out = features @ self.alphas
        if self.intercept is not None:
            out = out + self.intercept
        return out


@dataclass(frozen=True)
class ValidationStats:
    mae: float
    rmse: float
    max_abs_error: float


def _design(samples: Sequence[RegressionSample]):
    if not samples:
        raise InfeasibleError("no regression samples")
    x = np.array([s.features for s in samples], dtype=np.float64)
    y = np.array([s.target for s in samples], dtype=np.float64)
    if x.ndim != 2:
        raise WSError("all samples must have the same number of features")
    return x, y


def _check_rank(x, names):
    zero = [names[c] for c in range(x.shape[1]) if not np.any(x[:, c])]
    if zero:
        raise RankDeficientError(
            f"feature columns {zero} are zero for every sample; those layers never lost accuracy "
            f"in the sampled combinations, so their coefficients are undetermined", zero)
    _, r, piv = scipy.linalg.qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag.max() * max(x.shape) * np.finfo(np.float64).eps
    rank = int(np.sum(diag > tol))
    if rank < x.shape[1]:
        bad = sorted(names[c] for c in piv[rank:])
        raise RankDeficientError(f"feature matrix has rank {rank} < {x.shape[1]}; "
                                 f"columns {bad} are linear combinations of the others", bad)


def _solve(x, y):
    gram = x.T @ x
    rhs = x.T @ y
    if np.linalg.cond(gram) <= COND_LIMIT:
        try:
            return scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram), rhs)
        except np.linalg.LinAlgError:
            pass
    return scipy.linalg.lstsq(x, y)[0]


def fit(samples: Sequence[RegressionSample], intercept: bool = False, **meta) -> PredictionModel:
    """Least-squares fit of the per-layer coefficients.

    Raises :class:`~wsexplore.errors.RankDeficientError` naming the layer
    columns that cannot be identified from the given samples.
    """
    x, y = _design(samples)
    n_layers = x.shape[1]
    names = list(range(n_layers))
    if intercept:
        x = np.hstack([x, np.ones((len(x), 1))])
        names.append("intercept")
    if len(x) < x.shape[1]:
        raise InfeasibleError(f"need at least {x.shape[1]} samples to fit, got {len(x)}")
    _check_rank(x, names)
    coef = _solve(x, y)
    resid = y - x @ coef
    return PredictionModel(
        alphas=coef[:n_layers].copy(),
        intercept=float(coef[n_layers]) if intercept else None,
        n_samples=len(y),
        rmse_train=float(np.sqrt(np.mean(resid ** 2))),
        mae_train=float(np.mean(np.abs(resid))),
        meta=dict(meta),
    )


def features_for(ktuple, curves) -> list:
    """Per-layer solo losses of ``ktuple``, read from the sweep curves."""
    if len(ktuple) != len(curves):
        raise WSError(f"ktuple has {len(ktuple)} entries but {len(curves)} curves were given")
    return [curve.al_of(k) for k, curve in zip(ktuple, curves)]


def predict(ktuple, model: PredictionModel, curves) -> float:
    return float(model.predict_features(features_for(ktuple, curves)))


def validate(model: PredictionModel, heldout: Sequence[RegressionSample]) -> ValidationStats:
    if not heldout:
        raise WSError("held-out set is empty")
    x, y = _design(heldout)
    err = np.abs(model.predict_features(x) - y)
    return ValidationStats(float(np.mean(err)), float(np.sqrt(np.mean(err ** 2))), float(np.max(err)))
