"""Validation-error weighted ensembles over subsets of member models."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .data import FEATURES
from .errors import DateMisalignmentError, EmptyMemberListError, MemberMismatchError, ZeroRmseError
from .forecast import ForecastResult

MODES = ("literal", "inverse")


@dataclass(frozen=True)
class ValidationScore:
    member_id: str
    rmse: np.ndarray  # one value per variable

    def __post_init__(self):
        rmse = np.array(self.rmse, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(rmse)):
            raise ValueError(f"{self.member_id}: validation RMSE must be finite")
        if np.any(rmse <= 0):
            raise ZeroRmseError(f"{self.member_id}: validation RMSE must be > 0, got {rmse.tolist()}")
        rmse.setflags(write=False)
        object.__setattr__(self, "rmse", rmse)


@dataclass(frozen=True)
class EnsembleSpec:
    member_ids: tuple
    weights: np.ndarray  # (n_members, n_variables); each column sums to 1
    mode: str
    aggregate: bool = False

    def to_dict(self, scores=None) -> dict:
        d = {
            "mode": self.mode,
            "rmse_pooling": "mean of variables" if self.aggregate else "per variable",
            "members": list(self.member_ids),
            "weights": {
                var: dict(zip(self.member_ids, map(float, self.weights[:, v])))
                for v, var in enumerate(FEATURES[: self.weights.shape[1]])
            },
        }
        if scores is not None:
            d["validation_scores"] = {
                s.member_id: dict(zip(FEATURES, map(float, s.rmse))) for s in scores
            }
        return d


def compute_weights(scores, mode: str = "literal", aggregate: bool = False) -> EnsembleSpec:
    """Per-variable member weights from validation RMSE.

    ``literal``: w_i = RMSE_i / sum_j RMSE_j (larger error, larger weight).
    ``inverse``: w_i = (1/RMSE_i) / sum_j (1/RMSE_j).
    With ``aggregate`` each member's RMSE is first averaged over variables.
    """
    scores = list(scores)
    if not scores:
        raise EmptyMemberListError("need at least one member score")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    rmse = np.stack([s.rmse for s in scores])
    if aggregate:
        rmse = np.repeat(rmse.mean(axis=1, keepdims=True), rmse.shape[1], axis=1)
    raw = rmse if mode == "literal" else 1.0 / rmse
    weights = raw / raw.sum(axis=0)
    weights.setflags(write=False)
    return EnsembleSpec(tuple(s.member_id for s in scores), weights, mode, aggregate)


def combine(forecasts, spec: EnsembleSpec, member_id: str | None = None) -> ForecastResult:
    """Weighted combination prediction(D, v) = sum_i w_iv * prediction_i(D, v)."""
    forecasts = list(forecasts)
    if not forecasts:
        raise EmptyMemberListError("nothing to combine")
    ids = tuple(f.member_id for f in forecasts)
    if ids != tuple(spec.member_ids):
        raise MemberMismatchError(f"forecast members {ids} do not match spec {tuple(spec.member_ids)}")
    first = forecasts[0]
    for f in forecasts[1:]:
        if f.start_date != first.start_date or f.horizon != first.horizon:
            raise DateMisalignmentError(
                f"{f.member_id} covers {f.start_date}+{f.horizon}d, "
                f"expected {first.start_date}+{first.horizon}d"
            )
    stack = np.stack([f.values for f in forecasts])  # (n, H, 3)
    out = np.zeros_like(first.values)
    for w, values in zip(spec.weights, stack):
        out += w[None, :] * values
    # Rounding must not push the sum outside the members' range, and cells
    # where all members agree return that value exactly.
    lo, hi = stack.min(axis=0), stack.max(axis=0)
    out = np.where(lo == hi, lo, np.clip(out, lo, hi))
    if member_id is None:
        member_id = f"ensemble({','.join(ids)})"
    return ForecastResult(first.start_date, out, member_id)


def enumerate_combinations(member_ids) -> list[tuple]:
    """All non-empty subsets, by size, then in input order within a size."""
    member_ids = list(member_ids)
    if not 1 <= len(member_ids) <= 8:
        raise ValueError("between 1 and 8 members are supported")
    return [
        combo
        for size in range(1, len(member_ids) + 1)
        for combo in itertools.combinations(member_ids, size)
    ]
