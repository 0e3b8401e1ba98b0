"""Adversarial perturbation directions and their application.

Two threat models are supported: l2 (unit Euclidean direction) and linf
(component-wise sign direction). Analytic perturbations shift samples by
``z - eps * y * delta``; the FGSM-style variant recomputes the direction from
logistic-loss input gradients of a bias-free linear model, which coincides
with the analytic direction for the linf threat.
"""

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.special import expit

from .population import SampleBatch

__all__ = [
    "ThreatModel",
    "PerturbationDirection",
    "sign_pm1",
    "optimal_direction",
    "scale_budget",
    "apply_perturbation",
    "fgsm_features",
    "fgsm_perturb",
]

# gradient-normalization guard used by the l2 single-step perturbation
L2_NORM_GUARD = 1e-8


class ThreatModel(Enum):
    L2 = "l2"
    LINF = "linf"

    @classmethod
    def coerce(cls, value) -> "ThreatModel":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "")
        if key == "l2":
            return cls.L2
        if key in ("linf", "linfty", "linfinity"):
            return cls.LINF
        raise ValueError(f"unknown threat model: {value!r} (expected 'l2' or 'linf')")


def sign_pm1(x) -> np.ndarray:
    """Component-wise sign with sign(0) = +1, so directions are always +/-1."""
    return np.where(np.asarray(x, dtype=float) >= 0, 1.0, -1.0)


@dataclass(frozen=True, eq=False)
class PerturbationDirection:
    """A unit direction under the threat norm plus an attack budget."""

    delta: np.ndarray
    threat: ThreatModel
    eps: float = 0.0

    def __post_init__(self):
        delta = np.asarray(self.delta, dtype=float)
        if delta.ndim != 1:
            raise ValueError("delta must be a 1-D vector")
        threat = ThreatModel.coerce(self.threat)
        if threat is ThreatModel.L2:
            if abs(np.linalg.norm(delta) - 1.0) > 1e-12:
                raise ValueError("l2 direction must have unit Euclidean norm")
        else:
            if not np.all(np.abs(delta) == 1.0):
                raise ValueError("linf direction entries must all be +/-1")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        arr = delta.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "delta", arr)
        object.__setattr__(self, "threat", threat)
        object.__setattr__(self, "eps", float(self.eps))

    def with_budget(self, eps: float) -> "PerturbationDirection":
        return replace(self, eps=eps)


def optimal_direction(w, threat, eps: float = 0.0) -> PerturbationDirection:
    """Margin-maximizing direction for a linear classifier.

    l2: w / ||w||_2. linf: sign(w) with sign(0) = +1.
    """
    w = np.asarray(w, dtype=float)
    threat = ThreatModel.coerce(threat)
    norm = np.linalg.norm(w)
    if norm == 0.0:
        raise ValueError("cannot derive a perturbation direction from zero weights")
    delta = w / norm if threat is ThreatModel.L2 else sign_pm1(w)
    return PerturbationDirection(delta, threat, eps)


def scale_budget(eps_inf: float, dim: int, threat) -> float:
    """Budget equalization across threats: the l2 budget is sqrt(d) * eps_inf."""
    if eps_inf < 0:
        raise ValueError("eps_inf must be nonnegative")
    threat = ThreatModel.coerce(threat)
    return float(np.sqrt(dim) * eps_inf) if threat is ThreatModel.L2 else float(eps_inf)


def apply_perturbation(batch: SampleBatch, direction: PerturbationDirection) -> SampleBatch:
    """Shift every sample by -eps * y * delta; labels and groups are kept."""
    if direction.delta.size != batch.dim:
        raise ValueError("direction dimension does not match the batch")
    if direction.eps == 0.0:
        return batch
    shifted = batch.z - (direction.eps * batch.y)[:, None] * direction.delta
    return batch.with_features(shifted)


def _weights_of(model) -> np.ndarray:
    w = np.asarray(getattr(model, "coef_", model), dtype=float).ravel()
    if w.ndim != 1 or not np.any(w):
        raise ValueError("model must expose a nonzero 1-D weight vector")
    return w


def fgsm_features(w, X, y, eps: float, threat) -> np.ndarray:
    """Single-step perturbation of a feature matrix against a linear-logistic
    model: x + eps * delta(x) with delta the sign (linf) or l2-normalized
    input gradient of the logistic loss."""
    threat = ThreatModel.coerce(threat)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if eps == 0.0:
        return X
    w = np.asarray(w, dtype=float)
    # per-sample input gradient of log(1 + exp(-y w.x)) is -y sigmoid(-y w.x) w
    coef = -y * expit(-y * (X @ w))
    grad = coef[:, None] * w
    if threat is ThreatModel.LINF:
        return X + eps * sign_pm1(grad)
    norms = np.linalg.norm(grad, axis=1, keepdims=True)
    return X + eps * grad / (norms + L2_NORM_GUARD)


def fgsm_perturb(model, batch: SampleBatch, eps: float, threat) -> SampleBatch:
    """Batch form of :func:`fgsm_features` for anything exposing ``coef_``."""
    if eps == 0.0:
        return batch
    w = _weights_of(model)
    return batch.with_features(fgsm_features(w, batch.z, batch.y, eps, threat))
