"""Sampling-based accuracy estimates: the independent check on every
closed-form expression in :mod:`spurgap.theory`."""

from dataclasses import dataclass

import numpy as np

from .perturbation import sign_pm1
from .population import GroupKey, PopulationSpec, sample

__all__ = ["MCEstimate", "mc_accuracy", "mc_group_accuracy", "agreement_report"]

MIN_SAMPLES = 1000


@dataclass(frozen=True)
class MCEstimate:
    """A Bernoulli accuracy estimate with its binomial standard error."""

    mean: float
    stderr: float
    n: int
    seed: int

    @classmethod
    def from_fraction(cls, mean: float, n: int, seed: int) -> "MCEstimate":
        return cls(mean=mean, stderr=float(np.sqrt(mean * (1.0 - mean) / n)),
                   n=n, seed=seed)


def _weights_of(model) -> np.ndarray:
    return np.asarray(getattr(model, "coef_", model), dtype=float).ravel()


def mc_accuracy(w, spec: PopulationSpec, eps: float, delta,
                n: int, seed: int) -> MCEstimate:
    """Accuracy of w on n draws shifted by -eps y delta (delta may be None)."""
    if n < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples")
    w = _weights_of(w)
    batch = sample(spec, n, seed)
    z = batch.z
    if eps != 0.0 and delta is not None:
        z = z - (eps * batch.y)[:, None] * np.asarray(delta, dtype=float)
    frac = float(np.mean(sign_pm1(z @ w) == batch.y))
    return MCEstimate.from_fraction(frac, n, seed)


def mc_group_accuracy(w, spec: PopulationSpec, group: GroupKey,
                      n: int, seed: int) -> MCEstimate:
    """Accuracy of w on clean draws conditioned exactly on one group."""
    if n < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples")
    w = _weights_of(w)
    batch = sample(spec, n, seed, alignment=group)
    frac = float(np.mean(sign_pm1(batch.z @ w) == batch.y))
    return MCEstimate.from_fraction(frac, n, seed)


def agreement_report(closed: float, est: MCEstimate) -> float:
    """Signed z-score of the Monte Carlo estimate against a closed form."""
    if est.stderr == 0.0:
        if est.mean == closed:
            return 0.0
        raise ValueError(
            "zero standard error with a mismatched estimate; increase n or "
            "avoid degenerate (saturated) accuracies"
        )
    return (est.mean - closed) / est.stderr
