"""Closed-form accuracies and Bayes-optimal coefficients for linear
classifiers on two-attribute Gaussian populations, clean and perturbed.

Notation: m1, m2 are the per-attribute Mahalanobis separabilities, zeta the
spurious-correlation level, eps the attack budget, and (n1, n2, n3) the
alignment scalars of the perturbation direction,

    n1 = mu_1^T Sigma_1^{-1} delta_1,
    n2 = mu_2^T Sigma_2^{-1} delta_2,
    n3 = delta_1^T Sigma_1^{-1} delta_1 + delta_2^T Sigma_2^{-1} delta_2.

The optimal coefficient of the spurious block (tau on clean data, c on
perturbed data, with the invariant block normalized to 1) satisfies

    x = tanh(L/2 - phi(x)),   L = log(zeta) - log(1 - zeta),

with phi as implemented below. Roots are enumerated by a sign-change scan
plus bisection, and ties are broken by the training accuracy of the induced
classifier.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .perturbation import PerturbationDirection, optimal_direction, scale_budget
from .population import GroupKey, PopulationSpec, alignment_groups

__all__ = [
    "SolverOptions",
    "FixedPointResult",
    "FixedPointError",
    "CleanOptimalCoefficient",
    "PerturbedOptimalCoefficient",
    "TheoreticalGap",
    "log_odds",
    "phi",
    "coefficient_training_accuracy",
    "solve_tau",
    "solve_c",
    "train_accuracy_clean",
    "train_accuracy_perturbed",
    "group_accuracy_clean",
    "group_accuracy_perturbed",
    "balanced_test_accuracy",
    "alignment_terms",
    "clean_optimal_classifier",
    "perturbed_optimal_classifier",
    "clean_optimal",
    "perturbed_optimal",
    "theoretical_gap",
]

# correlations are clamped this close to {0, 1} before taking log odds
ZETA_CLAMP = 1e-12


class FixedPointError(RuntimeError):
    """Raised when the coefficient equation cannot be solved to tolerance."""


@dataclass(frozen=True)
class SolverOptions:
    """Root-finding controls: residual tolerance, scan resolution, and the
    margin keeping the scan inside the open interval (-1, 1)."""

    tolerance: float = 1e-12
    grid_cells: int = 1024
    bracket_margin: float = 1e-9
    max_bisect: int = 200


@dataclass(frozen=True)
class FixedPointResult:
    """A solved coefficient with diagnostics.

    ``candidates`` holds every enumerated root paired with the training
    accuracy of its classifier; ``value`` is the accuracy-maximizing root.
    """

    value: float
    residual: float
    iterations: int
    bracket: tuple[float, float]
    candidates: tuple[tuple[float, float], ...]

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "residual": self.residual,
            "iterations": self.iterations,
            "bracket": list(self.bracket),
            "candidates": [list(c) for c in self.candidates],
        }


def log_odds(zeta: float) -> float:
    """log(zeta) - log(1 - zeta), with zeta clamped away from {0, 1}."""
    z = min(max(float(zeta), ZETA_CLAMP), 1.0 - ZETA_CLAMP)
    return math.log(z) - math.log1p(-z)


def phi(c, m1: float, m2: float, eps: float = 0.0,
        n1: float = 0.0, n2: float = 0.0, n3: float = 0.0):
    """Margin-coupling term of the coefficient equation.

    (m1 - 2 eps n1 - c eps n2 + eps^2 n3) (c m2 - eps n2)
    ----------------------------------------------------- .
    m1 + c^2 m2 - 2 eps n1 - 2 c eps n2 + eps^2 n3

    At eps = 0 this reduces to m1 c m2 / (m1 + c^2 m2). Vectorized over c.
    """
    c = np.asarray(c, dtype=float)
    den = m1 + c * c * m2 - 2 * eps * n1 - 2 * c * eps * n2 + eps * eps * n3
    if np.any(den <= 0.0):
        raise ValueError(
            "degenerate configuration: the classifier variance term vanishes"
        )
    num = (m1 - 2 * eps * n1 - c * eps * n2 + eps * eps * n3) * (c * m2 - eps * n2)
    out = num / den
    return float(out) if out.ndim == 0 else out


def coefficient_training_accuracy(c, m1: float, m2: float, zeta: float,
                                  eps: float = 0.0, n1: float = 0.0,
                                  n2: float = 0.0, n3: float = 0.0):
    """Training accuracy (on the perturbed distribution) of the classifier
    induced by coefficient c. Used to rank fixed-point roots. Vectorized."""
    c = np.asarray(c, dtype=float)
    var = m1 + c * c * m2 - 2 * eps * n1 - 2 * c * eps * n2 + eps * eps * n3
    if np.any(var <= 0.0):
        raise ValueError(
            "degenerate configuration: the classifier variance term vanishes"
        )
    scale = np.sqrt(2.0 * var)
    acc = np.full_like(c, 0.5, dtype=float)
    for s, weight in ((1.0, zeta), (-1.0, 1.0 - zeta)):
        margin = (m1 + s * c * m2 - 2 * eps * n1
                  - (s + c) * eps * n2 + eps * eps * n3)
        acc = acc + 0.5 * weight * erf(margin / scale)
    return float(acc) if acc.ndim == 0 else acc


def _fixed_point_gap(c, half_l, m1, m2, eps, n1, n2, n3):
    return c - np.tanh(half_l - phi(c, m1, m2, eps, n1, n2, n3))


def _bisect(func, lo, hi, f_lo, max_iter):
    iters = 0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        f_mid = func(mid)
        iters += 1
        if f_mid == 0.0:
            return mid, mid, mid, iters
        if (f_lo < 0) != (f_mid < 0):
            hi = mid
        else:
            lo, f_lo = mid, f_mid
    return 0.5 * (lo + hi), lo, hi, iters


def _solve_coefficient(m1: float, m2: float, zeta: float, eps: float,
                       n1: float, n2: float, n3: float,
                       opts: SolverOptions) -> FixedPointResult:
    half_l = 0.5 * log_odds(zeta)

    def gap(c):
        return _fixed_point_gap(c, half_l, m1, m2, eps, n1, n2, n3)

    lo = -1.0 + opts.bracket_margin
    hi = 1.0 - opts.bracket_margin
    xs = np.linspace(lo, hi, opts.grid_cells + 1)
    gs = gap(xs)

    # tanh keeps the fixed point inside (-1, 1); with extreme (clamped) zeta
    # it can sit between the scan margin and 1, so extend the scan there.
    if gs[0] > 0:
        ext = -1.0 + np.geomspace(opts.bracket_margin, 1e-15, 64)
        xs = np.concatenate((ext[::-1], xs))
        gs = np.concatenate((gap(ext)[::-1], gs))
    if gs[-1] < 0:
        ext = 1.0 - np.geomspace(opts.bracket_margin, 1e-15, 64)
        xs = np.concatenate((xs, ext))
        gs = np.concatenate((gs, gap(ext)))

    roots: list[tuple[float, float, float]] = []
    total_iters = 0
    for i in range(len(xs) - 1):
        if gs[i] == 0.0:
            roots.append((xs[i], xs[i], xs[i]))
            continue
        if (gs[i] < 0) != (gs[i + 1] < 0):
            root, blo, bhi, iters = _bisect(
                gap, xs[i], xs[i + 1], gs[i], opts.max_bisect
            )
            total_iters += iters
            roots.append((root, blo, bhi))
    if gs[-1] == 0.0:
        roots.append((xs[-1], xs[-1], xs[-1]))

    if not roots:
        raise FixedPointError(
            "no sign change found for the coefficient equation "
            f"(m1={m1}, m2={m2}, zeta={zeta}, eps={eps}; "
            f"gap endpoints {gs[0]:.3e}, {gs[-1]:.3e})"
        )

    # drop duplicates from adjacent cells touching a shared node
    deduped: list[tuple[float, float, float]] = []
    for entry in sorted(roots):
        if not deduped or abs(entry[0] - deduped[-1][0]) > 1e-12:
            deduped.append(entry)

    values = np.array([r[0] for r in deduped])
    accs = coefficient_training_accuracy(values, m1, m2, zeta, eps, n1, n2, n3)
    accs = np.atleast_1d(accs)
    best = int(np.argmax(accs))
    value, blo, bhi = deduped[best]
    residual = abs(gap(value))
    if residual > opts.tolerance:
        raise FixedPointError(
            f"fixed-point residual {residual:.3e} exceeds tolerance "
            f"{opts.tolerance:.3e} (value={value}, bracket=({blo}, {bhi}))"
        )
    return FixedPointResult(
        value=float(value),
        residual=float(residual),
        iterations=total_iters,
        bracket=(float(blo), float(bhi)),
        candidates=tuple((float(v), float(a)) for v, a in zip(values, accs)),
    )


def solve_tau(m1: float, m2: float, zeta: float,
              opts: SolverOptions | None = None) -> FixedPointResult:
    """Clean-data optimal coefficient: tau = tanh(L/2 - phi0(tau)) with
    phi0(t) = m1 t m2 / (m1 + t^2 m2)."""
    if m1 <= 0:
        raise ValueError("m1 must be positive")
    if m2 < 0:
        raise ValueError("m2 must be nonnegative")
    return _solve_coefficient(m1, m2, zeta, 0.0, 0.0, 0.0, 0.0,
                              opts or SolverOptions())


def solve_c(m1: float, m2: float, zeta: float, eps: float,
            n1: float, n2: float, n3: float,
            opts: SolverOptions | None = None) -> FixedPointResult:
    """Perturbed-data optimal coefficient. At eps = 0 this recovers
    :func:`solve_tau` exactly. If several roots exist, the one whose
    classifier has the highest perturbed training accuracy wins."""
    if m1 <= 0:
        raise ValueError("m1 must be positive")
    if m2 < 0:
        raise ValueError("m2 must be nonnegative")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    return _solve_coefficient(m1, m2, zeta, eps, n1, n2, n3,
                              opts or SolverOptions())


@dataclass(frozen=True)
class CleanOptimalCoefficient:
    """Spurious-block weight tau of the clean-data optimal classifier
    [Sigma_1^{-1} mu_1, tau Sigma_2^{-1} mu_2]."""

    tau: float
    m1: float
    m2: float
    zeta: float

    def __post_init__(self):
        if not -1.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (-1, 1)")


@dataclass(frozen=True)
class PerturbedOptimalCoefficient:
    """Spurious-block weight c of the perturbed-data optimal classifier
    [Sigma_1^{-1}(mu_1 - eps delta_1), Sigma_2^{-1}(c mu_2 - eps delta_2)]."""

    c: float
    eps: float
    n1: float
    n2: float
    n3: float
    m1: float
    m2: float
    zeta: float

    def __post_init__(self):
        if not -1.0 < self.c < 1.0:
            raise ValueError("c must lie in (-1, 1)")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")


def _require_two_attributes(spec: PopulationSpec):
    if spec.n_attributes != 2:
        raise ValueError("this operation is defined for two-attribute populations")


def _classifier_stats(w, spec: PopulationSpec):
    w = np.asarray(w, dtype=float)
    if w.shape != (spec.dim,):
        raise ValueError(f"classifier must have length {spec.dim}, got {w.shape}")
    if not np.any(w):
        raise ValueError("classifier weights must be nonzero")
    var = 0.0
    for block, attr in zip(spec.split_blocks(w), spec.attributes):
        var += float(block @ attr.sigma @ block)
    return w, var


def train_accuracy_perturbed(w, spec: PopulationSpec, eps: float, delta) -> float:
    """Training accuracy of w when every sample is shifted by -eps y delta:
    1/2 (1 + sum_g r_g erf((mu_g - eps delta)^T w / sqrt(2 w^T Sigma w)))."""
    w, var = _classifier_stats(w, spec)
    delta = np.zeros(spec.dim) if delta is None else np.asarray(delta, dtype=float)
    if delta.shape != (spec.dim,):
        raise ValueError("delta must match the feature dimension")
    scale = math.sqrt(2.0 * var)
    total = 0.0
    for group in alignment_groups(spec.n_attributes):
        margin = float((spec.conditional_mean(group) - eps * delta) @ w)
        total += spec.group_proportion(group) * erf(margin / scale)
    return 0.5 * (1.0 + total)


def train_accuracy_clean(w, spec: PopulationSpec) -> float:
    """Training accuracy of w on the unperturbed population."""
    return train_accuracy_perturbed(w, spec, 0.0, None)


def _group_sign(group: GroupKey) -> float:
    if len(group.alignment) != 1:
        raise ValueError("scalar group accuracies are two-attribute only")
    return float(group.alignment[0])


def group_accuracy_clean(m1: float, m2: float, tau: float, group: GroupKey) -> float:
    """Clean-test accuracy of the tau-parameterized classifier on one group:
    1/2 (1 + erf((m1 + s tau m2) / sqrt(2 (m1 + tau^2 m2))))."""
    s = _group_sign(group)
    var = m1 + tau * tau * m2
    if var <= 0:
        raise ValueError("m1 + tau^2 m2 must be positive")
    return 0.5 * (1.0 + erf((m1 + s * tau * m2) / math.sqrt(2.0 * var)))


def group_accuracy_perturbed(coeff: PerturbedOptimalCoefficient,
                             group: GroupKey) -> float:
    """Clean-test accuracy of the c-parameterized classifier on one group."""
    s = _group_sign(group)
    c, eps = coeff.c, coeff.eps
    var = (coeff.m1 + c * c * coeff.m2
           - 2 * eps * coeff.n1 - 2 * c * eps * coeff.n2 + eps * eps * coeff.n3)
    if var <= 0:
        raise ValueError("nonpositive variance term: degenerate configuration")
    margin = coeff.m1 + s * c * coeff.m2 - eps * coeff.n1 - s * eps * coeff.n2
    return 0.5 * (1.0 + erf(margin / math.sqrt(2.0 * var)))


def balanced_test_accuracy(group_accuracies) -> float:
    """Unweighted mean of per-group accuracies (the balanced-test metric)."""
    if isinstance(group_accuracies, dict):
        group_accuracies = group_accuracies.values()
    values = [float(v) for v in group_accuracies]
    if not values:
        raise ValueError("no group accuracies given")
    return float(np.mean(values))


def alignment_terms(spec: PopulationSpec, delta) -> tuple[float, float, float]:
    """(n1, n2, n3) for a two-attribute population and a direction vector."""
    _require_two_attributes(spec)
    d1, d2 = spec.split_blocks(delta)
    a1, a2 = spec.attributes
    n1 = a1.mahalanobis_inner(a1.mu, d1)
    n2 = a2.mahalanobis_inner(a2.mu, d2)
    n3 = a1.mahalanobis_inner(d1, d1) + a2.mahalanobis_inner(d2, d2)
    return n1, n2, n3


def clean_optimal_classifier(spec: PopulationSpec, tau: float) -> np.ndarray:
    """[Sigma_1^{-1} mu_1, tau Sigma_2^{-1} mu_2]."""
    _require_two_attributes(spec)
    a1, a2 = spec.attributes
    return np.concatenate((a1.solve_sigma(a1.mu), tau * a2.solve_sigma(a2.mu)))


def perturbed_optimal_classifier(spec: PopulationSpec, c: float,
                                 direction: PerturbationDirection) -> np.ndarray:
    """[Sigma_1^{-1}(mu_1 - eps delta_1), Sigma_2^{-1}(c mu_2 - eps delta_2)]."""
    _require_two_attributes(spec)
    d1, d2 = spec.split_blocks(direction.delta)
    eps = direction.eps
    a1, a2 = spec.attributes
    return np.concatenate(
        (a1.solve_sigma(a1.mu - eps * d1), a2.solve_sigma(c * a2.mu - eps * d2))
    )


def clean_optimal(spec: PopulationSpec, opts: SolverOptions | None = None
                  ) -> tuple[CleanOptimalCoefficient, FixedPointResult]:
    """Solve tau for a two-attribute population."""
    _require_two_attributes(spec)
    m1 = spec.attributes[0].separability()
    m2 = spec.attributes[1].separability()
    zeta = float(spec.zeta[1])
    result = solve_tau(m1, m2, zeta, opts)
    return CleanOptimalCoefficient(result.value, m1, m2, zeta), result


def perturbed_optimal(spec: PopulationSpec, direction: PerturbationDirection,
                      opts: SolverOptions | None = None
                      ) -> tuple[PerturbedOptimalCoefficient, FixedPointResult]:
    """Solve c for a two-attribute population under a budgeted direction."""
    _require_two_attributes(spec)
    m1 = spec.attributes[0].separability()
    m2 = spec.attributes[1].separability()
    zeta = float(spec.zeta[1])
    n1, n2, n3 = alignment_terms(spec, direction.delta)
    result = solve_c(m1, m2, zeta, direction.eps, n1, n2, n3, opts)
    coeff = PerturbedOptimalCoefficient(
        c=result.value, eps=direction.eps, n1=n1, n2=n2, n3=n3,
        m1=m1, m2=m2, zeta=zeta,
    )
    return coeff, result


@dataclass(frozen=True)
class TheoreticalGap:
    """Balanced-test accuracy gap of the perturbed-data optimal classifier
    over the clean-data one, with solver diagnostics."""

    gap: float
    clean_balanced: float
    perturbed_balanced: float
    clean_group_accuracies: dict
    perturbed_group_accuracies: dict
    tau: FixedPointResult
    c: FixedPointResult
    direction: PerturbationDirection


def theoretical_gap(spec: PopulationSpec, eps_inf: float, threat,
                    opts: SolverOptions | None = None) -> TheoreticalGap:
    """End-to-end closed-form pipeline for one configuration.

    Solves tau, derives the attack direction from the clean classifier,
    scales the budget for the threat, solves c, and compares balanced-test
    accuracies. An eps_inf of 0 yields a gap of 0 up to solver tolerance.
    """
    coeff_tau, tau_result = clean_optimal(spec, opts)
    w_clean = clean_optimal_classifier(spec, coeff_tau.tau)
    eps = scale_budget(eps_inf, spec.dim, threat)
    direction = optimal_direction(w_clean, threat, eps)
    coeff_c, c_result = perturbed_optimal(spec, direction, opts)

    clean_accs = {
        g: group_accuracy_clean(coeff_tau.m1, coeff_tau.m2, coeff_tau.tau, g)
        for g in spec.groups()
    }
    pert_accs = {g: group_accuracy_perturbed(coeff_c, g) for g in spec.groups()}
    clean_bal = balanced_test_accuracy(clean_accs)
    pert_bal = balanced_test_accuracy(pert_accs)
    return TheoreticalGap(
        gap=pert_bal - clean_bal,
        clean_balanced=clean_bal,
        perturbed_balanced=pert_bal,
        clean_group_accuracies=clean_accs,
        perturbed_group_accuracies=pert_accs,
        tau=tau_result,
        c=c_result,
        direction=direction,
    )
