"""Gaussian-mixture populations with a label-tied invariant attribute and
spuriously correlated extra attributes.

Each attribute n contributes a feature block ``z_n | y ~ N(y * s_n * mu_n,
sigma_n)`` where ``s_n = +1`` when the attribute agrees with the label and
``-1`` otherwise. Attribute 1 always agrees (``s_1 = +1``); attribute n >= 2
agrees with probability ``zeta_n``. Subgroups are indexed by the alignment
vector ``s``, so a two-attribute population has exactly an aligned and a
misaligned group.
"""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "AttributeSpec",
    "PopulationSpec",
    "GroupKey",
    "LabeledSample",
    "SampleBatch",
    "ALIGNED",
    "MISALIGNED",
    "alignment_groups",
    "sample",
    "two_attribute_population",
]

_SYM_TOL = 1e-12


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class AttributeSpec:
    """Cluster geometry of one attribute: mean offset and covariance.

    The covariance must be symmetric positive definite; a Cholesky factor is
    computed once at construction and reused for sampling and Mahalanobis
    products.
    """

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        if mu.ndim != 1 or mu.size < 1:
            raise ValueError("mu must be a 1-D vector with at least one entry")
        if not np.all(np.isfinite(mu)):
            raise ValueError("mu must have finite entries")
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.shape != (mu.size, mu.size):
            raise ValueError(
                f"sigma must be {mu.size}x{mu.size} to match mu, got {sigma.shape}"
            )
        if not np.all(np.isfinite(sigma)):
            raise ValueError("sigma must have finite entries")
        if not np.allclose(sigma, sigma.T, rtol=0.0, atol=_SYM_TOL):
            raise ValueError("sigma must be symmetric")
        try:
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError as err:
            raise ValueError("sigma must be positive definite") from err
        object.__setattr__(self, "mu", _frozen_array(mu))
        object.__setattr__(self, "sigma", _frozen_array(sigma))
        object.__setattr__(self, "_chol", _frozen_array(chol))

    @property
    def dim(self) -> int:
        return self.mu.size

    @property
    def cholesky(self) -> np.ndarray:
        """Lower-triangular factor L with sigma = L @ L.T."""
        return self._chol

    def separability(self) -> float:
        """Mahalanobis distance mu^T sigma^{-1} mu between the two clusters."""
        half = solve_triangular(self._chol, self.mu, lower=True)
        return float(half @ half)

    def mahalanobis_inner(self, x, y) -> float:
        """Inner product x^T sigma^{-1} y."""
        hx = solve_triangular(self._chol, np.asarray(x, dtype=float), lower=True)
        hy = solve_triangular(self._chol, np.asarray(y, dtype=float), lower=True)
        return float(hx @ hy)

    def solve_sigma(self, x) -> np.ndarray:
        """sigma^{-1} x via the cached Cholesky factor."""
        half = solve_triangular(self._chol, np.asarray(x, dtype=float), lower=True)
        return solve_triangular(self._chol.T, half, lower=False)


@dataclass(frozen=True)
class GroupKey:
    """Alignment of each spurious attribute with the invariant one.

    ``alignment[k] = +1`` means attribute k+2 agrees with attribute 1 for the
    samples in this group, ``-1`` means it disagrees.
    """

    alignment: tuple[int, ...]

    def __post_init__(self):
        alignment = tuple(int(s) for s in self.alignment)
        if len(alignment) < 1:
            raise ValueError("alignment must cover at least one spurious attribute")
        if any(s not in (-1, 1) for s in alignment):
            raise ValueError("alignment entries must be +1 or -1")
        object.__setattr__(self, "alignment", alignment)

    @classmethod
    def aligned(cls, n_attributes: int = 2) -> "GroupKey":
        """Group where every spurious attribute agrees with the label."""
        return cls((1,) * (n_attributes - 1))

    @classmethod
    def misaligned(cls, n_attributes: int = 2) -> "GroupKey":
        """Group where every spurious attribute disagrees with the label."""
        return cls((-1,) * (n_attributes - 1))


ALIGNED = GroupKey.aligned()
MISALIGNED = GroupKey.misaligned()


def alignment_groups(n_attributes: int) -> tuple[GroupKey, ...]:
    """All 2^(N-1) alignment groups, in a fixed deterministic order."""
    if n_attributes < 2:
        raise ValueError("need at least two attributes to form groups")
    return tuple(
        GroupKey(combo) for combo in itertools.product((1, -1), repeat=n_attributes - 1)
    )


@dataclass(frozen=True, eq=False)
class PopulationSpec:
    """Full generative description: per-attribute Gaussians plus the
    correlation vector zeta (zeta[0] is the invariant attribute and is 1)."""

    attributes: tuple[AttributeSpec, ...]
    zeta: np.ndarray

    def __post_init__(self):
        attributes = tuple(self.attributes)
        if len(attributes) < 2:
            raise ValueError("need at least two attributes")
        if not all(isinstance(a, AttributeSpec) for a in attributes):
            raise ValueError("attributes must be AttributeSpec instances")
        zeta = np.atleast_1d(np.asarray(self.zeta, dtype=float))
        if zeta.shape != (len(attributes),):
            raise ValueError("zeta must have one entry per attribute")
        if zeta[0] != 1.0:
            raise ValueError("the invariant attribute requires zeta[0] == 1")
        rest = zeta[1:]
        if np.any(rest < 0.5) or np.any(rest > 1.0):
            raise ValueError("spurious correlations must lie in [0.5, 1]")
        object.__setattr__(self, "attributes", attributes)
        object.__setattr__(self, "zeta", _frozen_array(zeta))

    @property
    def n_attributes(self) -> int:
        return len(self.attributes)

    @property
    def dim(self) -> int:
        return sum(a.dim for a in self.attributes)

    @property
    def block_slices(self) -> tuple[slice, ...]:
        """Feature-vector slice of each attribute block."""
        slices, start = [], 0
        for attr in self.attributes:
            slices.append(slice(start, start + attr.dim))
            start += attr.dim
        return tuple(slices)

    def split_blocks(self, vec) -> list[np.ndarray]:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.dim,):
            raise ValueError(f"expected a length-{self.dim} vector, got {vec.shape}")
        return [vec[s] for s in self.block_slices]

    def groups(self) -> tuple[GroupKey, ...]:
        return alignment_groups(self.n_attributes)

    def group_proportion(self, group: GroupKey) -> float:
        """Probability of an alignment group: product of zeta_n for agreeing
        spurious attributes and 1 - zeta_n for disagreeing ones."""
        if len(group.alignment) != self.n_attributes - 1:
            raise ValueError("group alignment length must be n_attributes - 1")
        p = 1.0
        for s, z in zip(group.alignment, self.zeta[1:]):
            p *= z if s == 1 else 1.0 - z
        return p

    def conditional_mean(self, group: GroupKey) -> np.ndarray:
        """Mean of z given y = +1 for the group: [mu_1, s_2 mu_2, ...]."""
        if len(group.alignment) != self.n_attributes - 1:
            raise ValueError("group alignment length must be n_attributes - 1")
        signs = (1,) + group.alignment
        return np.concatenate(
            [s * attr.mu for s, attr in zip(signs, self.attributes)]
        )

    def balanced_variant(self) -> "PopulationSpec":
        """Same geometry with every spurious correlation reset to 0.5."""
        zeta = np.concatenate(([1.0], np.full(self.n_attributes - 1, 0.5)))
        return PopulationSpec(self.attributes, zeta)

    def to_dict(self) -> dict:
        """Config-document form; covariance matrices are row-major lists."""
        return {
            "attributes": [
                {"mu": attr.mu.tolist(), "sigma": attr.sigma.tolist()}
                for attr in self.attributes
            ],
            "zeta": self.zeta.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PopulationSpec":
        try:
            attributes = tuple(
                AttributeSpec(entry["mu"], entry["sigma"])
                for entry in doc["attributes"]
            )
            zeta = doc["zeta"]
        except (KeyError, TypeError) as err:
            raise ValueError(f"malformed population document: {err}") from err
        return cls(attributes, zeta)


def two_attribute_population(mu1: float, mu2: float, zeta: float,
                             sigma1: float = 1.0, sigma2: float = 1.0) -> PopulationSpec:
    """The standard two-attribute setup with scalar feature blocks."""
    return PopulationSpec(
        (AttributeSpec([mu1], [[sigma1]]), AttributeSpec([mu2], [[sigma2]])),
        [1.0, zeta],
    )


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """One draw: concatenated features, label in {-1, +1}, alignment group."""

    z: np.ndarray
    y: int
    group: GroupKey


class SampleBatch:
    """A sequence of labeled samples stored as arrays.

    ``z`` is (n, d), ``y`` is (n,) holding +/-1.0, and ``alignment`` is
    (n, N-1) holding the per-sample alignment signs. Indexing with an int
    yields a :class:`LabeledSample`; slicing yields a sub-batch.
    """

    def __init__(self, z: np.ndarray, y: np.ndarray, alignment: np.ndarray):
        z = np.asarray(z, dtype=float)
        y = np.asarray(y, dtype=float)
        alignment = np.asarray(alignment, dtype=np.int8)
        if z.ndim != 2 or y.shape != (z.shape[0],) or alignment.shape[0] != z.shape[0]:
            raise ValueError("inconsistent batch array shapes")
        self.z = z
        self.y = y
        self.alignment = alignment

    def __len__(self) -> int:
        return self.z.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return SampleBatch(self.z[idx], self.y[idx], self.alignment[idx])
        return LabeledSample(
            z=self.z[idx],
            y=int(self.y[idx]),
            group=GroupKey(tuple(self.alignment[idx])),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def dim(self) -> int:
        return self.z.shape[1]

    @property
    def n_attributes(self) -> int:
        return self.alignment.shape[1] + 1

    def group_mask(self, group: GroupKey) -> np.ndarray:
        target = np.asarray(group.alignment, dtype=np.int8)
        return np.all(self.alignment == target, axis=1)

    def iter_groups(self):
        """Yield (group, boolean mask) for every nonempty alignment group."""
        for group in alignment_groups(self.n_attributes):
            mask = self.group_mask(group)
            if mask.any():
                yield group, mask

    def with_features(self, z_new: np.ndarray) -> "SampleBatch":
        """Same labels and groups with replaced feature matrix."""
        return SampleBatch(z_new, self.y, self.alignment)


def sample(spec: PopulationSpec, n: int, seed: int,
           *, alignment: GroupKey | None = None) -> SampleBatch:
    """Draw n labeled samples, reproducibly.

    Uses the counter-based Philox generator keyed by ``seed``. Randomness is
    consumed in a fixed block order: labels first, then one alignment column
    per spurious attribute, then one standard-normal block per attribute.
    Passing ``alignment`` conditions on that group exactly (the alignment
    columns are constants and consume no randomness).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.Generator(np.random.Philox(seed))
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    n_spur = spec.n_attributes - 1
    if alignment is not None:
        if len(alignment.alignment) != n_spur:
            raise ValueError("alignment length must match the spurious attributes")
        signs = np.tile(np.asarray(alignment.alignment, dtype=float), (n, 1))
    else:
        signs = np.empty((n, n_spur))
        for j in range(n_spur):
            signs[:, j] = np.where(rng.random(n) < spec.zeta[j + 1], 1.0, -1.0)
    blocks = []
    for k, attr in enumerate(spec.attributes):
        s_k = y if k == 0 else y * signs[:, k - 1]
        noise = rng.standard_normal((n, attr.dim))
        blocks.append(s_k[:, None] * attr.mu + noise @ attr.cholesky.T)
    return SampleBatch(np.concatenate(blocks, axis=1), y, signs.astype(np.int8))
