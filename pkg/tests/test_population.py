import numpy as np
import pytest

from spurgap import (
    ALIGNED,
    MISALIGNED,
    AttributeSpec,
    GroupKey,
    PopulationSpec,
    alignment_groups,
    sample,
    two_attribute_population,
)


class TestAttributeSpec:
    def test_separability_identity_unit_mean(self):
        attr = AttributeSpec([1.0], [[1.0]])
        assert attr.separability() == pytest.approx(1.0, abs=0)

    def test_separability_zero_mean(self):
        attr = AttributeSpec([0.0, 0.0], np.eye(2))
        assert attr.separability() == 0.0

    def test_separability_scaled(self):
        # 2 * (1/4) * 2
        attr = AttributeSpec([2.0], [[4.0]])
        assert attr.separability() == pytest.approx(1.0, rel=1e-15)

    def test_separability_full_covariance(self):
        mu = np.array([1.0, -0.5, 2.0])
        a = np.array([[2.0, 0.3, 0.1], [0.3, 1.5, -0.2], [0.1, -0.2, 1.0]])
        attr = AttributeSpec(mu, a)
        expected = mu @ np.linalg.solve(a, mu)
        assert attr.separability() == pytest.approx(expected, rel=1e-12)

    def test_rejects_singular_sigma(self):
        with pytest.raises(ValueError, match="positive definite"):
            AttributeSpec([1.0, 1.0], [[1.0, 1.0], [1.0, 1.0]])

    def test_rejects_indefinite_sigma(self):
        with pytest.raises(ValueError, match="positive definite"):
            AttributeSpec([1.0, 1.0], [[1.0, 2.0], [2.0, 1.0]])

    def test_rejects_asymmetric_sigma(self):
        with pytest.raises(ValueError, match="symmetric"):
            AttributeSpec([1.0, 1.0], [[1.0, 0.5], [0.2, 1.0]])

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError, match="match mu"):
            AttributeSpec([1.0, 2.0], [[1.0]])

    def test_rejects_nonfinite_mean(self):
        with pytest.raises(ValueError, match="finite"):
            AttributeSpec([np.nan], [[1.0]])

    def test_arrays_frozen(self):
        attr = AttributeSpec([1.0], [[1.0]])
        with pytest.raises(ValueError):
            attr.mu[0] = 2.0


class TestGroupKey:
    def test_two_attribute_groups(self):
        assert alignment_groups(2) == (ALIGNED, MISALIGNED)
        assert ALIGNED.alignment == (1,)
        assert MISALIGNED.alignment == (-1,)

    def test_group_count(self):
        assert len(alignment_groups(4)) == 8

    def test_rejects_bad_signs(self):
        with pytest.raises(ValueError):
            GroupKey((0,))

    def test_hashable(self):
        assert {GroupKey((1,)): "a"}[ALIGNED] == "a"


class TestPopulationSpec:
    def test_requires_unit_invariant_zeta(self):
        attrs = (AttributeSpec([1.0], [[1.0]]), AttributeSpec([1.0], [[1.0]]))
        with pytest.raises(ValueError, match="zeta\\[0\\]"):
            PopulationSpec(attrs, [0.9, 0.9])

    def test_rejects_out_of_range_zeta(self):
        attrs = (AttributeSpec([1.0], [[1.0]]), AttributeSpec([1.0], [[1.0]]))
        with pytest.raises(ValueError, match="\\[0.5, 1\\]"):
            PopulationSpec(attrs, [1.0, 0.3])

    def test_group_proportion_majority(self):
        spec = two_attribute_population(1.0, 1.0, 0.95)
        assert spec.group_proportion(ALIGNED) == pytest.approx(0.95, abs=0)

    def test_group_proportion_balanced(self):
        spec = two_attribute_population(1.0, 1.0, 0.5)
        assert spec.group_proportion(MISALIGNED) == pytest.approx(0.5, abs=0)

    def test_group_proportion_three_attributes(self):
        spec = PopulationSpec(
            tuple(AttributeSpec([1.0], [[1.0]]) for _ in range(3)),
            [1.0, 0.9, 0.8],
        )
        assert spec.group_proportion(GroupKey((1, -1))) == pytest.approx(0.18, rel=1e-15)

    @pytest.mark.parametrize("n_attributes", [2, 3, 4])
    def test_group_proportions_sum_to_one(self, n_attributes):
        rng = np.random.default_rng(5)
        for _ in range(20):
            zeta = np.concatenate(([1.0], rng.uniform(0.5, 1.0, n_attributes - 1)))
            spec = PopulationSpec(
                tuple(AttributeSpec([1.0], [[1.0]]) for _ in range(n_attributes)),
                zeta,
            )
            total = sum(spec.group_proportion(g) for g in spec.groups())
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_balanced_variant(self):
        spec = two_attribute_population(1.0, 2.0, 0.95)
        balanced = spec.balanced_variant()
        assert balanced.zeta.tolist() == [1.0, 0.5]
        assert balanced.attributes == spec.attributes
        assert balanced.balanced_variant().zeta.tolist() == [1.0, 0.5]

    def test_balanced_variant_componentwise(self):
        spec = PopulationSpec(
            tuple(AttributeSpec([1.0], [[1.0]]) for _ in range(3)),
            [1.0, 0.9, 0.99],
        )
        assert spec.balanced_variant().zeta.tolist() == [1.0, 0.5, 0.5]

    def test_conditional_mean(self):
        spec = two_attribute_population(1.0, 2.0, 0.9)
        assert spec.conditional_mean(ALIGNED).tolist() == [1.0, 2.0]
        assert spec.conditional_mean(MISALIGNED).tolist() == [1.0, -2.0]

    def test_roundtrip_dict(self):
        spec = PopulationSpec(
            (
                AttributeSpec([1.0, 0.5], [[2.0, 0.1], [0.1, 1.0]]),
                AttributeSpec([3.0], [[4.0]]),
            ),
            [1.0, 0.8],
        )
        doc = spec.to_dict()
        assert doc["attributes"][0]["sigma"] == [[2.0, 0.1], [0.1, 1.0]]
        assert doc["zeta"] == [1.0, 0.8]
        clone = PopulationSpec.from_dict(doc)
        for a, b in zip(spec.attributes, clone.attributes):
            np.testing.assert_array_equal(a.mu, b.mu)
            np.testing.assert_array_equal(a.sigma, b.sigma)
        np.testing.assert_array_equal(spec.zeta, clone.zeta)

    def test_from_dict_rejects_malformed(self):
        with pytest.raises(ValueError, match="malformed"):
            PopulationSpec.from_dict({"zeta": [1.0, 0.9]})


class TestSample:
    def test_seeded_reproducibility(self):
        spec = two_attribute_population(1.0, 1.0, 0.9)
        a = sample(spec, 500, seed=123)
        b = sample(spec, 500, seed=123)
        np.testing.assert_array_equal(a.z, b.z)
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(a.alignment, b.alignment)
        c = sample(spec, 500, seed=124)
        assert not np.array_equal(a.z, c.z)

    def test_degenerate_correlation_all_aligned(self):
        spec = two_attribute_population(1.0, 1.0, 1.0)
        batch = sample(spec, 10_000, seed=0)
        assert batch.group_mask(ALIGNED).all()

    def test_aligned_fraction_matches_zeta(self):
        # binomial 3 sigma at n=1e6 is ~6.5e-4, spec bound is 1e-3
        spec = two_attribute_population(1.0, 1.0, 0.95)
        batch = sample(spec, 10**6, seed=42)
        assert abs(batch.group_mask(ALIGNED).mean() - 0.95) < 1e-3

    def test_invariant_feature_mean(self):
        # y*z1 ~ N(3, 1): 3 sigma bound at n=1e6 is 0.003
        spec = two_attribute_population(3.0, 3.0, 0.9)
        batch = sample(spec, 10**6, seed=7)
        assert abs(np.mean(batch.y * batch.z[:, 0]) - 3.0) < 0.003

    def test_group_conditional_feature_means(self):
        spec = two_attribute_population(1.5, 2.5, 0.9)
        batch = sample(spec, 10**6, seed=11)
        for group, mask in batch.iter_groups():
            n_g = mask.sum()
            target = spec.conditional_mean(group)
            means = np.mean(batch.y[mask, None] * batch.z[mask], axis=0)
            bound = 3.0 / np.sqrt(n_g)
            np.testing.assert_allclose(means, target, atol=bound)

    def test_three_attribute_group_frequencies(self):
        spec = PopulationSpec(
            tuple(AttributeSpec([1.0], [[1.0]]) for _ in range(3)),
            [1.0, 0.9, 0.7],
        )
        batch = sample(spec, 10**6, seed=3)
        for group in spec.groups():
            p = spec.group_proportion(group)
            freq = batch.group_mask(group).mean()
            assert abs(freq - p) < 3 * np.sqrt(p * (1 - p) / len(batch))

    def test_full_covariance_block(self):
        sigma = np.array([[2.0, 0.6], [0.6, 1.0]])
        spec = PopulationSpec(
            (AttributeSpec([1.0, -1.0], sigma), AttributeSpec([2.0], [[1.0]])),
            [1.0, 0.8],
        )
        batch = sample(spec, 200_000, seed=9)
        centered = batch.y[:, None] * batch.z[:, :2]
        emp = np.cov(centered.T)
        np.testing.assert_allclose(emp, sigma, atol=0.03)

    def test_conditional_sampling_forces_group(self):
        spec = two_attribute_population(1.0, 1.0, 0.95)
        batch = sample(spec, 5_000, seed=1, alignment=MISALIGNED)
        assert batch.group_mask(MISALIGNED).all()
        means = np.mean(batch.y[:, None] * batch.z, axis=0)
        np.testing.assert_allclose(means, [1.0, -1.0], atol=0.05)

    def test_rejects_empty_batch(self):
        spec = two_attribute_population(1.0, 1.0, 0.9)
        with pytest.raises(ValueError):
            sample(spec, 0, seed=0)

    def test_batch_indexing(self):
        spec = two_attribute_population(1.0, 1.0, 0.9)
        batch = sample(spec, 50, seed=2)
        one = batch[3]
        assert one.y in (-1, 1)
        assert one.z.shape == (2,)
        assert one.group in (ALIGNED, MISALIGNED)
        sub = batch[:10]
        assert len(sub) == 10
        np.testing.assert_array_equal(sub.z, batch.z[:10])
