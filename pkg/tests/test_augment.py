import numpy as np
import pytest

from ggcal.aggregate import ShapeBank, build_shape_bank, upload_from_set
from ggcal.augment import (
    AugmentPlan,
    augment_class,
    augment_multi_domain,
    augment_single_domain,
    sample_perturbation,
    sample_perturbations,
)
from ggcal.container import EmbeddingSet, save_container
from ggcal.errors import EmptySource, MissingPrototype, MissingShape
from ggcal.geometry import GeometricShape, Prototype


def axis_shape(lams, p=None, m=None):
    """Shape whose eigenvectors are the first m coordinate axes."""
    lams = np.asarray(lams, dtype=np.float64)
    p = p or len(lams)
    m = m or len(lams)
    full = np.zeros(p)
    full[: len(lams)] = lams
    return GeometricShape(eigenvectors=np.eye(p)[:m], eigenvalues=full)


def make_set(rows, labels, domains=None, num_classes=None, num_domains=None):
    rows = np.asarray(rows, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.uint16)
    if domains is None:
        domains = np.zeros(len(labels), dtype=np.uint16)
    domains = np.asarray(domains, dtype=np.uint16)
    return EmbeddingSet(
        data=rows,
        labels=labels,
        domains=domains,
        num_classes=num_classes or int(labels.max()) + 1,
        num_domains=num_domains or int(domains.max(initial=0)) + 1,
    )


class TestSamplePerturbation:
    def test_zero_eigenvalues_give_zero(self):
        shp = axis_shape([0.0, 0.0])
        beta = sample_perturbation(shp, np.random.default_rng(0))
        np.testing.assert_array_equal(beta, np.zeros(2))

    def test_lambda_mode_covariance(self):
        # Monte-Carlo oracle: Var(eps * lam) = lam^2 per axis
        shp = axis_shape([2.0, 1.0])
        betas = sample_perturbations(shp, 100_000, np.random.default_rng(1), "lambda")
        emp = betas.T @ betas / len(betas)
        target = np.diag([4.0, 1.0])
        rel = np.linalg.norm(emp - target) / np.linalg.norm(target)
        assert rel < 0.02

    def test_sqrt_lambda_mode_covariance(self):
        shp = axis_shape([2.0, 1.0])
        betas = sample_perturbations(
            shp, 100_000, np.random.default_rng(2), "sqrt_lambda"
        )
        emp = betas.T @ betas / len(betas)
        target = np.diag([2.0, 1.0])
        rel = np.linalg.norm(emp - target) / np.linalg.norm(target)
        assert rel < 0.02

    def test_stays_in_retained_subspace(self):
        shp = axis_shape([3.0, 1.0], p=6, m=2)
        betas = sample_perturbations(shp, 1000, np.random.default_rng(3))
        leakage = np.abs(betas[:, 2:]).max()
        assert leakage <= 1e-10


class TestAugmentClass:
    def test_target_already_met(self):
        out = augment_class(np.ones((3, 2)), axis_shape([1.0, 1.0]), 3, np.random.default_rng(0))
        assert out.shape == (0, 2)

    def test_round_robin_center_counts(self):
        samples = np.arange(4, dtype=np.float64).reshape(4, 1) * 100
        shp = axis_shape([0.0])
        out = augment_class(samples, shp, 10, np.random.default_rng(0))
        assert out.shape == (6, 1)
        # zero shape: outputs equal their centers, revealing the cycle
        counts = [int((out == samples[i, 0]).sum()) for i in range(4)]
        assert counts == [2, 2, 1, 1]

    def test_single_center_covariance(self):
        shp = axis_shape([2.0, 1.0])
        out = augment_class(
            np.zeros((1, 2)), shp, 10001, np.random.default_rng(4), "lambda"
        )
        assert out.shape == (10000, 2)
        emp = out.T @ out / len(out)
        target = np.diag([4.0, 1.0])
        rel = np.linalg.norm(emp - target) / np.linalg.norm(target)
        assert rel < 0.03

    def test_mean_preservation(self):
        center = np.array([[5.0, -3.0]])
        shp = axis_shape([1.0, 1.0])
        out = augment_class(center, shp, 20001, np.random.default_rng(5))
        # per-axis std of the mean estimate is lam / sqrt(n)
        se = 1.0 / np.sqrt(len(out))
        assert np.all(np.abs(out.mean(axis=0) - center[0]) < 3 * se)

    def test_empty_source(self):
        with pytest.raises(EmptySource):
            augment_class(np.empty((0, 2)), axis_shape([1.0, 1.0]), 5, np.random.default_rng(0))

    def test_deterministic(self):
        shp = axis_shape([1.0, 0.5])
        a = augment_class(np.ones((2, 2)), shp, 9, np.random.default_rng(7))
        b = augment_class(np.ones((2, 2)), shp, 9, np.random.default_rng(7))
        assert a.tobytes() == b.tobytes()


def bank_for(es, m=2, include_prototypes=False):
    return build_shape_bank([upload_from_set(es, 0)], m, include_prototypes)


class TestAugmentSingleDomain:
    def test_noop_when_target_met(self):
        rng = np.random.default_rng(0)
        es = make_set(rng.standard_normal((40, 3)), np.repeat([0, 1], 20))
        bank = bank_for(es)
        out = augment_single_domain(es, bank, AugmentPlan(target_count_per_class=10))
        assert out.n == es.n
        np.testing.assert_array_equal(out.data, es.data)

    def test_reaches_target(self):
        rng = np.random.default_rng(1)
        es = make_set(rng.standard_normal((5, 3)), np.zeros(5, dtype=np.uint16))
        bank = bank_for(es)
        out = augment_single_domain(es, bank, AugmentPlan(target_count_per_class=2000))
        assert out.n == 2000
        assert int(out.synthetic.sum()) == 1995
        # original rows untouched, synthetic flagged
        np.testing.assert_array_equal(out.data[:5], es.data)
        assert not out.synthetic[:5].any()

    def test_missing_shape_names_class(self):
        rng = np.random.default_rng(2)
        es = make_set(rng.standard_normal((20, 3)), np.repeat([0, 1], 10))
        only0 = make_set(rng.standard_normal((10, 3)), np.zeros(10, dtype=np.uint16))
        bank = bank_for(only0)
        with pytest.raises(MissingShape, match="1"):
            augment_single_domain(es, bank, AugmentPlan(target_count_per_class=50))

    def test_byte_deterministic(self, tmp_path):
        rng = np.random.default_rng(3)
        es = make_set(rng.standard_normal((6, 4)), np.repeat([0, 1], 3))
        bank = bank_for(es)
        plan = AugmentPlan(target_count_per_class=50, seed=11)
        p1, p2 = tmp_path / "a.geob", tmp_path / "b.geob"
        save_container(augment_single_domain(es, bank, plan), p1)
        save_container(augment_single_domain(es, bank, plan), p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestAugmentMultiDomain:
    def multi_bank(self, es, m=2):
        uploads = [
            upload_from_set(es.take(es.domain_indices(d)), client_id=d, domain_id=d)
            for d in range(es.num_domains)
        ]
        return build_shape_bank(uploads, m, include_prototypes=True)

    def test_single_domain_collapse(self):
        rng = np.random.default_rng(4)
        es = make_set(rng.standard_normal((30, 3)), np.repeat([0, 1], 15))
        bank = self.multi_bank(es)
        plan = AugmentPlan(target_count_per_class=40, per_prototype_count=500, seed=5)
        out = augment_multi_domain(es, bank, plan)
        ref = augment_single_domain(es, bank, plan)
        np.testing.assert_array_equal(out.data, ref.data)

    def test_step2_row_count(self):
        rng = np.random.default_rng(5)
        # 3 domains, 10 classes; bank over all domains, client local to domain 0
        rows = rng.standard_normal((10 * 3 * 10, 4))
        labels = np.tile(np.repeat(np.arange(10), 10), 3)
        domains = np.repeat(np.arange(3), 100)
        full = make_set(rows, labels, domains)
        bank = self.multi_bank(full)
        client = full.take(full.domain_indices(0))
        plan = AugmentPlan(
            target_count_per_class=10, per_prototype_count=500, seed=6
        )  # step 1 is a no-op at target 10
        out = augment_multi_domain(client, bank, plan)
        assert out.n == client.n + 10 * 2 * 500
        # step-2 rows carry the foreign domain tag
        added = out.domains[client.n :]
        assert set(np.unique(added)) == {1, 2}

    def test_degenerate_shape_rows_equal_prototype(self):
        q = np.array([7.0, -2.0])
        shapes = {0: GeometricShape(eigenvectors=np.eye(2)[:1], eigenvalues=np.zeros(2))}
        bank = ShapeBank(
            shapes=shapes,
            means={0: q},
            prototypes={0: [
                Prototype(vector=np.zeros(2), class_id=0, domain_id=0),
                Prototype(vector=q, class_id=0, domain_id=1),
            ]},
        )
        client = make_set(np.zeros((3, 2)), np.zeros(3, dtype=np.uint16), num_domains=2)
        plan = AugmentPlan(target_count_per_class=3, per_prototype_count=4)
        out = augment_multi_domain(client, bank, plan)
        added = out.data[3:]
        assert added.shape == (4, 2)
        np.testing.assert_allclose(added, np.tile(q, (4, 1)), atol=1e-6)

    def test_missing_prototypes(self):
        rng = np.random.default_rng(6)
        es = make_set(rng.standard_normal((10, 2)), np.zeros(10, dtype=np.uint16))
        bank = bank_for(es)  # no prototypes
        with pytest.raises(MissingPrototype):
            augment_multi_domain(es, bank, AugmentPlan())
