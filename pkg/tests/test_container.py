import numpy as np
import pytest

from ggcal.container import (
    EmbeddingSet,
    PartitionSpec,
    load_container,
    longtail_counts,
    partition,
    save_container,
)
from ggcal.errors import (
    BadMagic,
    DimensionMismatch,
    InvalidSpec,
    NonFiniteEntry,
    TruncatedFile,
)


def make_set(data, labels, domains=None, num_classes=None, num_domains=None):
    data = np.asarray(data, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.uint16)
    if domains is None:
        domains = np.zeros(len(labels), dtype=np.uint16)
    domains = np.asarray(domains, dtype=np.uint16)
    return EmbeddingSet(
        data=data,
        labels=labels,
        domains=domains,
        num_classes=num_classes or int(labels.max(initial=0)) + 1,
        num_domains=num_domains or int(domains.max(initial=0)) + 1,
    )


class TestContainerFormat:
    def test_empty_set_round_trips(self, tmp_path):
        es = EmbeddingSet(
            data=np.empty((0, 8), dtype=np.float32),
            labels=np.empty(0, dtype=np.uint16),
            domains=np.empty(0, dtype=np.uint16),
            num_classes=3,
        )
        path = tmp_path / "empty.geob"
        save_container(es, path)
        loaded = load_container(path)
        assert loaded.n == 0
        assert loaded.dim == 8
        assert loaded.num_classes == 3

    def test_round_trip_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(7)
        es = make_set(rng.standard_normal((3, 4)), [0, 1, 0])
        p1, p2 = tmp_path / "a.geob", tmp_path / "b.geob"
        save_container(es, p1)
        save_container(load_container(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_single_value_ieee754_encoding(self, tmp_path):
        es = make_set([[0.5]], [0])
        path = tmp_path / "one.geob"
        save_container(es, path)
        raw = path.read_bytes()
        # payload sits right after magic+version+header
        import struct

        hlen = struct.unpack_from("<I", raw, 6)[0]
        payload = raw[10 + hlen : 10 + hlen + 4]
        assert payload == bytes([0x00, 0x00, 0x00, 0x3F])

    def test_payload_is_n_p_4_bytes(self, tmp_path):
        es = make_set(np.ones((2, 3)), [0, 1])
        path = tmp_path / "two.geob"
        save_container(es, path)
        import struct

        raw = path.read_bytes()
        hlen = struct.unpack_from("<I", raw, 6)[0]
        # total = 10 + header + payload + labels + domains
        assert len(raw) == 10 + hlen + 2 * 3 * 4 + 2 * 2 + 2 * 2

    def test_nan_refused_on_construction(self):
        with pytest.raises(NonFiniteEntry):
            make_set([[np.nan, 0.0]], [0])

    def test_truncated_payload(self, tmp_path):
        es = make_set(np.ones((2, 2)), [0, 0])
        path = tmp_path / "t.geob"
        save_container(es, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-5])  # drop tail bytes
        with pytest.raises(TruncatedFile):
            load_container(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.geob"
        path.write_bytes(b"NOPE!" + b"\x00" * 20)
        with pytest.raises(BadMagic):
            load_container(path)

    def test_oversized_payload_rejected(self, tmp_path):
        es = make_set(np.ones((2, 2)), [0, 0])
        path = tmp_path / "o.geob"
        save_container(es, path)
        path.write_bytes(path.read_bytes() + b"\x00\x00\x00\x00")
        with pytest.raises(DimensionMismatch):
            load_container(path)

    def test_synthetic_flags_round_trip(self, tmp_path):
        es = EmbeddingSet(
            data=np.ones((3, 2), dtype=np.float32),
            labels=np.zeros(3, dtype=np.uint16),
            domains=np.zeros(3, dtype=np.uint16),
            num_classes=1,
            synthetic=np.array([False, True, True]),
        )
        path = tmp_path / "s.geob"
        save_container(es, path)
        loaded = load_container(path)
        assert loaded.synthetic.tolist() == [False, True, True]

    def test_l2_normalize_flag(self, tmp_path):
        es = make_set([[3.0, 4.0]], [0])
        path = tmp_path / "n.geob"
        save_container(es, path)
        loaded = load_container(path, l2_normalize=True)
        np.testing.assert_allclose(loaded.data[0], [0.6, 0.8], rtol=1e-6)

    def test_label_range_validated(self):
        with pytest.raises(DimensionMismatch):
            make_set([[1.0]], [5], num_classes=2)


class TestPartition:
    def test_longtail_exponential_counts(self):
        # independent oracle: evaluate 5000 * 100^(-k/9) directly
        labels = np.repeat(np.arange(10), 5000)
        es = make_set(np.zeros((len(labels), 2)), labels)
        spec = PartitionSpec(kind="longtail_exponential", imbalance_factor=100.0, seed=3)
        kept = partition(es, spec)[0]
        got = np.bincount(es.labels[kept], minlength=10)
        expected = [int(np.floor(5000 * 100.0 ** (-k / 9))) for k in range(10)]
        assert got.tolist() == expected
        assert expected[0] == 5000 and expected[9] == 50

    def test_longtail_counts_floor_min_one(self):
        counts = longtail_counts(np.array([10, 10, 10]), imbalance_factor=1000.0)
        assert counts.min() >= 1
        assert counts[0] == 10

    def test_dirichlet_large_beta_approaches_uniform(self):
        labels = np.repeat(np.arange(4), 40000)
        es = make_set(np.zeros((len(labels), 1)), labels)
        spec = PartitionSpec(
            kind="dirichlet_label_skew", num_clients=4, beta=1e6, seed=11
        )
        parts = partition(es, spec)
        for c in range(4):
            class_idx = es.class_indices(c)
            for p in parts:
                share = len(np.intersect1d(p, class_idx)) / len(class_idx)
                assert abs(share - 0.25) < 0.01

    def test_fixed_assignment_by_domain(self):
        labels = np.zeros(12, dtype=np.uint16)
        domains = np.repeat(np.arange(4), 3)
        es = make_set(np.zeros((12, 2)), labels, domains)
        parts = partition(es, PartitionSpec(kind="fixed_assignment"))
        for d, p in enumerate(parts):
            assert set(es.domains[p]) == {d}
            assert len(p) == 3

    def test_dirichlet_partition_complete_and_disjoint(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 5, size=500)
        es = make_set(rng.standard_normal((500, 3)), labels)
        spec = PartitionSpec(kind="dirichlet_label_skew", num_clients=3, beta=0.3, seed=5)
        parts = partition(es, spec)
        allidx = np.concatenate(parts)
        assert len(allidx) == 500
        assert len(np.unique(allidx)) == 500

    def test_partition_deterministic(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 5, size=200)
        es = make_set(rng.standard_normal((200, 3)), labels)
        spec = PartitionSpec(kind="dirichlet_label_skew", num_clients=3, beta=0.3, seed=9)
        a = partition(es, spec)
        b = partition(es, spec)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_invalid_specs(self):
        with pytest.raises(InvalidSpec):
            PartitionSpec(kind="nope")
        with pytest.raises(InvalidSpec):
            PartitionSpec(kind="dirichlet_label_skew", beta=0.0)
        with pytest.raises(InvalidSpec):
            PartitionSpec(kind="longtail_exponential", imbalance_factor=0.5)
