import itertools
import math

import numpy as np
import pytest

from exposure_lab.errors import DataError
from exposure_lab.semlink import (
    CosineMatrix,
    EmbeddingStore,
    cosine_clamped,
    hash_embeddings,
    joint_top_quantile_average,
    load_embedding_store,
    nearest_rank_threshold,
    read_transition,
    write_embedding_store,
    write_transition_with_ids,
)


def _store(**vectors):
    entries = {k: np.asarray(v, dtype=np.float64) for k, v in vectors.items()}
    dim = len(next(iter(entries.values())))
    return EmbeddingStore(dim, entries)


class TestEmbeddingStore:
    def test_rejects_zero_vector(self):
        with pytest.raises(DataError, match="all zeros"):
            _store(a=[0.0, 0.0])

    def test_rejects_nan(self):
        with pytest.raises(DataError, match="NaN"):
            _store(a=[1.0, float("nan")])

    def test_rejects_length_mismatch(self):
        with pytest.raises(DataError, match="length"):
            EmbeddingStore(3, {"a": np.ones(2)})

    def test_emb1_roundtrip_bitwise(self, tmp_path):
        rng = np.random.default_rng(3)
        store = EmbeddingStore(
            16,
            {
                f"id-{i}": rng.normal(size=16).astype(np.float32).astype(np.float64)
                for i in range(5)
            },
        )
        path = tmp_path / "store.emb"
        write_embedding_store(store, path)
        loaded = load_embedding_store(path)
        assert loaded.dim == 16
        assert set(loaded.entries) == set(store.entries)
        for key in store.entries:
            assert np.array_equal(
                loaded.entries[key].astype(np.float32),
                store.entries[key].astype(np.float32),
            )

    def test_csv_store(self, tmp_path):
        path = tmp_path / "store.csv"
        path.write_text("id,v0,v1,v2\nalpha,1,0,0\nbeta,0,2,0\n")
        store = load_embedding_store(path)
        assert store.dim == 3
        assert store.entries["beta"][1] == 2.0

    def test_truncated_binary_rejected(self, tmp_path):
        path = tmp_path / "bad.emb"
        path.write_bytes(b"EMB1" + b"\x02\x00")
        with pytest.raises(DataError, match="truncated"):
            load_embedding_store(path)


class TestCosineClamped:
    def test_identical_vectors(self):
        a = _store(x=[1.0, 2.0, 3.0])
        m = cosine_clamped(a, a)
        assert m.values[0, 0] == pytest.approx(1.0)

    def test_orthogonal_vectors(self):
        a = _store(x=[1.0, 0.0])
        b = _store(y=[0.0, 5.0])
        assert cosine_clamped(a, b).values[0, 0] == pytest.approx(0.0)

    def test_antiparallel_clamped_to_zero(self):
        a = _store(x=[1.0, 1.0])
        b = _store(y=[-2.0, -2.0])
        assert cosine_clamped(a, b).values[0, 0] == 0.0

    def test_dim_mismatch(self):
        with pytest.raises(DataError, match="mismatch"):
            cosine_clamped(_store(x=[1.0, 0.0]), _store(y=[1.0, 0.0, 0.0]))

    def test_values_in_unit_interval(self):
        rng = np.random.default_rng(11)
        a = _store(**{f"a{i}": rng.normal(size=6) for i in range(4)})
        b = _store(**{f"b{i}": rng.normal(size=6) for i in range(5)})
        values = cosine_clamped(a, b).values
        assert np.all(values >= 0.0) and np.all(values <= 1.0)


def _matrix(rows):
    arr = np.asarray(rows, dtype=np.float64)
    return CosineMatrix(
        tuple(f"r{i}" for i in range(arr.shape[0])),
        tuple(f"c{j}" for j in range(arr.shape[1])),
        arr,
    )


def _oracle_top_set(rows, q):
    """Nearest-rank top-q index set by exhaustive enumeration."""
    flat = sorted(v for row in rows for v in row)
    n = len(flat)
    rank = math.ceil((1.0 - q) * n - 1e-9)
    thr = -math.inf if rank <= 0 else flat[rank - 1]
    return {
        (r, c)
        for r, row in enumerate(rows)
        for c, v in enumerate(row)
        if v >= thr
    }


class TestJointTopQuantile:
    def test_derived_two_by_two(self):
        m_name = _matrix([[0.9, 0.1], [0.2, 0.3]])
        m_desc = _matrix([[0.8, 0.05], [0.4, 0.1]])
        kept = joint_top_quantile_average(m_name, m_desc, 0.25)
        assert kept.values == {("r0", "c0"): pytest.approx(0.85)}
        assert kept.get("r1", "c1") == 0.0

    def test_full_matrix_mode(self):
        m_name = _matrix([[0.9, 0.1], [0.2, 0.3]])
        m_desc = _matrix([[0.8, 0.05], [0.4, 0.1]])
        kept = joint_top_quantile_average(m_name, m_desc, 1.0)
        assert len(kept.values) == 4
        assert kept.values[("r1", "c0")] == pytest.approx(0.3)

    def test_equal_matrices_symmetry(self):
        m = _matrix([[0.9, 0.1, 0.4], [0.2, 0.3, 0.7], [0.0, 0.5, 0.6]])
        kept = joint_top_quantile_average(m, m, 0.25)
        oracle = _oracle_top_set(m.values.tolist(), 0.25)
        assert {(int(r[1:]), int(c[1:])) for r, c in kept.values} == oracle
        for (r, c), v in kept.values.items():
            assert v == m.values[int(r[1:]), int(c[1:])]

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            joint_top_quantile_average(
                _matrix([[0.5, 0.5]]), _matrix([[0.5], [0.5]]), 0.5
            )

    @pytest.mark.parametrize("q", [0.25, 0.5, 1.0])
    def test_three_by_three_matches_oracle(self, q):
        # exhaustive hand-checkable enumeration over tie-heavy alphabets
        rng = np.random.default_rng(29)
        alphabet = [0.0, 0.25, 0.5, 0.75, 1.0]
        for _ in range(40):
            a = rng.choice(alphabet, size=(3, 3))
            b = rng.choice(alphabet, size=(3, 3))
            kept = joint_top_quantile_average(_matrix(a), _matrix(b), q)
            expected = _oracle_top_set(a.tolist(), q) & _oracle_top_set(b.tolist(), q)
            got = {(int(r[1:]), int(c[1:])) for r, c in kept.values}
            assert got == expected
            for (rs, cs), v in kept.values.items():
                r, c = int(rs[1:]), int(cs[1:])
                assert v == pytest.approx((a[r, c] + b[r, c]) / 2)

    def test_hand_computed_three_by_three(self):
        a = [[0.9, 0.2, 0.0], [0.5, 0.7, 0.1], [0.3, 0.0, 0.8]]
        b = [[0.85, 0.1, 0.2], [0.9, 0.05, 0.3], [0.6, 0.4, 0.75]]
        # q=0.25: rank ceil(0.75*9)=7 -> thresholds 0.7 (a) and 0.6 (b);
        # per-matrix sets a:{(0,0),(1,1),(2,2)}, b:{(0,0),(1,0),(2,0),(2,2)};
        # intersection {(0,0),(2,2)}
        kept = joint_top_quantile_average(_matrix(a), _matrix(b), 0.25)
        assert kept.values == {
            ("r0", "c0"): pytest.approx(0.875),
            ("r2", "c2"): pytest.approx(0.775),
        }

    def test_kept_count_bounded(self):
        rng = np.random.default_rng(5)
        vals = rng.uniform(0, 1, size=(6, 6))
        kept = joint_top_quantile_average(_matrix(vals), _matrix(vals), 0.25)
        assert len(kept.values) <= 0.25 * 36 + 1  # distinct values: slack 1

    def test_permutation_invariance(self):
        rng = np.random.default_rng(17)
        a = rng.uniform(0, 1, size=(4, 5))
        b = rng.uniform(0, 1, size=(4, 5))
        kept = joint_top_quantile_average(_matrix(a), _matrix(b), 0.5)
        perm_r = rng.permutation(4)
        perm_c = rng.permutation(5)
        kept_p = joint_top_quantile_average(
            _matrix(a[np.ix_(perm_r, perm_c)]), _matrix(b[np.ix_(perm_r, perm_c)]), 0.5
        )
        remapped = {
            (f"r{np.where(perm_r == int(r[1:]))[0][0]}", f"c{np.where(perm_c == int(c[1:]))[0][0]}"): v
            for (r, c), v in kept.values.items()
        }
        assert {k: pytest.approx(v) for k, v in kept_p.values.items()} == remapped

    def test_invalid_quantile(self):
        with pytest.raises(DataError, match="quantile"):
            nearest_rank_threshold(np.array([1.0]), 0.0)

    def test_transition_file_roundtrip(self, tmp_path):
        m = _matrix([[0.9, 0.0], [0.0, 0.4]])
        kept = joint_top_quantile_average(m, m, 0.5)
        path = tmp_path / "trans.csv"
        write_transition_with_ids(kept, path)
        loaded = read_transition(path)
        assert loaded.row_ids == kept.row_ids
        assert loaded.col_ids == kept.col_ids
        assert loaded.values.keys() == kept.values.keys()
        for key in kept.values:
            assert loaded.values[key] == pytest.approx(kept.values[key], rel=1e-8)


class TestHashEmbeddings:
    def test_deterministic(self):
        a = hash_embeddings({"x": "abc"}, 16, seed=4).entries["x"]
        b = hash_embeddings({"x": "abc"}, 16, seed=4).entries["x"]
        assert np.array_equal(a, b)

    def test_seed_changes_vector(self):
        a = hash_embeddings({"x": "abc"}, 16, seed=4).entries["x"]
        b = hash_embeddings({"x": "abc"}, 16, seed=5).entries["x"]
        assert not np.array_equal(a, b)

    def test_bitwise_equal_across_processes(self):
        import subprocess
        import sys

        script = (
            "from exposure_lab.semlink import hash_embeddings;"
            "v = hash_embeddings({'x': 'abc'}, 16, seed=4).entries['x'];"
            "print(v.tobytes().hex())"
        )
        runs = {
            subprocess.run(
                [sys.executable, "-c", script], capture_output=True, text=True
            ).stdout.strip()
            for _ in range(2)
        }
        assert len(runs) == 1
        local = hash_embeddings({"x": "abc"}, 16, seed=4).entries["x"]
        assert runs == {local.tobytes().hex()}

    def test_unit_norm(self):
        store = hash_embeddings({"x": "some text", "y": "other"}, 32, seed=0)
        for vec in store.entries.values():
            assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-9)

    def test_empty_text_rejected(self):
        with pytest.raises(DataError, match="empty text"):
            hash_embeddings({"x": ""}, 16, seed=0)

    def test_min_dim(self):
        with pytest.raises(DataError, match="dim"):
            hash_embeddings({"x": "abc"}, 4, seed=0)

    def test_similar_texts_more_similar_than_unrelated(self):
        store = hash_embeddings(
            {
                "a": "medical transport driver",
                "b": "medical driver",
                "c": "quantum firmware author",
            },
            64,
            seed=7,
        )
        sim_ab = float(store.entries["a"] @ store.entries["b"])
        sim_ac = float(store.entries["a"] @ store.entries["c"])
        assert sim_ab > sim_ac
