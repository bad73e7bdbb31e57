import json
import math

import numpy as np
import pytest

from elsirec.embeddings import (
    EmbeddingMatrix,
    TokenEmbeddingBatch,
    partition_by_topic,
    pool_and_activate,
    read_embeddings,
    write_embeddings,
)
from elsirec.errors import ConfigError, FormatError


def random_matrix(n=5, d=8, seed=0, activated=False, scale=1.0):
    rng = np.random.default_rng(seed)
    values = scale * rng.standard_normal((n, d))
    if activated:
        values = np.tanh(values)
    return EmbeddingMatrix(
        ids=[f"id{i}" for i in range(n)], values=values,
        encoder_name="test-enc", activated=activated,
    )


class TestPoolAndActivate:
    def test_all_zero_tokens_give_zero_vector(self):
        batch = TokenEmbeddingBatch(
            ids=["a"], values=np.zeros((1, 3, 4)), attention_mask=np.ones((1, 3), bool)
        )
        out = pool_and_activate(batch, "mean")
        assert np.array_equal(out.values, np.zeros((1, 4)))
        assert out.activated

    def test_mean_pooling_scalar_tanh_oracle(self):
        values = np.zeros((1, 2, 2))
        values[0, 0] = [1, 3]
        values[0, 1] = [3, 1]
        batch = TokenEmbeddingBatch(
            ids=["a"], values=values, attention_mask=np.ones((1, 2), bool)
        )
        out = pool_and_activate(batch, "mean")
        assert out.values[0] == pytest.approx([math.tanh(2), math.tanh(2)], abs=1e-4)
        assert out.values[0] == pytest.approx([0.9640, 0.9640], abs=1e-4)

    def test_first_token_scalar_tanh_oracle(self):
        values = np.zeros((1, 3, 2))
        values[0, 0] = [0.5, -0.5]
        values[0, 1] = [9, 9]
        batch = TokenEmbeddingBatch(
            ids=["a"], values=values, attention_mask=np.ones((1, 3), bool)
        )
        out = pool_and_activate(batch, "first_token")
        assert out.values[0] == pytest.approx([0.4621, -0.4621], abs=1e-4)

    def test_mean_ignores_unmasked_positions(self):
        values = np.zeros((1, 3, 2))
        values[0, 0] = [1, 1]
        values[0, 2] = [100, 100]  # masked out
        mask = np.array([[True, True, False]])
        batch = TokenEmbeddingBatch(ids=["a"], values=values, attention_mask=mask)
        out = pool_and_activate(batch, "mean")
        assert out.values[0] == pytest.approx(np.tanh([0.5, 0.5]))

    def test_mean_permutation_invariant_over_masked(self):
        rng = np.random.default_rng(5)
        values = rng.standard_normal((1, 6, 4))
        mask = np.ones((1, 6), bool)
        batch = TokenEmbeddingBatch(ids=["a"], values=values, attention_mask=mask)
        perm = rng.permutation(6)
        shuffled = TokenEmbeddingBatch(
            ids=["a"], values=values[:, perm], attention_mask=mask
        )
        assert np.allclose(
            pool_and_activate(batch, "mean").values,
            pool_and_activate(shuffled, "mean").values,
        )

    def test_activated_values_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(1)
        batch = TokenEmbeddingBatch(
            ids=["a", "b"],
            values=5 * rng.standard_normal((2, 4, 8)),
            attention_mask=np.ones((2, 4), bool),
        )
        out = pool_and_activate(batch, "mean")
        assert np.all(np.abs(out.values) < 1)

    def test_zero_mask_doc_rejected(self):
        batch = TokenEmbeddingBatch(
            ids=["a"], values=np.zeros((1, 2, 2)),
            attention_mask=np.ones((1, 2), bool),
        )
        batch.attention_mask[:] = False
        with pytest.raises(ConfigError, match="zero masked"):
            pool_and_activate(batch, "mean")

    def test_unknown_strategy(self):
        batch = TokenEmbeddingBatch(
            ids=["a"], values=np.zeros((1, 2, 2)),
            attention_mask=np.ones((1, 2), bool),
        )
        with pytest.raises(ConfigError, match="strategy"):
            pool_and_activate(batch, "median")


class TestInterchangeFormat:
    def test_roundtrip_small(self, tmp_path):
        m = random_matrix(3, 4, seed=2)
        path = tmp_path / "m.emb"
        write_embeddings(m, path)
        back = read_embeddings(path)
        assert back.ids == m.ids
        assert back.encoder_name == "test-enc"
        assert back.activated == m.activated
        # value-exact at 32-bit precision
        assert np.array_equal(
            back.values.astype(np.float32), m.values.astype(np.float32)
        )

    def test_roundtrip_paper_batch_shape(self, tmp_path):
        m = random_matrix(10, 768, seed=3, activated=True)
        path = tmp_path / "batch.emb"
        write_embeddings(m, path)
        back = read_embeddings(path)
        assert (back.n, back.dim) == (10, 768)
        assert np.array_equal(
            back.values.astype(np.float32), m.values.astype(np.float32)
        )

    def test_nan_rejected_with_row(self, tmp_path):
        m = random_matrix(3, 4, seed=4)
        path = tmp_path / "m.emb"
        write_embeddings(m, path)
        data = bytearray(path.read_bytes())
        # corrupt the last row's first float with a NaN
        offset = len(data) - 4 * 4
        data[offset : offset + 4] = np.float32("nan").tobytes()
        path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="record 2"):
            read_embeddings(path)

    def test_truncated_file_rejected(self, tmp_path):
        m = random_matrix(3, 4, seed=5)
        path = tmp_path / "m.emb"
        write_embeddings(m, path)
        path.write_bytes(path.read_bytes()[:-6])
        with pytest.raises(FormatError, match="truncated"):
            read_embeddings(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "m.emb"
        path.write_bytes(b"XXXX" + b"\x00" * 20)
        with pytest.raises(FormatError, match="magic"):
            read_embeddings(path)

    def test_duplicate_id_rejected(self, tmp_path):
        m = random_matrix(2, 2, seed=6)
        path = tmp_path / "m.emb"
        write_embeddings(m, path)
        data = path.read_bytes()
        # rewrite id1 -> id0 (same length, same position semantics)
        path.write_bytes(data.replace(b"id1", b"id0"))
        with pytest.raises(FormatError, match="duplicate id"):
            read_embeddings(path)

    def test_jsonl_variant_read(self, tmp_path):
        path = tmp_path / "m.jsonl"
        header = {"format": "emb-jsonl", "version": 1, "dim": 3,
                  "encoder": "dbg", "activated": True}
        lines = [json.dumps(header),
                 json.dumps({"id": "a", "vector": [0.1, 0.2, 0.3]}),
                 json.dumps({"id": "b", "vector": [-0.1, 0.0, 0.5]})]
        path.write_text("\n".join(lines) + "\n")
        m = read_embeddings(path)
        assert m.ids == ["a", "b"]
        assert m.activated and m.encoder_name == "dbg"
        assert m.values[1] == pytest.approx([-0.1, 0.0, 0.5], abs=1e-7)

    def test_jsonl_dimension_mismatch(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text(
            json.dumps({"format": "emb-jsonl", "version": 1, "dim": 3}) + "\n"
            + json.dumps({"id": "a", "vector": [0.1, 0.2]}) + "\n"
        )
        with pytest.raises(FormatError, match="dimension mismatch"):
            read_embeddings(path)


class TestPartitionByTopic:
    def test_even_split(self):
        m = random_matrix(4, 3, seed=7, activated=True)
        labels = {"id0": 0, "id1": 1, "id2": 0, "id3": 1}
        index = partition_by_topic(m, labels, K=2)
        assert [p.n for p in index.partitions] == [2, 2]
        assert index.partitions[0].ids == ["id0", "id2"]

    def test_degenerate_all_one_topic(self):
        m = random_matrix(4, 3, seed=8, activated=True)
        labels = {rid: 0 for rid in m.ids}
        index = partition_by_topic(m, labels, K=5)
        assert index.partitions[0].n == 4
        assert index.empty_topics() == [1, 2, 3, 4]

    def test_sizes_match_label_histogram(self):
        m = random_matrix(30, 4, seed=9, activated=True)
        rng = np.random.default_rng(10)
        labels = {rid: int(rng.integers(0, 3)) for rid in m.ids}
        index = partition_by_topic(m, labels, K=3)
        hist = [sum(1 for v in labels.values() if v == k) for k in range(3)]
        assert [p.n for p in index.partitions] == hist
        assert sum(p.n for p in index.partitions) == m.n
        all_ids = [rid for p in index.partitions for rid in p.ids]
        assert len(set(all_ids)) == len(all_ids)

    def test_unlabeled_id_fatal(self):
        m = random_matrix(2, 3, seed=11, activated=True)
        with pytest.raises(ConfigError, match="no topic label"):
            partition_by_topic(m, {"id0": 0}, K=2)

    def test_out_of_range_label_fatal(self):
        m = random_matrix(2, 3, seed=12, activated=True)
        with pytest.raises(ConfigError, match="out of range"):
            partition_by_topic(m, {"id0": 0, "id1": 5}, K=2)


class TestInvariants:
    def test_nonfinite_matrix_rejected(self):
        with pytest.raises(ConfigError, match="non-finite"):
            EmbeddingMatrix(ids=["a"], values=np.array([[np.inf, 0.0]]))

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            EmbeddingMatrix(ids=["a", "a"], values=np.zeros((2, 2)))
