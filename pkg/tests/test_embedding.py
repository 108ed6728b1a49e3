"""Tests for providers, truncation, caching, and cosine similarity."""

import math
import random

import numpy as np
import pytest

from dbrouter.embedding import (
    TOKEN_INFLATION,
    CountingTransport,
    EmbeddingCache,
    EmbeddingError,
    EmbeddingVector,
    ProviderConfig,
    cosine,
    embed_batch,
    provider_identity,
    proxy_token_count,
    text_digest,
    truncate,
)

TEST_CFG = ProviderConfig(kind="deterministic-test", dim=24)


def remote_cfg(**kw) -> ProviderConfig:
    defaults = dict(
        kind="remote", endpoint="http://embed.test/v1/embed", model="stub",
        backoff=0.0, retries=2, batch_size=4,
    )
    defaults.update(kw)
    return ProviderConfig(**defaults)


class TestCosine:
    def test_identity(self):
        a = EmbeddingVector(np.array([1.0, 0.0]), normalized=True)
        assert cosine(a, a) == 1.0

    def test_orthogonal(self):
        a = EmbeddingVector(np.array([1.0, 0.0]), normalized=True)
        b = EmbeddingVector(np.array([0.0, 1.0]), normalized=True)
        assert cosine(a, b) == 0.0

    def test_direct_arithmetic(self):
        a = EmbeddingVector(np.array([3.0, 4.0]))
        b = EmbeddingVector(np.array([4.0, 3.0]))
        assert cosine(a, b) == pytest.approx(24 / 25)

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            a = EmbeddingVector(rng.normal(size=8))
            b = EmbeddingVector(rng.normal(size=8))
            assert cosine(a, b) == pytest.approx(cosine(b, a))
            assert -1.0 <= cosine(a, b) <= 1.0
            na = EmbeddingVector(a.values / np.linalg.norm(a.values), normalized=True)
            assert cosine(na, na) == pytest.approx(1.0)

    def test_dim_mismatch(self):
        with pytest.raises(EmbeddingError, match="mismatch"):
            cosine(EmbeddingVector(np.ones(3)), EmbeddingVector(np.ones(4)))

    def test_zero_vector(self):
        with pytest.raises(EmbeddingError, match="zero"):
            cosine(EmbeddingVector(np.zeros(3)), EmbeddingVector(np.ones(3)))


class TestVectorType:
    def test_normalized_flag_checked(self):
        with pytest.raises(EmbeddingError, match="norm"):
            EmbeddingVector(np.array([3.0, 4.0]), normalized=True)

    def test_dim(self):
        assert EmbeddingVector(np.zeros(5)).dim == 5

    def test_empty_rejected(self):
        with pytest.raises(EmbeddingError):
            EmbeddingVector(np.zeros(0))


class TestConfig:
    def test_budget_floor(self):
        with pytest.raises(EmbeddingError, match="token_budget"):
            ProviderConfig(kind="deterministic-test", token_budget=0)

    def test_remote_needs_endpoint(self):
        with pytest.raises(EmbeddingError, match="endpoint"):
            ProviderConfig(kind="remote")

    def test_unknown_kind(self):
        with pytest.raises(EmbeddingError, match="kind"):
            ProviderConfig(kind="local")

    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("DBROUTER_EMBED_URL", "http://host:9/v1/embed")
        cfg = ProviderConfig.from_env(model="m")
        assert cfg.kind == "remote"
        assert cfg.endpoint == "http://host:9/v1/embed"
        monkeypatch.delenv("DBROUTER_EMBED_URL")
        assert ProviderConfig.from_env().kind == "deterministic-test"

    def test_identity_separates_providers(self):
        a = provider_identity(TEST_CFG)
        b = provider_identity(ProviderConfig(kind="deterministic-test", dim=32))
        c = provider_identity(remote_cfg(model="other"))
        assert len({a, b, c}) == 3


class TestTruncate:
    def test_under_budget_unchanged(self):
        text = "short text with ten words in it right about now"
        assert truncate(text, 512) == text

    def test_long_text_boundary_aligned(self):
        words = [f"w{i}" for i in range(1000)]
        text = " ".join(words)
        cut = truncate(text, 512)
        kept = cut.split()
        assert len(kept) == math.floor(512 / TOKEN_INFLATION)
        assert proxy_token_count(cut) <= 512
        assert kept == words[: len(kept)]
        assert not cut.endswith(" ")

    def test_budget_one_keeps_first_token(self):
        assert truncate("alpha beta gamma", 1) == "alpha"

    def test_never_splits_quoted_identifier(self):
        # Budget chosen so the naive cut would land between 'home and town'.
        head = " ".join(f"w{i}" for i in range(5))
        text = head + " 'home town' TEXT"
        for budget in range(1, 14):
            cut = truncate(text, budget)
            assert cut.count("'") % 2 == 0, f"budget {budget} split a quoted name: {cut!r}"

    def test_whitespace_preserved(self):
        text = "a  b\nc\td e"
        cut = truncate(text, 4)  # floor(4/1.3) = 3 words
        assert cut == "a  b\nc"

    def test_proxy_margin_against_trained_subword_tokenizer(self):
        # An independently trained WordPiece tokenizer stands in for the
        # real subword vocabulary; the whitespace proxy with its 1.3 factor
        # must stay an upper bound on true token counts for schema-like text.
        tokenizers = pytest.importorskip("tokenizers")
        from tokenizers import Tokenizer
        from tokenizers.models import WordPiece
        from tokenizers.pre_tokenizers import Whitespace
        from tokenizers.trainers import WordPieceTrainer

        corpus = []
        for i in range(400):
            corpus.append(
                f"CREATE TABLE table_{i} ( 'column id {i}' INTEGER PRIMARY KEY, "
                f"name TEXT, amount REAL, recorded DATE, note_{i} TEXT, );"
            )
            corpus.append(f"How many rows does source {i} keep for year {1990 + i % 30}?")
        tok = Tokenizer(WordPiece(unk_token="[UNK]"))
        tok.pre_tokenizer = Whitespace()
        tok.train_from_iterator(corpus, WordPieceTrainer(
            vocab_size=3000, special_tokens=["[UNK]"], show_progress=False,
        ))

        rng = random.Random(11)
        samples = [rng.choice(corpus) + " " + rng.choice(corpus) for _ in range(50)]
        budget = 40
        for text in samples:
            cut = truncate(text, budget)
            real = len(tok.encode(cut).tokens)
            assert real <= budget, f"real count {real} exceeded budget {budget}: {cut!r}"


class TestDeterministicProvider:
    def test_same_text_same_vector(self):
        a = embed_batch(["hello world"], TEST_CFG)[0]
        b = embed_batch(["hello world"], TEST_CFG)[0]
        assert np.array_equal(a.values, b.values)
        assert a.normalized and a.dim == 24

    def test_different_texts_differ(self):
        vecs = embed_batch(["alpha", "beta"], TEST_CFG)
        assert not np.array_equal(vecs[0].values, vecs[1].values)

    def test_order_preserved(self):
        texts = ["one", "two", "three", "two"]
        vecs = embed_batch(texts, TEST_CFG)
        assert np.array_equal(vecs[1].values, vecs[3].values)
        again = embed_batch(list(reversed(texts)), TEST_CFG)
        assert np.array_equal(again[0].values, vecs[3].values)

    def test_unit_norm(self):
        for v in embed_batch(["a", "bb", "ccc"], TEST_CFG):
            assert np.linalg.norm(v.values) == pytest.approx(1.0, abs=1e-9)

    def test_model_changes_vectors(self):
        other = ProviderConfig(kind="deterministic-test", model="other", dim=24)
        a = embed_batch(["same text"], TEST_CFG)[0]
        b = embed_batch(["same text"], other)[0]
        assert not np.array_equal(a.values, b.values)

    def test_empty_batch_rejected(self):
        with pytest.raises(EmbeddingError, match="non-empty"):
            embed_batch([], TEST_CFG)


class TestRemoteProvider:
    def test_batch_of_three(self):
        transport = CountingTransport(dim=8)
        vecs = embed_batch(["a", "b", "c"], remote_cfg(), transport=transport)
        assert len(vecs) == 3
        assert all(v.dim == 8 for v in vecs)

    def test_cache_hit_means_zero_calls(self, tmp_path):
        cache = EmbeddingCache(tmp_path / "cache.sqlite")
        transport = CountingTransport(dim=8)
        cfg = remote_cfg()
        texts = ["first text", "second text", "third text"]
        embed_batch(texts, cfg, cache=cache, transport=transport)
        calls_after_first = transport.calls
        assert calls_after_first >= 1
        vecs = embed_batch(texts, cfg, cache=cache, transport=transport)
        assert transport.calls == calls_after_first
        assert all(v.normalized for v in vecs)

    def test_cache_persists_across_instances(self, tmp_path):
        path = tmp_path / "cache.sqlite"
        cfg = remote_cfg()
        t1 = CountingTransport(dim=8)
        first = embed_batch(["persist me"], cfg, cache=EmbeddingCache(path), transport=t1)
        t2 = CountingTransport(dim=8)
        second = embed_batch(["persist me"], cfg, cache=EmbeddingCache(path), transport=t2)
        assert t2.calls == 0
        assert np.array_equal(first[0].values, second[0].values)

    def test_retry_then_success(self):
        transport = CountingTransport(dim=8, fail_times=2)
        vecs = embed_batch(["x"], remote_cfg(retries=3), transport=transport)
        assert len(vecs) == 1
        assert transport.calls == 3

    def test_retries_exhausted(self):
        transport = CountingTransport(dim=8, fail_times=10)
        with pytest.raises(EmbeddingError, match="failed after retries"):
            embed_batch(["x"], remote_cfg(retries=1), transport=transport)

    def test_wrong_vector_count_rejected(self):
        def bad_transport(endpoint, payload, timeout):
            return 200, {"dim": 4, "vectors": [[1.0, 0.0, 0.0, 0.0]] * (len(payload["texts"]) + 1)}

        with pytest.raises(EmbeddingError, match="vectors for"):
            embed_batch(["a", "b"], remote_cfg(), transport=bad_transport)

    def test_inconsistent_dims_rejected(self):
        def bad_transport(endpoint, payload, timeout):
            vectors = [[1.0, 0.0], [1.0, 0.0, 0.0]][: len(payload["texts"])]
            return 200, {"dim": 2, "vectors": vectors}

        with pytest.raises(EmbeddingError, match="dimension"):
            embed_batch(["a", "b"], remote_cfg(), transport=bad_transport)

    def test_client_error_not_retried(self):
        calls = []

        def bad_transport(endpoint, payload, timeout):
            calls.append(1)
            return 400, {"error": "bad model"}

        with pytest.raises(EmbeddingError, match="bad model"):
            embed_batch(["a"], remote_cfg(retries=5), transport=bad_transport)
        assert len(calls) == 1

    def test_batching_respects_batch_size(self):
        transport = CountingTransport(dim=8)
        texts = [f"text {i}" for i in range(10)]
        embed_batch(texts, remote_cfg(batch_size=4), transport=transport)
        assert transport.calls == 3  # 4 + 4 + 2

    def test_truncation_applied_before_dispatch(self):
        transport = CountingTransport(dim=8)
        long_text = " ".join(f"w{i}" for i in range(100))
        embed_batch([long_text], remote_cfg(token_budget=13), transport=transport)
        assert transport.texts_seen == [truncate(long_text, 13)]


class TestCache:
    def test_round_trip(self, tmp_path):
        cache = EmbeddingCache(tmp_path / "c.sqlite")
        vec = np.array([0.5, 0.25, 0.125])
        digest = text_digest("abc")
        cache.put_many("prov", {digest: vec})
        got = cache.get_many("prov", [digest])
        assert np.array_equal(got[digest], vec)

    def test_provider_isolation(self, tmp_path):
        cache = EmbeddingCache(tmp_path / "c.sqlite")
        digest = text_digest("abc")
        cache.put_many("prov-a", {digest: np.ones(2)})
        assert cache.get_many("prov-b", [digest]) == {}

    def test_concurrent_readers(self, tmp_path):
        import threading

        cache = EmbeddingCache(tmp_path / "c.sqlite")
        digest = text_digest("abc")
        cache.put_many("prov", {digest: np.ones(4)})
        results = []

        def read():
            results.append(cache.get_many("prov", [digest])[digest])

        threads = [threading.Thread(target=read) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(results) == 8
        assert all(np.array_equal(r, np.ones(4)) for r in results)
