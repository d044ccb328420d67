from __future__ import annotations

import math
import random
from collections import Counter

import numpy as np
import pytest

from aporokit.encoders import (
    EmbeddingMatrix,
    EncoderError,
    HashedNgramEncoder,
    embed_documents,
    get_encoder,
    load_embedding_cache,
    save_embedding_cache,
)
from aporokit.topics import (
    Topic,
    TopicModel,
    TopicModelError,
    cluster_documents,
    ctfidf_topic_words,
    default_min_cluster_size,
    load_stopwords,
    load_topic_model,
    representative_docs,
    save_topic_model,
    select_all_topics,
    select_topics,
    tokenize,
)


def brute_force_ctfidf(classes: dict[int, list[list[str]]], stopwords=frozenset(), min_df=0.0):
    """Independent oracle: direct evaluation of W(t,c) = tf * log(1 + A/f)."""
    all_docs = [d for docs in classes.values() for d in docs]
    df = Counter()
    for doc in all_docs:
        df.update(set(doc))
    vocab = {t for t, c in df.items() if c >= min_df * len(all_docs) and t not in stopwords}
    tf = {cid: Counter(t for doc in docs for t in doc if t in vocab) for cid, docs in classes.items()}
    f = Counter()
    for counts in tf.values():
        f.update(counts)
    A = sum(f.values()) / len(classes)
    return {
        cid: {t: counts[t] * math.log(1 + A / f[t]) for t in counts} for cid, counts in tf.items()
    }


def random_blob_embedding(seed: int, n_per: int = 50, dim: int = 8, noise: float = 0.1):
    rng = np.random.RandomState(seed)
    c1 = rng.normal(0, 1, dim)
    c1 /= np.linalg.norm(c1)
    raw = rng.normal(0, 1, dim)
    c2 = raw - (raw @ c1) * c1
    c2 /= np.linalg.norm(c2)
    chunks = []
    for center in (c1, c2):
        x = center + rng.normal(0, noise, size=(n_per, dim))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        chunks.append(x)
    vectors = np.vstack(chunks)
    return EmbeddingMatrix(
        doc_ids=[f"d{i}" for i in range(2 * n_per)], vectors=vectors, encoder_id="blob"
    )


class TestEncoders:
    def test_identical_texts_identical_vectors(self):
        enc = HashedNgramEncoder()
        emb = embed_documents(["same text", "same text"], ["a", "b"], enc)
        assert np.allclose(emb.vectors[0], emb.vectors[1])

    def test_cosine_ordering(self):
        enc = HashedNgramEncoder()
        emb = embed_documents(
            ["the cat sat", "a cat was sitting", "tax policy reform"], ["a", "b", "c"], enc
        )
        near = float(emb.vectors[0] @ emb.vectors[1])
        far = float(emb.vectors[0] @ emb.vectors[2])
        assert near > far

    def test_unit_rows(self):
        enc = HashedNgramEncoder()
        emb = embed_documents(["one", "two words here", ""], ["a", "b", "c"], enc)
        assert np.allclose(np.linalg.norm(emb.vectors, axis=1), 1.0, atol=1e-6)

    def test_empty_text_list(self):
        emb = embed_documents([], [], HashedNgramEncoder())
        assert emb.vectors.shape[0] == 0 and emb.doc_ids == []

    def test_encoder_registry(self):
        assert get_encoder("hashed-ngram-v1-d64").dim == 64
        assert get_encoder("sentence-transformers/all-MiniLM-L6-v2").encoder_id.endswith("all-MiniLM-L6-v2")
        with pytest.raises(EncoderError):
            get_encoder("mystery-model")

    def test_cache_roundtrip(self, tmp_path):
        enc = HashedNgramEncoder(dim=32)
        emb = embed_documents(["alpha beta", "gamma"], ["x", "y"], enc)
        path = tmp_path / "cache.bin"
        save_embedding_cache(emb, path)
        loaded = load_embedding_cache(path)
        assert loaded.encoder_id == emb.encoder_id
        assert loaded.doc_ids == ["x", "y"]
        assert np.allclose(loaded.vectors, emb.vectors, atol=1e-6)
        # cache writes are deterministic
        twin = tmp_path / "cache2.bin"
        save_embedding_cache(emb, twin)
        assert path.read_bytes() == twin.read_bytes()

    def test_misaligned_rows_rejected(self):
        with pytest.raises(EncoderError):
            EmbeddingMatrix(doc_ids=["a"], vectors=np.ones((2, 2)) / np.sqrt(2), encoder_id="x")

    def test_non_unit_rows_rejected(self):
        with pytest.raises(EncoderError):
            EmbeddingMatrix(doc_ids=["a"], vectors=np.array([[2.0, 0.0]]), encoder_id="x")


class TestClustering:
    def test_two_blobs(self):
        emb = random_blob_embedding(seed=3)
        topics, outliers = cluster_documents(emb, min_cluster_size=10)
        assert len(topics) == 2
        assert len(outliers) <= 5

    def test_partition(self):
        emb = random_blob_embedding(seed=4)
        topics, outliers = cluster_documents(emb, min_cluster_size=10)
        seen = list(outliers)
        for topic in topics:
            seen.extend(topic.member_ids)
        assert sorted(seen) == sorted(emb.doc_ids)

    def test_identical_vectors_single_cluster(self):
        vectors = np.zeros((7, 4))
        vectors[:, 0] = 1.0
        emb = EmbeddingMatrix(doc_ids=[f"e{i}" for i in range(7)], vectors=vectors, encoder_id="x")
        topics, outliers = cluster_documents(emb, min_cluster_size=3)
        assert len(topics) == 1 and len(topics[0].member_ids) == 7 and outliers == []

    def test_too_few_docs_all_outliers(self, caplog):
        vectors = np.eye(3)
        emb = EmbeddingMatrix(doc_ids=["a", "b", "c"], vectors=vectors, encoder_id="x")
        with caplog.at_level("WARNING"):
            topics, outliers = cluster_documents(emb, min_cluster_size=10)
        assert topics == [] and sorted(outliers) == ["a", "b", "c"]
        assert any("outlier" in r.message for r in caplog.records)

    def test_min_cluster_size_floor(self):
        with pytest.raises(TopicModelError):
            cluster_documents(random_blob_embedding(seed=1), min_cluster_size=1)

    def test_default_min_cluster_size_scaling(self):
        assert default_min_cluster_size(600_000) == 500
        assert default_min_cluster_size(100) == 5


class TestCtfidf:
    def test_toy_two_classes(self):
        classes = {0: [["crime", "crime", "police"]], 1: [["shelter", "shelter", "food"]]}
        words = ctfidf_topic_words(classes, k=5)
        assert words[0][0][0] == "crime"
        assert words[1][0][0] == "shelter"
        # A = 3 tokens per class, crime f=2: W = 2 * ln(1 + 3/2)
        assert words[0][0][1] == pytest.approx(2 * math.log(2.5), abs=1e-12)

    def test_equal_tf_equal_weight(self):
        classes = {0: [["common", "common", "extra0"]], 1: [["common", "common", "extra1"]]}
        words = {cid: dict(ws) for cid, ws in ctfidf_topic_words(classes, k=5).items()}
        assert words[0]["common"] == pytest.approx(words[1]["common"], abs=1e-12)

    def test_single_class_equals_formula(self):
        classes = {0: [["aa", "aa", "bb", "cc", "cc", "cc"]]}
        expected = brute_force_ctfidf(classes)
        got = dict(ctfidf_topic_words(classes, k=10)[0])
        for term, weight in expected[0].items():
            assert got[term] == pytest.approx(weight, abs=1e-9)

    def test_oracle_equivalence_random_corpora(self):
        rng = random.Random(99)
        vocab = [f"w{i}" for i in range(30)]
        for trial in range(60):
            n_classes = rng.randint(1, 5)
            classes = {
                cid: [
                    [rng.choice(vocab) for _ in range(rng.randint(1, 12))]
                    for _ in range(rng.randint(1, 10))
                ]
                for cid in range(n_classes)
            }
            if sum(len(d) for d in classes.values()) > 50:
                continue
            min_df = rng.choice([0.0, 0.05, 0.1])
            expected = brute_force_ctfidf(classes, min_df=min_df)
            got = ctfidf_topic_words(classes, k=10_000, min_df=min_df)
            for cid in classes:
                assert dict(got[cid]) == pytest.approx(expected[cid], abs=1e-9)

    def test_stopwords_and_min_df_removed(self):
        stop = frozenset({"the"})
        classes = {
            0: [["the", "rare", "common"], ["common"]],
            1: [["common", "common"]],
        }
        words = ctfidf_topic_words(classes, k=10, min_df=0.5, stopwords=stop)
        terms0 = {t for t, _ in words[0]}
        assert "the" not in terms0
        assert "rare" not in terms0  # df 1/3 < 0.5
        assert "common" in terms0

    def test_empty_class_warns(self, caplog):
        with caplog.at_level("WARNING"):
            words = ctfidf_topic_words({0: [["word", "word"]], 1: []}, k=3)
        assert words[1] == []

    def test_min_df_bounds(self):
        with pytest.raises(TopicModelError):
            ctfidf_topic_words({0: [["a", "a"]]}, min_df=1.0)

    def test_tokenize_contract(self):
        assert tokenize("Low-income, Family! x 42s") == ["low", "income", "family", "42s"]

    def test_stopword_list_loads(self):
        stop = load_stopwords()
        assert "the" in stop and "shelter" not in stop


class TestRepresentatives:
    def test_singleton_topic(self):
        vectors = np.eye(3)
        emb = EmbeddingMatrix(doc_ids=["a", "b", "c"], vectors=vectors, encoder_id="x")
        topic = Topic(topic_id=0, member_ids=["b"])
        assert representative_docs(topic, emb) == ["b"]

    def test_centroid_point_ranks_first(self):
        center = np.array([1.0, 0.0, 0.0])
        offsets = [np.array([0.0, 0.6, 0.0]), np.array([0.0, 0.0, 0.7])]
        vectors = [center, center + offsets[0], center + offsets[1]]
        vectors = np.array([v / np.linalg.norm(v) for v in vectors])
        # make doc 0 exactly the centroid direction
        emb = EmbeddingMatrix(doc_ids=["mid", "off1", "off2"], vectors=vectors, encoder_id="x")
        topic = Topic(topic_id=0, member_ids=["mid", "off1", "off2"])
        assert representative_docs(topic, emb, m=1) == ["mid"]

    def test_matches_brute_force_ranking(self):
        rng = np.random.RandomState(7)
        vectors = rng.normal(size=(20, 6))
        vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
        ids = [f"d{i}" for i in range(20)]
        emb = EmbeddingMatrix(doc_ids=ids, vectors=vectors, encoder_id="x")
        members = ids[3:15]
        topic = Topic(topic_id=0, member_ids=members)
        got = representative_docs(topic, emb, m=4)

        centroid = vectors[3:15].mean(axis=0)
        centroid /= np.linalg.norm(centroid)
        sims = {doc: float(vectors[ids.index(doc)] @ centroid) for doc in members}
        expected = sorted(members, key=lambda d: (-sims[d], d))[:4]
        assert got == expected

    def test_permutation_invariant(self):
        emb = random_blob_embedding(seed=12, n_per=10)
        members = list(emb.doc_ids[:10])
        a = representative_docs(Topic(0, members), emb)
        b = representative_docs(Topic(0, list(reversed(members))), emb)
        assert a == b

    def test_fewer_members_than_m(self):
        vectors = np.eye(2)
        emb = EmbeddingMatrix(doc_ids=["a", "b"], vectors=vectors, encoder_id="x")
        assert sorted(representative_docs(Topic(0, ["a", "b"]), emb, m=3)) == ["a", "b"]


def _model_with_ids(topic_ids: list[int]) -> TopicModel:
    topics = [Topic(topic_id=t, member_ids=[f"doc{t}"]) for t in topic_ids]
    return TopicModel(encoder_id="x", params={}, topics=topics, outlier_ids=[])


class TestSelection:
    PAPER_TOPIC_IDS = [5, 6, 10, 14, 38, 49, 56, 67, 88, 91, 96, 100, 106, 118, 139]

    def test_reference_selection_file(self, tmp_path):
        model = _model_with_ids(self.PAPER_TOPIC_IDS + [1, 2, 3])
        path = tmp_path / "sel.txt"
        path.write_text("\n".join(str(t) for t in self.PAPER_TOPIC_IDS) + "\n")
        selection = select_topics(model, path)
        assert selection.selected_topic_ids == self.PAPER_TOPIC_IDS

    def test_empty_file_warns(self, tmp_path, caplog):
        model = _model_with_ids([1])
        path = tmp_path / "sel.txt"
        path.write_text("# nothing chosen yet\n")
        with caplog.at_level("WARNING"):
            selection = select_topics(model, path)
        assert selection.selected_topic_ids == []

    def test_unknown_id_rejected(self, tmp_path):
        model = _model_with_ids([1, 2])
        path = tmp_path / "sel.txt"
        path.write_text("9999\n")
        with pytest.raises(TopicModelError):
            select_topics(model, path)

    def test_rationale_parsed(self, tmp_path):
        model = _model_with_ids([4])
        path = tmp_path / "sel.txt"
        path.write_text("4\tclearly about the target group\n")
        selection = select_topics(model, path)
        assert selection.rationale[4].startswith("clearly")

    def test_select_all(self):
        model = _model_with_ids([3, 7])
        assert select_all_topics(model).selected_topic_ids == [3, 7]


def test_topic_model_roundtrip(tmp_path):
    emb = random_blob_embedding(seed=5, n_per=30)
    topics, outliers = cluster_documents(emb, min_cluster_size=8)
    model = TopicModel(encoder_id=emb.encoder_id, params={"k": 10}, topics=topics, outlier_ids=outliers)
    for topic in model.topics:
        topic.topic_words = [("word", 1.5)]
        topic.representative_ids = representative_docs(topic, emb)
    path = tmp_path / "model.json"
    save_topic_model(model, path)
    loaded = load_topic_model(path)
    assert loaded.topic_ids == model.topic_ids
    assert loaded.topics[0].topic_words == model.topics[0].topic_words
    assert loaded.outlier_ids == model.outlier_ids
