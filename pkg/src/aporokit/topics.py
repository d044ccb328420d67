"""Topic discovery: density clustering in embedding space, class-based TF-IDF
topic words, representative documents, and manual topic selection.

Topic words are scored as W(t, c) = tf(t, c) * log(1 + A / f(t)) where
tf(t, c) is the term's frequency inside class c, f(t) its total frequency
across classes, and A the average token count per class. The filtered
vocabulary (stopwords and low-document-frequency terms dropped) feeds all
three quantities.
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .encoders import EmbeddingMatrix

logger = logging.getLogger(__name__)

OUTLIER_TOPIC_ID = -1


class TopicModelError(Exception):
    pass


@dataclass
class Topic:
    topic_id: int
    member_ids: list[str]
    topic_words: list[tuple[str, float]] = field(default_factory=list)
    representative_ids: list[str] = field(default_factory=list)


@dataclass
class TopicModel:
    encoder_id: str
    params: dict
    topics: list[Topic]
    outlier_ids: list[str]

    def topic(self, topic_id: int) -> Topic:
        for t in self.topics:
            if t.topic_id == topic_id:
                return t
        raise KeyError(topic_id)

    @property
    def topic_ids(self) -> list[int]:
        return [t.topic_id for t in self.topics]


@dataclass
class TopicSelection:
    selected_topic_ids: list[int]
    rationale: dict[int, str] = field(default_factory=dict)


@dataclass
class ClusterConfig:
    min_cluster_size: int | None = None  # None -> max(5, round(n/1200))
    reduce: str = "pca"  # "pca" | "none"
    n_components: int = 5
    random_state: int = 0


def default_min_cluster_size(n_docs: int) -> int:
    """Scales so a 600K-document corpus gets the reference value of 500."""
    return max(5, round(n_docs / 1200))


def cluster_documents(
    emb: EmbeddingMatrix, min_cluster_size: int | None = None, config: ClusterConfig | None = None
) -> tuple[list[Topic], list[str]]:
    """Density-based clustering after optional dimensionality reduction.

    Every document lands in exactly one cluster or in the outlier set; the
    number of clusters is data-driven. Fewer documents than min_cluster_size
    yields a single outlier set with a warning.
    """
    config = config or ClusterConfig()
    n = len(emb.doc_ids)
    if min_cluster_size is None:
        min_cluster_size = config.min_cluster_size or default_min_cluster_size(n)
    if min_cluster_size < 2:
        raise TopicModelError("min_cluster_size must be >= 2")
    if n == 0:
        return [], []
    if n < min_cluster_size:
        logger.warning("only %d docs with min_cluster_size=%d: all marked outliers", n, min_cluster_size)
        return [], list(emb.doc_ids)

    vectors = emb.vectors
    spread = float(np.ptp(vectors, axis=0).max()) if n > 1 else 0.0
    if spread < 1e-12:
        # degenerate density: identical vectors form a single cluster
        return [Topic(topic_id=0, member_ids=list(emb.doc_ids))], []

    if config.reduce == "pca" and vectors.shape[1] > config.n_components:
        from sklearn.decomposition import PCA

        n_comp = min(config.n_components, n - 1)
        vectors = PCA(n_components=n_comp, random_state=config.random_state).fit_transform(vectors)
    elif config.reduce not in ("pca", "none"):
        raise TopicModelError(f"unknown reduction {config.reduce!r}")

    from sklearn.cluster import HDBSCAN

    labels = HDBSCAN(min_cluster_size=min_cluster_size).fit_predict(vectors)

    topics: dict[int, Topic] = {}
    outliers: list[str] = []
    for doc_id, label in zip(emb.doc_ids, labels):
        if label == -1:
            outliers.append(doc_id)
        else:
            topics.setdefault(int(label), Topic(topic_id=int(label), member_ids=[])).member_ids.append(doc_id)
    ordered = [topics[k] for k in sorted(topics)]
    return ordered, outliers


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop single-character tokens."""
    return [t for t in _TOKEN_RE.findall(text.casefold()) if len(t) > 1]


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    if path is None:
        text = resources.files("aporokit").joinpath("data/stopwords_en.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))


def ctfidf_topic_words(
    classes: dict[int, list[list[str]]],
    k: int = 10,
    min_df: float = 0.0,
    stopwords: frozenset[str] = frozenset(),
) -> dict[int, list[tuple[str, float]]]:
    """Top-k class-based TF-IDF terms per class.

    `classes` maps class id to its member documents, each already tokenized.
    Terms that are stopwords or appear in fewer than min_df of all documents
    are removed before any frequency is computed.
    """
    if not (0 <= min_df < 1):
        raise TopicModelError("min_df must be in [0, 1)")
    all_docs = [doc for docs in classes.values() for doc in docs]
    n_docs = len(all_docs)
    doc_freq: Counter[str] = Counter()
    for doc in all_docs:
        doc_freq.update(set(doc))
    min_count = min_df * n_docs
    vocab = {t for t, df in doc_freq.items() if df >= min_count and t not in stopwords}

    tf: dict[int, Counter[str]] = {}
    for cid, docs in classes.items():
        counts: Counter[str] = Counter()
        for doc in docs:
            counts.update(t for t in doc if t in vocab)
        tf[cid] = counts

    total_freq: Counter[str] = Counter()
    for counts in tf.values():
        total_freq.update(counts)
    n_classes = len(classes)
    avg_per_class = sum(total_freq.values()) / n_classes if n_classes else 0.0

    result: dict[int, list[tuple[str, float]]] = {}
    for cid, counts in tf.items():
        if not counts:
            logger.warning("class %s has no in-vocabulary terms", cid)
            result[cid] = []
            continue
        scored = [
            (term, count * math.log(1.0 + avg_per_class / total_freq[term]))
            for term, count in counts.items()
        ]
        scored.sort(key=lambda kv: (-kv[1], kv[0]))
        result[cid] = scored[:k]
    return result


def representative_docs(topic: Topic, emb: EmbeddingMatrix, m: int = 3) -> list[str]:
    """The m member documents closest (cosine) to the topic centroid."""
    if not topic.member_ids:
        raise TopicModelError(f"topic {topic.topic_id} has no members")
    index = {doc_id: i for i, doc_id in enumerate(emb.doc_ids)}
    rows = [index[doc_id] for doc_id in topic.member_ids]
    vectors = emb.vectors[rows]
    centroid = vectors.mean(axis=0)
    norm = np.linalg.norm(centroid)
    if norm > 0:
        centroid = centroid / norm
    sims = vectors @ centroid
    order = sorted(range(len(rows)), key=lambda i: (-sims[i], topic.member_ids[i]))
    return [topic.member_ids[i] for i in order[:m]]


def build_topic_model(
    emb: EmbeddingMatrix,
    texts_by_id: dict[str, str],
    min_cluster_size: int | None = None,
    k: int = 10,
    min_df: float = 0.05,
    stopwords: frozenset[str] | None = None,
    config: ClusterConfig | None = None,
) -> TopicModel:
    """Cluster, then attach topic words and representatives to each topic."""
    config = config or ClusterConfig()
    if stopwords is None:
        stopwords = load_stopwords()
    topics, outliers = cluster_documents(emb, min_cluster_size, config)
    classes = {t.topic_id: [tokenize(texts_by_id[d]) for d in t.member_ids] for t in topics}
    words = ctfidf_topic_words(classes, k=k, min_df=min_df, stopwords=stopwords) if classes else {}
    for topic in topics:
        topic.topic_words = words.get(topic.topic_id, [])
        topic.representative_ids = representative_docs(topic, emb, m=3)
    params = {
        "min_cluster_size": min_cluster_size or config.min_cluster_size or default_min_cluster_size(len(emb.doc_ids)),
        "k": k,
        "min_df": min_df,
        "reduce": config.reduce,
        "n_components": config.n_components,
    }
    return TopicModel(encoder_id=emb.encoder_id, params=params, topics=topics, outlier_ids=outliers)


def save_topic_model(model: TopicModel, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "encoder_id": model.encoder_id,
        "params": model.params,
        "topics": [
            {
                "topic_id": t.topic_id,
                "member_ids": t.member_ids,
                "topic_words": [[term, w] for term, w in t.topic_words],
                "representative_ids": t.representative_ids,
            }
            for t in model.topics
        ],
        "outlier_ids": model.outlier_ids,
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_topic_model(path: str | Path) -> TopicModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    topics = [
        Topic(
            topic_id=t["topic_id"],
            member_ids=list(t["member_ids"]),
            topic_words=[(term, float(w)) for term, w in t["topic_words"]],
            representative_ids=list(t["representative_ids"]),
        )
        for t in payload["topics"]
    ]
    return TopicModel(
        encoder_id=payload["encoder_id"],
        params=payload["params"],
        topics=topics,
        outlier_ids=list(payload["outlier_ids"]),
    )


def select_topics(model: TopicModel, selection_file: str | Path) -> TopicSelection:
    """Validate a hand-written selection file: `topic_id[<TAB>rationale]` lines."""
    known = set(model.topic_ids)
    selected: list[int] = []
    rationale: dict[int, str] = {}
    for line_no, line in enumerate(Path(selection_file).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t", 1)
        try:
            topic_id = int(parts[0].strip())
        except ValueError as exc:
            raise TopicModelError(f"selection line {line_no}: bad topic id {parts[0]!r}") from exc
        if topic_id not in known:
            raise TopicModelError(f"selection line {line_no}: unknown topic id {topic_id}")
        if topic_id not in selected:
            selected.append(topic_id)
        if len(parts) == 2 and parts[1].strip():
            rationale[topic_id] = parts[1].strip()
    if not selected:
        logger.warning("selection file %s lists no topics", selection_file)
    return TopicSelection(selected_topic_ids=selected, rationale=rationale)


def select_all_topics(model: TopicModel) -> TopicSelection:
    """Automation escape hatch for synthetic fixtures: select every topic."""
    return TopicSelection(
        selected_topic_ids=list(model.topic_ids),
        rationale={tid: "selected automatically (select_all)" for tid in model.topic_ids},
    )
