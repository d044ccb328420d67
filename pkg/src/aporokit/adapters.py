"""Model adapters for the benchmark harness.

Two kinds exist: finetune adapters train on the chronological split and
predict labels; generative adapters answer prompts built from a PromptSpec.
The linear bag-of-words adapter is the desk-scale default and trains in
seconds on CPU with full determinism per seed; the transformers adapter
carries the pretrained-backbone configuration and is gated on torch and
downloaded weights. Remote endpoints are reached through an OpenAI-style
chat-completions client with bounded concurrency and retries.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .annotation.store import LABELS
from .bench import BenchError, DatasetRow, DatasetSplit, PromptSpec, build_prompt, clean_text, parse_label

logger = logging.getLogger(__name__)


class AdapterError(BenchError):
    pass


class AdapterUnavailable(AdapterError):
    """Backend (torch, weights, endpoint) cannot be reached."""


@dataclass
class AdapterConfig:
    adapter_id: str
    kind: str  # "finetune" | "generative"
    backbone: str = ""
    batch_size: int = 4
    epochs: int = 4
    optimizer: str = "adam"
    learning_rate: float = 0.0
    hash_dim: int = 8192
    endpoint: str = ""
    model: str = ""
    credential_env: str = ""
    parallelism: int = 4
    max_retries: int = 3
    mock_mode: str = "keyword"
    mock_garble_rate: float = 0.0
    mock_seed: int = 0

    @classmethod
    def load(cls, path: str | Path) -> "AdapterConfig":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**payload)


# -- linear bag-of-words finetune adapter --------------------------------------


def _hash_token(token: str, dim: int) -> tuple[int, float]:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    value = int.from_bytes(digest, "big")
    return (value >> 1) % dim, 1.0 if value & 1 else -1.0


def featurize(texts: list[str], dim: int) -> np.ndarray:
    out = np.zeros((len(texts), dim), dtype=np.float32)
    for row, text in enumerate(texts):
        words = text.casefold().split()
        grams = words + [f"{a}_{b}" for a, b in zip(words, words[1:])]
        for gram in grams:
            idx, sign = _hash_token(gram, dim)
            out[row, idx] += sign
    norms = np.linalg.norm(out, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return out / norms


class LinearBowAdapter:
    """Multinomial logistic regression over hashed n-grams, trained with
    mini-batch Adam. Deterministic given a seed."""

    kind = "finetune"

    def __init__(self, config: AdapterConfig | None = None):
        self.config = config or AdapterConfig(adapter_id="bow-linear", kind="finetune")
        self.adapter_id = self.config.adapter_id or "bow-linear"
        self._weights: np.ndarray | None = None
        self._bias: np.ndarray | None = None
        self._labels = list(LABELS)

    def train(self, train_rows: list[DatasetRow], seed: int = 42) -> None:
        cfg = self.config
        labels = sorted({row.label for row in train_rows})
        if not set(labels) <= set(LABELS):
            self._labels = labels
        texts = [clean_text(row.text) for row in train_rows]
        y = np.array([self._labels.index(row.label) for row in train_rows], dtype=np.int64)
        x = featurize(texts, cfg.hash_dim)
        n, d = x.shape
        k = len(self._labels)
        rng = np.random.RandomState(seed)
        w = rng.normal(0.0, 0.01, size=(d, k)).astype(np.float64)
        b = np.zeros(k, dtype=np.float64)

        lr = cfg.learning_rate or 0.05
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        m_w = np.zeros_like(w)
        v_w = np.zeros_like(w)
        m_b = np.zeros_like(b)
        v_b = np.zeros_like(b)
        step = 0
        batch = max(1, cfg.batch_size)
        for _ in range(cfg.epochs):
            order = rng.permutation(n)
            for start in range(0, n, batch):
                idx = order[start : start + batch]
                xb, yb = x[idx], y[idx]
                logits = xb @ w + b
                logits -= logits.max(axis=1, keepdims=True)
                probs = np.exp(logits)
                probs /= probs.sum(axis=1, keepdims=True)
                probs[np.arange(len(idx)), yb] -= 1.0
                probs /= len(idx)
                g_w = xb.T @ probs
                g_b = probs.sum(axis=0)
                step += 1
                m_w = beta1 * m_w + (1 - beta1) * g_w
                v_w = beta2 * v_w + (1 - beta2) * g_w**2
                m_b = beta1 * m_b + (1 - beta1) * g_b
                v_b = beta2 * v_b + (1 - beta2) * g_b**2
                mw_hat = m_w / (1 - beta1**step)
                vw_hat = v_w / (1 - beta2**step)
                mb_hat = m_b / (1 - beta1**step)
                vb_hat = v_b / (1 - beta2**step)
                w -= lr * mw_hat / (np.sqrt(vw_hat) + eps)
                b -= lr * mb_hat / (np.sqrt(vb_hat) + eps)
        self._weights, self._bias = w, b

    def predict(self, texts: list[str]) -> list[str]:
        if self._weights is None:
            raise AdapterError("adapter has not been trained")
        x = featurize([clean_text(t) for t in texts], self.config.hash_dim)
        logits = x @ self._weights + self._bias
        return [self._labels[i] for i in logits.argmax(axis=1)]


# -- transformers finetune adapter ----------------------------------------------


class HfFinetuneAdapter:
    """Sequence-classification fine-tuning over a pretrained masked-LM backbone
    (batch 4, Adam, 4 epochs by default; batch 8 suits the tweet-domain
    backbone). Requires torch, transformers, and downloadable weights."""

    kind = "finetune"

    def __init__(self, config: AdapterConfig | None = None):
        self.config = config or AdapterConfig(
            adapter_id="hf-finetune", kind="finetune", backbone="distilbert-base-uncased"
        )
        self.adapter_id = self.config.adapter_id or "hf-finetune"
        self._labels = list(LABELS)
        self._model = None
        self._tokenizer = None

    def _load_backbone(self):
        try:
            import torch  # noqa: F401
            from transformers import AutoModelForSequenceClassification, AutoTokenizer
        except ImportError as exc:
            raise AdapterUnavailable("torch/transformers are not installed") from exc
        try:
            tokenizer = AutoTokenizer.from_pretrained(self.config.backbone)
            model = AutoModelForSequenceClassification.from_pretrained(
                self.config.backbone, num_labels=len(self._labels)
            )
        except Exception as exc:
            raise AdapterUnavailable(f"cannot load backbone {self.config.backbone!r}: {exc}") from exc
        return tokenizer, model

    def train(self, train_rows: list[DatasetRow], seed: int = 42) -> None:
        import torch

        torch.manual_seed(seed)
        random.seed(seed)
        np.random.seed(seed)
        tokenizer, model = self._load_backbone()
        device = "cuda" if torch.cuda.is_available() else "cpu"
        model.to(device)
        model.train()
        texts = [clean_text(row.text) for row in train_rows]
        y = [self._labels.index(row.label) for row in train_rows]
        optimizer = torch.optim.Adam(model.parameters(), lr=self.config.learning_rate or 2e-5)
        batch = self.config.batch_size
        order = list(range(len(texts)))
        rng = random.Random(seed)
        for _ in range(self.config.epochs):
            rng.shuffle(order)
            for start in range(0, len(order), batch):
                idx = order[start : start + batch]
                enc = tokenizer(
                    [texts[i] for i in idx],
                    truncation=True,
                    padding=True,
                    max_length=128,
                    return_tensors="pt",
                ).to(device)
                labels = torch.tensor([y[i] for i in idx], device=device)
                out = model(**enc, labels=labels)
                optimizer.zero_grad()
                out.loss.backward()
                optimizer.step()
        self._tokenizer, self._model = tokenizer, model

    def predict(self, texts: list[str]) -> list[str]:
        if self._model is None:
            raise AdapterError("adapter has not been trained")
        import torch

        device = next(self._model.parameters()).device
        self._model.eval()
        preds: list[str] = []
        with torch.no_grad():
            for start in range(0, len(texts), 32):
                chunk = [clean_text(t) for t in texts[start : start + 32]]
                enc = self._tokenizer(
                    chunk, truncation=True, padding=True, max_length=128, return_tensors="pt"
                ).to(device)
                logits = self._model(**enc).logits
                preds.extend(self._labels[i] for i in logits.argmax(dim=-1).tolist())
        return preds


# -- generative adapters ---------------------------------------------------------


class MockGenerativeAdapter:
    """Deterministic stand-in for a remote LLM. keyword mode answers from cue
    phrases in the tweet; fixed mode always answers the same string; a seeded
    garble rate produces non-compliant completions to exercise the parser."""

    kind = "generative"

    def __init__(self, config: AdapterConfig | None = None):
        self.config = config or AdapterConfig(adapter_id="mock-llm", kind="generative")
        self.adapter_id = self.config.adapter_id or "mock-llm"

    def predict(self, texts: list[str], spec: PromptSpec) -> list[str]:
        from .annotation.simulate import heuristic_label

        out = []
        for text in texts:
            build_prompt(spec, text)  # exercise the full prompt path
            rng = random.Random(f"{self.config.mock_seed}|{text}")
            if rng.random() < self.config.mock_garble_rate:
                out.append(rng.choice(["no idea", "Direct or Reporting, hard to say", "label: unclear"]))
                continue
            if self.config.mock_mode == "fixed":
                out.append(self.config.model or "Reporting")
                continue
            label = heuristic_label(text).value
            decoration = rng.choice(["{0}", " {0}.", "Category: {0}", "{0}"])
            out.append(decoration.format(label))
        return out


class HttpChatAdapter:
    """OpenAI-style chat-completions client. Credentials come from the
    environment variable named in the config, never from config values."""

    kind = "generative"

    def __init__(self, config: AdapterConfig, transport=None):
        if not config.endpoint:
            raise AdapterError("HttpChatAdapter requires an endpoint URL")
        self.config = config
        self.adapter_id = config.adapter_id or "http-chat"
        self._transport = transport

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.config.credential_env:
            key = os.environ.get(self.config.credential_env)
            if not key:
                raise AdapterUnavailable(
                    f"credential env var {self.config.credential_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _complete(self, client, system: str, user: str, decoding: dict) -> str:
        payload = {
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": decoding.get("temperature", 0.7),
            "max_tokens": decoding.get("max_output_tokens", 10),
            "n": decoding.get("n_choices", 1),
        }
        delay = 0.5
        last_error: Exception | None = None
        for _ in range(self.config.max_retries + 1):
            try:
                response = client.post(
                    self.config.endpoint.rstrip("/") + "/chat/completions",
                    json=payload,
                    headers=self._headers(),
                    timeout=60.0,
                )
                if response.status_code in (429,) or response.status_code >= 500:
                    last_error = AdapterError(f"endpoint returned {response.status_code}")
                else:
                    response.raise_for_status()
                    body = response.json()
                    return body["choices"][0]["message"]["content"]
            except AdapterError:
                pass
            except Exception as exc:  # transport errors are retryable
                last_error = exc
            time.sleep(delay)
            delay *= 2
        raise AdapterUnavailable(f"endpoint failed after retries: {last_error}")

    def predict(self, texts: list[str], spec: PromptSpec) -> list[str]:
        import httpx

        client = httpx.Client(transport=self._transport) if self._transport else httpx.Client()
        try:
            prompts = [build_prompt(spec, text) for text in texts]
            with ThreadPoolExecutor(max_workers=max(1, self.config.parallelism)) as pool:
                futures = [
                    pool.submit(self._complete, client, system, user, spec.decoding)
                    for system, user in prompts
                ]
                return [f.result() for f in futures]
        finally:
            client.close()


def make_adapter(config: AdapterConfig, transport=None):
    registry = {
        "bow-linear": lambda: LinearBowAdapter(config),
        "hf-finetune": lambda: HfFinetuneAdapter(config),
        "mock-llm": lambda: MockGenerativeAdapter(config),
        "http-chat": lambda: HttpChatAdapter(config, transport=transport),
    }
    key = config.adapter_id if config.adapter_id in registry else config.kind
    if key not in registry:
        raise AdapterError(f"unknown adapter {config.adapter_id!r} of kind {config.kind!r}")
    return registry[key]()


# -- harness entry points ---------------------------------------------------------


@dataclass
class PredictionSet:
    adapter_id: str
    seed: int | None
    ids: list[str]
    gold: list[str]
    pred: list[str]
    parse_flags: list[bool] = field(default_factory=list)

    def rows(self) -> list[dict]:
        flags = self.parse_flags or [False] * len(self.ids)
        return [
            {"id": i, "gold": g, "pred": p, "seed": self.seed if self.seed is not None else "", "parse_flag": int(f)}
            for i, g, p, f in zip(self.ids, self.gold, self.pred, flags)
        ]


def train_and_predict(
    adapter_factory,
    split: DatasetSplit,
    rows_by_id: dict[str, DatasetRow],
    seeds: list[int],
    run_dir: str | Path | None = None,
) -> dict[int, PredictionSet]:
    """Train one fresh finetune adapter per seed and predict the test side.
    Mentions and URLs are stripped inside the adapters via clean_text.
    Prediction files are cached under run_dir when given."""
    train_rows = [rows_by_id[i] for i in split.train_ids]
    test_rows = [rows_by_id[i] for i in split.test_ids]
    results: dict[int, PredictionSet] = {}
    for seed in seeds:
        adapter = adapter_factory()
        if adapter.kind != "finetune":
            raise AdapterError("train_and_predict requires a finetune adapter")
        adapter.train(train_rows, seed=seed)
        preds = adapter.predict([r.text for r in test_rows])
        pset = PredictionSet(
            adapter_id=adapter.adapter_id,
            seed=seed,
            ids=[r.id for r in test_rows],
            gold=[r.label for r in test_rows],
            pred=list(preds),
        )
        results[seed] = pset
        if run_dir is not None:
            from .bench import write_predictions

            path = Path(run_dir) / f"{adapter.adapter_id}_seed{seed}.csv"
            write_predictions(path, pset.rows())
    return results


def generative_predict(
    adapter,
    spec: PromptSpec,
    rows: list[DatasetRow],
    run_dir: str | Path | None = None,
) -> PredictionSet:
    """Prompt a generative adapter over rows and parse the completions;
    failures are scored as "None" and flagged."""
    if adapter.kind != "generative":
        raise AdapterError("generative_predict requires a generative adapter")
    raws = adapter.predict([r.text for r in rows], spec)
    labels, flags = [], []
    for raw in raws:
        parsed = parse_label(raw)
        labels.append(parsed.label.value)
        flags.append(parsed.failed)
    pset = PredictionSet(
        adapter_id=adapter.adapter_id,
        seed=None,
        ids=[r.id for r in rows],
        gold=[r.label for r in rows],
        pred=labels,
        parse_flags=flags,
    )
    if run_dir is not None:
        from .bench import write_predictions

        write_predictions(Path(run_dir) / f"{adapter.adapter_id}.csv", pset.rows())
    return pset
