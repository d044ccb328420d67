"""Pipeline configuration: one INI file with a section per stage.

Unknown sections or keys are rejected, missing keys get documented defaults
(with a warning for the seeds), and every value is type-checked. Credentials
never live in the config; only the names of environment variables do.
"""

from __future__ import annotations

import configparser
import json
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

logger = logging.getLogger(__name__)

STAGES = [
    "ingest",
    "geolocate",
    "topics",
    "sample",
    "annotate-serve",
    "split",
    "train",
    "prompt-eval",
    "evaluate",
    "ablate",
    "report",
]


class ConfigError(Exception):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


@dataclass(frozen=True)
class Key:
    type: str  # str | int | float | bool | list_str | list_int
    default: object = None
    required: bool = False
    choices: tuple | None = None


SCHEMA: dict[str, dict[str, Key]] = {
    "run": {
        "runs_dir": Key("str", "runs"),
        "work_dir": Key("str", "work"),
        "stages": Key("list_str", STAGES),
    },
    "ingest": {
        "input": Key("str", required=True),
        "format": Key("str", "jsonl", choices=("jsonl", "csv")),
        "fail_fast": Key("bool", False),
        "placeholder": Key("str", "[GROUP]"),
        "output": Key("str", "records.masked.jsonl"),
        "rejection_log": Key("str", "rejections.json"),
    },
    "geo": {
        "gazetteer": Key("str", ""),
        "output": Key("str", "records.regions.jsonl"),
    },
    "topics": {
        "encoder": Key("str", "hashed-ngram-v1-d256"),
        "embedding_cache": Key("str", "embeddings.bin"),
        "min_cluster_size": Key("int", 0),
        "min_df": Key("float", 0.05),
        "top_k": Key("int", 10),
        "reduce": Key("str", "pca", choices=("pca", "none")),
        "n_components": Key("int", 5),
        "model_out": Key("str", "topics.json"),
        "tagged_out": Key("str", "tagged.jsonl"),
        "selection_file": Key("str", ""),
        "select_all": Key("bool", False),
        "selection_out": Key("str", "selection.json"),
    },
    "sample": {
        "quotas_file": Key("str", ""),
        "default_quota": Key("int", 30),
        "seed": Key("int", 17),
        "manifest_out": Key("str", "sample_manifest.json"),
        "sampled_out": Key("str", "sampled.jsonl"),
    },
    "annotate": {
        "mode": Key("str", "simulate", choices=("simulate", "serve")),
        "store": Key("str", "annotation.log"),
        "annotators": Key("list_str", ["ann1", "ann2", "ann3"]),
        "per_item": Key("int", 2),
        "seed": Key("int", 11),
        "noise": Key("float", 0.08),
        "insufficient_rate": Key("float", 0.01),
        "export": Key("str", "dataset.csv"),
        "guidelines": Key("str", ""),
        "host": Key("str", "127.0.0.1"),
        "port": Key("int", 8400),
    },
    "bench": {
        "cut": Key("str", "auto"),
        "split_out": Key("str", "split.json"),
        "adapter": Key("str", "bow-linear", choices=("bow-linear", "hf-finetune")),
        "backbone": Key("str", "distilbert-base-uncased"),
        "batch_size": Key("int", 4),
        "epochs": Key("int", 4),
        "learning_rate": Key("float", 0.0),
        "hash_dim": Key("int", 8192),
        "seeds": Key("list_int", [42, 62, 82]),
        "train_dir": Key("str", "train"),
        "prompt_spec": Key("str", ""),
        "prompt_mode": Key("str", "fewshot", choices=("fewshot", "zeroshot")),
        "generative_adapter": Key("str", "mock-llm", choices=("mock-llm", "http-chat")),
        "endpoint": Key("str", ""),
        "credential_env": Key("str", ""),
        "generative_model": Key("str", ""),
        "mock_garble_rate": Key("float", 0.05),
        "predictions_dir": Key("str", "preds"),
    },
    "eval": {
        "report_out": Key("str", "report.json"),
        "ablation_out": Key("str", "ablation.json"),
        "tables_dir": Key("str", "tables"),
        "min_support": Key("int", 10),
        "ablation_regions": Key("list_str", ["NorthAmerica", "Other"]),
    },
}

_SEED_KEYS = {("sample", "seed"), ("annotate", "seed"), ("bench", "seeds")}


def _coerce(section: str, key: str, raw: str, spec: Key, errors: list[str]):
    try:
        if spec.type == "str":
            value = raw
        elif spec.type == "int":
            value = int(raw)
        elif spec.type == "float":
            value = float(raw)
        elif spec.type == "bool":
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                value = True
            elif lowered in ("0", "false", "no", "off"):
                value = False
            else:
                raise ValueError(raw)
        elif spec.type == "list_str":
            value = [part.strip() for part in raw.split(",") if part.strip()]
        elif spec.type == "list_int":
            value = [int(part.strip()) for part in raw.split(",") if part.strip()]
        else:  # pragma: no cover - schema bug
            raise ValueError(f"bad schema type {spec.type}")
    except ValueError:
        errors.append(f"{section}.{key}: cannot parse {raw!r} as {spec.type}")
        return None
    if spec.choices and value not in spec.choices:
        errors.append(f"{section}.{key}: {value!r} not in {spec.choices}")
        return None
    return value


def validate_config(path: str | Path) -> dict:
    """Parse and validate; returns the normalized config tree. All schema
    violations are raised together as ConfigError."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError([f"cannot parse config: {exc}"]) from exc

    errors: list[str] = []
    config: dict[str, dict] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            errors.append(f"unknown section [{section}]")
            continue
        config[section] = {}
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                errors.append(f"unknown key {section}.{key}")
                continue
            value = _coerce(section, key, raw, SCHEMA[section][key], errors)
            if value is not None:
                config[section][key] = value

    for section, keys in SCHEMA.items():
        config.setdefault(section, {})
        for key, spec in keys.items():
            if key in config[section]:
                continue
            if spec.required:
                errors.append(f"missing required key {section}.{key}")
                continue
            if (section, key) in _SEED_KEYS:
                logger.warning("config %s.%s missing; using default %r", section, key, spec.default)
            config[section][key] = spec.default if not isinstance(spec.default, list) else list(spec.default)

    if errors:
        raise ConfigError(errors)
    config["_base_dir"] = str(path.resolve().parent)
    return config


def config_hash(config: dict) -> str:
    canonical = json.dumps(
        {k: v for k, v in config.items() if not k.startswith("_")}, sort_keys=True, default=str
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def resolve_path(config: dict, value: str, in_work_dir: bool = True) -> Path:
    """Resolve a config path value relative to the config file's directory,
    defaulting bare names into the work dir."""
    base = Path(config.get("_base_dir", "."))
    p = Path(value)
    if p.is_absolute():
        return p
    if in_work_dir and len(p.parts) == 1:
        return base / config["run"]["work_dir"] / p
    return base / p
