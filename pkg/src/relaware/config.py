"""Configuration files, experiment assembly, and run manifests.

Config files are TOML (or JSON, chosen by extension). Secrets never appear
in them: an endpoint section names the environment variable that holds the
API key, and the gateway reads it at request time. A run manifest is a
JSON sidecar (<artifact>.manifest.json) recording the config snapshot,
input digests, seeds, the tool version, and wall-clock timestamps; keeping
the timestamps here is what lets report files themselves stay byte-stable.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .corpus import LANGUAGES, load_display_names
from .errors import ConfigError
from .evaluation import ExperimentSpec
from .gateway import EndpointConfig
from .mining import MiningWeights
from .projection import TrainConfig
from .retrieval import RetrievalWeights


def load_config(path: str | Path) -> dict:
    """Parse a TOML or JSON config file into a plain dict."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    suffix = path.suffix.lower()
    try:
        if suffix == ".toml":
            with path.open("rb") as fh:
                return tomllib.load(fh)
        if suffix == ".json":
            obj = json.loads(path.read_text(encoding="utf-8"))
            if not isinstance(obj, dict):
                raise ConfigError(f"{path}: top level must be an object")
            return obj
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from exc
    raise ConfigError(
        f"{path}: unsupported config extension {suffix!r} (use .toml or .json)"
    )


def _section(cfg: Mapping[str, Any], name: str, required: bool = True) -> dict:
    value = cfg.get(name)
    if value is None:
        if required:
            raise ConfigError(f"config is missing the [{name}] section")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] must be a table")
    return dict(value)


def _get(section: Mapping[str, Any], table: str, key: str, kind: type,
         default: Any = ...) -> Any:
    if key not in section:
        if default is ...:
            raise ConfigError(f"[{table}] is missing required key {key!r}")
        return default
    value = section[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(
            f"[{table}].{key} must be {kind.__name__}, got {type(value).__name__}"
        )
    return value


def endpoint_from_config(cfg: Mapping[str, Any], name: str) -> EndpointConfig:
    """Build an EndpointConfig from the [endpoint.<name>] table."""
    endpoints = _section(cfg, "endpoint")
    if name not in endpoints or not isinstance(endpoints[name], dict):
        known = ", ".join(sorted(k for k, v in endpoints.items()
                                 if isinstance(v, dict))) or "(none)"
        raise ConfigError(f"no [endpoint.{name}] table; defined endpoints: {known}")
    sec = endpoints[name]
    table = f"endpoint.{name}"
    rps = _get(sec, table, "requests_per_second", float, None)
    return EndpointConfig(
        base_url=_get(sec, table, "base_url", str),
        model_name=_get(sec, table, "model_name", str),
        api_key_env=_get(sec, table, "api_key_env", str),
        temperature=_get(sec, table, "temperature", float, 0.0),
        max_output_tokens=_get(sec, table, "max_output_tokens", int, 512),
        request_timeout=_get(sec, table, "request_timeout", float, 60.0),
        max_retries=_get(sec, table, "max_retries", int, 3),
        max_concurrency=_get(sec, table, "max_concurrency", int, 4),
        requests_per_second=rps,
        allow_nonzero_temperature=_get(
            sec, table, "allow_nonzero_temperature", bool, False),
    )


def retrieval_weights_from_config(cfg: Mapping[str, Any]) -> RetrievalWeights:
    sec = _section(cfg, "retrieval", required=False)
    defaults = RetrievalWeights()
    return RetrievalWeights(
        alpha1=_get(sec, "retrieval", "alpha1", float, defaults.alpha1),
        alpha2=_get(sec, "retrieval", "alpha2", float, defaults.alpha2),
        beta1=_get(sec, "retrieval", "beta1", float, defaults.beta1),
        beta2=_get(sec, "retrieval", "beta2", float, defaults.beta2),
    )


def mining_weights_from_config(cfg: Mapping[str, Any]) -> MiningWeights:
    sec = _section(cfg, "mining", required=False)
    defaults = MiningWeights()
    return MiningWeights(
        alpha1=_get(sec, "mining", "alpha1", float, defaults.alpha1),
        alpha2=_get(sec, "mining", "alpha2", float, defaults.alpha2),
        alpha3=_get(sec, "mining", "alpha3", float, defaults.alpha3),
        beta1=_get(sec, "mining", "beta1", float, defaults.beta1),
        beta2=_get(sec, "mining", "beta2", float, defaults.beta2),
    )


def train_config_from_config(cfg: Mapping[str, Any], seed: int | None = None) -> TrainConfig:
    sec = _section(cfg, "training", required=False)
    defaults = TrainConfig()
    return TrainConfig(
        temperature=_get(sec, "training", "temperature", float,
                         defaults.temperature),
        learning_rate=_get(sec, "training", "learning_rate", float,
                           defaults.learning_rate),
        epochs=_get(sec, "training", "epochs", int, defaults.epochs),
        batch_size=_get(sec, "training", "batch_size", int, defaults.batch_size),
        seed=seed if seed is not None
        else _get(sec, "training", "seed", int, defaults.seed),
        negative_mode=_get(sec, "training", "negative_mode", str,
                           defaults.negative_mode),
    )


def _resolve(base: Path, value: str) -> str:
    """Relative paths in a config resolve against the config's directory."""
    candidate = Path(value)
    if candidate.is_absolute():
        return str(candidate)
    return str((base / candidate))


@dataclass(frozen=True)
class ExperimentPaths:
    """Filesystem inputs an experiment touches, kept out of the spec echo."""

    train: str
    test: str
    store: str | None
    aliases: str | None


def experiment_from_config(
    cfg: Mapping[str, Any],
    config_dir: str | Path = ".",
    seed: int | None = None,
    limit: int | None = None,
    report_path: str | None = None,
) -> tuple[ExperimentSpec, ExperimentPaths]:
    """Assemble an ExperimentSpec plus the paths it depends on.

    seed/limit/report_path override the config when given (CLI flags).
    """
    base = Path(config_dir)
    corpus_sec = _section(cfg, "corpus")
    prompts_sec = _section(cfg, "prompts")
    retrieval_sec = _section(cfg, "retrieval", required=False)
    eval_sec = _section(cfg, "eval")
    embed_sec = _section(cfg, "embeddings", required=False)

    language = _get(corpus_sec, "corpus", "language", str)
    if language not in LANGUAGES:
        raise ConfigError(f"[corpus].language must be one of {LANGUAGES}")

    aliases_path = _get(corpus_sec, "corpus", "aliases", str, None)
    aliases = None
    resolved_aliases = None
    if aliases_path is not None:
        resolved_aliases = _resolve(base, aliases_path)
        names = load_display_names(resolved_aliases)
        aliases = names.get(language, {})

    strategy = _get(retrieval_sec, "retrieval", "strategy", str, None)
    style = _get(prompts_sec, "prompts", "style", str)
    k = _get(retrieval_sec, "retrieval", "k", int,
             0 if style == "static_zero_shot" else 5)

    endpoint_name = _get(eval_sec, "eval", "endpoint", str)
    endpoint = endpoint_from_config(cfg, endpoint_name)

    store_path = _get(embed_sec, "embeddings", "store", str, None)
    report = report_path if report_path is not None else _get(
        eval_sec, "eval", "report", str)
    cot_cache = _get(prompts_sec, "prompts", "cot_cache", str, None)
    completion_cache = _get(eval_sec, "eval", "completion_cache", str, None)
    template_dir = _get(prompts_sec, "prompts", "template_dir", str, None)

    spec = ExperimentSpec(
        train_path=_resolve(base, _get(corpus_sec, "corpus", "train", str)),
        test_path=_resolve(base, _get(corpus_sec, "corpus", "test", str)),
        language=language,
        style=style,
        strategy=strategy,
        k=k,
        endpoint=endpoint,
        report_path=_resolve(base, report),
        seed=seed if seed is not None else _get(eval_sec, "eval", "seed", int, 0),
        retrieval_weights=retrieval_weights_from_config(cfg),
        demo_order=_get(prompts_sec, "prompts", "demo_order", str, "ascending"),
        template_dir=(_resolve(base, template_dir)
                      if template_dir is not None else None),
        cot_cache_dir=_resolve(base, cot_cache) if cot_cache is not None else None,
        completion_cache_dir=(_resolve(base, completion_cache)
                              if completion_cache is not None else None),
        cot_model=_get(prompts_sec, "prompts", "cot_model", str, None),
        aliases=aliases,
        limit=limit if limit is not None else _get(eval_sec, "eval", "limit",
                                                   int, None),
    )
    paths = ExperimentPaths(
        train=spec.train_path,
        test=spec.test_path,
        store=_resolve(base, store_path) if store_path is not None else None,
        aliases=resolved_aliases,
    )
    return spec, paths


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Reproducibility sidecar for a produced artifact."""

    command: str
    config: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    started_at: str = ""
    finished_at: str = ""
    extra: dict = field(default_factory=dict)

    @staticmethod
    def now() -> str:
        return datetime.now(timezone.utc).isoformat()

    def add_input(self, path: str | Path) -> None:
        p = Path(path)
        if p.is_file():
            self.inputs[str(p)] = sha256_file(p)

    def write(self, artifact_path: str | Path) -> Path:
        """Write <artifact>.manifest.json next to the artifact."""
        artifact = Path(artifact_path)
        out = artifact.with_name(artifact.name + ".manifest.json")
        payload = {
            "command": self.command,
            "version": __version__,
            "config": self.config,
            "inputs": self.inputs,
            "seeds": self.seeds,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }
        if self.extra:
            payload["extra"] = self.extra
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n",
                       encoding="utf-8")
        return out
