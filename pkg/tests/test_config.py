"""Tests for config parsing, experiment assembly, and run manifests."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import pytest

from relaware.config import (
    RunManifest,
    endpoint_from_config,
    experiment_from_config,
    load_config,
    mining_weights_from_config,
    retrieval_weights_from_config,
    sha256_file,
    train_config_from_config,
)
from relaware.errors import ConfigError

ENDPOINT_TOML = """
[endpoint.main]
base_url = "https://llm.example/v1"
model_name = "test-model"
api_key_env = "RELAWARE_TEST_API_KEY"
"""


def write_toml(tmp_path, text, name="config.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# file loading


def test_load_config_toml(tmp_path):
    path = write_toml(tmp_path, "[corpus]\nlanguage = \"en\"\n")
    assert load_config(path) == {"corpus": {"language": "en"}}


def test_load_config_json(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"corpus": {"language": "tr"}}))
    assert load_config(path) == {"corpus": {"language": "tr"}}


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.toml")


def test_load_config_parse_error(tmp_path):
    path = write_toml(tmp_path, "[broken\n")
    with pytest.raises(ConfigError, match="parse error"):
        load_config(path)


def test_load_config_unsupported_extension(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("a: 1\n")
    with pytest.raises(ConfigError, match="unsupported"):
        load_config(path)


def test_load_config_json_top_level_must_be_object(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="top level"):
        load_config(path)


# ---------------------------------------------------------------------------
# endpoint section


def test_endpoint_from_config(tmp_path):
    cfg = load_config(write_toml(tmp_path, ENDPOINT_TOML + """
max_output_tokens = 128
request_timeout = 30
max_concurrency = 2
requests_per_second = 1.5
"""))
    endpoint = endpoint_from_config(cfg, "main")
    assert endpoint.base_url == "https://llm.example/v1"
    assert endpoint.model_name == "test-model"
    assert endpoint.api_key_env == "RELAWARE_TEST_API_KEY"
    assert endpoint.max_output_tokens == 128
    assert endpoint.request_timeout == 30.0
    assert endpoint.max_concurrency == 2
    assert endpoint.requests_per_second == 1.5
    assert endpoint.temperature == 0.0


def test_endpoint_unknown_name_lists_known(tmp_path):
    cfg = load_config(write_toml(tmp_path, ENDPOINT_TOML))
    with pytest.raises(ConfigError, match="main"):
        endpoint_from_config(cfg, "other")


def test_endpoint_missing_required_key(tmp_path):
    cfg = load_config(write_toml(tmp_path, """
[endpoint.main]
base_url = "https://llm.example/v1"
model_name = "test-model"
"""))
    with pytest.raises(ConfigError, match="api_key_env"):
        endpoint_from_config(cfg, "main")


def test_endpoint_bool_is_not_an_int(tmp_path):
    cfg = load_config(write_toml(tmp_path, ENDPOINT_TOML +
                                 "max_retries = true\n"))
    with pytest.raises(ConfigError, match="max_retries must be int"):
        endpoint_from_config(cfg, "main")


def test_endpoint_wrong_type(tmp_path):
    cfg = load_config(write_toml(tmp_path, ENDPOINT_TOML +
                                 "max_output_tokens = \"many\"\n"))
    with pytest.raises(ConfigError, match="max_output_tokens"):
        endpoint_from_config(cfg, "main")


# ---------------------------------------------------------------------------
# weight and training sections


def test_weights_default_when_sections_absent():
    from relaware.mining import MiningWeights
    from relaware.retrieval import RetrievalWeights

    assert retrieval_weights_from_config({}) == RetrievalWeights()
    assert mining_weights_from_config({}) == MiningWeights()


def test_weights_read_from_sections(tmp_path):
    cfg = load_config(write_toml(tmp_path, """
[retrieval]
alpha1 = 0.25
alpha2 = 0.75

[mining]
alpha1 = 0.5
alpha2 = 0.3
alpha3 = 0.2
beta1 = 0.9
beta2 = 0.1
"""))
    retrieval = retrieval_weights_from_config(cfg)
    assert retrieval.alpha1 == 0.25
    assert retrieval.alpha2 == 0.75
    assert retrieval.beta1 == 0.5
    mining = mining_weights_from_config(cfg)
    assert mining.alpha3 == 0.2
    assert mining.beta1 == 0.9


def test_train_config_seed_override(tmp_path):
    cfg = load_config(write_toml(tmp_path, "[training]\nseed = 11\nepochs = 2\n"))
    assert train_config_from_config(cfg).seed == 11
    assert train_config_from_config(cfg, seed=99).seed == 99
    assert train_config_from_config(cfg).epochs == 2


# ---------------------------------------------------------------------------
# experiment assembly

EXPERIMENT_TOML = ENDPOINT_TOML + """
[corpus]
train = "data/train.jsonl"
test = "data/test.jsonl"
language = "en"

[prompts]
style = "none"

[retrieval]
strategy = "kate"
k = 3

[embeddings]
store = "data/store.bin"

[eval]
endpoint = "main"
report = "out/report.jsonl"
"""


def test_experiment_from_config_resolves_paths(tmp_path):
    cfg = load_config(write_toml(tmp_path, EXPERIMENT_TOML))
    spec, paths = experiment_from_config(cfg, tmp_path)
    assert spec.train_path == str(tmp_path / "data/train.jsonl")
    assert spec.test_path == str(tmp_path / "data/test.jsonl")
    assert spec.report_path == str(tmp_path / "out/report.jsonl")
    assert paths.store == str(tmp_path / "data/store.bin")
    assert paths.aliases is None
    assert spec.style == "none"
    assert spec.strategy == "kate"
    assert spec.k == 3
    assert spec.seed == 0
    assert spec.endpoint.model_name == "test-model"


def test_experiment_from_config_absolute_paths_kept(tmp_path):
    text = EXPERIMENT_TOML.replace("data/train.jsonl", "/abs/train.jsonl")
    cfg = load_config(write_toml(tmp_path, text))
    spec, _ = experiment_from_config(cfg, tmp_path)
    assert spec.train_path == "/abs/train.jsonl"


def test_experiment_from_config_cli_overrides(tmp_path):
    cfg = load_config(write_toml(tmp_path, EXPERIMENT_TOML))
    spec, _ = experiment_from_config(cfg, tmp_path, seed=5, limit=7,
                                     report_path="/elsewhere/r.jsonl")
    assert spec.seed == 5
    assert spec.limit == 7
    assert spec.report_path == "/elsewhere/r.jsonl"


def test_experiment_from_config_zero_shot_defaults_k(tmp_path):
    text = EXPERIMENT_TOML.replace('style = "none"',
                                   'style = "static_zero_shot"')
    text = text.replace('strategy = "kate"\nk = 3\n', "")
    cfg = load_config(write_toml(tmp_path, text))
    spec, _ = experiment_from_config(cfg, tmp_path)
    assert spec.style == "static_zero_shot"
    assert spec.k == 0
    assert spec.strategy is None


def test_experiment_from_config_bad_language(tmp_path):
    cfg = load_config(write_toml(
        tmp_path, EXPERIMENT_TOML.replace('language = "en"',
                                          'language = "de"')))
    with pytest.raises(ConfigError, match="language"):
        experiment_from_config(cfg, tmp_path)


def test_experiment_from_config_missing_section(tmp_path):
    cfg = load_config(write_toml(tmp_path, ENDPOINT_TOML))
    with pytest.raises(ConfigError, match=r"\[corpus\]"):
        experiment_from_config(cfg, tmp_path)


def test_experiment_from_config_loads_language_aliases(tmp_path):
    aliases = {"en": {"TrIP": ["THERAPY HELPS"]},
               "tr": {"TrIP": ["TEDAVI IYILESTIRIR"]}}
    (tmp_path / "aliases.json").write_text(json.dumps(aliases))
    text = EXPERIMENT_TOML.replace(
        'language = "en"', 'language = "en"\naliases = "aliases.json"')
    cfg = load_config(write_toml(tmp_path, text))
    spec, paths = experiment_from_config(cfg, tmp_path)
    assert spec.aliases == {"TrIP": ["THERAPY HELPS"]}
    assert paths.aliases == str(tmp_path / "aliases.json")


# ---------------------------------------------------------------------------
# manifests


def test_sha256_file_matches_hashlib(tmp_path):
    path = tmp_path / "blob.bin"
    path.write_bytes(b"x" * 3_000_000)
    assert sha256_file(path) == hashlib.sha256(b"x" * 3_000_000).hexdigest()


def test_run_manifest_sidecar(tmp_path):
    artifact = tmp_path / "out" / "report.jsonl"
    artifact.parent.mkdir()
    artifact.write_text("{}\n")
    given = tmp_path / "input.jsonl"
    given.write_text("data\n")

    manifest = RunManifest(command="eval run", config={"k": 3})
    manifest.started_at = RunManifest.now()
    manifest.add_input(given)
    manifest.seeds["run"] = 0
    manifest.extra["rows"] = [1, 2]
    manifest.finished_at = RunManifest.now()
    out = manifest.write(artifact)

    assert out == artifact.with_name("report.jsonl.manifest.json")
    payload = json.loads(out.read_text())
    assert payload["command"] == "eval run"
    assert payload["config"] == {"k": 3}
    assert payload["inputs"] == {str(given): sha256_file(given)}
    assert payload["seeds"] == {"run": 0}
    assert payload["extra"] == {"rows": [1, 2]}
    assert payload["started_at"] <= payload["finished_at"]
    assert payload["version"]


def test_run_manifest_skips_missing_inputs(tmp_path):
    manifest = RunManifest(command="x")
    manifest.add_input(tmp_path / "never-written.bin")
    assert manifest.inputs == {}
