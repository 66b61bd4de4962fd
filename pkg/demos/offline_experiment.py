"""Run a complete evaluation experiment offline against a mock endpoint.

The mock transport echoes each test instance's gold verbalization, so the
run scores a perfect micro-F1 while exercising the full pipeline: corpus
files, demonstration retrieval, prompt assembly, response parsing, resumable
report writing, and the Markdown emitters. Everything lands in a temporary
directory that is printed at the end. Run with:
python3 demos/offline_experiment.py
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from relaware.corpus import Corpus, EntityMention, LABEL_CODES, REInstance, label_from_code, write_corpus
from relaware.embeddings import EmbeddingStore
from relaware.evaluation import (
    ExperimentSpec,
    ablate_shots,
    ablation_markdown,
    report_markdown,
    run_experiment,
)
from relaware.gateway import EndpointConfig, MockTransport

KEY_ENV = "DEMO_API_KEY"

CHANNELS = ("sentence", "e1", "e2", "pure_relation",
            "ft_sentence", "ft_e1", "ft_e2")


def build_instance(i: int, code: str) -> REInstance:
    if code.startswith("Tr"):
        e1, e1_type = f"drug{i}", "treatment"
    elif code.startswith("Te"):
        e1, e1_type = f"assay{i}", "test"
    else:
        e1, e1_type = f"finding{i}", "problem"
    e2 = f"condition{i}"
    sentence = f"{e1} was noted in the context of {e2}."
    return REInstance(
        id=f"case{i:03d}",
        lang="en",
        sentence=sentence,
        e1=EntityMention(e1, 0, len(e1), e1_type),
        e2=EntityMention(e2, sentence.index(e2),
                         sentence.index(e2) + len(e2), "problem"),
        gold=label_from_code(code),
    )


def gold_echo(test_corpus: Corpus):
    by_sentence = {inst.sentence: inst.gold.verbalization
                   for inst in test_corpus.instances}

    def responder(payload):
        text = payload["messages"][0]["content"]
        contexts = [line for line in text.splitlines()
                    if line.startswith("Context: ")]
        return by_sentence[contexts[-1][len("Context: "):]]

    return responder


def main() -> None:
    os.environ.setdefault(KEY_ENV, "demo-key-not-a-secret")
    workdir = Path(tempfile.mkdtemp(prefix="relaware-demo-"))

    instances = [build_instance(i, LABEL_CODES[i % len(LABEL_CODES)])
                 for i in range(32)]
    train_c = Corpus(split="train", instances=instances[:24])
    test_c = Corpus(split="test", instances=instances[24:])
    write_corpus(train_c, workdir / "train.jsonl")
    write_corpus(test_c, workdir / "test.jsonl")

    rng = np.random.default_rng(11)
    store = EmbeddingStore({
        (inst.id, channel): rng.standard_normal(16).astype(np.float32)
        for inst in instances for channel in CHANNELS
    })

    spec = ExperimentSpec(
        train_path=str(workdir / "train.jsonl"),
        test_path=str(workdir / "test.jsonl"),
        language="en",
        style="none",
        strategy="kate",
        k=3,
        endpoint=EndpointConfig(base_url="https://mock.invalid/v1",
                                model_name="mock-model",
                                api_key_env=KEY_ENV),
        report_path=str(workdir / "report.jsonl"),
        completion_cache_dir=str(workdir / "completions"),
    )
    report = run_experiment(spec, store=store,
                            transport=MockTransport(responder=gold_echo(test_c)))
    print(report_markdown(report))

    rows = ablate_shots(spec, shots=(1, 3, 5), store=store,
                        transport=MockTransport(responder=gold_echo(test_c)))
    print(ablation_markdown(rows))

    print(f"artifacts in {workdir}:")
    for path in sorted(workdir.rglob("*")):
        if path.is_file():
            print(f"  {path.relative_to(workdir)}")


if __name__ == "__main__":
    main()
