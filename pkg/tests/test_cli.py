import json
import os

import numpy as np
import pytest

from tgrpo.cli import main
from tgrpo.env import load_questions
from tgrpo.graph import load_graph
from tgrpo.policy import PolicyParams, save_checkpoint
from tgrpo.retrieval import PruneConfig


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return str(path)


@pytest.fixture
def suite(tmp_path):
    spec = write_json(
        tmp_path / "spec.json",
        {
            "n_entities": 24,
            "n_relations": 8,
            "hop_mix": {"1": 4, "2": 4},
            "distractors_per_edge": 1,
            "seed": 3,
        },
    )
    out = str(tmp_path / "suite")
    assert main(["synth", "--spec", spec, "--out", out]) == 0
    return out


def test_synth_outputs_and_manifest(suite):
    for name in ("facts.jsonl", "labels.json", "questions.jsonl", "gold_paths.jsonl", "manifest.json"):
        assert os.path.exists(os.path.join(suite, name))
    manifest = json.load(open(os.path.join(suite, "manifest.json")))
    assert manifest["command"] == "synth"
    assert all(len(h) == 40 for h in manifest["inputs"].values())
    kg = load_graph(
        os.path.join(suite, "facts.jsonl"), os.path.join(suite, "labels.json")
    )
    questions = load_questions(os.path.join(suite, "questions.jsonl"))
    assert len(questions) == 8
    assert len(kg.facts) > 0


def test_synth_rejects_unknown_spec_key(tmp_path):
    spec = write_json(tmp_path / "bad.json", {"n_entities": 5, "mystery": 1})
    assert main(["synth", "--spec", spec, "--out", str(tmp_path / "o")]) == 2


def test_strict_config_unknown_key(tmp_path, suite):
    cfg = write_json(tmp_path / "cfg.json", {"retrieval": {"p": 4, "pp": 1}})
    rc = main(
        ["--config", cfg, "eval", "--graph", suite,
         "--questions", os.path.join(suite, "questions.jsonl"),
         "--policy", "nope", "--report", str(tmp_path / "r.json")]
    )
    assert rc == 2


def test_missing_files_exit_3(tmp_path):
    rc = main(
        ["eval", "--graph", str(tmp_path / "nowhere"),
         "--questions", "missing.jsonl", "--policy", "x", "--report", "r.json"]
    )
    assert rc == 3


def test_seed_env_override(tmp_path, suite, monkeypatch):
    monkeypatch.setenv("TGRPO_SEED", "777")
    ckpt = str(tmp_path / "zero.json")
    save_checkpoint(PolicyParams.zeros(), ckpt)
    report = str(tmp_path / "report.json")
    assert main(
        ["eval", "--graph", suite, "--questions", os.path.join(suite, "questions.jsonl"),
         "--policy", ckpt, "--report", report]
    ) == 0
    manifest = json.load(open(report + ".manifest.json"))
    assert manifest["seed"] == 777


def test_full_pipeline(tmp_path, suite):
    questions = os.path.join(suite, "questions.jsonl")
    cfg = write_json(
        tmp_path / "cfg.json",
        {
            "sampler": {"temperatures": [0.7, 1.0], "per_temp": 3, "sft_epochs": 4},
            "grpo": {"outer_steps": 2, "questions_per_step": 4},
            "eval": {"n_rollouts": 8},
            "search": {"g": 2},
        },
    )
    zero = str(tmp_path / "zero.json")
    save_checkpoint(PolicyParams.zeros(), zero)

    dataset = str(tmp_path / "sft.jsonl")
    assert main(
        ["--config", cfg, "sample", "--graph", suite, "--questions", questions,
         "--policy", zero, "--out", dataset]
    ) == 0
    lines = [json.loads(l) for l in open(dataset).read().splitlines()]
    assert lines, "expected at least one positive step on the tiny suite"
    assert all("digest" in rec for rec in lines)

    sft_ckpt = str(tmp_path / "sft.json")
    assert main(
        ["--config", cfg, "sft", "--graph", suite, "--questions", questions,
         "--dataset", dataset, "--out", sft_ckpt]
    ) == 0
    meta = json.load(open(sft_ckpt))
    assert meta["dim"] == 8

    trained = str(tmp_path / "tgrpo.json")
    log = str(tmp_path / "train.jsonl")
    dump = str(tmp_path / "buffer.jsonl")
    assert main(
        ["--config", cfg, "train", "--algo", "tgrpo", "--graph", suite,
         "--questions", questions, "--init", sft_ckpt, "--out", trained,
         "--log", log, "--dump-buffer", dump]
    ) == 0
    log_lines = [json.loads(l) for l in open(log).read().splitlines()]
    assert len(log_lines) == 2
    assert all(
        set(rec) == {"step", "mean_root_reward", "loss", "groups", "samples_total"}
        for rec in log_lines
    )
    assert os.path.getsize(dump) > 0

    flat = str(tmp_path / "flat.json")
    assert main(
        ["--config", cfg, "train", "--algo", "flat", "--graph", suite,
         "--questions", questions, "--init", sft_ckpt, "--out", flat]
    ) == 0

    report = str(tmp_path / "report.json")
    rank_dump = str(tmp_path / "ranks.jsonl")
    assert main(
        ["--config", cfg, "eval", "--graph", suite, "--questions", questions,
         "--policy", trained, "--report", report, "--rank-dump", rank_dump]
    ) == 0
    doc = json.load(open(report))
    assert set(doc["hits"]) == {"1", "10"}
    ranks = [json.loads(l) for l in open(rank_dump).read().splitlines()]
    assert len(ranks) == 8

    rc = main(["inspect", "--buffer-dump", dump])
    assert rc == 0


def test_train_zero_steps_checkpoint_identical(tmp_path, suite):
    questions = os.path.join(suite, "questions.jsonl")
    cfg = write_json(tmp_path / "cfg.json", {"grpo": {"outer_steps": 0}})
    init = str(tmp_path / "init.json")
    save_checkpoint(PolicyParams(np.linspace(-1, 1, 8)), init, meta={"source": "tgrpo"})
    out = str(tmp_path / "out.json")
    assert main(
        ["--config", cfg, "train", "--algo", "tgrpo", "--graph", suite,
         "--questions", questions, "--init", init, "--out", out]
    ) == 0
    assert open(out, "rb").read() == open(init, "rb").read()


def test_eval_uniform_policy_matches_enumeration_oracle(tmp_path):
    # 1-hop suite without distractors; zero weights = uniform answering
    spec = write_json(
        tmp_path / "spec.json",
        {
            "n_entities": 30,
            "n_relations": 6,
            "hop_mix": {"1": 6},
            "distractors_per_edge": 0,
            "seed": 12,
        },
    )
    suite = str(tmp_path / "suite")
    assert main(["synth", "--spec", spec, "--out", suite]) == 0
    # smallest trajectory probability in this fixture is ~1/72; 600 rollouts
    # make full path coverage near-certain so ranks are exact
    cfg = write_json(tmp_path / "cfg.json", {"eval": {"n_rollouts": 600}})
    zero = str(tmp_path / "zero.json")
    save_checkpoint(PolicyParams.zeros(), zero)
    report_path = str(tmp_path / "report.json")
    rank_dump = str(tmp_path / "ranks.jsonl")
    assert main(
        ["--config", cfg, "eval", "--graph", suite,
         "--questions", os.path.join(suite, "questions.jsonl"),
         "--policy", zero, "--report", report_path, "--rank-dump", rank_dump]
    ) == 0

    from test_evaluation import enumerate_answer_masses

    kg = load_graph(
        os.path.join(suite, "facts.jsonl"), os.path.join(suite, "labels.json")
    )
    questions = load_questions(os.path.join(suite, "questions.jsonl"))
    expected_ranks = {}
    for q in questions:
        masses, _, _ = enumerate_answer_masses(
            PolicyParams.zeros(), kg, q, 3, PruneConfig(p=16)
        )
        order = sorted(masses, key=lambda v: (-masses[v], v))
        rank = None
        for i, v in enumerate(order, start=1):
            if v in q.gold_answers:
                rank = i
                break
        expected_ranks[q.id] = rank
    got = {r["id"]: r["rank"] for r in map(json.loads, open(rank_dump))}
    assert got == expected_ranks
    doc = json.load(open(report_path))
    expected_hits1 = sum(
        1 for r in expected_ranks.values() if r is not None and r <= 1
    ) / len(questions)
    assert doc["hits"]["1"] == pytest.approx(expected_hits1)
