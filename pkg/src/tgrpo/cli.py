"""Operator command line: synth, sample, sft, train, eval, inspect.

Every run writes a manifest next to its outputs recording the config
snapshot, the effective seed, and a git-style content hash of each input
file; with workers=1 identical manifests imply identical outputs.

Exit codes: 0 success, 2 config error, 3 data error, 4 remote-policy error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from typing import Optional

import numpy as np

from . import config as config_mod
from .errors import ConfigError, DataError, RemotePolicyError, TgrpoError
from .env import Question, ReasoningState, candidate_actions, load_questions, masked_candidates
from .evaluation import evaluate
from .graph import TemporalKG, TimeInterval, load_graph
from .policy import (
    DeskPolicy,
    PolicyLike,
    PolicyParams,
    load_checkpoint,
    save_checkpoint,
)
from .remote import RemotePolicy, RemotePolicyEndpoint
from .retrieval import PruneConfig, make_scorer
from .sampling import (
    SftDataset,
    SftInstance,
    TrajectoryStep,
    build_sft_dataset,
    derive_seed,
    filter_positive,
    sample_multi,
    train_sft,
)
from .synth import SynthSpec, generate, write_dataset
from .training import (
    GrpoConfig,
    SearchConfig,
    record_to_json,
    train_grpo_flat,
    train_tgrpo,
)


def git_blob_hash(path: str) -> str:
    with open(path, "rb") as fh:
        data = fh.read()
    h = hashlib.sha1()
    h.update(f"blob {len(data)}\0".encode("ascii"))
    h.update(data)
    return h.hexdigest()


def write_manifest(
    out_path: str, command: str, cfg: dict, inputs: list[str], outputs: list[str]
) -> None:
    manifest = {
        "command": command,
        "seed": cfg["runtime"]["seed"],
        "config": cfg,
        "inputs": {p: git_blob_hash(p) for p in sorted(set(inputs))},
        "outputs": sorted(set(outputs)),
    }
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require(path: Optional[str], what: str) -> str:
    if not path:
        raise ConfigError(f"missing required {what}")
    if not os.path.exists(path):
        raise DataError(f"{what} not found: {path}")
    return path


def _load_graph_dir(cfg: dict, graph_dir: Optional[str]) -> tuple[TemporalKG, list[str]]:
    if graph_dir:
        facts = os.path.join(graph_dir, "facts.jsonl")
        labels = os.path.join(graph_dir, "labels.json")
    else:
        facts, labels = cfg["graph"]["facts"], cfg["graph"]["labels"]
    facts = _require(facts, "facts file")
    labels = _require(labels, "labels file")
    kg = load_graph(facts, labels, cfg["graph"]["relation_allowlist"])
    return kg, [facts, labels]


def _make_policy(spec: str, cfg: dict, max_depth: int) -> PolicyLike:
    if spec.startswith(("http://", "https://")):
        endpoint = RemotePolicyEndpoint(
            spec,
            retries=cfg["policy"]["remote_retries"],
            timeout=cfg["policy"]["remote_timeout"],
            max_in_flight=cfg["policy"]["remote_max_in_flight"],
        )
        return RemotePolicy(endpoint)
    return DeskPolicy(load_checkpoint(_require(spec, "policy checkpoint")), max_depth)


def _scorer(cfg: dict):
    return make_scorer(cfg["retrieval"]["scorer"], cfg["retrieval"]["remote_url"])


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args, cfg: dict) -> int:
    spec_path = _require(args.spec, "synth spec file")
    with open(spec_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    known = {
        "n_entities",
        "n_relations",
        "time_range",
        "hop_mix",
        "distractors_per_edge",
        "seed",
        "time_answer_fraction",
    }
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown synth spec keys: {sorted(unknown)}")
    if "time_range" in doc:
        doc["time_range"] = TimeInterval(*doc["time_range"])
    if "hop_mix" in doc:
        doc["hop_mix"] = {int(k): int(v) for k, v in doc["hop_mix"].items()}
    if "seed" not in doc:
        doc["seed"] = cfg["runtime"]["seed"]
    kg, cases = generate(SynthSpec(**doc))
    paths = write_dataset(kg, cases, args.out)
    write_manifest(
        os.path.join(args.out, "manifest.json"),
        "synth",
        cfg,
        [spec_path],
        list(paths.values()),
    )
    print(f"wrote {len(kg.facts)} facts, {len(cases)} questions to {args.out}")
    return 0


def _step_export_record(inst: SftInstance) -> dict:
    state = inst.step.state
    kg = state.kg
    cands = inst.step.candidates()
    qid, central, subgraph_ids, history_ids, depth = inst.step.digest()
    return {
        "qid": inst.question_id,
        "question": state.question.text,
        "history": [kg.verbalize(f) for f in state.history],
        "subgraph": [kg.verbalize(f) for f in state.subgraph],
        "central": kg.entity_label(state.central),
        "candidates": [a.render(kg) for a in cands],
        "choice": cands.index(inst.step.action),
        "rationale": inst.step.action.rationale,
        "digest": {
            "central": central,
            "subgraph": list(subgraph_ids),
            "history": list(history_ids),
            "depth": depth,
            "masked": inst.step.masked,
        },
    }


def cmd_sample(args, cfg: dict) -> int:
    kg, inputs = _load_graph_dir(cfg, args.graph)
    questions_path = _require(args.questions, "questions file")
    questions = load_questions(questions_path)
    policy = _make_policy(args.policy, cfg, cfg["search"]["max_depth"])
    scorer = _scorer(cfg)
    prune = PruneConfig(cfg["retrieval"]["p"])
    seed = cfg["runtime"]["seed"]

    per_question = []
    n_traj = 0
    for q in questions:
        tset = sample_multi(
            kg,
            q,
            policy,
            cfg["sampler"]["temperatures"],
            cfg["sampler"]["per_temp"],
            cfg["search"]["max_depth"],
            prune,
            derive_seed(seed, "sample", q.id),
            scorer,
        )
        n_traj += tset.size
        positives = filter_positive(tset)
        if positives:
            per_question.append((q, positives))
    dataset = build_sft_dataset(per_question)
    with open(args.out, "w", encoding="utf-8") as fh:
        for inst in dataset.instances:
            fh.write(json.dumps(_step_export_record(inst)) + "\n")
    write_manifest(
        args.out + ".manifest.json",
        "sample",
        cfg,
        inputs + [questions_path],
        [args.out],
    )
    print(
        f"sampled {n_traj} trajectories over {len(questions)} questions; "
        f"{len(dataset)} positive step instances -> {args.out}"
    )
    return 0


def load_sft_file(path: str, kg: TemporalKG, questions: list[Question]) -> SftDataset:
    """Rebuild a trainable dataset from an exported step file."""
    by_id = {q.id: q for q in questions}
    instances = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "digest" not in rec:
                raise DataError(
                    f"{path}:{lineno}: record lacks the 'digest' replay block"
                )
            d = rec["digest"]
            q = by_id.get(rec["qid"])
            if q is None:
                raise DataError(f"{path}:{lineno}: unknown question id {rec['qid']!r}")
            state = ReasoningState(
                question=q,
                central=int(d["central"]),
                subgraph=tuple(kg.facts[i] for i in d["subgraph"]),
                history=tuple(kg.facts[i] for i in d["history"]),
                depth=int(d["depth"]),
                kg=kg,
            )
            cands = candidate_actions(state)
            if d.get("masked"):
                cands = masked_candidates(state)
            choice = int(rec["choice"])
            if not 0 <= choice < len(cands):
                raise DataError(f"{path}:{lineno}: choice {choice} out of range")
            rendered = [a.render(kg) for a in cands]
            if rendered != rec["candidates"]:
                raise DataError(
                    f"{path}:{lineno}: candidates do not replay against the graph"
                )
            step = TrajectoryStep(state, cands[choice], 0.0, bool(d.get("masked")))
            instances.append(SftInstance(rec["qid"], 0, len(instances), step))
    return SftDataset(tuple(instances))


def cmd_sft(args, cfg: dict) -> int:
    kg, inputs = _load_graph_dir(cfg, args.graph)
    questions_path = _require(args.questions, "questions file")
    questions = load_questions(questions_path)
    dataset_path = _require(args.dataset, "dataset file")
    dataset = load_sft_file(dataset_path, kg, questions)
    if len(dataset) == 0:
        raise DataError(f"{dataset_path}: no instances to train on")
    init = (
        load_checkpoint(_require(args.init, "init checkpoint"))
        if args.init
        else PolicyParams.zeros()
    )
    rng = np.random.default_rng(derive_seed(cfg["runtime"]["seed"], "sft"))
    params, losses = train_sft(
        init,
        dataset,
        epochs=cfg["sampler"]["sft_epochs"],
        lr=cfg["sampler"]["sft_lr"],
        rng=rng,
        batch_size=cfg["sampler"]["sft_batch_size"],
        max_depth=cfg["search"]["max_depth"],
    )
    save_checkpoint(params, args.out, meta={"loss_trace": losses, "source": "sft"})
    write_manifest(
        args.out + ".manifest.json",
        "sft",
        cfg,
        inputs + [questions_path, dataset_path],
        [args.out],
    )
    print(f"sft: {len(dataset)} instances, loss {losses[0]:.4f} -> {losses[-1]:.4f}")
    return 0


def cmd_train(args, cfg: dict) -> int:
    kg, inputs = _load_graph_dir(cfg, args.graph)
    questions_path = _require(args.questions, "questions file")
    questions = load_questions(questions_path)
    init = load_checkpoint(_require(args.init, "init checkpoint"))
    scorer = _scorer(cfg)
    scfg = SearchConfig(
        g=cfg["search"]["g"],
        max_depth=cfg["search"]["max_depth"],
        prune=PruneConfig(cfg["retrieval"]["p"]),
        search_temperature=cfg["search"]["temperature"],
        group_budget=cfg["search"]["group_budget"],
    )
    gcfg = GrpoConfig(
        eps_clip=cfg["grpo"]["eps_clip"],
        beta_kl=cfg["grpo"]["beta_kl"],
        mu=cfg["grpo"]["mu"],
        outer_steps=cfg["grpo"]["outer_steps"],
        lr=cfg["grpo"]["lr"],
        std_floor=cfg["grpo"]["std_floor"],
        gamma=cfg["grpo"]["gamma"],
        questions_per_step=cfg["grpo"]["questions_per_step"],
        decision_budget=cfg["grpo"]["decision_budget"],
    )
    rng = np.random.default_rng(derive_seed(cfg["runtime"]["seed"], "train", args.algo))

    log_fh = open(args.log, "w", encoding="utf-8") if args.log else None
    dump_fh = open(args.dump_buffer, "w", encoding="utf-8") if args.dump_buffer else None

    def log_fn(rec: dict):
        if log_fh:
            log_fh.write(json.dumps(rec) + "\n")

    record_sink = None
    if dump_fh is not None:
        def record_sink(record):
            dump_fh.write(json.dumps(record_to_json(record)) + "\n")

    try:
        if args.algo == "tgrpo":
            params = train_tgrpo(
                init, questions, kg, scfg, gcfg, rng, scorer, log_fn,
                record_sink=record_sink,
            )
        elif args.algo == "flat":
            params = train_grpo_flat(init, questions, kg, scfg, gcfg, rng, scorer, log_fn)
        else:
            raise ConfigError(f"unknown algo {args.algo!r}")
    finally:
        if log_fh:
            log_fh.close()
        if dump_fh:
            dump_fh.close()
    save_checkpoint(params, args.out, meta={"source": args.algo})
    outputs = [args.out] + ([args.log] if args.log else [])
    write_manifest(
        args.out + ".manifest.json",
        f"train-{args.algo}",
        cfg,
        inputs + [questions_path, args.init],
        outputs,
    )
    print(f"trained ({args.algo}) -> {args.out}")
    return 0


def cmd_eval(args, cfg: dict) -> int:
    kg, inputs = _load_graph_dir(cfg, args.graph)
    questions_path = _require(args.questions, "questions file")
    questions = load_questions(questions_path)
    policy = _make_policy(args.policy, cfg, cfg["search"]["max_depth"])
    report = evaluate(
        policy,
        kg,
        questions,
        PruneConfig(cfg["retrieval"]["p"]),
        n_rollouts=cfg["eval"]["n_rollouts"],
        temperature=cfg["eval"]["temperature"],
        max_depth=cfg["search"]["max_depth"],
        rng_seed=cfg["runtime"]["seed"],
        scorer=_scorer(cfg),
        workers=cfg["runtime"]["workers"],
    )
    with open(args.report, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.rank_dump:
        with open(args.rank_dump, "w", encoding="utf-8") as fh:
            for q in questions:
                fh.write(
                    json.dumps({"id": q.id, "rank": report.ranks[q.id]}) + "\n"
                )
    inputs = inputs + [questions_path]
    if not args.policy.startswith(("http://", "https://")):
        inputs.append(args.policy)
    write_manifest(
        args.report + ".manifest.json", "eval", cfg, inputs, [args.report]
    )
    print(f"hits@1 {report.hits[1]:.3f}  hits@10 {report.hits[10]:.3f}  n={report.n}")
    return 0


def cmd_inspect(args, cfg: dict) -> int:
    del cfg
    path = _require(args.buffer_dump, "buffer dump file")
    trees: dict[tuple[str, tuple[int, ...]], dict] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            rec = json.loads(line)
            trees[(rec["question_id"], tuple(rec["tree_path"]))] = rec

    roots = [key for key in trees if key[1] == ()]
    for qid, _ in sorted(roots):
        print(f"question {qid}")
        _print_tree(trees, qid, (), indent=1)
    return 0


def _print_tree(trees: dict, qid: str, path: tuple[int, ...], indent: int) -> None:
    rec = trees.get((qid, path))
    if rec is None:
        return
    pad = "  " * indent
    for i, m in enumerate(rec["members"]):
        print(
            f"{pad}[{'/'.join(map(str, path + (i,))) or 'root'}] "
            f"{m['action']}  reward={m['reward']:.4f}"
            + ("  (failed)" if m.get("failed") else "")
        )
        _print_tree(trees, qid, path + (i,), indent + 1)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tgrpo",
        description="Multi-hop TKG question answering with tree-group RL.",
    )
    parser.add_argument("--config", help="JSON config file (strict keys)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic benchmark")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sample", help="multi-trajectory sampling + SFT export")
    p.add_argument("--graph", help="directory with facts.jsonl and labels.json")
    p.add_argument("--questions", required=True)
    p.add_argument("--policy", required=True, help="checkpoint path or remote url")
    p.add_argument("--out", required=True)

    p = sub.add_parser("sft", help="cold-start supervised training")
    p.add_argument("--graph")
    p.add_argument("--questions", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--init", help="optional starting checkpoint")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="RL training (tree or flat)")
    p.add_argument("--algo", choices=["tgrpo", "flat"], required=True)
    p.add_argument("--graph")
    p.add_argument("--questions", required=True)
    p.add_argument("--init", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="JSONL training log")
    p.add_argument("--dump-buffer", help="JSONL group-record dump (tgrpo only)")

    p = sub.add_parser("eval", help="Hits@K evaluation")
    p.add_argument("--graph")
    p.add_argument("--questions", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--rank-dump")

    p = sub.add_parser("inspect", help="pretty-print a buffer dump")
    p.add_argument("--buffer-dump", required=True)
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "sample": cmd_sample,
    "sft": cmd_sft,
    "train": cmd_train,
    "eval": cmd_eval,
    "inspect": cmd_inspect,
}


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_mod.load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except RemotePolicyError as exc:
        print(f"remote policy error: {exc}", file=sys.stderr)
        return 4
    except TgrpoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
