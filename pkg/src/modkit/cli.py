"""Command-line entry point wiring every module together.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 a scenario's
directional acceptance assertion failed (reports are still written, so CI
can gate on the code while keeping the evidence).

Flag precedence: command line > TOML config section > defaults. Every
command echoes its fully resolved configuration next to its outputs;
replaying that configuration reproduces the artifacts bit for bit
(latency measurements exempt).
"""
from __future__ import annotations

import argparse
import json
import shlex
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .data import (CloudParams, corpus_from_manifest, gen_sentiment_corpus,
                   load_bundle, save_bundle, synthsat_bundle)
from .errors import ModkitError
from .models import build_classifier, build_encoder_decoder, build_text_student
from .models.io import load_model
from .pipeline import MlModule, Registry, Signature, compose, external_teacher
from .pipeline.teacher import serve_stdio
from .tensor.io import load_bt, save_bt
from .training import (Distiller, SupervisedTrainer, prune_magnitude,
                       train_denoiser, write_history_csv, zero_fraction)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_ASSERTION = 3


class UsageError(ModkitError):
    pass


# -- config plumbing -----------------------------------------------------------

def _load_config_section(path: str | None, section: str) -> dict:
    if not path:
        return {}
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return data.get(section, {})


def resolve(args: argparse.Namespace, section: str, defaults: dict) -> dict:
    """flags > config file section > defaults."""
    overrides = _load_config_section(getattr(args, "config", None), section)
    out = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in overrides:
            out[key] = overrides[key]
        else:
            out[key] = default
    return out


def echo_config(resolved: dict, out_path: Path, command: str):
    target = out_path / "run_config.json" if out_path.is_dir() \
        else out_path.with_name(out_path.name + ".run.json")
    payload = {"command": command, "resolved": resolved}
    target.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str))


def _load_solution(path: str):
    """A .modk file or a pipeline manifest (.json) -> predictor module."""
    p = Path(path)
    if p.suffix == ".json":
        manifest = json.loads(p.read_text())
        if manifest.get("kind") != "pipeline":
            raise UsageError(f"{p}: not a pipeline manifest")
        members = [_load_solution(str((p.parent / m)))
                   for m in manifest["modules"]]
        return compose(members)
    graph, metadata, _sig = load_model(p)
    return MlModule.from_graph(metadata.get("id", p.stem), graph, metadata)


# -- commands -------------------------------------------------------------------

def cmd_datagen(args) -> int:
    cfg = resolve(args, "datagen", {
        "n": 1000, "classes": 10, "size": 32, "labeled_frac": 0.2,
        "cloud_opacity": CloudParams.opacity, "cloud_threshold": CloudParams.threshold,
        "cloud_octaves": CloudParams.octaves, "seed": 0})
    cloud = CloudParams(octaves=int(cfg["cloud_octaves"]),
                        threshold=float(cfg["cloud_threshold"]),
                        opacity=float(cfg["cloud_opacity"]),
                        seed=int(cfg["seed"]))
    bundle = synthsat_bundle(int(cfg["n"]), int(cfg["classes"]),
                             int(cfg["size"]), float(cfg["labeled_frac"]),
                             cloud, int(cfg["seed"]))
    out = Path(args.out)
    save_bundle(bundle, out)
    echo_config(cfg, out, "datagen")
    print(f"datagen: wrote bundle to {out} "
          f"(labeled {sum(len(bundle.splits[s]) for s in bundle.splits)}, "
          f"pool {len(bundle.pool)})")
    return EXIT_OK


def cmd_gen_corpus(args) -> int:
    cfg = resolve(args, "gen_corpus", {
        "vocab": 2000, "docs": 12000, "max_len": 128, "seed": 0})
    corpus = gen_sentiment_corpus(int(cfg["vocab"]), int(cfg["docs"]),
                                  int(cfg["max_len"]), int(cfg["seed"]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "corpus_manifest.json").write_text(
        json.dumps(corpus.params, indent=2, sort_keys=True))
    save_bt(corpus.tokens.astype(np.float32), out / "tokens.bt")
    save_bt(corpus.stars.astype(np.float32), out / "stars.bt")
    echo_config(cfg, out, "gen-corpus")
    print(f"gen-corpus: {len(corpus)} docs, vocab {corpus.vocab_size}, "
          f"max_len {corpus.max_len} -> {out}")
    return EXIT_OK


def _load_corpus_dir(path: str):
    manifest = json.loads((Path(path) / "corpus_manifest.json").read_text())
    return corpus_from_manifest(manifest)


def cmd_train(args) -> int:
    cfg = resolve(args, "train", {
        "task": None, "preset": "desk", "epochs": 20, "batch_size": 32,
        "lr": 1e-3, "optimizer": "adam", "seed": 0, "patience": 5})
    if cfg["task"] not in ("classifier", "denoiser", "nir"):
        raise UsageError(f"--task must be classifier|denoiser|nir, "
                         f"got {cfg['task']!r}")
    bundle = load_bundle(args.bundle)
    shape = bundle.train.cloudy.shape[1:]
    trainer_args = dict(epochs=int(cfg["epochs"]), batch_size=int(cfg["batch_size"]),
                        lr=float(cfg["lr"]), optimizer=cfg["optimizer"],
                        seed=int(cfg["seed"]), patience=int(cfg["patience"]))
    out = Path(args.out)

    if cfg["task"] == "denoiser":
        module, history = train_denoiser(
            build_encoder_decoder(shape, shape[0], cfg["preset"],
                                  seed=int(cfg["seed"])),
            bundle.pool.cloudy, bundle.pool.clean, **trainer_args)
        summary = f"val_mse {-module.metadata['metrics']['val_metric']:.5f}"
        metadata = module.metadata
        graph = module.graph
    else:
        tr, va = bundle.train, bundle.val
        if cfg["task"] == "classifier":
            num_classes = int(tr.labels.max()) + 1
            trainer = SupervisedTrainer(loss="cross_entropy", **trainer_args)
            trainer.fit(build_classifier(shape, num_classes, cfg["preset"],
                                         seed=int(cfg["seed"])),
                        tr.cloudy, tr.labels, va.cloudy, va.labels)
            summary = f"val_top1 {trainer.best_val_metric_:.4f}"
            module = trainer.to_module("classifier", task="classification",
                                       data_provenance="cloudy-labeled")
        else:
            trainer = SupervisedTrainer(loss="mse", **trainer_args)
            trainer.fit(build_encoder_decoder(shape, 1, cfg["preset"],
                                              seed=int(cfg["seed"])),
                        tr.cloudy, tr.nir, va.cloudy, va.nir)
            summary = f"val_mse {-trainer.best_val_metric_:.5f}"
            module = trainer.to_module("nir", task="nir-prediction",
                                       data_provenance="cloudy-labeled")
        history = trainer.history_
        metadata = module.metadata
        graph = module.graph

    from .models.io import save_model
    signature = {"input": module.input_signature.to_dict(),
                 "output": module.output_signature.to_dict()}
    save_model(graph, out, metadata=metadata, signature=signature)
    write_history_csv(history, out.with_name(out.stem + "_history.csv"))
    echo_config(cfg, out, "train")
    print(f"train[{cfg['task']}]: {summary} -> {out}")
    return EXIT_OK


def cmd_distill(args) -> int:
    cfg = resolve(args, "distill", {
        "student": None, "epochs": 10, "batch_size": 32, "lr": 1e-3,
        "optimizer": "adam", "seed": 0, "patience": 5, "pretrain_epochs": 0,
        "preset": "desk", "timeout": 30.0})
    if cfg["student"] not in ("text", "classifier", "nir"):
        raise UsageError(f"--student must be text|classifier|nir, "
                         f"got {cfg['student']!r}")
    endpoints = [bool(args.teacher_cmd), bool(args.teacher_addr),
                 bool(args.teacher_model)]
    if sum(endpoints) != 1:
        raise UsageError("pass exactly one of --teacher-cmd, --teacher-addr, "
                         "--teacher-model")

    if cfg["student"] == "text":
        if not args.corpus:
            raise UsageError("--student text needs --corpus for the vocabulary")
        corpus = _load_corpus_dir(args.corpus)
        student = build_text_student(corpus.vocab_size, corpus.max_len,
                                     seed=int(cfg["seed"]))
        if args.unlabeled:
            unlabeled = load_bt(args.unlabeled).astype(np.int64)
        else:
            unlabeled = corpus.tokens
        labeled = None
        in_sig = Signature("token_seq", (corpus.max_len,))
        out_sig = Signature("class_dist", (5,))
    else:
        if not args.bundle:
            raise UsageError(f"--student {cfg['student']} needs --bundle")
        bundle = load_bundle(args.bundle)
        shape = bundle.train.cloudy.shape[1:]
        unlabeled = bundle.pool.cloudy if not args.unlabeled \
            else load_bt(args.unlabeled)
        if cfg["student"] == "classifier":
            num_classes = int(bundle.train.labels.max()) + 1
            student = build_classifier(shape, num_classes, cfg["preset"],
                                       seed=int(cfg["seed"]))
            labeled = (bundle.train.cloudy, bundle.train.labels)
            out_sig = Signature("class_dist", (num_classes,))
        else:
            student = build_encoder_decoder(shape, 1, cfg["preset"],
                                            seed=int(cfg["seed"]))
            labeled = (bundle.train.cloudy, bundle.train.nir)
            out_sig = Signature("image", (1,) + shape[1:])
        in_sig = Signature("image", shape)

    if args.teacher_model:
        teacher = _load_solution(args.teacher_model)
    elif args.teacher_cmd:
        teacher = external_teacher(in_sig, out_sig, command=args.teacher_cmd,
                                   timeout=float(cfg["timeout"]))
    else:
        teacher = external_teacher(in_sig, out_sig, address=args.teacher_addr,
                                   timeout=float(cfg["timeout"]))

    dist = Distiller(epochs=int(cfg["epochs"]), batch_size=int(cfg["batch_size"]),
                     lr=float(cfg["lr"]), optimizer=cfg["optimizer"],
                     pretrain_epochs=int(cfg["pretrain_epochs"]),
                     seed=int(cfg["seed"]), patience=int(cfg["patience"]))
    dist.fit(teacher, student, unlabeled,
             labeled=labeled if int(cfg["pretrain_epochs"]) > 0 else None)
    module = dist.to_module("distilled_student", task=str(cfg["student"]))

    out = Path(args.out)
    from .models.io import save_model
    save_model(module.graph, out, metadata=module.metadata,
               signature={"input": module.input_signature.to_dict(),
                          "output": module.output_signature.to_dict()})
    write_history_csv(dist.history_, out.with_name(out.stem + "_history.csv"))
    echo_config(cfg, out, "distill")
    agreement = dist.agreement_
    kind = "top-1 agreement" if dist.loss_kind_ == "cross_entropy" \
        else "neg mse to teacher"
    print(f"distill[{cfg['student']}]: held-out {kind} {agreement:.4f} -> {out}")
    return EXIT_OK


def cmd_prune(args) -> int:
    cfg = resolve(args, "prune", {"fraction": 0.8})
    module = _load_solution(args.model)
    pruned = prune_magnitude(module, float(cfg["fraction"]))
    out = Path(args.out)
    from .models.io import save_model
    save_model(pruned.graph, out, metadata=pruned.metadata,
               signature={"input": pruned.input_signature.to_dict(),
                          "output": pruned.output_signature.to_dict()})
    echo_config(cfg, out, "prune")
    print(f"prune: fraction {cfg['fraction']} -> zeroed "
          f"{zero_fraction(pruned.graph):.4f} of prunable weights -> {out}")
    return EXIT_OK


def cmd_compose(args) -> int:
    paths = [p for p in args.modules.split(",") if p]
    if not paths:
        raise UsageError("--modules needs a comma-separated list of files")
    members = [_load_solution(p) for p in paths]
    pipeline = compose(members)
    out = Path(args.out)
    manifest = {
        "kind": "pipeline",
        "modules": [str(Path(p).resolve().relative_to(out.resolve().parent))
                    if Path(p).resolve().is_relative_to(out.resolve().parent)
                    else str(Path(p).resolve()) for p in paths],
        "signature": {"input": pipeline.input_signature.to_dict(),
                      "output": pipeline.output_signature.to_dict()},
        "members": [m.id for m in pipeline.modules],
    }
    out.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    echo_config({"modules": paths}, out, "compose")
    print(f"compose: {pipeline.input_signature} -> {pipeline.output_signature} "
          f"({len(members)} modules) -> {out}")
    return EXIT_OK


def cmd_registry(args) -> int:
    reg = Registry(args.registry)
    if args.registry_action == "put":
        module = _load_solution(args.model)
        if args.id:
            module.id = args.id
        if args.task_tag:
            module.metadata["task"] = args.task_tag
        path = reg.put(module)
        print(f"registry put: {module.id} -> {path}")
    elif args.registry_action == "get":
        module = reg.get(args.id)
        from .models.io import save_model
        save_model(module.graph, args.out, metadata=module.metadata,
                   signature={"input": module.input_signature.to_dict(),
                              "output": module.output_signature.to_dict()})
        print(f"registry get: {args.id} -> {args.out}")
    else:
        hits = reg.search(args.task_tag)
        for m in hits:
            print(f"{m.id}\t{m.input_signature} -> {m.output_signature}\t"
                  f"{m.metadata.get('task', '')}")
        print(f"registry search: {len(hits)} module(s) tagged "
              f"{args.task_tag!r}")
    return EXIT_OK


def cmd_teacher(args) -> int:
    if bool(args.corpus) == bool(args.model):
        raise UsageError("pass exactly one of --corpus or --model")
    if args.corpus:
        corpus = _load_corpus_dir(args.corpus)
        serve_stdio(corpus.teacher_probs, (corpus.max_len,))
    else:
        module = _load_solution(args.model)
        serve_stdio(module.predict, module.input_signature.dims)
    return EXIT_OK


def cmd_experiment(args) -> int:
    from .bench.scenarios import (S1Artifacts, ScenarioConfig,
                                  s1_classification, s2_sentiment,
                                  s3_nir_reuse, s4_maintainability, s5_pruning)
    scenario = args.scenario.upper()
    if scenario not in ("S1", "S2", "S3", "S4", "S5"):
        raise UsageError(f"unknown scenario {args.scenario!r}")
    overrides = _load_config_section(getattr(args, "config", None), "experiment")
    cfg = ScenarioConfig.from_dict({**overrides} if overrides else {})
    if args.seeds:
        cfg.seeds = tuple(int(s) for s in args.seeds.split(","))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if scenario == "S1":
        if not args.bundle:
            raise UsageError("S1 needs --bundle")
        report, artifacts = s1_classification(load_bundle(args.bundle), cfg)
        artifacts.save(out)
    elif scenario == "S2":
        if not args.corpus:
            raise UsageError("S2 needs --corpus")
        corpus = _load_corpus_dir(args.corpus)
        command = args.teacher_cmd or shlex.join(
            [sys.executable, "-m", "modkit", "teacher", "--stdio",
             "--corpus", str(args.corpus)])
        teacher = external_teacher(
            Signature("token_seq", (corpus.max_len,)),
            Signature("class_dist", (5,)), command=command,
            batch_size=cfg.teacher_batch, module_id="teacher")
        try:
            report = s2_sentiment(corpus, teacher, cfg)
        finally:
            teacher.client.close()
    else:
        if not args.from_dir:
            raise UsageError(f"{scenario} needs --from (an S1 output directory)")
        if not args.bundle:
            raise UsageError(f"{scenario} needs --bundle")
        bundle = load_bundle(args.bundle)
        if scenario == "S3":
            registry = Registry(Path(args.from_dir) / "solutions")
            report = s3_nir_reuse(bundle, registry, cfg)
        else:
            artifacts = S1Artifacts.load(args.from_dir)
            if scenario == "S4":
                report = s4_maintainability(bundle, artifacts, cfg,
                                            sigma=args.sigma)
            else:
                report = s5_pruning(bundle, artifacts, cfg,
                                    fraction=args.fraction)

    report.write(out)
    echo_config({"scenario": scenario, "config": cfg.to_dict(),
                 "bundle": args.bundle, "corpus": args.corpus,
                 "from": args.from_dir, "sigma": args.sigma,
                 "fraction": args.fraction}, out, "experiment")
    for a in report.assertions:
        print(f"[{'PASS' if a.passed else 'FAIL'}] {a.name}: {a.detail}")
    print(f"experiment {scenario}: {len(report.rows)} metric rows -> {out}")
    return EXIT_OK if report.all_passed else EXIT_ASSERTION


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="modkit",
        description="Build, compose, distill, prune, and benchmark small "
                    "neural-network modules.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="generate a SynthSAT dataset bundle")
    p.add_argument("--n", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--labeled-frac", dest="labeled_frac", type=float)
    p.add_argument("--cloud-opacity", dest="cloud_opacity", type=float)
    p.add_argument("--cloud-threshold", dest="cloud_threshold", type=float)
    p.add_argument("--cloud-octaves", dest="cloud_octaves", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_datagen)

    p = sub.add_parser("gen-corpus", help="generate the sentiment corpus")
    p.add_argument("--vocab", type=int)
    p.add_argument("--docs", type=int)
    p.add_argument("--max-len", dest="max_len", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_corpus)

    p = sub.add_parser("train", help="train a classifier, denoiser, or NIR model")
    p.add_argument("--task")
    p.add_argument("--bundle", required=True)
    p.add_argument("--preset")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--optimizer")
    p.add_argument("--seed", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("distill", help="distill a teacher into a student")
    p.add_argument("--teacher-cmd", dest="teacher_cmd")
    p.add_argument("--teacher-addr", dest="teacher_addr")
    p.add_argument("--teacher-model", dest="teacher_model")
    p.add_argument("--student")
    p.add_argument("--corpus")
    p.add_argument("--bundle")
    p.add_argument("--unlabeled")
    p.add_argument("--pretrain-epochs", dest="pretrain_epochs", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--optimizer")
    p.add_argument("--seed", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--timeout", type=float)
    p.add_argument("--preset")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_distill)

    p = sub.add_parser("prune", help="magnitude-prune a model")
    p.add_argument("--model", required=True)
    p.add_argument("--fraction", type=float)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_prune)

    p = sub.add_parser("compose", help="compose modules into a pipeline")
    p.add_argument("--modules", required=True,
                   help="comma-separated .modk / pipeline .json paths")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_compose)

    p = sub.add_parser("registry", help="local module registry")
    rsub = p.add_subparsers(dest="registry_action", required=True)
    rp = rsub.add_parser("put")
    rp.add_argument("--registry", required=True)
    rp.add_argument("--model", required=True)
    rp.add_argument("--id")
    rp.add_argument("--task-tag", dest="task_tag")
    rp.set_defaults(fn=cmd_registry)
    rg = rsub.add_parser("get")
    rg.add_argument("--registry", required=True)
    rg.add_argument("--id", required=True)
    rg.add_argument("--out", required=True)
    rg.set_defaults(fn=cmd_registry)
    rs = rsub.add_parser("search")
    rs.add_argument("--registry", required=True)
    rs.add_argument("--task-tag", dest="task_tag", required=True)
    rs.set_defaults(fn=cmd_registry)

    p = sub.add_parser("teacher", help="serve a teacher over the wire protocol")
    p.add_argument("--stdio", action="store_true",
                   help="serve on stdin/stdout (the only transport here)")
    p.add_argument("--corpus")
    p.add_argument("--model")
    p.set_defaults(fn=cmd_teacher)

    p = sub.add_parser("experiment", help="run scenario S1..S5")
    p.add_argument("scenario")
    p.add_argument("--bundle")
    p.add_argument("--corpus")
    p.add_argument("--from", dest="from_dir")
    p.add_argument("--teacher-cmd", dest="teacher_cmd")
    p.add_argument("--seeds")
    p.add_argument("--sigma", type=float)
    p.add_argument("--fraction", type=float)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_experiment)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModkitError, OSError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
