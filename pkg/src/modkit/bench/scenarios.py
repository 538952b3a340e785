"""The five scripted experiment scenarios.

Each scenario is a pure function of (bundle/corpus, config, seeds): it
trains its solutions, measures them, records directional assertions, and
returns an ExperimentReport plus reusable artifacts. Assertion failures
never abort a run; they are recorded so callers (the CLI) can gate on
them. Latency rows are exempt from bit-reproducibility and carry the
stability flag instead.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..data.bundle import DatasetBundle
from ..data.corpus import SentimentCorpus
from ..data.corrupt import add_gaussian_noise
from ..models import build_classifier, build_encoder_decoder, build_text_student
from ..pipeline import MlModule, Pipeline, Registry, compose, swap
from ..training import Distiller, SupervisedTrainer, prune_magnitude, train_denoiser
from .latency import bench_latency
from .metrics import mse_metric, one_off_accuracy, top1_accuracy
from .report import ExperimentReport

S1_SOLUTIONS = ("monolithic", "modular_I", "modular_II",
                "distilled_monolithic", "distilled_modular_I",
                "distilled_modular_II")
S3_SOLUTIONS = ("monolithic_nir", "modular_nir",
                "distilled_monolithic_nir", "distilled_modular_nir")


@dataclass
class ScenarioConfig:
    seeds: tuple = (1, 2, 3)
    classifier_epochs: int = 25
    denoiser_epochs: int = 10
    nir_epochs: int = 12
    distill_epochs: int = 10
    pretrain_epochs: int = 5
    batch_size: int = 32
    lr: float = 1e-3
    optimizer: str = "adam"
    patience: int = 5
    latency_repeats: int = 5
    latency_warmup: int = 1
    latency_batch: int = 64
    sentiment_eval_items: int = 5000
    teacher_batch: int = 128
    noise_sigma: float = 0.1
    prune_fraction: float = 0.8
    s3_pool_items: int = 600
    s3_distill_epochs: int = 6
    s4_retrain_epochs: int = 6

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        if "seeds" in d:
            d["seeds"] = tuple(int(s) for s in d["seeds"])
        return cls(**d)

    def trainer_args(self, **overrides) -> dict:
        args = {"batch_size": self.batch_size, "lr": self.lr,
                "optimizer": self.optimizer, "patience": self.patience}
        args.update(overrides)
        return args


@dataclass
class S1Artifacts:
    """Component modules trained by S1, reusable by S3/S4/S5."""
    seeds: tuple
    modules: dict = field(default_factory=dict)       # (seed, name) -> MlModule
    baseline_top1: dict = field(default_factory=dict)  # (seed, solution) -> float

    COMPONENTS = ("monolithic", "denoiser", "classifier_I", "classifier_II",
                  "student_monolithic", "student_modular_I", "student_modular_II")

    def module(self, seed: int, name: str) -> MlModule:
        return self.modules[(seed, name)]

    def solution(self, seed: int, name: str) -> MlModule:
        if name == "monolithic":
            return self.module(seed, "monolithic")
        if name == "modular_I":
            return compose([self.module(seed, "denoiser"),
                            self.module(seed, "classifier_I")])
        if name == "modular_II":
            return compose([self.module(seed, "denoiser"),
                            self.module(seed, "classifier_II")])
        if name.startswith("distilled_"):
            return self.module(seed, "student_" + name[len("distilled_"):])
        raise KeyError(f"unknown solution {name!r}")

    def save(self, outdir):
        out = Path(outdir)
        reg = Registry(out / "solutions")
        for (seed, name), module in sorted(self.modules.items()):
            stored = MlModule(f"{name}--seed{seed}", module.input_signature,
                              module.output_signature, module._predict_fn,
                              module.metadata, graph=module.graph)
            reg.put(stored)
        manifest = {
            "seeds": list(self.seeds),
            "baseline_top1": {f"{seed}:{sol}": v
                              for (seed, sol), v in self.baseline_top1.items()},
        }
        (out / "artifacts.json").write_text(json.dumps(manifest, indent=2,
                                                       sort_keys=True))

    @classmethod
    def load(cls, indir) -> "S1Artifacts":
        src = Path(indir)
        manifest = json.loads((src / "artifacts.json").read_text())
        seeds = tuple(manifest["seeds"])
        reg = Registry(src / "solutions")
        art = cls(seeds=seeds)
        for seed in seeds:
            for name in cls.COMPONENTS:
                module = reg.get(f"{name}--seed{seed}")
                module.id = name
                art.modules[(seed, name)] = module
        art.baseline_top1 = {
            (int(k.split(":")[0]), k.split(":")[1]): v
            for k, v in manifest["baseline_top1"].items()}
        return art


def _latency(report: ExperimentReport, cfg: ScenarioConfig, solution,
             name: str, inputs, seed: int):
    res = bench_latency(solution, inputs, repeats=cfg.latency_repeats,
                        warmup=cfg.latency_warmup,
                        batch_size=cfg.latency_batch)
    report.add(name, "latency_s", res.seconds, res.items, seed)
    if not res.stable:
        report.notes.append(f"latency for {name} (seed {seed}) unstable: "
                            f"spread {res.spread:.2f}")
    return res


def _figure_rows(report: ExperimentReport, solutions, metric: str):
    rows = []
    for sol in solutions:
        vals = report.values(sol, metric)
        rows.append({"solution": sol, "mean": float(np.mean(vals)),
                     "std": float(np.std(vals))})
    return rows


# -- S1: cloudy classification, six solutions ---------------------------------

def _train_s1_seed(bundle: DatasetBundle, cfg: ScenarioConfig, seed: int) -> dict:
    tr, va, pool = bundle.train, bundle.val, bundle.pool
    num_classes = int(bundle.train.labels.max()) + 1
    shape = tr.cloudy.shape[1:]

    mono_tr = SupervisedTrainer(epochs=cfg.classifier_epochs, seed=seed,
                                **cfg.trainer_args())
    mono_tr.fit(build_classifier(shape, num_classes, seed=seed),
                tr.cloudy, tr.labels, va.cloudy, va.labels)
    monolithic = mono_tr.to_module("monolithic", task="classification",
                                   data_provenance="cloudy-labeled")

    denoiser, _ = train_denoiser(
        build_encoder_decoder(shape, shape[0], seed=seed + 100),
        pool.cloudy, pool.clean, module_id="denoiser",
        epochs=cfg.denoiser_epochs, seed=seed, **cfg.trainer_args())

    den_tr = denoiser.predict(tr.cloudy)
    den_va = denoiser.predict(va.cloudy)
    clf1_tr = SupervisedTrainer(epochs=cfg.classifier_epochs, seed=seed,
                                **cfg.trainer_args())
    clf1_tr.fit(build_classifier(shape, num_classes, seed=seed + 200),
                den_tr, tr.labels, den_va, va.labels)
    classifier_i = clf1_tr.to_module("classifier_I", task="classification",
                                     data_provenance="denoised-cloudy-labeled")

    clf2_tr = SupervisedTrainer(epochs=cfg.classifier_epochs, seed=seed,
                                **cfg.trainer_args())
    clf2_tr.fit(build_classifier(shape, num_classes, seed=seed + 300),
                tr.clean, tr.labels, va.clean, va.labels)
    classifier_ii = clf2_tr.to_module("classifier_II", task="classification",
                                      data_provenance="clean-labeled")

    modular_i = compose([denoiser, classifier_i])
    modular_ii = compose([denoiser, classifier_ii])

    students = {}
    for name, teacher, pretrain in (
            ("student_monolithic", monolithic, True),
            ("student_modular_I", modular_i, True),
            ("student_modular_II", modular_ii, False)):
        dist = Distiller(epochs=cfg.distill_epochs,
                         pretrain_epochs=cfg.pretrain_epochs if pretrain else 0,
                         seed=seed, **cfg.trainer_args())
        dist.fit(teacher, build_classifier(shape, num_classes,
                                           seed=seed + 400 + len(students)),
                 pool.cloudy,
                 labeled=(tr.cloudy, tr.labels) if pretrain else None)
        students[name] = dist.to_module(
            name, task="classification",
            data_provenance=("cloudy-labeled+unlabeled" if pretrain
                             else "unlabeled-only"))
    return {"monolithic": monolithic, "denoiser": denoiser,
            "classifier_I": classifier_i, "classifier_II": classifier_ii,
            **students}


def s1_classification(bundle: DatasetBundle, cfg: ScenarioConfig):
    report = ExperimentReport("S1", {"scenario_config": cfg.to_dict(),
                                     "bundle_manifest": bundle.manifest})
    art = S1Artifacts(seeds=tuple(cfg.seeds))
    test = bundle.test
    for seed in cfg.seeds:
        comps = _train_s1_seed(bundle, cfg, seed)
        for name, module in comps.items():
            art.modules[(seed, name)] = module
        for sol in S1_SOLUTIONS:
            solution = art.solution(seed, sol)
            acc = top1_accuracy(solution.predict(test.cloudy), test.labels)
            report.add(sol, "top1", acc, len(test), seed)
            art.baseline_top1[(seed, sol)] = acc
            _latency(report, cfg, solution, sol, test.cloudy, seed)

    gaps = [art.baseline_top1[(s, "modular_I")]
            - art.baseline_top1[(s, "monolithic")] for s in cfg.seeds]
    report.check("modular_I mean top1 > monolithic mean top1",
                 report.mean("modular_I", "top1") > report.mean("monolithic", "top1"),
                 f"means {report.mean('modular_I', 'top1'):.4f} vs "
                 f"{report.mean('monolithic', 'top1'):.4f}")
    report.check("modular_I > monolithic per seed",
                 all(g > 0 for g in gaps),
                 f"per-seed gaps {[f'{g:+.4f}' for g in gaps]}")
    prov = [art.module(s, "classifier_II").metadata.get("data_provenance")
            for s in cfg.seeds]
    report.check("modular_II classifier trained without cloudy labeled data",
                 all(p == "clean-labeled" for p in prov),
                 f"provenances {prov}")
    report.figures["fig8_analog"] = _figure_rows(report, S1_SOLUTIONS, "top1")
    report.figures["fig10_analog"] = _figure_rows(report, S1_SOLUTIONS,
                                                  "latency_s")
    return report, art


# -- S2: sentiment distillation through the teacher endpoint -------------------

def s2_sentiment(corpus: SentimentCorpus, teacher: MlModule,
                 cfg: ScenarioConfig) -> ExperimentReport:
    report = ExperimentReport("S2", {"scenario_config": cfg.to_dict(),
                                     "corpus": corpus.params})
    report.notes.append(
        "teacher latency includes endpoint round-trip overhead; the paper's "
        "pretrained-teacher hardware profile is not replicable at desk scale")
    n_eval = cfg.sentiment_eval_items
    if len(corpus) < n_eval + 1000:
        raise ValueError(f"corpus too small: {len(corpus)} docs for "
                         f"{n_eval} eval items")
    eval_x = corpus.tokens[-n_eval:]
    eval_y = corpus.labels[-n_eval:]
    pool_x = corpus.tokens[:len(corpus) - n_eval]

    teacher_preds = teacher.predict(eval_x)
    teacher_acc = one_off_accuracy(teacher_preds, eval_y)

    for seed in cfg.seeds:
        dist = Distiller(epochs=cfg.distill_epochs, seed=seed,
                         **cfg.trainer_args())
        dist.fit(teacher, build_text_student(corpus.vocab_size, corpus.max_len,
                                             seed=seed + 500), pool_x)
        student = dist.to_module("distilled_student", task="sentiment",
                                 data_provenance="unlabeled-only")
        acc = one_off_accuracy(student.predict(eval_x), eval_y)
        report.add("distilled_student", "one_off", acc, n_eval, seed)
        report.add("teacher", "one_off", teacher_acc, n_eval, seed)
        s_lat = _latency(report, cfg, student, "distilled_student", eval_x, seed)
        t_lat = _latency(report, cfg, teacher, "teacher", eval_x, seed)
        report.check(f"student faster than teacher endpoint (seed {seed})",
                     s_lat.seconds < t_lat.seconds,
                     f"{s_lat.seconds:.3f}s vs {t_lat.seconds:.3f}s")

    gap = report.mean("teacher", "one_off") - report.mean("distilled_student",
                                                          "one_off")
    report.check("student one-off within 10 points of teacher",
                 gap <= 0.10, f"teacher - student = {gap:.4f}")
    report.figures["fig7_analog"] = _figure_rows(
        report, ("teacher", "distilled_student"), "one_off")
    report.figures["fig9_analog"] = _figure_rows(
        report, ("teacher", "distilled_student"), "latency_s")
    return report


# -- S3: NIR prediction reusing the registered denoiser ------------------------

def s3_nir_reuse(bundle: DatasetBundle, registry: Registry,
                 cfg: ScenarioConfig) -> ExperimentReport:
    report = ExperimentReport("S3", {"scenario_config": cfg.to_dict(),
                                     "bundle_manifest": bundle.manifest})
    tr, va, test, pool = bundle.train, bundle.val, bundle.test, bundle.pool
    shape = tr.cloudy.shape[1:]
    pool_x = pool.cloudy[:cfg.s3_pool_items]
    reused_ok = []
    for seed in cfg.seeds:
        denoiser = registry.get(f"denoiser--seed{seed}")

        mono_tr = SupervisedTrainer(epochs=cfg.nir_epochs, loss="mse",
                                    seed=seed, **cfg.trainer_args())
        mono_tr.fit(build_encoder_decoder(shape, 1, seed=seed + 600),
                    tr.cloudy, tr.nir, va.cloudy, va.nir)
        mono = mono_tr.to_module("monolithic_nir", task="nir-prediction",
                                 data_provenance="cloudy-labeled")

        den_tr = denoiser.predict(tr.cloudy)
        den_va = denoiser.predict(va.cloudy)
        stage2_tr = SupervisedTrainer(epochs=cfg.nir_epochs, loss="mse",
                                      seed=seed, **cfg.trainer_args())
        stage2_tr.fit(build_encoder_decoder(shape, 1, seed=seed + 700),
                      den_tr, tr.nir, den_va, va.nir)
        stage2 = stage2_tr.to_module("nir_stage2", task="nir-prediction",
                                     data_provenance="denoised-cloudy-labeled")
        modular = compose([denoiser, stage2])

        solutions = {"monolithic_nir": mono, "modular_nir": modular}
        for name, teacher in (("distilled_monolithic_nir", mono),
                              ("distilled_modular_nir", modular)):
            dist = Distiller(epochs=cfg.s3_distill_epochs,
                             pretrain_epochs=cfg.pretrain_epochs, seed=seed,
                             **cfg.trainer_args())
            dist.fit(teacher, build_encoder_decoder(shape, 1,
                                                    seed=seed + 800),
                     pool_x, labeled=(tr.cloudy, tr.nir))
            solutions[name] = dist.to_module(name, task="nir-prediction")

        for name, solution in solutions.items():
            mse = mse_metric(solution.predict(test.cloudy), test.nir)
            report.add(name, "mse", mse, len(test), seed)
            _latency(report, cfg, solution, name, test.cloudy, seed)

        fresh = registry.get(f"denoiser--seed{seed}")
        reused_ok.append(denoiser.graph.weights_equal(fresh.graph))

    report.check("modular mean mse < monolithic mean mse",
                 report.mean("modular_nir", "mse")
                 < report.mean("monolithic_nir", "mse"),
                 f"{report.mean('modular_nir', 'mse'):.5f} vs "
                 f"{report.mean('monolithic_nir', 'mse'):.5f}")
    report.check("reused denoiser weights bit-identical to registry copy",
                 all(reused_ok), f"per-seed {reused_ok}")
    report.figures["fig11_analog"] = _figure_rows(report, S3_SOLUTIONS, "mse")
    report.figures["fig12_analog"] = _figure_rows(report, S3_SOLUTIONS,
                                                  "latency_s")
    return report


# -- S4: maintainability under a changed requirement (noise) -------------------

def s4_maintainability(bundle: DatasetBundle, artifacts: S1Artifacts,
                       cfg: ScenarioConfig,
                       sigma: float | None = None) -> ExperimentReport:
    sigma = cfg.noise_sigma if sigma is None else sigma
    report = ExperimentReport("S4", {"scenario_config": cfg.to_dict(),
                                     "sigma": sigma,
                                     "bundle_manifest": bundle.manifest})
    test, pool = bundle.test, bundle.pool
    drops_mono, drops_mod, ratios = [], [], []
    for seed in artifacts.seeds:
        noisy_test = add_gaussian_noise(test.cloudy, sigma, seed=7700 + seed)
        noisy_pool = add_gaussian_noise(pool.cloudy, sigma, seed=7800 + seed)

        mono = artifacts.solution(seed, "monolithic")
        modular = artifacts.solution(seed, "modular_I")
        classifier = artifacts.module(seed, "classifier_I")

        acc_mono = top1_accuracy(mono.predict(noisy_test), test.labels)
        acc_mod = top1_accuracy(modular.predict(noisy_test), test.labels)

        # update the cloud-removal stage only, with noisy unlabeled pairs
        robust_denoiser, _ = train_denoiser(
            artifacts.module(seed, "denoiser").graph, noisy_pool, pool.clean,
            module_id="denoiser_noise_robust", epochs=cfg.s4_retrain_epochs,
            seed=seed + 900, **cfg.trainer_args())
        improved = swap(modular, 0, robust_denoiser)
        acc_imp = top1_accuracy(improved.predict(noisy_test), test.labels)

        report.add("monolithic", "top1", acc_mono, len(test), seed)
        report.add("modular_I", "top1", acc_mod, len(test), seed)
        report.add("modular_improved", "top1", acc_imp, len(test), seed)
        drops_mono.append(artifacts.baseline_top1[(seed, "monolithic")] - acc_mono)
        drops_mod.append(artifacts.baseline_top1[(seed, "modular_I")] - acc_mod)
        ratios.append(acc_imp / max(acc_mod, 1e-9))

        same = improved.modules[1].graph.weights_equal(classifier.graph)
        report.check(f"classifier untouched by the swap (seed {seed})", same,
                     "bit-identical weights" if same else "weights changed")

    report.check("monolithic drops >= 10 points under noise",
                 float(np.mean(drops_mono)) >= 0.10,
                 f"mean drop {np.mean(drops_mono):.4f} "
                 f"(per-seed {[f'{d:.3f}' for d in drops_mono]})")
    report.check("modular_I drops >= 10 points under noise",
                 float(np.mean(drops_mod)) >= 0.10,
                 f"mean drop {np.mean(drops_mod):.4f} "
                 f"(per-seed {[f'{d:.3f}' for d in drops_mod]})")
    report.check("improved modular >= 1.5x degraded modular",
                 report.mean("modular_improved", "top1")
                 >= 1.5 * report.mean("modular_I", "top1"),
                 f"ratio {report.mean('modular_improved', 'top1') / max(report.mean('modular_I', 'top1'), 1e-9):.2f} "
                 f"(per-seed {[f'{r:.2f}' for r in ratios]})")
    report.figures["fig14_analog"] = _figure_rows(
        report, ("monolithic", "modular_I", "modular_improved"), "top1")
    return report


# -- S5: magnitude pruning across the S1 solutions ------------------------------

def s5_pruning(bundle: DatasetBundle, artifacts: S1Artifacts,
               cfg: ScenarioConfig,
               fraction: float | None = None) -> ExperimentReport:
    fraction = cfg.prune_fraction if fraction is None else fraction
    report = ExperimentReport("S5", {"scenario_config": cfg.to_dict(),
                                     "fraction": fraction,
                                     "bundle_manifest": bundle.manifest})
    report.notes.append("no fine-tuning after pruning; the comparison prunes "
                        "trained weights as-is")
    test = bundle.test
    deltas = []
    for seed in artifacts.seeds:
        for sol in S1_SOLUTIONS:
            solution = artifacts.solution(seed, sol)
            before = top1_accuracy(solution.predict(test.cloudy), test.labels)
            if isinstance(solution, Pipeline):
                pruned = compose([prune_magnitude(m, fraction)
                                  for m in solution.modules])
            else:
                pruned = prune_magnitude(solution, fraction)
            after = top1_accuracy(pruned.predict(test.cloudy), test.labels)
            report.add(sol, "top1", before, len(test), seed)
            report.add(f"{sol}_pruned", "top1", after, len(test), seed)
            deltas.append({"solution": sol, "seed": seed,
                           "top1_before": before, "top1_after": after,
                           "delta": after - before})
    report.figures["s5_pruning_deltas"] = deltas
    report.check("every solution has a before/after delta row",
                 len(deltas) == len(artifacts.seeds) * len(S1_SOLUTIONS),
                 f"{len(deltas)} delta rows")
    return report
