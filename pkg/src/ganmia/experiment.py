"""Experiment configuration and the end-to-end pipeline.

A run r derives every stage seed from (master_seed, "run", r, stage), so
the staged CLI subcommands and the all-in-one ``run`` produce identical
artifacts. Per-run outputs live under ``<out>/runs/run_NN/``; aggregated
results are written at the top level via the atomic-rename helpers.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .attacks import (
    ATTACK_REGISTRY,
    AttackContext,
    AttackScores,
    load_scores_csv,
    make_attack,
    save_scores_csv,
)
from .bitmatrix import BitMatrix, atomic_write_text, concat_rows, load_csv, save_csv
from .datagen import (
    DatasetSplit,
    SnpDistributionSpec,
    SplitPlan,
    sample_distribution,
    split_dataset,
)
from .density import Pca
from .evaluation import (
    REPORT_FPR_GRID,
    EvalReport,
    build_report,
    emit_report,
    memorization_check,
    mmd2_unbiased,
    mre_gap,
    nearest_synthetic,
    permutation_pvalue,
)
from .generators import (
    GanTrainConfig,
    OracleMixtureGenerator,
    save_target,
    train_vanilla_gan,
)
from .rng import derive_seed


@dataclass
class DataConfig:
    dimension: int = 200
    subpopulations: int = 3
    beta_a: float = 0.8
    beta_b: float = 0.8


@dataclass
class TargetConfig:
    kind: str = "oracle"  # "oracle" | "vanilla_gan"
    beta: float = 0.5
    latent_dim: int = 32
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.kind not in ("oracle", "vanilla_gan"):
            raise ValueError(f"unknown target kind {self.kind!r}")


@dataclass
class AttackSpec:
    name: str
    params: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitPlan = field(default_factory=lambda: SplitPlan(500, 400, 200, 200))
    target: TargetConfig = field(default_factory=TargetConfig)
    attacks: list[AttackSpec] = field(default_factory=list)
    detector: dict = field(default_factory=dict)  # base params for detector/adis
    n_synthetic: int | None = None  # defaults to the reference size
    fpr_grid: tuple[float, ...] = REPORT_FPR_GRID
    n_runs: int = 11
    master_seed: int = 0
    output_dir: str = "results"

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        names = [a.name for a in self.attacks]
        if len(set(names)) != len(names):
            raise ValueError("attack names must be unique")
        for spec in self.attacks:
            try:
                make_attack(spec.name, self.attack_params(spec))
            except TypeError as exc:
                raise ValueError(f"bad parameters for attack {spec.name!r}: {exc}") from exc

    def attack_params(self, spec: AttackSpec) -> dict:
        """Classifier attacks inherit the shared detector training section."""
        if spec.name in ("detector", "adis"):
            return {**self.detector, **spec.params}
        return dict(spec.params)

    @property
    def synthetic_size(self) -> int:
        return self.n_synthetic or self.split.reference_size

    def to_dict(self) -> dict:
        return {
            "data": asdict(self.data),
            "split": self.split.to_dict(),
            "target": asdict(self.target),
            # json round trip canonicalizes tuples to lists in params
            "attacks": [
                {"name": a.name, "params": json.loads(json.dumps(a.params))}
                for a in self.attacks
            ],
            "detector": json.loads(json.dumps(self.detector)),
            "n_synthetic": self.n_synthetic,
            "fpr_grid": list(self.fpr_grid),
            "n_runs": self.n_runs,
            "master_seed": self.master_seed,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        return cls(
            data=DataConfig(**doc.get("data", {})),
            split=SplitPlan.from_dict(doc["split"]) if "split" in doc else SplitPlan(500, 400, 200, 200),
            target=TargetConfig(**doc.get("target", {})),
            attacks=[
                AttackSpec(a["name"], dict(a.get("params", {})))
                for a in doc.get("attacks", [])
            ],
            detector=dict(doc.get("detector", {})),
            n_synthetic=doc.get("n_synthetic"),
            fpr_grid=tuple(doc.get("fpr_grid", REPORT_FPR_GRID)),
            n_runs=int(doc.get("n_runs", 11)),
            master_seed=int(doc.get("master_seed", 0)),
            output_dir=doc.get("output_dir", "results"),
        )


def default_config() -> ExperimentConfig:
    """Desk-scale profile: a full 11-run experiment finishes in minutes."""
    return ExperimentConfig(
        data=DataConfig(dimension=200),
        split=SplitPlan(500, 400, 200, 200),
        target=TargetConfig(kind="oracle", beta=0.5),
        attacks=[
            AttackSpec("one_way"),
            AttackSpec("two_way"),
            AttackSpec("weighted"),
            AttackSpec("robust_homer"),
            AttackSpec("detector"),
            AttackSpec(
                "adis",
                {"holdout": 100, "pca_components": 50, "epochs": 20},
            ),
            AttackSpec("domias", {"pca_components": 50}),
        ],
        detector={"epochs": 60},
        n_runs=11,
        master_seed=7,
    )


def load_config(path: str) -> ExperimentConfig:
    with open(path) as handle:
        return ExperimentConfig.from_dict(json.load(handle))


def save_config(config: ExperimentConfig, path: str) -> None:
    atomic_write_text(path, json.dumps(config.to_dict(), indent=2) + "\n")


def population_spec(config: ExperimentConfig) -> SnpDistributionSpec:
    """One population draw per experiment, shared by all runs."""
    return SnpDistributionSpec.generate(
        config.data.dimension,
        config.data.subpopulations,
        seed=derive_seed(config.master_seed, "population"),
        beta_a=config.data.beta_a,
        beta_b=config.data.beta_b,
    )


def run_dir(out_dir: str, run_index: int) -> str:
    return os.path.join(out_dir, "runs", f"run_{run_index:02d}")


def stage_gen_data(config: ExperimentConfig, run_index: int, out_dir: str):
    """Sample the per-run data pool and split it into roles; persist both."""
    spec = population_spec(config)
    pool = sample_distribution(
        spec,
        config.split.rows_needed,
        seed=derive_seed(config.master_seed, "run", run_index, "pool"),
    )
    split = split_dataset(
        pool, config.split, seed=derive_seed(config.master_seed, "run", run_index, "split")
    )
    rdir = run_dir(out_dir, run_index)
    os.makedirs(rdir, exist_ok=True)
    save_csv(pool, os.path.join(rdir, "dataset.csv"))
    atomic_write_text(
        os.path.join(rdir, "split.json"), json.dumps(split.indices_dict()) + "\n"
    )
    candidates = concat_rows([split.test_members, split.test_nonmembers])
    labels = [1] * split.test_members.n_rows + [0] * split.test_nonmembers.n_rows
    save_csv(candidates, os.path.join(rdir, "candidates.csv"))
    atomic_write_text(
        os.path.join(rdir, "labels.csv"), "\n".join(str(v) for v in labels) + "\n"
    )
    return pool, split


def load_split(config: ExperimentConfig, rdir: str):
    pool = load_csv(os.path.join(rdir, "dataset.csv"))
    with open(os.path.join(rdir, "split.json")) as handle:
        idx = json.load(handle)
    return pool, DatasetSplit(
        train=pool.take(idx["train"]),
        reference=pool.take(idx["reference"]),
        test_members=pool.take(idx["members"]),
        test_nonmembers=pool.take(idx["nonmembers"]),
        train_idx=np.array(idx["train"]),
        reference_idx=np.array(idx["reference"]),
        member_idx=np.array(idx["members"]),
        nonmember_idx=np.array(idx["nonmembers"]),
    )


def stage_train_target(config: ExperimentConfig, run_index: int, out_dir: str, split):
    """Build or train the target generator on the run's train rows."""
    seed = derive_seed(config.master_seed, "run", run_index, "target")
    if config.target.kind == "oracle":
        target = OracleMixtureGenerator(
            beta=config.target.beta,
            train_set=split.train,
            base_spec=population_spec(config),
            seed=seed,
        )
    else:
        target = train_vanilla_gan(
            split.train,
            GanTrainConfig(
                latent_dim=config.target.latent_dim,
                epochs=config.target.epochs,
                batch_size=config.target.batch_size,
                learning_rate=config.target.learning_rate,
            ),
            seed=seed,
        )
    save_target(target, os.path.join(run_dir(out_dir, run_index), "target"))
    return target


def build_context(config: ExperimentConfig, run_index: int, target, split) -> AttackContext:
    x_g = target.sample(
        config.synthetic_size,
        seed=derive_seed(config.master_seed, "run", run_index, "xg"),
    )
    return AttackContext(
        x_g=x_g,
        x_r=split.reference,
        seed=derive_seed(config.master_seed, "run", run_index, "attacks"),
    )


def stage_attack(
    config: ExperimentConfig,
    run_index: int,
    out_dir: str,
    target,
    split,
    candidates: BitMatrix | None = None,
    labels=None,
) -> dict[str, AttackScores]:
    ctx = build_context(config, run_index, target, split)
    if candidates is None:
        candidates = concat_rows([split.test_members, split.test_nonmembers])
        labels = np.concatenate(
            [np.ones(split.test_members.n_rows), np.zeros(split.test_nonmembers.n_rows)]
        )
    rdir = run_dir(out_dir, run_index)
    results: dict[str, AttackScores] = {}
    for spec in config.attacks:
        attack = make_attack(spec.name, config.attack_params(spec))
        attack.fit(ctx, generator=target)
        scores = AttackScores(
            attack.score_samples(candidates), labels, spec.name, run_id=run_index
        )
        save_scores_csv(scores, os.path.join(rdir, f"scores_{spec.name}.csv"))
        results[spec.name] = scores
    return results


def _pca_diagnostics(split, target, config: ExperimentConfig, run_index: int) -> dict:
    """Scree + top-component scatter comparing train rows to synthetic rows."""
    train = split.train.to_array().astype(np.float64)
    syn = target.sample(
        min(split.train.n_rows, 500),
        seed=derive_seed(config.master_seed, "run", run_index, "diag-syn"),
    ).to_array().astype(np.float64)
    k = min(10, train.shape[1], train.shape[0] - 1)
    pca = Pca(n_components=k).fit(train)
    z_train = pca.transform(train)
    z_syn = pca.transform(syn)
    n_scatter = min(6, k)
    return {
        "scree": [
            [i + 1, float(pca.explained_variance_[i]), float(np.var(z_syn[:, i], ddof=1))]
            for i in range(k)
        ],
        "scatter": {
            "train": z_train[:200, :n_scatter].tolist(),
            "synthetic": z_syn[:200, :n_scatter].tolist(),
        },
        "n_scatter": n_scatter,
    }


def evaluate_runs(
    config: ExperimentConfig,
    per_run_scores: list[dict[str, AttackScores]],
    failures: list[dict],
    extra_metadata: dict | None = None,
) -> EvalReport:
    by_attack: dict[str, list[AttackScores]] = {a.name: [] for a in config.attacks}
    for run_scores in per_run_scores:
        for name, scores in run_scores.items():
            by_attack[name].append(scores)
    by_attack = {name: runs for name, runs in by_attack.items() if runs}
    metadata = {
        "dataset": f"snp-synthetic-d{config.data.dimension}",
        "master_seed": config.master_seed,
        "n_runs_configured": config.n_runs,
        "n_runs_completed": len(per_run_scores),
        "target": asdict(config.target),
        "failures": failures,
    }
    if extra_metadata:
        metadata.update(extra_metadata)
    return build_report(by_attack, config.fpr_grid, metadata)


def run_experiment(config: ExperimentConfig, out_dir: str | None = None) -> EvalReport:
    """Full pipeline: per-run generate/train/attack, then aggregate and emit.

    A failing run is recorded in the failure manifest and the remaining
    runs still execute; the report covers the completed runs.
    """
    out_dir = out_dir or config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    save_config(config, os.path.join(out_dir, "config.json"))
    per_run_scores: list[dict[str, AttackScores]] = []
    failures: list[dict] = []
    diagnostics = None
    for run_index in range(1, config.n_runs + 1):
        stage = "gen-data"
        try:
            _, split = stage_gen_data(config, run_index, out_dir)
            stage = "train-target"
            target = stage_train_target(config, run_index, out_dir, split)
            stage = "attack"
            per_run_scores.append(stage_attack(config, run_index, out_dir, target, split))
            if diagnostics is None:
                diagnostics = _pca_diagnostics(split, target, config, run_index)
        except Exception as exc:  # noqa: BLE001 - failures are reported, not fatal
            failures.append({"run": run_index, "stage": stage, "error": str(exc)})
    report = evaluate_runs(
        config,
        per_run_scores,
        failures,
        {"pca_diagnostics": diagnostics} if diagnostics else None,
    )
    emit_report(report, out_dir)
    return report


def evaluate_output_dir(config: ExperimentConfig, out_dir: str) -> EvalReport:
    """Aggregate previously persisted per-run score files (the staged path)."""
    per_run_scores: list[dict[str, AttackScores]] = []
    for run_index in range(1, config.n_runs + 1):
        rdir = run_dir(out_dir, run_index)
        run_scores: dict[str, AttackScores] = {}
        for spec in config.attacks:
            path = os.path.join(rdir, f"scores_{spec.name}.csv")
            if os.path.exists(path):
                run_scores[spec.name] = load_scores_csv(path)
        if run_scores:
            per_run_scores.append(run_scores)
    if not per_run_scores:
        raise ValueError(f"no score files found under {out_dir}")
    report = evaluate_runs(config, per_run_scores, [])
    emit_report(report, out_dir)
    return report


def diagnose(
    config: ExperimentConfig,
    out_dir: str,
    run_index: int = 1,
    total_samples: int = 10_000,
    batch_size: int = 3500,
) -> dict:
    """Memorization histogram, MRE gap, kernel two-sample test, PCA exports."""
    os.makedirs(out_dir, exist_ok=True)
    _, split = stage_gen_data(config, run_index, out_dir)
    target = stage_train_target(config, run_index, out_dir, split)

    memo = memorization_check(
        target,
        split.train,
        total=total_samples,
        batch_size=batch_size,
        reference=split.reference,
        seed=derive_seed(config.master_seed, "run", run_index, "memorization"),
    )
    lines = ["distance,train_syn_count,ref_syn_count"]
    for dist in range(memo.histogram.size):
        lines.append(f"{dist},{memo.histogram[dist]},{memo.ref_histogram[dist]}")
    atomic_write_text(os.path.join(out_dir, "memorization.csv"), "\n".join(lines) + "\n")

    syn = target.sample(
        max(2 * split.train.n_rows, 1000),
        seed=derive_seed(config.master_seed, "run", run_index, "diag-pool"),
    )
    try:
        gap = mre_gap(syn, split.train, split.reference)
    except ValueError as exc:
        gap = None
        gap_error = str(exc)
    else:
        gap_error = None

    paired_train = nearest_synthetic(split.train, syn)
    paired_ref = nearest_synthetic(split.reference, syn)
    perm_seed = derive_seed(config.master_seed, "run", run_index, "kernel-test")
    results = {
        "zero_distance_count": memo.zero_count,
        "zero_distance_fraction": memo.zero_fraction,
        "total_synthetic_samples": memo.total,
        "mre_gap": gap,
        "mre_gap_error": gap_error,
        "mmd2_train": mmd2_unbiased(split.train, paired_train, kernel="rbf"),
        "mmd2_ref": mmd2_unbiased(split.reference, paired_ref, kernel="rbf"),
        "p_value_train": permutation_pvalue(
            split.train, paired_train, permutations=199, seed=perm_seed
        ),
        "p_value_ref": permutation_pvalue(
            split.reference, paired_ref, permutations=199, seed=derive_seed(perm_seed, "ref")
        ),
    }
    atomic_write_text(
        os.path.join(out_dir, "diagnostics.json"), json.dumps(results, indent=2) + "\n"
    )

    diag = _pca_diagnostics(split, target, config, run_index)
    lines = ["component,train_variance,synthetic_variance"]
    for comp, tv, sv in diag["scree"]:
        lines.append(f"{comp},{tv:.17g},{sv:.17g}")
    atomic_write_text(os.path.join(out_dir, "pca_scree.csv"), "\n".join(lines) + "\n")
    lines = ["set," + ",".join(f"pc{i + 1}" for i in range(diag["n_scatter"]))]
    for tag in ("train", "synthetic"):
        for row in diag["scatter"][tag]:
            lines.append(tag + "," + ",".join(f"{v:.17g}" for v in row))
    atomic_write_text(os.path.join(out_dir, "pca_scatter.csv"), "\n".join(lines) + "\n")
    return results
