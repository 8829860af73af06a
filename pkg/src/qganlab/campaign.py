"""Campaign orchestration: durable runs, parallel scheduling, resume, reports.

A campaign is (variants x seeds) training runs plus one report. Every run
writes two artifacts under `campaign-<id>/runs/`: a CSV of per-epoch rows
(strictly deterministic: repeating a run byte-reproduces it) and a JSON
summary carrying everything volatile or derived (wall-clock, divergence flag,
best-FID epoch, config echo). Writes are atomic (temp file + rename), and a
run whose summary already exists is never recomputed, which makes interrupted
campaigns resumable and rerunning a complete campaign a no-op.

The campaign id is a hash of the protocol-relevant configuration only (not
host paths or worker counts), so artifacts produced under different protocols
can never silently mix.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, load_cache, load_mnist, save_cache, synthetic_gmm
from .metrics import FeatureClassifier, MetricEvaluator, train_feature_classifier
from .stats import (
    AblationReport,
    EquivalenceThresholds,
    VariantSample,
    build_report,
)
from .training import RunRecord, TrainConfig, train_run

SCHEMA_VERSION = "qgl-run-v1"
CSV_COLUMNS = (
    "epoch",
    "g_adv",
    "g_aux",
    "g_energy",
    "d_loss",
    "accuracy",
    "fid",
    "inception_score",
    "diversity",
)
DEFAULT_SEEDS = (42, 2025, 123, 456, 789)
DEFAULT_VARIANTS = ("vqe", "mlp", "bias", "noise", "none")

MAX_FAILURE_FRACTION = 0.2


@dataclass(frozen=True)
class CampaignConfig:
    """Flat protocol + host configuration; JSON config files mirror these keys."""

    # protocol: data
    dataset: str = "synthetic"  # synthetic | mnist
    downscale_factor: int = 2
    n_classes: int = 10
    synthetic_train_per_class: int = 3000
    synthetic_test_per_class: int = 100
    synthetic_dim: int = 196
    synthetic_sigma: float = 0.1
    synthetic_mean_scale: float = 1.2
    data_seed: int = 7
    # protocol: campaign
    variants: tuple[str, ...] = DEFAULT_VARIANTS
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    # protocol: training (mirrors TrainConfig)
    epochs: int = 5
    micro_batch: int = 32
    accumulation_steps: int = 2
    lambda_energy: float = 0.1
    real_label_smoothing: float = 0.9
    latent_dim: int = 64
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    include_fake_class_loss: bool = True
    n_qubits: int = 4
    ansatz_repetitions: int = 1
    ansatz_entanglement: str = "circular"
    coupling_j: float = 1.0
    h_global: float = 0.1
    delta_h: float = 0.01
    # protocol: metrics
    classifier_seed: int = 1234
    classifier_epochs: int = 4
    n_accuracy: int = 500
    n_fid: int = 1000
    n_is: int = 1000
    is_splits: int = 10
    diversity_per_class: int = 100
    # protocol: statistics
    delta_acc: float = 0.03
    delta_fid: float = 5.0
    delta_is: float = 0.3
    delta_diversity: float = 0.05
    cohens_d_cut: float = 0.5
    bootstrap_seed: int = 20250817
    # host-local (excluded from the campaign id)
    data_dir: str = "data"
    output_dir: str = "out"
    workers: int = 1

    HOST_FIELDS = ("data_dir", "output_dir", "workers")

    def protocol_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key in self.HOST_FIELDS:
            out.pop(key)
        out["variants"] = list(self.variants)
        out["seeds"] = list(self.seeds)
        return out

    def campaign_id(self) -> str:
        canonical = json.dumps(self.protocol_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

    def train_config(self, variant: str, seed: int) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            micro_batch=self.micro_batch,
            accumulation_steps=self.accumulation_steps,
            lambda_energy=self.lambda_energy,
            real_label_smoothing=self.real_label_smoothing,
            seed=seed,
            energy_source=variant,
            latent_dim=self.latent_dim,
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            include_fake_class_loss=self.include_fake_class_loss,
            n_qubits=self.n_qubits,
            ansatz_repetitions=self.ansatz_repetitions,
            ansatz_entanglement=self.ansatz_entanglement,
            coupling_j=self.coupling_j,
            h_global=self.h_global,
            delta_h=self.delta_h,
        )

    def thresholds(self) -> EquivalenceThresholds:
        return EquivalenceThresholds(
            delta_acc=self.delta_acc,
            delta_fid=self.delta_fid,
            delta_is=self.delta_is,
            delta_diversity=self.delta_diversity,
            cohens_d_cut=self.cohens_d_cut,
        )

    def campaign_dir(self) -> Path:
        return Path(self.output_dir) / f"campaign-{self.campaign_id()}"

    def cache_dir(self) -> Path:
        return Path(self.output_dir) / "cache"

    def _data_key(self) -> str:
        fields = {
            k: v
            for k, v in self.protocol_dict().items()
            if k.startswith("synthetic_") or k in (
                "dataset", "downscale_factor", "n_classes", "data_seed",
            )
        }
        return hashlib.sha256(json.dumps(fields, sort_keys=True).encode()).hexdigest()[:12]

    def dataset_cache_path(self) -> Path:
        return self.cache_dir() / f"dataset-{self._data_key()}.npz"

    def classifier_path(self) -> Path:
        key_fields = [self._data_key(), self.classifier_seed, self.classifier_epochs]
        key = hashlib.sha256(json.dumps(key_fields).encode()).hexdigest()[:12]
        return self.cache_dir() / f"classifier-{key}.qgl1"


def config_from_file(path: str | Path | None, overrides: dict | None = None) -> CampaignConfig:
    """Defaults <- JSON config file <- explicit overrides, with type coercion."""
    values: dict = {}
    if path is not None:
        with open(path) as f:
            loaded = json.load(f)
        if not isinstance(loaded, dict):
            raise ValueError("config file must hold a single JSON object")
        values.update(loaded)
    values.update(overrides or {})
    env_data_dir = os.environ.get("QGANLAB_DATA_DIR")
    if env_data_dir and "data_dir" not in (overrides or {}):
        values["data_dir"] = env_data_dir

    known = {f.name: f for f in dataclasses.fields(CampaignConfig)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    coerced = {}
    for key, value in values.items():
        f = known[key]
        if f.type in ("tuple[str, ...]", "tuple[int, ...]"):
            seq = value.split(",") if isinstance(value, str) else list(value)
            elem = int if "int" in f.type else str
            coerced[key] = tuple(elem(x) for x in seq)
        elif f.type == "bool":
            coerced[key] = value in (True, "true", "True", "1", 1)
        elif f.type == "int":
            coerced[key] = int(value)
        elif f.type == "float":
            coerced[key] = float(value)
        else:
            coerced[key] = str(value)
    return CampaignConfig(**coerced)


# -- datasets and classifier -----------------------------------------------------


def build_datasets(config: CampaignConfig) -> tuple[Dataset, Dataset]:
    if config.dataset == "synthetic":
        train = synthetic_gmm(
            config.synthetic_train_per_class,
            config.n_classes,
            config.synthetic_dim,
            seed=config.data_seed,
            sigma=config.synthetic_sigma,
            mean_scale=config.synthetic_mean_scale,
        )
        test = synthetic_gmm(
            config.synthetic_test_per_class,
            config.n_classes,
            config.synthetic_dim,
            seed=config.data_seed + 1,
            sigma=config.synthetic_sigma,
            mean_scale=config.synthetic_mean_scale,
        )
        return train, test
    if config.dataset == "mnist":
        return load_mnist(config.data_dir, config.downscale_factor, config.n_classes)
    raise ValueError(f"unknown dataset {config.dataset!r}")


def prepare_data(config: CampaignConfig) -> Path:
    """Build (or reuse) the dataset cache; returns its path."""
    path = config.dataset_cache_path()
    if path.exists():
        return path
    train, test = build_datasets(config)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp.npz")
    save_cache(tmp, train, test, meta={"dataset": config.dataset})
    os.replace(tmp, path)
    return path


def prepare_classifier(config: CampaignConfig) -> Path:
    """Train (or reuse) the frozen metric classifier; returns its checkpoint path."""
    path = config.classifier_path()
    if path.exists():
        return path
    train, test = load_cache(prepare_data(config))
    clf = train_feature_classifier(
        train, test, seed=config.classifier_seed, epochs=config.classifier_epochs
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    clf.save(path)
    return path


def _make_evaluator(config: CampaignConfig, test: Dataset) -> MetricEvaluator:
    classifier = FeatureClassifier.load(config.classifier_path())
    return MetricEvaluator(
        classifier,
        test,
        n_accuracy=config.n_accuracy,
        n_fid=config.n_fid,
        n_is=config.n_is,
        is_splits=config.is_splits,
        diversity_per_class=config.diversity_per_class,
    )


# -- single runs -----------------------------------------------------------------


def _format_cell(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def run_csv_text(record: RunRecord) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in record.epochs:
        lines.append(
            ",".join(
                _format_cell(getattr(row, col)) for col in CSV_COLUMNS
            )
        )
    return "\n".join(lines) + "\n"


def run_paths(campaign_dir: Path, variant: str, seed: int) -> tuple[Path, Path]:
    base = campaign_dir / "runs" / f"{variant}-{seed}"
    return base.with_name(base.name + ".csv"), base.with_name(base.name + ".json")


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def execute_run(config: CampaignConfig, variant: str, seed: int) -> dict:
    """Train one (variant, seed) and persist CSV + JSON summary atomically."""
    train, test = load_cache(config.dataset_cache_path())
    evaluator = _make_evaluator(config, test)
    record = train_run(config.train_config(variant, seed), train, evaluator)

    campaign_dir = config.campaign_dir()
    csv_path, json_path = run_paths(campaign_dir, variant, seed)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "campaign_id": config.campaign_id(),
        "variant": variant,
        "seed": seed,
        "diverged": record.diverged,
        "divergence_note": record.divergence_note,
        "epochs_completed": len(record.epochs),
        "best_fid_epoch": record.best_fid_epoch,
        "wall_seconds": record.wall_seconds,
        "energy_parameter_count": record.energy_parameter_count,
        "final": record.final_metrics(),
    }
    _atomic_write(csv_path, run_csv_text(record))
    _atomic_write(json_path, json.dumps(summary, indent=2) + "\n")
    return summary


def _run_task(args: tuple) -> dict:
    config_values, variant, seed = args
    config = CampaignConfig(**config_values)
    return execute_run(config, variant, seed)


# -- campaigns ---------------------------------------------------------------------


def _config_values(config: CampaignConfig) -> dict:
    return dataclasses.asdict(config)


def run_campaign(config: CampaignConfig) -> dict:
    """Execute all missing (variant, seed) runs, then summarize campaign health."""
    prepare_data(config)
    prepare_classifier(config)
    campaign_dir = config.campaign_dir()
    campaign_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "campaign_id": config.campaign_id(),
        "schema_version": SCHEMA_VERSION,
        "config": config.protocol_dict(),
    }
    _atomic_write(campaign_dir / "campaign.json", json.dumps(manifest, indent=2) + "\n")

    pending = []
    for variant in config.variants:
        for seed in config.seeds:
            _, json_path = run_paths(campaign_dir, variant, seed)
            if not json_path.exists():
                pending.append((variant, seed))

    if pending:
        if config.workers > 1:
            tasks = [(_config_values(config), v, s) for v, s in pending]
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                list(pool.map(_run_task, tasks))
        else:
            for variant, seed in pending:
                execute_run(config, variant, seed)

    total = len(config.variants) * len(config.seeds)
    failures = []
    for variant in config.variants:
        for seed in config.seeds:
            _, json_path = run_paths(campaign_dir, variant, seed)
            summary = json.loads(json_path.read_text())
            if summary["diverged"] or summary["epochs_completed"] < config.epochs:
                failures.append((variant, seed))
    invalid = len(failures) > MAX_FAILURE_FRACTION * total
    return {
        "campaign_id": config.campaign_id(),
        "campaign_dir": str(campaign_dir),
        "runs": total,
        "executed": len(pending),
        "failures": [list(f) for f in failures],
        "invalid": invalid,
    }


def load_campaign_samples(
    config: CampaignConfig,
) -> tuple[dict[str, VariantSample], list[int]]:
    """Final-epoch metric vectors per variant, keeping only seeds completed by all.

    Returns (samples, dropped_seeds). Seeds missing or diverged for any variant
    are dropped across the board so pairing stays intact.
    """
    campaign_dir = config.campaign_dir()
    rows: dict[str, dict[int, dict]] = {v: {} for v in config.variants}
    schema_versions = set()
    for variant in config.variants:
        for seed in config.seeds:
            _, json_path = run_paths(campaign_dir, variant, seed)
            if not json_path.exists():
                continue
            summary = json.loads(json_path.read_text())
            schema_versions.add(summary.get("schema_version"))
            if summary["diverged"] or summary["final"] is None:
                continue
            rows[variant][seed] = summary["final"]
    if schema_versions - {SCHEMA_VERSION}:
        raise ValueError(
            f"mixed run schema versions {sorted(schema_versions)}; refusing to report"
        )
    complete = [s for s in config.seeds if all(s in rows[v] for v in config.variants)]
    dropped = [s for s in config.seeds if s not in complete]
    samples = {}
    for variant in config.variants:
        values = {
            metric: tuple(rows[variant][s][metric] for s in complete)
            for metric in ("accuracy", "fid", "inception_score", "diversity")
        }
        samples[variant] = VariantSample(variant, tuple(complete), values)
    return samples, dropped


def write_report(config: CampaignConfig) -> AblationReport:
    """Build and persist the verdict report plus comparison and curve CSVs."""
    from .stats import report_to_json, report_to_text

    samples, dropped = load_campaign_samples(config)
    report = build_report(
        samples, config.thresholds(), reference="vqe", bootstrap_seed=config.bootstrap_seed
    )
    campaign_dir = config.campaign_dir()
    payload = report_to_json(report)
    payload["dropped_seeds"] = dropped
    _atomic_write(campaign_dir / "report.json", json.dumps(payload, indent=2) + "\n")
    _atomic_write(campaign_dir / "report.txt", report_to_text(report))

    comparisons = list(report.preregistered_comparisons) + list(report.exploratory_comparisons)
    lines = ["variant_a,variant_b,metric,preregistered_set,mean_difference,cohens_d,p_value,verdict"]
    for i, c in enumerate(comparisons):
        in_prereg = i < len(report.preregistered_comparisons)
        lines.append(
            f"{c.variant_a},{c.variant_b},{c.metric},{int(in_prereg)},"
            f"{c.mean_difference!r},{c.cohens_d!r},{c.p_value!r},{c.verdict}"
        )
    _atomic_write(campaign_dir / "comparisons.csv", "\n".join(lines) + "\n")

    for metric in ("accuracy", "fid", "inception_score"):
        lines = ["variant,seed,epoch,value"]
        for variant in config.variants:
            for seed in config.seeds:
                csv_path, _ = run_paths(campaign_dir, variant, seed)
                if not csv_path.exists():
                    continue
                body = csv_path.read_text().splitlines()
                header = body[0].split(",")
                col = header.index(metric)
                for row in body[1:]:
                    cells = row.split(",")
                    lines.append(f"{variant},{seed},{cells[0]},{cells[col]}")
        _atomic_write(campaign_dir / f"curves_{metric}.csv", "\n".join(lines) + "\n")
    return report
