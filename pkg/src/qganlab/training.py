"""The ACGAN training loop with gradient accumulation and label smoothing.

One iteration is one discriminator effective-batch step followed by one
generator effective-batch step; an effective batch is `accumulation_steps`
micro-batches whose losses are averaged before a single Adam update. The
generator objective is adversarial + auxiliary-class + lambda * energy, with
the energy term supplied by any of the five interchangeable sources.

Everything a run consumes (weight init, data order, latent draws, noise table,
metric sampling) is a pure function of (seed, config), stream-separated so the
five variants see bit-identical data and initial G/D weights under a shared
seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .autodiff import (
    DivergenceError,
    Tensor,
    backward,
    bce_with_logits,
    check_finite,
    cross_entropy,
    mean,
    no_grad,
)
from .data import Dataset
from .energy import EnergySource, make_energy_source
from .gan import Discriminator, Generator
from .ising import IsingSpec
from .metrics import MetricEvaluator
from .quantum import build_ansatz
from .seeding import stream


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    micro_batch: int = 32
    accumulation_steps: int = 2
    lambda_energy: float = 0.1
    real_label_smoothing: float = 0.9
    seed: int = 42
    energy_source: str = "vqe"
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

    @property
    def effective_batch(self) -> int:
        return self.micro_batch * self.accumulation_steps

    def ising_spec(self, n_classes: int) -> IsingSpec:
        return IsingSpec(
            n_qubits=self.n_qubits,
            coupling=self.coupling_j,
            h_global=self.h_global,
            delta_h=self.delta_h,
            n_classes=n_classes,
        )


@dataclass
class EpochMetrics:
    epoch: int
    g_adv: float
    g_aux: float
    g_energy: float
    d_loss: float
    accuracy: float = float("nan")
    fid: float = float("nan")
    inception_score: float = float("nan")
    diversity: float = float("nan")


@dataclass
class RunRecord:
    variant: str
    seed: int
    epochs: list[EpochMetrics] = field(default_factory=list)
    wall_seconds: float = 0.0
    diverged: bool = False
    divergence_note: str = ""
    energy_parameter_count: int = 0

    @property
    def best_fid_epoch(self) -> int | None:
        fids = [(m.fid, m.epoch) for m in self.epochs if not np.isnan(m.fid)]
        return min(fids)[1] if fids else None

    def final_metrics(self) -> dict[str, float] | None:
        if not self.epochs or self.diverged:
            return None
        last = self.epochs[-1]
        return {
            "accuracy": last.accuracy,
            "fid": last.fid,
            "inception_score": last.inception_score,
            "diversity": last.diversity,
        }


class Trainer:
    """Owns one run: networks, energy source, optimizers, and all streams."""

    def __init__(self, config: TrainConfig, dataset: Dataset):
        self.config = config
        self.dataset = dataset
        self.image_dim = int(np.prod(dataset.image_shape))
        self.flat_images = dataset.images.reshape(len(dataset), -1)

        init_rng = stream(config.seed, "init")
        self.generator = Generator(init_rng, config.latent_dim, dataset.n_classes, self.image_dim)
        self.discriminator = Discriminator(init_rng, self.image_dim, dataset.n_classes)
        self.energy_source: EnergySource = make_energy_source(
            config.energy_source,
            seed=config.seed,
            latent_dim=config.latent_dim,
            n_classes=dataset.n_classes,
            class_embedding=self.generator.class_embedding.table,
            ising_spec=config.ising_spec(dataset.n_classes),
            circuit=build_ansatz(
                config.n_qubits, config.ansatz_repetitions, config.ansatz_entanglement
            ),
        )

        self.data_rng = stream(config.seed, "data")
        self.latent_rng = stream(config.seed, "latent")

        self.g_params = dict(self.generator.parameters())
        if config.lambda_energy != 0.0:
            self.g_params.update(self.energy_source.parameters())
        self.d_params = self.discriminator.parameters()
        self.g_opt = nn.AdamState(config.learning_rate, config.beta1, config.beta2)
        self.d_opt = nn.AdamState(config.learning_rate, config.beta1, config.beta2)

    def _draw_latent(self, batch: int) -> tuple[Tensor, np.ndarray]:
        z = self.latent_rng.standard_normal((batch, self.config.latent_dim))
        labels = self.latent_rng.integers(0, self.dataset.n_classes, batch)
        return Tensor(z), labels

    def discriminator_step(self, real_images: np.ndarray, real_labels: np.ndarray) -> float:
        """One effective-batch update of D over `accumulation_steps` micro-batches."""
        cfg = self.config
        nn.zero_grads(self.d_params)
        total = 0.0
        for micro in range(cfg.accumulation_steps):
            lo = micro * cfg.micro_batch
            hi = lo + cfg.micro_batch
            real = Tensor(real_images[lo:hi])
            z, fake_labels = self._draw_latent(hi - lo)
            with no_grad():  # fakes are constants for D; G must see no gradient
                fake = self.generator(z, fake_labels)

            src_real, cls_real = self.discriminator(real)
            src_fake, cls_fake = self.discriminator(fake)
            smoothed = np.full(src_real.shape, cfg.real_label_smoothing)
            loss = (
                bce_with_logits(src_real, smoothed)
                + bce_with_logits(src_fake, np.zeros(src_fake.shape))
                + cross_entropy(cls_real, real_labels[lo:hi])
            )
            if cfg.include_fake_class_loss:
                loss = loss + cross_entropy(cls_fake, fake_labels)
            check_finite(loss, "discriminator loss")
            total += loss.item()
            backward((1.0 / cfg.accumulation_steps) * loss)
        nn.adam_step(self.d_opt, self.d_params)
        return total / cfg.accumulation_steps

    def generator_step(self) -> tuple[float, float, float]:
        """One effective-batch update of G (+ energy weights); returns (adv, aux, energy)."""
        cfg = self.config
        nn.zero_grads(self.g_params)
        adv_total = aux_total = energy_total = 0.0
        for _ in range(cfg.accumulation_steps):
            z, labels = self._draw_latent(cfg.micro_batch)
            fake = self.generator(z, labels)
            src, cls = self.discriminator(fake)
            adv = bce_with_logits(src, np.full(src.shape, cfg.real_label_smoothing))
            aux = cross_entropy(cls, labels)
            energy = mean(self.energy_source.energy(z, labels))
            loss = adv + aux
            if cfg.lambda_energy != 0.0:
                loss = loss + cfg.lambda_energy * energy
            check_finite(loss, "generator loss")
            check_finite(energy, "energy term")
            adv_total += adv.item()
            aux_total += aux.item()
            energy_total += energy.item()
            backward((1.0 / cfg.accumulation_steps) * loss)
        nn.adam_step(self.g_opt, self.g_params)
        n = cfg.accumulation_steps
        return adv_total / n, aux_total / n, energy_total / n

    def train_epoch(self, epoch: int) -> EpochMetrics:
        cfg = self.config
        steps = len(self.dataset) // cfg.effective_batch
        order = self.data_rng.permutation(len(self.dataset))
        adv = aux = energy = d_loss = 0.0
        for step in range(steps):
            idx = order[step * cfg.effective_batch : (step + 1) * cfg.effective_batch]
            d_loss += self.discriminator_step(self.flat_images[idx], self.dataset.labels[idx])
            a, x, e = self.generator_step()
            adv, aux, energy = adv + a, aux + x, energy + e
        scale = max(steps, 1)
        return EpochMetrics(
            epoch=epoch,
            g_adv=adv / scale,
            g_aux=aux / scale,
            g_energy=energy / scale,
            d_loss=d_loss / scale,
        )


def train_run(
    config: TrainConfig, dataset: Dataset, evaluator: MetricEvaluator | None = None
) -> RunRecord:
    """Full training run; divergence is flagged in the record, never raised."""
    start = time.perf_counter()
    trainer = Trainer(config, dataset)
    record = RunRecord(
        variant=config.energy_source,
        seed=config.seed,
        energy_parameter_count=trainer.energy_source.parameter_count(),
    )
    try:
        for epoch in range(1, config.epochs + 1):
            row = trainer.train_epoch(epoch)
            if evaluator is not None:
                metric_rng = stream(config.seed, f"metrics-epoch-{epoch}")
                values = evaluator.evaluate(trainer.generator.sample, metric_rng)
                row.accuracy = values["accuracy"]
                row.fid = values["fid"]
                row.inception_score = values["inception_score"]
                row.diversity = values["diversity"]
            record.epochs.append(row)
    except DivergenceError as err:
        record.diverged = True
        record.divergence_note = str(err)
    record.wall_seconds = time.perf_counter() - start
    return record
