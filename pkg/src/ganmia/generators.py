"""Target generators under attack: an exact-density mixture oracle and a
from-scratch vanilla GAN on binary rows.

The oracle emits a verbatim training row with probability ``beta`` and a
fresh population draw otherwise, and exposes exact G/P/T densities, which
makes the Bayes-optimal membership score computable. The GAN exposes
samples only; the attack-facing surface of both is just ``sample(n, seed)``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .bitmatrix import BitMatrix, atomic_write_text, load_csv, save_csv
from .datagen import SnpDistributionSpec, sample_distribution
from .nn import (
    AdamState,
    MlpModel,
    TrainingDivergedError,
    adam_step,
    backprop,
    bce_loss,
    init_mlp,
    load_model,
    mlp_forward,
    save_model,
)
from .rng import derive_seed, make_rng


@dataclass
class OracleMixtureGenerator:
    """G = beta * T + (1 - beta) * P with T uniform over the train rows."""

    beta: float
    train_set: BitMatrix
    base_spec: SnpDistributionSpec
    seed: int = 0
    _train_counts: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if self.train_set.n_rows == 0:
            raise ValueError("train_set must be non-empty")
        if self.train_set.n_cols != self.base_spec.dimension:
            raise ValueError("train_set and base_spec dimensions differ")
        self._train_counts = self.train_set.value_counts()

    @property
    def dim(self) -> int:
        return self.train_set.n_cols

    def sample(self, n: int, seed: int = 0) -> BitMatrix:
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = make_rng(derive_seed(self.seed, "oracle-sample", seed))
        verbatim = rng.random(n) < self.beta
        picks = rng.integers(0, self.train_set.n_rows, size=n)
        out = np.zeros((n, self.dim), dtype=np.uint8)
        if verbatim.any():
            out[verbatim] = self.train_set.take(picks[verbatim]).to_array()
        n_fresh = int((~verbatim).sum())
        if n_fresh:
            fresh = sample_distribution(
                self.base_spec, n_fresh, seed=derive_seed(self.seed, "oracle-fresh", seed)
            )
            out[~verbatim] = fresh.to_array()
        return BitMatrix.from_array(out)

    def log_densities(self, rows: BitMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(log G, log P, log T) per row; -inf where the mass is zero."""
        if rows.n_cols != self.dim:
            raise ValueError("row dimension mismatch")
        log_p = self.base_spec.log_row_probability(rows)
        counts = np.array(
            [self._train_counts.get(key, 0) for key in rows.row_keys()], dtype=np.float64
        )
        with np.errstate(divide="ignore"):
            log_t = np.log(counts) - np.log(self.train_set.n_rows)
        if self.beta == 0.0:
            log_g = log_p.copy()
        elif self.beta == 1.0:
            log_g = log_t.copy()
        else:
            log_g = np.logaddexp(np.log(self.beta) + log_t, np.log1p(-self.beta) + log_p)
        return log_g, log_p, log_t

    def densities(self, rows: BitMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        log_g, log_p, log_t = self.log_densities(rows)
        return np.exp(log_g), np.exp(log_p), np.exp(log_t)


def oracle_sample(gen: OracleMixtureGenerator, n: int, seed: int = 0) -> BitMatrix:
    return gen.sample(n, seed)


def oracle_density(gen: OracleMixtureGenerator, rows: BitMatrix):
    """Exact (G, P, T) densities per row."""
    return gen.densities(rows)


@dataclass
class GanTrainConfig:
    latent_dim: int = 32
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.5  # momentum is kept low for adversarial stability
    beta2: float = 0.999
    gen_hidden: tuple[int, ...] = (128,)
    disc_hidden: tuple[int, ...] = (128,)
    non_saturating: bool = True

    def __post_init__(self):
        if self.latent_dim < 1 or self.batch_size < 1:
            raise ValueError("latent_dim and batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class GanHandle:
    """Black-box sampler around the trained players. No density access."""

    generator: MlpModel
    discriminator: MlpModel
    latent_dim: int
    seed: int = 0
    epochs_trained: int = 0
    history: dict = field(default_factory=lambda: {"d_loss": [], "g_loss": []})

    @property
    def dim(self) -> int:
        return self.generator.output_dim

    def sample(self, n: int, seed: int = 0) -> BitMatrix:
        """Round sigmoid outputs at 0.5; the tie 0.5 rounds to 1."""
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = make_rng(derive_seed(self.seed, "gan-sample", seed))
        z = rng.standard_normal((n, self.latent_dim))
        probs = mlp_forward(self.generator, z)
        return BitMatrix.from_array((probs >= 0.5).astype(np.uint8))


def train_vanilla_gan(
    train: BitMatrix, config: GanTrainConfig | None = None, seed: int = 0
) -> GanHandle:
    """Alternating single-step updates on the classic two-player objective.

    The discriminator descends BCE on (real=1, fake=0); the generator by
    default uses the non-saturating surrogate (ascend log D'(G(z)) via BCE
    against label 1 through the frozen discriminator), or the literal
    minimax gradient when ``non_saturating=False``.
    """
    if train.n_rows == 0:
        raise ValueError("train must be non-empty")
    config = config or GanTrainConfig()
    d = train.n_cols
    gen = init_mlp(
        [config.latent_dim, *config.gen_hidden, d],
        activations=["relu"] * len(config.gen_hidden) + ["sigmoid"],
        seed=derive_seed(seed, "gan-gen-init"),
    )
    disc = init_mlp([d, *config.disc_hidden, 1], seed=derive_seed(seed, "gan-disc-init"))
    gen_state = AdamState.zeros_like(gen)
    disc_state = AdamState.zeros_like(disc)
    rng = make_rng(derive_seed(seed, "gan-train"))
    real = train.to_array().astype(np.float64)
    handle = GanHandle(gen, disc, config.latent_dim, seed=seed)

    for epoch in range(config.epochs):
        order = rng.permutation(train.n_rows)
        d_losses, g_losses = [], []
        for start in range(0, train.n_rows, config.batch_size):
            real_b = real[order[start : start + config.batch_size]]
            nb = real_b.shape[0]

            z = rng.standard_normal((nb, config.latent_dim))
            fake = mlp_forward(gen, z)
            batch = np.vstack([real_b, fake])
            labels = np.concatenate([np.ones(nb), np.zeros(nb)])
            d_losses.append(bce_loss(mlp_forward(disc, batch).ravel(), labels))
            grads = backprop(disc, batch, labels)
            adam_step(disc, grads, disc_state, config.learning_rate, config.beta1, config.beta2)

            z = rng.standard_normal((nb, config.latent_dim))
            stacked = MlpModel(gen.layers + disc.layers, rng_seed=seed)
            if config.non_saturating:
                g_labels = np.ones(nb)
                g_losses.append(bce_loss(mlp_forward(stacked, z).ravel(), g_labels))
                grads = backprop(stacked, z, g_labels)[: len(gen.layers)]
            else:
                # literal objective: descend log(1 - D(G(z))) = ascend BCE vs 0
                g_labels = np.zeros(nb)
                g_losses.append(bce_loss(mlp_forward(stacked, z).ravel(), g_labels))
                grads = [
                    (-gw, -gb) for gw, gb in backprop(stacked, z, g_labels)[: len(gen.layers)]
                ]
            adam_step(gen, grads, gen_state, config.learning_rate, config.beta1, config.beta2)

        d_mean, g_mean = float(np.mean(d_losses)), float(np.mean(g_losses))
        if not (np.isfinite(d_mean) and np.isfinite(g_mean)):
            raise TrainingDivergedError(
                f"non-finite GAN loss at epoch {epoch}: d={d_mean}, g={g_mean}"
            )
        handle.history["d_loss"].append(d_mean)
        handle.history["g_loss"].append(g_mean)
        handle.epochs_trained = epoch + 1
    return handle


def gan_sample(handle: GanHandle, n: int, seed: int = 0) -> BitMatrix:
    return handle.sample(n, seed)


def save_target(target, prefix: str) -> None:
    """Persist either generator kind next to ``prefix`` with a JSON header."""
    os.makedirs(os.path.dirname(os.path.abspath(prefix)), exist_ok=True)
    if isinstance(target, OracleMixtureGenerator):
        meta = {
            "kind": "oracle",
            "beta": target.beta,
            "seed": target.seed,
            "spec": target.base_spec.to_dict(),
        }
        save_csv(target.train_set, prefix + ".train.csv")
    elif isinstance(target, GanHandle):
        meta = {
            "kind": "vanilla_gan",
            "latent_dim": target.latent_dim,
            "seed": target.seed,
            "epochs_trained": target.epochs_trained,
            "history": target.history,
        }
        save_model(target.generator, prefix + ".gen.mlp")
        save_model(target.discriminator, prefix + ".disc.mlp")
    else:
        raise ValueError(f"unknown target type {type(target).__name__}")
    atomic_write_text(prefix + ".target.json", json.dumps(meta, indent=2) + "\n")


def load_target(prefix: str):
    with open(prefix + ".target.json") as handle:
        meta = json.load(handle)
    if meta["kind"] == "oracle":
        return OracleMixtureGenerator(
            beta=float(meta["beta"]),
            train_set=load_csv(prefix + ".train.csv"),
            base_spec=SnpDistributionSpec.from_dict(meta["spec"]),
            seed=int(meta["seed"]),
        )
    if meta["kind"] == "vanilla_gan":
        gan = GanHandle(
            generator=load_model(prefix + ".gen.mlp"),
            discriminator=load_model(prefix + ".disc.mlp"),
            latent_dim=int(meta["latent_dim"]),
            seed=int(meta["seed"]),
            epochs_trained=int(meta["epochs_trained"]),
        )
        gan.history = meta.get("history", {"d_loss": [], "g_loss": []})
        return gan
    raise ValueError(f"unknown target kind {meta['kind']!r}")
