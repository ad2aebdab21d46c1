"""Black-box membership attacks.

Every attack maps candidate rows to real-valued scores with a shared
orientation: higher means more likely to be a training member. Distance
gaps are therefore emitted as (reference loss - synthetic loss), so a
candidate closer to the synthetic sample than to the reference sample
scores positive.

Attack estimators follow fit/score_samples: ``fit(ctx, generator=None)``
freezes the context (and trains classifiers where needed), after which
``score_samples`` is a pure function of the candidate rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .bitmatrix import BitMatrix, atomic_write_text, hamming_min
from .density import DiagonalGmm, Pca, default_pca_components, domias_score
from .generators import OracleMixtureGenerator
from .nn import MlpClassifier
from .rng import derive_seed, make_rng

METRICS = ("hamming", "euclidean")


@dataclass
class AttackContext:
    """Frozen attacker inputs: synthetic sample, reference sample, seed."""

    x_g: BitMatrix
    x_r: BitMatrix
    metrics: tuple[str, ...] = METRICS
    seed: int = 0

    def __post_init__(self):
        if self.x_g.n_rows == 0 or self.x_r.n_rows == 0:
            raise ValueError("synthetic and reference samples must be non-empty")
        if self.x_g.n_cols != self.x_r.n_cols:
            raise ValueError("synthetic and reference column counts differ")
        for metric in self.metrics:
            if metric not in METRICS:
                raise ValueError(f"unknown metric {metric!r}")

    @property
    def dim(self) -> int:
        return self.x_g.n_cols


def _as_bitmatrix(candidates, dim: int) -> BitMatrix:
    if isinstance(candidates, BitMatrix):
        matrix = candidates
    else:
        matrix = BitMatrix.from_array(np.atleast_2d(np.asarray(candidates)))
    if matrix.n_cols != dim:
        raise ValueError(f"candidates have {matrix.n_cols} columns, expected {dim}")
    return matrix


def reconstruction_loss(candidates, pool: BitMatrix, metric: str = "hamming") -> np.ndarray:
    """Min distance from each candidate to any pool row.

    On binary rows the Euclidean distance is exactly sqrt(Hamming), so
    both metrics share one packed-popcount kernel.
    """
    if pool.n_rows == 0:
        raise ValueError("pool is empty")
    candidates = _as_bitmatrix(candidates, pool.n_cols)
    dist = hamming_min(candidates, pool).astype(np.float64)
    if metric == "hamming":
        return dist
    if metric == "euclidean":
        return np.sqrt(dist)
    raise ValueError(f"unknown metric {metric!r}")


def one_way_score(candidates, ctx: AttackContext, metric: str = "hamming") -> np.ndarray:
    """-R(tau | X_G): verbatim synthetic rows achieve the maximum score 0."""
    return -reconstruction_loss(candidates, ctx.x_g, metric)


def two_way_score(candidates, ctx: AttackContext, metric: str = "hamming") -> np.ndarray:
    """R_ref(tau | X_R) - R(tau | X_G); positive when closer to synthetic."""
    return reconstruction_loss(candidates, ctx.x_r, metric) - reconstruction_loss(
        candidates, ctx.x_g, metric
    )


def weighted_score(candidates, ctx: AttackContext, weights: dict[str, float]) -> np.ndarray:
    """Weighted sum of per-metric two-way gaps."""
    if not weights:
        raise ValueError("no metric weights given")
    vals = np.array(list(weights.values()), dtype=np.float64)
    if np.any(vals < 0) or not np.any(vals > 0):
        raise ValueError("weights must be non-negative with at least one positive")
    total = None
    for metric, alpha in weights.items():
        gap = alpha * two_way_score(candidates, ctx, metric)
        total = gap if total is None else total + gap
    return total


def robust_homer_score(
    candidates, x_fresh, x_g: BitMatrix, x_r: BitMatrix, eps: float = 0.0
) -> np.ndarray:
    """Inner product against the truncated mean gap.

    mu_g and mu_r are the synthetic and reference column means, their
    difference is clamped entry-wise to [-eta, eta] with
    eta = 2 * (1/sqrt(m) + eps), m = |X_R|, and the score is
    <tau - x_fresh, clamped gap>. x_fresh must be excluded from x_r.
    """
    if x_g.n_rows == 0 or x_r.n_rows == 0:
        raise ValueError("synthetic and reference samples must be non-empty")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    candidates = _as_bitmatrix(candidates, x_g.n_cols)
    x_fresh = _as_bitmatrix(x_fresh, x_g.n_cols).to_array().astype(np.float64)[0]
    mu_g = x_g.column_means()
    mu_r = x_r.column_means()
    eta = 2.0 * (1.0 / np.sqrt(x_r.n_rows) + eps)
    clamped = np.clip(mu_g - mu_r, -eta, eta)
    rows = candidates.to_array().astype(np.float64)
    return (rows - x_fresh) @ clamped


def bayes_oracle_attack(candidates, oracle: OracleMixtureGenerator) -> np.ndarray:
    """f*(x) = G(x) / (G(x) + P(x)), computed in log space."""
    candidates = _as_bitmatrix(candidates, oracle.dim)
    log_g, log_p, _ = oracle.log_densities(candidates)
    out = np.empty(candidates.n_rows)
    finite = np.isfinite(log_g)
    out[~finite] = 0.0  # G(x) = 0: x is never emitted
    diff = log_p[finite] - log_g[finite]
    out[finite] = 1.0 / (1.0 + np.exp(diff))
    return out


def _min_l2(queries: np.ndarray, pool: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Min Euclidean distance from each query row to any pool row."""
    pool_sq = (pool**2).sum(axis=1)
    out = np.empty(queries.shape[0])
    for start in range(0, queries.shape[0], chunk):
        q = queries[start : start + chunk]
        d2 = (q**2).sum(axis=1)[:, None] + pool_sq[None, :] - 2.0 * q @ pool.T
        out[start : start + chunk] = np.sqrt(np.maximum(d2.min(axis=1), 0.0))
    return out


class MembershipAttack(BaseEstimator):
    """Common surface: fit(ctx, generator) then score_samples(candidates)."""

    name = "base"

    def fit(self, ctx: AttackContext, generator=None):
        raise NotImplementedError

    def score_samples(self, candidates) -> np.ndarray:
        raise NotImplementedError


class OneWayDistanceAttack(MembershipAttack):
    name = "one_way"

    def __init__(self, metric: str = "hamming"):
        self.metric = metric

    def fit(self, ctx, generator=None):
        self.context_ = ctx
        return self

    def score_samples(self, candidates):
        return one_way_score(candidates, self.context_, self.metric)


class TwoWayDistanceAttack(MembershipAttack):
    name = "two_way"

    def __init__(self, metric: str = "hamming"):
        self.metric = metric

    def fit(self, ctx, generator=None):
        self.context_ = ctx
        return self

    def score_samples(self, candidates):
        return two_way_score(candidates, self.context_, self.metric)


class WeightedDistanceAttack(MembershipAttack):
    name = "weighted"

    def __init__(self, weights: dict[str, float] | None = None):
        self.weights = weights

    def fit(self, ctx, generator=None):
        self.context_ = ctx
        # default: uniform over the context's metric set
        self.weights_ = dict(self.weights) if self.weights else {
            metric: 1.0 / len(ctx.metrics) for metric in ctx.metrics
        }
        return self

    def score_samples(self, candidates):
        return weighted_score(candidates, self.context_, self.weights_)


class RobustHomerAttack(MembershipAttack):
    """One reference row is held out per run as the fresh sample x."""

    name = "robust_homer"

    def __init__(self, eps: float = 0.0):
        self.eps = eps

    def fit(self, ctx, generator=None):
        if ctx.x_r.n_rows < 2:
            raise ValueError("need at least 2 reference rows to hold one out")
        rng = make_rng(derive_seed(ctx.seed, "homer-fresh"))
        fresh_idx = int(rng.integers(ctx.x_r.n_rows))
        keep = np.setdiff1d(np.arange(ctx.x_r.n_rows), [fresh_idx])
        self.x_fresh_ = ctx.x_r.row(fresh_idx)
        self.x_r_rest_ = ctx.x_r.take(keep)
        self.x_g_ = ctx.x_g
        return self

    def score_samples(self, candidates):
        return robust_homer_score(
            candidates, self.x_fresh_, self.x_g_, self.x_r_rest_, self.eps
        )


class DetectorAttack(MembershipAttack):
    """Classifier trained on synthetic (label 1) vs reference (label 0) rows.

    With a generator available, the synthetic class is re-drawn every
    ``resample_period`` epochs. A held-out slice of the reference pool plus
    an equal fresh synthetic draw measures test accuracy after training.
    """

    name = "detector"

    def __init__(
        self,
        hidden: tuple[int, ...] = (128,),
        epochs: int = 150,
        batch_size: int = 100,
        learning_rate: float = 1e-3,
        patience: int = 10,
        lr_decay_factor: float = 0.5,
        resample_period: int = 3,
        val_fraction: float = 0.2,
        test_fraction: float = 0.2,
    ):
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.patience = patience
        self.lr_decay_factor = lr_decay_factor
        self.resample_period = resample_period
        self.val_fraction = val_fraction
        self.test_fraction = test_fraction

    def _classifier(self, seed: int) -> MlpClassifier:
        return MlpClassifier(
            hidden=tuple(self.hidden),
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            patience=self.patience,
            lr_decay_factor=self.lr_decay_factor,
            resample_period=self.resample_period,
            val_fraction=self.val_fraction,
            random_state=seed,
        )

    def fit(self, ctx, generator=None):
        self.dim_ = ctx.dim
        rng = make_rng(derive_seed(ctx.seed, "detector-split"))
        n_test = int(round(self.test_fraction * ctx.x_r.n_rows))
        order = rng.permutation(ctx.x_r.n_rows)
        test_ref = ctx.x_r.take(order[:n_test])
        train_ref = ctx.x_r.take(order[n_test:])
        if train_ref.n_rows == 0:
            raise ValueError("test_fraction leaves no reference rows for training")

        x_ref = train_ref.to_array().astype(np.float64)
        x_syn = ctx.x_g.to_array().astype(np.float64)
        features = np.vstack([x_syn, x_ref])
        labels = np.concatenate([np.ones(len(x_syn)), np.zeros(len(x_ref))])

        hook = None
        if generator is not None:
            def hook(n, hook_seed):
                return generator.sample(n, seed=hook_seed).to_array().astype(np.float64)

        clf = self._classifier(derive_seed(ctx.seed, "detector-train"))
        clf.fit(features, labels, resample_hook=hook)
        self.classifier_ = clf

        if n_test > 0:
            if generator is not None:
                syn_test = generator.sample(
                    n_test, seed=derive_seed(ctx.seed, "detector-test")
                ).to_array()
            else:
                syn_test = ctx.x_g.to_array()[:n_test]
            probe = np.vstack([syn_test.astype(np.float64), test_ref.to_array()])
            truth = np.concatenate([np.ones(len(syn_test)), np.zeros(test_ref.n_rows)])
            preds = clf.decision_function(probe) >= 0.5
            accuracy = float(np.mean(preds == (truth == 1.0)))
        else:
            accuracy = float("nan")
        self.diagnostics_ = {"test_accuracy": accuracy, "history": clf.history_}
        return self

    def score_samples(self, candidates):
        rows = _as_bitmatrix(candidates, self.dim_).to_array().astype(np.float64)
        return self.classifier_.decision_function(rows)


class AdisAttack(MembershipAttack):
    """Detector on an augmented feature space.

    Feature layout per row x (dimension k + 4):
        [ PCA(x) | one-way Hamming loss vs held-out synthetic
          | two-way Hamming gap | two-way Euclidean gap in PCA space
          | density log-ratio ]
    The held-out slices used for the distance features are excluded from
    classifier training. Features are standardized with moments frozen on
    the training rows; the raw feature scales differ by orders of
    magnitude otherwise. ``augment=False`` keeps only the PCA block.
    """

    name = "adis"

    def __init__(
        self,
        holdout: int = 300,
        pca_components: int | None = None,
        gmm_components: int = 8,
        hidden: tuple[int, ...] = (64, 32),
        epochs: int = 30,
        batch_size: int = 100,
        learning_rate: float = 1e-3,
        patience: int = 10,
        lr_decay_factor: float = 0.5,
        resample_period: int = 3,
        val_fraction: float = 0.2,
        augment: bool = True,
    ):
        self.holdout = holdout
        self.pca_components = pca_components
        self.gmm_components = gmm_components
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.patience = patience
        self.lr_decay_factor = lr_decay_factor
        self.resample_period = resample_period
        self.val_fraction = val_fraction
        self.augment = augment

    def fit(self, ctx, generator=None):
        self.dim_ = ctx.dim
        if self.holdout < 1:
            raise ValueError("holdout must be >= 1")
        if self.holdout >= ctx.x_g.n_rows or self.holdout >= ctx.x_r.n_rows:
            raise ValueError(
                f"holdout={self.holdout} exceeds pool "
                f"(|X_G|={ctx.x_g.n_rows}, |X_R|={ctx.x_r.n_rows})"
            )
        rng = make_rng(derive_seed(ctx.seed, "adis-holdout"))
        g_order = rng.permutation(ctx.x_g.n_rows)
        r_order = rng.permutation(ctx.x_r.n_rows)
        self.held_g_ = ctx.x_g.take(g_order[: self.holdout])
        self.held_r_ = ctx.x_r.take(r_order[: self.holdout])
        train_g = ctx.x_g.take(g_order[self.holdout :])
        train_r = ctx.x_r.take(r_order[self.holdout :])

        union = np.vstack(
            [train_g.to_array().astype(np.float64), train_r.to_array().astype(np.float64)]
        )
        k = self.pca_components or default_pca_components(ctx.dim, union.shape[0])
        self.pca_ = Pca(n_components=k).fit(union)
        self.gmm_g_ = DiagonalGmm(
            n_components=self.gmm_components,
            random_state=derive_seed(ctx.seed, "adis-gmm-g"),
        ).fit(self.pca_.transform(train_g.to_array().astype(np.float64)))
        self.gmm_r_ = DiagonalGmm(
            n_components=self.gmm_components,
            random_state=derive_seed(ctx.seed, "adis-gmm-r"),
        ).fit(self.pca_.transform(train_r.to_array().astype(np.float64)))
        self.held_g_pca_ = self.pca_.transform(self.held_g_.to_array().astype(np.float64))
        self.held_r_pca_ = self.pca_.transform(self.held_r_.to_array().astype(np.float64))

        raw = np.vstack([self._raw_features(train_g), self._raw_features(train_r)])
        self.feature_mean_ = raw.mean(axis=0)
        self.feature_scale_ = np.maximum(raw.std(axis=0), 1e-12)
        features = (raw - self.feature_mean_) / self.feature_scale_
        labels = np.concatenate([np.ones(train_g.n_rows), np.zeros(train_r.n_rows)])

        hook = None
        if generator is not None:
            def hook(n, hook_seed):
                return self._featurize(generator.sample(n, seed=hook_seed))

        clf = MlpClassifier(
            hidden=tuple(self.hidden),
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            patience=self.patience,
            lr_decay_factor=self.lr_decay_factor,
            resample_period=self.resample_period,
            val_fraction=self.val_fraction,
            random_state=derive_seed(ctx.seed, "adis-train"),
        )
        clf.fit(features, labels, resample_hook=hook)
        self.classifier_ = clf
        self.diagnostics_ = {"history": clf.history_, "feature_dim": features.shape[1]}
        return self

    def _raw_features(self, rows) -> np.ndarray:
        rows = _as_bitmatrix(rows, self.dim_)
        dense = rows.to_array().astype(np.float64)
        z = self.pca_.transform(dense)
        if not self.augment:
            return z
        ham_g = reconstruction_loss(rows, self.held_g_, "hamming")
        ham_r = reconstruction_loss(rows, self.held_r_, "hamming")
        l2_gap = _min_l2(z, self.held_r_pca_) - _min_l2(z, self.held_g_pca_)
        ratio = self.gmm_g_.score_samples(z) - self.gmm_r_.score_samples(z)
        return np.column_stack([z, -ham_g, ham_r - ham_g, l2_gap, ratio])

    def _featurize(self, rows) -> np.ndarray:
        return (self._raw_features(rows) - self.feature_mean_) / self.feature_scale_

    def score_samples(self, candidates):
        return self.classifier_.decision_function(self._featurize(candidates))


class DomiasAttack(MembershipAttack):
    """Density-ratio attack: shared PCA, separate mixtures on each sample."""

    name = "domias"

    def __init__(self, pca_components: int | None = None, gmm_components: int = 8):
        self.pca_components = pca_components
        self.gmm_components = gmm_components

    def fit(self, ctx, generator=None):
        self.dim_ = ctx.dim
        x_g = ctx.x_g.to_array().astype(np.float64)
        x_r = ctx.x_r.to_array().astype(np.float64)
        union = np.vstack([x_g, x_r])
        k = self.pca_components or default_pca_components(ctx.dim, union.shape[0])
        self.pca_ = Pca(n_components=k).fit(union)
        self.gmm_g_ = DiagonalGmm(
            n_components=self.gmm_components,
            random_state=derive_seed(ctx.seed, "domias-gmm-g"),
        ).fit(self.pca_.transform(x_g))
        self.gmm_r_ = DiagonalGmm(
            n_components=self.gmm_components,
            random_state=derive_seed(ctx.seed, "domias-gmm-r"),
        ).fit(self.pca_.transform(x_r))
        return self

    def score_samples(self, candidates):
        rows = _as_bitmatrix(candidates, self.dim_).to_array().astype(np.float64)
        return domias_score(rows, self.pca_, self.gmm_g_, self.gmm_r_)


class BayesOracleAttack(MembershipAttack):
    """Exact Bayes-optimal score; only valid against the density oracle."""

    name = "bayes_oracle"

    def __init__(self):
        pass

    def fit(self, ctx, generator=None):
        if not isinstance(generator, OracleMixtureGenerator):
            raise ValueError("bayes_oracle requires a generator with exact densities")
        self.oracle_ = generator
        return self

    def score_samples(self, candidates):
        return bayes_oracle_attack(candidates, self.oracle_)


ATTACK_REGISTRY: dict[str, type[MembershipAttack]] = {
    cls.name: cls
    for cls in (
        OneWayDistanceAttack,
        TwoWayDistanceAttack,
        WeightedDistanceAttack,
        RobustHomerAttack,
        DetectorAttack,
        AdisAttack,
        DomiasAttack,
        BayesOracleAttack,
    )
}


def make_attack(name: str, params: dict | None = None) -> MembershipAttack:
    if name not in ATTACK_REGISTRY:
        raise ValueError(
            f"unknown attack {name!r}; valid names: {', '.join(sorted(ATTACK_REGISTRY))}"
        )
    return ATTACK_REGISTRY[name](**(params or {}))


@dataclass
class AttackScores:
    scores: np.ndarray
    labels: np.ndarray  # 1 = member, 0 = non-member
    attack: str
    run_id: int = 0

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64).ravel()
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.scores.shape != self.labels.shape:
            raise ValueError("scores and labels differ in length")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")
        if self.labels.size and not np.all((self.labels == 0) | (self.labels == 1)):
            raise ValueError("labels must be 0/1")


def save_scores_csv(scores: AttackScores, path: str) -> None:
    lines = ["run_id,attack,candidate_index,label,score"]
    for i, (label, score) in enumerate(zip(scores.labels, scores.scores)):
        lines.append(f"{scores.run_id},{scores.attack},{i},{label},{score:.17g}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_scores_csv(path: str) -> AttackScores:
    with open(path) as handle:
        header = handle.readline().rstrip("\n")
        if header != "run_id,attack,candidate_index,label,score":
            raise ValueError(f"{path}: unexpected header {header!r}")
        run_id, attack = None, None
        labels, scores = [], []
        for line in handle:
            run, name, _, label, score = line.rstrip("\n").split(",")
            if run_id is None:
                run_id, attack = int(run), name
            elif int(run) != run_id or name != attack:
                raise ValueError(f"{path}: mixed runs or attacks in one file")
            labels.append(int(label))
            scores.append(float(score))
    return AttackScores(np.array(scores), np.array(labels), attack or "", run_id or 0)
