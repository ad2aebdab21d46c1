"""Synthetic SNP-like binary data: population model, sampling, role splits.

The population is a K-component mixture of product-Bernoulli site
frequencies. Frequencies are drawn once from Beta(0.8, 0.8), which has
the U shape of real allele-frequency spectra, and clamped to
[0.01, 0.99] so no site is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bitmatrix import BitMatrix
from .rng import derive_seed, make_rng

FREQ_MIN = 0.01
FREQ_MAX = 0.99


@dataclass
class SnpDistributionSpec:
    frequencies: np.ndarray  # (K, d) per-subpopulation site frequencies
    weights: np.ndarray  # (K,) mixture weights on the simplex
    seed: int = 0

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.frequencies.ndim != 2:
            raise ValueError("frequencies must be (K, d)")
        if self.weights.shape != (self.frequencies.shape[0],):
            raise ValueError("one weight per subpopulation required")
        if np.any(self.frequencies < FREQ_MIN) or np.any(self.frequencies > FREQ_MAX):
            raise ValueError(f"frequencies must lie in [{FREQ_MIN}, {FREQ_MAX}]")
        if abs(self.weights.sum() - 1.0) > 1e-12 or np.any(self.weights < 0):
            raise ValueError("weights must be a simplex vector")

    @property
    def dimension(self) -> int:
        return self.frequencies.shape[1]

    @property
    def subpopulations(self) -> int:
        return self.frequencies.shape[0]

    @classmethod
    def generate(
        cls,
        dimension: int,
        subpopulations: int = 3,
        seed: int = 0,
        beta_a: float = 0.8,
        beta_b: float = 0.8,
        weights=None,
    ) -> "SnpDistributionSpec":
        if dimension < 1 or subpopulations < 1:
            raise ValueError("dimension and subpopulations must be >= 1")
        rng = make_rng(derive_seed(seed, "snp-spec"))
        freqs = rng.beta(beta_a, beta_b, size=(subpopulations, dimension))
        freqs = np.clip(freqs, FREQ_MIN, FREQ_MAX)
        if weights is None:
            weights = np.full(subpopulations, 1.0 / subpopulations)
        return cls(freqs, np.asarray(weights, dtype=np.float64), seed=seed)

    def log_row_probability(self, rows: BitMatrix) -> np.ndarray:
        """log P(x) for each row, marginalized over subpopulations."""
        x = rows.to_array().astype(np.float64)
        log_p = np.log(self.frequencies)  # (K, d)
        log_q = np.log1p(-self.frequencies)
        # (n, K): sum_j x*log p + (1-x)*log(1-p) per component
        per_comp = x @ log_p.T + (1.0 - x) @ log_q.T
        per_comp += np.log(self.weights)[None, :]
        top = per_comp.max(axis=1, keepdims=True)
        return (top + np.log(np.exp(per_comp - top).sum(axis=1, keepdims=True))).ravel()

    def to_dict(self) -> dict:
        return {
            "frequencies": self.frequencies.tolist(),
            "weights": self.weights.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SnpDistributionSpec":
        return cls(
            np.array(doc["frequencies"], dtype=np.float64),
            np.array(doc["weights"], dtype=np.float64),
            seed=int(doc["seed"]),
        )


def sample_distribution(spec: SnpDistributionSpec, n: int, seed: int = 0) -> BitMatrix:
    """n i.i.d. rows: subpopulation ~ weights, then sites ~ Bernoulli(freq)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(derive_seed(seed, "snp-sample"))
    comps = rng.choice(spec.subpopulations, size=n, p=spec.weights)
    u = rng.random((n, spec.dimension))
    bits = (u < spec.frequencies[comps]).astype(np.uint8)
    return BitMatrix.from_array(bits)


@dataclass
class SplitPlan:
    train_size: int = 3000
    reference_size: int = 2008
    test_member_size: int = 500
    test_nonmember_size: int = 500

    def __post_init__(self):
        sizes = (
            self.train_size,
            self.reference_size,
            self.test_member_size,
            self.test_nonmember_size,
        )
        if any(s < 0 for s in sizes):
            raise ValueError("split sizes must be non-negative")
        if self.train_size < 1:
            raise ValueError("train_size must be >= 1")
        if self.test_member_size > self.train_size:
            raise ValueError("test members are drawn from the train rows")

    @property
    def rows_needed(self) -> int:
        # members reuse train rows, so they need no rows of their own
        return self.train_size + self.reference_size + self.test_nonmember_size

    def to_dict(self) -> dict:
        return {
            "train_size": self.train_size,
            "reference_size": self.reference_size,
            "test_member_size": self.test_member_size,
            "test_nonmember_size": self.test_nonmember_size,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SplitPlan":
        return cls(**{k: int(v) for k, v in doc.items()})


@dataclass
class DatasetSplit:
    train: BitMatrix
    reference: BitMatrix
    test_members: BitMatrix
    test_nonmembers: BitMatrix
    train_idx: np.ndarray = field(repr=False, default=None)
    reference_idx: np.ndarray = field(repr=False, default=None)
    member_idx: np.ndarray = field(repr=False, default=None)
    nonmember_idx: np.ndarray = field(repr=False, default=None)

    def indices_dict(self) -> dict:
        return {
            "train": self.train_idx.tolist(),
            "reference": self.reference_idx.tolist(),
            "members": self.member_idx.tolist(),
            "nonmembers": self.nonmember_idx.tolist(),
        }


def split_dataset(data: BitMatrix, plan: SplitPlan, seed: int = 0) -> DatasetSplit:
    """Disjoint train/reference/non-member roles; members sampled from train."""
    if plan.rows_needed > data.n_rows:
        raise ValueError(
            f"plan needs {plan.rows_needed} rows, data has {data.n_rows}"
        )
    rng = make_rng(derive_seed(seed, "split"))
    order = rng.permutation(data.n_rows)
    train_idx = np.sort(order[: plan.train_size])
    stop = plan.train_size + plan.reference_size
    reference_idx = np.sort(order[plan.train_size : stop])
    nonmember_idx = np.sort(order[stop : stop + plan.test_nonmember_size])
    member_idx = np.sort(rng.choice(train_idx, size=plan.test_member_size, replace=False))
    return DatasetSplit(
        train=data.take(train_idx),
        reference=data.take(reference_idx),
        test_members=data.take(member_idx),
        test_nonmembers=data.take(nonmember_idx),
        train_idx=train_idx,
        reference_idx=reference_idx,
        member_idx=member_idx,
        nonmember_idx=nonmember_idx,
    )
