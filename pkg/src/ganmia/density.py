"""PCA reduction and diagonal-covariance Gaussian mixtures.

These power the density-ratio attack (densities fitted separately on
synthetic and reference samples after a shared PCA) and the augmented
detector's likelihood-ratio feature. Both estimators follow the
fit/transform/score_samples protocol and serialize to versioned JSON.
"""

from __future__ import annotations

import json

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .bitmatrix import BitMatrix, atomic_write_text
from .rng import derive_seed, make_rng
from .validation import check_dim, check_real_matrix

VAR_FLOOR = 1e-6
_LOG_2PI = float(np.log(2.0 * np.pi))


class Pca(BaseEstimator, TransformerMixin):
    """Top-k principal components of the sample covariance (ddof=1).

    The eigendecomposition runs on the d x d covariance or the n x n Gram
    matrix, whichever is smaller. Component signs are fixed so the
    largest-magnitude entry of each component is positive.
    """

    def __init__(self, n_components: int = 2):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = check_real_matrix(X, "X")
        n, d = X.shape
        k = self.n_components
        if n < 2:
            raise ValueError("PCA needs at least 2 rows")
        if not 1 <= k <= min(n - 1, d):
            raise ValueError(f"n_components={k} must be in [1, min(n-1, d)]={min(n - 1, d)}")
        self.mean_ = X.mean(axis=0)
        xc = X - self.mean_
        if d <= n:
            cov = (xc.T @ xc) / (n - 1)
            eigval, eigvec = np.linalg.eigh(cov)
            order = np.argsort(eigval)[::-1][:k]
            variances = eigval[order]
            components = eigvec[:, order].T
        else:
            gram = (xc @ xc.T) / (n - 1)
            eigval, eigvec = np.linalg.eigh(gram)
            order = np.argsort(eigval)[::-1][:k]
            variances = eigval[order]
            scale = np.sqrt(np.maximum(variances, 0.0) * (n - 1))
            if np.any(scale <= 1e-12 * max(scale.max(), 1.0)):
                raise ValueError("data rank too low for requested n_components")
            components = (xc.T @ eigvec[:, order] / scale).T
        # deterministic sign: largest-|entry| coordinate made positive
        for row in components:
            if row[np.argmax(np.abs(row))] < 0:
                row *= -1.0
        self.components_ = components
        self.explained_variance_ = np.maximum(variances, 0.0)
        return self

    def transform(self, X) -> np.ndarray:
        X = check_real_matrix(X, "X")
        check_dim(X.shape[1], self.mean_.size, "X")
        return (X - self.mean_) @ self.components_.T

    def inverse_transform(self, Z) -> np.ndarray:
        Z = check_real_matrix(Z, "Z")
        check_dim(Z.shape[1], self.components_.shape[0], "Z")
        return Z @ self.components_ + self.mean_

    def to_dict(self) -> dict:
        return {
            "kind": "pca",
            "version": 1,
            "mean": self.mean_.tolist(),
            "components": self.components_.tolist(),
            "explained_variance": self.explained_variance_.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Pca":
        if doc.get("kind") != "pca" or doc.get("version") != 1:
            raise ValueError("not a version-1 pca document")
        components = np.array(doc["components"], dtype=np.float64)
        model = cls(n_components=components.shape[0])
        model.mean_ = np.array(doc["mean"], dtype=np.float64)
        model.components_ = components
        model.explained_variance_ = np.array(doc["explained_variance"], dtype=np.float64)
        return model


def default_pca_components(dimension: int, n_rows: int) -> int:
    """100 components up to 1000 sites, 300 beyond, clamped to feasibility."""
    target = 100 if dimension <= 1000 else 300
    return max(1, min(target, dimension, n_rows - 1))


class DiagonalGmm(BaseEstimator):
    """EM-fitted Gaussian mixture with diagonal, floored covariances."""

    def __init__(
        self,
        n_components: int = 8,
        max_iter: int = 200,
        tol: float = 1e-6,
        var_floor: float = VAR_FLOOR,
        random_state: int = 0,
    ):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol
        self.var_floor = var_floor
        self.random_state = random_state

    def _seed_means(self, X: np.ndarray, rng) -> np.ndarray:
        """k-means++-style spread: next mean drawn proportional to squared gap."""
        n = X.shape[0]
        chosen = [int(rng.integers(n))]
        d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
        for _ in range(1, self.n_components):
            total = d2.sum()
            if total <= 0:
                chosen.append(int(rng.integers(n)))
            else:
                chosen.append(int(rng.choice(n, p=d2 / total)))
            d2 = np.minimum(d2, ((X - X[chosen[-1]]) ** 2).sum(axis=1))
        return X[chosen].copy()

    def _log_component_densities(self, X: np.ndarray) -> np.ndarray:
        """(n, K) array of log w_k + log N(x; mean_k, diag var_k)."""
        means, variances = self.means_, self.covariances_
        quad = (
            (X**2) @ (1.0 / variances).T
            - 2.0 * X @ (means / variances).T
            + ((means**2) / variances).sum(axis=1)[None, :]
        )
        log_norm = -0.5 * (np.log(variances).sum(axis=1) + means.shape[1] * _LOG_2PI)
        return np.log(self.weights_)[None, :] + log_norm[None, :] - 0.5 * quad

    def _em(self, X: np.ndarray, seed: int) -> tuple[list[float], bool]:
        n, d = X.shape
        rng = make_rng(seed)
        self.means_ = self._seed_means(X, rng)
        base_var = X.var(axis=0) + self.var_floor
        self.covariances_ = np.tile(base_var, (self.n_components, 1))
        self.weights_ = np.full(self.n_components, 1.0 / self.n_components)

        history: list[float] = []
        floored = False
        for _ in range(self.max_iter):
            log_joint = self._log_component_densities(X)
            top = log_joint.max(axis=1, keepdims=True)
            log_like = top + np.log(np.exp(log_joint - top).sum(axis=1, keepdims=True))
            mean_ll = float(log_like.mean())
            if history and mean_ll < history[-1] - 1e-9 and not floored:
                raise RuntimeError("EM log-likelihood decreased")
            improved = not history or mean_ll - history[-1] >= self.tol
            history.append(mean_ll)
            if not improved:
                break
            resp = np.exp(log_joint - log_like)
            nk = resp.sum(axis=0)
            if np.any(nk / n < 1e-8):
                return history, True
            self.weights_ = nk / n
            self.means_ = (resp.T @ X) / nk[:, None]
            second = (resp.T @ (X**2)) / nk[:, None]
            variances = second - self.means_**2
            floored = bool(np.any(variances < self.var_floor))
            self.covariances_ = np.maximum(variances, self.var_floor)
        return history, False

    def fit(self, X, y=None):
        X = check_real_matrix(X, "X")
        if X.shape[0] < self.n_components:
            raise ValueError("need at least one row per component")
        history, degenerate = self._em(X, derive_seed(self.random_state, "gmm", 0))
        reseeded = False
        if degenerate:
            # one retry with a different seeding, then accept what we get
            reseeded = True
            history, degenerate = self._em(X, derive_seed(self.random_state, "gmm", 1))
        self.log_likelihood_history_ = history
        self.diagnostics_ = {"reseeded": reseeded, "degenerate": degenerate}
        return self

    def score_samples(self, X) -> np.ndarray:
        """Per-row log density via log-sum-exp over components."""
        X = check_real_matrix(X, "X")
        check_dim(X.shape[1], self.means_.shape[1], "X")
        log_joint = self._log_component_densities(X)
        top = log_joint.max(axis=1, keepdims=True)
        return (top + np.log(np.exp(log_joint - top).sum(axis=1, keepdims=True))).ravel()

    def to_dict(self) -> dict:
        return {
            "kind": "diag_gmm",
            "version": 1,
            "weights": self.weights_.tolist(),
            "means": self.means_.tolist(),
            "covariances": self.covariances_.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DiagonalGmm":
        if doc.get("kind") != "diag_gmm" or doc.get("version") != 1:
            raise ValueError("not a version-1 diag_gmm document")
        means = np.array(doc["means"], dtype=np.float64)
        model = cls(n_components=means.shape[0])
        model.weights_ = np.array(doc["weights"], dtype=np.float64)
        model.means_ = means
        model.covariances_ = np.array(doc["covariances"], dtype=np.float64)
        model.log_likelihood_history_ = []
        model.diagnostics_ = {}
        return model


def domias_score(rows, pca: Pca, gmm_synthetic: DiagonalGmm, gmm_reference: DiagonalGmm):
    """log P_G(pca(x)) - log P_R(pca(x)); higher means more member-like."""
    if isinstance(rows, BitMatrix):
        rows = rows.to_array().astype(np.float64)
    z = pca.transform(rows)
    return gmm_synthetic.score_samples(z) - gmm_reference.score_samples(z)


def save_density_model(model, path: str) -> None:
    atomic_write_text(path, json.dumps(model.to_dict()) + "\n")


def load_density_model(path: str):
    with open(path) as handle:
        doc = json.load(handle)
    if doc.get("kind") == "pca":
        return Pca.from_dict(doc)
    if doc.get("kind") == "diag_gmm":
        return DiagonalGmm.from_dict(doc)
    raise ValueError(f"unknown density model kind {doc.get('kind')!r}")
