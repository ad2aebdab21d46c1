"""ROC construction, low-FPR reporting, run averaging, and diagnostics.

Conventions pinned here:
  - ROC curves are threshold sweeps of "predict member when score exceeds
    tau"; tied scores collapse to a single vertex.
  - tpr_at_fpr defaults to the step convention (max TPR among operating
    points with FPR <= target, no interpolation). The interpolated read,
    equivalent to randomizing between adjacent thresholds, is available
    for calibration checks where integer-valued scores tie heavily.
  - AUC uses trapezoids, which equals the Mann-Whitney statistic with
    ties counted 1/2; on empirical curves it is computed in integer
    arithmetic so it matches pair counting exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .bitmatrix import BitMatrix, atomic_write_text, hamming_argmin, hamming_min
from .rng import derive_seed, make_rng

REPORT_FPR_GRID = (0.001, 0.005, 0.01, 0.1)


@dataclass
class RocCurve:
    thresholds: np.ndarray  # descending distinct scores, one per non-origin vertex
    fpr: np.ndarray  # len(thresholds) + 1, starts at 0, ends at 1
    tpr: np.ndarray
    n_members: float
    n_nonmembers: float
    tp_counts: np.ndarray | None = field(default=None, repr=False)
    fp_counts: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "thresholds": self.thresholds.tolist(),
            "fpr": self.fpr.tolist(),
            "tpr": self.tpr.tolist(),
            "n_members": self.n_members,
            "n_nonmembers": self.n_nonmembers,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RocCurve":
        n_m, n_n = doc["n_members"], doc["n_nonmembers"]
        fpr = np.array(doc["fpr"], dtype=np.float64)
        tpr = np.array(doc["tpr"], dtype=np.float64)
        tp = fp = None
        if float(n_m).is_integer() and float(n_n).is_integer():
            tp = np.rint(tpr * n_m).astype(np.int64)
            fp = np.rint(fpr * n_n).astype(np.int64)
        return cls(
            np.array(doc["thresholds"], dtype=np.float64),
            fpr,
            tpr,
            n_m,
            n_n,
            tp,
            fp,
        )


def _grouped_cumulative(scores, pos_weight, neg_weight):
    """Vertices of the threshold sweep: cumulative (fp, tp) per distinct score."""
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    cum_tp = np.cumsum(pos_weight[order])
    cum_fp = np.cumsum(neg_weight[order])
    ends = np.nonzero(np.append(np.diff(s) != 0, True))[0]
    return s[ends], cum_fp[ends], cum_tp[ends]


def roc_curve(scores, labels=None) -> RocCurve:
    """Empirical ROC from member (1) / non-member (0) labelled scores."""
    if labels is None:  # AttackScores-like object
        labels = scores.labels
        scores = scores.scores
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    n_m = int((labels == 1).sum())
    n_n = int((labels == 0).sum())
    if n_m == 0 or n_n == 0:
        raise ValueError("need both member and non-member scores")
    thresholds, fp, tp = _grouped_cumulative(
        scores, (labels == 1).astype(np.int64), (labels == 0).astype(np.int64)
    )
    tp_counts = np.concatenate([[0], tp]).astype(np.int64)
    fp_counts = np.concatenate([[0], fp]).astype(np.int64)
    return RocCurve(
        thresholds,
        fp_counts / n_n,
        tp_counts / n_m,
        n_m,
        n_n,
        tp_counts,
        fp_counts,
    )


def exact_roc(scores, member_mass, nonmember_mass) -> RocCurve:
    """ROC of a statistic over an enumerated domain with exact masses.

    ``member_mass``/``nonmember_mass`` are the per-point probabilities of
    the two hypothesis distributions (each summing to 1).
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    member_mass = np.asarray(member_mass, dtype=np.float64).ravel()
    nonmember_mass = np.asarray(nonmember_mass, dtype=np.float64).ravel()
    thresholds, fp, tp = _grouped_cumulative(scores, member_mass, nonmember_mass)
    total_tp = tp[-1] if tp.size else 0.0
    total_fp = fp[-1] if fp.size else 0.0
    return RocCurve(
        thresholds,
        np.concatenate([[0.0], fp / total_fp]),
        np.concatenate([[0.0], tp / total_tp]),
        float(total_tp),
        float(total_fp),
    )


def auc(curve: RocCurve) -> float:
    """Trapezoidal area; exact rational arithmetic on empirical curves."""
    if curve.tp_counts is not None and curve.fp_counts is not None:
        tp = curve.tp_counts.astype(object)
        fp = curve.fp_counts.astype(object)
        area2 = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])))
        return area2 / (2 * int(curve.n_members) * int(curve.n_nonmembers))
    return float(np.trapezoid(curve.tpr, curve.fpr))


def tpr_at_fpr(curve: RocCurve, target_fpr: float, interpolate: bool = False) -> float:
    """TPR achievable at FPR <= target (step), or the randomized-threshold
    read that interpolates linearly between adjacent operating points."""
    if not 0.0 <= target_fpr <= 1.0:
        raise ValueError("target_fpr must lie in [0, 1]")
    fpr, tpr = curve.fpr, curve.tpr
    idx = int(np.searchsorted(fpr, target_fpr, side="right")) - 1
    step_value = float(tpr[: idx + 1].max())
    if not interpolate:
        return step_value
    if target_fpr - fpr[idx] < 1e-15 or idx == len(fpr) - 1:
        return float(tpr[idx])
    nxt = idx + 1
    frac = (target_fpr - fpr[idx]) / (fpr[nxt] - fpr[idx])
    return float(tpr[idx] + frac * (tpr[nxt] - tpr[idx]))


@dataclass
class AveragedCurve:
    fpr_grid: np.ndarray
    mean_tpr: np.ndarray
    stderr: np.ndarray
    n_runs: int

    def to_dict(self) -> dict:
        return {
            "fpr_grid": self.fpr_grid.tolist(),
            "mean_tpr": self.mean_tpr.tolist(),
            "stderr": self.stderr.tolist(),
            "n_runs": self.n_runs,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AveragedCurve":
        return cls(
            np.array(doc["fpr_grid"], dtype=np.float64),
            np.array(doc["mean_tpr"], dtype=np.float64),
            np.array(doc["stderr"], dtype=np.float64),
            int(doc["n_runs"]),
        )


def default_fpr_grid(n_points: int = 200) -> np.ndarray:
    return np.logspace(-3.0, 0.0, n_points)


def average_runs(curves: list[RocCurve], fpr_grid=None) -> AveragedCurve:
    """Vertical averaging: mean and stderr of per-run TPR at each grid FPR."""
    if not curves:
        raise ValueError("no curves to average")
    grid = default_fpr_grid() if fpr_grid is None else np.asarray(fpr_grid, dtype=np.float64)
    per_run = np.array([[tpr_at_fpr(c, f) for f in grid] for c in curves])
    mean = per_run.mean(axis=0)
    if len(curves) > 1:
        stderr = per_run.std(axis=0, ddof=1) / np.sqrt(len(curves))
    else:
        stderr = np.zeros_like(mean)
    return AveragedCurve(grid, mean, stderr, len(curves))


@dataclass
class MemorizationReport:
    histogram: np.ndarray  # counts indexed by Hamming distance to train
    zero_count: int
    total: int
    ref_histogram: np.ndarray | None = None

    @property
    def zero_fraction(self) -> float:
        return self.zero_count / self.total


def memorization_check(
    generator,
    train: BitMatrix,
    total: int = 100_000,
    batch_size: int = 3500,
    reference: BitMatrix | None = None,
    seed: int = 0,
) -> MemorizationReport:
    """Min Hamming distance to the train rows for batched synthetic draws.

    Distance zero means a verbatim training row was synthesized. When a
    reference sample is supplied, a second histogram of distances to the
    reference rows is computed on the same draws for comparison.
    """
    if total < 1 or batch_size < 1:
        raise ValueError("total and batch_size must be >= 1")
    hist = np.zeros(train.n_cols + 1, dtype=np.int64)
    ref_hist = np.zeros(train.n_cols + 1, dtype=np.int64) if reference is not None else None
    done = 0
    batch_index = 0
    while done < total:
        n = min(batch_size, total - done)
        batch = generator.sample(n, seed=seed + batch_index)
        hist += np.bincount(hamming_min(batch, train), minlength=train.n_cols + 1)
        if reference is not None:
            ref_hist += np.bincount(
                hamming_min(batch, reference), minlength=train.n_cols + 1
            )
        done += n
        batch_index += 1
    return MemorizationReport(hist, int(hist[0]), total, ref_hist)


def mre_gap(synthetic: BitMatrix, train: BitMatrix, reference: BitMatrix) -> float:
    """(MRE_ref - MRE_train) / MRE_ref with squared-L2 recovery errors.

    On binary rows the squared Euclidean distance equals the Hamming
    distance, so the medians are medians of integer distances.
    """
    mre_train = float(np.median(hamming_min(train, synthetic)))
    mre_ref = float(np.median(hamming_min(reference, synthetic)))
    if mre_ref == 0.0:
        raise ValueError("reference MRE is zero; the gap is undefined")
    return (mre_ref - mre_train) / mre_ref


def nearest_synthetic(rows: BitMatrix, synthetic: BitMatrix) -> BitMatrix:
    """Closest synthetic row for each input row (Hamming metric)."""
    return synthetic.take(hamming_argmin(rows, synthetic))


def _as_float(X) -> np.ndarray:
    if isinstance(X, BitMatrix):
        return X.to_array().astype(np.float64)
    return np.asarray(X, dtype=np.float64)


def median_heuristic_bandwidth(X, Y) -> float:
    z = np.vstack([_as_float(X), _as_float(Y)])
    sq = (z**2).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * z @ z.T, 0.0)
    upper = np.sqrt(d2[np.triu_indices(len(z), k=1)])
    med = float(np.median(upper))
    return med if med > 0 else 1.0


def _kernel_matrix(A, B, kernel: str, bandwidth: float | None) -> np.ndarray:
    if kernel == "linear":
        return A @ B.T
    if kernel == "rbf":
        if bandwidth is None:
            raise ValueError("rbf kernel needs a bandwidth")
        sq_a = (A**2).sum(axis=1)
        sq_b = (B**2).sum(axis=1)
        d2 = np.maximum(sq_a[:, None] + sq_b[None, :] - 2.0 * A @ B.T, 0.0)
        return np.exp(-d2 / (2.0 * bandwidth**2))
    raise ValueError(f"unknown kernel {kernel!r}")


def mmd2_unbiased(X, Y, kernel: str = "linear", bandwidth: float | None = None) -> float:
    """U-statistic estimate of squared MMD; can be negative."""
    X, Y = _as_float(X), _as_float(Y)
    m, n = X.shape[0], Y.shape[0]
    if m < 2 or n < 2:
        raise ValueError("need at least 2 rows per sample")
    if kernel == "rbf" and bandwidth is None:
        bandwidth = median_heuristic_bandwidth(X, Y)
    k_xx = _kernel_matrix(X, X, kernel, bandwidth)
    k_yy = _kernel_matrix(Y, Y, kernel, bandwidth)
    k_xy = _kernel_matrix(X, Y, kernel, bandwidth)
    term_x = (k_xx.sum() - np.trace(k_xx)) / (m * (m - 1))
    term_y = (k_yy.sum() - np.trace(k_yy)) / (n * (n - 1))
    return float(term_x + term_y - 2.0 * k_xy.sum() / (m * n))


def permutation_pvalue(
    X,
    Y,
    kernel: str = "rbf",
    bandwidth: float | None = None,
    permutations: int = 999,
    seed: int = 0,
) -> float:
    """p = (1 + #{permuted MMD^2 >= observed}) / (permutations + 1).

    The kernel matrix (and the median-heuristic bandwidth) is computed once
    on the pooled sample; each permutation re-labels rows with its own
    seed-derived generator, so results are independent of evaluation order.
    """
    X, Y = _as_float(X), _as_float(Y)
    m, n = X.shape[0], Y.shape[0]
    if m < 2 or n < 2:
        raise ValueError("need at least 2 rows per sample")
    if kernel == "rbf" and bandwidth is None:
        bandwidth = median_heuristic_bandwidth(X, Y)
    pooled = np.vstack([X, Y])
    K = _kernel_matrix(pooled, pooled, kernel, bandwidth)
    diag = np.diag(K).copy()
    N = m + n

    def stat_for(z: np.ndarray) -> np.ndarray:
        a = z @ K
        zkz = (a * z).sum(axis=-1)
        rowsum = a.sum(axis=-1)
        diag_x = z @ diag
        s_xx = zkz - diag_x
        s_yy = K.sum() - 2.0 * rowsum + zkz - (diag.sum() - diag_x)
        s_xy = rowsum - zkz
        return s_xx / (m * (m - 1)) + s_yy / (n * (n - 1)) - 2.0 * s_xy / (m * n)

    z_obs = np.concatenate([np.ones(m), np.zeros(n)])
    observed = float(stat_for(z_obs))
    Z = np.zeros((permutations, N))
    for i in range(permutations):
        rng = make_rng(derive_seed(seed, "perm", i))
        Z[i, rng.permutation(N)[:m]] = 1.0
    perm_stats = stat_for(Z)
    return float((1 + int(np.sum(perm_stats >= observed))) / (permutations + 1))


@dataclass
class AttackResult:
    name: str
    auc_runs: list[float]
    tpr_runs: list[dict]  # [{"fpr": f, "tprs": [per-run]}] sorted by fpr
    curves: list[RocCurve]
    mean_curve: AveragedCurve

    @property
    def auc_mean(self) -> float:
        return float(np.mean(self.auc_runs))

    @property
    def auc_stderr(self) -> float:
        if len(self.auc_runs) < 2:
            return 0.0
        return float(np.std(self.auc_runs, ddof=1) / np.sqrt(len(self.auc_runs)))

    def tpr_mean(self, fpr: float) -> float:
        for entry in self.tpr_runs:
            if entry["fpr"] == fpr:
                return float(np.mean(entry["tprs"]))
        raise KeyError(f"fpr {fpr} not in report grid")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "auc_runs": self.auc_runs,
            "auc_mean": self.auc_mean,
            "auc_stderr": self.auc_stderr,
            "tpr_runs": self.tpr_runs,
            "curves": [c.to_dict() for c in self.curves],
            "mean_curve": self.mean_curve.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AttackResult":
        return cls(
            doc["name"],
            list(doc["auc_runs"]),
            list(doc["tpr_runs"]),
            [RocCurve.from_dict(c) for c in doc["curves"]],
            AveragedCurve.from_dict(doc["mean_curve"]),
        )


@dataclass
class EvalReport:
    attacks: dict[str, AttackResult]
    fpr_grid: list[float]
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "fpr_grid": list(self.fpr_grid),
            "attacks": {name: res.to_dict() for name, res in self.attacks.items()},
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        return cls(
            {name: AttackResult.from_dict(d) for name, d in doc["attacks"].items()},
            [float(f) for f in doc["fpr_grid"]],
            doc.get("metadata", {}),
        )


def build_report(
    scores_by_attack: dict[str, list],
    fpr_grid=REPORT_FPR_GRID,
    metadata: dict | None = None,
) -> EvalReport:
    """Aggregate per-run AttackScores into curves, AUCs, and grid TPRs."""
    grid = sorted(float(f) for f in fpr_grid)
    attacks: dict[str, AttackResult] = {}
    for name, runs in scores_by_attack.items():
        curves = [roc_curve(s) for s in runs]
        attacks[name] = AttackResult(
            name=name,
            auc_runs=[auc(c) for c in curves],
            tpr_runs=[
                {"fpr": f, "tprs": [tpr_at_fpr(c, f) for c in curves]} for f in grid
            ],
            curves=curves,
            mean_curve=average_runs(curves),
        )
    return EvalReport(attacks, grid, metadata or {})


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def results_csv_text(report: EvalReport) -> str:
    dataset = report.metadata.get("dataset", "synthetic")
    header = ["attack", "dataset", "n_runs", "auc_mean", "auc_stderr"] + [
        f"tpr@{f:g}" for f in report.fpr_grid
    ]
    lines = [",".join(header)]
    for name, res in report.attacks.items():
        row = [
            name,
            dataset,
            str(len(res.auc_runs)),
            _fmt(res.auc_mean),
            _fmt(res.auc_stderr),
        ] + [_fmt(res.tpr_mean(f)) for f in report.fpr_grid]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def metrics_long_csv_text(report: EvalReport) -> str:
    lines = ["attack,metric,value"]
    for name, res in report.attacks.items():
        for f in report.fpr_grid:
            lines.append(f"{name},tpr@{f:g},{_fmt(res.tpr_mean(f))}")
        lines.append(f"{name},auc,{_fmt(res.auc_mean)}")
    return "\n".join(lines) + "\n"


_SVG_PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
)


def roc_loglog_svg(report: EvalReport, width: int = 720, height: int = 540) -> str:
    """Dependency-free log-log ROC plot of the mean curves, clipped to [1e-3, 1]."""
    left, right, top, bottom = 70, 20, 20, 50
    plot_w, plot_h = width - left - right, height - top - bottom
    lo = 1e-3

    def sx(f):
        return left + (np.log10(max(f, lo)) + 3.0) / 3.0 * plot_w

    def sy(t):
        return top + plot_h - (np.log10(max(t, lo)) + 3.0) / 3.0 * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" '
        'fill="white" stroke="black"/>',
    ]
    for exp in (-3, -2, -1, 0):
        v = 10.0**exp
        parts.append(
            f'<line x1="{sx(v):.2f}" y1="{top}" x2="{sx(v):.2f}" y2="{top + plot_h}" '
            'stroke="#dddddd"/>'
        )
        parts.append(
            f'<line x1="{left}" y1="{sy(v):.2f}" x2="{left + plot_w}" y2="{sy(v):.2f}" '
            'stroke="#dddddd"/>'
        )
        parts.append(
            f'<text x="{sx(v):.2f}" y="{height - 28}" font-size="12" '
            f'text-anchor="middle">1e{exp}</text>'
        )
        parts.append(
            f'<text x="{left - 8}" y="{sy(v) + 4:.2f}" font-size="12" '
            f'text-anchor="end">1e{exp}</text>'
        )
    parts.append(
        f'<line x1="{sx(lo):.2f}" y1="{sy(lo):.2f}" x2="{sx(1):.2f}" y2="{sy(1):.2f}" '
        'stroke="#999999" stroke-dasharray="4,3"/>'
    )
    parts.append(
        f'<text x="{left + plot_w / 2:.2f}" y="{height - 10}" font-size="13" '
        'text-anchor="middle">false positive rate</text>'
    )
    for i, (name, res) in enumerate(report.attacks.items()):
        color = _SVG_PALETTE[i % len(_SVG_PALETTE)]
        pts = " ".join(
            f"{sx(f):.2f},{sy(t):.2f}"
            for f, t in zip(res.mean_curve.fpr_grid, res.mean_curve.mean_tpr)
        )
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}"/>')
        parts.append(
            f'<text x="{left + 10}" y="{top + 16 + 14 * i}" font-size="12" '
            f'fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(report: EvalReport, out_dir: str) -> None:
    """Write results.csv, metrics_long.csv, results.json, roc_loglog.svg,
    and PCA convergence exports when present in metadata."""
    os.makedirs(out_dir, exist_ok=True)
    atomic_write_text(os.path.join(out_dir, "results.csv"), results_csv_text(report))
    atomic_write_text(
        os.path.join(out_dir, "metrics_long.csv"), metrics_long_csv_text(report)
    )
    atomic_write_text(
        os.path.join(out_dir, "results.json"),
        json.dumps(report.to_dict(), indent=2) + "\n",
    )
    atomic_write_text(os.path.join(out_dir, "roc_loglog.svg"), roc_loglog_svg(report))
    diag = report.metadata.get("pca_diagnostics")
    if diag:
        lines = ["component,train_variance,synthetic_variance"]
        for comp, tv, sv in diag["scree"]:
            lines.append(f"{comp},{_fmt(tv)},{_fmt(sv)}")
        atomic_write_text(os.path.join(out_dir, "pca_scree.csv"), "\n".join(lines) + "\n")
        lines = ["set," + ",".join(f"pc{i + 1}" for i in range(diag["n_scatter"]))]
        for tag in ("train", "synthetic"):
            for row in diag["scatter"][tag]:
                lines.append(tag + "," + ",".join(_fmt(v) for v in row))
        atomic_write_text(
            os.path.join(out_dir, "pca_scatter.csv"), "\n".join(lines) + "\n"
        )


def load_report(path: str) -> EvalReport:
    with open(path) as handle:
        return EvalReport.from_dict(json.load(handle))
