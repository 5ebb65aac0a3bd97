"""Exact t-SNE embedding and per-participant loss histograms.

The t-SNE is the O(n^2) reference formulation: per-point Gaussian
bandwidths found by bisection on the perplexity constraint, symmetrized
affinities, Student-t low-dimensional kernel, and KL gradient descent with
momentum, adaptive gains, and early exaggeration. Scale here is a few
thousand rows, so nothing fancier is needed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .rng import derive_rng

P_MIN = 1e-12


def _pairwise_sq_dists(X: np.ndarray) -> np.ndarray:
    sq = (X**2).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.fill_diagonal(d2, 0.0)
    return np.maximum(d2, 0.0)


def _row_affinities(d2_row: np.ndarray, beta: float) -> np.ndarray:
    p = np.exp(-d2_row * beta)
    s = p.sum()
    return p / s if s > 0 else p


def _row_perplexity(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(2.0 ** (-(nz * np.log2(nz)).sum()))


def conditional_affinities(
    X: np.ndarray, perplexity: float, tol: float = 1e-5, max_iter: int = 120
) -> np.ndarray:
    """Row-stochastic conditional P with per-point bandwidths solving the
    perplexity constraint by bisection (to within `tol` in log-perplexity)."""
    n = len(X)
    d2 = _pairwise_sq_dists(X)
    P = np.zeros((n, n))
    target = np.log(perplexity)
    for i in range(n):
        row = np.delete(d2[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(max_iter):
            p = _row_affinities(row, beta)
            diff = np.log(_row_perplexity(p)) - target
            if abs(diff) < tol:
                break
            if diff > 0:  # too flat -> narrow the kernel
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (lo + beta) / 2.0
        P[i, np.arange(n) != i] = _row_affinities(row, beta)
    return P


@dataclass
class TsneResult:
    Y: np.ndarray              # (n, 2) embedding
    kl_history: list[float]    # KL divergence per recorded iteration
    P: np.ndarray              # symmetrized joint affinities


def tsne_embed(
    X,
    perplexity: float = 30.0,
    iterations: int = 1000,
    seed: int = 0,
    learning_rate: float = 200.0,
    early_exaggeration: float = 12.0,
    exaggeration_iters: int = 250,
    initial_momentum: float = 0.5,
    final_momentum: float = 0.8,
) -> TsneResult:
    """Exact t-SNE to 2 dimensions; deterministic per seed."""
    X = np.asarray(X, dtype=float)
    n = len(X)
    if n < 5:
        raise ValueError("t-SNE needs at least 5 points")
    if not perplexity < (n - 1) / 3:
        raise ValueError(
            f"perplexity {perplexity} infeasible for n={n}; needs perplexity < (n-1)/3"
        )
    cond = conditional_affinities(X, perplexity)
    P = (cond + cond.T) / (2.0 * n)
    P = np.maximum(P, P_MIN)

    rng = derive_rng(seed, "tsne-init")
    Y = rng.normal(0.0, 1e-4, (n, 2))
    velocity = np.zeros_like(Y)
    gains = np.ones_like(Y)
    kl_history: list[float] = []

    kl_current = kl_divergence(P, Y)
    for it in range(iterations):
        exaggeration = early_exaggeration if it < exaggeration_iters else 1.0
        momentum = initial_momentum if it < exaggeration_iters else final_momentum
        d2 = _pairwise_sq_dists(Y)
        num = 1.0 / (1.0 + d2)
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / num.sum(), P_MIN)
        PQ = (exaggeration * P - Q) * num
        grad = 4.0 * ((np.diag(PQ.sum(axis=1)) - PQ) @ Y)

        same_sign = np.sign(grad) == np.sign(velocity)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        gains = np.maximum(gains, 0.01)
        velocity = momentum * velocity - learning_rate * gains * grad

        if it < exaggeration_iters:
            Y = Y + velocity
            kl_current = kl_divergence(P, Y)
        else:
            # after exaggeration ends, enforce monotone KL descent:
            # halve the step while it would increase the objective, falling
            # back to a pure (momentum-free) gradient step if needed
            accepted = False
            for attempt in range(24):
                if attempt == 6:
                    velocity = -learning_rate * gains * grad
                candidate = Y + velocity
                kl_candidate = kl_divergence(P, candidate)
                if kl_candidate <= kl_current:
                    Y, kl_current, accepted = candidate, kl_candidate, True
                    break
                velocity = velocity * 0.5
            if not accepted:
                velocity = np.zeros_like(Y)
        Y = Y - Y.mean(axis=0)
        kl_history.append(kl_current)
    return TsneResult(Y, kl_history, P)


def kl_divergence(P: np.ndarray, Y: np.ndarray) -> float:
    """KL(P || Q) of an embedding; depends on Y only through distances."""
    d2 = _pairwise_sq_dists(np.asarray(Y, dtype=float))
    num = 1.0 / (1.0 + d2)
    np.fill_diagonal(num, 0.0)
    Q = np.maximum(num / num.sum(), P_MIN)
    return float((P * np.log(P / Q)).sum())


# ---------------------------------------------------------------------------
# loss histogram


@dataclass
class HistogramSpec:
    bin_edges: np.ndarray            # len bins + 1
    counts: np.ndarray               # participants per bin
    clusters: dict[str, int]         # participant -> loss cluster
    per_bin_clusters: list[dict[int, int]] = field(default_factory=list)


def participant_loss_histogram(
    mean_losses: dict[str, float], routing, bins: int = 10
) -> HistogramSpec:
    """Equal-width bins over [min, max] of per-participant mean losses; the
    top edge is inclusive so counts always sum to the participant count."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if not mean_losses:
        raise ValueError("no losses to bin")
    pids = sorted(mean_losses)
    values = np.array([mean_losses[p] for p in pids])
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    which = np.minimum(((values - lo) / (hi - lo) * bins).astype(int), bins - 1)
    counts = np.bincount(which, minlength=bins)
    clusters = {pid: routing.cluster_of(pid) for pid in pids}
    per_bin: list[dict[int, int]] = [{} for _ in range(bins)]
    for pid, b in zip(pids, which):
        c = clusters[pid]
        per_bin[b][c] = per_bin[b].get(c, 0) + 1
    return HistogramSpec(edges, counts, clusters, per_bin)


# ---------------------------------------------------------------------------
# file emitters


def write_embedding_csv(path, keys, Y, losses) -> None:
    """keys: iterable of (participant_id, date, split)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["participant_id", "date", "split", "x", "y", "loss"])
        for (pid, date, split), (x, y), loss in zip(keys, Y, losses):
            writer.writerow(
                [pid, date.isoformat(), split, repr(float(x)), repr(float(y)),
                 repr(float(loss))]
            )


def write_histogram_csv(path, spec: HistogramSpec) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_low", "bin_high", "count", "cluster"])
        for b in range(len(spec.counts)):
            lo, hi = spec.bin_edges[b], spec.bin_edges[b + 1]
            if not spec.per_bin_clusters[b]:
                writer.writerow([repr(float(lo)), repr(float(hi)), 0, ""])
                continue
            for cluster in sorted(spec.per_bin_clusters[b]):
                writer.writerow(
                    [repr(float(lo)), repr(float(hi)),
                     spec.per_bin_clusters[b][cluster], cluster]
                )


_SVG_COLORS = ["#4363d8", "#e6194b", "#3cb44b", "#f58231", "#911eb4", "#46f0f0"]


def scatter_svg(Y, values, width: int = 640, height: int = 480) -> str:
    """Minimal SVG scatter; point fill interpolates blue -> yellow by value."""
    Y = np.asarray(Y, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = Y.min(axis=0), Y.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    vlo, vhi = float(values.min()), float(values.max())
    vspan = vhi - vlo if vhi > vlo else 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
    ]
    for (x, y), v in zip(Y, values):
        px = 20 + (x - lo[0]) / span[0] * (width - 40)
        py = height - 20 - (y - lo[1]) / span[1] * (height - 40)
        t = (v - vlo) / vspan
        r, g, b = int(68 + t * (253 - 68)), int(1 + t * (231 - 1)), int(84 - t * 47)
        parts.append(
            f'<circle cx="{px:.1f}" cy="{py:.1f}" r="3" fill="rgb({r},{g},{b})"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def histogram_svg(spec: HistogramSpec, width: int = 640, height: int = 480) -> str:
    """Stacked bars per bin, one color per loss cluster."""
    bins = len(spec.counts)
    peak = max(1, int(spec.counts.max()))
    bar_w = (width - 40) / bins
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
    ]
    for b in range(bins):
        y0 = height - 20.0
        for cluster in sorted(spec.per_bin_clusters[b]):
            n = spec.per_bin_clusters[b][cluster]
            h = n / peak * (height - 40)
            y0 -= h
            color = _SVG_COLORS[cluster % len(_SVG_COLORS)]
            parts.append(
                f'<rect x="{20 + b * bar_w:.1f}" y="{y0:.1f}" '
                f'width="{bar_w * 0.9:.1f}" height="{h:.1f}" fill="{color}"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts)
