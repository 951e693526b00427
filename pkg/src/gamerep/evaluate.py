"""Generalization metrics over representations: silhouette score, accuracy,
confusion matrix, an exact t-SNE projector, and the combined evaluation
report for a trained model."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.spatial.distance import cdist

from . import model
from .dataset import Corpus, DatasetManifest, SplitSpec, load_corpus
from .errors import ConfigError, DataError
from .model import Parameters


@dataclass
class SilhouetteReport:
    score: float
    per_genre: dict[int, float]
    a: np.ndarray
    b: np.ndarray
    s: np.ndarray


def silhouette(reps: np.ndarray, labels) -> SilhouetteReport:
    """Mean silhouette coefficient under Euclidean distance.

    Points in a singleton cluster, and points with a = b = 0, score 0.
    """
    reps = np.asarray(reps, dtype=np.float64)
    labels = np.asarray(labels)
    n = len(labels)
    if n < 2 or reps.shape[0] != n:
        raise DataError("silhouette needs at least 2 points aligned with their labels")
    classes, inv = np.unique(labels, return_inverse=True)
    if len(classes) < 2:
        raise DataError("silhouette needs at least 2 distinct labels")
    dist = cdist(reps, reps)
    onehot = np.zeros((n, len(classes)))
    onehot[np.arange(n), inv] = 1.0
    counts = onehot.sum(axis=0)
    sums = dist @ onehot
    own = counts[inv]
    a = sums[np.arange(n), inv] / np.maximum(own - 1, 1)
    mean_to = sums / counts
    mean_to[np.arange(n), inv] = np.inf
    b = mean_to.min(axis=1)
    top = np.maximum(a, b)
    s = np.where((own > 1) & (top > 0), (b - a) / np.where(top > 0, top, 1.0), 0.0)
    per_genre = {int(c): float(s[inv == k].mean()) for k, c in enumerate(classes)}
    return SilhouetteReport(float(s.mean()), per_genre, a, b, s)


def predicted_labels(probs: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum: ties go to the lowest class id
    return np.argmax(np.asarray(probs), axis=1)


def accuracy(probs, labels) -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise DataError("accuracy of an empty set is undefined")
    return float((predicted_labels(probs) == labels).mean())


def confusion(probs, labels, n_classes: int | None = None) -> np.ndarray:
    """Counts with rows = true genre, columns = predicted genre."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise DataError("confusion matrix of an empty set is undefined")
    probs = np.asarray(probs)
    n = n_classes or probs.shape[1]
    cm = np.zeros((n, n), dtype=np.int64)
    np.add.at(cm, (labels, predicted_labels(probs)), 1)
    return cm


def row_percentages(cm: np.ndarray) -> np.ndarray:
    totals = cm.sum(axis=1, keepdims=True)
    return 100.0 * cm / np.where(totals > 0, totals, 1)


# ---------------------------------------------------------------------------
# t-SNE

@dataclass
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_switch: int = 250
    seed: int = 0
    tol: float = 1e-4
    max_search: int = 50

    def validate(self, n: int) -> None:
        if self.iterations < 1:
            raise ConfigError("t-SNE needs at least one iteration")
        if n < 10:
            raise ConfigError(f"t-SNE needs at least 10 points, got {n}")
        if not 1.0 < self.perplexity < n / 3.0:
            raise ConfigError(f"perplexity {self.perplexity} infeasible for {n} points "
                              f"(need 1 < perplexity < {n / 3:.1f})")


@dataclass
class TsneResult:
    coords: np.ndarray
    P: np.ndarray
    betas: np.ndarray
    entropies: np.ndarray
    kl: np.ndarray


def _row_entropy(d_row: np.ndarray, beta: float):
    """Entropy in bits of exp(-beta * d) normalized, plus the distribution."""
    w = np.exp(-beta * (d_row - d_row.min()))
    total = w.sum()
    p = w / total
    nz = p > 0
    return float(-(p[nz] * np.log2(p[nz])).sum()), p


def conditional_affinities(sq_dist: np.ndarray, perplexity: float, tol: float = 1e-4,
                           max_iter: int = 50):
    """Row-conditional Gaussian affinities with per-row precision found by
    bisection so each row's entropy matches log2(perplexity)."""
    n = sq_dist.shape[0]
    target = math.log2(perplexity)
    P = np.zeros((n, n))
    betas = np.ones(n)
    entropies = np.zeros(n)
    for i in range(n):
        d = np.delete(sq_dist[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        H, p = _row_entropy(d, beta)
        for _ in range(max_iter):
            if abs(H - target) < tol:
                break
            if H > target:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
            H, p = _row_entropy(d, beta)
        P[i, np.arange(n) != i] = p
        betas[i] = beta
        entropies[i] = H
    return P, betas, entropies


def joint_affinities(P_cond: np.ndarray) -> np.ndarray:
    P = P_cond + P_cond.T
    np.fill_diagonal(P, 0.0)
    return P / P.sum()


def _kl(P, Q):
    nz = P > 0
    return float((P[nz] * np.log(P[nz] / np.maximum(Q[nz], 1e-300))).sum())


def tsne_fit(reps: np.ndarray, cfg: TsneConfig | None = None) -> TsneResult:
    cfg = cfg or TsneConfig()
    X = np.asarray(reps, dtype=np.float64)
    n = len(X)
    cfg.validate(n)
    sq = cdist(X, X, "sqeuclidean")
    # scale-free search: distances normalized by their mean
    scale = sq[~np.eye(n, dtype=bool)].mean()
    if scale > 0:
        sq = sq / scale
    Pc, betas, ent = conditional_affinities(sq, cfg.perplexity, cfg.tol, cfg.max_search)
    P = joint_affinities(Pc)

    rng = np.random.default_rng(cfg.seed)
    Y = rng.normal(0.0, 1e-4, (n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    kl = np.zeros(cfg.iterations)
    for it in range(cfg.iterations):
        exag = cfg.exaggeration if it < cfg.exaggeration_iters else 1.0
        momentum = 0.5 if it < cfg.momentum_switch else 0.8
        diff = Y[:, None, :] - Y[None, :, :]
        num = 1.0 / (1.0 + (diff ** 2).sum(axis=2))
        np.fill_diagonal(num, 0.0)
        Q = num / num.sum()
        kl[it] = _kl(P, Q)
        W = (exag * P - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
        inc = np.sign(grad) != np.sign(update)
        gains = np.where(inc, gains + 0.2, gains * 0.8)
        gains = np.maximum(gains, 0.01)
        update = momentum * update - cfg.learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
    return TsneResult(Y, P, betas, ent, kl)


def tsne(reps: np.ndarray, cfg: TsneConfig | None = None) -> np.ndarray:
    """2-D coordinates aligned row-wise with ``reps``."""
    return tsne_fit(reps, cfg).coords


# ---------------------------------------------------------------------------
# model evaluation

@dataclass
class EvalReport:
    train_acc: float
    val_acc: float
    silhouette: float
    per_genre_silhouette: dict[str, float]
    confusion: list[list[int]]
    seeds: list[int] = field(default_factory=list)
    train_silhouette: float | None = None
    space: str = "representation"

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


REPORT_SCHEMA = {
    "type": "object",
    "required": ["train_acc", "val_acc", "silhouette", "per_genre_silhouette", "confusion", "seeds"],
    "properties": {
        "train_acc": {"type": "number", "minimum": 0, "maximum": 1},
        "val_acc": {"type": "number", "minimum": 0, "maximum": 1},
        "silhouette": {"type": "number", "minimum": -1, "maximum": 1},
        "per_genre_silhouette": {"type": "object",
                                 "additionalProperties": {"type": "number"}},
        "confusion": {"type": "array",
                      "items": {"type": "array", "items": {"type": "integer", "minimum": 0}}},
        "seeds": {"type": "array", "items": {"type": "integer"}},
        "train_silhouette": {"type": ["number", "null"]},
        "space": {"enum": ["representation", "embedding"]},
    },
}


@dataclass
class Evaluation:
    report: EvalReport
    val_reps: np.ndarray
    val: Corpus
    train_reps: np.ndarray
    train: Corpus


def evaluate_corpora(params: Parameters, train: Corpus, val: Corpus, seeds=(),
                     on_embeddings: bool = False, batch: int = 256) -> Evaluation:
    """Metrics on unaugmented images of both split sides."""
    n = params.config.n_classes

    def side(c: Corpus):
        reps = model.encode_batched(params, c.images, batch)
        probs = model.classify(params, reps)
        space = model.project(params, reps) if on_embeddings else reps
        return reps, probs, space

    tr_reps, tr_probs, tr_space = side(train)
    va_reps, va_probs, va_space = side(val)
    sil = silhouette(va_space, val.genres)
    tr_sil = silhouette(tr_space, train.genres).score if len(np.unique(train.genres)) > 1 else None
    cm = confusion(va_probs, val.genres, n)
    report = EvalReport(
        train_acc=accuracy(tr_probs, train.genres),
        val_acc=accuracy(va_probs, val.genres),
        silhouette=sil.score,
        per_genre_silhouette={str(k): v for k, v in sil.per_genre.items()},
        confusion=cm.tolist(),
        seeds=[int(s) for s in seeds],
        train_silhouette=tr_sil,
        space="embedding" if on_embeddings else "representation",
    )
    return Evaluation(report, va_reps, val, tr_reps, train)


def evaluate_model(params: Parameters, split: SplitSpec, manifest: DatasetManifest,
                   seeds=(), on_embeddings: bool = False) -> Evaluation:
    train = load_corpus(manifest, split.train_games)
    val = load_corpus(manifest, split.val_games)
    return evaluate_corpora(params, train, val, seeds, on_embeddings)


# ---------------------------------------------------------------------------
# exports

def write_points_csv(path, corpus: Corpus, values: np.ndarray, prefix: str = "x") -> None:
    """Rows ``id,game,genre,style,<prefix>0..``; t-SNE output uses ``tx,ty``."""
    if prefix == "t":
        cols = ["tx", "ty"]
    else:
        cols = [f"{prefix}{k}" for k in range(values.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "game", "genre", "style", *cols])
        for i in range(len(corpus)):
            w.writerow([i, corpus.games[i], int(corpus.genres[i]), int(corpus.styles[i]),
                        *(repr(float(v)) for v in values[i])])


def scatter_png(path, coords: np.ndarray, corpus: Corpus, genre_names=None, title=None) -> None:
    """Points coloured by genre; marker shape varies by game within a genre."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    markers = "o^sDvP*Xhp<>"
    cmap = plt.get_cmap("tab10")
    fig, ax = plt.subplots(figsize=(7, 6), dpi=100)
    for genre in np.unique(corpus.genres):
        games = sorted(set(corpus.games[corpus.genres == genre]))
        for k, game in enumerate(games):
            sel = corpus.games == game
            label = genre_names[genre] if (genre_names and k == 0) else (str(genre) if k == 0 else None)
            ax.scatter(coords[sel, 0], coords[sel, 1], s=8, color=cmap(int(genre) % 10),
                       marker=markers[k % len(markers)], label=label, alpha=0.7, linewidths=0)
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title)
    ax.legend(markerscale=2, fontsize=8, loc="best")
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def summarize(values) -> dict:
    """Mean, sample standard deviation and 95% t-interval half-width over seeds."""
    from scipy import stats
    v = np.asarray(values, dtype=float)
    mean = float(v.mean())
    if len(v) < 2:
        return {"mean": mean, "std": 0.0, "ci95": 0.0, "n": int(len(v))}
    std = float(v.std(ddof=1))
    half = float(stats.t.ppf(0.975, len(v) - 1) * std / math.sqrt(len(v)))
    return {"mean": mean, "std": std, "ci95": half, "n": int(len(v))}
