"""Independent reference computations used to check the package.

Everything here is deliberately naive: explicit loops over points and pairs,
no shared code with the implementation under test.
"""
import math

import numpy as np


def brute_silhouette(points, labels):
    points = [[float(v) for v in np.ravel(p)] for p in points]
    labels = list(labels)
    n = len(points)

    def dist(i, j):
        return math.sqrt(sum((a - b) ** 2 for a, b in zip(points[i], points[j])))

    clusters = sorted(set(labels))
    coeffs = []
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            coeffs.append(0.0)
            continue
        a = sum(dist(i, j) for j in own) / len(own)
        b = math.inf
        for c in clusters:
            if c == labels[i]:
                continue
            members = [j for j in range(n) if labels[j] == c]
            b = min(b, sum(dist(i, j) for j in members) / len(members))
        top = max(a, b)
        coeffs.append(0.0 if top == 0 else (b - a) / top)
    return sum(coeffs) / n, coeffs


def brute_contrastive(z, labels, margin=1.0):
    terms = []
    n = len(labels)
    for i in range(n):
        for j in range(i + 1, n):
            d = math.sqrt(sum((a - b) ** 2 for a, b in zip(z[i], z[j])))
            if labels[i] == labels[j]:
                terms.append(d * d)
            else:
                terms.append(max(0.0, margin - d) ** 2)
    return sum(terms) / len(terms)


def brute_cross_entropy(probs, labels):
    return sum(-math.log(max(probs[i][y], 1e-12)) for i, y in enumerate(labels)) / len(labels)


def central_difference(f, x, h=1e-4):
    """Numerical gradient of scalar ``f`` at array ``x`` (x is restored)."""
    g = np.zeros_like(x, dtype=float)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def relative_error(a, b):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


def tally_confusion(true, pred, n):
    cm = [[0] * n for _ in range(n)]
    for t, p in zip(true, pred):
        cm[t][p] += 1
    return cm


def bilinear_center_3x3_of_checkerboard():
    # 2x2 checkerboard resampled to 3x3 with half-pixel centres: output centre
    # (1, 1) maps to source (0.5, 0.5), the midpoint of all four pixels.
    src = [[0.0, 1.0], [1.0, 0.0]]
    y = x = (1 + 0.5) * 2 / 3 - 0.5
    y0, x0 = math.floor(y), math.floor(x)
    fy, fx = y - y0, x - x0
    return ((1 - fy) * (1 - fx) * src[y0][x0] + (1 - fy) * fx * src[y0][x0 + 1]
            + fy * (1 - fx) * src[y0 + 1][x0] + fy * fx * src[y0 + 1][x0 + 1])
