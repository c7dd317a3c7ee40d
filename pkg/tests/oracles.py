"""Brute-force reference implementations used only by the tests.

Everything here is written with plain Python loops and ``math`` so it shares
no code path with the numpy implementations under test.
"""

import math


def unit(v):
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v]


def cos_dist(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    return min(2.0, max(0.0, 1.0 - dot / (na * nb)))


def mean(vs):
    k = len(vs)
    return [sum(v[j] for v in vs) / k for j in range(len(vs[0]))]


def group(labels, vectors):
    classes = {}
    for lab, v in zip(labels, vectors):
        classes.setdefault(lab, []).append(unit(v))
    return classes


def intra(labels, vectors):
    classes = group(labels, vectors)
    per = {}
    for c, members in classes.items():
        mu = mean(members)
        per[c] = sum(cos_dist(mu, x) for x in members) / len(members)
    return sum(per.values()) / len(per), per


def inter(labels, vectors):
    classes = group(labels, vectors)
    mus = [mean(m) for m in classes.values()]
    c = len(mus)
    total = 0.0
    for i in range(c):
        for j in range(c):
            if i != j:
                total += cos_dist(mus[i], mus[j])
    return total / (c * (c - 1))


def silhouette(labels, vectors):
    pts = [unit(v) for v in vectors]
    n = len(pts)
    s = []
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            s.append(0.0)
            continue
        a = sum(cos_dist(pts[i], pts[j]) for j in own) / len(own)
        b = math.inf
        for other in set(labels):
            if other == labels[i]:
                continue
            idx = [j for j in range(n) if labels[j] == other]
            b = min(b, sum(cos_dist(pts[i], pts[j]) for j in idx) / len(idx))
        m = max(a, b)
        s.append(0.0 if m == 0 else (b - a) / m)
    return sum(s) / n


def davies_bouldin(labels, vectors):
    classes = group(labels, vectors)
    names = list(classes)
    _, spread = intra(labels, vectors)
    mus = {c: mean(classes[c]) for c in names}
    total = 0.0
    for c in names:
        worst = -math.inf
        for o in names:
            if o == c:
                continue
            m = cos_dist(mus[c], mus[o])
            r = math.inf if m <= 1e-12 else (spread[c] + spread[o]) / m
            worst = max(worst, r)
        total += worst
    return total / len(names)


def calinski_harabasz(labels, vectors):
    classes = group(labels, vectors)
    allpts = [p for m in classes.values() for p in m]
    n, c = len(allpts), len(classes)
    mu = mean(allpts)
    bgss = wgss = 0.0
    for members in classes.values():
        mc = mean(members)
        bgss += len(members) * sum((a - b) ** 2 for a, b in zip(mc, mu))
        for x in members:
            wgss += sum((a - b) ** 2 for a, b in zip(x, mc))
    if bgss <= 1e-20 * n:
        return 0.0
    if wgss <= 1e-20 * n or n <= c:
        return math.inf
    return (bgss / (c - 1)) / (wgss / (n - c))


def tally(truth, predicted, classes, unparsed="__unparsed__"):
    """Per-class TP/FP/FN by direct counting, plus accuracy and macro F1."""
    out = {}
    for c in classes:
        tp = sum(1 for t, p in zip(truth, predicted) if t == c and p == c)
        fp = sum(1 for t, p in zip(truth, predicted) if t != c and p == c)
        fn = sum(1 for t, p in zip(truth, predicted) if t == c and p != c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        out[c] = (tp, fp, fn, f1)
    n = len(truth)
    acc = sum(1 for t, p in zip(truth, predicted) if t == p) / n if n else 0.0
    macro = sum(v[3] for v in out.values()) / len(classes)
    return out, acc, macro
