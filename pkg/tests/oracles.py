"""Independent slow reference implementations used as test oracles."""
import math

import numpy as np


def kendall_tau_b_pairs(a, b):
    n = len(a)
    conc = disc = ties_a = ties_b = 0
    for i in range(n):
        for j in range(i + 1, n):
            da, db = a[i] - a[j], b[i] - b[j]
            if da == 0 and db == 0:
                ties_a += 1
                ties_b += 1
            elif da == 0:
                ties_a += 1
            elif db == 0:
                ties_b += 1
            elif (da > 0) == (db > 0):
                conc += 1
            else:
                disc += 1
    n0 = n * (n - 1) / 2
    return (conc - disc) / math.sqrt((n0 - ties_a) * (n0 - ties_b))


def average_ranks(x):
    n = len(x)
    ranks = [0.0] * n
    for i in range(n):
        less = sum(1 for j in range(n) if x[j] < x[i])
        equal = sum(1 for j in range(n) if x[j] == x[i])
        ranks[i] = less + (equal + 1) / 2
    return ranks


def pearson(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((x[i] - mx) * (y[i] - my) for i in range(n))
    sxx = sum((v - mx) ** 2 for v in x)
    syy = sum((v - my) ** 2 for v in y)
    return sxy / math.sqrt(sxx * syy)


def spearman_rank_pearson(a, b):
    return pearson(average_ranks(list(a)), average_ranks(list(b)))


def knapsack_bruteforce(values, weights, capacity):
    """Best subset value over all 2^n subsets that fit.

    Sums run left to right in index order (cumsum over a zero-filled row), so
    the result is bit-comparable with any index-ordered sum of a subset.
    """
    n = len(values)
    bits = (np.arange(1 << n)[:, None] >> np.arange(n)) & 1
    w = bits @ np.asarray(weights, dtype=np.int64)
    v = np.cumsum(np.where(bits == 1, np.asarray(values, dtype=np.float64), 0.0), axis=1)[:, -1]
    return float(v[w <= capacity].max()) if n else 0.0


def _softmax(row):
    m = max(row)
    e = [math.exp(v - m) for v in row]
    s = sum(e)
    return [v / s for v in e]


def _mm(a, b):
    return [[sum(a[i][k] * b[k][j] for k in range(len(b))) for j in range(len(b[0]))]
            for i in range(len(a))]


def _norm_rows(a):
    out = []
    for row in a:
        n = math.sqrt(sum(v * v for v in row))
        out.append([v / n if n > 0 else 0.0 for v in row])
    return out


def cross_attention_loops(X, Y, wq, wk, wv, wo, pe, weighting="similarity"):
    """Scalar-loop multi-head cross attention.

    weighting="similarity": logits * cosine(X, Y); "sqrt": logits / sqrt(d_head).
    """
    X, Y = np.asarray(X).tolist(), np.asarray(Y).tolist()
    S = None
    if weighting == "similarity":
        xn, yn = _norm_rows(X), _norm_rows(Y)
        S = [[sum(p * q for p, q in zip(r, c)) for c in yn] for r in xn]
    heads = []
    for h in range(len(wq)):
        Q = _mm(X, np.asarray(wq[h]).tolist())
        K = _mm(Y, np.asarray(wk[h]).tolist())
        V = _mm(Y, np.asarray(wv[h]).tolist())
        d_head = len(Q[0])
        out = []
        for n in range(len(X)):
            logits = []
            for m in range(len(Y)):
                a = sum(Q[n][c] * K[m][c] for c in range(d_head))
                logits.append(a * S[n][m] if S is not None else a / math.sqrt(d_head))
            w = _softmax(logits)
            out.append([sum(w[m] * V[m][c] for m in range(len(Y))) for c in range(d_head)])
        heads.append(out)
    cat = [sum((heads[h][n] for h in range(len(heads))), []) for n in range(len(X))]
    z = _mm(cat, np.asarray(wo).tolist())
    return np.array(z) + np.asarray(pe)


def standard_cross_attention(X, Y, wq, wk, wv, wo, pe):
    """Vectorized textbook scaled dot-product cross attention."""
    outs = []
    for q, k, v in zip(wq, wk, wv):
        logits = (X @ q) @ (Y @ k).T / np.sqrt(q.shape[1])
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        w /= w.sum(axis=1, keepdims=True)
        outs.append(w @ (Y @ v))
    return np.concatenate(outs, axis=1) @ wo + pe


def _layer_norm(x, gain, bias, eps=1e-5):
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def _mha(x, y, wq, wk, wv, wo, sim=None):
    outs = []
    for q, k, v in zip(wq, wk, wv):
        logits = (x @ q) @ (y @ k).T
        logits = logits * sim if sim is not None else logits / np.sqrt(q.shape[1])
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        outs.append(w / w.sum(axis=1, keepdims=True) @ (y @ v))
    return np.concatenate(outs, axis=1) @ wo


def model_reference(t, heads, scorer_heads, frames, script, transcripts, similarity, pe):
    """Plain numpy inference pass over a name -> array map (dropout off)."""
    t = {k: np.asarray(v, dtype=np.float64) for k, v in t.items()}

    def block(prefix, h):
        return ([t[f"{prefix}.q{i}"] for i in range(h)], [t[f"{prefix}.k{i}"] for i in range(h)],
                [t[f"{prefix}.v{i}"] for i in range(h)], t[f"{prefix}.out"])

    def cos(a, b):
        na = np.linalg.norm(a, axis=1, keepdims=True)
        nb = np.linalg.norm(b, axis=1, keepdims=True)
        return (a / np.where(na > 0, na, 1)) @ (b / np.where(nb > 0, nb, 1)).T

    parts = []
    for prefix, q_raw in (("wca_visual", frames), ("wca_transcript", transcripts)):
        if f"{prefix}.out" not in t:
            continue
        sim = cos(q_raw, script) if similarity else None
        parts.append(_mha(q_raw, script, *block(prefix, heads), sim=sim) + pe)
    z = np.concatenate(parts, axis=1) @ t["reduce.weight"] + t["reduce.bias"]
    z = _layer_norm(z, t["norm.gain"], t["norm.bias"])
    layer = 0
    while f"scorer.{layer}.attn.out" in t:
        p = f"scorer.{layer}"
        a = _mha(z, z, *block(f"{p}.attn", scorer_heads)) + t[f"{p}.attn.out_bias"]
        h = _layer_norm(z + a, t[f"{p}.norm1.gain"], t[f"{p}.norm1.bias"])
        f = np.maximum(h @ t[f"{p}.ffn1.weight"] + t[f"{p}.ffn1.bias"], 0)
        f = f @ t[f"{p}.ffn2.weight"] + t[f"{p}.ffn2.bias"]
        z = _layer_norm(h + f, t[f"{p}.norm2.gain"], t[f"{p}.norm2.bias"])
        layer += 1
    logits = z @ t["head.weight"] + t["head.bias"]
    return (1 / (1 + np.exp(-logits))).ravel()
