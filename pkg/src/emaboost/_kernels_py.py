"""Pure-Python boosting kernels.

Reference implementation of the routines in ``_kernels.pyx``. Both versions
walk candidate splits in the same order and break ties the same way (first
strictly better candidate wins), so they produce the same models up to
floating-point differences in ``exp``.
"""

import numpy as np

NEWTON_CLIP = 4.0


def _sigmoid(s):
    return 1.0 / (1.0 + np.exp(-s))


def mean_loss(y, s, logistic):
    if y.shape[0] == 0:
        return 0.0
    if logistic:
        softplus = np.maximum(s, 0.0) + np.log1p(np.exp(-np.abs(s)))
        return float(np.sum(softplus - y * s) / y.shape[0])
    r = y - s
    return float(np.sum(r * r) / y.shape[0])


def _gradients(y, s, logistic):
    if logistic:
        p = _sigmoid(s)
        return y - p, p * (1.0 - p)
    return y - s, None


def _leaf_value(S, H, logistic, lr):
    if H <= 1e-12:
        return 0.0
    v = S / H
    if logistic:
        v = min(max(v, -NEWTON_CLIP), NEWTON_CLIP)
    return lr * v


def ordinal_partition(cnt, sr, max_leaves, min_leaf):
    """Best split of ordered levels into <= max_leaves contiguous segments.

    Maximises sum(S_seg**2 / N_seg). Returns the leaf index of every level,
    or None when no segment layout satisfies ``min_leaf``.
    """
    L = cnt.shape[0]
    C = [0] * (L + 1)
    S = [0.0] * (L + 1)
    for i in range(L):
        C[i + 1] = C[i] + int(cnt[i])
        S[i + 1] = S[i] + float(sr[i])
    neg = -1.0
    # best[k][b]: best gain for levels [0, b) split into k+1 segments
    best = [[neg] * (L + 1) for _ in range(max_leaves)]
    arg = [[-1] * (L + 1) for _ in range(max_leaves)]
    for b in range(1, L + 1):
        c = C[b]
        if c >= min_leaf and c > 0:
            best[0][b] = S[b] * S[b] / c
    for k in range(1, max_leaves):
        for b in range(k + 1, L + 1):
            for a in range(k, b):
                prev = best[k - 1][a]
                if prev < 0.0:
                    continue
                c = C[b] - C[a]
                if c < min_leaf or c <= 0:
                    continue
                ds = S[b] - S[a]
                g = prev + ds * ds / c
                if g > best[k][b]:
                    best[k][b] = g
                    arg[k][b] = a
    k_best, g_best = -1, neg
    for k in range(max_leaves):
        if best[k][L] > g_best:
            g_best = best[k][L]
            k_best = k
    if k_best < 0:
        return None
    leaf = np.zeros(L, dtype=np.int32)
    b = L
    for k in range(k_best, -1, -1):
        a = arg[k][b] if k > 0 else 0
        leaf[a:b] = k
        b = a
    return leaf


def categorical_partition(cnt, sr, max_leaves, min_leaf):
    """Greedily peel off single levels as their own leaves; the rest share leaf 0."""
    L = cnt.shape[0]
    rest_c = int(np.sum(cnt))
    if rest_c < min_leaf or rest_c == 0:
        return None
    rest_s = 0.0
    for i in range(L):
        rest_s += float(sr[i])
    leaf = np.zeros(L, dtype=np.int32)
    n_leaves = 1
    for _ in range(max_leaves - 1):
        g_best, l_best = 0.0, -1
        base = rest_s * rest_s / rest_c
        for lv in range(L):
            c = int(cnt[lv])
            if leaf[lv] != 0 or c < min_leaf or c == 0 or rest_c - c < min_leaf or rest_c - c == 0:
                continue
            s = float(sr[lv])
            o = rest_s - s
            g = s * s / c + o * o / (rest_c - c) - base
            if g > g_best:
                g_best, l_best = g, lv
        if l_best < 0:
            break
        leaf[l_best] = n_leaves
        n_leaves += 1
        rest_c -= int(cnt[l_best])
        rest_s -= float(sr[l_best])
    return leaf


def _feature_step(X, y, s, Xv, sv, f, L, is_cat, terms, lr, max_leaves, min_leaf, logistic):
    col = X[:, f]
    r, h = _gradients(y, s, logistic)
    cnt = np.bincount(col, minlength=L)[:L]
    sr = np.bincount(col, weights=r, minlength=L)[:L]
    if is_cat:
        leaf = categorical_partition(cnt, sr, max_leaves, min_leaf)
    else:
        leaf = ordinal_partition(cnt, sr, max_leaves, min_leaf)
    if leaf is None:
        return
    n_leaves = int(leaf.max()) + 1
    sh = np.bincount(col, weights=h, minlength=L)[:L] if logistic else cnt.astype(np.float64)
    S = np.zeros(n_leaves)
    H = np.zeros(n_leaves)
    for lv in range(L):
        S[leaf[lv]] += sr[lv]
        H[leaf[lv]] += sh[lv]
    vals = np.array([_leaf_value(S[k], H[k], logistic, lr) for k in range(n_leaves)])
    delta = vals[leaf]
    terms[f, :L] += delta
    s += delta[col]
    if Xv.shape[0]:
        sv += delta[Xv[:, f]]


def boost_main(X, y, s, Xv, yv, sv, n_levels, is_cat, terms, n_rounds, lr,
               max_leaves, min_leaf, logistic):
    """Cyclic round-robin boosting of single-feature trees.

    ``s``/``sv`` (scores) and ``terms`` are updated in place. With a
    validation slice the terms are rolled back to the best round; the caller
    recomputes scores afterwards. Returns (train_loss, val_loss, best_round)
    where the loss arrays hold the value before round 1 and after every round.
    """
    d = X.shape[1]
    use_val = Xv.shape[0] > 0
    train_loss = np.empty(n_rounds + 1)
    val_loss = np.empty(n_rounds + 1 if use_val else 0)
    train_loss[0] = mean_loss(y, s, logistic)
    best_round = 0
    best_terms = None
    if use_val:
        val_loss[0] = mean_loss(yv, sv, logistic)
        best_terms = terms.copy()
    for m in range(1, n_rounds + 1):
        for f in range(d):
            _feature_step(X, y, s, Xv, sv, f, int(n_levels[f]), bool(is_cat[f]), terms,
                          lr, max_leaves, min_leaf, logistic)
        train_loss[m] = mean_loss(y, s, logistic)
        if use_val:
            val_loss[m] = mean_loss(yv, sv, logistic)
            if val_loss[m] < val_loss[best_round]:
                best_round = m
                best_terms[...] = terms
    if use_val:
        terms[...] = best_terms
    return train_loss, val_loss, best_round


def _quadrant_stats(cnt, sr):
    """Quadrant count/sum tables for every cut (a, b); shape (Li-1, Lj-1, 4)."""
    Pc = np.cumsum(np.cumsum(cnt, axis=0), axis=1)
    Ps = np.zeros(sr.shape)
    # row-major running sums, same order as the compiled kernel
    Li, Lj = sr.shape
    for i in range(Li):
        acc = 0.0
        for j in range(Lj):
            acc += sr[i, j]
            Ps[i, j] = acc + (Ps[i - 1, j] if i > 0 else 0.0)
    Tc, Ts = Pc[-1, -1], Ps[-1, -1]
    a_c, a_s = Pc[:-1, :-1], Ps[:-1, :-1]
    rowc, rows_ = Pc[:-1, -1:], Ps[:-1, -1:]
    colc, cols_ = Pc[-1:, :-1], Ps[-1:, :-1]
    c = np.stack([a_c, rowc - a_c, colc - a_c, Tc - rowc - colc + a_c], axis=-1)
    s = np.stack([a_s, rows_ - a_s, cols_ - a_s, ((Ts - rows_) - cols_) + a_s], axis=-1)
    return c, s


def _quadrant_gain(c, s):
    safe = np.where(c > 0, c, 1)
    terms = np.where(c > 0, s * s / safe, 0.0)
    return ((terms[..., 0] + terms[..., 1]) + terms[..., 2]) + terms[..., 3]


def _pair_hist(xi, xj, Li, Lj, w=None):
    flat = xi.astype(np.int64) * Lj + xj
    if w is None:
        return np.bincount(flat, minlength=Li * Lj).reshape(Li, Lj)
    return np.bincount(flat, weights=w, minlength=Li * Lj).reshape(Li, Lj)


def best_quadrant_cut(cnt, sr, min_leaf):
    """Best (a, b) cut of a 2-D histogram; ``level <= cut`` goes low. None if no valid cut."""
    Li, Lj = cnt.shape
    if Li < 2 or Lj < 2:
        return None
    c, s = _quadrant_stats(cnt, sr)
    ok = np.all((c == 0) | (c >= min_leaf), axis=-1)
    if not ok.any():
        return None
    gain = np.where(ok, _quadrant_gain(c, s), -np.inf)
    flat = int(np.argmax(gain))
    return divmod(flat, Lj - 1)


def _pair_step(X, y, s, Xv, sv, k, fi, fj, Li, Lj, pair_terms, lr, min_leaf, logistic):
    xi, xj = X[:, fi], X[:, fj]
    r, h = _gradients(y, s, logistic)
    cnt = _pair_hist(xi, xj, Li, Lj)
    sr = _pair_hist(xi, xj, Li, Lj, r)
    cut = best_quadrant_cut(cnt, sr, min_leaf)
    if cut is None:
        return
    a, b = cut
    sh = _pair_hist(xi, xj, Li, Lj, h) if logistic else cnt.astype(np.float64)
    qi = (np.arange(Li) > a).astype(np.int64)
    qj = (np.arange(Lj) > b).astype(np.int64)
    quad = qi[:, None] * 2 + qj[None, :]
    S = np.zeros(4)
    H = np.zeros(4)
    for i in range(Li):
        for j in range(Lj):
            S[quad[i, j]] += sr[i, j]
            H[quad[i, j]] += sh[i, j]
    vals = np.array([_leaf_value(S[q], H[q], logistic, lr) for q in range(4)])
    delta = vals[quad]
    pair_terms[k, :Li, :Lj] += delta
    s += delta[xi, xj]
    if Xv.shape[0]:
        sv += delta[Xv[:, fi], Xv[:, fj]]


def boost_pairs(X, y, s, Xv, yv, sv, pairs, n_levels, pair_terms, n_rounds, lr,
                min_leaf, logistic):
    """Cyclic boosting of 2-D quadrant trees over the given feature pairs."""
    use_val = Xv.shape[0] > 0
    train_loss = np.empty(n_rounds + 1)
    val_loss = np.empty(n_rounds + 1 if use_val else 0)
    train_loss[0] = mean_loss(y, s, logistic)
    best_round = 0
    best_terms = None
    if use_val:
        val_loss[0] = mean_loss(yv, sv, logistic)
        best_terms = pair_terms.copy()
    for m in range(1, n_rounds + 1):
        for k in range(pairs.shape[0]):
            fi, fj = int(pairs[k, 0]), int(pairs[k, 1])
            _pair_step(X, y, s, Xv, sv, k, fi, fj, int(n_levels[fi]), int(n_levels[fj]),
                       pair_terms, lr, min_leaf, logistic)
        train_loss[m] = mean_loss(y, s, logistic)
        if use_val:
            val_loss[m] = mean_loss(yv, sv, logistic)
            if val_loss[m] < val_loss[best_round]:
                best_round = m
                best_terms[...] = pair_terms
    if use_val:
        pair_terms[...] = best_terms
    return train_loss, val_loss, best_round


def fast_strengths(X, r, n_levels, pairs):
    """Best 4-quadrant RSS reduction for each candidate pair."""
    out = np.zeros(pairs.shape[0])
    for k in range(pairs.shape[0]):
        fi, fj = int(pairs[k, 0]), int(pairs[k, 1])
        Li, Lj = int(n_levels[fi]), int(n_levels[fj])
        if Li < 2 or Lj < 2:
            continue
        cnt = _pair_hist(X[:, fi], X[:, fj], Li, Lj)
        sr = _pair_hist(X[:, fi], X[:, fj], Li, Lj, r)
        c, s = _quadrant_stats(cnt, sr)
        out[k] = float(np.max(_quadrant_gain(c, s)))
    return out
