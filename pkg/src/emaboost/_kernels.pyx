# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled boosting kernels; see ``_kernels_py`` for the reference version."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, fabs
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double NEWTON_CLIP = 4.0
cdef int MAXL = 64


cdef inline double _sigmoid(double s) nogil:
    return 1.0 / (1.0 + exp(-s))


cdef double _mean_loss(const double[::1] y, const double[::1] s, bint logistic) nogil:
    cdef Py_ssize_t i, n = y.shape[0]
    cdef double acc = 0.0, v, r
    if n == 0:
        return 0.0
    for i in range(n):
        v = s[i]
        if logistic:
            acc += (v if v > 0.0 else 0.0) + log1p(exp(-fabs(v))) - y[i] * v
        else:
            r = y[i] - v
            acc += r * r
    return acc / n


cdef inline double _leaf_value(double S, double H, bint logistic, double lr) nogil:
    cdef double v
    if H <= 1e-12:
        return 0.0
    v = S / H
    if logistic:
        if v > NEWTON_CLIP:
            v = NEWTON_CLIP
        elif v < -NEWTON_CLIP:
            v = -NEWTON_CLIP
    return lr * v


cdef int _ordinal_partition(const long* cnt, const double* sr, int L, int max_leaves,
                            int min_leaf, int* leaf) nogil:
    """Returns number of leaves, 0 when no valid layout. Fills ``leaf``."""
    cdef long C[65]
    cdef double S[65]
    cdef double best[8][65]
    cdef int arg[8][65]
    cdef int i, k, a, b, k_best
    cdef long c
    cdef double ds, g, prev, g_best
    C[0] = 0
    S[0] = 0.0
    for i in range(L):
        C[i + 1] = C[i] + cnt[i]
        S[i + 1] = S[i] + sr[i]
    for k in range(max_leaves):
        for b in range(L + 1):
            best[k][b] = -1.0
            arg[k][b] = -1
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
    k_best = -1
    g_best = -1.0
    for k in range(max_leaves):
        if best[k][L] > g_best:
            g_best = best[k][L]
            k_best = k
    if k_best < 0:
        return 0
    b = L
    for k in range(k_best, -1, -1):
        a = arg[k][b] if k > 0 else 0
        for i in range(a, b):
            leaf[i] = k
        b = a
    return k_best + 1


cdef int _categorical_partition(const long* cnt, const double* sr, int L, int max_leaves,
                                int min_leaf, int* leaf) nogil:
    cdef long rest_c = 0, c
    cdef double rest_s = 0.0, s, o, g, g_best, base
    cdef int lv, l_best, n_leaves = 1, step
    for lv in range(L):
        rest_c += cnt[lv]
        leaf[lv] = 0
    if rest_c < min_leaf or rest_c == 0:
        return 0
    for lv in range(L):
        rest_s += sr[lv]
    for step in range(max_leaves - 1):
        g_best = 0.0
        l_best = -1
        base = rest_s * rest_s / rest_c
        for lv in range(L):
            c = cnt[lv]
            if leaf[lv] != 0 or c < min_leaf or c == 0 or rest_c - c < min_leaf or rest_c - c == 0:
                continue
            s = sr[lv]
            o = rest_s - s
            g = s * s / c + o * o / (rest_c - c) - base
            if g > g_best:
                g_best = g
                l_best = lv
        if l_best < 0:
            break
        leaf[l_best] = n_leaves
        n_leaves += 1
        rest_c -= cnt[l_best]
        rest_s -= sr[l_best]
    return n_leaves


cdef void _gradients(const double[::1] y, const double[::1] s, double* r, double* h,
                     bint logistic) nogil:
    cdef Py_ssize_t i
    cdef double p
    for i in range(y.shape[0]):
        if logistic:
            p = _sigmoid(s[i])
            r[i] = y[i] - p
            h[i] = p * (1.0 - p)
        else:
            r[i] = y[i] - s[i]
            h[i] = 1.0


def boost_main(const int[:, ::1] X, const double[::1] y, double[::1] s,
               const int[:, ::1] Xv, const double[::1] yv, double[::1] sv,
               const int[::1] n_levels, const unsigned char[::1] is_cat,
               double[:, ::1] terms, int n_rounds, double lr, int max_leaves,
               int min_leaf, bint logistic):
    cdef Py_ssize_t n = X.shape[0], nv = Xv.shape[0], d = X.shape[1]
    cdef Py_ssize_t i, f, m
    cdef int L, lv, n_leaves, k
    cdef bint use_val = nv > 0
    cdef long cnt[64]
    cdef double sr[64]
    cdef double sh[64]
    cdef int leaf[64]
    cdef double S[64]
    cdef double H[64]
    cdef double delta[64]
    cdef int best_round = 0
    if max_leaves > 8:
        raise ValueError("max_leaves above 8 is not supported by the compiled kernel")
    train_loss = np.empty(n_rounds + 1)
    val_loss = np.empty(n_rounds + 1 if use_val else 0)
    cdef double[::1] tl = train_loss
    cdef double[::1] vl = val_loss
    best_terms = np.asarray(terms).copy()
    cdef double[:, ::1] bt = best_terms
    cdef double* r = <double*> malloc(max(n, 1) * sizeof(double))
    cdef double* h = <double*> malloc(max(n, 1) * sizeof(double))
    try:
        with nogil:
            tl[0] = _mean_loss(y, s, logistic)
            if use_val:
                vl[0] = _mean_loss(yv, sv, logistic)
            for m in range(1, n_rounds + 1):
                for f in range(d):
                    L = n_levels[f]
                    _gradients(y, s, r, h, logistic)
                    for lv in range(L):
                        cnt[lv] = 0
                        sr[lv] = 0.0
                        sh[lv] = 0.0
                    for i in range(n):
                        lv = X[i, f]
                        cnt[lv] += 1
                        sr[lv] += r[i]
                        sh[lv] += h[i]
                    if is_cat[f]:
                        n_leaves = _categorical_partition(cnt, sr, L, max_leaves, min_leaf, leaf)
                    else:
                        n_leaves = _ordinal_partition(cnt, sr, L, max_leaves, min_leaf, leaf)
                    if n_leaves == 0:
                        continue
                    if not logistic:
                        for lv in range(L):
                            sh[lv] = <double> cnt[lv]
                    for k in range(n_leaves):
                        S[k] = 0.0
                        H[k] = 0.0
                    for lv in range(L):
                        S[leaf[lv]] += sr[lv]
                        H[leaf[lv]] += sh[lv]
                    for lv in range(L):
                        delta[lv] = _leaf_value(S[leaf[lv]], H[leaf[lv]], logistic, lr)
                        terms[f, lv] += delta[lv]
                    for i in range(n):
                        s[i] += delta[X[i, f]]
                    for i in range(nv):
                        sv[i] += delta[Xv[i, f]]
                tl[m] = _mean_loss(y, s, logistic)
                if use_val:
                    vl[m] = _mean_loss(yv, sv, logistic)
                    if vl[m] < vl[best_round]:
                        best_round = m
                        bt[:, :] = terms
            if use_val:
                terms[:, :] = bt
    finally:
        free(r)
        free(h)
    return train_loss, val_loss, best_round


cdef int _best_cut(const long* cnt, const double* sr, int Li, int Lj, int min_leaf,
                   bint enforce, int* ca, int* cb, double* gain_out) nogil:
    """Scan quadrant cuts of an Li x Lj histogram (row-major). Returns 1 if found."""
    cdef long Pc[64 * 64]
    cdef double Ps[64 * 64]
    cdef int i, j, a, b, q, found = 0
    cdef long acc_c, Tc, c[4]
    cdef double acc_s, Ts, sq[4], g, best = 0.0
    cdef long rowc, colc, lc
    cdef double rows_, cols_, ls
    cdef bint ok
    if Li < 2 or Lj < 2:
        return 0
    for i in range(Li):
        acc_c = 0
        acc_s = 0.0
        for j in range(Lj):
            acc_c += cnt[i * Lj + j]
            acc_s += sr[i * Lj + j]
            if i > 0:
                Pc[i * Lj + j] = acc_c + Pc[(i - 1) * Lj + j]
                Ps[i * Lj + j] = acc_s + Ps[(i - 1) * Lj + j]
            else:
                Pc[i * Lj + j] = acc_c
                Ps[i * Lj + j] = acc_s
    Tc = Pc[Li * Lj - 1]
    Ts = Ps[Li * Lj - 1]
    for a in range(Li - 1):
        rowc = Pc[a * Lj + Lj - 1]
        rows_ = Ps[a * Lj + Lj - 1]
        for b in range(Lj - 1):
            colc = Pc[(Li - 1) * Lj + b]
            cols_ = Ps[(Li - 1) * Lj + b]
            lc = Pc[a * Lj + b]
            ls = Ps[a * Lj + b]
            c[0] = lc
            c[1] = rowc - lc
            c[2] = colc - lc
            c[3] = Tc - rowc - colc + lc
            sq[0] = ls
            sq[1] = rows_ - ls
            sq[2] = cols_ - ls
            sq[3] = ((Ts - rows_) - cols_) + ls
            ok = True
            if enforce:
                for q in range(4):
                    if c[q] != 0 and c[q] < min_leaf:
                        ok = False
            if not ok:
                continue
            g = 0.0
            for q in range(4):
                if c[q] > 0:
                    g = g + sq[q] * sq[q] / c[q]
            if not found or g > best:
                best = g
                ca[0] = a
                cb[0] = b
                found = 1
    gain_out[0] = best
    return found


def boost_pairs(const int[:, ::1] X, const double[::1] y, double[::1] s,
                const int[:, ::1] Xv, const double[::1] yv, double[::1] sv,
                const int[:, ::1] pairs, const int[::1] n_levels,
                double[:, :, ::1] pair_terms, int n_rounds, double lr,
                int min_leaf, bint logistic):
    cdef Py_ssize_t n = X.shape[0], nv = Xv.shape[0], K = pairs.shape[0]
    cdef Py_ssize_t i, k, m
    cdef int fi, fj, Li, Lj, a = 0, b = 0, q, ci, cj, cell
    cdef bint use_val = nv > 0
    cdef long cnt[64 * 64]
    cdef double sr[64 * 64]
    cdef double sh[64 * 64]
    cdef double S[4]
    cdef double H[4]
    cdef double vals[4]
    cdef double delta[64 * 64]
    cdef double g
    cdef int best_round = 0
    train_loss = np.empty(n_rounds + 1)
    val_loss = np.empty(n_rounds + 1 if use_val else 0)
    cdef double[::1] tl = train_loss
    cdef double[::1] vl = val_loss
    best_terms = np.asarray(pair_terms).copy()
    cdef double[:, :, ::1] bt = best_terms
    cdef double* r = <double*> malloc(max(n, 1) * sizeof(double))
    cdef double* h = <double*> malloc(max(n, 1) * sizeof(double))
    try:
        with nogil:
            tl[0] = _mean_loss(y, s, logistic)
            if use_val:
                vl[0] = _mean_loss(yv, sv, logistic)
            for m in range(1, n_rounds + 1):
                for k in range(K):
                    fi = pairs[k, 0]
                    fj = pairs[k, 1]
                    Li = n_levels[fi]
                    Lj = n_levels[fj]
                    _gradients(y, s, r, h, logistic)
                    for cell in range(Li * Lj):
                        cnt[cell] = 0
                        sr[cell] = 0.0
                        sh[cell] = 0.0
                    for i in range(n):
                        cell = X[i, fi] * Lj + X[i, fj]
                        cnt[cell] += 1
                        sr[cell] += r[i]
                        sh[cell] += h[i]
                    if not _best_cut(cnt, sr, Li, Lj, min_leaf, True, &a, &b, &g):
                        continue
                    if not logistic:
                        for cell in range(Li * Lj):
                            sh[cell] = <double> cnt[cell]
                    for q in range(4):
                        S[q] = 0.0
                        H[q] = 0.0
                    for ci in range(Li):
                        for cj in range(Lj):
                            q = (2 if ci > a else 0) + (1 if cj > b else 0)
                            S[q] += sr[ci * Lj + cj]
                            H[q] += sh[ci * Lj + cj]
                    for q in range(4):
                        vals[q] = _leaf_value(S[q], H[q], logistic, lr)
                    for ci in range(Li):
                        for cj in range(Lj):
                            q = (2 if ci > a else 0) + (1 if cj > b else 0)
                            delta[ci * Lj + cj] = vals[q]
                            pair_terms[k, ci, cj] += vals[q]
                    for i in range(n):
                        s[i] += delta[X[i, fi] * Lj + X[i, fj]]
                    for i in range(nv):
                        sv[i] += delta[Xv[i, fi] * Lj + Xv[i, fj]]
                tl[m] = _mean_loss(y, s, logistic)
                if use_val:
                    vl[m] = _mean_loss(yv, sv, logistic)
                    if vl[m] < vl[best_round]:
                        best_round = m
                        bt[:, :, :] = pair_terms
            if use_val:
                pair_terms[:, :, :] = bt
    finally:
        free(r)
        free(h)
    return train_loss, val_loss, best_round


def fast_strengths(const int[:, ::1] X, const double[::1] r, const int[::1] n_levels,
                   const int[:, ::1] pairs):
    cdef Py_ssize_t n = X.shape[0], P = pairs.shape[0], i, k
    cdef int fi, fj, Li, Lj, cell, a = 0, b = 0
    cdef long cnt[64 * 64]
    cdef double sr[64 * 64]
    cdef double g
    out = np.zeros(P)
    cdef double[::1] o = out
    with nogil:
        for k in range(P):
            fi = pairs[k, 0]
            fj = pairs[k, 1]
            Li = n_levels[fi]
            Lj = n_levels[fj]
            if Li < 2 or Lj < 2:
                continue
            for cell in range(Li * Lj):
                cnt[cell] = 0
                sr[cell] = 0.0
            for i in range(n):
                cell = X[i, fi] * Lj + X[i, fj]
                cnt[cell] += 1
                sr[cell] += r[i]
            if _best_cut(cnt, sr, Li, Lj, 0, False, &a, &b, &g):
                o[k] = g
    return out
