# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Gibbs kernels; see ``_pykernel.py`` for the reference twin."""
from libc.math cimport log, exp, sqrt, INFINITY, NAN

cdef enum:
    MAXP = 8
    K_UNIFORM_LABELS = 0
    K_UNIFORM_PARTITIONS = 1
    K_PYP = 2
    K_CONSTRAINED_PYP = 3

PRIOR_UNIFORM_LABELS = K_UNIFORM_LABELS
PRIOR_UNIFORM_PARTITIONS = K_UNIFORM_PARTITIONS
PRIOR_PYP = K_PYP
PRIOR_CONSTRAINED_PYP = K_CONSTRAINED_PYP

ctypedef long long i64


cdef void _feature_cache(i64 c, i64 l, double a, const int[:, ::1] codes,
                         const double[:, ::1] theta, const double[:, ::1] logtheta,
                         i64[::1] head, i64[::1] nxt, i64[::1] ibuf, i64[::1] cbuf,
                         double[::1] tbuf, double* out_logm, double* out_logp,
                         double* out_q) noexcept:
    cdef i64 n = 0, nd = 0, i, j, v, cnt, r
    cdef bint seen
    cdef double logp = 0.0, log_a, top, covered, th, t, rest, tail, acc, logm
    r = head[c]
    while r >= 0:
        v = codes[r, l]
        ibuf[n] = v
        n += 1
        logp += logtheta[l, v]
        r = nxt[r]
    log_a = log(a) if a > 0.0 else -INFINITY
    for i in range(n):
        v = ibuf[i]
        seen = False
        for j in range(nd):
            if ibuf[j] == v:
                cbuf[j] += 1
                seen = True
                break
        if not seen:
            ibuf[nd] = v
            cbuf[nd] = 1
            nd += 1
    top = -INFINITY
    covered = 0.0
    for j in range(nd):
        th = theta[l, ibuf[j]]
        covered += th
        cnt = cbuf[j]
        t = <double>(1 - cnt) * logtheta[l, ibuf[j]] + <double>cnt * log(1.0 - a + a * th)
        if n > cnt:
            t += <double>(n - cnt) * log_a
        tbuf[j] = t
        if t > top:
            top = t
    rest = 1.0 - covered
    tail = -INFINITY
    if rest > 0.0:
        tail = <double>n * log_a + log(rest)
        if tail > top:
            top = tail
    out_logp[0] = logp
    if top == -INFINITY:
        out_logm[0] = -INFINITY
        out_q[0] = 0.0
        return
    acc = 0.0
    for j in range(nd):
        acc += exp(tbuf[j] - top)
    if tail != -INFINITY:
        acc += exp(tail - top)
    logm = logp + top + log(acc)
    out_logm[0] = logm
    if log_a == -INFINITY:
        out_q[0] = 0.0
    else:
        out_q[0] = exp(<double>n * log_a + logp - logm)


cdef void _refresh_cluster(i64 c, const int[:, ::1] codes, const double[:, ::1] theta,
                           const double[:, ::1] logtheta, const double[::1] alpha,
                           i64[::1] head, i64[::1] nxt, double[:, ::1] logm,
                           double[:, ::1] logp, double[:, ::1] qshare, i64[::1] ibuf,
                           i64[::1] cbuf, double[::1] tbuf) noexcept:
    cdef i64 l
    cdef double m, pp, q
    for l in range(codes.shape[1]):
        _feature_cache(c, l, alpha[l], codes, theta, logtheta, head, nxt, ibuf, cbuf, tbuf,
                       &m, &pp, &q)
        logm[c, l] = m
        logp[c, l] = pp
        qshare[c, l] = q


def refresh_cluster(i64 c, const int[:, ::1] codes, const double[:, ::1] theta,
                    const double[:, ::1] logtheta, const double[::1] alpha,
                    i64[::1] head, i64[::1] nxt, double[:, ::1] logm,
                    double[:, ::1] logp, double[:, ::1] qshare, i64[::1] ibuf,
                    i64[::1] cbuf, double[::1] tbuf):
    _refresh_cluster(c, codes, theta, logtheta, alpha, head, nxt, logm, logp, qshare,
                     ibuf, cbuf, tbuf)


def feature_refresh(i64 l, double a, const int[:, ::1] codes, const double[:, ::1] theta,
                    const double[:, ::1] logtheta, const i64[::1] sizes, i64[::1] head,
                    i64[::1] nxt, double[::1] out_logm, double[::1] out_q, i64[::1] ibuf,
                    i64[::1] cbuf, double[::1] tbuf):
    """Per-cluster log marginals of field ``l`` at distortion ``a``; returns their sum."""
    cdef i64 c
    cdef double total = 0.0, m, pp, q
    for c in range(sizes.shape[0]):
        if sizes[c] == 0:
            continue
        _feature_cache(c, l, a, codes, theta, logtheta, head, nxt, ibuf, cbuf, tbuf,
                       &m, &pp, &q)
        out_logm[c] = m
        out_q[c] = q
        total += m
    return total


cdef double _chol_loglik(double* lam, double* eta, double cst, i64 d,
                         const double[:, ::1] sx_inv, double logdet_sx, i64 p) noexcept:
    cdef double L[MAXP * MAXP]
    cdef double w[MAXP]
    cdef double s, quad, logdet
    cdef i64 i, j, k
    if d == 0:
        return 0.0
    if p == 1:
        s = sx_inv[0, 0] + lam[0]
        if not s > 0.0:
            return NAN
        return -0.5 * (cst + logdet_sx + log(s) - eta[0] * eta[0] / s)
    for i in range(p):
        for j in range(i + 1):
            s = sx_inv[i, j] + lam[i * p + j]
            for k in range(j):
                s -= L[i * MAXP + k] * L[j * MAXP + k]
            if i == j:
                if not s > 0.0:
                    return NAN
                L[i * MAXP + i] = sqrt(s)
            else:
                L[i * MAXP + j] = s / L[j * MAXP + j]
    quad = 0.0
    logdet = 0.0
    for i in range(p):
        s = eta[i]
        for k in range(i):
            s -= L[i * MAXP + k] * w[k]
        w[i] = s / L[i * MAXP + i]
        quad += w[i] * w[i]
        logdet += log(L[i * MAXP + i])
    return -0.5 * (cst + logdet_sx + 2.0 * logdet - quad)


cdef void _reg_refresh_cluster(i64 c, i64[::1] head, i64[::1] nxt,
                               const double[:, :, ::1] rec_lam, const double[:, ::1] rec_eta,
                               const double[::1] rec_c, const i64[::1] rec_d,
                               double[:, :, ::1] cl_lam, double[:, ::1] cl_eta,
                               double[::1] cl_c, i64[::1] cl_d, double[::1] cl_ll,
                               const double[:, ::1] sx_inv, double logdet_sx) noexcept:
    cdef i64 p = rec_eta.shape[1]
    cdef double lam[MAXP * MAXP]
    cdef double eta[MAXP]
    cdef double cst = 0.0
    cdef i64 d = 0, r, i, j
    for i in range(p):
        eta[i] = 0.0
        for j in range(p):
            lam[i * p + j] = 0.0
    r = head[c]
    while r >= 0:
        for i in range(p):
            eta[i] += rec_eta[r, i]
            for j in range(p):
                lam[i * p + j] += rec_lam[r, i, j]
        cst += rec_c[r]
        d += rec_d[r]
        r = nxt[r]
    for i in range(p):
        cl_eta[c, i] = eta[i]
        for j in range(p):
            cl_lam[c, i, j] = lam[i * p + j]
    cl_c[c] = cst
    cl_d[c] = d
    cl_ll[c] = _chol_loglik(lam, eta, cst, d, sx_inv, logdet_sx, p)


def reg_refresh_cluster(i64 c, i64[::1] head, i64[::1] nxt,
                        const double[:, :, ::1] rec_lam, const double[:, ::1] rec_eta,
                        const double[::1] rec_c, const i64[::1] rec_d,
                        double[:, :, ::1] cl_lam, double[:, ::1] cl_eta,
                        double[::1] cl_c, i64[::1] cl_d, double[::1] cl_ll,
                        const double[:, ::1] sx_inv, double logdet_sx):
    if rec_eta.shape[1] > MAXP:
        raise ValueError("too many regression covariates for the compiled kernel")
    _reg_refresh_cluster(c, head, nxt, rec_lam, rec_eta, rec_c, rec_d, cl_lam, cl_eta,
                         cl_c, cl_d, cl_ll, sx_inv, logdet_sx)


def reg_refresh_all(const i64[::1] sizes, i64[::1] head, i64[::1] nxt,
                    const double[:, :, ::1] rec_lam, const double[:, ::1] rec_eta,
                    const double[::1] rec_c, const i64[::1] rec_d,
                    double[:, :, ::1] cl_lam, double[:, ::1] cl_eta,
                    double[::1] cl_c, i64[::1] cl_d, double[::1] cl_ll,
                    const double[:, ::1] sx_inv, double logdet_sx):
    cdef i64 c
    cdef double total = 0.0
    if rec_eta.shape[1] > MAXP:
        raise ValueError("too many regression covariates for the compiled kernel")
    for c in range(sizes.shape[0]):
        if sizes[c] == 0:
            continue
        _reg_refresh_cluster(c, head, nxt, rec_lam, rec_eta, rec_c, rec_d, cl_lam, cl_eta,
                             cl_c, cl_d, cl_ll, sx_inv, logdet_sx)
        total += cl_ll[c]
    return total


def gibbs_sweep(const i64[::1] order, const double[::1] uniforms, const int[:, ::1] codes,
                const double[:, ::1] theta, const double[:, ::1] logtheta,
                const double[::1] alpha, i64[::1] labels, i64[::1] sizes, i64[::1] head,
                i64[::1] nxt, i64[::1] prv, double[:, ::1] logm, double[:, ::1] logp,
                double[:, ::1] qshare, const int[::1] db,
                int prior_kind, double strength, double discount, double n_pop,
                bint constrained, const i64[::1] db2_list, const i64[::1] db2_pos, i64 n1,
                bint use_reg, const double[:, :, ::1] rec_lam, const double[:, ::1] rec_eta,
                const double[::1] rec_c, const i64[::1] rec_d,
                double[:, :, ::1] cl_lam, double[:, ::1] cl_eta, double[::1] cl_c,
                i64[::1] cl_d, double[::1] cl_ll, const double[:, ::1] sx_inv,
                double logdet_sx, i64 k, i64[::1] ibuf, i64[::1] cbuf, double[::1] tbuf,
                double[::1] wbuf, i64[::1] cand, i64[::1] info):
    """Reallocate every record in ``order``; returns the new number of clusters."""
    cdef i64 n = labels.shape[0]
    cdef i64 p = codes.shape[1]
    cdef i64 preg = rec_eta.shape[1] if use_reg else 0
    cdef i64 n2 = db2_list.shape[0]
    cdef i64 it, r, src, a_, b_, l, i, j, c, m, v, cnt, nc, ncand, pick, dest, h, pos, k2l, o
    cdef int dr
    cdef bint blocked, reg_r
    cdef double lw, w0, prod, a, th, lg, x, base, top, total, target, acc
    cdef double lam[MAXP * MAXP]
    cdef double eta[MAXP]
    if preg > MAXP:
        raise ValueError("too many regression covariates for the compiled kernel")
    for it in range(order.shape[0]):
        r = order[it]
        src = labels[r]
        a_ = prv[r]
        b_ = nxt[r]
        if a_ >= 0:
            nxt[a_] = b_
        else:
            head[src] = b_
        if b_ >= 0:
            prv[b_] = a_
        nxt[r] = -1
        prv[r] = -1
        sizes[src] -= 1
        if sizes[src] == 0:
            k -= 1
            for l in range(p):
                logm[src, l] = 0.0
                logp[src, l] = 0.0
                qshare[src, l] = 0.0
            if use_reg:
                for i in range(preg):
                    cl_eta[src, i] = 0.0
                    for j in range(preg):
                        cl_lam[src, i, j] = 0.0
                cl_c[src] = 0.0
                cl_d[src] = 0
                cl_ll[src] = 0.0
        else:
            _refresh_cluster(src, codes, theta, logtheta, alpha, head, nxt, logm, logp, qshare,
                             ibuf, cbuf, tbuf)
            if use_reg:
                _reg_refresh_cluster(src, head, nxt, rec_lam, rec_eta, rec_c, rec_d, cl_lam,
                                     cl_eta, cl_c, cl_d, cl_ll, sx_inv, logdet_sx)
        dr = db[r]
        reg_r = use_reg and rec_d[r] > 0
        ncand = 0
        for c in range(n):
            if sizes[c] == 0:
                continue
            if prior_kind == K_CONSTRAINED_PYP:
                if sizes[c] != 1 or db[head[c]] != 1:
                    continue
                w0 = 1.0 - discount
            else:
                if constrained:
                    blocked = False
                    m = head[c]
                    while m >= 0:
                        if db[m] == dr:
                            blocked = True
                            break
                        m = nxt[m]
                    if blocked:
                        continue
                if prior_kind == K_PYP:
                    w0 = <double>sizes[c] - discount
                else:
                    w0 = 1.0
            prod = w0
            for l in range(p):
                v = codes[r, l]
                a = alpha[l]
                th = theta[l, v]
                cnt = 0
                m = head[c]
                while m >= 0:
                    if codes[m, l] == v:
                        cnt += 1
                    m = nxt[m]
                if cnt == 0:
                    prod *= th * (a + (1.0 - a) * qshare[c, l])
                else:
                    nc = sizes[c]
                    lg = <double>cnt * log(1.0 - a + a * th) + logp[c, l] - <double>cnt * logtheta[l, v]
                    if nc > cnt:
                        lg += <double>(nc - cnt) * (log(a) if a > 0.0 else -INFINITY)
                    prod *= th * (a + (1.0 - a) * exp(lg - logm[c, l]))
            lw = log(prod) if prod > 0.0 else -INFINITY
            if reg_r:
                for i in range(preg):
                    eta[i] = cl_eta[c, i] + rec_eta[r, i]
                    for j in range(preg):
                        lam[i * preg + j] = cl_lam[c, i, j] + rec_lam[r, i, j]
                lw += _chol_loglik(lam, eta, cl_c[c] + rec_c[r], cl_d[c] + rec_d[r], sx_inv,
                                   logdet_sx, preg) - cl_ll[c]
            cand[ncand] = c
            wbuf[ncand] = lw
            ncand += 1
        if prior_kind == K_UNIFORM_LABELS:
            lw = log(n_pop - <double>k) if n_pop > k else -INFINITY
        elif prior_kind == K_UNIFORM_PARTITIONS:
            lw = 0.0 if n_pop > k else -INFINITY
        elif prior_kind == K_PYP:
            x = <double>k * discount + strength
            lw = log(x) if x > 0.0 else -INFINITY
        else:
            x = <double>k * discount + strength
            lw = log(x) if x > 0.0 else -INFINITY
            pos = db2_pos[r]
            k2l = n1
            for l in range(1, n2):
                o = db2_list[l - 1]
                if l - 1 != pos and sizes[labels[o]] == 1:
                    k2l += 1
                if l > pos:
                    base = <double>k2l - <double>l * (1.0 - discount) + strength
                    lw += log(base) - log(base + 1.0)
        for l in range(p):
            lw += logtheta[l, codes[r, l]]
        if reg_r:
            for i in range(preg):
                eta[i] = rec_eta[r, i]
                for j in range(preg):
                    lam[i * preg + j] = rec_lam[r, i, j]
            lw += _chol_loglik(lam, eta, rec_c[r], rec_d[r], sx_inv, logdet_sx, preg)
        cand[ncand] = -1
        wbuf[ncand] = lw
        ncand += 1
        info[0] = ncand
        top = -INFINITY
        for i in range(ncand):
            if wbuf[i] != wbuf[i]:
                raise ArithmeticError(f"record {r}: allocation weight is NaN")
            if wbuf[i] > top:
                top = wbuf[i]
        if top == -INFINITY:
            raise ArithmeticError(f"record {r}: every allocation has zero weight")
        total = 0.0
        for i in range(ncand):
            total += exp(wbuf[i] - top)
        target = uniforms[it] * total
        acc = 0.0
        pick = ncand - 1
        for i in range(ncand):
            acc += exp(wbuf[i] - top)
            if target < acc:
                pick = i
                break
        dest = cand[pick]
        if dest < 0:
            dest = 0
            while sizes[dest] != 0:
                dest += 1
            k += 1
        h = head[dest]
        nxt[r] = h
        prv[r] = -1
        if h >= 0:
            prv[h] = r
        head[dest] = r
        labels[r] = dest
        sizes[dest] += 1
        _refresh_cluster(dest, codes, theta, logtheta, alpha, head, nxt, logm, logp, qshare,
                         ibuf, cbuf, tbuf)
        if use_reg:
            _reg_refresh_cluster(dest, head, nxt, rec_lam, rec_eta, rec_c, rec_d, cl_lam,
                                 cl_eta, cl_c, cl_d, cl_ll, sx_inv, logdet_sx)
    return k
