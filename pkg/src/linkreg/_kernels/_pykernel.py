"""Pure-Python Gibbs kernels.

Line-for-line twin of ``_ckernel.pyx``: same loop order, same libm calls, so
both backends produce identical chains for identical inputs.  Only used when
the compiled extension is unavailable or explicitly disabled.
"""
import math

MAXP = 8
INF = math.inf

PRIOR_UNIFORM_LABELS = 0
PRIOR_UNIFORM_PARTITIONS = 1
PRIOR_PYP = 2
PRIOR_CONSTRAINED_PYP = 3


def _feature_cache(c, l, a, codes, theta, logtheta, head, nxt, ibuf, cbuf, tbuf):
    """(logm, logp, q) of cluster ``c`` for field ``l``.

    ``q`` is the share of the marginal coming from "every record missed",
    which turns the add-one ratio for an unseen code into a product.
    """
    n = 0
    logp = 0.0
    r = head[c]
    while r >= 0:
        v = codes[r, l]
        ibuf[n] = v
        n += 1
        logp += logtheta[l, v]
        r = nxt[r]
    log_a = math.log(a) if a > 0.0 else -INF
    # compact ibuf to the distinct codes, counts in cbuf
    nd = 0
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
    top = -INF
    covered = 0.0
    for j in range(nd):
        th = theta[l, ibuf[j]]
        covered += th
        cnt = cbuf[j]
        t = (1 - cnt) * logtheta[l, ibuf[j]] + cnt * math.log(1.0 - a + a * th)
        if n > cnt:
            t += (n - cnt) * log_a
        tbuf[j] = t
        if t > top:
            top = t
    rest = 1.0 - covered
    tail = -INF
    if rest > 0.0:
        tail = n * log_a + math.log(rest)
        if tail > top:
            top = tail
    if top == -INF:
        return -INF, logp, 0.0
    acc = 0.0
    for j in range(nd):
        acc += math.exp(tbuf[j] - top)
    if tail != -INF:
        acc += math.exp(tail - top)
    logm = logp + top + math.log(acc)
    if log_a == -INF:
        q = 0.0
    else:
        q = math.exp(n * log_a + logp - logm)
    return logm, logp, q


def refresh_cluster(c, codes, theta, logtheta, alpha, head, nxt, logm, logp, qshare, ibuf, cbuf, tbuf):
    for l in range(codes.shape[1]):
        m, p_, q = _feature_cache(c, l, alpha[l], codes, theta, logtheta, head, nxt, ibuf, cbuf, tbuf)
        logm[c, l] = m
        logp[c, l] = p_
        qshare[c, l] = q


def feature_refresh(l, a, codes, theta, logtheta, sizes, head, nxt, out_logm, out_q, ibuf, cbuf, tbuf):
    """Per-cluster log marginals of field ``l`` at distortion ``a``; returns their sum."""
    total = 0.0
    for c in range(sizes.shape[0]):
        if sizes[c] == 0:
            continue
        m, _, q = _feature_cache(c, l, a, codes, theta, logtheta, head, nxt, ibuf, cbuf, tbuf)
        out_logm[c] = m
        out_q[c] = q
        total += m
    return total


def _chol_loglik(lam, eta, cst, d, sx_inv, logdet_sx, p):
    if d == 0:
        return 0.0
    if p == 1:
        s = sx_inv[0, 0] + lam[0][0]
        if not s > 0.0:
            return math.nan
        return -0.5 * (cst + logdet_sx + math.log(s) - eta[0] * eta[0] / s)
    # P = Sx^-1 + lam, lower Cholesky in place
    L = [[0.0] * p for _ in range(p)]
    for i in range(p):
        for j in range(i + 1):
            s = sx_inv[i, j] + lam[i][j]
            for k in range(j):
                s -= L[i][k] * L[j][k]
            if i == j:
                if not s > 0.0:
                    return math.nan
                L[i][i] = math.sqrt(s)
            else:
                L[i][j] = s / L[j][j]
    quad = 0.0
    logdet = 0.0
    w = [0.0] * p
    for i in range(p):
        s = eta[i]
        for k in range(i):
            s -= L[i][k] * w[k]
        w[i] = s / L[i][i]
        quad += w[i] * w[i]
        logdet += math.log(L[i][i])
    return -0.5 * (cst + logdet_sx + 2.0 * logdet - quad)


def reg_refresh_cluster(c, head, nxt, rec_lam, rec_eta, rec_c, rec_d,
                        cl_lam, cl_eta, cl_c, cl_d, cl_ll, sx_inv, logdet_sx):
    p = rec_eta.shape[1]
    lam = [[0.0] * p for _ in range(p)]
    eta = [0.0] * p
    cst = 0.0
    d = 0
    r = head[c]
    while r >= 0:
        for i in range(p):
            eta[i] += rec_eta[r, i]
            for j in range(p):
                lam[i][j] += rec_lam[r, i, j]
        cst += rec_c[r]
        d += rec_d[r]
        r = nxt[r]
    for i in range(p):
        cl_eta[c, i] = eta[i]
        for j in range(p):
            cl_lam[c, i, j] = lam[i][j]
    cl_c[c] = cst
    cl_d[c] = d
    cl_ll[c] = _chol_loglik(lam, eta, cst, d, sx_inv, logdet_sx, p)


def reg_refresh_all(sizes, head, nxt, rec_lam, rec_eta, rec_c, rec_d,
                    cl_lam, cl_eta, cl_c, cl_d, cl_ll, sx_inv, logdet_sx):
    total = 0.0
    for c in range(sizes.shape[0]):
        if sizes[c] == 0:
            continue
        reg_refresh_cluster(c, head, nxt, rec_lam, rec_eta, rec_c, rec_d,
                            cl_lam, cl_eta, cl_c, cl_d, cl_ll, sx_inv, logdet_sx)
        total += cl_ll[c]
    return total


def _reg_join(c, r, rec_lam, rec_eta, rec_c, rec_d, cl_lam, cl_eta, cl_c, cl_d, sx_inv, logdet_sx, p):
    lam = [[cl_lam[c, i, j] + rec_lam[r, i, j] for j in range(p)] for i in range(p)]
    eta = [cl_eta[c, i] + rec_eta[r, i] for i in range(p)]
    return _chol_loglik(lam, eta, cl_c[c] + rec_c[r], cl_d[c] + rec_d[r], sx_inv, logdet_sx, p)


def _reg_alone(r, rec_lam, rec_eta, rec_c, rec_d, sx_inv, logdet_sx, p):
    lam = [[rec_lam[r, i, j] for j in range(p)] for i in range(p)]
    eta = [rec_eta[r, i] for i in range(p)]
    return _chol_loglik(lam, eta, rec_c[r], rec_d[r], sx_inv, logdet_sx, p)


def gibbs_sweep(order, uniforms, codes, theta, logtheta, alpha,
                labels, sizes, head, nxt, prv, logm, logp, qshare, db,
                prior_kind, strength, discount, n_pop, constrained,
                db2_list, db2_pos, n1,
                use_reg, rec_lam, rec_eta, rec_c, rec_d,
                cl_lam, cl_eta, cl_c, cl_d, cl_ll, sx_inv, logdet_sx,
                k, ibuf, cbuf, tbuf, wbuf, cand, info):
    """Reallocate every record in ``order``; returns the new number of clusters.

    ``uniforms[i]`` drives the inverse-CDF draw for ``order[i]``.  The
    candidate list and log weights of the last record stay in ``cand``/``wbuf``
    with their count in ``info[0]``.
    """
    n = labels.shape[0]
    p = codes.shape[1]
    preg = rec_eta.shape[1] if use_reg else 0
    n2 = db2_list.shape[0]
    for it in range(order.shape[0]):
        r = order[it]
        # take r out of its cluster
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
            refresh_cluster(src, codes, theta, logtheta, alpha, head, nxt, logm, logp, qshare, ibuf, cbuf, tbuf)
            if use_reg:
                reg_refresh_cluster(src, head, nxt, rec_lam, rec_eta, rec_c, rec_d,
                                    cl_lam, cl_eta, cl_c, cl_d, cl_ll, sx_inv, logdet_sx)
        dr = db[r]
        reg_r = use_reg and rec_d[r] > 0
        ncand = 0
        for c in range(n):
            if sizes[c] == 0:
                continue
            if prior_kind == PRIOR_CONSTRAINED_PYP:
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
                if prior_kind == PRIOR_PYP:
                    w0 = sizes[c] - discount
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
                    lg = cnt * math.log(1.0 - a + a * th) + logp[c, l] - cnt * logtheta[l, v]
                    if nc > cnt:
                        lg += (nc - cnt) * (math.log(a) if a > 0.0 else -INF)
                    prod *= th * (a + (1.0 - a) * math.exp(lg - logm[c, l]))
            lw = math.log(prod) if prod > 0.0 else -INF
            if reg_r:
                lw += _reg_join(c, r, rec_lam, rec_eta, rec_c, rec_d, cl_lam, cl_eta, cl_c, cl_d,
                                sx_inv, logdet_sx, preg) - cl_ll[c]
            cand[ncand] = c
            wbuf[ncand] = lw
            ncand += 1
        # new cluster
        if prior_kind == PRIOR_UNIFORM_LABELS:
            lw = math.log(n_pop - k) if n_pop > k else -INF
        elif prior_kind == PRIOR_UNIFORM_PARTITIONS:
            lw = 0.0 if n_pop > k else -INF
        elif prior_kind == PRIOR_PYP:
            x = k * discount + strength
            lw = math.log(x) if x > 0.0 else -INF
        else:
            x = k * discount + strength
            lw = math.log(x) if x > 0.0 else -INF
            pos = db2_pos[r]
            k2l = n1
            for l in range(1, n2):
                o = db2_list[l - 1]
                if l - 1 != pos and sizes[labels[o]] == 1:
                    k2l += 1
                if l > pos:
                    base = k2l - l * (1.0 - discount) + strength
                    lw += math.log(base) - math.log(base + 1.0)
        for l in range(p):
            lw += logtheta[l, codes[r, l]]
        if reg_r:
            lw += _reg_alone(r, rec_lam, rec_eta, rec_c, rec_d, sx_inv, logdet_sx, preg)
        cand[ncand] = -1
        wbuf[ncand] = lw
        ncand += 1
        info[0] = ncand
        # inverse-CDF draw
        top = -INF
        for i in range(ncand):
            if wbuf[i] != wbuf[i]:
                raise ArithmeticError(f"record {r}: allocation weight is NaN")
            if wbuf[i] > top:
                top = wbuf[i]
        if top == -INF:
            raise ArithmeticError(f"record {r}: every allocation has zero weight")
        total = 0.0
        for i in range(ncand):
            total += math.exp(wbuf[i] - top)
        target = uniforms[it] * total
        acc = 0.0
        pick = ncand - 1
        for i in range(ncand):
            acc += math.exp(wbuf[i] - top)
            if target < acc:
                pick = i
                break
        dest = cand[pick]
        if dest < 0:
            dest = 0
            while sizes[dest] != 0:
                dest += 1
            k += 1
        # link r at the head of dest
        h = head[dest]
        nxt[r] = h
        prv[r] = -1
        if h >= 0:
            prv[h] = r
        head[dest] = r
        labels[r] = dest
        sizes[dest] += 1
        refresh_cluster(dest, codes, theta, logtheta, alpha, head, nxt, logm, logp, qshare, ibuf, cbuf, tbuf)
        if use_reg:
            reg_refresh_cluster(dest, head, nxt, rec_lam, rec_eta, rec_c, rec_d,
                                cl_lam, cl_eta, cl_c, cl_d, cl_ll, sx_inv, logdet_sx)
    return k
