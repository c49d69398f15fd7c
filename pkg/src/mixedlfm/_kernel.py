"""Compiled inner loop of the collapsed latent-feature sweep.

The kernel walks rows sequentially.  For each row it resamples every
shared feature bit from the exchangeable-prior-times-marginal-likelihood
conditional, then resamples the row's singleton-feature count (death of
current singletons, birth of 0..k_new_max fresh ones).  The shared
posterior matrix M = (Z^T Z + lam I)^-1 and the per-channel projections
P = Y^T Z are maintained by rank-one updates, so one bit update costs
O(K^2 + K C) independent of N.

Bit acceptance consumes presampled logistic noise: z becomes 1 iff the
posterior log-odds exceed the next noise value, which avoids a transcendental
call and an RNG call per toggle.  All arrays carry spare column capacity;
when a birth would overflow capacity (or the noise buffer runs dry) the
kernel stops and reports the row so the caller can grow buffers and resume.
"""

import math

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_CAPACITY = 1
STATUS_NOISE = 2

_EPS = 1e-12


@njit(cache=True)
def seed_rng(seed):
    np.random.seed(seed)


@njit(cache=True)
def sweep_rows(zb, m, p, yact, mcounts, k1, lam, sigma_b_sq, alpha, k_new_max, noise, row_start):
    """Run the sweep from ``row_start``; returns (k1, status, next_row).

    zb      (N, cap) float64, active columns [0, k1), column 0 = bias
    m       (cap, cap) float64, active block [0:k1, 0:k1]
    p       (C, cap) float64 projections
    yact    (N, C) float64 pseudo-observations of the modeled channels
    mcounts (cap,) int64 column sums of zb
    noise   (L,) float64 presampled standard-logistic draws
    """
    n_obs = zb.shape[0]
    cap = zb.shape[1]
    c_ch = yact.shape[1]
    a = np.empty(cap)
    b = np.empty(cap)
    scores = np.empty(k_new_max + 1)

    # prior log-odds of inclusion, indexed by m_minus
    logodds_tab = np.empty(n_obs)
    for i in range(1, n_obs):
        logodds_tab[i] = math.log(i / (n_obs - i))
    # Poisson(alpha/N) log pmf terms shared by every birth proposal
    lograte = math.log(alpha / n_obs)
    pois = np.empty(k_new_max + 1)
    for j in range(k_new_max + 1):
        pois[j] = j * lograte - math.lgamma(j + 1.0)

    ni = 0
    n_noise = noise.shape[0]

    for n in range(row_start, n_obs):
        if ni + k1 > n_noise:
            return k1, STATUS_NOISE, n
        # ---- shared features: collapsed bit updates -------------------
        # a = M z_n and al = 1 - z_n.a are maintained incrementally: after
        # an accepted flip, M' z_n' = b / beta and 1 - z_n' b / beta = 1/beta
        for i in range(k1):
            s = 0.0
            for j in range(k1):
                s += m[i, j] * zb[n, j]
            a[i] = s
        al = 1.0
        for i in range(k1):
            al -= zb[n, i] * a[i]
        if al < _EPS:
            al = _EPS
        for k in range(1, k1):
            zc = zb[n, k]
            m_minus = mcounts[k] - (1 if zc > 0.5 else 0)
            if m_minus == 0:
                continue  # singletons belong to the birth/death move
            sgn = 1.0 - 2.0 * zc
            # b = M1 z_n' with M1 = M + a a^T / al and z_n' the flipped row
            adotzp = (1.0 - al) + sgn * a[k]
            coef = adotzp / al
            for i in range(k1):
                b[i] = a[i] + sgn * m[i, k] + a[i] * coef
            zdotb = 0.0
            for i in range(k1):
                zdotb += zb[n, i] * b[i]
            beta = 1.0 + zdotb + sgn * b[k]
            if beta < _EPS:
                beta = _EPS
            dlogdet = math.log(al) + math.log(beta)
            ak = a[k]
            bk = b[k]
            mkk_new = m[k, k] + ak * ak / al - bk * bk / beta
            dq = 0.0
            for c in range(c_ch):
                pa = 0.0
                pb = 0.0
                mkp = 0.0
                for i in range(k1):
                    pc = p[c, i]
                    pa += pc * a[i]
                    pb += pc * b[i]
                    mkp += m[k, i] * pc
                delta = sgn * yact[n, c]
                mkp_new = mkp + ak * pa / al - bk * pb / beta
                dq += pa * pa / al - pb * pb / beta + 2.0 * delta * mkp_new + delta * delta * mkk_new
            dll = -0.5 * c_ch * dlogdet + 0.5 * dq
            logodds = logodds_tab[m_minus]
            logit_one = logodds - dll if zc > 0.5 else logodds + dll
            new_bit = 1.0 if noise[ni] < logit_one else 0.0
            ni += 1
            if new_bit != zc:
                zb[n, k] = new_bit
                mcounts[k] += 1 if new_bit > 0.5 else -1
                for i in range(k1):
                    ai = a[i] / al
                    bi = b[i] / beta
                    for j in range(k1):
                        m[i, j] += ai * a[j] - bi * b[j]
                for c in range(c_ch):
                    p[c, k] += sgn * yact[n, c]
                for i in range(k1):
                    a[i] = b[i] / beta
                al = 1.0 / beta
                if al < _EPS:
                    al = _EPS

        # ---- death of this row's singletons ---------------------------
        row_dirty = False  # deaths invalidate the maintained a / al
        k = 1
        while k < k1:
            if zb[n, k] > 0.5 and mcounts[k] == 1:
                row_dirty = True
                # snapshot row k first: the downdate would otherwise read
                # entries it already overwrote (M is symmetric, b = col k too)
                inv_mkk = 1.0 / m[k, k]
                for i in range(k1):
                    b[i] = m[k, i]
                for i in range(k1):
                    coef = b[i] * inv_mkk
                    for j in range(k1):
                        m[i, j] -= coef * b[j]
                # compact: shift columns k+1..k1-1 left by one
                for j in range(k, k1 - 1):
                    for i in range(n_obs):
                        zb[i, j] = zb[i, j + 1]
                    for c in range(c_ch):
                        p[c, j] = p[c, j + 1]
                    mcounts[j] = mcounts[j + 1]
                for j in range(k, k1 - 1):
                    for i in range(k1):
                        m[i, j] = m[i, j + 1]
                for j in range(k, k1 - 1):
                    for i in range(k1):
                        m[j, i] = m[j + 1, i]
                k1 -= 1
                for i in range(n_obs):
                    zb[i, k1] = 0.0
                for c in range(c_ch):
                    p[c, k1] = 0.0
                mcounts[k1] = 0
            else:
                k += 1

        # ---- birth of new singletons ----------------------------------
        if row_dirty:  # otherwise a and al are still current for this row
            for i in range(k1):
                s = 0.0
                for j in range(k1):
                    s += m[i, j] * zb[n, j]
                a[i] = s
            al = 1.0
            for i in range(k1):
                al -= zb[n, i] * a[i]
            if al < _EPS:
                al = _EPS
        ssq = 0.0
        for c in range(c_ch):
            q = 0.0
            for i in range(k1):
                q += p[c, i] * a[i]
            diff = q - yact[n, c]
            ssq += diff * diff
        # cheap log-free upper bound (the dropped determinant term is < 0):
        # when even the bound leaves j = 0 with all mass, skip the softmax
        ub = -1e300
        for j in range(1, k_new_max + 1):
            u_j = pois[j] + 0.5 * (j / (lam + j * al)) * ssq
            if u_j > ub:
                ub = u_j
        if ub - pois[0] < -34.0:
            np.random.random()
            j_new = 0
        else:
            best = -1e300
            for j in range(k_new_max + 1):
                sc = pois[j]
                if j > 0:
                    sc += -0.5 * c_ch * math.log(1.0 + j * al * sigma_b_sq)
                    sc += 0.5 * (j / (lam + j * al)) * ssq
                scores[j] = sc
                if sc > best:
                    best = sc
            total = 0.0
            for j in range(k_new_max + 1):
                scores[j] = math.exp(scores[j] - best)
                total += scores[j]
            u = np.random.random() * total
            j_new = k_new_max
            acc = 0.0
            for j in range(k_new_max + 1):
                acc += scores[j]
                if u < acc:
                    j_new = j
                    break
        if j_new > 0:
            if k1 + j_new > cap:
                return k1, STATUS_CAPACITY, n
            wj = j_new / (lam + j_new * al)
            tr = 1.0 / (lam + j_new * al)
            s_off = -al / (lam * (lam + j_new * al))
            s_diag = 1.0 / lam + s_off
            for i in range(k1):
                ai = a[i]
                for j in range(k1):
                    m[i, j] += wj * ai * a[j]
                for t in range(j_new):
                    m[i, k1 + t] = -tr * ai
                    m[k1 + t, i] = -tr * ai
            for s in range(j_new):
                for t in range(j_new):
                    m[k1 + s, k1 + t] = s_diag if s == t else s_off
            for t in range(j_new):
                zb[n, k1 + t] = 1.0
                mcounts[k1 + t] = 1
                for c in range(c_ch):
                    p[c, k1 + t] = yact[n, c]
            k1 += j_new

    return k1, STATUS_OK, n_obs
