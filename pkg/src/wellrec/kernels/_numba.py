"""Loop kernels compiled with numba.

All functions mutate ``w``/``V`` in place and return the (immutable) bias
``w0`` alongside any status, since scalars cannot be updated by reference.
Feature layout: company ``u`` at ``u``, well ``i`` at ``C + i``, aux column
``a`` at ``C + I + a``.
"""
import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def _sigmoid(d):
    if d >= 0.0:
        return 1.0 / (1.0 + np.exp(-d))
    e = np.exp(d)
    return e / (1.0 + e)


@njit(cache=True)
def _pick(x, n):
    r = int(x * n)
    if r >= n:
        r = n - 1
    return r


@njit(cache=True)
def _unobserved(obs, r):
    # r-th (0-based) well index not present in the sorted array obs
    j = r
    for o in obs:
        if o <= j:
            j += 1
        else:
            break
    return j


@njit(cache=True)
def _accumulate(w, V, C, aux, u, i, s):
    # Score of (u, i) minus w0; leaves sum_q v_q x_q in s.
    k = V.shape[1]
    I = aux.shape[0]
    A = aux.shape[1]
    wi = C + i
    base = C + I
    lin = w[u] + w[wi]
    sq = 0.0
    for f in range(k):
        a = V[u, f]
        b = V[wi, f]
        s[f] = a + b
        sq += a * a + b * b
    for c in range(A):
        x = aux[i, c]
        if x != 0.0:
            p = base + c
            lin += w[p] * x
            for f in range(k):
                vx = V[p, f] * x
                s[f] += vx
                sq += vx * vx
    tot = 0.0
    for f in range(k):
        tot += s[f] * s[f]
    return lin + 0.5 * (tot - sq)


@njit(cache=True)
def pair_score(w0, w, V, C, aux, u, i):
    s = np.empty(V.shape[1])
    return w0 + _accumulate(w, V, C, aux, u, i, s)


@njit(cache=True)
def score_wells(w0, w, V, C, aux, u):
    k = V.shape[1]
    I = aux.shape[0]
    A = aux.shape[1]
    base = C + I
    out = np.empty(I)
    # company-side terms are shared by every well
    lin_u = w0 + w[u]
    sq_u = 0.0
    for f in range(k):
        sq_u += V[u, f] * V[u, f]
    s = np.empty(k)
    for i in range(I):
        wi = C + i
        lin = lin_u + w[wi]
        sq = sq_u
        for f in range(k):
            b = V[wi, f]
            s[f] = V[u, f] + b
            sq += b * b
        for c in range(A):
            x = aux[i, c]
            if x != 0.0:
                p = base + c
                lin += w[p] * x
                for f in range(k):
                    vx = V[p, f] * x
                    s[f] += vx
                    sq += vx * vx
        tot = 0.0
        for f in range(k):
            tot += s[f] * s[f]
        out[i] = lin + 0.5 * (tot - sq)
    return out


@njit(cache=True)
def pair_diffs(w0, w, V, C, aux, us, iis, jjs):
    n = us.shape[0]
    out = np.empty(n)
    s = np.empty(V.shape[1])
    for t in range(n):
        fi = _accumulate(w, V, C, aux, us[t], iis[t], s)
        fj = _accumulate(w, V, C, aux, us[t], jjs[t], s)
        out[t] = fi - fj
    return out


@njit(cache=True)
def pair_update(w0, w, V, C, aux, u, i, j, scale, lr, lam):
    """One ascent step on scale * ln sigmoid(f(u,i) - f(u,j)) - lam * ||theta||^2.

    Only parameters active in either row are regularized. Returns (w0, d)
    where d is the pre-update score difference; the model is untouched
    when d is not finite.
    """
    k = V.shape[1]
    I = aux.shape[0]
    A = aux.shape[1]
    base = C + I
    s_i = np.empty(k)
    s_j = np.empty(k)
    d = _accumulate(w, V, C, aux, u, i, s_i) - _accumulate(w, V, C, aux, u, j, s_j)
    if not np.isfinite(d):
        return w0, d
    g = scale * _sigmoid(-d)
    reg = 2.0 * lam
    w0 = w0 - lr * reg * w0

    w[u] -= lr * reg * w[u]
    for f in range(k):
        v = V[u, f]
        V[u, f] = v + lr * (g * (s_i[f] - s_j[f]) - reg * v)

    p = C + i
    w[p] += lr * (g - reg * w[p])
    for f in range(k):
        v = V[p, f]
        V[p, f] = v + lr * (g * (s_i[f] - v) - reg * v)

    p = C + j
    w[p] += lr * (-g - reg * w[p])
    for f in range(k):
        v = V[p, f]
        V[p, f] = v + lr * (-g * (s_j[f] - v) - reg * v)

    for c in range(A):
        xi = aux[i, c]
        xj = aux[j, c]
        if xi == 0.0 and xj == 0.0:
            continue
        p = base + c
        w[p] += lr * (g * (xi - xj) - reg * w[p])
        for f in range(k):
            v = V[p, f]
            grad = (xi * s_i[f] - v * xi * xi) - (xj * s_j[f] - v * xj * xj)
            V[p, f] = v + lr * (g * grad - reg * v)
    return w0, d


@njit(cache=True)
def warp_update(w0, w, V, C, aux, u, i, obs, draws, lr, lam):
    """Sample negatives until one violates the unit margin, then update.

    ``draws`` holds one uniform [0, 1) number per allowed negative draw.
    Returns (w0, draws_used, status) with status 1 = updated,
    0 = no violation (model unchanged), -1 = non-finite score.
    """
    I = aux.shape[0]
    n_neg = I - obs.shape[0]
    M = draws.shape[0]
    s = np.empty(V.shape[1])
    f_i = _accumulate(w, V, C, aux, u, i, s)
    if not np.isfinite(f_i):
        return w0, 0, -1
    for t in range(1, M + 1):
        j = _unobserved(obs, _pick(draws[t - 1], n_neg))
        f_j = _accumulate(w, V, C, aux, u, j, s)
        if not np.isfinite(f_j):
            return w0, t, -1
        if f_j + 1.0 > f_i:
            weight = np.log(float(n_neg // t) + 1.0)
            w0, d = pair_update(w0, w, V, C, aux, u, i, j, weight, lr, lam)
            if not np.isfinite(d):
                return w0, t, -1
            return w0, t, 1
    return w0, M, 0


@njit(cache=True)
def run_epoch(w0, w, V, C, aux, indptr, indices, eligible, U, warp, lr, lam):
    """Apply one sampled update per row of ``U``.

    Row layout of ``U``: [company draw, observed-well draw, negative draw(s)...].
    Returns (w0, failed_step or -1, updates_applied).
    """
    I = aux.shape[0]
    n_elig = eligible.shape[0]
    updates = 0
    for step in range(U.shape[0]):
        u = eligible[_pick(U[step, 0], n_elig)]
        obs = indices[indptr[u]:indptr[u + 1]]
        i = obs[_pick(U[step, 1], obs.shape[0])]
        if warp:
            w0, used, status = warp_update(w0, w, V, C, aux, u, i, obs, U[step, 2:], lr, lam)
        else:
            j = _unobserved(obs, _pick(U[step, 2], I - obs.shape[0]))
            w0, d = pair_update(w0, w, V, C, aux, u, i, j, 1.0, lr, lam)
            status = 1 if np.isfinite(d) else -1
        if status < 0:
            return w0, step, updates
        updates += status
    return w0, -1, updates
