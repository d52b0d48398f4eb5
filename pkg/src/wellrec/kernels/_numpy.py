"""Pure-numpy kernels, vectorized over factors and candidate wells.

Same signatures and semantics as the numba backend; results agree to
floating-point summation order.
"""
import numpy as np

NAME = "numpy"


def _sigmoid(d):
    if d >= 0.0:
        return 1.0 / (1.0 + np.exp(-d))
    e = np.exp(d)
    return e / (1.0 + e)


def _pick(x, n):
    r = np.minimum((np.asarray(x) * n).astype(np.int64), n - 1)
    return r


def _unobserved(obs, r):
    # r-th unobserved index = r + #{m : obs[m] - m <= r}
    gaps = obs - np.arange(obs.shape[0])
    return r + np.searchsorted(gaps, r, side="right")


def _terms(w, V, C, aux, u, wells):
    """Scores minus w0 for company u against each of ``wells``, plus sums S."""
    I, A = aux.shape
    base = C + I
    X = aux[wells]
    Vw = V[C + wells]
    Va = V[base:base + A]
    vu = V[u]
    S = vu + Vw + X @ Va
    SQ = vu * vu + Vw * Vw + (X * X) @ (Va * Va)
    lin = w[u] + w[C + wells] + X @ w[base:base + A]
    return lin + 0.5 * (S * S - SQ).sum(axis=1), S


def pair_score(w0, w, V, C, aux, u, i):
    f, _ = _terms(w, V, C, aux, u, np.array([i]))
    return w0 + f[0]


def score_wells(w0, w, V, C, aux, u):
    f, _ = _terms(w, V, C, aux, u, np.arange(aux.shape[0]))
    return w0 + f


def pair_diffs(w0, w, V, C, aux, us, iis, jjs):
    out = np.empty(len(us))
    for u in np.unique(us):
        sel = np.flatnonzero(us == u)
        fi, _ = _terms(w, V, C, aux, u, iis[sel])
        fj, _ = _terms(w, V, C, aux, u, jjs[sel])
        out[sel] = fi - fj
    return out


def pair_update(w0, w, V, C, aux, u, i, j, scale, lr, lam):
    I, A = aux.shape
    base = C + I
    f, S = _terms(w, V, C, aux, u, np.array([i, j]))
    d = f[0] - f[1]
    if not np.isfinite(d):
        return w0, d
    s_i, s_j = S
    g = scale * _sigmoid(-d)
    reg = 2.0 * lam
    w0 = w0 - lr * reg * w0

    w[u] -= lr * reg * w[u]
    V[u] += lr * (g * (s_i - s_j) - reg * V[u])

    p = C + i
    w[p] += lr * (g - reg * w[p])
    V[p] += lr * (g * (s_i - V[p]) - reg * V[p])

    p = C + j
    w[p] += lr * (-g - reg * w[p])
    V[p] += lr * (-g * (s_j - V[p]) - reg * V[p])

    xi, xj = aux[i], aux[j]
    active = np.flatnonzero((xi != 0.0) | (xj != 0.0))
    if active.size:
        xi, xj = xi[active, None], xj[active, None]
        P = base + active
        Vp = V[P]
        grad = (xi * s_i - Vp * xi * xi) - (xj * s_j - Vp * xj * xj)
        w[P] += lr * (g * (xi[:, 0] - xj[:, 0]) - reg * w[P])
        V[P] = Vp + lr * (g * grad - reg * Vp)
    return w0, d


def warp_update(w0, w, V, C, aux, u, i, obs, draws, lr, lam):
    n_neg = aux.shape[0] - obs.shape[0]
    M = draws.shape[0]
    f_i = pair_score(0.0, w, V, C, aux, u, i)
    if not np.isfinite(f_i):
        return w0, 0, -1
    # the model is fixed until the first violation, so all M draws can be scored at once
    js = _unobserved(obs, _pick(draws, n_neg))
    f_j, _ = _terms(w, V, C, aux, u, js)
    bad = ~np.isfinite(f_j)
    stop = bad | (f_j + 1.0 > f_i)
    if not stop.any():
        return w0, M, 0
    t = int(np.argmax(stop)) + 1
    if bad[t - 1]:
        return w0, t, -1
    weight = np.log(float(n_neg // t) + 1.0)
    w0, d = pair_update(w0, w, V, C, aux, u, i, int(js[t - 1]), weight, lr, lam)
    if not np.isfinite(d):
        return w0, t, -1
    return w0, t, 1


def run_epoch(w0, w, V, C, aux, indptr, indices, eligible, U, warp, lr, lam):
    I = aux.shape[0]
    us = eligible[_pick(U[:, 0], eligible.shape[0])]
    updates = 0
    for step in range(U.shape[0]):
        u = us[step]
        obs = indices[indptr[u]:indptr[u + 1]]
        i = obs[_pick(U[step, 1], obs.shape[0])]
        if warp:
            w0, _, status = warp_update(w0, w, V, C, aux, u, i, obs, U[step, 2:], lr, lam)
        else:
            j = _unobserved(obs, _pick(U[step, 2], I - obs.shape[0]))
            w0, d = pair_update(w0, w, V, C, aux, u, i, int(j), 1.0, lr, lam)
            status = 1 if np.isfinite(d) else -1
        if status < 0:
            return w0, step, updates
        updates += status
    return w0, -1, updates
