"""Exact solver for the cutting-plane master problem

    min_x  max_j (c_j + g_j . x) + eta * |x|^2

via its dual, a convex QP over the probability simplex

    min_lam  lam' H lam / 2 - c' lam,   H = G G' / (2 eta),

solved by a primal active-set method (Wolfe-style major/minor cycles).
Returns the primal minimiser ``x = -G' lam / (2 eta)`` and the model value.
"""
from __future__ import annotations

import numpy as np


def solve_master(G, c, eta, lam0=None, tol=1e-13, max_iter=None):
    G = np.asarray(G, dtype=float)
    c = np.asarray(c, dtype=float)
    nb = c.size
    H = G @ G.T / (2.0 * eta)
    # tiny ridge keeps the reduced KKT matrix nonsingular for near-parallel cuts
    ridge = 1e-14 * max(1.0, float(np.max(np.diag(H))))
    H[np.diag_indices(nb)] += ridge
    scale = max(1.0, float(np.max(np.abs(c))))

    if lam0 is None or lam0.size != nb or lam0.sum() <= 0:
        lam = np.zeros(nb)
        lam[int(np.argmax(c))] = 1.0
    else:
        lam = np.clip(np.asarray(lam0, dtype=float), 0.0, None)
        lam /= lam.sum()
    S = list(np.flatnonzero(lam > 0))
    max_iter = max_iter or 50 * nb + 100

    for _ in range(max_iter):
        # minor cycle: move to the equality-constrained optimum on S, dropping blockers
        while True:
            k = len(S)
            KKT = np.zeros((k + 1, k + 1))
            KKT[:k, :k] = H[np.ix_(S, S)]
            KKT[:k, k] = 1.0
            KKT[k, :k] = 1.0
            rhs = np.append(c[S], 1.0)
            try:
                sol = np.linalg.solve(KKT, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(KKT, rhs, rcond=None)[0]
            z = sol[:k]
            if np.all(z > 0):
                lam[:] = 0.0
                lam[S] = z
                break
            cur = lam[S]
            neg = z <= 0
            theta = float(np.min(cur[neg] / (cur[neg] - z[neg])))
            new = cur + theta * (z - cur)
            lam[:] = 0.0
            lam[S] = np.clip(new, 0.0, None)
            keep = [s for s, v in zip(S, new) if v > 1e-15]
            if len(keep) == len(S):  # numerical stall: drop the most negative
                keep = [s for s, zz in zip(S, z) if zz != z.min()]
            S = keep or [int(np.argmax(c))]
            lam[[s for s in range(nb) if s not in S]] = 0.0
            lam /= lam.sum() if lam.sum() > 0 else 1.0
        x = -G.T @ lam / (2.0 * eta)
        vals = c + G @ x
        y = float(lam @ vals)
        j = int(np.argmax(vals))
        if vals[j] <= y + tol * scale or j in S:
            break
        S.append(j)
    x = -G.T @ lam / (2.0 * eta)
    model = float(np.max(c + G @ x)) + eta * float(x @ x)
    return x, lam, model
