"""Fused inner loop for the blocked MINRES sweep.

Same recurrence as the numpy reference in resistance._minres_block_numpy.
Each right-hand side is driven to convergence in turn so its working set
(a handful of length-n vectors) stays cache-resident; rows of ``b`` / ``x``
are the individual systems. Falls back to the numpy path when numba is
unavailable (resistance selects at import).
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


@njit(cache=True, fastmath=True)
def potentials_kernel(indptr, indices, data, nodes, x, tol, max_iter):
    """MINRES potentials u_l = L+ e_l for each sample node, one row of x per node.

    The right-hand side e_l - (1/n) 1 is generated implicitly. Each row is
    iterated until its explicitly verified relative residual reaches
    ``tol`` (the recurrence estimate triggers the check; on a miss the
    internal target tightens and iteration resumes). Rows are re-centered
    against the ones vector on exit. Returns (max_iterations_used,
    relative_residuals, converged_flags).
    """
    k, n = x.shape[0], x.shape[1]
    eps = 2.220446049250313e-16
    inv_n = 1.0 / n
    norm_pb = np.sqrt(1.0 - inv_n)
    brk = n * eps * norm_pb

    r1 = np.empty(n)
    r2 = np.empty(n)
    y = np.empty(n)
    w = np.empty(n)
    w2 = np.empty(n)

    residuals = np.zeros(k)
    ok = np.zeros(k, dtype=np.bool_)
    max_used = 0

    for c in range(k):
        node = nodes[c]
        rtarget = 0.5 * tol * norm_pb

        # initial residual r = b - L x with b = e_node - 1/n
        xs = 0.0
        for i in range(n):
            acc = -inv_n
            for jj in range(indptr[i], indptr[i + 1]):
                acc -= data[jj] * x[c, indices[jj]]
            r2[i] = acc
            xs += acc
        r2[node] += 1.0
        xs = (xs + 1.0) / n
        s = 0.0
        for i in range(n):
            r2[i] -= xs
            r1[i] = r2[i]
            s += r2[i] * r2[i]
        beta = np.sqrt(s)
        if beta <= 0.0:
            ok[c] = True
            continue

        for i in range(n):
            w[i] = 0.0
            w2[i] = 0.0
        oldb = 0.0
        dbar = 0.0
        epsln = 0.0
        phibar = beta
        cs = -1.0
        sn = 0.0

        itn = 0
        while itn < max_iter:
            itn += 1
            inv_bs = 1.0 / beta

            colsum = 0.0
            for i in range(n):
                acc = 0.0
                for jj in range(indptr[i], indptr[i + 1]):
                    acc += data[jj] * r2[indices[jj]]
                acc *= inv_bs
                y[i] = acc
                colsum += acc
            colsum /= n

            alpha = 0.0
            if itn >= 2:
                fac = beta / oldb
                for i in range(n):
                    t = y[i] - colsum - fac * r1[i]
                    y[i] = t
                    alpha += r2[i] * t
            else:
                for i in range(n):
                    t = y[i] - colsum
                    y[i] = t
                    alpha += r2[i] * t
            alpha *= inv_bs

            s = 0.0
            fac2 = alpha * inv_bs
            for i in range(n):
                t = y[i] - fac2 * r2[i]
                y[i] = t
                s += t * t
            tmp = r1
            r1 = r2
            r2 = y
            y = tmp
            oldb = beta
            beta = np.sqrt(s)

            oldeps = epsln
            delta = cs * dbar + sn * alpha
            gbar = sn * dbar - cs * alpha
            epsln = sn * beta
            dbar = -cs * beta
            gamma = np.sqrt(gbar * gbar + beta * beta)
            if gamma < eps:
                gamma = eps
            cs = gbar / gamma
            sn = beta / gamma
            phi = cs * phibar
            phibar = sn * phibar

            inv_gamma = 1.0 / gamma
            for i in range(n):
                wn = (r1[i] * inv_bs - oldeps * w2[i] - delta * w[i]) * inv_gamma
                w2[i] = w[i]
                w[i] = wn
                x[c, i] += phi * wn

            if abs(phibar) <= rtarget or beta <= brk:
                # verify with an explicit residual before accepting
                rs = 0.0
                for i in range(n):
                    acc = -inv_n
                    for jj in range(indptr[i], indptr[i + 1]):
                        acc -= data[jj] * x[c, indices[jj]]
                    if i == node:
                        acc += 1.0
                    rs += acc * acc
                rel = np.sqrt(rs) / norm_pb
                residuals[c] = rel
                if rel <= tol:
                    ok[c] = True
                    break
                if beta <= brk:
                    # Krylov space exhausted short of the target; the caller
                    # restarts this row with a fresh recurrence
                    break
                rtarget *= 0.25

        if itn > max_used:
            max_used = itn
        if not ok[c]:
            rs = 0.0
            for i in range(n):
                acc = -inv_n
                for jj in range(indptr[i], indptr[i + 1]):
                    acc -= data[jj] * x[c, indices[jj]]
                if i == node:
                    acc += 1.0
                rs += acc * acc
            residuals[c] = np.sqrt(rs) / norm_pb
            ok[c] = residuals[c] <= tol

        # keep the solution orthogonal to the ones vector
        xs = 0.0
        for i in range(n):
            xs += x[c, i]
        xs /= n
        for i in range(n):
            x[c, i] -= xs

    return max_used, residuals, ok


@njit(cache=True, fastmath=True)
def minres_block_kernel(indptr, indices, data, b, x, rtarget, active, max_iter, brk):
    """MINRES for each active row of the projected singular system.

    Mutates ``x`` and ``active`` in place; ``b`` must already be projected
    against the ones vector. A row is deactivated when its recurrence
    residual estimate drops below ``rtarget`` or the Lanczos recurrence
    breaks down (``beta <= brk``, exact solution reached). Returns the
    largest iteration count used by any row.
    """
    k, n = b.shape
    eps = 2.220446049250313e-16

    r1 = np.empty(n)
    r2 = np.empty(n)
    y = np.empty(n)
    w = np.empty(n)
    w2 = np.empty(n)

    max_used = 0
    for c in range(k):
        if not active[c]:
            continue

        # initial residual r = b - L x, re-centered
        xs = 0.0
        for i in range(n):
            acc = b[c, i]
            for jj in range(indptr[i], indptr[i + 1]):
                acc -= data[jj] * x[c, indices[jj]]
            r2[i] = acc
            xs += acc
        xs /= n
        s = 0.0
        for i in range(n):
            r2[i] -= xs
            r1[i] = r2[i]
            s += r2[i] * r2[i]
        beta = np.sqrt(s)
        if beta <= 0.0:
            active[c] = False
            continue

        for i in range(n):
            w[i] = 0.0
            w2[i] = 0.0

        oldb = 0.0
        dbar = 0.0
        epsln = 0.0
        phibar = beta
        cs = -1.0
        sn = 0.0

        itn = 0
        while itn < max_iter:
            itn += 1
            inv_bs = 1.0 / beta

            # y = L (r2 / beta), with the column mean accumulated
            colsum = 0.0
            for i in range(n):
                acc = 0.0
                for jj in range(indptr[i], indptr[i + 1]):
                    acc += data[jj] * r2[indices[jj]]
                acc *= inv_bs
                y[i] = acc
                colsum += acc
            colsum /= n

            # re-center, subtract the (beta/oldb) r1 term, accumulate alpha
            alpha = 0.0
            if itn >= 2:
                fac = beta / oldb
                for i in range(n):
                    t = y[i] - colsum - fac * r1[i]
                    y[i] = t
                    alpha += r2[i] * t
            else:
                for i in range(n):
                    t = y[i] - colsum
                    y[i] = t
                    alpha += r2[i] * t
            alpha *= inv_bs

            # finalize the new Lanczos residual; rotate r1 <- r2 <- y
            s = 0.0
            fac2 = alpha * inv_bs
            for i in range(n):
                t = y[i] - fac2 * r2[i]
                y[i] = t
                s += t * t
            tmp = r1
            r1 = r2
            r2 = y
            y = tmp
            oldb = beta
            beta = np.sqrt(s)

            oldeps = epsln
            delta = cs * dbar + sn * alpha
            gbar = sn * dbar - cs * alpha
            epsln = sn * beta
            dbar = -cs * beta
            gamma = np.sqrt(gbar * gbar + beta * beta)
            if gamma < eps:
                gamma = eps
            cs = gbar / gamma
            sn = beta / gamma
            phi = cs * phibar
            phibar = sn * phibar

            # v = old r2 / beta_old = r1 * inv_bs after the rotation;
            # w2 holds the direction before last, w the last one
            inv_gamma = 1.0 / gamma
            for i in range(n):
                wn = (r1[i] * inv_bs - oldeps * w2[i] - delta * w[i]) * inv_gamma
                w2[i] = w[i]
                w[i] = wn
                x[c, i] += phi * wn

            if abs(phibar) <= rtarget[c] or beta <= brk[c]:
                active[c] = False
                break
        if itn > max_used:
            max_used = itn
    return max_used
