"""Loop-based dense assembly of the slab operators, written directly from the
stencil and quadrature formulas without using the package's operator code.
Used as the second route in cross-checks."""
import numpy as np
import scipy.linalg


def index(i, k, n_ord):
    return i * n_ord + k


def assemble(grid, optics):
    """Dense (T, K, F, d) acting on fields flattened row-major as (cell, ordinate)."""
    n, m = grid.n_cells, grid.n_ord
    N = n * m
    T = np.zeros((N, N))
    K = np.zeros((N, N))
    F = np.zeros((N, N))
    for i in range(n):
        for k in range(m):
            r = index(i, k, m)
            a = abs(grid.mu[k]) / grid.h
            T[r, r] = a + optics.sigma[i, k]
            # upwind neighbour: left cell for mu > 0, right cell for mu < 0
            if grid.mu[k] > 0 and i > 0:
                T[r, index(i - 1, k, m)] = -a
            if grid.mu[k] < 0 and i < n - 1:
                T[r, index(i + 1, k, m)] = -a
            for kp in range(m):
                c = index(i, kp, m)
                K[r, c] = grid.w[kp] * optics.kappa[i, kp, k]
                F[r, c] = grid.w[kp] * optics.phi[i, kp, k]
    d = np.array([grid.h * grid.w[k] * optics.sigma[i, k] for i in range(n) for k in range(m)])
    return T, K, F, d


def principal(grid, optics):
    """(mu1, |mu2|, sigma-norm of C) from the generalized problem F u = mu B u."""
    T, K, F, d = assemble(grid, optics)
    B = T - K
    ev = scipy.linalg.eigvals(F, B)
    ev = ev[np.isfinite(ev)]
    ev = ev[np.argsort(-np.abs(ev))]
    C = scipy.linalg.solve(B, F)
    s = np.sqrt(d)
    normC = np.linalg.norm(s[:, None] * C / s[None, :], 2)
    return float(ev[0].real), float(abs(ev[1])), float(normC)
