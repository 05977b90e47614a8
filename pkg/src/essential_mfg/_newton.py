from dataclasses import dataclass

import numpy as np


@dataclass
class NewtonResult:
    x: np.ndarray
    residual: float
    iterations: int


def projected_newton(F, J, x0, project, tol, max_iter=100):
    """Damped Newton with a projection after each step.

    Least-squares steps keep singular Jacobians usable. Iteration continues
    past ``tol`` (down to ``tol * 1e-3``) while the residual still drops, which
    pulls iterates at double roots together instead of stopping them at
    different distances from the root.
    """
    x = project(np.asarray(x0, dtype=float))
    f = F(x)
    r = np.abs(f).max()
    target = tol * 1e-3
    history = [r]
    it = 0
    for it in range(1, max_iter + 1):
        if r <= target:
            break
        # slow crawl toward a nonzero local minimum of |F|
        if it > 20 and r > 0.5 * history[-10]:
            break
        step = np.linalg.lstsq(J(x), -f, rcond=1e-13)[0]
        lam = 1.0
        while lam >= 1e-4:
            xn = project(x + lam * step)
            fn = F(xn)
            rn = np.abs(fn).max()
            if rn < r * (1 - 1e-4 * lam):
                break
            lam *= 0.5
        else:
            break
        x, f, r = xn, fn, rn
        history.append(r)
    return NewtonResult(x, float(r), it)


def dedup(points, radius):
    """Indices of the first occurrence of each point cluster, in input order."""
    kept = []
    for k, p in enumerate(points):
        if all(np.abs(p - points[q]).max() >= radius for q in kept):
            kept.append(k)
    return kept
