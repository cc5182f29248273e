"""Small Levenberg-Marquardt least-squares kernel.

Used by the Prony fitter and by the network calibration. The Jacobian may be
supplied analytically or estimated with forward differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConvergenceError


@dataclass
class LMResult:
    x: np.ndarray
    cost: float  # 0.5 * sum of squared residuals
    residuals: np.ndarray
    iterations: int
    converged: bool


def numeric_jacobian(fun, x, f0=None, rel_step=1e-6):
    f0 = fun(x) if f0 is None else f0
    jac = np.empty((f0.size, x.size))
    for i in range(x.size):
        h = rel_step * max(1.0, abs(x[i]))
        xp = x.copy()
        xp[i] += h
        jac[:, i] = (fun(xp) - f0) / h
    return jac


def levenberg_marquardt(
    fun: Callable[[np.ndarray], np.ndarray],
    x0,
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    max_iter: int = 200,
    ftol: float = 1e-8,
    lam0: float = 1e-3,
    raise_on_cap: bool = True,
) -> LMResult:
    """Minimise ``0.5 * ||fun(x)||^2``.

    Stops when an accepted step changes the cost by less than ``ftol``
    (relative), when the damping saturates (no descent direction left), or
    after ``max_iter`` iterations. Hitting the cap raises
    :class:`ConvergenceError` with the best iterate attached unless
    ``raise_on_cap`` is false.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = fun(x)
    cost = 0.5 * float(r @ r)
    lam = lam0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = jac(x) if jac is not None else numeric_jacobian(fun, x, r)
        g = J.T @ r
        A = J.T @ J
        if not np.all(np.isfinite(A)):
            break
        if np.max(np.abs(g)) <= 1e-15 * max(1.0, cost) or cost <= 1e-32:
            converged = True
            break
        diag = np.diag(A).copy()
        diag[diag <= 0] = 1.0
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + step
            r_new = fun(x_new)
            cost_new = 0.5 * float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # damping saturated: x is a (numerically) stationary point
            converged = True
            break
        rel = (cost - cost_new) / max(cost, 1e-300)
        x, r, cost = x_new, r_new, cost_new
        lam = max(lam / 10.0, 1e-12)
        if rel < ftol:
            converged = True
            break
    result = LMResult(x=x, cost=cost, residuals=r, iterations=it, converged=converged)
    if not converged and raise_on_cap:
        raise ConvergenceError(
            f"Levenberg-Marquardt did not converge in {max_iter} iterations",
            best=result,
            residual=float(np.sqrt(2 * cost / max(r.size, 1))),
        )
    return result
