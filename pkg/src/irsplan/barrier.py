"""Log-barrier Newton method for the relaxed tile problem.

Problem form (x are log tile counts)::

    minimize    sum_i c_i exp(x_i)
    subject to  LSE_k(b_k - a_k . x) + log_gamma0 <= 0      for each constraint
                lo_i <= x_i <= hi_i

Every constraint is convex and non-increasing in each x_i (a_k >= 0), so the
problem is feasible iff it is feasible at x = hi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, *, iterations: int, gap: float, residual: float):
        super().__init__(f"{message} (newton steps={iterations}, gap={gap:.3g}, residual={residual:.3g})")
        self.iterations = iterations
        self.gap = gap
        self.residual = residual


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-9  # stop once (number of inequalities) / t falls below this
    max_newton_iters: int = 200
    barrier_factor: float = 10.0


@dataclass
class LseConstraint:
    """``LSE(log_coeffs - exponents @ x) + offset <= 0``."""

    log_coeffs: np.ndarray  # (K,)
    exponents: np.ndarray  # (K, n), non-negative
    offset: float = 0.0

    def _weights(self, x):
        z = self.log_coeffs - self.exponents @ x
        top = z.max()
        e = np.exp(z - top)
        s = e.sum()
        return top + math.log(s), e / s

    def value(self, x) -> float:
        return self._weights(x)[0] + self.offset

    def grad(self, x) -> np.ndarray:
        _, p = self._weights(x)
        return -(p @ self.exponents)

    def hess(self, x) -> np.ndarray:
        _, p = self._weights(x)
        mean = p @ self.exponents
        return (self.exponents.T * p) @ self.exponents - np.outer(mean, mean)


class _Stacked:
    """All constraints' terms in one matrix so the barrier pieces are a few reductions."""

    def __init__(self, constraints: list[LseConstraint], n: int):
        self.count = len(constraints)
        if self.count == 0:
            return
        sizes = [len(g.log_coeffs) for g in constraints]
        if min(sizes) == 0:
            raise ValueError("every constraint needs at least one term")
        self.starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.group = np.repeat(np.arange(self.count), sizes)
        self.b = np.concatenate([g.log_coeffs for g in constraints])
        self.A = np.vstack([np.asarray(g.exponents, dtype=float).reshape(-1, n) for g in constraints])
        self.offset = np.array([g.offset for g in constraints])

    def _terms(self, x):
        z = self.b - self.A @ x
        top = np.maximum.reduceat(z, self.starts)
        e = np.exp(z - top[self.group])
        s = np.add.reduceat(e, self.starts)
        return top + np.log(s) + self.offset, e / s[self.group]

    def values(self, x) -> np.ndarray:
        if self.count == 0:
            return np.zeros(0)
        return self._terms(x)[0]

    def barrier_grad_hess(self, x):
        """Gradient and Hessian of ``-sum log(-g_i(x))``."""
        n = x.size
        if self.count == 0:
            return np.zeros(n), np.zeros((n, n))
        v, p = self._terms(x)
        mean = np.add.reduceat(p[:, None] * self.A, self.starts)  # minus each constraint gradient
        inv = -1.0 / v
        grad = -(mean.T @ inv)
        H = (self.A.T * (p * inv[self.group])) @ self.A + (mean.T * (1.0 / v ** 2 - inv)) @ mean
        return grad, H


@dataclass
class BarrierResult:
    x: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    gap: float
    objective_trace: list[float] = field(default_factory=list)


def _objective(c, x):
    return float(c @ np.exp(x))


def kkt_residual(c, constraints, lo, hi, x, active_tol: float = 1e-6) -> float:
    """Stationarity residual of the Lagrangian at ``x`` (max-norm).

    Multipliers are the best non-negative ones for the constraints and bounds within
    ``active_tol`` of being tight; barrier-implied multipliers 1/(t*slack) are too
    sensitive to rounding in the tiny slacks to certify stationarity.
    """
    grad_f = c * np.exp(x)
    n = x.size
    if n == 0:
        return 0.0
    cols = [g.grad(x) for g in constraints if -g.value(x) <= active_tol]
    cols += [-np.eye(n)[i] for i in range(n) if x[i] - lo[i] <= active_tol]
    cols += [np.eye(n)[i] for i in range(n) if hi[i] - x[i] <= active_tol]
    if not cols:
        return float(np.max(np.abs(grad_f)))
    # grad_f + G @ lam = 0 with lam >= 0
    G = np.column_stack(cols)
    lam, _ = nnls(G, -grad_f)
    return float(np.max(np.abs(grad_f + G @ lam)))


def solve_barrier(c: np.ndarray, constraints: list[LseConstraint], lo: np.ndarray, hi: np.ndarray,
                  options: SolverOptions = SolverOptions()) -> BarrierResult | None:
    """Minimize the separable exponential cost; ``None`` if infeasible.

    Variables must satisfy ``lo < hi`` strictly; pin degenerate ones before calling.
    """
    n = c.size
    if n == 0:
        if any(g.value(np.zeros(0)) > 0 for g in constraints):
            return None
        return BarrierResult(np.zeros(0), 0.0, 0.0, 0, 0.0, [0.0])
    if np.any(hi - lo <= 0):
        raise ValueError("every free variable needs a non-empty interval")
    stack = _Stacked(constraints, n)
    if np.any(stack.values(hi) > 0):
        return None

    # strictly feasible start just inside the upper corner
    eps = 1e-3
    x = hi - eps * (hi - lo)
    while np.any(stack.values(x) >= 0):
        eps *= 0.5
        if eps < 1e-14:
            # feasible set is (numerically) the corner itself
            return BarrierResult(hi.copy(), _objective(c, hi), math.nan, 0, 0.0, [_objective(c, hi)])
        x = hi - eps * (hi - lo)

    m = len(constraints) + 2 * n
    t = m / max(_objective(c, x), 1e-12)

    def phi(x, t):
        vals = stack.values(x)
        if np.any(vals >= 0) or np.any(x <= lo) or np.any(x >= hi):
            return math.inf
        return (t * _objective(c, x) - float(np.sum(np.log(-vals)))
                - float(np.sum(np.log(x - lo)) + np.sum(np.log(hi - x))))

    def grad_hess(x, t):
        ex = c * np.exp(x)
        gr, H = stack.barrier_grad_hess(x)
        dl, dh = x - lo, hi - x
        gr = gr + t * ex - 1.0 / dl + 1.0 / dh
        H = H + np.diag(t * ex + 1.0 / dl ** 2 + 1.0 / dh ** 2)
        return gr, H

    steps = 0
    trace = []
    while True:
        # centering
        best_dec2, stalled = math.inf, 0
        while True:
            gr, H = grad_hess(x, t)
            try:
                dx = -np.linalg.solve(H, gr)
            except np.linalg.LinAlgError:
                dx = -np.linalg.lstsq(H, gr, rcond=None)[0]
            dec2 = float(-gr @ dx)
            if dec2 / 2.0 <= 1e-10:
                break
            if dec2 < best_dec2:
                best_dec2, stalled = dec2, 0
            else:
                stalled += 1
            if dec2 < 1e-2 and stalled >= 3:
                break  # decrement stuck at the rounding floor of the slacks near a bound
            if steps >= options.max_newton_iters:
                raise ConvergenceError("barrier method hit its Newton-step cap", iterations=steps,
                                       gap=m / t, residual=kkt_residual(c, constraints, lo, hi, x))
            steps += 1
            cand = x + dx
            if dec2 < 0.0625 and math.isfinite(phi(cand, t)):
                # quadratic-convergence region: full step, no line search, since at large t
                # the decrease would be below the rounding error of phi
                x = cand
                continue
            f0 = phi(x, t)
            s = 1.0
            while True:
                cand = x + s * dx
                fc = phi(cand, t)
                if fc <= f0 - 0.25 * s * dec2:
                    break
                s *= 0.5
                if s < 1e-12:
                    break
            if s < 1e-12:
                break  # no representable progress left at this t
            x = cand
        trace.append(_objective(c, x))
        if m / t <= options.tolerance:
            break
        t *= options.barrier_factor

    return BarrierResult(x, _objective(c, x), kkt_residual(c, constraints, lo, hi, x), steps, m / t, trace)
