"""Stochastic theta stepping with Newton-solved implicit stage.

One step of the scheme with parameter theta in (1/2, 1] and stepsize dt:

    X_{j+1} = X_j + theta*dt*(-A X_{j+1} + f(t_{j+1}, X_{j+1}))
                  + (1-theta)*dt*(-A X_j + f(t_j, X_j))
                  + g(t_j, X_j) dW_j

The implicit stage is solved by damped Newton iteration; dissipativity
(L_f < lambda) makes the stage map strongly monotone, so the root is unique.

All stepping routines are batched: states have shape (batch, d) and every
path in the batch evolves independently (elementwise masking in the Newton
loop), so results per path do not depend on how paths are grouped into
batches.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .models import SdeProblem
from .noise import ShiftedView, WienerGrid

__all__ = [
    "ThetaScheme",
    "PathSolution",
    "NewtonError",
    "implicit_step",
    "step",
    "simulate_path",
    "simulate_ensemble",
    "exact_linear_step",
    "write_path_csv",
]


class NewtonError(RuntimeError):
    """Implicit stage failed to converge or produced non-finite values."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class ThetaScheme:
    """Integrator parameters: theta in (1/2, 1], stepsize dt in (0, 1)."""

    theta: float
    dt: float
    newton_tol: float = 1e-5
    newton_max_iter: int = 50

    def __post_init__(self):
        if not 0.5 < self.theta <= 1.0:
            raise ValueError(f"theta must be in (1/2, 1], got {self.theta}")
        if not 0.0 < self.dt < 1.0:
            raise ValueError(f"dt must be in (0, 1), got {self.dt}")
        if self.newton_tol <= 0.0 or self.newton_max_iter < 1:
            raise ValueError("invalid Newton settings")


@dataclass
class PathSolution:
    """One trajectory from a pull-back start time on an equidistant grid."""

    start_time: float
    times: np.ndarray
    states: np.ndarray  # (n_times, d)
    scheme: ThetaScheme
    newton_stats: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def _reduce_time(t: float, period: float) -> float:
    """Map t to [0, period) exactly periodically; avoids precision loss at large |t|."""
    r = math.fmod(t, period)
    if r < 0.0:
        r += period
    return r


def _newton_solve(problem, scheme, t_next, rhs, guess):
    """Batched damped Newton for y + theta*dt*(A y - f(t_next, y)) = rhs.

    rhs/guess shape (batch, d). Returns (y, iteration counts). Paths are
    frozen individually the moment their residual norm drops below tol.
    """
    theta_dt = scheme.theta * scheme.dt
    a = problem.linear_matrix
    d = problem.state_dim
    tf = _reduce_time(t_next, problem.period)
    eye = np.eye(d)

    def residual(y, r):
        return y + theta_dt * (y @ a.T - problem.drift(tf, y)) - r

    y = np.array(guess, dtype=float)
    f_val = residual(y, rhs)
    nrm = np.linalg.norm(f_val, axis=-1)
    iters = np.zeros(y.shape[0], dtype=np.int64)
    tol = scheme.newton_tol

    for _ in range(scheme.newton_max_iter):
        active = nrm > tol
        if not active.any():
            break
        ya = y[active]
        ra = rhs[active]
        jac = eye + theta_dt * (a - problem.drift_jacobian(tf, ya))
        if d == 1:
            dy = -f_val[active] / jac[..., 0]
        else:
            dy = np.linalg.solve(jac, -f_val[active])
        # damped update: halve the step for paths not reducing the residual
        alpha = np.ones(ya.shape[0])
        base_nrm = nrm[active]
        trial = ya + dy
        ft = residual(trial, ra)
        nt = np.linalg.norm(ft, axis=-1)
        for _ in range(30):
            worse = nt >= base_nrm
            if not worse.any():
                break
            alpha[worse] *= 0.5
            trial[worse] = ya[worse] + alpha[worse, None] * dy[worse]
            ft[worse] = residual(trial[worse], ra[worse])
            nt[worse] = np.linalg.norm(ft[worse], axis=-1)
        y[active] = trial
        f_val[active] = ft
        nrm[active] = nt
        iters[active] += 1
        if not np.isfinite(nrm[active]).all():
            raise NewtonError("non-finite state in Newton iteration", float(np.nanmax(nrm)))

    if (nrm > tol).any():
        worst = float(nrm.max())
        raise NewtonError(
            f"Newton failed to reach tolerance {tol} in {scheme.newton_max_iter} "
            f"iterations (worst residual {worst:g})",
            worst,
        )
    return y, iters


def implicit_step(
    problem: SdeProblem,
    scheme: ThetaScheme,
    t_next: float,
    rhs: np.ndarray,
    guess: np.ndarray,
) -> np.ndarray:
    """Solve the implicit stage y - theta*dt*(-A y + f(t_next, y)) = rhs."""
    rhs = np.asarray(rhs, dtype=float)
    if not np.isfinite(rhs).all():
        raise NewtonError("non-finite right-hand side")
    squeeze = rhs.ndim == 1
    rhs2 = rhs[None, :] if squeeze else rhs
    guess2 = np.asarray(guess, dtype=float)
    guess2 = guess2[None, :] if squeeze else guess2
    y, _ = _newton_solve(problem, scheme, t_next, rhs2, guess2)
    return y[0] if squeeze else y


def _assemble_rhs(problem, scheme, t_j, x, dw):
    """Explicit part of the step: x + (1-theta)*dt*(-A x + f) + g dW, batched."""
    t = _reduce_time(t_j, problem.period)
    a = problem.linear_matrix
    expl = x + (1.0 - scheme.theta) * scheme.dt * (problem.drift(t, x) - x @ a.T)
    gx = problem.diffusion(t, x)
    return expl + np.einsum("...ij,...j->...i", gx, dw)


def step(
    problem: SdeProblem,
    scheme: ThetaScheme,
    t_j: float,
    x_j: np.ndarray,
    dw: np.ndarray,
) -> np.ndarray:
    """One full theta step from (t_j, x_j) with Brownian increment dw."""
    x_j = np.asarray(x_j, dtype=float)
    dw = np.asarray(dw, dtype=float)
    if not np.isfinite(x_j).all():
        raise NewtonError("non-finite state")
    squeeze = x_j.ndim == 1
    x2 = x_j[None, :] if squeeze else x_j
    dw2 = dw[None, :] if squeeze else dw
    rhs = _assemble_rhs(problem, scheme, t_j, x2, dw2)
    y, _ = _newton_solve(problem, scheme, t_j + scheme.dt, rhs, x2)
    return y[0] if squeeze else y


def _check_grid_aligned(value, dt, name):
    q = round(value / dt)
    if abs(q * dt - value) > 1e-9 * max(1.0, abs(value)):
        raise ValueError(f"{name} {value} is not aligned to stepsize {dt}")
    return q


def simulate_ensemble(
    problem: SdeProblem,
    scheme: ThetaScheme,
    t_start: float,
    n_steps: int,
    x0: np.ndarray,
    increments: np.ndarray,
    record: bool = True,
):
    """Drive a batch of paths through n_steps theta steps.

    x0: (batch, d) initial states; increments: (batch, n_steps, m) Brownian
    increments (a (1, n_steps, m) array broadcasts one noise path to all
    batch members). Returns (times, states, newton_iters) where states is
    (batch, n_steps+1, d) if record else the final (batch, d), and
    newton_iters is the per-step maximum iteration count.
    """
    x = np.array(x0, dtype=float)
    batch = x.shape[0]
    if increments.shape[1] != n_steps:
        raise ValueError("increments do not cover the requested number of steps")
    times = t_start + scheme.dt * np.arange(n_steps + 1)
    iters = np.zeros(n_steps, dtype=np.int64)
    if record:
        out = np.empty((batch, n_steps + 1, problem.state_dim))
        out[:, 0] = x
    for j in range(n_steps):
        t_j = t_start + j * scheme.dt
        dw = np.broadcast_to(increments[:, j], (batch, problem.noise_dim))
        rhs = _assemble_rhs(problem, scheme, t_j, x, dw)
        x, it = _newton_solve(problem, scheme, t_j + scheme.dt, rhs, x)
        if not np.isfinite(x).all():
            raise NewtonError(f"non-finite state after step at t={t_j}")
        iters[j] = it.max()
        if record:
            out[:, j + 1] = x
    return times, (out if record else x), iters


def simulate_path(
    problem: SdeProblem,
    scheme: ThetaScheme,
    k: int,
    horizon: float,
    xi: np.ndarray,
    noise: WienerGrid | ShiftedView,
) -> PathSolution:
    """Iterate the scheme from the pull-back start -k*tau up to the horizon."""
    start = -k * problem.period
    _check_grid_aligned(problem.period, scheme.dt, "period")
    _check_grid_aligned(start, scheme.dt, "start time")
    n_steps = _check_grid_aligned(horizon - start, scheme.dt, "horizon-start")
    if n_steps < 0:
        raise ValueError("horizon precedes start time")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if n_steps == 0:
        return PathSolution(
            start_time=start,
            times=np.array([start]),
            states=xi[None, :].copy(),
            scheme=scheme,
            newton_stats=np.zeros(0, dtype=np.int64),
        )
    incs = noise.step_increments(start, n_steps, scheme.dt)[None, :, :]
    times, states, iters = simulate_ensemble(
        problem, scheme, start, n_steps, xi[None, :], incs, record=True
    )
    return PathSolution(
        start_time=start,
        times=times,
        states=states[0],
        scheme=scheme,
        newton_stats=iters,
    )


def exact_linear_step(
    lam: float, sigma: float, scheme: ThetaScheme, x: float, dw: float
) -> float:
    """Closed-form theta step for dX = -lam X dt + sigma dW; validates Newton."""
    return (x * (1.0 - (1.0 - scheme.theta) * lam * scheme.dt) + sigma * dw) / (
        1.0 + scheme.theta * lam * scheme.dt
    )


def write_path_csv(path_solution: PathSolution, file) -> None:
    """CSV export: columns t, x_1..x_d, newton_iters."""
    d = path_solution.states.shape[1]
    close = False
    if isinstance(file, (str, bytes)) or hasattr(file, "__fspath__"):
        file = open(file, "w", newline="")
        close = True
    try:
        w = csv.writer(file)
        w.writerow(["t"] + [f"x_{i + 1}" for i in range(d)] + ["newton_iters"])
        stats = path_solution.newton_stats
        for j, (t, x) in enumerate(zip(path_solution.times, path_solution.states)):
            it = int(stats[j - 1]) if 1 <= j <= len(stats) else 0
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in x] + [it])
    finally:
        if close:
            file.close()
