"""Benchmark boundary value problems, reference solutions and cost evaluation.

All problems arrive with the control already eliminated, i.e. as the coupled
state/adjoint system

    y' = g(y, p),  y(t0) = y0,
    p' = phi(y, p), p(T) = r(y(T)).

Callbacks take arrays of shape ``(m,)`` or ``(m, k)`` and vectorize over the
trailing axis; Jacobians return ``(m, m)`` resp. ``(m, m, k)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.integrate import simpson, solve_bvp
from scipy.optimize import root

Array = np.ndarray
Field = Callable[[Array, Array], Array]


def _jac(shape_like: Array, m: int) -> Array:
    return np.zeros((m, m) + np.shape(shape_like)[1:])


@dataclass(frozen=True)
class BvpProblem:
    """Two-point boundary value problem of an optimal control problem."""

    name: str
    m: int
    g: Field
    phi: Field
    y0: Array
    terminal_adjoint: Callable[[Array], Array]
    t0: float
    T: float
    g_y: Field | None = None
    g_p: Field | None = None
    phi_y: Field | None = None
    phi_p: Field | None = None
    terminal_adjoint_y: Callable[[Array], Array] | None = None
    exact: Callable[[Array], tuple[Array, Array]] | None = None
    # cost = terminal_cost(y(T)) + int running_cost(y, p) dt
    terminal_cost: Callable[[Array], float] | None = None
    running_cost: Callable[[Array, Array], Array] | None = None
    # rough state path t -> (m, len(t)) used only to seed the shooting oracle
    state_guess: Callable[[Array], Array] | None = None
    linear: bool = False
    # phi(y, 0) == 0, i.e. no running-cost gradient in the adjoint equation
    homogeneous_adjoint: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        y0 = np.asarray(self.y0, dtype=float)
        if y0.shape != (self.m,):
            raise ValueError(f"y0 must have shape ({self.m},), got {y0.shape}")
        if not self.T > self.t0:
            raise ValueError("need T > t0")
        object.__setattr__(self, "y0", y0)

    @property
    def has_jacobians(self) -> bool:
        return None not in (self.g_y, self.g_p, self.phi_y, self.phi_p, self.terminal_adjoint_y)

    def rhs(self, x: Array) -> Array:
        """Right-hand side of the coupled system in ``x = (y, p)``."""
        y, p = x[: self.m], x[self.m:]
        return np.concatenate([self.g(y, p), self.phi(y, p)])


# ---------------------------------------------------------------------------
# benchmark problems


def rayleigh() -> BvpProblem:
    """Tunnel-diode (Rayleigh) oscillator on ``[0, 2.5]``.

    The control enters as ``4u`` and the running cost is ``u^2 + y1^2``, so
    ``dH/du = 2u + 4 p2 = 0`` gives ``u = -2 p2``; this is the ``-8 p2``
    coupling in ``g``.
    """

    def g(y, p):
        return np.stack([y[1], -y[0] + y[1] * (1.4 - 0.14 * y[1] ** 2) - 8.0 * p[1]])

    def phi(y, p):
        return np.stack([p[1] - 2.0 * y[0], -p[0] - (1.4 - 0.42 * y[1] ** 2) * p[1]])

    def g_y(y, p):
        J = _jac(y, 2)
        J[0, 1] = 1.0
        J[1, 0] = -1.0
        J[1, 1] = 1.4 - 0.42 * y[1] ** 2
        return J

    def g_p(y, p):
        J = _jac(y, 2)
        J[1, 1] = -8.0
        return J

    def phi_y(y, p):
        J = _jac(y, 2)
        J[0, 0] = -2.0
        J[1, 1] = 0.84 * y[1] * p[1]
        return J

    def phi_p(y, p):
        J = _jac(y, 2)
        J[0, 1] = 1.0
        J[1, 0] = -1.0
        J[1, 1] = -(1.4 - 0.42 * y[1] ** 2)
        return J

    return BvpProblem(
        name="rayleigh", m=2, g=g, phi=phi, y0=np.array([-5.0, -5.0]),
        terminal_adjoint=lambda y: np.zeros_like(y), t0=0.0, T=2.5,
        g_y=g_y, g_p=g_p, phi_y=phi_y, phi_p=phi_p,
        terminal_adjoint_y=lambda y: np.zeros((2, 2)),
        terminal_cost=lambda y: 0.0,
        running_cost=lambda y, p: (2.0 * p[1]) ** 2 + y[0] ** 2,
    )


def controlled_motion(nu: float = 1.0, alpha: float = 10.0, y_f=(1.0, 0.0)) -> BvpProblem:
    """Damped particle steered through a double-well potential on ``[0, 6]``."""
    y_f = np.asarray(y_f, dtype=float)

    def g(y, p):
        return np.stack([y[1], y[0] - y[0] ** 3 - nu * y[1] - p[1]])

    def phi(y, p):
        return np.stack([(3.0 * y[0] ** 2 - 1.0) * p[1], -p[0] + nu * p[1]])

    def g_y(y, p):
        J = _jac(y, 2)
        J[0, 1] = 1.0
        J[1, 0] = 1.0 - 3.0 * y[0] ** 2
        J[1, 1] = -nu
        return J

    def g_p(y, p):
        J = _jac(y, 2)
        J[1, 1] = -1.0
        return J

    def phi_y(y, p):
        J = _jac(y, 2)
        J[0, 0] = 6.0 * y[0] * p[1]
        return J

    def phi_p(y, p):
        J = _jac(y, 2)
        J[0, 1] = 3.0 * y[0] ** 2 - 1.0
        J[1, 0] = -1.0
        J[1, 1] = nu
        return J

    def r(y):
        return alpha * (y - (y_f if y.ndim == 1 else y_f[:, None]))

    return BvpProblem(
        name="motion", m=2, g=g, phi=phi, y0=np.array([-1.0, 0.0]),
        terminal_adjoint=r, t0=0.0, T=6.0,
        g_y=g_y, g_p=g_p, phi_y=phi_y, phi_p=phi_p,
        terminal_adjoint_y=lambda y: alpha * np.eye(2),
        terminal_cost=lambda y: 0.5 * alpha * float(np.sum((y - y_f) ** 2)),
        running_cost=lambda y, p: 0.5 * p[1] ** 2,
        state_guess=lambda t: np.stack([-1.0 + (y_f[0] + 1.0) * t / 6.0,
                                        np.full_like(t, (y_f[0] + 1.0) / 6.0)]),
        homogeneous_adjoint=True,
        params={"nu": nu, "alpha": alpha, "y_f": y_f.tolist()},
    )


def wave(kappa: float = 16.0) -> BvpProblem:
    """Linear oscillator with frequency ``omega = 2 pi kappa`` and exact solution.

    The exact adjoint is ``p = (cos(omega t), -sin(omega t) / omega)``; the
    minus sign is forced by ``p1' = omega^2 p2`` together with ``p1 = cos``.
    """
    om = 2.0 * math.pi * kappa
    om2 = om * om

    def g(y, p):
        return np.stack([y[1], -om2 * y[0] - p[1]])

    def phi(y, p):
        return np.stack([om2 * p[1], -p[0]])

    def g_y(y, p):
        J = _jac(y, 2)
        J[0, 1] = 1.0
        J[1, 0] = -om2
        return J

    def g_p(y, p):
        J = _jac(y, 2)
        J[1, 1] = -1.0
        return J

    def phi_p(y, p):
        J = _jac(y, 2)
        J[0, 1] = om2
        J[1, 0] = -1.0
        return J

    def exact(t):
        t = np.asarray(t, dtype=float)
        s, c = np.sin(om * t), np.cos(om * t)
        y = np.stack([s / (2 * om ** 3) - t * c / (2 * om2), t * s / (2 * om)])
        p = np.stack([c, -s / om])
        return y, p

    return BvpProblem(
        name="wave", m=2, g=g, phi=phi, y0=np.zeros(2),
        terminal_adjoint=lambda y: np.broadcast_to(
            np.array([1.0, 0.0]).reshape((2,) + (1,) * (np.ndim(y) - 1)), np.shape(y)).copy(),
        t0=0.0, T=1.0,
        g_y=g_y, g_p=g_p, phi_y=lambda y, p: _jac(y, 2), phi_p=phi_p,
        terminal_adjoint_y=lambda y: np.zeros((2, 2)),
        exact=exact,
        terminal_cost=lambda y: float(y[0]),
        running_cost=lambda y, p: 0.5 * p[1] ** 2,
        linear=True,
        homogeneous_adjoint=True,
        params={"kappa": kappa},
    )


PROBLEMS = {"rayleigh": rayleigh, "motion": controlled_motion, "wave": wave}


def get_problem(name: str) -> BvpProblem:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None


# ---------------------------------------------------------------------------
# reference trajectories


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Values of ``y`` and ``p`` on the grid ``t_n = t0 + n h``, ``n = 0..N+1``.

    Error measures use ``y`` at ``t_1..t_{N+1}`` (:attr:`y_out`) and ``p`` at
    ``t_0..t_N`` (:attr:`p_out`); the remaining end values are kept so that
    cost functionals can be integrated over the full horizon.
    """

    t: Array        # (N+2,)
    y: Array        # (N+2, m)
    p: Array        # (N+2, m)
    provenance: str  # "exact" | "shooting-RK4" | "peer"

    @property
    def steps(self) -> int:
        return len(self.t) - 1

    @property
    def y_out(self) -> Array:
        return self.y[1:]

    @property
    def p_out(self) -> Array:
        return self.p[:-1]

    def write_csv(self, path: str | Path) -> None:
        """Same schema as a solution dump with a single stage ``j = 0``."""
        m = self.y.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "j", "t_nj", *(f"y{k+1}" for k in range(m)),
                        *(f"p{k+1}" for k in range(m))])
            for n, (tn, yn, pn) in enumerate(zip(self.t, self.y, self.p)):
                w.writerow([n, 0, repr(float(tn)), *map(repr, map(float, yn)),
                            *map(repr, map(float, pn))])


def exact_reference(prob: BvpProblem, steps: int) -> ReferenceTrajectory:
    """Sample the exact solution on the grid with ``steps`` = N+1 intervals."""
    if prob.exact is None:
        raise ValueError(f"problem {prob.name!r} has no exact solution")
    t = np.linspace(prob.t0, prob.T, steps + 1)
    y, p = prob.exact(t)
    return ReferenceTrajectory(t, y.T.copy(), p.T.copy(), "exact")


def _rk4(f: Callable[[Array], Array], x0: Array, t0: float, t1: float, n: int) -> Array:
    """Classical RK4 for the autonomous ``x' = f(x)``; returns all ``n+1`` states.

    ``x0`` may carry a trailing batch axis, which is integrated in parallel.
    """
    h = (t1 - t0) / n
    out = np.empty((n + 1,) + np.shape(x0))
    x = out[0] = x0
    for i in range(n):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = out[i + 1] = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return out


def _rk4_path(prob: BvpProblem, x0: Array, t0: float, t1: float, n: int) -> Array:
    return _rk4(prob.rhs, x0, t0, t1, n)


class ShootingError(RuntimeError):
    pass


def _single_shooting(prob, n, xi0, tol, max_iter):
    m = prob.m
    xi = np.array(xi0, dtype=float)
    y0 = prob.y0

    def terminal_residual(xis):  # xis: (m, k)
        x0 = np.concatenate([np.repeat(y0[:, None], xis.shape[1], 1), xis])
        xT = _rk4_path(prob, x0, prob.t0, prob.T, n)[-1]
        return xT[m:] - prob.terminal_adjoint(xT[:m])

    def norm(r):
        return float(np.max(np.abs(r))) if np.all(np.isfinite(r)) else np.inf

    for _ in range(max_iter):
        d = np.sqrt(np.finfo(float).eps) * (1.0 + np.abs(xi))
        cols = np.concatenate([xi[:, None], xi[:, None] + np.diag(d), xi[:, None] - np.diag(d)], 1)
        with np.errstate(all="ignore"):
            F = terminal_residual(cols)
        res = F[:, 0]
        fnorm = norm(res)
        if fnorm <= tol:
            return xi, fnorm
        if not np.all(np.isfinite(F)):
            break
        J = (F[:, 1:m + 1] - F[:, m + 1:]) / (2.0 * d)
        try:
            step = np.linalg.solve(J, res)
        except np.linalg.LinAlgError:
            break
        # damped update; non-finite trial trajectories count as rejections
        lam = 1.0
        for _ in range(12):
            with np.errstate(all="ignore"):
                trial = norm(terminal_residual((xi - lam * step)[:, None])[:, 0])
            if trial < (1.0 - 1e-4 * lam) * fnorm:
                break
            lam *= 0.5
        else:
            break
        xi = xi - lam * step
    raise ShootingError("single shooting did not converge")


def _multiple_shooting(prob, n, guess, tol, segments=4):
    """Continuity-matched shooting on ``segments`` equal pieces.

    ``guess(t)`` returns an approximate ``(y, p)`` state at time ``t``.
    """
    m = prob.m
    cuts = [round(k * n / segments) for k in range(segments + 1)]
    h = (prob.T - prob.t0) / n
    # unknowns: xi (m) and full states (2m) at interior cuts
    z0 = np.concatenate([guess(prob.t0)[m:], *(guess(prob.t0 + c * h) for c in cuts[1:-1])])

    def starts(z):
        return [np.concatenate([prob.y0, z[:m]])] + \
            [z[m + 2 * m * k: m + 2 * m * (k + 1)] for k in range(segments - 1)]

    def F(z):
        xs = starts(z)
        out = []
        for k in range(segments):
            a, b = cuts[k], cuts[k + 1]
            xe = _rk4_path(prob, xs[k], prob.t0 + a * h, prob.t0 + b * h, b - a)[-1]
            if k + 1 < segments:
                out.append(xe - xs[k + 1])
            else:
                out.append(xe[m:] - prob.terminal_adjoint(xe[:m]))
        return np.concatenate(out)

    with np.errstate(all="ignore"):
        sol = root(F, z0, method="hybr", options={"xtol": 1e-14})
        res = float(np.max(np.abs(F(sol.x))))
    if not np.isfinite(res) or res > max(tol, 1e-9):
        raise ShootingError(f"multiple shooting failed (residual {res:.3g})")
    xs = starts(sol.x)
    path = [xs[0][None]]
    for k in range(segments):
        a, b = cuts[k], cuts[k + 1]
        path.append(_rk4_path(prob, xs[k], prob.t0 + a * h, prob.t0 + b * h, b - a)[1:])
    return np.concatenate(path), res


def _collocation_guess(prob: BvpProblem, nodes: int = 41) -> Callable[[float], Array]:
    m = prob.m
    t = np.linspace(prob.t0, prob.T, nodes)
    x = np.zeros((2 * m, nodes))
    x[:m] = prob.y0[:, None] if prob.state_guess is None else prob.state_guess(t)

    def bc(xa, xb):
        return np.concatenate([xa[:m] - prob.y0, xb[m:] - prob.terminal_adjoint(xb[:m])])

    sol = solve_bvp(lambda _, x: prob.rhs(x), bc, t, x, tol=1e-6, max_nodes=20000)
    if not sol.success:
        raise ShootingError(f"no start value for shooting: {sol.message}")
    return sol.sol


def shooting_reference(prob: BvpProblem, n_steps: int = 1280, grid_steps: int | None = None,
                       tol: float = 1e-11, max_iter: int = 20,
                       xi0: Array | None = None) -> ReferenceTrajectory:
    """RK4 shooting oracle for the boundary value problem.

    Newton (central-difference Jacobian) on the unknown initial adjoint
    ``xi = p(t0)``, started from ``xi0`` or by default from a coarse
    collocation solution (scipy ``solve_bvp``); if Newton fails, 4-segment
    multiple shooting takes over.  The
    output grid has ``grid_steps`` intervals (default: the RK4 grid).  To
    keep the output on RK4 nodes, ``n_steps`` is rounded up to a multiple of
    ``grid_steps``.
    """
    if n_steps < 64:
        raise ValueError("n_steps must be >= 64")
    grid_steps = n_steps if grid_steps is None else int(grid_steps)
    if grid_steps < 1:
        raise ValueError("grid_steps must be >= 1")
    n = grid_steps * math.ceil(n_steps / grid_steps)
    # forward integration of the adjoint is unstable for a poor xi, so the
    # default start value comes from a low-accuracy collocation solve
    try:
        guess = _collocation_guess(prob)
    except ShootingError:
        y0, r0 = prob.y0, prob.terminal_adjoint(prob.y0)
        guess = lambda t: np.concatenate([y0, r0])  # noqa: E731
    xi0 = guess(prob.t0)[prob.m:] if xi0 is None else np.asarray(xi0, float)
    try:
        xi, _ = _single_shooting(prob, n, xi0, tol, max_iter)
        path = _rk4_path(prob, np.concatenate([prob.y0, xi]), prob.t0, prob.T, n)
    except ShootingError:
        path, _ = _multiple_shooting(prob, n, guess, tol)
    sel = path[:: n // grid_steps]
    t = np.linspace(prob.t0, prob.T, grid_steps + 1)
    return ReferenceTrajectory(t, sel[:, : prob.m].copy(), sel[:, prob.m:].copy(), "shooting-RK4")


# ---------------------------------------------------------------------------
# cost


def evaluate_cost(prob: BvpProblem, ref: ReferenceTrajectory) -> float:
    """Terminal cost at ``y(T)`` plus Simpson quadrature of the running cost.

    Running costs in terms of ``(y, p)`` after eliminating the control:
    motion and wave ``u = -p2`` so ``u^2/2 = p2^2/2``; Rayleigh ``u = -2 p2``
    with integrand ``u^2 + y1^2``.
    """
    if prob.running_cost is None or prob.terminal_cost is None:
        raise ValueError(f"problem {prob.name!r} defines no cost functional")
    if len(ref.t) < 3:
        raise ValueError("cost quadrature needs at least 3 samples")
    integrand = prob.running_cost(ref.y.T, ref.p.T)
    return float(prob.terminal_cost(ref.y[-1]) + simpson(integrand, x=ref.t))
