"""Coupled forward/adjoint Peer discretization and its Newton solver.

On the grid ``t_n = t0 + n h``, ``h = (T - t0)/(N+1)``, a Peer triplet
produces stage vectors ``Y_n, P_n`` (``s`` stages of dimension ``m``) for
``n = 0..N``.  The unknown vector is ``Z = (Y_0..Y_N, P_0..P_N)``, each block
stage-major then component, so ``Y[n, j, k]`` sits at ``(n*s + j)*m + k``
and the ``P`` half starts at ``(N+1)*s*m``.

Forward equations (row blocks ``F_0..F_N``)::

    A0 Y0 - a y0 - h b g(y0, v'P0) - h K0 G(Y0, P0)
    A_n Y_n - B_n Y_{n-1} - h K_n G(Y_n, P_n)

with the standard ``(A, B, K)`` for ``0 < n < N`` and ``(AN, BN, KN)`` at
``n = N``.  Adjoint equations (row blocks ``G_0..G_N``)::

    A_n' P_n - B_{n+1}' P_{n+1} + h Phi(Y_n, K_n' P_n)
    AN' P_N - w r(w'Y_N) + h Phi(Y_N, KN' P_N)

where ``Phi_i = phi(Y_ni, sum_j K_ji P_nj)`` (half-one-leg form).

``phi`` is affine in ``p``.  A ``p``-independent part ``phi(y, 0)`` (the
gradient of a running cost) belongs to the adjoint of an extra cost state
whose discrete adjoint stages are exactly ones; its half-one-leg combination
is ``K_n' 1``.  So ``Phi_i`` also carries ``((K_n' 1)_i - 1) phi(Y_ni, 0)``.
This vanishes for ``phi`` linear in ``p`` and keeps running-cost problems
consistent.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .coefficients import PeerTriplet
from .problems import BvpProblem, ReferenceTrajectory

log = logging.getLogger(__name__)

JACOBIAN_MODES = ("analytic", "fd")
DAMPING_MODES = ("armijo", "natural", "none")
INITIAL_GUESS_MODES = ("constant", "zero", "problem")


class KktSolveError(RuntimeError):
    """Newton failed; carries the last iterate for inspection."""

    def __init__(self, message: str, solution: "KktSolution | None" = None):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True)
class NewtonOptions:
    tolerance: float = 1e-12
    max_iter: int = 50
    damping: str = "armijo"
    jacobian: str = "analytic"
    initial_guess: str = "constant"
    max_halvings: int = 8
    # stop when |F|_inf <= tolerance * max(1, |Z|_inf); the scaling only
    # matters for huge (unstable, coarse-grid) solutions at round-off level
    scaled: bool = True

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.damping not in DAMPING_MODES:
            raise ValueError(f"damping must be one of {DAMPING_MODES}")
        if self.jacobian not in JACOBIAN_MODES:
            raise ValueError(f"jacobian must be one of {JACOBIAN_MODES}")
        if self.initial_guess not in INITIAL_GUESS_MODES:
            raise ValueError(f"initial_guess must be one of {INITIAL_GUESS_MODES}")


# Newton settings used by the convergence harness per benchmark: the
# constant start is far from the Rayleigh solution (natural damping copes
# much better) and in the double well it falls into the wrong basin.
PRESETS = {
    "rayleigh": NewtonOptions(damping="natural"),
    "motion": NewtonOptions(initial_guess="problem"),
    "wave": NewtonOptions(),
}


def preset_options(problem: str, **overrides) -> NewtonOptions:
    return replace(PRESETS.get(problem, NewtonOptions()), **overrides)


@dataclass
class KktSolution:
    triplet: str
    problem: str
    N: int
    h: float
    t: np.ndarray            # grid t_0..t_{N+1}
    c: np.ndarray            # nodes
    Y: np.ndarray            # (N+1, s, m)
    P: np.ndarray            # (N+1, s, m)
    yT: np.ndarray
    p0: np.ndarray
    pT: np.ndarray
    iterations: int
    residual: float
    converged: bool
    threshold: float
    history: list[float] = field(default_factory=list)

    @property
    def stage_times(self) -> np.ndarray:
        return self.t[:-1, None] + self.c[None, :] * self.h

    def z(self) -> np.ndarray:
        return np.concatenate([self.Y.ravel(), self.P.ravel()])

    def outputs(self, w: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``w'Y_n`` (approximating ``y(t_{n+1})``) and ``v'P_n`` (``p(t_n)``)."""
        return np.einsum("j,njk->nk", w, self.Y), np.einsum("j,njk->nk", v, self.P)

    def write_csv(self, path: str | Path) -> None:
        """Stage dump ``n, j, t_nj, y.., p..`` plus a trailing summary comment."""
        m = self.Y.shape[2]
        tt = self.stage_times
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["n", "j", "t_nj", *(f"y{k+1}" for k in range(m)),
                         *(f"p{k+1}" for k in range(m))])
            for n in range(self.N + 1):
                for j in range(len(self.c)):
                    wr.writerow([n, j + 1, repr(float(tt[n, j])),
                                 *map(repr, map(float, self.Y[n, j])),
                                 *map(repr, map(float, self.P[n, j]))])
            fh.write(
                "# summary yT=" + " ".join(map(repr, map(float, self.yT)))
                + " p0=" + " ".join(map(repr, map(float, self.p0)))
                + f" iterations={self.iterations} residual={self.residual!r}\n"
            )


# ---------------------------------------------------------------------------
# step matrices


@dataclass(frozen=True)
class _Steps:
    s: int
    A: np.ndarray      # (N+1, s, s): A0, A, .., A, AN
    K: np.ndarray
    B: np.ndarray      # (N+1, s, s): B_n for n = 1..N at index n; index 0 unused
    a: np.ndarray
    b: np.ndarray
    w: np.ndarray
    v: np.ndarray


def _steps(t: PeerTriplet, N: int) -> _Steps:
    if N < 1:
        raise ValueError("need N >= 1")
    f = t.floats
    s = t.s
    A = np.repeat(f.A[None], N + 1, 0)
    K = np.repeat(f.K[None], N + 1, 0)
    B = np.repeat(f.B[None], N + 1, 0)
    A[0], K[0], B[0] = f.A0, f.K0, 0.0
    A[N], K[N], B[N] = f.AN, f.KN, f.BN
    return _Steps(s, A, K, B, f.a, f.b, f.w, f.v)


def _split(Z: np.ndarray, N: int, s: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    n = (N + 1) * s * m
    if Z.shape != (2 * n,):
        raise ValueError(f"unknown vector must have length {2 * n}, got {Z.shape}")
    return Z[:n].reshape(N + 1, s, m), Z[n:].reshape(N + 1, s, m)


def _eval(fun, Y: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Apply a problem callback to all stages; ``(N+1, s, m)`` in and out."""
    shp = Y.shape
    out = np.asarray(fun(Y.reshape(-1, shp[-1]).T, Q.reshape(-1, shp[-1]).T))
    return np.moveaxis(out, -1, 0).reshape(shp[:-1] + out.shape[:-1])


def grid(prob: BvpProblem, N: int) -> tuple[np.ndarray, float]:
    h = (prob.T - prob.t0) / (N + 1)
    return prob.t0 + h * np.arange(N + 2), h


# ---------------------------------------------------------------------------
# residual and Jacobian


def assemble_residual(t: PeerTriplet, prob: BvpProblem, N: int, Z: np.ndarray) -> np.ndarray:
    """Residual of the coupled discrete system, ordered ``(F_0..F_N, G_0..G_N)``."""
    st = _steps(t, N)
    Y, P = _split(np.asarray(Z, float), N, st.s, prob.m)
    return _residual(st, prob, N, Y, P)


def _residual(st: _Steps, prob: BvpProblem, N: int, Y: np.ndarray, P: np.ndarray) -> np.ndarray:
    _, h = grid(prob, N)
    Gs = _eval(prob.g, Y, P)
    F = st.A @ Y - h * (st.K @ Gs)
    F[1:] -= st.B[1:] @ Y[:-1]
    p0 = st.v @ P[0]
    F[0] -= np.outer(st.a, prob.y0) + h * np.outer(st.b, prob.g(prob.y0, p0))

    Q = np.swapaxes(st.K, 1, 2) @ P
    G = np.swapaxes(st.A, 1, 2) @ P + h * _phi_stages(st, prob, Y, Q)
    G[:-1] -= np.swapaxes(st.B[1:], 1, 2) @ P[1:]
    G[N] -= np.outer(st.w, prob.terminal_adjoint(st.w @ Y[N]))
    return np.concatenate([F.ravel(), G.ravel()])


def _cost_weight(st: _Steps) -> np.ndarray:
    """``(K_n' 1)_i - 1`` per step and stage."""
    return st.K.sum(axis=1) - 1.0


def _phi_stages(st: _Steps, prob: BvpProblem, Y: np.ndarray, Q: np.ndarray) -> np.ndarray:
    out = _eval(prob.phi, Y, Q)
    if not prob.homogeneous_adjoint:
        out = out + _cost_weight(st)[..., None] * _eval(prob.phi, Y, np.zeros_like(Y))
    return out


def _block_coo(rows, cols, blocks, S):
    """COO triplets for dense ``S x S`` blocks at block positions ``(rows, cols)``."""
    nb = len(rows)
    ii = (np.asarray(rows)[:, None, None] * S + np.arange(S)[None, :, None])
    jj = (np.asarray(cols)[:, None, None] * S + np.arange(S)[None, None, :])
    shape = (nb, S, S)
    return (np.broadcast_to(ii, shape).ravel(), np.broadcast_to(jj, shape).ravel(),
            np.asarray(blocks).reshape(shape).ravel())


def _stage_blocks(M: np.ndarray, J: np.ndarray, by: str = "col") -> np.ndarray:
    """Blocks ``[M_ij J_j]`` (or ``[M_ij J_i]`` for ``by="row"``).

    ``M`` is ``(n, s, s)``, ``J`` is ``(n, s, m, m)``; the result is
    ``(n, s*m, s*m)``.
    """
    n, s, m = J.shape[0], J.shape[1], J.shape[2]
    Jb = J[:, None] if by == "col" else J[:, :, None]
    X = M[:, :, :, None, None] * Jb                        # (n, i, j, k, l)
    return X.transpose(0, 1, 3, 2, 4).reshape(n, s * m, s * m)


def _kron_I(M: np.ndarray, m: int) -> np.ndarray:
    n, s, _ = M.shape
    return np.einsum("nij,kl->nikjl", M, np.eye(m)).reshape(n, s * m, s * m)


def assemble_jacobian(t: PeerTriplet, prob: BvpProblem, N: int, Z: np.ndarray,
                      mode: str = "analytic") -> sp.csc_matrix:
    """Sparse Jacobian of :func:`assemble_residual`.

    ``mode="analytic"`` uses the problem's Jacobian callbacks; ``"fd"`` uses
    central differences with step ``sqrt(eps) * (1 + |z_i|)`` per unknown.
    """
    Z = np.asarray(Z, float)
    st = _steps(t, N)
    Y, P = _split(Z, N, st.s, prob.m)
    if mode == "fd":
        return _fd_jacobian(st, prob, N, Z)
    return _analytic_jacobian(st, prob, N, Y, P, mode)


def _analytic_jacobian(st, prob, N, Y, P, mode="analytic"):
    if mode != "analytic":
        raise ValueError(f"unknown Jacobian mode {mode!r}")
    if not prob.has_jacobians:
        raise ValueError(f"problem {prob.name!r} lacks analytic Jacobian callbacks")

    m, s = prob.m, st.s
    S = s * m
    nb = N + 1
    _, h = grid(prob, N)
    idx = np.arange(nb)
    KT = np.swapaxes(st.K, 1, 2)
    AT = np.swapaxes(st.A, 1, 2)
    Q = KT @ P
    gy, gp = _eval(prob.g_y, Y, P), _eval(prob.g_p, Y, P)        # (nb, s, m, m)
    fy, fp = _eval(prob.phi_y, Y, Q), _eval(prob.phi_p, Y, Q)
    if not prob.homogeneous_adjoint:
        fy = fy + _cost_weight(st)[..., None, None] * _eval(prob.phi_y, Y, np.zeros_like(Y))

    parts = []
    # forward rows
    parts.append(_block_coo(idx, idx, _kron_I(st.A, m) - h * _stage_blocks(st.K, gy), S))
    FP = -h * _stage_blocks(st.K, gp)
    p0 = st.v @ P[0]
    FP[0] -= h * np.kron(np.outer(st.b, st.v), prob.g_p(prob.y0, p0))
    parts.append(_block_coo(idx, nb + idx, FP, S))
    parts.append(_block_coo(idx[1:], idx[:-1], -_kron_I(st.B[1:], m), S))
    # adjoint rows: d/dP_nj of h phi(Y_ni, sum_l K_li P_nl) is h K_ji phi_p(Y_ni, Q_ni)
    GP = _kron_I(AT, m) + h * _stage_blocks(KT, fp, by="row")
    parts.append(_block_coo(nb + idx, nb + idx, GP, S))
    GY = h * _stage_blocks(np.broadcast_to(np.eye(s), (nb, s, s)), fy)
    GY[N] -= np.kron(np.outer(st.w, st.w), prob.terminal_adjoint_y(st.w @ Y[N]))
    parts.append(_block_coo(nb + idx, idx, GY, S))
    parts.append(_block_coo(nb + idx[:-1], nb + idx[1:], -_kron_I(np.swapaxes(st.B[1:], 1, 2), m), S))

    rows, cols, vals = (np.concatenate(x) for x in zip(*parts))
    n = 2 * nb * S
    return sp.csc_matrix((vals, (rows, cols)), shape=(n, n))


def _fd_jacobian(st: _Steps, prob: BvpProblem, N: int, Z: np.ndarray) -> sp.csc_matrix:
    s, m = st.s, prob.m
    half = (N + 1) * s * m

    def F(z):
        return _residual(st, prob, N, z[:half].reshape(N + 1, s, m), z[half:].reshape(N + 1, s, m))

    steps = np.sqrt(np.finfo(float).eps) * (1.0 + np.abs(Z))
    rows, cols, vals = [], [], []
    zp = Z.copy()
    for i in range(Z.size):
        zp[i] = Z[i] + steps[i]
        fp = F(zp)
        zp[i] = Z[i] - steps[i]
        fm = F(zp)
        zp[i] = Z[i]
        col = (fp - fm) / (2.0 * steps[i])
        nz = np.flatnonzero(col)
        rows.append(nz)
        cols.append(np.full(nz.size, i))
        vals.append(col[nz])
    n = Z.size
    return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


# ---------------------------------------------------------------------------
# Newton


def initial_guess(t: PeerTriplet, prob: BvpProblem, N: int, mode: str = "constant",
                  coarse: KktSolution | None = None) -> np.ndarray:
    """Start vector for Newton.

    ``"constant"``: ``Y = y0, P = r(y0)``; ``"zero"``: all zeros;
    ``"problem"``: ``Y`` from the problem's rough state path (falling back to
    ``y0``) and constant ``P = r(y_guess(T))``.  With ``coarse`` given, stage
    values of a solution on another grid are interpolated linearly in time
    (continuation).
    """
    s, m = t.s, prob.m
    if coarse is not None:
        tt, h = grid(prob, N)
        fine = (tt[:-1, None] + t.floats.c[None, :] * h).ravel()
        src = coarse.stage_times.ravel()
        order = np.argsort(src, kind="stable")
        Y = np.stack([np.interp(fine, src[order], coarse.Y.reshape(-1, m)[order, k])
                      for k in range(m)], -1)
        P = np.stack([np.interp(fine, src[order], coarse.P.reshape(-1, m)[order, k])
                      for k in range(m)], -1)
        return np.concatenate([Y.ravel(), P.ravel()])
    n = (N + 1) * s
    if mode == "zero":
        return np.zeros(2 * n * m)
    if mode == "constant":
        r0 = np.asarray(prob.terminal_adjoint(prob.y0), float)
        return np.concatenate([np.tile(prob.y0, n), np.tile(r0, n)])
    if mode == "problem":
        if prob.state_guess is None:
            return initial_guess(t, prob, N, "constant")
        tt, h = grid(prob, N)
        times = (tt[:-1, None] + t.floats.c[None, :] * h).ravel()
        Y = np.asarray(prob.state_guess(times)).T
        rT = np.asarray(prob.terminal_adjoint(np.asarray(prob.state_guess(np.array([prob.T])))[:, 0]))
        return np.concatenate([Y.ravel(), np.tile(rT, n)])
    raise ValueError(f"unknown initial guess mode {mode!r}")


def solve_kkt(t: PeerTriplet, prob: BvpProblem, N: int, opts: NewtonOptions | None = None,
              z0: np.ndarray | None = None, coarse: KktSolution | None = None) -> KktSolution:
    """Damped Newton on the coupled system with a sparse LU per iteration.

    Damping halves the step at most ``opts.max_halvings`` times:
    ``"armijo"`` tests sufficient decrease of the residual max-norm,
    ``"natural"`` the affine-invariant monotonicity of the simplified Newton
    correction ``|J^{-1} F(Z + lam dz)| <= (1 - lam/4) |dz|`` (reusing the
    factorization).  If no trial passes, the smallest step is taken.

    Raises :class:`KktSolveError` (with the last iterate attached) when the
    residual does not reach ``opts.tolerance``.
    """
    opts = opts or NewtonOptions()
    st = _steps(t, N)
    s, m = st.s, prob.m
    half = (N + 1) * s * m
    Z = initial_guess(t, prob, N, opts.initial_guess, coarse) if z0 is None else \
        np.array(z0, dtype=float)
    if Z.shape != (2 * half,):
        raise ValueError(f"initial guess must have length {2 * half}")

    def F(z):
        return _residual(st, prob, N, z[:half].reshape(N + 1, s, m), z[half:].reshape(N + 1, s, m))

    def norm(r):
        return float(np.max(np.abs(r))) if np.all(np.isfinite(r)) else np.inf

    with np.errstate(all="ignore"):
        R = F(Z)
    fnorm = norm(R)
    history = [fnorm]
    it = 0
    failure = None

    def threshold(z):
        if not opts.scaled:
            return opts.tolerance
        zmax = float(np.max(np.abs(z))) if np.all(np.isfinite(z)) else 1.0
        return opts.tolerance * max(1.0, zmax)

    while fnorm > threshold(Z):
        if it >= opts.max_iter:
            failure = f"no convergence in {opts.max_iter} iterations"
            break
        if not np.isfinite(fnorm):
            failure = "residual is not finite"
            break
        if opts.jacobian == "analytic":
            J = _analytic_jacobian(st, prob, N, Z[:half].reshape(N + 1, s, m),
                                   Z[half:].reshape(N + 1, s, m))
        else:
            J = _fd_jacobian(st, prob, N, Z)
        try:
            with np.errstate(all="ignore"):
                lu = splu(J)
                dz = lu.solve(-R)
        except RuntimeError as exc:  # "Factor is exactly singular"
            failure = f"singular Jacobian ({exc})"
            break
        if not np.all(np.isfinite(dz)):
            failure = "singular Jacobian (non-finite Newton step)"
            break
        lam = 1.0
        with np.errstate(all="ignore"):
            Zt = Z + dz
            Rt = F(Zt)
            dnorm = norm(dz)
            for _ in range(opts.max_halvings if opts.damping != "none" else 0):
                if opts.damping == "armijo":
                    ok = norm(Rt) <= (1.0 - 1e-4 * lam) * fnorm
                else:
                    ok = np.all(np.isfinite(Rt)) and norm(lu.solve(-Rt)) <= (1.0 - 0.25 * lam) * dnorm
                if ok:
                    break
                lam *= 0.5
                Zt = Z + lam * dz
                Rt = F(Zt)
        it += 1
        tnorm = norm(Rt)
        if tnorm >= fnorm and np.max(np.abs(lam * dz)) <= 1e-14 * (1.0 + np.max(np.abs(Z))):
            failure = f"stagnation at residual {fnorm:.3g}"
            break
        Z, R, fnorm = Zt, Rt, tnorm
        history.append(fnorm)
        log.debug("newton %d: |F| = %.3e, lambda = %g", it, fnorm, lam)

    sol = _package(t, st, prob, N, Z, it, fnorm, failure is None, history, threshold(Z))
    if failure is not None:
        raise KktSolveError(f"{t.name}/{prob.name}, N = {N}: {failure}", sol)
    return sol


def _package(t, st, prob, N, Z, it, fnorm, converged, history, thr) -> KktSolution:
    s, m = st.s, prob.m
    half = (N + 1) * s * m
    Y = Z[:half].reshape(N + 1, s, m).copy()
    P = Z[half:].reshape(N + 1, s, m).copy()
    tt, h = grid(prob, N)
    yT = st.w @ Y[N]
    return KktSolution(
        triplet=t.name, problem=prob.name, N=N, h=h, t=tt, c=t.floats.c.copy(),
        Y=Y, P=P, yT=yT, p0=st.v @ P[0], pT=np.asarray(prob.terminal_adjoint(yT), float),
        iterations=it, residual=fnorm, converged=converged, threshold=thr, history=history,
    )


# ---------------------------------------------------------------------------
# errors


def solution_trajectory(sol: KktSolution, t: PeerTriplet, prob: BvpProblem) -> ReferenceTrajectory:
    """Grid values ``y(t_0..t_{N+1})`` and ``p(t_0..t_{N+1})`` from a solve.

    ``y(t_0) = y0`` and ``p(t_{N+1}) = r(y_h(T))`` close the two ends.
    """
    f = t.floats
    yo, po = sol.outputs(f.w, f.v)
    y = np.vstack([prob.y0[None], yo])
    p = np.vstack([po, sol.pT[None]])
    return ReferenceTrajectory(sol.t.copy(), y, p, "peer")


def extract_errors(sol: KktSolution, t: PeerTriplet, ref: ReferenceTrajectory) -> tuple[float, float]:
    """Maximal state error at ``t_1..t_{N+1}`` and adjoint error at ``t_0..t_N``."""
    if ref.steps != sol.N + 1 or not np.allclose(ref.t, sol.t, rtol=0, atol=1e-12 * (1 + abs(sol.t[-1]))):
        raise ValueError(f"reference grid ({ref.steps} steps) does not match the solve (N+1 = {sol.N + 1})")
    f = t.floats
    yo, po = sol.outputs(f.w, f.v)
    return float(np.max(np.abs(yo - ref.y_out))), float(np.max(np.abs(po - ref.p_out)))
