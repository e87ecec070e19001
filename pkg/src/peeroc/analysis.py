"""Order, superconvergence, compatibility and solvability conditions.

Every condition is returned as a residual that vanishes for a valid
triplet. Residuals are computed in Fraction arithmetic whenever all
coefficients they touch are rational, so "exactly zero" is distinguishable
from round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial

import numpy as np

from . import _linalg as la
from .coefficients import PeerTriplet, nilpotent_E, pascal, vandermonde

DEFAULT_TOL = 1e-10
# theta of AP4o43sil is an 18-digit decimal root of a cubic
TRIPLET_TOL = {"AP4o43sil": 1e-8}


def default_tolerance(name: str) -> float:
    return TRIPLET_TOL.get(name, DEFAULT_TOL)


@dataclass(frozen=True)
class ConditionResidual:
    id: str
    residual: np.ndarray
    max_abs: float
    tol: float
    passed: bool
    exact: bool
    informational: bool = False

    @classmethod
    def of(cls, id: str, residual, tol: float, exact: bool, informational: bool = False):
        residual = np.asarray(residual)
        m = la.max_abs(residual)
        return cls(id, residual, m, tol, m <= tol, exact, informational)

    @property
    def exactly_zero(self) -> bool:
        return self.exact and self.max_abs == 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        if self.informational:
            flag = "info"
        kind = "exact" if self.exact else "float"
        value = "0 (exact)" if self.exactly_zero else f"{self.max_abs:.3e}"
        return f"[{flag}] {self.id:<34s} {value:>12s}  ({kind}, tol {self.tol:.0e})"


def _pick(t: PeerTriplet, *names: str) -> tuple[bool, list[np.ndarray]]:
    exact = t.rational(*names)
    return exact, [t.get(n, exact) for n in names]


def _unit(n: int, k: int, exact: bool) -> np.ndarray:
    e = la.zeros(n, exact)
    e[k] = Fraction(1) if exact else 1.0
    return e


def _pow(c: np.ndarray, k: int) -> np.ndarray:
    if c.dtype == object:
        return np.array([x**k for x in c], dtype=object)
    return c**k


# ---------------------------------------------------------------------------
# order conditions


def forward_standard_matrix(A, B, K, c, q: int) -> np.ndarray:
    """``A V_q - B V_q P_q^{-1} - K V_q E_q``."""
    exact = la.is_exact(A, B, K, c)
    V = vandermonde(c, q)
    P = pascal(q, exact)
    BVPinv = la.solve(P.T, (B @ V).T).T
    return A @ V - BVPinv - K @ V @ nilpotent_E(q, exact)


def adjoint_standard_matrix(A, Bnext, K, c, q: int) -> np.ndarray:
    """``A^T V_q - B_{n+1}^T V_q P_q + K^T V_q E_q`` (transposed-K form)."""
    exact = la.is_exact(A, Bnext, K, c)
    V = vandermonde(c, q)
    return A.T @ V - Bnext.T @ V @ pascal(q, exact) + K.T @ V @ nilpotent_E(q, exact)


def forward_order_residual(part: str, t: PeerTriplet, q1: int | None = None,
                           tol: float | None = None) -> ConditionResidual:
    """Forward local-order residual of one member of the triplet.

    ``part`` is ``start``, ``standard``, ``end`` or ``output``.
    """
    q = t.s if q1 is None else q1
    tol = default_tolerance(t.name) if tol is None else tol
    if part == "start":
        exact, (A0, K0, a, b, c) = _pick(t, "A0", "K0", "a", "b", "c")
        V = vandermonde(c, q)
        R = A0 @ V - np.outer(a, _unit(q, 0, exact)) - K0 @ V @ nilpotent_E(q, exact)
        if q > 1:
            R = R - np.outer(b, _unit(q, 1, exact))
        return ConditionResidual.of("forward-start", R, tol, exact)
    if part in ("standard", "end"):
        names = ("A", "B", "K", "c") if part == "standard" else ("AN", "BN", "KN", "c")
        exact, (A, B, K, c) = _pick(t, *names)
        R = forward_standard_matrix(A, B, K, c, q)
        return ConditionResidual.of(f"forward-{part}", R, tol, exact)
    if part == "output":
        exact, (w, c) = _pick(t, "w", "c")
        R = w @ vandermonde(c, q) - la.ones(q, exact)
        return ConditionResidual.of("forward-output", R, tol, exact)
    raise ValueError(f"unknown forward part {part!r}")


def adjoint_order_residual(part: str, t: PeerTriplet, q2: int | None = None,
                           tol: float | None = None) -> ConditionResidual:
    """Adjoint local-order residual.

    Parts: ``interp`` (v), ``start`` (n=0 against the standard B),
    ``standard``, ``last`` (n=N-1 against B_N), ``end`` (full-K form with
    ``K_N^T``) and ``end-untransposed`` (the diagonal-K form with ``K_N``,
    reported for information only).
    """
    q = t.s - 1 if q2 is None else q2
    tol = default_tolerance(t.name) if tol is None else tol
    if part == "interp":
        exact, (v, c) = _pick(t, "v", "c")
        R = v @ vandermonde(c, q) - _unit(q, 0, exact)
        return ConditionResidual.of("adjoint-interp", R, tol, exact)
    if part == "start":
        exact, (A0, B, K0, c) = _pick(t, "A0", "B", "K0", "c")
        R = adjoint_standard_matrix(A0, B, K0, c, q)
        return ConditionResidual.of("adjoint-start", R, tol, exact)
    if part == "standard":
        exact, (A, B, K, c) = _pick(t, "A", "B", "K", "c")
        R = adjoint_standard_matrix(A, B, K, c, q)
        return ConditionResidual.of("adjoint-standard", R, tol, exact)
    if part == "last":
        exact, (A, BN, K, c) = _pick(t, "A", "BN", "K", "c")
        R = adjoint_standard_matrix(A, BN, K, c, q)
        return ConditionResidual.of("adjoint-last", R, tol, exact)
    if part in ("end", "end-untransposed"):
        exact, (AN, KN, w, c) = _pick(t, "AN", "KN", "w", "c")
        V = vandermonde(c, q)
        E = nilpotent_E(q, exact)
        Kx = KN.T if part == "end" else KN
        R = AN.T @ V + Kx @ V @ E - np.outer(w, la.ones(q, exact))
        if part == "end":
            return ConditionResidual.of("adjoint-end", R, tol, exact)
        return ConditionResidual.of("adjoint-end-untransposed", R, tol, exact, informational=True)
    raise ValueError(f"unknown adjoint part {part!r}")


def one_leg_residual(K_beta, c, orientation: str = "column") -> np.ndarray:
    """Half-one-leg condition for a full boundary matrix.

    ``column`` (the adopted convention): component j is
    ``sum_{i != j} (c_i - c_j) K[i, j]``. ``row`` uses ``K[j, i]`` instead and
    exists only so the convention can be re-checked against data.
    """
    K = np.asarray(K_beta)
    if orientation == "row":
        K = K.T
    elif orientation != "column":
        raise ValueError(orientation)
    c = np.asarray(c)
    s = len(c)
    out = []
    for j in range(s):
        acc = Fraction(0) if K.dtype == object else 0.0
        for i in range(s):
            if i != j:
                acc = acc + (c[i] - c[j]) * K[i, j]
        out.append(acc)
    return np.array(out, dtype=K.dtype)


def superconvergence_residuals(A, B, K, c, s: int) -> tuple:
    """``(1^T(A c^s - B (c-1)^s - s K c^(s-1)), 1^T(A^T c^(s-1) - B^T (c+1)^(s-1) + (s-1) K c^(s-2)))``."""
    c = np.asarray(c)
    fw = A @ _pow(c, s) - B @ _pow(c - 1, s) - s * (K @ _pow(c, s - 1))
    bw = A.T @ _pow(c, s - 1) - B.T @ _pow(c + 1, s - 1) + (s - 1) * (K @ _pow(c, s - 2))
    return fw.sum(), bw.sum()


def compatibility_residuals(A, c) -> tuple:
    """Three end-method compatibility conditions on the standard ``A``."""
    c = np.asarray(c)
    one = np.ones_like(c) if c.dtype != object else la.ones(len(c), True)
    c2 = _pow(c, 2)
    r1 = one @ A @ one - 1
    r2 = one @ A @ c - c @ A @ one - 1
    r3 = one @ A @ c2 - 2 * (c @ A @ c) + c2 @ A @ one
    return r1, r2, r3


def error_constant(A, B, K, c, s: int) -> float:
    """``err_s = ||c^s - A^{-1}B(c-1)^s - s A^{-1}K c^(s-1)||_inf / s!``."""
    c = np.asarray(c)
    eta = _pow(c, s) - la.solve(A, B @ _pow(c - 1, s)) - s * la.solve(A, K @ _pow(c, s - 1))
    return la.max_abs(eta) / factorial(s)


def sylvester_residual(A, K, c, q1: int, q2: int) -> np.ndarray:
    """Combined forward/adjoint identity for the standard method (B eliminated)."""
    exact = la.is_exact(A, K, c)
    V1, V2 = vandermonde(c, q1), vandermonde(c, q2)
    P1, P2 = pascal(q1, exact), pascal(q2, exact)
    E1, E2 = nilpotent_E(q1, exact), nilpotent_E(q2, exact)
    lhs = (V2 @ P2).T @ A @ (V1 @ P1) - V2.T @ A @ V1
    rhs = (V2 @ P2).T @ K @ V1 @ P1 @ E1 + (V2 @ E2).T @ K @ V1
    return lhs - rhs


def lmap(X, q: int, s: int) -> np.ndarray:
    """``L_{q,s}(X) = E_q^T X + X E_s``."""
    exact = la.is_exact(X)
    return nilpotent_E(q, exact).T @ X + X @ nilpotent_E(s, exact)


def fredholm_kernel_34(exact: bool = False) -> list[np.ndarray]:
    """Basis of the kernel of ``L_{3,4}^T``."""
    one = Fraction(1) if exact else 1.0
    X1 = la.zeros((3, 4), exact)
    X1[0, 0] = one
    X2 = la.zeros((3, 4), exact)
    X2[0, 1], X2[1, 0] = one, -one
    X3 = la.zeros((3, 4), exact)
    X3[0, 2], X3[1, 1], X3[2, 0] = one, -2 * one, one
    return [X1, X2, X3]


def end_solvability_residual(B, KN, c, q: int, s: int):
    """End-method solvability: returns ``(residual, pairings)``.

    The residual is ``L(V_q^T K_N V_s) - (1 1^T - V_q^T B V_s P_s^{-1})``;
    pairings are ``tr(X_i^T R)`` with ``R = 1 1^T P_s - V_q^T B V_s`` over the
    kernel basis of ``L^T``. Only ``(q, s) = (3, 4)`` is supported.
    """
    if (q, s) != (3, 4):
        raise ValueError(f"unsupported (q, s) = ({q}, {s}); only (3, 4)")
    exact = la.is_exact(B, KN, c)
    Vq, Vs = vandermonde(c, q), vandermonde(c, s)
    Ps = pascal(s, exact)
    ones = np.outer(la.ones(q, exact), la.ones(s, exact))
    VBV = Vq.T @ B @ Vs
    residual = lmap(Vq.T @ KN @ Vs, q, s) - (ones - la.solve(Ps.T, VBV.T).T)
    R = ones @ Ps - VBV
    pairings = np.array([np.trace(X.T @ R) for X in fredholm_kernel_34(exact)],
                        dtype=object if exact else float)
    return residual, pairings


def start_solvability_residual(B, K0, c, q: int, s: int) -> np.ndarray:
    """``(L(P_q^{-T} V_q^T K0 V_s) - V_q^T B V_s) Q_3``."""
    exact = la.is_exact(B, K0, c)
    Vq, Vs = vandermonde(c, q), vandermonde(c, s)
    Pq = pascal(q, exact)
    Q3 = la.eye(s, exact)
    Q3[0, 0] = Q3[1, 1] = Fraction(0) if exact else 0.0
    inner = la.solve(Pq.T, Vq.T @ K0 @ Vs)
    return (lmap(inner, q, s) - Vq.T @ B @ Vs) @ Q3


def hankel_defect(K, c, q: int, s: int, mapped: bool = False) -> float:
    """Largest spread along an anti-diagonal of ``V_q^T K V_s`` (or its L-image)."""
    X = vandermonde(c, q).T @ K @ vandermonde(c, s)
    if mapped:
        X = lmap(X, q, s)
    X = np.asarray(X, dtype=float)
    worst = 0.0
    for d in range(q + s - 1):
        vals = [X[i, d - i] for i in range(q) if 0 <= d - i < s]
        worst = max(worst, max(vals) - min(vals))
    return worst


# ---------------------------------------------------------------------------
# report


@dataclass
class MethodReport:
    name: str
    s: int
    tol: float
    conditions: list[ConditionResidual]
    err_s: float
    spectrum: np.ndarray
    lambda2: float
    norm_inf: float
    alpha: float
    a_stable: bool
    mu0: float
    muN: float
    rho_end: float          # rho(A_N^{-1} B_N)
    rho_start: float        # rho(B A_0^{-1})
    rho_end_mixed: float    # rho(B_N A^{-1})
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions if not c.informational)

    def condition(self, id: str) -> ConditionResidual:
        for c in self.conditions:
            if c.id == id:
                return c
        raise KeyError(id)

    def standard_properties(self) -> dict:
        return {
            "triplet": self.name,
            "s": self.s,
            "alpha_deg": round(self.alpha, 2),
            "a_stable": self.a_stable,
            "norm_inf": round(self.norm_inf, 3),
            "lambda2": round(self.lambda2, 3),
            "err_s": 0.0 if self.err_s == 0 else float(f"{self.err_s:.4g}"),
        }

    def boundary_properties(self) -> dict:
        return {
            "triplet": self.name,
            "mu0": round(self.mu0, 3),
            "rho_B_A0inv": round(self.rho_start, 3),
            "muN": round(self.muN, 3),
            "rho_ANinv_BN": round(self.rho_end, 3),
            "rho_BN_Ainv": round(self.rho_end_mixed, 3),
        }

    def checklist(self) -> str:
        head = f"{self.name}: {'all conditions pass' if self.passed else 'FAILED'}"
        body = [c.line() for c in self.conditions]
        stab = (
            f"  alpha = {self.alpha:.2f} deg"
            f"{' (A-stable, numerical evidence)' if self.a_stable else ''}, "
            f"|lambda2| = {self.lambda2:.3f}, ||A^-1 B||_inf = {self.norm_inf:.3f}, "
            f"err_{self.s} = {self.err_s:.4g}"
        )
        bnd = (
            f"  mu0 = {self.mu0:.3f}, muN = {self.muN:.3f}, rho(AN^-1 BN) = {self.rho_end:.3f}, "
            f"rho(B A0^-1) = {self.rho_start:.3f}, rho(BN A^-1) = {self.rho_end_mixed:.3f}"
        )
        return "\n".join([head, *("  " + b for b in body), stab, bnd, *self.notes]) + "\n"


def condition_suite(t: PeerTriplet, tol: float | None = None) -> list[ConditionResidual]:
    """All algebraic conditions of the triplet with ``(q1, q2) = (s, s-1)``."""
    tol = default_tolerance(t.name) if tol is None else tol
    s = t.s
    q1, q2 = s, s - 1
    out = [forward_order_residual(p, t, q1, tol) for p in ("start", "standard", "end", "output")]
    out += [adjoint_order_residual(p, t, q2, tol)
            for p in ("interp", "start", "standard", "last", "end")]

    for member, kname in (("start", "K0"), ("end", "KN")):
        exact, (K, c) = _pick(t, kname, "c")
        out.append(ConditionResidual.of(f"one-leg-{member}", one_leg_residual(K, c), tol, exact))

    exact, (A, B, K, c) = _pick(t, "A", "B", "K", "c")
    out.append(ConditionResidual.of("superconvergence",
                                    np.array(superconvergence_residuals(A, B, K, c, s)), tol, exact))
    exact_a, (A_, c_) = _pick(t, "A", "c")
    comp = np.array(compatibility_residuals(A_, c_))
    # with diagonal K only the normalization is a genuine restriction for s != 4
    comp_id = "compatibility" if s == 4 else "compatibility-normalization"
    out.append(ConditionResidual.of(comp_id, comp if s == 4 else comp[:1], tol, exact_a))
    one = la.ones(s, exact)
    pre = np.concatenate([la.solve(A, B @ one) - one, la.solve(A.T, B.T @ one) - one])
    out.append(ConditionResidual.of("preconsistency", pre, tol, exact))
    out.append(ConditionResidual.of("normalization-1'K1", np.array([one @ K @ one - 1]), tol, exact))
    out.append(ConditionResidual.of("sylvester-identity", sylvester_residual(A, K, c, q1, q2), tol, exact))

    if s == 4:
        exact, (B, KN, c) = _pick(t, "B", "KN", "c")
        res, pairings = end_solvability_residual(B, KN, c, q2, s)
        out.append(ConditionResidual.of("end-solvability", res, tol, exact))
        out.append(ConditionResidual.of("end-fredholm-pairings", pairings, tol, exact))
    exact, (B, K0, c) = _pick(t, "B", "K0", "c")
    out.append(ConditionResidual.of("start-solvability",
                                    start_solvability_residual(B, K0, c, q2, s), tol, exact))
    out.append(adjoint_order_residual("end-untransposed", t, q2, tol))
    return out


def verify_triplet(t: PeerTriplet, tol: float | None = None, samples: int = 3600) -> MethodReport:
    """Evaluate every condition plus the stability indicators of a triplet."""
    from . import stability

    tol = default_tolerance(t.name) if tol is None else tol
    conds = condition_suite(t, tol)
    exact, (A, B, K, c) = _pick(t, "A", "B", "K", "c")
    err = error_constant(A, B, K, c, t.s)
    f = t.floats
    zs = stability.zero_stability(f.A, f.B)
    angle = stability.stability_angle(f.A, f.B, f.K, samples)
    ind = stability.boundary_method_indicators(t)
    notes = []
    if angle.a_stable:
        notes.append("  A-stability: numerical evidence (boundary locus + ray sampling)")
    return MethodReport(
        name=t.name, s=t.s, tol=tol, conditions=conds, err_s=err,
        spectrum=zs.eigenvalues, lambda2=zs.lambda2, norm_inf=zs.norm_inf,
        alpha=angle.alpha, a_stable=angle.a_stable,
        mu0=ind.mu0, muN=ind.muN, rho_end=ind.rho_end, rho_start=ind.rho_start,
        rho_end_mixed=ind.rho_end_mixed, notes=notes,
    )
