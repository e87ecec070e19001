"""Zero stability, boundary locus / A(alpha) angle, boundary-method indicators."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coefficients import PeerTriplet

DEFAULT_SAMPLES = 3600
RAY_ANGLES_DEG = (0.0, 45.0, 89.0)


@dataclass(frozen=True)
class ZeroStability:
    eigenvalues: np.ndarray  # descending modulus
    lambda2: float
    norm_inf: float


@dataclass(frozen=True)
class LocusSample:
    theta: float
    z: np.ndarray


@dataclass(frozen=True)
class StabilityAngle:
    alpha: float
    a_stable: bool
    max_ray_radius: float


@dataclass(frozen=True)
class BoundaryIndicators:
    mu0: float
    muN: float
    rho_end: float
    rho_start: float
    rho_end_mixed: float


def _rho(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def zero_stability(A, B) -> ZeroStability:
    """Eigenvalues of ``A^{-1} B`` sorted by descending modulus."""
    Bbar = np.linalg.solve(np.asarray(A, float), np.asarray(B, float))
    lam = np.linalg.eigvals(Bbar)
    lam = lam[np.argsort(-np.abs(lam), kind="stable")]
    l2 = float(np.abs(lam[1])) if len(lam) > 1 else 0.0
    return ZeroStability(lam, l2, float(np.linalg.norm(Bbar, np.inf)))


def boundary_locus(A, B, K, samples: int = DEFAULT_SAMPLES) -> list[LocusSample]:
    """Eigenvalues ``z`` of ``K^{-1}(A - exp(-i theta) B)`` for ``theta_k = 2 pi k / M``."""
    if samples < 8:
        raise ValueError("need at least 8 locus samples")
    A, B, K = (np.asarray(x, float) for x in (A, B, K))
    KA = np.linalg.solve(K, A)
    KB = np.linalg.solve(K, B)
    thetas = 2.0 * np.pi * np.arange(samples) / samples
    mats = KA[None] - np.exp(-1j * thetas)[:, None, None] * KB[None]
    zs = np.linalg.eigvals(mats)
    return [LocusSample(float(th), np.sort_complex(z)) for th, z in zip(thetas, zs)]


def locus_points(A, B, K, samples: int = DEFAULT_SAMPLES) -> np.ndarray:
    return np.concatenate([ls.z for ls in boundary_locus(A, B, K, samples)])


def _in_left_half(z: np.ndarray) -> np.ndarray:
    # points within round-off of the imaginary axis count as on it
    return z.real < -1e-9 * (1.0 + np.abs(z))


def stability_radius(A, B, K, z: complex) -> float:
    """Spectral radius of ``(A - z K)^{-1} B``; ``inf`` at a pole (singular ``A - z K``)."""
    M = np.asarray(A, complex) - z * np.asarray(K, complex)
    try:
        return _rho(np.linalg.solve(M, np.asarray(B, complex)))
    except np.linalg.LinAlgError:
        return float("inf")


def stability_angle(A, B, K, samples: int = DEFAULT_SAMPLES) -> StabilityAngle:
    """Numerical A(alpha) angle in degrees and an A-stability flag.

    The flag is numerical evidence only: no locus point in the open left
    half plane and ``rho((A - zK)^{-1} B) <= 1 + 1e-8`` on rays through the
    left half plane.
    """
    z = locus_points(A, B, K, samples)
    left = z[_in_left_half(z)]
    if left.size:
        alpha = float(np.min(np.abs(np.angle(-left))) * 180.0 / np.pi)
        alpha = min(alpha, 90.0)
    else:
        alpha = 90.0
    worst = 0.0
    for deg in RAY_ANGLES_DEG:
        direction = -np.exp(1j * np.deg2rad(deg))
        for r in np.logspace(-3, 6, 91):
            worst = max(worst, stability_radius(A, B, K, r * direction))
    a_stable = left.size == 0 and worst <= 1.0 + 1e-8
    return StabilityAngle(90.0 if a_stable else alpha, a_stable, worst)


def boundary_method_indicators(t: PeerTriplet) -> BoundaryIndicators:
    """``mu0, muN`` and the three mixed spectral radii of the boundary steps."""
    f = t.floats
    mu0 = float(np.min(np.linalg.eigvals(np.linalg.solve(f.K0, f.A0)).real))
    muN = float(np.min(np.linalg.eigvals(np.linalg.solve(f.KN, f.AN)).real))
    return BoundaryIndicators(
        mu0=mu0,
        muN=muN,
        rho_end=_rho(np.linalg.solve(f.AN, f.BN)),
        rho_start=_rho(f.B @ np.linalg.inv(f.A0)),
        rho_end_mixed=_rho(f.BN @ np.linalg.inv(f.A)),
    )


def write_locus_csv(path: str | Path, locus: list[LocusSample]) -> None:
    """One row per eigenvalue per sample: ``theta, re_z, im_z``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "re_z", "im_z"])
        for ls in locus:
            for z in ls.z:
                w.writerow([repr(ls.theta), repr(float(z.real)), repr(float(z.imag))])
