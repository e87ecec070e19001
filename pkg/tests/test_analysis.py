import re
from fractions import Fraction as Fr

import numpy as np
import pytest

from peeroc import _linalg as la
from peeroc.analysis import (
    adjoint_order_residual,
    compatibility_residuals,
    condition_suite,
    end_solvability_residual,
    error_constant,
    forward_order_residual,
    hankel_defect,
    lmap,
    one_leg_residual,
    superconvergence_residuals,
    verify_triplet,
)
from peeroc.coefficients import BUILTIN_NAMES

EXACT = ("AP4o43bdf", "AP3o32f")


# --- order conditions --------------------------------------------------------

def test_bdf_forward_standard_exact_zero(triplets):
    r = forward_order_residual("standard", triplets["AP4o43bdf"], 4)
    assert r.exact and r.exactly_zero


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_output_condition_by_construction(name, triplets):
    assert forward_order_residual("output", triplets[name]).max_abs < 1e-12


def test_dif_start_floating(triplets):
    assert forward_order_residual("start", triplets["AP4o43dif"], 4).max_abs < 1e-12


def test_bdf_adjoint_end(triplets):
    assert adjoint_order_residual("end", triplets["AP4o43bdf"], 3).max_abs < 1e-12


def test_ap3_adjoint_standard_exact(triplets):
    r = adjoint_order_residual("standard", triplets["AP3o32f"], 2)
    assert r.exact and r.exactly_zero


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_interp_condition_by_construction(name, triplets):
    assert adjoint_order_residual("interp", triplets[name]).max_abs < 1e-12


@pytest.mark.parametrize("name,k", [(n, k) for n in BUILTIN_NAMES
                                    for k in range(3 if n == "AP3o32f" else 4)])
def test_forward_order_against_polynomial_solutions(name, k, triplets):
    """Oracle: stages of y = t^k (k < s) satisfy the step equations exactly."""
    f = triplets[name].floats
    h, tn = 0.1, 0.7
    Y = (tn + f.c * h) ** k
    Yprev = (tn - h + f.c * h) ** k
    dY = k * (tn + f.c * h) ** (k - 1) if k else np.zeros(f.s)
    res = f.A @ Y - f.B @ Yprev - h * f.K @ dY
    scale = np.abs(f.A).max() + np.abs(f.B).max()
    assert np.max(np.abs(res)) < 1e-12 * scale
    # end step with its own B_N
    res_end = f.AN @ Y - f.BN @ Yprev - h * f.KN @ dY
    assert np.max(np.abs(res_end)) < 1e-12 * (np.abs(f.AN).max() + np.abs(f.BN).max())
    # starting step from the exact initial value and derivative
    y0 = tn ** k
    dy0 = k * tn ** (k - 1) if k else 0.0
    res0 = f.A0 @ Y - f.a * y0 - h * f.b * dy0 - h * f.K0 @ dY
    assert np.max(np.abs(res0)) < 1e-11 * (1 + np.abs(f.A0).max())


def test_unknown_part(triplets):
    with pytest.raises(ValueError):
        forward_order_residual("middle", triplets["AP4o43bdf"])
    with pytest.raises(ValueError):
        adjoint_order_residual("middle", triplets["AP4o43bdf"])


# --- one-leg, superconvergence, compatibility -------------------------------------

def test_one_leg_diagonal_zero():
    K = np.diag([1.0, 2.0, 3.0])
    assert np.all(one_leg_residual(K, np.array([0.2, 0.5, 1.0])) == 0)


@pytest.mark.parametrize("name", ["AP4o43bdf", "AP4o43dif"])
def test_one_leg_orientation(name, triplets):
    t = triplets[name]
    KN, c = t.get("KN"), t.get("c")
    assert la.max_abs(one_leg_residual(KN, c, "column")) < 1e-12
    # the end matrices are not diagonal, so the other orientation is a real test
    assert la.max_abs(one_leg_residual(KN, c, "row")) > 1e-6


def test_superconvergence_bdf_exact(triplets):
    t = triplets["AP4o43bdf"]
    A, B, K, c = (t.get(n) for n in "ABKc")
    assert superconvergence_residuals(A, B, K, c, 4) == (0, 0)
    # oracle: BDF4 reproduces t^4 as well, so the full forward residual vanishes
    assert forward_order_residual("standard", t, 5).exactly_zero


def test_superconvergence_die_floating(triplets):
    f = triplets["AP4o43die"].floats
    fw, bw = superconvergence_residuals(f.A, f.B, f.K, f.c, 4)
    assert abs(fw) < 1e-12 and abs(bw) < 1e-12


def test_superconvergence_zero_method():
    Z = np.zeros((3, 3))
    assert superconvergence_residuals(Z, Z, Z, np.array([0.1, 0.5, 1.0]), 3) == (0, 0)


def test_compatibility_dig(triplets):
    f = triplets["AP4o43dig"].floats
    assert max(abs(x) for x in compatibility_residuals(f.A, f.c)) < 1e-10


def test_compatibility_identity_at_zero_nodes():
    assert compatibility_residuals(np.eye(4), np.zeros(4)) == (3, -1, 0)


def test_compatibility_ap3_normalization_exact(triplets):
    t = triplets["AP3o32f"]
    assert compatibility_residuals(t.get("A"), t.get("c"))[0] == 0


# --- error constant ----------------------------------------------------------------

def test_error_constants(triplets):
    get = lambda n: triplets[n].floats  # noqa: E731
    t = triplets["AP4o43bdf"]
    assert error_constant(*(t.get(n) for n in "ABKc"), 4) == 0
    f = get("AP4o43dif")
    assert abs(error_constant(f.A, f.B, f.K, f.c, 4) - 0.0025) < 1e-4
    f = get("AP3o32f")
    assert abs(error_constant(f.A, f.B, f.K, f.c, 3) - 0.0170) < 5e-4


@pytest.mark.parametrize("alpha", [-3.0, 0.5, 7.0])
def test_error_constant_scaling_invariance(alpha, triplets):
    f = triplets["AP4o43dig"].floats
    e = error_constant(f.A, f.B, f.K, f.c, 4)
    assert np.isclose(error_constant(alpha * f.A, alpha * f.B, alpha * f.K, f.c, 4), e, rtol=1e-12)


# --- solvability and Hankel structure ---------------------------------------------

def test_end_solvability_die(triplets):
    f = triplets["AP4o43die"].floats
    res, pairings = end_solvability_residual(f.B, f.KN, f.c, 3, 4)
    assert np.max(np.abs(res)) < 1e-10
    assert np.max(np.abs(pairings)) < 1e-10


def test_first_pairing_is_row_sum_defect(triplets, rng):
    f = triplets["AP4o43dig"].floats
    B = f.B + 1e-2 * rng.normal(size=(4, 4))
    _, pairings = end_solvability_residual(B, f.KN, f.c, 3, 4)
    assert np.isclose(pairings[0], 1 - np.ones(4) @ B @ np.ones(4))
    assert np.max(np.abs(pairings)) > 1e-4


def test_end_solvability_shape_check(triplets):
    f = triplets["AP3o32f"].floats
    with pytest.raises(ValueError):
        end_solvability_residual(f.B, f.KN, f.c, 2, 3)


def test_hankel_defect(triplets):
    t = triplets["AP4o43bdf"]
    K, c = t.get("K"), t.get("c")
    assert hankel_defect(K, c, 3, 4) == 0
    assert hankel_defect(K, c, 3, 4, mapped=True) == 0
    K2 = K.copy()
    K2[0, 2] += 1
    assert hankel_defect(K2, c, 3, 4) > 0


def test_lmap_definition():
    X = np.arange(12.0).reshape(3, 4)
    E3 = np.diag([1.0, 2.0], 1)
    E4 = np.diag([1.0, 2.0, 3.0], 1)
    assert np.allclose(lmap(X, 3, 4), E3.T @ X + X @ E4)


# --- full suite ----------------------------------------------------------------------

@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_suite_passes(name, triplets):
    tol = 1e-8 if name == "AP4o43sil" else 1e-10
    conds = condition_suite(triplets[name], tol)
    bad = [c.id for c in conds if not c.informational and not c.passed]
    assert not bad


@pytest.mark.parametrize("name", EXACT)
def test_rational_triplets_exactly_zero(name, triplets):
    for c in condition_suite(triplets[name]):
        if not c.informational:
            assert c.exact and c.exactly_zero, c.id


def test_condition_ids_are_descriptive(triplets):
    ids = [c.id for c in condition_suite(triplets["AP4o43bdf"])]
    assert len(ids) == len(set(ids))
    for i in ids:
        assert not re.search(r"\(\d+\)|eq|table|lemma", i, re.I)


def test_wrong_output_vector_fails_output_condition(triplets):
    t = triplets["AP4o43bdf"].replace()
    e1 = np.array([Fr(1), Fr(0), Fr(0), Fr(0)], dtype=object)
    t._cache[("w", True)] = e1
    r = forward_order_residual("output", t)
    assert not r.passed


def test_report(triplets):
    rep = verify_triplet(triplets["AP4o43dif"])
    assert rep.passed
    text = rep.checklist()
    assert "alpha = 84.0" in text and "[PASS]" in text
    assert rep.condition("superconvergence").passed
    with pytest.raises(KeyError):
        rep.condition("nope")
    assert set(rep.standard_properties()) == {"triplet", "s", "alpha_deg", "a_stable",
                                              "norm_inf", "lambda2", "err_s"}
