from decimal import Decimal
from fractions import Fraction as Fr

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from peeroc.coefficients import (
    BUILTIN_NAMES,
    PeerTriplet,
    TripletFormatError,
    derive_B,
    derive_output_vectors,
    format_scalar,
    load_triplet,
    nilpotent_E,
    parse_scalar,
    parse_triplet,
    pascal,
    triplet_to_text,
    vandermonde,
)

C4 = np.array([Fr(1, 4), Fr(1, 2), Fr(3, 4), Fr(1)], dtype=object)


# --- special matrices -------------------------------------------------------

def test_vandermonde_two_columns():
    V = vandermonde(C4, 2)
    assert V.tolist() == [[1, Fr(1, 4)], [1, Fr(1, 2)], [1, Fr(3, 4)], [1, 1]]


def test_vandermonde_zero_node():
    assert vandermonde(np.array([Fr(0)], dtype=object), 3).tolist() == [[1, 0, 0]]


def test_vandermonde_determinant_matches_product_formula():
    V = vandermonde(C4, 4)
    # oracle: exact Leibniz-free product formula prod_{i<j}(c_j - c_i)
    det = Fr(1)
    for i in range(4):
        for j in range(i + 1, 4):
            det *= C4[j] - C4[i]
    assert det == Fr(3, 1024)
    assert np.isclose(np.linalg.det(np.asarray(V, float)), float(det), rtol=1e-12)


@pytest.mark.parametrize("q", [1, 3, 6])
def test_vandermonde_matches_numpy(q):
    c = np.linspace(-0.5, 2.0, 5)
    assert np.allclose(vandermonde(c, q), np.vander(c, q, increasing=True))


def test_pascal_small():
    assert pascal(3).tolist() == [[1, 1, 1], [0, 1, 2], [0, 0, 1]]


@pytest.mark.parametrize("q", [2, 4, 7])
def test_pascal_matches_scipy_and_exponential(q):
    assert np.array_equal(pascal(q), scipy.linalg.pascal(q, kind="upper"))
    assert np.allclose(scipy.linalg.expm(nilpotent_E(q)), pascal(q))


def test_pascal_column_sums_are_powers_of_two():
    assert (np.ones(4) @ pascal(4)).tolist() == [1, 2, 4, 8]


def test_E_commutes_with_pascal():
    E, P = nilpotent_E(3, exact=True), pascal(3, exact=True)
    assert np.all(E @ P - P @ E == 0)


def test_invalid_sizes():
    with pytest.raises(ValueError):
        vandermonde(C4, 0)
    with pytest.raises(ValueError):
        pascal(0)


# --- derived parameters ------------------------------------------------------

def test_bdf_B_gives_bdf4_propagation(triplets):
    t = triplets["AP4o43bdf"]
    f = t.floats
    assert np.isclose(np.linalg.norm(np.linalg.solve(f.A, f.B), np.inf), 5.79, atol=0.005)
    # oracle: BDF4 weights alpha_0..alpha_4 with sum_j alpha_j y(-j) = y'(0)
    # exact for polynomials of degree <= 4
    j = np.arange(5.0)
    M = np.vander(-j, 5, increasing=True).T
    rhs = np.zeros(5)
    rhs[1] = 1.0
    alpha = np.linalg.solve(M, rhs)
    # stages are uniformly spaced by h/4 and K = I/4: each row of [-B | A]
    # carries the stencil aligned with its own stage
    stencil = np.concatenate([-f.B, f.A], axis=1)
    for i in range(4):
        row = stencil[i, i:i + 5]
        assert np.allclose(row, alpha[::-1], atol=1e-12)
        assert np.allclose(np.delete(stencil[i], range(i, i + 5)), 0.0)


def test_B_vanishes_for_degenerate_A():
    s = 4
    V = vandermonde(C4, s)
    K = np.diag([Fr(1, 4)] * s).astype(object)
    E = nilpotent_E(s, True)
    # A V = K V E  =>  B = 0
    from peeroc import _linalg as la
    A = la.solve(V.T, (K @ V @ E).T).T
    assert np.all(derive_B(A, K, C4) == 0)


def test_ap3_norm(triplets):
    f = triplets["AP3o32f"].floats
    # reference value has three significant digits; 15.245 is within 1% relative
    assert np.isclose(np.linalg.norm(np.linalg.solve(f.A, f.B), np.inf), 15.3, rtol=0.01)


def test_output_vectors_for_last_node_one(triplets):
    w, v = derive_output_vectors(C4)
    assert w.tolist() == [0, 0, 0, 1]
    assert sum(v) == 1 and v @ C4 == 0
    w_dif = triplets["AP4o43dif"].get("w")
    assert np.allclose(np.asarray(w_dif, float), [0, 0, 0, 1])


def test_B_satisfies_forward_condition_in_floats(rng):
    c = np.sort(rng.uniform(0, 1, 3))
    A = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    K = np.diag(rng.uniform(0.2, 1, 3))
    B = derive_B(A, K, c)
    V = np.vander(c, 3, increasing=True)
    lhs = B @ np.vander(c - 1, 3, increasing=True)
    rhs = A @ V - K @ V @ nilpotent_E(3)
    assert np.allclose(lhs, rhs, atol=1e-10)


# --- built-in data -------------------------------------------------------------

def test_builtin_bdf_and_ap3(triplets):
    bdf = triplets["AP4o43bdf"]
    assert bdf.c.tolist() == list(C4)
    assert np.all(bdf.K == np.diag([Fr(1, 4)] * 4))
    ap3 = triplets["AP3o32f"]
    assert ap3.c.tolist() == [Fr(106, 135), Fr(3, 5), Fr(1)]
    assert np.diag(ap3.K).tolist() == [Fr(-93, 50), Fr(44, 25), Fr(11, 10)]


def test_sil_theta_is_cubic_root(triplets):
    t = triplets["AP4o43sil"]
    f = t.floats
    d = np.diag(np.linalg.solve(f.K, f.A))
    assert np.allclose(d, d[0], rtol=1e-9)
    theta = 3.34552931287687520
    coeffs = [112673616, 106686908, -2102637319, 1621264295]
    val = np.polyval(coeffs, theta)
    scale = np.polyval(np.abs(coeffs), theta)
    assert abs(val) / scale < 1e-6


def test_die_first_start_row(triplets):
    t = triplets["AP4o43die"]
    assert t.A0[0].tolist() == [Fr(1573, 27), Fr(1), Fr(0), Fr(0)]


def test_unknown_builtin():
    with pytest.raises(KeyError):
        load_triplet("AP9o99xyz")


# --- text format ---------------------------------------------------------------

@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_round_trip(name, triplets):
    t = triplets[name]
    text = triplet_to_text(t)
    t2 = parse_triplet(text)
    assert t2 == t
    assert triplet_to_text(t2) == text


def test_parse_rational_entry():
    assert parse_scalar("41/85") == Fr(41, 85)


def test_dimension_mismatch_names_field(triplets):
    text = triplet_to_text(triplets["AP3o32f"])
    import json
    doc = json.loads(text)
    doc["A"] = doc["A"] + [["1", "0", "0"]]
    with pytest.raises(TripletFormatError, match="'A'.*dimension"):
        parse_triplet(json.dumps(doc))


def test_four_by_four_A_with_three_nodes(triplets):
    import json
    doc = json.loads(triplet_to_text(triplets["AP3o32f"]))
    doc["A"] = [["1"] * 4] * 4
    with pytest.raises(TripletFormatError, match="expected"):
        parse_triplet(json.dumps(doc))


@pytest.mark.parametrize("bad", ["{", "[]", '{"name": "x"}'])
def test_malformed_documents(bad):
    with pytest.raises(TripletFormatError):
        parse_triplet(bad)


def test_bad_entry_reports_position(triplets):
    import json
    doc = json.loads(triplet_to_text(triplets["AP3o32f"]))
    doc["K"][1][2] = "1/0x"
    with pytest.raises(TripletFormatError, match=r"\(2,3\)"):
        parse_triplet(json.dumps(doc))


def test_replace_and_equality(triplets):
    t = triplets["AP3o32f"]
    t2 = t.replace(K=np.diag([Fr(1)] * 3))
    assert t2 != t
    assert t.replace() == t
    with pytest.raises(ValueError):
        t.replace(c=np.array([Fr(0), Fr(0), Fr(1)], dtype=object))


def test_exact_get_rejects_decimals(triplets):
    sil = triplets["AP4o43sil"]
    if not sil.rational("A"):
        with pytest.raises(ValueError):
            sil.get("A", exact=True)
    assert triplets["AP4o43bdf"].get("B").dtype == object


fractions = st.fractions(max_denominator=10**6).filter(lambda x: abs(x) < 10**9)


@given(fractions)
def test_fraction_scalar_round_trip(x):
    assert parse_scalar(format_scalar(x)) == x


@given(st.decimals(allow_nan=False, allow_infinity=False, places=12,
                   min_value=-10**6, max_value=10**6))
def test_decimal_scalar_round_trip(x):
    y = parse_scalar(format_scalar(x))
    assert y == x
