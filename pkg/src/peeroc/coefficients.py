"""Peer triplet coefficients: special matrices, built-in methods, text format.

A triplet stores only the pairs ``(A_n, K_n)`` and the nodes ``c``; the
matrices ``B``, ``B_N`` and the vectors ``a, b, w, v`` are derived on demand.
Entries are kept as printed: ``p/q`` strings become :class:`Fraction`,
decimal literals become :class:`Decimal` so that they serialize back
unchanged. Numerical work happens on either Fraction arrays (when every
entry involved is rational) or float64 arrays.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from functools import cached_property
from importlib import resources
from math import comb
from typing import Union

import numpy as np

from . import _linalg as la

ExactScalar = Union[Fraction, Decimal]

BUILTIN_NAMES = (
    "AP4o43bdf",
    "AP4o43dif",
    "AP4o43dig",
    "AP4o43die",
    "AP4o43sil",
    "AP3o32f",
)

STORED_FIELDS = ("c", "A", "K", "A0", "K0", "AN", "KN")
_DERIVED_DEPS = {
    "B": ("A", "K", "c"),
    "BN": ("AN", "KN", "c"),
    "a": ("A0",),
    "b": ("A0", "K0", "c"),
    "w": ("c",),
    "v": ("c",),
}


class TripletFormatError(ValueError):
    """Malformed triplet document; message names the field and line."""


# ---------------------------------------------------------------------------
# special matrices


def vandermonde(c, q: int) -> np.ndarray:
    """Return ``V_q = (1, c, c^2, ..., c^(q-1))`` with shape ``(s, q)``.

    Fraction input gives a Fraction matrix, anything else float64.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    c = np.asarray(c)
    exact = c.dtype == object
    if not exact:
        c = c.astype(float)
    cols = [la.ones(len(c), exact)]
    for _ in range(1, q):
        cols.append(cols[-1] * c)
    return np.stack(cols, axis=1)


def pascal(q: int, exact: bool = False) -> np.ndarray:
    """Upper triangular Pascal matrix with entries ``binom(j-1, i-1)``."""
    if q < 1:
        raise ValueError("q must be >= 1")
    P = la.zeros((q, q), exact)
    for i in range(q):
        for j in range(i, q):
            P[i, j] = Fraction(comb(j, i)) if exact else comb(j, i)
    return P


def nilpotent_E(q: int, exact: bool = False) -> np.ndarray:
    """Nilpotent shift with ``E[i, i+1] = i`` (1-based), so that ``pascal = exp(E)``."""
    if q < 1:
        raise ValueError("q must be >= 1")
    E = la.zeros((q, q), exact)
    for i in range(1, q):
        E[i - 1, i] = Fraction(i) if exact else float(i)
    return E


# ---------------------------------------------------------------------------
# dependent parameters


def derive_B(A, K, c) -> np.ndarray:
    """``B = (A V_s - K V_s E_s) P_s V_s^{-1}``; forward order ``s`` by construction."""
    exact = la.is_exact(A, K, c)
    s = len(c)
    V = vandermonde(c, s)
    E = nilpotent_E(s, exact)
    P = pascal(s, exact)
    M = (A @ V - K @ V @ E) @ P
    # B = M V^{-1}  <=>  V^T B^T = M^T
    return la.solve(V.T, M.T).T


def derive_start_vectors(A0, K0, c) -> tuple[np.ndarray, np.ndarray]:
    """``a = A0 1``, ``b = A0 c - K0 1``."""
    exact = la.is_exact(A0, K0, c)
    one = la.ones(len(c), exact)
    return A0 @ one, A0 @ c - K0 @ one


def derive_output_vectors(c) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(w, v)`` with ``w^T V_s = 1^T`` and ``v^T V_s = e_1^T``."""
    exact = la.is_exact(c)
    s = len(c)
    V = vandermonde(c, s)
    e1 = la.zeros(s, exact)
    e1[0] = Fraction(1) if exact else 1.0
    return la.solve(V.T, la.ones(s, exact)), la.solve(V.T, e1)


# ---------------------------------------------------------------------------
# scalars

_RATIONAL = re.compile(r"^\s*[+-]?\d+\s*(/\s*\d+\s*)?$")


def parse_scalar(token: str) -> ExactScalar:
    """``"41/85"`` -> Fraction, ``"0.13"`` -> Decimal (digits kept as printed)."""
    if not isinstance(token, str):
        raise TypeError(f"numeric entries must be strings, got {token!r}")
    if _RATIONAL.match(token):
        value = Fraction(token.replace(" ", ""))
        return value
    try:
        value = Decimal(token.strip())
    except InvalidOperation:
        raise ValueError(f"not a rational or decimal literal: {token!r}") from None
    if not value.is_finite():
        raise ValueError(f"non-finite entry: {token!r}")
    return value


def format_scalar(x: ExactScalar) -> str:
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, Decimal):
        return str(x)
    raise TypeError(f"unsupported scalar {x!r}")


def _to_numeric(entries: np.ndarray, exact: bool) -> np.ndarray:
    if exact:
        return entries.copy()
    return np.vectorize(float, otypes=[float])(entries) if entries.size else entries.astype(float)


# ---------------------------------------------------------------------------
# triplet


@dataclass(frozen=True, eq=False)
class PeerTriplet:
    """Starting method ``(A0, K0)``, standard ``(A, B, K)``, end ``(AN, BN, KN)``.

    Stored arrays hold :data:`ExactScalar` entries. Use :meth:`get` for a
    numeric array of any stored or derived field.
    """

    name: str
    q1: int
    q2: int
    c: np.ndarray
    A: np.ndarray
    K: np.ndarray
    A0: np.ndarray
    K0: np.ndarray
    AN: np.ndarray
    KN: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        s = len(self.c)
        if s < 2:
            raise ValueError("need at least two nodes")
        for name in STORED_FIELDS[1:]:
            arr = getattr(self, name)
            if arr.shape != (s, s):
                raise ValueError(f"{name} has shape {arr.shape}, expected {(s, s)}")
        if len(set(self.c.tolist())) != s:
            raise ValueError("nodes must be pairwise distinct")
        for name in STORED_FIELDS:
            getattr(self, name).setflags(write=False)

    @property
    def s(self) -> int:
        return len(self.c)

    def rational(self, *fields: str) -> bool:
        """True when every stored entry the given fields depend on is a Fraction."""
        names = fields or STORED_FIELDS
        base: set[str] = set()
        for f in names:
            base.update(_DERIVED_DEPS.get(f, (f,)))
        return all(
            isinstance(x, Fraction) for f in base for x in getattr(self, f).ravel()
        )

    def get(self, name: str, exact: bool | None = None) -> np.ndarray:
        """Numeric copy of a stored or derived field.

        ``exact=None`` picks Fraction arithmetic when the field's inputs are all
        rational; ``exact=True`` on decimal data raises.
        """
        if exact is None:
            exact = self.rational(name)
        elif exact and not self.rational(name):
            raise ValueError(f"{self.name}.{name} depends on decimal entries")
        key = (name, exact)
        if key not in self._cache:
            self._cache[key] = self._compute(name, exact)
        return self._cache[key].copy()

    def _compute(self, name: str, exact: bool) -> np.ndarray:
        if name in STORED_FIELDS:
            return _to_numeric(getattr(self, name), exact)
        g = lambda f: self.get(f, exact)  # noqa: E731
        if name == "B":
            return derive_B(g("A"), g("K"), g("c"))
        if name == "BN":
            return derive_B(g("AN"), g("KN"), g("c"))
        if name in ("a", "b"):
            a, b = derive_start_vectors(g("A0"), g("K0"), g("c"))
            return a if name == "a" else b
        if name in ("w", "v"):
            w, v = derive_output_vectors(g("c"))
            return w if name == "w" else v
        raise KeyError(name)

    @cached_property
    def floats(self) -> "FloatTriplet":
        return FloatTriplet.from_triplet(self)

    def replace(self, **fields) -> "PeerTriplet":
        """New triplet with some stored fields swapped (entries as ExactScalar or str)."""
        kw = {f: getattr(self, f) for f in STORED_FIELDS}
        kw.update(name=self.name, q1=self.q1, q2=self.q2)
        for k, v in fields.items():
            kw[k] = _as_entries(v) if k in STORED_FIELDS else v
        return PeerTriplet(**kw)

    def __eq__(self, other):
        if not isinstance(other, PeerTriplet):
            return NotImplemented
        return triplet_to_text(self) == triplet_to_text(other)

    __hash__ = None


@dataclass(frozen=True)
class FloatTriplet:
    """All coefficients of a triplet as float64, for the solver and stability code."""

    name: str
    s: int
    c: np.ndarray
    A: np.ndarray
    B: np.ndarray
    K: np.ndarray
    A0: np.ndarray
    K0: np.ndarray
    a: np.ndarray
    b: np.ndarray
    AN: np.ndarray
    BN: np.ndarray
    KN: np.ndarray
    w: np.ndarray
    v: np.ndarray

    @classmethod
    def from_triplet(cls, t: PeerTriplet) -> "FloatTriplet":
        names = ("c", "A", "B", "K", "A0", "K0", "a", "b", "AN", "BN", "KN", "w", "v")
        # derive in exact arithmetic where possible, then round once
        vals = {n: np.asarray(t.get(n), dtype=float) for n in names}
        for arr in vals.values():
            arr.setflags(write=False)
        return cls(name=t.name, s=t.s, **vals)


def _as_entries(value) -> np.ndarray:
    arr = np.asarray(value, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx, x in np.ndenumerate(arr):
        if isinstance(x, (Fraction, Decimal)):
            out[idx] = x
        elif isinstance(x, str):
            out[idx] = parse_scalar(x)
        elif isinstance(x, int):
            out[idx] = Fraction(x)
        elif isinstance(x, float):
            out[idx] = Decimal(repr(x))
        else:
            raise TypeError(f"unsupported entry {x!r}")
    return out


# ---------------------------------------------------------------------------
# text format


def triplet_to_text(t: PeerTriplet) -> str:
    """Serialize to the JSON triplet document; derived fields are not written."""
    def row(values) -> str:
        return json.dumps([format_scalar(x) for x in values])

    lines = [
        "{",
        f'  "name": {json.dumps(t.name)},',
        f'  "s": {t.s},',
        f'  "q1": {t.q1},',
        f'  "q2": {t.q2},',
        f'  "c": {row(t.c)},',
    ]
    mats = STORED_FIELDS[1:]
    for k, name in enumerate(mats):
        M = getattr(t, name)
        body = ",\n".join(f"    {row(r)}" for r in M)
        tail = "," if k < len(mats) - 1 else ""
        lines.append(f'  "{name}": [\n{body}\n  ]{tail}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _line_of(text: str, key: str) -> int:
    m = re.search(rf'"{re.escape(key)}"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else 0


def parse_triplet(text: str) -> PeerTriplet:
    """Parse a triplet document produced by :func:`triplet_to_text`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TripletFormatError(f"line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise TripletFormatError("line 1: document must be a JSON object")

    def fail(key: str, msg: str):
        raise TripletFormatError(f"line {_line_of(text, key)}: field {key!r}: {msg}")

    for key in ("name", "s", "q1", "q2") + STORED_FIELDS:
        if key not in doc:
            raise TripletFormatError(f"missing field {key!r}")
    s = doc["s"]
    if not isinstance(s, int) or s < 2:
        fail("s", "must be an integer >= 2")
    for key in ("q1", "q2"):
        if not isinstance(doc[key], int) or doc[key] < 1:
            fail(key, "must be a positive integer")

    def entries(key: str, shape: tuple[int, ...]) -> np.ndarray:
        raw = doc[key]
        try:
            arr = np.array(raw, dtype=object)
        except ValueError:
            fail(key, "ragged array")
        if arr.shape != shape:
            fail(key, f"dimension mismatch: got {arr.shape}, expected {shape} for s={s}")
        out = np.empty(shape, dtype=object)
        for idx, tok in np.ndenumerate(arr):
            try:
                out[idx] = parse_scalar(tok)
            except (ValueError, TypeError) as exc:
                where = ",".join(str(i + 1) for i in idx)
                fail(key, f"entry ({where}): {exc}")
        return out

    kw = {"c": entries("c", (s,))}
    for key in STORED_FIELDS[1:]:
        kw[key] = entries(key, (s, s))
    try:
        return PeerTriplet(name=str(doc["name"]), q1=doc["q1"], q2=doc["q2"], **kw)
    except ValueError as exc:
        raise TripletFormatError(str(exc)) from None


def load_triplet(name: str) -> PeerTriplet:
    """Load one of :data:`BUILTIN_NAMES` from the packaged coefficient data."""
    if name not in BUILTIN_NAMES:
        raise KeyError(f"unknown triplet {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
    text = resources.files("peeroc.data").joinpath(f"{name}.json").read_text()
    return parse_triplet(text)
