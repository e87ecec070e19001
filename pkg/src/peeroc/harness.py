"""Convergence studies and run manifests behind the command-line front end."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .coefficients import load_triplet
from .kkt import KktSolveError, NewtonOptions, extract_errors, preset_options, solve_kkt
from .problems import BvpProblem, exact_reference, get_problem, shooting_reference

THREADS_ENV = "PEEROC_THREADS"


@dataclass(frozen=True)
class ConvergenceRow:
    steps: int              # N + 1
    state_error: float
    adjoint_error: float
    iterations: int | None  # None when the solve failed


@dataclass
class ConvergenceTable:
    method: str
    problem: str
    rows: list[ConvergenceRow]

    def __post_init__(self):
        steps = [r.steps for r in self.rows]
        if steps != sorted(steps):
            raise ValueError("rows must be sorted by N+1")
        if any(b != 2 * a for a, b in zip(steps, steps[1:])):
            raise ValueError("consecutive N+1 must double")

    @staticmethod
    def _order(e_coarse: float, e_fine: float) -> float:
        if not (e_coarse > 0 and e_fine > 0) or not math.isfinite(e_coarse * e_fine):
            return math.nan
        return math.log2(e_coarse / e_fine)

    def orders(self) -> list[tuple[float, float]]:
        """``log2`` of adjacent error ratios; one pair per adjacent row pair."""
        return [(self._order(a.state_error, b.state_error),
                 self._order(a.adjoint_error, b.adjoint_error))
                for a, b in zip(self.rows, self.rows[1:])]

    def records(self) -> list[dict]:
        out = []
        orders = [(math.nan, math.nan)] + self.orders()
        for r, (os_, oa) in zip(self.rows, orders):
            out.append({"method": self.method, "problem": self.problem, "steps": r.steps,
                        "state_error": r.state_error, "adjoint_error": r.adjoint_error,
                        "state_order": os_, "adjoint_order": oa,
                        "iterations": r.iterations})
        return out


def thread_count(default: int | None = None) -> int:
    """Worker cap from ``PEEROC_THREADS`` (>= 1); defaults to the CPU count."""
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return default or os.cpu_count() or 1


def reference_for(prob: BvpProblem, steps: int, ref_steps: int = 1280):
    if prob.exact is not None:
        return exact_reference(prob, steps)
    return shooting_reference(prob, ref_steps, grid_steps=steps)


def _cell(method: str, prob: BvpProblem, steps: int, opts: NewtonOptions, ref) -> ConvergenceRow:
    t = load_triplet(method)
    try:
        sol = solve_kkt(t, prob, steps - 1, opts)
    except KktSolveError:
        return ConvergenceRow(steps, math.nan, math.nan, None)
    ey, ep = extract_errors(sol, t, ref)
    return ConvergenceRow(steps, ey, ep, sol.iterations)


def run_convergence(problem: str, methods: list[str], steps: list[int],
                    opts: NewtonOptions | None = None, ref_steps: int = 1280,
                    threads: int | None = None) -> list[ConvergenceTable]:
    """Solve every (method, N+1) cell; failed solves become NaN cells.

    Cells run concurrently on up to ``threads`` workers; results are
    collected in input order, so output does not depend on scheduling.
    """
    if any(n < 4 for n in steps):
        raise ValueError("step counts N+1 must be >= 4")
    prob = get_problem(problem)
    opts = opts or preset_options(problem)
    steps = sorted(steps)
    refs = {n: reference_for(prob, n, ref_steps) for n in steps}
    jobs = [(m, n) for m in methods for n in steps]
    workers = max(1, min(threads or thread_count(), len(jobs)))
    if workers == 1:
        rows = [_cell(m, prob, n, opts, refs[n]) for m, n in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(lambda job: _cell(job[0], prob, job[1], opts, refs[job[1]]), jobs))
    return [ConvergenceTable(m, problem, rows[i * len(steps):(i + 1) * len(steps)])
            for i, m in enumerate(methods)]


# ---------------------------------------------------------------------------
# manifest


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    methods: list[str] = field(default_factory=list)
    problem: str | None = None
    steps: list[int] = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    determinism: str = ("no random numbers are used; replaying argv reproduces "
                        "byte-identical CSV output")

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path: str | Path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


def json_safe(x):
    """Replace NaN/inf by ``None`` and numpy scalars by Python numbers."""
    if isinstance(x, dict):
        return {k: json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [json_safe(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x
