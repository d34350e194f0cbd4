"""Modulation-vector design by semidefinite relaxation.

For every pair of multiset classes with different function values we require
the two superposed constellation points to be separated,

    |d^T x|^2 >= gamma * |f_i - f_j|^2,   d = counts_i - counts_j,

under the power constraint ``||x||^2 = P``.  Lifting ``X = x x^H`` makes every
constraint linear in ``X``; dropping ``rank(X) = 1`` leaves a convex program
over the PSD cone.  A modulation vector is read back from ``X`` either directly
(rank one) or by Gaussian randomization, and can then be polished locally.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import cvxpy as cp
import numpy as np

from .functions import MultisetClass

__all__ = [
    "FEASIBILITY_EPS",
    "GAMMA_FLOOR",
    "ConstraintPair",
    "DesignProblem",
    "LiftedSolution",
    "ModulationDesign",
    "FeasibilityReport",
    "InfeasibleDesign",
    "assemble_problem",
    "choose_gamma",
    "solve_relaxation",
    "extract_modulation",
    "refine_modulation",
    "verify_exact_feasibility",
    "margin",
    "normalized_margin",
    "design_modulation",
    "save_design",
    "load_design",
]

logger = logging.getLogger(__name__)

FEASIBILITY_EPS = 1e-6
GAMMA_FLOOR = 1e-12
RANK_ONE_RATIO = 1e-6
# above this many distinct constraint directions the SDP is solved by constraint generation
DIRECT_LIMIT = 20_000
_CHUNK = 1 << 16


def _solve(prob: cp.Problem, solver: str | None) -> None:
    # inaccurate solutions are judged by our own violation checks, not the solver's warning
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        prob.solve(solver=solver or cp.CLARABEL)
    for w in caught:
        logger.debug("solver: %s", w.message)


class InfeasibleDesign(RuntimeError):
    """No modulation vector satisfying the separation constraints was found."""


@dataclass(frozen=True)
class ConstraintPair:
    i: int
    j: int
    diff: tuple[int, ...]
    g: float


@dataclass(frozen=True)
class DesignProblem:
    """Separation constraints for one function, stored column-wise.

    ``i[n], j[n]`` index the class list the problem was assembled from,
    ``diffs[n]`` is ``counts_i - counts_j`` and ``g[n]`` the required squared
    separation.
    """

    q: int
    P: float
    gamma: float
    i: np.ndarray = field(repr=False)
    j: np.ndarray = field(repr=False)
    diffs: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.P > 0:
            raise ValueError("P must be positive")

    def __len__(self):
        return len(self.g)

    @property
    def pairs(self) -> list[ConstraintPair]:
        return [
            ConstraintPair(int(a), int(b), tuple(int(v) for v in d), float(g))
            for a, b, d, g in zip(self.i, self.j, self.diffs, self.g)
        ]

    @cached_property
    def directions(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct constraint directions and their binding requirement.

        ``d`` and ``-d`` give the same constraint matrix ``d d^T`` and only the
        largest ``g`` along a direction binds, so one row per direction up to
        sign is enough for every quantity computed from the constraints.
        """
        if len(self) == 0:
            return np.zeros((0, self.q), dtype=self.diffs.dtype), np.zeros(0)
        d = self.diffs
        lead = d[np.arange(len(d)), np.argmax(d != 0, axis=1)]
        d = np.where((lead < 0)[:, None], -d, d)
        span = 2 * int(np.abs(d).max()) + 1
        if span ** self.q < 2**62:
            # pack each row into one integer; far faster than a row-wise unique
            keys = np.zeros(len(d), dtype=np.int64)
            for col in range(self.q):
                keys = keys * span + (d[:, col].astype(np.int64) + span // 2)
            _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
            uniq = d[first]
        else:
            uniq, inverse = np.unique(d, axis=0, return_inverse=True)
        g = np.full(len(uniq), -np.inf)
        np.maximum.at(g, inverse.ravel(), self.g)
        return uniq, g

    def structural_conflicts(self) -> list[ConstraintPair]:
        """Pairs with ``d = 0`` and ``g > 0``, which no modulation can separate."""
        bad = np.flatnonzero(~self.diffs.any(axis=1) & (self.g > 0))
        return [
            ConstraintPair(int(self.i[k]), int(self.j[k]), tuple(int(v) for v in self.diffs[k]), float(self.g[k]))
            for k in bad
        ]


def assemble_problem(classes: list[MultisetClass], gamma: float, P: float) -> DesignProblem:
    """One constraint per unordered class pair whose values differ."""
    counts = np.array([c.counts for c in classes], dtype=np.int16)
    values = np.array([c.value for c in classes], dtype=float)
    a, b = np.triu_indices(len(classes), k=1)
    keep = values[a] != values[b]
    a, b = a[keep].astype(np.int32), b[keep].astype(np.int32)
    q = counts.shape[1]
    dtype = np.int8 if counts.max(initial=0) < 128 else np.int16
    return DesignProblem(
        q=q,
        P=float(P),
        gamma=float(gamma),
        i=a,
        j=b,
        diffs=(counts[a] - counts[b]).astype(dtype).reshape(-1, q),
        g=gamma * (values[a] - values[b]) ** 2,
    )


def choose_gamma(classes: list[MultisetClass], P: float, K: int | None = None) -> float:
    """Default normalization ``gamma = P / (2 K^2 max|df|^2)``.

    Returns ``GAMMA_FLOOR`` when the function is constant.
    """
    values = np.array([c.value for c in classes])
    spread = values.max() - values.min() if len(values) else 0.0
    if spread == 0:
        return GAMMA_FLOOR
    if K is None:
        K = sum(classes[0].counts)
    return P / (2 * K**2 * spread**2)


def _project(D: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``D @ x`` for integer ``D`` and complex ``x``, without a full complex copy of ``D``."""
    x = np.asarray(x, dtype=complex)
    out = np.empty((len(D),) + x.shape[1:], dtype=complex)
    for lo in range(0, len(D), _CHUNK):
        Dc = D[lo:lo + _CHUNK].astype(float)
        out[lo:lo + _CHUNK] = Dc @ x.real + 1j * (Dc @ x.imag)
    return out


def _quad(D: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Row-wise ``d^T R d``."""
    out = np.empty(len(D))
    for lo in range(0, len(D), _CHUNK):
        Dc = D[lo:lo + _CHUNK].astype(float)
        out[lo:lo + _CHUNK] = np.einsum("ni,ni->n", Dc @ R, Dc)
    return out


@dataclass
class LiftedSolution:
    X: np.ndarray
    status: str
    max_violation: float
    eigenratio: float
    slack: float = float("nan")
    conflicts: list[ConstraintPair] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


def _eigenratio(X: np.ndarray) -> float:
    w = np.linalg.eigvalsh(X)
    if w[-1] <= 0:
        return float("nan")
    return float(max(w[-2], 0.0) / w[-1]) if len(w) > 1 else 0.0


def _unembed(Z: np.ndarray) -> np.ndarray:
    q = Z.shape[0] // 2
    re = 0.5 * (Z[:q, :q] + Z[q:, q:])
    im = 0.5 * (Z[q:, :q] - Z[:q, q:])
    X = re + 1j * im
    return 0.5 * (X + X.conj().T)


def _solve_embedded(D: np.ndarray, g: np.ndarray, q: int, P: float, solver: str | None):
    Z = cp.Variable((2 * q, 2 * q), PSD=True)
    t = cp.Variable()
    Dm = D.astype(float)
    lhs = cp.sum(cp.multiply(Dm @ Z[:q, :q], Dm), axis=1)
    cons = [
        Z[:q, :q] == Z[q:, q:],
        Z[q:, :q] == -Z[q:, :q].T,
        cp.trace(Z) == 2 * P,
        lhs >= g + t,
    ]
    prob = cp.Problem(cp.Maximize(t), cons)
    _solve(prob, solver)
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or Z.value is None:
        raise cp.SolverError(f"solver status {prob.status}")
    return Z.value, float(t.value)


def solve_relaxation(
    problem: DesignProblem,
    tol: float = 1e-7,
    solver: str | None = None,
    direct_limit: int = DIRECT_LIMIT,
    max_rounds: int = 50,
) -> LiftedSolution:
    """Solve the relaxed lifted program.

    The Hermitian ``q x q`` unknown is carried as the real symmetric block
    matrix ``[[Re X, -Im X], [Im X, Re X]]`` so any real PSD-cone solver
    applies.  The objective maximizes a uniform slack ``t`` on all separation
    constraints; the problem is feasible iff ``t* >= 0``.

    With more than ``direct_limit`` distinct directions the program is solved
    by constraint generation: solve on a working set, add every direction whose
    slack falls below the working optimum, repeat until none does.
    """
    q, P = problem.q, problem.P
    conflicts = problem.structural_conflicts()
    if conflicts:
        return LiftedSolution(np.zeros((q, q), complex), "infeasible", float(max(c.g for c in conflicts)),
                              float("nan"), conflicts=conflicts)

    D, g = problem.directions
    if len(g) == 0:
        X = (P / q) * np.eye(q, dtype=complex)
        return LiftedSolution(X, "feasible", 0.0, _eigenratio(X), slack=float("inf"))

    if len(g) <= direct_limit:
        work = np.arange(len(g))
    else:
        # seed with the most demanding directions relative to their length
        score = g / np.sum(D.astype(float) ** 2, axis=1)
        work = np.sort(np.argpartition(-score, direct_limit // 2)[: direct_limit // 2])
    try:
        for rnd in range(max_rounds):
            Z, t = _solve_embedded(D[work], g[work], q, P, solver)
            if len(work) == len(g):
                break
            slack = _quad(D, 0.5 * (Z[:q, :q] + Z[q:, q:])) - g
            low = np.flatnonzero(slack < t - tol * max(1.0, abs(t)))
            low = np.setdiff1d(low, work, assume_unique=True)
            logger.debug("constraint generation round %d: %d working, %d below slack", rnd, len(work), len(low))
            if len(low) == 0:
                break
            add = low[np.argsort(slack[low])[: direct_limit // 2]]
            work = np.union1d(work, add)
        else:
            raise cp.SolverError("constraint generation did not converge")
    except cp.SolverError as exc:
        logger.warning("SDP solver failed: %s", exc)
        return LiftedSolution(np.zeros((q, q), complex), "numerical-failure", float("inf"), float("nan"))

    X = _unembed(Z)
    # clip round-off negative eigenvalues, then restore the trace exactly
    w, V = np.linalg.eigh(X)
    X = (V * np.clip(w, 0.0, None)) @ V.conj().T
    X = 0.5 * (X + X.conj().T) * (P / np.trace(X).real)

    viol = float(max(0.0, np.max(g - _quad(D, X.real))))
    status = "feasible" if viol <= tol else "infeasible"
    if status == "infeasible":
        logger.info("relaxation infeasible: slack %.3g, max violation %.3g", t, viol)
    return LiftedSolution(X, status, viol, _eigenratio(X), slack=t)


def margin(x, problem: DesignProblem) -> float:
    """``min |d^T x|^2 - g`` over the constraints (``+inf`` with none)."""
    if len(problem) == 0:
        return float("inf")
    D, g = problem.directions
    return float(np.min(np.abs(_project(D, x)) ** 2 - g))


def normalized_margin(x, problem: DesignProblem, eps: float = 1e-300) -> float:
    """``min (|d^T x|^2 - g) / max(g, eps)``; the randomization selection score."""
    if len(problem) == 0:
        return float("inf")
    D, g = problem.directions
    return float(np.min((np.abs(_project(D, x)) ** 2 - g) / np.maximum(g, eps)))


@dataclass
class FeasibilityReport:
    passed: bool
    threshold: float
    min_distance: float
    violations: list[dict]

    def __bool__(self):
        return self.passed


def verify_exact_feasibility(x, classes: list[MultisetClass], epsilon: float = FEASIBILITY_EPS) -> FeasibilityReport:
    """Check that classes with different values land on distinct points.

    Two points count as distinct when they are more than ``epsilon * sqrt(P)``
    apart, ``P = ||x||^2``.
    """
    x = np.asarray(x, dtype=complex)
    P = float(np.vdot(x, x).real)
    if P <= 0:
        raise ValueError("modulation vector must be nonzero")
    counts = np.array([c.counts for c in classes], dtype=float)
    values = np.array([c.value for c in classes])
    s = counts @ x
    thr = epsilon * np.sqrt(P)
    min_dist = np.inf
    violations = []
    n = len(classes)
    # one row of the upper triangle at a time keeps memory linear in the class count
    for a in range(n - 1):
        b = np.arange(a + 1, n)
        b = b[values[b] != values[a]]
        if len(b) == 0:
            continue
        dist = np.abs(s[b] - s[a])
        min_dist = min(min_dist, float(dist.min()))
        for k in np.flatnonzero(dist <= thr):
            violations.append({
                "i": a,
                "j": int(b[k]),
                "levels_i": classes[a].levels,
                "levels_j": classes[b[k]].levels,
                "value_i": float(values[a]),
                "value_j": float(values[b[k]]),
                "distance": float(dist[k]),
            })
    return FeasibilityReport(not violations, float(thr), float(min_dist), violations)


@dataclass
class ModulationDesign:
    x: np.ndarray
    P: float
    gamma: float
    margin: float
    exact_feasible: bool
    provenance: str
    q: int = field(init=False)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=complex)
        self.q = len(self.x)

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "P": self.P,
            "gamma": self.gamma,
            "x_re": self.x.real.tolist(),
            "x_im": self.x.imag.tolist(),
            "margin": self.margin if np.isfinite(self.margin) else None,
            "exact_feasible": bool(self.exact_feasible),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModulationDesign":
        x = np.asarray(data["x_re"], float) + 1j * np.asarray(data["x_im"], float)
        if len(x) != int(data["q"]):
            raise ValueError("x length does not match q")
        m = data.get("margin")
        return cls(
            x=x,
            P=float(data["P"]),
            gamma=float(data["gamma"]),
            margin=float("inf") if m is None else float(m),
            exact_feasible=bool(data["exact_feasible"]),
            provenance=data.get("provenance", "manual"),
        )


def save_design(design: ModulationDesign, path) -> None:
    Path(path).write_text(json.dumps(design.to_dict(), indent=2))


def load_design(path) -> ModulationDesign:
    return ModulationDesign.from_dict(json.loads(Path(path).read_text()))


def _fix_phase(x: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(x) > 1e-12 * np.max(np.abs(x)))
    if len(nz) == 0:
        return x
    lead = x[nz[0]]
    x = x * (np.conj(lead) / abs(lead))
    x[nz[0]] = abs(lead)
    return x


def _normalize(x: np.ndarray, P: float) -> np.ndarray:
    return x * np.sqrt(P / np.vdot(x, x).real)


def _finish(x, problem, classes, provenance) -> ModulationDesign:
    x = _normalize(_fix_phase(np.asarray(x, dtype=complex)), problem.P)
    m = margin(x, problem)
    ok = m > 0
    if classes is not None and ok:
        ok = verify_exact_feasibility(x, classes).passed
    return ModulationDesign(x=x, P=problem.P, gamma=problem.gamma, margin=m, exact_feasible=bool(ok),
                            provenance=provenance)


def _scores(cand: np.ndarray, D: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Worst ratio ``|d^T x|^2 / g`` of every candidate column."""
    scores = np.full(cand.shape[1], np.inf)
    inv = 1.0 / np.maximum(g, 1e-300)
    step = max(1, 4_000_000 // cand.shape[1])
    for lo in range(0, len(D), step):
        Dc = D[lo:lo + step].astype(float)
        re, im = Dc @ cand.real, Dc @ cand.imag
        val = (re * re + im * im) * inv[lo:lo + step, None]
        np.minimum(scores, val.min(axis=0), out=scores)
    return scores


def _best_candidate(cand: np.ndarray, D: np.ndarray, g: np.ndarray, screen: int = 50_000) -> int:
    """Index of the column with the largest normalized margin (first on ties).

    Large constraint sets are searched exactly by bounding: scores on a subset
    of directions are upper bounds of the full scores, so candidates are fully
    scored in decreasing bound order until no bound can beat the incumbent.
    """
    if len(g) <= 2 * screen:
        return int(np.argmax(_scores(cand, D, g)))
    tight = np.argpartition(-(g / np.sum(D.astype(float) ** 2, axis=1)), screen)[:screen]
    bound = _scores(cand, D[tight], g[tight])
    best, best_score = -1, -np.inf
    for c in sorted(range(cand.shape[1]), key=lambda k: (-bound[k], k)):
        if bound[c] < best_score:
            break
        sc = _scores(cand[:, c:c + 1], D, g)[0]
        if sc > best_score or (sc == best_score and c < best):
            best, best_score = c, sc
    return best


def extract_modulation(
    solution: LiftedSolution,
    problem: DesignProblem,
    n_rand: int = 1000,
    seed: int | np.random.SeedSequence | None = 0,
    classes: list[MultisetClass] | None = None,
) -> ModulationDesign:
    """Read a modulation vector back from the lifted solution.

    Near rank-one solutions use the scaled top eigenvector.  Otherwise
    ``n_rand`` circularly-symmetric Gaussian vectors with covariance ``X`` are
    drawn, rescaled to power ``P`` and the one with the largest normalized
    margin is kept; the top eigenvector competes as one extra candidate.
    ``exact_feasible`` needs a positive margin and, when ``classes`` are
    supplied, a passing exact feasibility check.
    """
    if not solution.feasible:
        raise InfeasibleDesign(f"cannot extract from a {solution.status} relaxation")
    P, q = problem.P, problem.q
    w, V = np.linalg.eigh(solution.X)
    ratio = solution.eigenratio
    if np.isfinite(ratio) and ratio <= RANK_ONE_RATIO:
        return _finish(np.sqrt(max(w[-1], 0.0)) * V[:, -1], problem, classes, "rank-one")

    rng = np.random.default_rng(seed)
    root = V * np.sqrt(np.clip(w, 0.0, None))
    W = (rng.standard_normal((q, n_rand)) + 1j * rng.standard_normal((q, n_rand))) / np.sqrt(2)
    cand = np.column_stack([root @ W, V[:, -1]])
    cand *= np.sqrt(P / np.sum(np.abs(cand) ** 2, axis=0))
    D, g = problem.directions
    best = _best_candidate(cand, D, g) if len(g) else 0
    return _finish(cand[:, best], problem, classes, "randomized")


def _sca_step(x0, D, g, P, rho0, solver):
    """One convex step: maximize the worst linearized ratio ``|d^T x|^2 / g``.

    ``|a|^2 >= 2 Re(conj(a0) a) - |a0|^2`` holds for every ``a``, so any point
    feasible for the linearized rows is feasible for the true ones.
    """
    q = len(x0)
    a0 = _project(D, x0)
    Df = D.astype(float)
    scale = 1.0 / (g * rho0)
    G = np.hstack([Df * (2 * a0.real * scale)[:, None], Df * (2 * a0.imag * scale)[:, None]])
    c = np.abs(a0) ** 2 * scale
    z = cp.Variable(2 * q)
    r = cp.Variable()
    prob = cp.Problem(cp.Maximize(r), [G @ z - c >= r, cp.norm(z) <= np.sqrt(P)])
    _solve(prob, solver)
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or z.value is None:
        return None, None
    return z.value[:q] + 1j * z.value[q:], float(r.value) * rho0


def refine_modulation(
    x,
    problem: DesignProblem,
    max_iter: int = 40,
    rtol: float = 1e-4,
    working: int = 4000,
    solver: str | None = None,
) -> np.ndarray:
    """Locally increase the normalized margin of ``x`` by successive convex steps.

    Each step replaces every ``|d^T x|^2`` by its tangent lower bound at the
    current point and solves the resulting second-order cone program under
    ``||x||^2 <= P``.  Only the ``working`` tightest directions enter a step; a
    step is accepted only if the true worst ratio over all directions improves,
    so the normalized margin never decreases.
    """
    D, g = problem.directions
    P = problem.P
    x = _normalize(np.asarray(x, dtype=complex), P)
    if len(g) == 0:
        return x
    g = np.maximum(g, 1e-300)
    ratio = np.abs(_project(D, x)) ** 2 / g
    rho = ratio.min()
    if rho <= 0:
        return x
    for _ in range(max_iter):
        work = np.argsort(ratio)[:working] if len(g) > working else np.arange(len(g))
        for _inner in range(10):
            x_new, predicted = _sca_step(x, D[work], g[work], P, rho, solver)
            if x_new is None:
                return x
            x_new = _normalize(x_new, P)
            ratio_new = np.abs(_project(D, x_new)) ** 2 / g
            missed = np.setdiff1d(np.flatnonzero(ratio_new < predicted * (1 - 1e-9)), work)
            if len(missed) == 0:
                break
            work = np.union1d(work, missed[np.argsort(ratio_new[missed])[:working]])
        rho_new = ratio_new.min()
        if rho_new <= rho * (1 + rtol):
            if rho_new > rho:
                x, rho = x_new, rho_new
            break
        x, ratio, rho = x_new, ratio_new, rho_new
    return x


def design_modulation(
    classes: list[MultisetClass],
    P: float | None = None,
    gamma: float | None = None,
    n_rand: int = 1000,
    seed: int | None = 0,
    max_halvings: int = 20,
    tol: float = 1e-7,
    refine: bool = True,
) -> ModulationDesign:
    """Full pipeline: choose gamma, solve the relaxation, extract and polish ``x``.

    Gamma is halved whenever the relaxation is infeasible or the extracted
    vector misses the separation constraints, up to ``max_halvings`` times.
    ``P`` defaults to ``q`` (unit average symbol energy).  When every attempt
    fails the last design is returned with ``exact_feasible = False``.
    """
    q = len(classes[0].counts)
    P = float(q if P is None else P)
    gamma = choose_gamma(classes, P) if gamma is None else float(gamma)
    design = None
    for attempt in range(max_halvings + 1):
        problem = assemble_problem(classes, gamma, P)
        sol = solve_relaxation(problem, tol=tol)
        if sol.feasible:
            design = extract_modulation(sol, problem, n_rand=n_rand, seed=seed, classes=classes)
            if refine and design.provenance == "randomized":
                x = refine_modulation(design.x, problem)
                polished = _finish(x, problem, classes, "randomized")
                if normalized_margin(polished.x, problem) >= normalized_margin(design.x, problem):
                    design = polished
            if design.exact_feasible:
                return design
        elif sol.conflicts or sol.status == "numerical-failure":
            break
        gamma /= 2
    if design is None:
        raise InfeasibleDesign(f"no feasible relaxation after {attempt} gamma halvings ({sol.status})")
    return design
