"""Composite modified Riccati operator and its stability certificates.

With per-slot information rates lam_1..lam_m, the expected covariance
recursion is governed by the composite map

    riccati_map(X) = partial_update_m(... partial_update_1(time_update(X)))

where time_update(X) = A X A' + Q and each partial update shrinks by a
rate-weighted rank-one correction.  A fixed point of this map is the
steady-state proxy for the expected error covariance.

Two checks bracket mean-square stability:

* necessary:   prod(1 - lam_i) <= 1 / spectral_radius(A)^2
* sufficient:  existence of gains and a matrix Pt > 0 with
               Pt > riccati_envelope(gains, Pt)

The envelope functions (gain_envelope, cascade_envelope,
riccati_envelope) are affine in their matrix argument, touch the
composite map from above, and coincide with it at the optimal gains;
they are what turn the fixed-point analysis into linear-operator
arguments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._linalg import min_eig, sym
from .model import LinearSystem

__all__ = [
    "MareProblem", "FixedPointResult", "NecessaryCheck", "Certificate",
    "SufficientCheck", "MareReport",
    "time_update", "partial_update", "update_cascade", "riccati_map",
    "gain_envelope", "mixture_weights", "cascade_envelope",
    "riccati_envelope", "optimal_gains", "linear_part",
    "iterate_fixed_point", "necessary_check", "sufficient_check", "analyze",
]

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 100_000
DEFAULT_TRACE_CEILING = 1e12


@dataclass(frozen=True)
class MareProblem:
    """A system (diagonal R, possibly via whitening) plus per-slot rates."""

    system: LinearSystem
    info_rates: np.ndarray

    def __post_init__(self):
        rates = np.atleast_1d(np.asarray(self.info_rates, dtype=float))
        if rates.shape != (self.system.m,):
            raise ValueError(
                f"need one info rate per measurement slot ({self.system.m}), "
                f"got shape {rates.shape}"
            )
        if np.any(rates < 0.0) or np.any(rates > 1.0):
            raise ValueError("info rates must lie in [0, 1]")
        R = self.system.R
        off = R - np.diag(np.diag(R))
        if np.max(np.abs(off), initial=0.0) > 1e-12 * (1.0 + np.max(np.abs(R))):
            raise ValueError("R must be diagonal; whiten the system first")
        rates.setflags(write=False)
        object.__setattr__(self, "info_rates", rates)

    @property
    def m(self) -> int:
        return self.info_rates.size

    @property
    def n(self) -> int:
        return self.system.n


def time_update(X: np.ndarray, sys: LinearSystem) -> np.ndarray:
    """A X A' + Q, symmetrized."""
    return sym(sys.A @ X @ sys.A.T + sys.Q)


def partial_update(X: np.ndarray, rate: float, c: np.ndarray,
                   r: float) -> np.ndarray:
    """Rate-weighted scalar-measurement update:
    X - rate * (X c')(c X) / (c X c' + r)."""
    Xc = X @ c
    s = float(c @ Xc + r)
    return sym(X - rate * np.outer(Xc, Xc) / s)


def update_cascade(X: np.ndarray, problem: MareProblem) -> np.ndarray:
    """All m partial updates applied in slot order."""
    r = problem.system.r_diag()
    Y = X
    for i, rate in enumerate(problem.info_rates):
        Y = partial_update(Y, rate, problem.system.C[i], r[i])
    return Y


def riccati_map(X: np.ndarray, problem: MareProblem) -> np.ndarray:
    """One application of the composite map: cascade after time update."""
    return update_cascade(time_update(X, problem.system), problem)


def gain_envelope(L: np.ndarray, X: np.ndarray, rate: float, c: np.ndarray,
                  r: float) -> np.ndarray:
    """Affine-in-X envelope of one partial update at a fixed gain:

        (1 - rate) X + rate (E X E' + r L L'),   E = I + L c.

    Minimized over L at L = -Xc'(cXc'+r)^{-1}, where it equals
    partial_update(X).
    """
    n = X.shape[0]
    E = np.eye(n) + np.outer(L, c)
    return sym((1.0 - rate) * X + rate * (E @ X @ E.T + r * np.outer(L, L)))


def mixture_weights(rates: Sequence[float], s: int) -> np.ndarray:
    """Convex weights of the s-slot envelope recursion.

    weight[j] = lam_j * prod_{i=j+1..s} (1 - lam_i) with the convention
    lam_0 = 1; weight[s] = lam_s.  The s+1 weights sum to one exactly.
    """
    rates = np.asarray(rates, dtype=float)
    if s < 0 or s > rates.size:
        raise ValueError(f"s must lie in [0, {rates.size}], got {s}")
    lam = np.concatenate(([1.0], rates[:s]))
    w = np.empty(s + 1)
    suffix = 1.0
    for j in range(s, -1, -1):
        w[j] = lam[j] * suffix
        suffix *= 1.0 - lam[j]
    return w


def _envelope_tail(vals: list[np.ndarray], gains: Sequence[np.ndarray],
                   problem: MareProblem, with_noise: bool) -> list[np.ndarray]:
    """Run the weighted envelope recursion given its two seed matrices.

    vals must hold the stage -1 and stage 0 matrices; stages 1..m are
    appended.  with_noise=False drops the r L L' terms, which is what
    makes the recursion the linear part of the full envelope.
    """
    sysm = problem.system
    r = sysm.r_diag()
    n = problem.n
    eye = np.eye(n)
    E = [eye] + [eye + np.outer(gains[j - 1], sysm.C[j - 1])
                 for j in range(1, problem.m + 1)]
    for s in range(1, problem.m + 1):
        w = mixture_weights(problem.info_rates, s)
        acc = w[0] * vals[0]
        for j in range(1, s + 1):
            term = E[j] @ vals[j] @ E[j].T
            if with_noise:
                term = term + r[j - 1] * np.outer(gains[j - 1], gains[j - 1])
            acc = acc + w[j] * term
        vals.append(sym(acc))
    return vals


def cascade_envelope(gains: Sequence[np.ndarray], X: np.ndarray,
                     problem: MareProblem) -> np.ndarray:
    """Affine envelope of the m-slot update cascade at fixed gains.

    Touches update_cascade(X) at the optimal gains and dominates it for
    every other gain tuple.
    """
    if len(gains) != problem.m:
        raise ValueError(f"expected {problem.m} gains, got {len(gains)}")
    X = sym(np.asarray(X, dtype=float))
    vals = _envelope_tail([X, X], gains, problem, with_noise=True)
    return vals[-1]


def riccati_envelope(gains: Sequence[np.ndarray], X: np.ndarray,
                     problem: MareProblem) -> np.ndarray:
    """Affine envelope of the full composite map: the cascade envelope
    seeded with the time update of X."""
    if len(gains) != problem.m:
        raise ValueError(f"expected {problem.m} gains, got {len(gains)}")
    H = time_update(np.asarray(X, dtype=float), problem.system)
    vals = _envelope_tail([H, H], gains, problem, with_noise=True)
    return vals[-1]


def linear_part(Y: np.ndarray, gains: Sequence[np.ndarray],
                problem: MareProblem) -> np.ndarray:
    """The linear-in-X part of riccati_envelope as an operator applied to Y.

    Strips Q and all gain-noise terms, so riccati_envelope(gains, X)
    minus linear_part(X, gains) is a constant PSD matrix.  Contractivity
    of this operator at certificate gains is what forces fixed-point
    iterates together.
    """
    if len(gains) != problem.m:
        raise ValueError(f"expected {problem.m} gains, got {len(gains)}")
    sysm = problem.system
    H = sym(sysm.A @ np.asarray(Y, dtype=float) @ sysm.A.T)
    vals = _envelope_tail([H, H], gains, problem, with_noise=False)
    return vals[-1]


def optimal_gains(X: np.ndarray, problem: MareProblem) -> list[np.ndarray]:
    """Sequentially optimal envelope gains at X.

    Gain j is the minimizer -T c'(c T c' + r)^{-1} evaluated at the
    running cascade value T, so plugging the result back into
    cascade_envelope reproduces update_cascade(X).
    """
    sysm = problem.system
    r = sysm.r_diag()
    T = sym(np.asarray(X, dtype=float))
    gains: list[np.ndarray] = []
    for i, rate in enumerate(problem.info_rates):
        c = sysm.C[i]
        Tc = T @ c
        gains.append(-Tc / float(c @ Tc + r[i]))
        T = partial_update(T, rate, c, r[i])
    return gains


@dataclass
class FixedPointResult:
    status: str                       # "converged", "diverged", "undetermined"
    fixed_point: Optional[np.ndarray]
    iterations: int
    trace_history: np.ndarray

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def iterate_fixed_point(problem: MareProblem, X0: Optional[np.ndarray] = None,
                        tol: float = DEFAULT_TOL,
                        max_iter: int = DEFAULT_MAX_ITER,
                        trace_ceiling: float = DEFAULT_TRACE_CEILING,
                        ) -> FixedPointResult:
    """Iterate the composite map from X0 (default 0) to a fixed point.

    Convergence is declared when the successive-iterate max-norm drops
    to ``tol``; divergence when the trace passes ``trace_ceiling`` or
    the trace is still growing monotonically when ``max_iter`` runs out.
    Anything else is reported as undetermined rather than guessed.
    """
    if tol <= 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    n = problem.n
    X = np.zeros((n, n)) if X0 is None else sym(np.asarray(X0, dtype=float))
    traces = [float(np.trace(X))]
    for it in range(1, max_iter + 1):
        Xn = riccati_map(X, problem)
        tr = float(np.trace(Xn))
        traces.append(tr)
        if not np.isfinite(tr) or tr > trace_ceiling:
            return FixedPointResult("diverged", None, it, np.asarray(traces))
        if float(np.max(np.abs(Xn - X))) <= tol:
            return FixedPointResult("converged", Xn, it, np.asarray(traces))
        X = Xn
    tail = traces[-10:]
    growing = all(b > a for a, b in zip(tail, tail[1:]))
    status = "diverged" if growing else "undetermined"
    return FixedPointResult(status, None, max_iter, np.asarray(traces))


@dataclass(frozen=True)
class NecessaryCheck:
    ok: bool
    lhs: float      # prod(1 - lam_i)
    rhs: float      # 1 / spectral_radius(A)^2


def necessary_check(problem: MareProblem) -> NecessaryCheck:
    """Spectral-radius bound every bounded-covariance configuration obeys."""
    lhs = float(np.prod(1.0 - problem.info_rates))
    rho = float(np.max(np.abs(np.linalg.eigvals(problem.system.A))))
    rhs = np.inf if rho == 0.0 else 1.0 / (rho * rho)
    return NecessaryCheck(ok=bool(lhs <= rhs), lhs=lhs, rhs=float(rhs))


@dataclass(frozen=True)
class Certificate:
    """Witness of the sufficient condition: feasible gains and a strictly
    feasible matrix with its feasibility margin (min eigenvalue of
    matrix - riccati_envelope(gains, matrix))."""

    gains: list
    matrix: np.ndarray
    margin: float


@dataclass(frozen=True)
class SufficientCheck:
    ok: bool
    certificate: Optional[Certificate]


# Inflation ladder for the certificate search, as multiples of the
# fixed point's mean eigenvalue.
_LADDER = (1e-6, 1e-4, 1e-2, 1.0)


def sufficient_check(problem: MareProblem, margin_tol: float = 0.0,
                     fixed_point: Optional[FixedPointResult] = None,
                     ) -> SufficientCheck:
    """Search for a stability certificate.

    The condition is an existence statement, so this is a heuristic
    search, not a decision procedure: take the fixed point reached from
    0, extract its optimal envelope gains, and inflate the fixed point
    along a geometric ladder until the envelope inequality becomes
    strict.  A False result therefore means "no certificate found", not
    "condition violated".
    """
    fp = fixed_point if fixed_point is not None else iterate_fixed_point(problem)
    if not fp.converged:
        return SufficientCheck(ok=False, certificate=None)
    P_bar = fp.fixed_point
    gains = optimal_gains(time_update(P_bar, problem.system), problem)
    n = problem.n
    scale = float(np.trace(P_bar)) / n
    if scale <= 0.0:
        scale = 1.0
    for c in _LADDER:
        Pt = P_bar + (c * scale) * np.eye(n)
        margin = min_eig(Pt - riccati_envelope(gains, Pt, problem))
        if margin > margin_tol:
            if min_eig(Pt) <= 0.0:
                # A feasible certificate matrix is necessarily PD; hitting
                # this would mean the envelope algebra is broken.
                raise AssertionError("certificate matrix is not positive definite")
            return SufficientCheck(ok=True, certificate=Certificate(
                gains=gains, matrix=Pt, margin=float(margin)))
    return SufficientCheck(ok=False, certificate=None)


@dataclass
class MareReport:
    """Everything the stability analysis produced, JSON-serializable."""

    status: str
    fixed_point: Optional[np.ndarray]
    iterations: int
    trace_history: np.ndarray
    necessary: Optional[NecessaryCheck] = None
    sufficient: Optional[SufficientCheck] = None
    messages: list = field(default_factory=list)

    @property
    def necessary_ok(self) -> Optional[bool]:
        return None if self.necessary is None else self.necessary.ok

    @property
    def sufficient_ok(self) -> Optional[bool]:
        return None if self.sufficient is None else self.sufficient.ok

    def to_json_dict(self) -> dict:
        fp = None if self.fixed_point is None else self.fixed_point.tolist()
        nec = None
        if self.necessary is not None:
            nec = {"lhs": self.necessary.lhs, "rhs": self.necessary.rhs,
                   "ok": self.necessary.ok}
        suf = None
        if self.sufficient is not None:
            cert = self.sufficient.certificate
            suf = {
                "ok": self.sufficient.ok,
                "margin": None if cert is None else cert.margin,
                "gains": None if cert is None else [g.tolist() for g in cert.gains],
                "p_tilde": None if cert is None else cert.matrix.tolist(),
            }
        return {
            "status": self.status,
            "fixed_point": fp,
            "iterations": self.iterations,
            "trace_history": [float(t) for t in self.trace_history],
            "necessary": nec,
            "sufficient": suf,
            "messages": list(self.messages),
        }


def analyze(problem: MareProblem, tol: float = DEFAULT_TOL,
            max_iter: int = DEFAULT_MAX_ITER,
            trace_ceiling: float = DEFAULT_TRACE_CEILING,
            margin_tol: float = 0.0,
            run_iterate: bool = True, run_necessary: bool = True,
            run_sufficient: bool = True) -> MareReport:
    """Run the selected stability analyses and bundle the results."""
    messages: list = []
    if run_iterate or run_sufficient:
        fp = iterate_fixed_point(problem, tol=tol, max_iter=max_iter,
                                 trace_ceiling=trace_ceiling)
    else:
        fp = FixedPointResult("skipped", None, 0, np.asarray([]))
    if fp.converged and fp.fixed_point is not None:
        if min_eig(fp.fixed_point) <= 0.0:
            if min_eig(problem.system.Q) > 0.0:
                # With full-rank process noise the limit of the monotone
                # iteration is strictly positive definite; anything else
                # means the operator algebra is broken.
                raise AssertionError("fixed point is not positive definite "
                                     "despite Q > 0")
            # Possible when Q is singular PSD; recorded, not fatal.
            messages.append("fixed point is singular positive semidefinite")
    report = MareReport(status=fp.status, fixed_point=fp.fixed_point,
                        iterations=fp.iterations, trace_history=fp.trace_history,
                        messages=messages)
    if run_necessary:
        report.necessary = necessary_check(problem)
    if run_sufficient:
        report.sufficient = sufficient_check(problem, margin_tol=margin_tol,
                                             fixed_point=fp)
    return report
