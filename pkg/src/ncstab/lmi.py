"""Affine symmetric-matrix inequalities and a self-contained feasibility
solver.

A problem is F(z) = F0 + sum_i z_i F_i over block-diagonal symmetric terms;
"feasible" means a point with lambda_min(F(z)) >= eps was found and re-checked
by a direct eigenvalue evaluation, so a feasible verdict is never a solver
artifact. "infeasible" means no eps-feasible point was found at the required
accuracy inside very wide variable bounds -- this package never claims dual
infeasibility certificates.

The built-in backend maximizes t subject to F(z) - t*I >= 0 (plus the wide
box bounds that make the search compact) by damped-Newton path following on
the log-det barrier, stopping as soon as the margin target eps is reached.
An adapter for cvxpy is provided for cross-checking; it is optional and never
imported unless requested.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, NotStabilizableError, SolverUnknownError

__all__ = [
    "AffineMatrixInequality",
    "FeasibilityResult",
    "solve_feasibility",
    "min_eigenvalue",
    "bisect_lambda",
]

_BOX_BOUND = 1e9       # |z_i| < R keeps the barrier problem compact
_T_CAP = 1e12          # upper cap on the auxiliary margin variable
_SYM_TOL = 1e-10


@dataclass(frozen=True)
class AffineMatrixInequality:
    """F(z) = F0 + sum_i z_i F_i with block-diagonal symmetric terms.

    ``F0`` is a list with one constant matrix per block; ``coeffs`` holds, per
    block, an array of shape (p, d_b, d_b) stacking that block's coefficient
    matrix for each of the p scalar decision variables.
    """

    F0: list[np.ndarray]
    coeffs: list[np.ndarray]

    def __post_init__(self):
        if len(self.F0) != len(self.coeffs) or not self.F0:
            raise DimensionError("need one coefficient stack per block")
        p = self.coeffs[0].shape[0]
        for F, C in zip(self.F0, self.coeffs):
            d = F.shape[0]
            if F.shape != (d, d) or C.shape != (p, d, d):
                raise DimensionError("inconsistent block shapes")
            s = max(np.max(np.abs(F)), np.max(np.abs(C)) if C.size else 0.0, 1e-300)
            if np.max(np.abs(F - F.T)) > _SYM_TOL * s:
                raise DomainError("constant term is not symmetric")
            if C.size and np.max(np.abs(C - C.transpose(0, 2, 1))) > _SYM_TOL * s:
                raise DomainError("coefficient term is not symmetric")

    @classmethod
    def from_terms(cls, F0_blocks, variable_terms) -> "AffineMatrixInequality":
        """Build from a per-variable layout: variable_terms[i][b] is the
        block-b coefficient of variable i."""
        nblocks = len(F0_blocks)
        p = len(variable_terms)
        coeffs = []
        for b in range(nblocks):
            d = F0_blocks[b].shape[0]
            C = np.zeros((p, d, d))
            for i in range(p):
                C[i] = variable_terms[i][b]
            coeffs.append(C)
        return cls(F0=[np.asarray(F, dtype=float) for F in F0_blocks], coeffs=coeffs)

    @property
    def p(self) -> int:
        return self.coeffs[0].shape[0]

    @property
    def block_dims(self) -> list[int]:
        return [F.shape[0] for F in self.F0]

    @property
    def scale(self) -> float:
        s = max(np.max(np.abs(F)) for F in self.F0)
        for C in self.coeffs:
            if C.size:
                s = max(s, np.max(np.abs(C)))
        return float(s) if s > 0 else 1.0

    def blocks_at(self, z: np.ndarray) -> list[np.ndarray]:
        z = np.asarray(z, dtype=float)
        return [F + np.tensordot(z, C, axes=1) for F, C in zip(self.F0, self.coeffs)]


@dataclass(frozen=True)
class FeasibilityResult:
    """status is "feasible", "infeasible" or "unknown"; for a feasible result
    ``z`` is the decision vector and ``margin`` the directly re-computed
    minimum eigenvalue of F(z) across blocks."""

    status: str
    z: np.ndarray | None = None
    margin: float | None = None


def min_eigenvalue(problem: AffineMatrixInequality, z: np.ndarray) -> float:
    """Smallest eigenvalue of F(z) across all blocks (direct evaluation)."""
    return min(float(np.linalg.eigvalsh(B)[0]) for B in problem.blocks_at(z))


def solve_feasibility(
    problem: AffineMatrixInequality,
    eps: float | None = None,
    backend: str = "builtin",
    verbose: bool = False,
    z0: np.ndarray | None = None,
) -> FeasibilityResult:
    """Find z with F(z) >= eps*I, or report that none was found.

    eps defaults to 1e-7 times the largest coefficient magnitude, which makes
    the verdict invariant under a global rescaling of the problem. Every
    feasible verdict is certified by a fresh eigenvalue evaluation at the
    returned point. ``z0`` optionally warm-starts the built-in backend, e.g.
    with the witness of a neighboring problem during bisection.
    """
    if eps is None:
        eps = 1e-7 * problem.scale
    if backend == "builtin":
        status, z = _solve_builtin(problem, eps, verbose, z0)
        if status == "unknown" and z0 is not None:
            # a warm start can strand the path; the cold start is the reference
            status, z = _solve_builtin(problem, eps, verbose, None)
    elif backend == "cvxpy":
        status, z = _solve_cvxpy(problem, eps, verbose)
    else:
        raise DomainError(f"unknown backend {backend!r}")
    if status != "feasible":
        return FeasibilityResult(status=status)
    margin = min_eigenvalue(problem, z)
    if not margin > 0:
        # never report feasible on an uncertified point
        return FeasibilityResult(status="unknown")
    return FeasibilityResult(status="feasible", z=z, margin=margin)


def _solve_builtin(problem, eps, verbose, z0=None):
    """Damped-Newton path following on max t s.t. F(z) - t I >= 0, |z| < R.

    Works on data normalized by the problem scale. Early-exits as soon as the
    current iterate has true margin >= eps; declares infeasibility once the
    barrier duality gap shows the achievable margin stays below eps.
    """
    scale = problem.scale
    F0 = [F / scale for F in problem.F0]
    Cs = [C / scale for C in problem.coeffs]
    dims = problem.block_dims
    nblocks = len(F0)
    p = problem.p
    eps_n = eps / scale
    eyes = [np.eye(d) for d in dims]
    nu = sum(dims) + 2 * p + 1  # barrier parameter: blocks + box + t-cap

    def blocks(z, t):
        return [F0[b] + np.tensordot(z, Cs[b], axes=1) - t * eyes[b] for b in range(nblocks)]

    def true_margin(z):
        return min(float(np.linalg.eigvalsh(F0[b] + np.tensordot(z, Cs[b], axes=1))[0]) for b in range(nblocks))

    def in_domain(z, t):
        if not (np.all(np.abs(z) < _BOX_BOUND) and t < _T_CAP):
            return False
        for S in blocks(z, t):
            try:
                np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                return False
        return True

    z = np.zeros(p)
    if z0 is not None:
        z0 = np.asarray(z0, dtype=float)
        if z0.shape == (p,) and np.all(np.isfinite(z0)) and np.all(np.abs(z0) < 0.9 * _BOX_BOUND):
            z = z0.copy()
    t = true_margin(z) - 1.0
    eta = 1.0
    eta_final = nu / (0.05 * max(eps_n, 1e-14))
    best_t = t

    try:
        while True:
            centered = False
            for _ in range(150):  # Newton iterations at this eta
                Sb = blocks(z, t)
                Sinv = []
                for S in Sb:
                    try:
                        np.linalg.cholesky(S)
                    except np.linalg.LinAlgError:
                        return "unknown", None
                    Sinv.append(np.linalg.inv(S))
                g = np.zeros(p + 1)
                H = np.zeros((p + 1, p + 1))
                for b in range(nblocks):
                    ST = np.einsum("ij,pjk->pik", Sinv[b], Cs[b])
                    g[:p] -= np.einsum("ij,pij->p", Sinv[b], Cs[b])
                    g[p] += np.trace(Sinv[b])
                    H[:p, :p] += np.einsum("pij,qji->pq", ST, ST)
                    Hzt = -np.einsum("pij,ji->p", ST, Sinv[b])
                    H[:p, p] += Hzt
                    H[p, :p] += Hzt
                    H[p, p] += float(np.sum(Sinv[b] * Sinv[b]))
                g[:p] += 1.0 / (_BOX_BOUND - z) - 1.0 / (_BOX_BOUND + z)
                g[p] += 1.0 / (_T_CAP - t) - eta
                np.fill_diagonal(
                    H[:p, :p],
                    H.diagonal()[:p] + 1.0 / (_BOX_BOUND - z) ** 2 + 1.0 / (_BOX_BOUND + z) ** 2,
                )
                H[p, p] += 1.0 / (_T_CAP - t) ** 2
                # variables beyond the symmetric-space dimension leave the
                # log-det Hessian rank deficient; regularize (starting far
                # below the Hessian scale) until the step is a descent
                # direction
                # Jacobi equilibration keeps the solve meaningful when the
                # curvature spread is extreme (certificates with huge entries)
                d = np.sqrt(np.clip(H.diagonal(), 1e-300, None))
                D = 1.0 / d
                Hs = H * D[:, None] * D[None, :]
                gs = g * D
                reg = 1e-14 * (1.0 + float(np.max(Hs.diagonal())))
                step = None
                for _ in range(8):
                    try:
                        ys = np.linalg.solve(Hs + reg * np.eye(p + 1), -gs)
                        # one refinement sweep against the scaled residual
                        ys += np.linalg.solve(Hs + reg * np.eye(p + 1), -gs - Hs @ ys)
                    except np.linalg.LinAlgError:
                        reg *= 1e3
                        continue
                    cand = ys * D
                    if np.all(np.isfinite(cand)) and float(-g @ cand) > 0:
                        step = cand
                        break
                    reg *= 1e3
                if step is None:
                    # no descent direction found: either the gradient already
                    # vanished (centered) or the step computation broke down
                    centered = float(np.max(np.abs(g))) <= 1e-7 * (1.0 + eta)
                    break
                dec2 = float(-g @ step)
                # a Newton decrement below 1/2 keeps the duality-gap bound
                # t* - t <= (nu + sqrt(nu)/2)/eta <= 2 nu / eta valid
                if dec2 <= 0.25:
                    centered = True
                    break
                # damped step of self-concordant barriers: guaranteed to stay
                # interior and decrease the merit, so no line search on the
                # merit value is needed (it would drown in rounding at large
                # eta); the cholesky check only guards float corner cases
                alpha = 1.0 / (1.0 + np.sqrt(dec2))
                moved = False
                for _ in range(30):
                    zc = z + alpha * step[:p]
                    tc = t + alpha * step[p]
                    if in_domain(zc, tc):
                        z, t = zc, tc
                        moved = True
                        break
                    alpha *= 0.5
                if not moved:
                    break
                if t > best_t:
                    best_t = t
                if t >= eps_n and true_margin(z) >= eps_n:
                    if verbose:
                        print(f"[lmi] feasible at eta={eta:.1e}, margin target met")
                    return "feasible", z
            if true_margin(z) >= eps_n:
                return "feasible", z
            gap = nu / eta
            if verbose:
                print(f"[lmi] eta={eta:.1e} t={t:.3e} gap={gap:.1e} centered={centered}")
            if not centered:
                # the gap bound only certifies anything at an (approximate)
                # center; without one, no eps-feasible point was found but we
                # cannot rule one out either
                return "unknown", None
            if t + 2.0 * gap < eps_n:
                return "infeasible", None
            if eta >= eta_final:
                # achievable margin resolved below eps: no eps-feasible point
                return "infeasible", None
            eta = min(eta * 8.0, eta_final)
    except FloatingPointError:
        return "unknown", None


def _solve_cvxpy(problem, eps, verbose):
    """Optional conic-solver adapter (requires the cvxpy extra)."""
    try:
        import cvxpy as cp
    except ImportError as exc:
        raise SolverUnknownError(
            "cvxpy backend requested but cvxpy is not installed"
        ) from exc
    z = cp.Variable(problem.p)
    cons = []
    for F, C in zip(problem.F0, problem.coeffs):
        d = F.shape[0]
        expr = F + cp.sum([z[i] * C[i] for i in range(problem.p)])
        cons.append(expr >> eps * np.eye(d))
    prob = cp.Problem(cp.Minimize(0), cons)
    try:
        prob.solve(solver=cp.CLARABEL, verbose=verbose)
    except cp.error.SolverError:
        return "unknown", None
    if prob.status in ("optimal", "optimal_inaccurate"):
        return "feasible", np.asarray(z.value, dtype=float)
    if prob.status in ("infeasible", "infeasible_inaccurate"):
        return "infeasible", None
    return "unknown", None


def bisect_lambda(
    oracle,
    tol: float = 1e-3,
    lam_hi: float = 1.0 - 1e-6,
    lam_lo: float = 1e-4,
) -> tuple[float, FeasibilityResult]:
    """Smallest decay rate at which a monotone feasibility oracle succeeds.

    ``oracle(lam)`` must return a :class:`FeasibilityResult` and be monotone
    (feasible at lam implies feasible at every larger lam). Oracles may take
    an optional ``z0`` keyword; it receives the most recent feasible witness
    so neighboring probes can be warm-started. Returns the bracketed rate
    together with the witness solved at that rate; the final answer is within
    ``tol`` of the feasibility threshold.

    Raises :class:`NotStabilizableError` if the oracle fails at ``lam_hi``
    and :class:`SolverUnknownError` if any probe comes back undecided.
    """
    if not (0 < lam_lo < lam_hi):
        raise DomainError("need 0 < lam_lo < lam_hi")

    import inspect

    takes_z0 = "z0" in inspect.signature(oracle).parameters

    def probe(lam, warm):
        res = oracle(lam, z0=warm) if takes_z0 else oracle(lam)
        if res.status == "unknown":
            raise SolverUnknownError(f"solver undecided at lambda={lam}")
        return res

    res = probe(lam_hi, None)
    if res.status != "feasible":
        raise NotStabilizableError(
            f"infeasible at lambda={lam_hi} under the configured solver margin"
        )
    hi, witness = lam_hi, res
    res_lo = probe(lam_lo, witness.z)
    if res_lo.status == "feasible":
        return lam_lo, res_lo
    lo = lam_lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        res = probe(mid, witness.z)
        if res.status == "feasible":
            hi, witness = mid, res
        else:
            lo = mid
    return hi, witness
