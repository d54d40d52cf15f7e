"""Stability analysis and state-feedback synthesis for the delayed loop.

Both directions reduce to linear matrix inequalities in which the expectation
over the random sampling interval is carried exactly by the stacked moment
factors from :mod:`ncstab.moments`:

analysis   given a gain, certify a decay rate lambda via
           lam^2 P - Gtilde^T (P kron I) Gtilde >= 0,  P >= I,

synthesis  find a gain by solving, in (X, Y),
           [[lam^2 X,  (GA X + GB Y)^T ],
            [GA X + GB Y,  X kron I    ]] >= eps,      X >= I,
           and recovering Fhat = Y X^{-1}.

``P >= I`` / ``X >= I`` pin down the scaling direction along which both
inequalities are positively homogeneous; this costs no generality and keeps
the feasibility search compact. The smallest workable lambda is located by
bisection, re-assembling the inequality at each probe.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .delays import DelayModel, check_second_moment_condition, derive_rng
from .errors import DimensionError, DomainError, NotStabilizableError, NotStableError
from .lmi import AffineMatrixInequality, FeasibilityResult, bisect_lambda, solve_feasibility
from .moments import (
    ClosedLoopTildeFactor,
    TildeFactors,
    estimate_closedloop_moment,
    estimate_synthesis_moment,
    factorize,
    reduced_factors,
    reshape_closedloop,
    reshape_tilde,
)
from .plant import ContinuousPlant

__all__ = [
    "Gain",
    "SynthesisResult",
    "AnalysisResult",
    "VerifyReport",
    "assemble_analysis",
    "assemble_synthesis",
    "synthesize",
    "analyze",
    "verify_gain",
]

#: substream labels under the master seed
_STREAM_MOMENTS = 0


@dataclass(frozen=True)
class Gain:
    """State-feedback gain u_k = F1 x_k + F2 u_{k-1}."""

    F1: np.ndarray
    F2: np.ndarray

    def __post_init__(self):
        F1 = np.atleast_2d(np.asarray(self.F1, dtype=float))
        F2 = np.atleast_2d(np.asarray(self.F2, dtype=float))
        if F2.shape[0] != F2.shape[1] or F1.shape[0] != F2.shape[0]:
            raise DimensionError(
                f"F1 must be m x n and F2 m x m, got {F1.shape} and {F2.shape}"
            )
        object.__setattr__(self, "F1", F1)
        object.__setattr__(self, "F2", F2)

    @property
    def Fhat(self) -> np.ndarray:
        """The combined gain [F1, F2] acting on the extended state."""
        return np.hstack([self.F1, self.F2])

    @classmethod
    def from_fhat(cls, Fhat, n: int) -> "Gain":
        Fhat = np.atleast_2d(np.asarray(Fhat, dtype=float))
        return cls(F1=Fhat[:, :n], F2=Fhat[:, n:])


@dataclass(frozen=True)
class SynthesisResult:
    """Designed gain plus its decay-rate certificate (X, Y, lambda_star).

    ``draws`` are the delay pairs behind the moment estimate, kept so the
    companion analysis can run on the identical empirical distribution.
    """

    gain: Gain
    lambda_star: float
    X: np.ndarray
    Y: np.ndarray
    mbar: int
    N: int
    seed: int | None
    margin: float
    draws: np.ndarray


@dataclass(frozen=True)
class AnalysisResult:
    """Certified decay rate for a given gain, with Lyapunov certificate P."""

    lambda_star: float
    P: np.ndarray
    mbar: int
    N: int
    seed: int | None
    margin: float
    draws: np.ndarray


@dataclass(frozen=True)
class VerifyReport:
    """Outcome of re-certifying a synthesized gain on its own draws."""

    passed: bool
    lambda_synthesis: float
    lambda_analysis: float | None
    note: str = ""


def _sym_basis(d: int) -> list[np.ndarray]:
    """Basis of symmetric d x d matrices in upper-triangle (a, b) order."""
    basis = []
    for a in range(d):
        for b in range(a, d):
            E = np.zeros((d, d))
            E[a, b] = E[b, a] = 1.0
            basis.append(E)
    return basis


def _vech_to_sym(z: np.ndarray, d: int) -> np.ndarray:
    S = np.zeros((d, d))
    idx = 0
    for a in range(d):
        for b in range(a, d):
            S[a, b] = S[b, a] = z[idx]
            idx += 1
    return S


def _check_lambda(lam: float):
    if not (0.0 < lam <= 1.0):
        raise DomainError(f"lambda must lie in (0, 1], got {lam}")


def assemble_analysis(cltf: ClosedLoopTildeFactor, lam: float) -> AffineMatrixInequality:
    """Analysis inequality at a fixed rate; decision variables are the upper
    triangle of P. Blocks: lam^2 P - Gtilde^T (P kron I) Gtilde and P - I."""
    _check_lambda(lam)
    Gt = cltf.Gtilde
    nm = Gt.shape[1]
    if Gt.shape[0] != nm * cltf.mbar:
        raise DimensionError(
            f"stacked factor must have {nm * cltf.mbar} rows, got {Gt.shape[0]}"
        )
    Imb = np.eye(cltf.mbar)
    terms = []
    for E in _sym_basis(nm):
        main = lam**2 * E - Gt.T @ np.kron(E, Imb) @ Gt
        terms.append([main, E])
    F0 = [np.zeros((nm, nm)), -np.eye(nm)]
    return AffineMatrixInequality.from_terms(F0, terms)


def assemble_synthesis(tf: TildeFactors, lam: float) -> AffineMatrixInequality:
    """Synthesis inequality at a fixed rate; decision variables are the upper
    triangle of X followed by the entries of Y (row-major)."""
    _check_lambda(lam)
    GA, GB = tf.GA, tf.GB
    nm = GA.shape[1]
    m = GB.shape[1]
    if GA.shape[0] != nm * tf.mbar or GB.shape[0] != nm * tf.mbar:
        raise DimensionError("stacked factors have inconsistent row counts")
    d1 = nm + nm * tf.mbar
    Imb = np.eye(tf.mbar)
    terms = []
    for E in _sym_basis(nm):
        main = np.zeros((d1, d1))
        main[:nm, :nm] = lam**2 * E
        off = GA @ E
        main[nm:, :nm] = off
        main[:nm, nm:] = off.T
        main[nm:, nm:] = np.kron(E, Imb)
        terms.append([main, E])
    for i in range(m):
        for j in range(nm):
            D = np.zeros((m, nm))
            D[i, j] = 1.0
            main = np.zeros((d1, d1))
            off = GB @ D
            main[nm:, :nm] = off
            main[:nm, nm:] = off.T
            terms.append([main, np.zeros((nm, nm))])
    F0 = [np.zeros((d1, d1)), -np.eye(nm)]
    return AffineMatrixInequality.from_terms(F0, terms)


def _split_synthesis_witness(res: FeasibilityResult, nm: int, m: int):
    q = nm * (nm + 1) // 2
    X = _vech_to_sym(res.z[:q], nm)
    Y = res.z[q:].reshape(m, nm)
    return X, Y


def _recover_gain(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Fhat = Y X^{-1} with one refinement sweep against the residual."""
    Fhat = np.linalg.solve(X, Y.T).T
    Fhat += np.linalg.solve(X, (Y - Fhat @ X).T).T
    return Fhat


def synthesize(
    plant: ContinuousPlant,
    model: DelayModel,
    N: int = 1000,
    seed: int | None = 0,
    tol: float = 1e-3,
    rank_tol: float = 1e-8,
    eps: float | None = None,
    lam_hi: float = 1.0 - 1e-6,
    lam_lo: float = 1e-4,
    backend: str = "builtin",
    reduced: bool = False,
    verbose: bool = False,
) -> SynthesisResult:
    """Design a stabilizing gain with the smallest certifiable decay rate.

    Pipeline: sample-mean moment of the extended coefficients, rank-revealing
    factorization, block reshape, then bisection over the synthesis
    inequality. ``reduced=True`` routes through the cheaper factor
    construction of :func:`ncstab.moments.reduced_factors`; both routes solve
    the same inequality.

    Raises :class:`NotStabilizableError` when the inequality is infeasible at
    ``lam_hi`` -- that may mean the loop truly cannot be stabilized in the
    second moment, or that the configured margin is too demanding.
    """
    report = check_second_moment_condition(plant, model)
    if not report.satisfied:
        warnings.warn(
            "delay model fails the finite-second-moment condition; "
            "the moment estimate does not converge and results are meaningless",
            stacklevel=2,
        )
    rng = derive_rng(seed if seed is not None else 0, _STREAM_MOMENTS)
    msm = estimate_synthesis_moment(plant, model, N, rng)
    if reduced:
        tf = reduced_factors(plant, model, N, rel_tol=rank_tol, draws=msm.draws)
    else:
        tf = reshape_tilde(factorize(msm, rank_tol), plant.n, plant.m)
    nm, m = plant.n + plant.m, plant.m

    def oracle(lam, z0=None):
        return solve_feasibility(
            assemble_synthesis(tf, lam), eps=eps, backend=backend, verbose=verbose, z0=z0
        )

    lam_star, witness = bisect_lambda(oracle, tol=tol, lam_hi=lam_hi, lam_lo=lam_lo)
    X, Y = _split_synthesis_witness(witness, nm, m)
    Fhat = _recover_gain(X, Y)
    return SynthesisResult(
        gain=Gain.from_fhat(Fhat, plant.n),
        lambda_star=lam_star,
        X=X,
        Y=Y,
        mbar=tf.mbar,
        N=msm.N,
        seed=seed,
        margin=witness.margin,
        draws=msm.draws,
    )


def analyze(
    plant: ContinuousPlant,
    model: DelayModel | None,
    gain: Gain,
    N: int | None = None,
    draws: np.ndarray | None = None,
    seed: int | None = 0,
    tol: float = 1e-3,
    rank_tol: float = 1e-8,
    eps: float | None = None,
    lam_hi: float = 1.0 - 1e-6,
    lam_lo: float = 1e-4,
    backend: str = "builtin",
    verbose: bool = False,
) -> AnalysisResult:
    """Certify the decay rate of a given gain.

    With ``draws`` supplied the moment is a deterministic function of them
    (``model`` may then be None); otherwise N fresh draws are taken from the
    model. Raises :class:`NotStableError` when no rate below ``lam_hi`` can
    be certified for this moment estimate.
    """
    rng = None
    if draws is None:
        rng = derive_rng(seed if seed is not None else 0, _STREAM_MOMENTS)
    msm = estimate_closedloop_moment(plant, model, gain.Fhat, N=N, rng=rng, draws=draws)
    cltf = reshape_closedloop(factorize(msm, rank_tol), plant.n, plant.m)
    nm = plant.n + plant.m

    def oracle(lam, z0=None):
        return solve_feasibility(
            assemble_analysis(cltf, lam), eps=eps, backend=backend, verbose=verbose, z0=z0
        )

    try:
        lam_star, witness = bisect_lambda(oracle, tol=tol, lam_hi=lam_hi, lam_lo=lam_lo)
    except NotStabilizableError as exc:
        raise NotStableError(str(exc)) from None
    P = _vech_to_sym(witness.z, nm)
    return AnalysisResult(
        lambda_star=lam_star,
        P=P,
        mbar=cltf.mbar,
        N=msm.N,
        seed=seed,
        margin=witness.margin,
        draws=msm.draws,
    )


def verify_gain(
    plant: ContinuousPlant,
    synth: SynthesisResult,
    tol: float = 1e-3,
    **analyze_kwargs,
) -> VerifyReport:
    """Re-certify a synthesized gain on the draws it was designed from.

    On the identical empirical distribution the analysis rate can exceed the
    synthesis rate only through bisection granularity, so the check passes
    iff lambda_analysis <= lambda_synthesis + 2*tol.
    """
    try:
        ana = analyze(plant, None, synth.gain, draws=synth.draws, tol=tol, **analyze_kwargs)
    except NotStableError as exc:
        return VerifyReport(
            passed=False,
            lambda_synthesis=synth.lambda_star,
            lambda_analysis=None,
            note=f"analysis failed: {exc}",
        )
    passed = ana.lambda_star <= synth.lambda_star + 2.0 * tol
    return VerifyReport(
        passed=passed,
        lambda_synthesis=synth.lambda_star,
        lambda_analysis=ana.lambda_star,
        note="" if passed else "analysis rate exceeds synthesis rate beyond tolerance",
    )
