"""Second-moment matrices of the random extended coefficients, their
low-rank factorizations, and the block reshapes feeding the stability and
synthesis inequalities.

Conventions
-----------
``row(M)`` is row-major vectorization: the rows of M concatenated into one
row vector (numpy's C-order ``reshape(-1)``).

For the extended pair (Ahat(xi), Bhat) with nm = n + m, the synthesis-side
second moment is

    M = E[ v(xi)^T v(xi) ],   v(xi) = [row(Ahat(xi)), row(Bhat)],

a PSD matrix of size nm*(n+2m). Expectations are replaced by sample means
over stored delay draws (exact single evaluation for constant models). A
factor G with G^T G = M, split column-wise into the blocks that multiply each
row of Ahat and Bhat and re-stacked vertically, gives matrices GA, GB with
the defining property (for every symmetric X)

    GA^T (X kron I) GA = E[Ahat^T X Ahat],
    GA^T (X kron I) GB = E[Ahat^T X Bhat],
    GB^T (X kron I) GB = Bhat^T X Bhat,

which is what lets the expectation be carried exactly by a finite matrix
inside a linear matrix inequality. The analysis side does the same with the
closed-loop coefficient Ahat(xi) + Bhat*Fhat and moment size nm^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .delays import ConstantDelay, DelayModel
from .errors import DimensionError, DomainError
from .plant import ContinuousPlant, discretize_batch

__all__ = [
    "SecondMomentMatrix",
    "Factorization",
    "TildeFactors",
    "ClosedLoopTildeFactor",
    "estimate_synthesis_moment",
    "estimate_closedloop_moment",
    "factorize",
    "reshape_tilde",
    "reshape_closedloop",
    "reduced_factors",
    "export_matrix_csv",
]

#: eigenvalues below rel_tol * lambda_max are treated as rank noise
DEFAULT_RANK_TOL = 1e-8


@dataclass(frozen=True)
class SecondMomentMatrix:
    """Symmetric PSD sample-mean moment matrix.

    ``N`` is the number of delay draws behind the sample mean; 0 marks an
    exact (degenerate-distribution) evaluation. ``form`` is "synthesis" for
    the open-loop moment of [row(Ahat), row(Bhat)] and "analysis" for the
    closed-loop moment. ``draws`` keeps the delay pairs the mean was taken
    over, so later analysis steps can reuse the identical empirical
    distribution.
    """

    M: np.ndarray
    N: int
    form: str
    draws: np.ndarray | None = None


@dataclass(frozen=True)
class Factorization:
    """Factor G with G^T G reproducing the moment up to rank-truncation noise."""

    G: np.ndarray
    mbar: int
    tol_used: float


@dataclass(frozen=True)
class TildeFactors:
    """Vertically stacked factor blocks for the synthesis inequality.

    GA has shape (nm*mbar, nm) and GB has shape (nm*mbar, m): rows
    [i*mbar, (i+1)*mbar) hold the factor block multiplying row i of Ahat
    (resp. Bhat).
    """

    GA: np.ndarray
    GB: np.ndarray
    mbar: int


@dataclass(frozen=True)
class ClosedLoopTildeFactor:
    """Stacked factor of the closed-loop moment for the analysis inequality."""

    Gtilde: np.ndarray
    mbar: int


def _bhat(n: int, m: int) -> np.ndarray:
    return np.vstack([np.zeros((n, m)), np.eye(m)])


def _extended_batch(plant: ContinuousPlant, draws: np.ndarray) -> np.ndarray:
    """Ahat(xi) for every stored draw, shape (N, nm, nm)."""
    n, m = plant.n, plant.m
    hs = draws[:, 0] + draws[:, 1]
    Ads, Bds = discretize_batch(plant, hs)
    out = np.zeros((draws.shape[0], n + m, n + m))
    out[:, :n, :n] = Ads
    out[:, :n, n:] = Bds
    return out


def _resolve_draws(model, N, rng, draws):
    """Stored draws win; constant models collapse to one exact evaluation."""
    if draws is not None:
        draws = np.asarray(draws, dtype=float)
        if draws.ndim != 2 or draws.shape[1] != 2:
            raise DimensionError(f"draws must have shape (N, 2), got {draws.shape}")
        return draws, draws.shape[0]
    if isinstance(model, ConstantDelay):
        return np.array([[model.tau_up, model.tau_dw]]), 0
    if N is None or N < 1:
        raise DomainError(f"sample count must be >= 1, got {N}")
    if rng is None:
        raise DomainError("a seeded generator is required to draw fresh samples")
    return model.sample_batch(rng, int(N)), int(N)


def estimate_synthesis_moment(
    plant: ContinuousPlant,
    model: DelayModel,
    N: int,
    rng: np.random.Generator | None = None,
    draws: np.ndarray | None = None,
) -> SecondMomentMatrix:
    """Sample-mean moment of v(xi) = [row(Ahat(xi)), row(Bhat)].

    Draws N fresh delay pairs from ``model`` (or reuses ``draws`` verbatim
    when given). For a constant model the distribution is degenerate and a
    single exact evaluation is returned with N = 0.
    """
    draws, n_eff = _resolve_draws(model, N, rng, draws)
    k = draws.shape[0]
    Ahats = _extended_batch(plant, draws)
    row_b = _bhat(plant.n, plant.m).reshape(-1)
    V = np.hstack([Ahats.reshape(k, -1), np.tile(row_b, (k, 1))])
    M = V.T @ V / k
    M = (M + M.T) / 2.0
    return SecondMomentMatrix(M=M, N=n_eff, form="synthesis", draws=draws)


def estimate_closedloop_moment(
    plant: ContinuousPlant,
    model: DelayModel | None,
    Fhat: np.ndarray,
    N: int | None = None,
    rng: np.random.Generator | None = None,
    draws: np.ndarray | None = None,
) -> SecondMomentMatrix:
    """Sample-mean moment of row(Ahat(xi) + Bhat Fhat).

    With ``draws`` given the result is a deterministic function of them,
    which makes synthesis/analysis consistency checks exact; otherwise N
    fresh draws are taken (constant models evaluate exactly, N = 0).
    """
    Fhat = np.asarray(Fhat, dtype=float)
    n, m = plant.n, plant.m
    if Fhat.shape != (m, n + m):
        raise DimensionError(
            f"gain must have shape ({m}, {n + m}), got {Fhat.shape}"
        )
    if draws is None and model is None:
        raise DomainError("either a delay model or stored draws are required")
    draws, n_eff = _resolve_draws(model, N, rng, draws)
    k = draws.shape[0]
    closed = _extended_batch(plant, draws) + (_bhat(n, m) @ Fhat)[None, :, :]
    V = closed.reshape(k, -1)
    M = V.T @ V / k
    M = (M + M.T) / 2.0
    return SecondMomentMatrix(M=M, N=n_eff, form="analysis", draws=draws)


def factorize(msm: SecondMomentMatrix, rel_tol: float = DEFAULT_RANK_TOL) -> Factorization:
    """Rank-revealing factor G of a PSD moment, G^T G = M.

    Symmetric eigendecomposition; eigenvalues above rel_tol * lambda_max are
    retained, so ||G^T G - M||_F <= 10 * rel_tol * ||M||_F and mbar is the
    numerical rank at that threshold.
    """
    M = msm.M
    lam, U = np.linalg.eigh(M)
    lam_max = max(float(lam[-1]), 0.0)
    if lam[0] < -1e-12 * max(lam_max, 1e-300):
        raise DomainError(
            f"moment matrix is not numerically PSD (min eigenvalue {lam[0]:.3e})"
        )
    keep = lam > rel_tol * lam_max
    G = np.sqrt(np.clip(lam[keep], 0.0, None))[:, None] * U[:, keep].T
    return Factorization(G=G, mbar=int(np.count_nonzero(keep)), tol_used=float(rel_tol))


def reshape_tilde(f: Factorization, n: int, m: int) -> TildeFactors:
    """Split a synthesis factor's columns into per-row blocks and stack them.

    The factor columns follow v = [row(Ahat), row(Bhat)]: first nm blocks of
    width nm (one per row of Ahat), then nm blocks of width m (one per row of
    Bhat). Block i becomes rows [i*mbar, (i+1)*mbar) of GA / GB.
    """
    nm = n + m
    expected = nm * (n + 2 * m)
    if f.G.shape[1] != expected:
        raise DimensionError(
            f"factor has {f.G.shape[1]} columns, expected {expected} for n={n}, m={m}"
        )
    GA = f.G[:, : nm * nm].reshape(f.mbar, nm, nm)
    GB = f.G[:, nm * nm :].reshape(f.mbar, nm, m)
    # (mbar, nm, w) -> blocks indexed by row of Ahat, stacked vertically
    GA = GA.transpose(1, 0, 2).reshape(nm * f.mbar, nm)
    GB = GB.transpose(1, 0, 2).reshape(nm * f.mbar, m)
    return TildeFactors(GA=GA, GB=GB, mbar=f.mbar)


def reshape_closedloop(f: Factorization, n: int, m: int) -> ClosedLoopTildeFactor:
    """Same stacking as :func:`reshape_tilde` for the nm^2-column analysis factor."""
    nm = n + m
    if f.G.shape[1] != nm * nm:
        raise DimensionError(
            f"factor has {f.G.shape[1]} columns, expected {nm * nm} for n={n}, m={m}"
        )
    Gt = f.G.reshape(f.mbar, nm, nm).transpose(1, 0, 2).reshape(nm * f.mbar, nm)
    return ClosedLoopTildeFactor(Gtilde=Gt, mbar=f.mbar)


def reduced_factors(
    plant: ContinuousPlant,
    model: DelayModel | None,
    N: int,
    rng: np.random.Generator | None = None,
    rel_tol: float = DEFAULT_RANK_TOL,
    draws: np.ndarray | None = None,
) -> TildeFactors:
    """Cheaper factor construction exploiting that Bhat is deterministic.

    Only the moment of the augmented row [1, row(Ahat(xi))] is estimated and
    factored (size nm^2 + 1 instead of nm*(n+2m)). Writing its factor as
    [w0, WA] with w0 the column belonging to the constant entry, the stacks

        XA = stack of the per-row blocks of WA        (as in reshape_tilde),
        XI = stack over rows i of w0 e_i^T,

    satisfy, for every symmetric X,

        XA^T (X kron I) XA = E[Ahat^T X Ahat],
        XA^T (X kron I) XI = E[Ahat^T X],
        XI^T (X kron I) XI = X,

    so (GA, GB) = (XA, XI Bhat) feeds the synthesis inequality unchanged.
    """
    draws, _ = _resolve_draws(model, N, rng, draws)
    k = draws.shape[0]
    nm = plant.n + plant.m
    rows = _extended_batch(plant, draws).reshape(k, -1)
    V = np.hstack([np.ones((k, 1)), rows])
    M = V.T @ V / k
    M = (M + M.T) / 2.0
    f = factorize(SecondMomentMatrix(M=M, N=k, form="synthesis"), rel_tol)
    w0 = f.G[:, 0]
    WA = f.G[:, 1:].reshape(f.mbar, nm, nm)
    XA = WA.transpose(1, 0, 2).reshape(nm * f.mbar, nm)
    XI = np.zeros((nm * f.mbar, nm))
    for i in range(nm):
        XI[i * f.mbar : (i + 1) * f.mbar, i] = w0
    return TildeFactors(GA=XA, GB=XI @ _bhat(plant.n, plant.m), mbar=f.mbar)


def export_matrix_csv(M: np.ndarray, path) -> None:
    """Write a matrix as CSV, row-major, with a dimension header line."""
    M = np.asarray(M)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# rows={M.shape[0]} cols={M.shape[1]}\n")
        for row in M:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
