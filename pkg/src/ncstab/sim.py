"""Closed-loop sample-path simulation with the loop's exact timing semantics.

Timing: the sampler and hold act together, so consecutive sampling instants
differ by exactly the round-trip delay of that step,

    t_0 = 0,   t_{k+1} = t_k + tau_up_k + tau_dw_k,

and the held input on [t_k, t_{k+1}) is u_{k-1} -- the command computed from
the previous sample, which only arrived at t_k. The discrete recursion is

    u_k     = F1 x_k + F2 u_{k-1}        (decided from the sample at t_k),
    x_{k+1} = Ad(h_k) x_k + Bd(h_k) u_{k-1},

with (Ad, Bd) the exact discretization over h_k. Between samples the plant is
LTI with a held input, so dense trajectory points are evaluated from the same
exponential formula rather than by ODE integration; they are observational
and never feed back into the recursion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import Gain
from .delays import DelayModel
from .errors import DimensionError, DomainError
from .plant import ContinuousPlant, discretize_batch

__all__ = [
    "SamplePath",
    "DecayEstimate",
    "simulate_path",
    "estimate_decay",
    "export_paths_csv",
    "export_decay_csv",
]

#: state norms beyond this truncate the path instead of overflowing
OVERFLOW_NORM = 1e150


@dataclass(frozen=True)
class SamplePath:
    """One closed-loop trajectory observed at (and optionally between) samples.

    ``t`` holds t_0 .. t_K; ``x`` the sampled states; ``u`` is aligned so that
    u[k] = u_{k-1} is the input HELD during [t_k, t_{k+1}) (u[0] is the
    initial held input). ``draws`` are the per-step delay pairs and
    T_up / T_dw their cumulative sums. Dense points, when requested, live in
    ``dense_t`` / ``dense_x`` / ``dense_u`` with ``dense_k`` naming the
    interval each point belongs to; the last dense point of an interval sits
    exactly at the next sampling instant and is the left limit of the
    trajectory there. ``overflowed`` marks a path truncated after its state
    norm exceeded the overflow guard.
    """

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    draws: np.ndarray
    T_up: np.ndarray
    T_dw: np.ndarray
    dense_t: np.ndarray = field(default_factory=lambda: np.empty(0))
    dense_x: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    dense_u: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    dense_k: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    overflowed: bool = False

    @property
    def steps(self) -> int:
        return self.t.shape[0] - 1


@dataclass(frozen=True)
class DecayEstimate:
    """Per-step empirical second moments of the extended state.

    m[k] averages ||[x_k; u_{k-1}]||^2 over the surviving paths; rho_hat is
    the per-step geometric rate (m_K / m_0)^(1/2K), floored at 0 when the
    final moment vanishes. ``unreliable`` is set when more than half of the
    paths hit the overflow guard.
    """

    m: np.ndarray
    rho_hat: float
    Npaths: int
    K: int
    seed: int | None = None
    overflow_count: int = 0
    unreliable: bool = False


def simulate_path(
    plant: ContinuousPlant,
    model: DelayModel,
    gain: Gain,
    x0,
    u_init,
    K: int,
    rng: np.random.Generator,
    dense_substeps: int = 0,
) -> SamplePath:
    """Simulate one closed-loop path for K steps.

    All K delay pairs are drawn up front (they are i.i.d. and do not depend
    on the state), the per-step discretizations are computed in one batch,
    and the recursion then runs sample by sample. ``dense_substeps`` > 0 adds
    that many equispaced trajectory points per interval, evaluated exactly.
    """
    n, m = plant.n, plant.m
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    u_init = np.asarray(u_init, dtype=float).reshape(-1)
    if x0.shape[0] != n or u_init.shape[0] != m:
        raise DimensionError(
            f"x0 must have length {n} and u_init length {m}, got {x0.shape[0]}, {u_init.shape[0]}"
        )
    if gain.F1.shape != (m, n):
        raise DimensionError(
            f"gain F1 must be {m} x {n}, got {gain.F1.shape}"
        )
    if K < 1:
        raise DomainError(f"step count must be >= 1, got {K}")
    if dense_substeps < 0:
        raise DomainError("dense_substeps must be >= 0")

    draws = model.sample_batch(rng, K)
    hs = draws[:, 0] + draws[:, 1]
    Ads, Bds = discretize_batch(plant, hs)

    x = np.zeros((K + 1, n))
    u = np.zeros((K + 1, m))  # u[k] = input held on [t_k, t_{k+1})
    x[0] = x0
    u[0] = u_init
    completed = K
    overflowed = False
    for k in range(K):
        u[k + 1] = gain.F1 @ x[k] + gain.F2 @ u[k]
        x[k + 1] = Ads[k] @ x[k] + Bds[k] @ u[k]
        if np.linalg.norm(x[k + 1]) > OVERFLOW_NORM or np.linalg.norm(u[k + 1]) > OVERFLOW_NORM:
            completed = k + 1
            overflowed = True
            break

    draws = draws[:completed]
    hs = hs[:completed]
    x = x[: completed + 1]
    u = u[: completed + 1]
    t = np.concatenate([[0.0], np.cumsum(hs)])

    dense_t = np.empty(0)
    dense_x = np.empty((0, n))
    dense_u = np.empty((0, m))
    dense_k = np.empty(0, dtype=int)
    if dense_substeps > 0 and completed > 0:
        fracs = np.arange(1, dense_substeps + 1) / dense_substeps
        ss = (hs[:, None] * fracs[None, :]).reshape(-1)  # all offsets, interval-major
        Es, Ints = discretize_batch(plant, ss)
        Es = Es.reshape(completed, dense_substeps, n, n)
        Ints = Ints.reshape(completed, dense_substeps, n, m)
        dense_x = np.einsum("ksij,kj->ksi", Es, x[:-1]) + np.einsum(
            "ksij,kj->ksi", Ints, u[:-1]
        )
        dense_x = dense_x.reshape(-1, n)
        dense_t = (t[:-1, None] + hs[:, None] * fracs[None, :]).reshape(-1)
        dense_u = np.repeat(u[:-1], dense_substeps, axis=0)
        dense_k = np.repeat(np.arange(completed), dense_substeps)

    return SamplePath(
        t=t,
        x=x,
        u=u,
        draws=draws,
        T_up=np.cumsum(draws[:, 0]),
        T_dw=np.cumsum(draws[:, 1]),
        dense_t=dense_t,
        dense_x=dense_x,
        dense_u=dense_u,
        dense_k=dense_k,
        overflowed=overflowed,
    )


def estimate_decay(
    plant: ContinuousPlant,
    model: DelayModel,
    gain: Gain,
    x0,
    u_init,
    K: int,
    Npaths: int,
    rng: np.random.Generator,
    seed: int | None = None,
) -> DecayEstimate:
    """Empirical second-moment decay over many independent paths.

    Each path gets its own substream spawned from ``rng``. Paths truncated by
    the overflow guard stop contributing from their truncation point on; the
    estimate is flagged unreliable when more than half of them overflow.
    """
    if Npaths < 1:
        raise DomainError(f"path count must be >= 1, got {Npaths}")
    child_rngs = rng.spawn(Npaths)
    sums = np.zeros(K + 1)
    alive = np.zeros(K + 1, dtype=int)
    overflow_count = 0
    for child in child_rngs:
        path = simulate_path(plant, model, gain, x0, u_init, K, child)
        if path.overflowed:
            overflow_count += 1
        kmax = path.steps
        ext2 = np.sum(path.x**2, axis=1) + np.sum(path.u**2, axis=1)
        sums[: kmax + 1] += ext2
        alive[: kmax + 1] += 1
    m = np.divide(sums, alive, out=np.zeros_like(sums), where=alive > 0)
    if m[0] > 0 and m[K] > 0:
        rho = float((m[K] / m[0]) ** (1.0 / (2.0 * K)))
    else:
        rho = 0.0
    return DecayEstimate(
        m=m,
        rho_hat=rho,
        Npaths=Npaths,
        K=K,
        seed=seed,
        overflow_count=overflow_count,
        unreliable=overflow_count > Npaths // 2,
    )


def export_paths_csv(paths: list[SamplePath], target) -> None:
    """Write paths as CSV: path_id, k, t, state components, held input, dense.

    Sample rows carry dense=0; dense rows (when present) follow their
    interval's sample row with dense=1. Floats use 17 significant digits so a
    round trip through the file is exact. Ordering is fixed by (path, step,
    offset), so equal inputs give byte-identical files.
    """
    if not paths:
        raise DomainError("need at least one path to export")
    n = paths[0].x.shape[1]
    m = paths[0].u.shape[1]
    cols = ["path_id", "k", "t"]
    cols += [f"x{i+1}" for i in range(n)]
    cols += [f"u{i+1}" for i in range(m)]
    cols += ["dense"]
    with open(target, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")

        def write_row(pid, k, t, xv, uv, dense):
            vals = [str(pid), str(k), f"{t:.17g}"]
            vals += [f"{v:.17g}" for v in xv]
            vals += [f"{v:.17g}" for v in uv]
            vals.append(str(dense))
            fh.write(",".join(vals) + "\n")

        for pid, path in enumerate(paths):
            substeps = 0
            if path.dense_t.size and path.steps > 0:
                substeps = path.dense_t.size // path.steps
            for k in range(path.t.shape[0]):
                write_row(pid, k, path.t[k], path.x[k], path.u[k], 0)
                if substeps and k < path.steps:
                    for j in range(substeps):
                        idx = k * substeps + j
                        write_row(
                            pid, k, path.dense_t[idx], path.dense_x[idx], path.dense_u[idx], 1
                        )


def export_decay_csv(est: DecayEstimate, target) -> None:
    """Write the per-step empirical second moments as (k, m_k) rows."""
    with open(target, "w", encoding="utf-8") as fh:
        fh.write("k,m_k\n")
        for k, v in enumerate(est.m):
            fh.write(f"{k},{v:.17g}\n")
