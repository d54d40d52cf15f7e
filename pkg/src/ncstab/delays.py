"""I.i.d. round-trip delay models.

Each sampling interval of the loop equals the sum of an uplink and a downlink
delay drawn once per step, h_k = tau_up_k + tau_dw_k. Models are immutable;
all randomness comes from a caller-supplied numpy Generator, so equal seeds
give identical draw sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, IngestionError
from .plant import ContinuousPlant

__all__ = [
    "DelayModel",
    "ConstantDelay",
    "ShiftedExponentialDelay",
    "EmpiricalDelay",
    "DelayDraw",
    "MomentConditionReport",
    "check_second_moment_condition",
    "load_delay_csv",
    "export_delay_csv",
    "derive_rng",
]


def derive_rng(master_seed: int, *stream: int) -> np.random.Generator:
    """Generator for a labeled substream of a master seed.

    Substreams are identified by integer indices, e.g. ``derive_rng(seed, 1, k)``
    for simulation path k; distinct labels give statistically independent
    streams while staying fully reproducible.
    """
    return np.random.default_rng(np.random.SeedSequence((int(master_seed),) + tuple(int(s) for s in stream)))


@dataclass(frozen=True)
class DelayDraw:
    """One step's delay pair and the sampling interval h = tau_up + tau_dw."""

    tau_up: float
    tau_dw: float
    h: float


class DelayModel:
    """Common interface of the delay models below."""

    def sample_batch(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` i.i.d. delay pairs; returns an array of shape (size, 2)
        with columns (tau_up, tau_dw)."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> DelayDraw:
        """Draw one delay pair."""
        tu, td = self.sample_batch(rng, 1)[0]
        return DelayDraw(tau_up=float(tu), tau_dw=float(td), h=float(tu) + float(td))


@dataclass(frozen=True)
class ConstantDelay(DelayModel):
    """Degenerate model: the same (tau_up, tau_dw) at every step."""

    tau_up: float
    tau_dw: float

    def __post_init__(self):
        if self.tau_up < 0 or self.tau_dw < 0:
            raise DomainError("delays must be >= 0")
        if self.tau_up + self.tau_dw <= 0:
            raise DomainError("tau_up + tau_dw must be > 0")

    def sample_batch(self, rng, size):
        return np.tile([self.tau_up, self.tau_dw], (size, 1))


@dataclass(frozen=True)
class ShiftedExponentialDelay(DelayModel):
    """tau = eps + d with d exponentially distributed, per channel.

    eps_up/eps_dw are deterministic offsets (>= 0); mu_up/mu_dw are the means
    of the exponential parts (> 0). The two channels are mutually independent.
    The uplink column is drawn before the downlink column, which fixes the
    stream layout for reproducibility.
    """

    eps_up: float
    eps_dw: float
    mu_up: float
    mu_dw: float

    def __post_init__(self):
        if self.eps_up < 0 or self.eps_dw < 0:
            raise DomainError("offsets must be >= 0")
        if self.mu_up <= 0 or self.mu_dw <= 0:
            raise DomainError("exponential means must be > 0")

    def sample_batch(self, rng, size):
        out = np.empty((size, 2))
        out[:, 0] = self.eps_up + rng.exponential(self.mu_up, size)
        out[:, 1] = self.eps_dw + rng.exponential(self.mu_dw, size)
        return out


@dataclass(frozen=True)
class EmpiricalDelay(DelayModel):
    """Resampling model over measured delay pairs.

    Draws whole rows uniformly with replacement, preserving any dependence
    between tau_up and tau_dw within a pair.
    """

    pairs: np.ndarray = field(repr=False)

    def __post_init__(self):
        P = np.array(self.pairs, dtype=float)
        if P.ndim != 2 or P.shape[1] != 2 or P.shape[0] < 1:
            raise DomainError(f"pairs must be a (k, 2) array with k >= 1, got {P.shape}")
        if not np.all(np.isfinite(P)) or np.any(P < 0):
            raise DomainError("all stored delays must be finite and >= 0")
        if not np.any(P.sum(axis=1) > 0):
            raise DomainError("at least one pair must have positive sum")
        object.__setattr__(self, "pairs", P)

    def sample_batch(self, rng, size):
        idx = rng.integers(0, self.pairs.shape[0], size)
        return self.pairs[idx].copy()


@dataclass
class MomentConditionReport:
    """Outcome of the finite-second-moment check for the discretized coefficients.

    ``satisfied`` says whether E[A(xi)^T A(xi)] (and the B analog) is finite.
    For models with bounded support this holds unconditionally. For shifted
    exponential delays it holds iff 2*alpha < 1/mu on each channel, where
    alpha is the spectral abscissa of A_c; ``margins`` carries the per-channel
    values 2*alpha - 1/mu (negative = satisfied).
    """

    satisfied: bool
    spectral_abscissa: float
    margins: dict[str, float] | None
    explanation: str

    def as_dict(self) -> dict:
        d = {
            "satisfied": self.satisfied,
            "spectral_abscissa": self.spectral_abscissa,
        }
        if self.margins is not None:
            d["margin_up"] = self.margins["up"]
            d["margin_dw"] = self.margins["dw"]
        return d

    def as_text(self) -> str:
        lines = [
            f"second-moment condition satisfied: {'yes' if self.satisfied else 'NO'}",
            f"spectral abscissa of A_c: {self.spectral_abscissa:.6g}",
        ]
        if self.margins is not None:
            lines.append(f"margin up   (2*alpha - 1/mu_up): {self.margins['up']:.6g}")
            lines.append(f"margin down (2*alpha - 1/mu_dw): {self.margins['dw']:.6g}")
        lines.append(self.explanation)
        return "\n".join(lines)


def check_second_moment_condition(plant: ContinuousPlant, model: DelayModel) -> MomentConditionReport:
    """Decide whether the squared entries of the discretized coefficients are
    integrable under the delay model.

    The exponential of A_c over an interval h grows like exp(alpha*h) with
    alpha the spectral abscissa, so against an exponential tail with mean mu
    the second moment is finite iff 2*alpha - 1/mu < 0 on each channel.
    Possible polynomial factors from non-diagonalizable A_c never change
    finiteness against an exponential tail, so the same criterion is applied
    to every A_c. Deterministic offsets do not affect finiteness. Bounded
    support (constant or empirical models) is always fine.
    """
    alpha = float(np.max(np.linalg.eigvals(plant.A_c).real))
    if isinstance(model, ShiftedExponentialDelay):
        margins = {
            "up": 2.0 * alpha - 1.0 / model.mu_up,
            "dw": 2.0 * alpha - 1.0 / model.mu_dw,
        }
        ok = margins["up"] < 0 and margins["dw"] < 0
        text = (
            "unbounded exponential tails: finiteness requires 2*alpha < 1/mu "
            "on both channels"
        )
        return MomentConditionReport(ok, alpha, margins, text)
    return MomentConditionReport(
        True, alpha, None, "delay support is bounded, so all moments are finite"
    )


def load_delay_csv(path) -> EmpiricalDelay:
    """Read measured delays from a two-column CSV (tau_up, tau_dw).

    A single header line is allowed. Malformed rows and negative delays raise
    :class:`IngestionError` naming the 1-based line number.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise IngestionError(f"cannot read delay file {path}: {exc}") from exc
    rows = []
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        parts = [p.strip() for p in text.split(",")]
        if lineno == 1:
            try:
                float(parts[0])
            except ValueError:
                continue  # header line
        if len(parts) != 2:
            raise IngestionError(f"{path}: line {lineno}: expected 2 columns, got {len(parts)}")
        try:
            tu, td = float(parts[0]), float(parts[1])
        except ValueError:
            raise IngestionError(f"{path}: line {lineno}: non-numeric value") from None
        if not (np.isfinite(tu) and np.isfinite(td)):
            raise IngestionError(f"{path}: line {lineno}: non-finite delay")
        if tu < 0 or td < 0:
            raise IngestionError(f"{path}: line {lineno}: negative delay")
        rows.append((tu, td))
    if not rows:
        raise IngestionError(f"{path}: no delay rows found")
    try:
        return EmpiricalDelay(np.array(rows))
    except DomainError as exc:
        raise IngestionError(f"{path}: {exc}") from exc


def export_delay_csv(model: EmpiricalDelay, path) -> None:
    """Write an empirical model's support back out as tau_up,tau_dw rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("tau_up,tau_dw\n")
        for tu, td in model.pairs:
            fh.write(f"{tu:.17g},{td:.17g}\n")
