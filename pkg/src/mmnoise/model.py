"""Closed-form Markov-Middleton noise mathematics.

A noise state process ``s_k`` in ``{0, ..., M-1}`` selects the variance of a
zero-mean Gaussian sample. State 0 is the impulse-free background; the
remaining states are impulsive. The chain persists in its current state with
probability ``r`` and otherwise redraws from the stationary vector ``p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (
    InconsistentMeasurementError,
    InfiniteDurationError,
    InvalidParameterError,
    NumericError,
)

PROB_ATOL = 1e-9
_R_ROUNDOFF = 1e-12


@dataclass(frozen=True)
class MiddletonParams:
    """Canonical Class A parameterization.

    Attributes
    ----------
    A : float
        Impulsive index.
    Gamma : float
        Background-to-impulse power ratio.
    sigma2 : float
        Total noise power.
    M : int
        Number of states, background included.
    """

    A: float
    Gamma: float
    sigma2: float
    M: int = 4

    def __post_init__(self):
        if not (self.A > 0 and math.isfinite(self.A)):
            raise InvalidParameterError(f"A must be positive, got {self.A}")
        if not (self.Gamma > 0 and math.isfinite(self.Gamma)):
            raise InvalidParameterError(f"Gamma must be positive, got {self.Gamma}")
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise InvalidParameterError(f"sigma2 must be positive, got {self.sigma2}")
        if int(self.M) != self.M or self.M < 1:
            raise InvalidParameterError(f"M must be an integer >= 1, got {self.M}")

    def profile(self, r: float) -> ModelProfile:
        """Build the equivalent :class:`ModelProfile` with correlation ``r``."""
        p = middleton_state_probs(self.A, self.M)
        var = middleton_state_vars(self)
        return ModelProfile(p, np.sqrt(var), r)


def _readonly(a):
    a.setflags(write=False)
    return a


def check_probability_vector(p, name="p"):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InvalidParameterError(f"{name} must be a non-empty 1-D vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InvalidParameterError(f"{name} has negative or non-finite entries")
    if abs(p.sum() - 1.0) > PROB_ATOL:
        raise InvalidParameterError(f"{name} sums to {p.sum()!r}, not 1")
    return p


@dataclass(frozen=True, eq=False)
class ModelProfile:
    """Per-state probabilities, per-component standard deviations and ``r``.

    States are reordered on construction so that ``state_sigmas`` ascends;
    index 0 is then the background state. Arrays are read-only.
    """

    state_probs: np.ndarray
    state_sigmas: np.ndarray
    r: float

    def __post_init__(self):
        p = check_probability_vector(self.state_probs, "state_probs")
        s = np.asarray(self.state_sigmas, dtype=float)
        if s.shape != p.shape:
            raise InvalidParameterError("state_probs and state_sigmas differ in length")
        if not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise InvalidParameterError("state_sigmas must be positive and finite")
        r = float(self.r)
        if not 0.0 <= r <= 1.0:
            raise InvalidParameterError(f"r must lie in [0, 1], got {r}")
        order = np.argsort(s, kind="stable")
        object.__setattr__(self, "state_probs", _readonly(p[order].copy()))
        object.__setattr__(self, "state_sigmas", _readonly(s[order].copy()))
        object.__setattr__(self, "r", r)

    def __eq__(self, other):
        if not isinstance(other, ModelProfile):
            return NotImplemented
        return (
            self.r == other.r
            and np.array_equal(self.state_probs, other.state_probs)
            and np.array_equal(self.state_sigmas, other.state_sigmas)
        )

    def __hash__(self):
        return hash((self.r, self.state_probs.tobytes(), self.state_sigmas.tobytes()))

    @property
    def M(self) -> int:
        return self.state_probs.size

    @property
    def state_vars(self) -> np.ndarray:
        return self.state_sigmas**2

    @property
    def mixture_power(self) -> float:
        """Per-component power ``sum_m p_m sigma_m^2``."""
        return float(np.dot(self.state_probs, self.state_vars))

    def transition_matrix(self) -> np.ndarray:
        return transition_matrix(self.r, self.state_probs)

    def scaled(self, factor: float) -> ModelProfile:
        """Multiply every state standard deviation by ``factor``."""
        if not factor > 0:
            raise InvalidParameterError(f"scale factor must be positive, got {factor}")
        return ModelProfile(self.state_probs, self.state_sigmas * factor, self.r)

    def with_r(self, r: float) -> ModelProfile:
        return ModelProfile(self.state_probs, self.state_sigmas, r)


def ev_reference_profile() -> ModelProfile:
    """Built-in four-state reference profile (``ev-reference`` on the command line)."""
    return ModelProfile(
        np.array([0.54, 0.13, 0.11, 0.22]),
        np.array([0.010, 0.066, 0.112, 0.183]),
        0.979,
    )


# Durations that accompany ``ev_reference_profile`` (samples per state run).
EV_REFERENCE_DURATIONS = (105.0, 57.0, 69.0, 186.0)


def middleton_state_probs(A: float, M: int) -> np.ndarray:
    """Truncated-Poisson state probabilities ``p_m ∝ A^m / m!``.

    Evaluated in the log domain so large ``A`` or ``M`` cannot overflow.
    """
    if not (A > 0 and math.isfinite(A)):
        raise InvalidParameterError(f"A must be positive, got {A}")
    if int(M) != M or M < 1:
        raise InvalidParameterError(f"M must be an integer >= 1, got {M}")
    m = np.arange(int(M))
    logw = m * math.log(A) - np.array([math.lgamma(k + 1) for k in m])
    w = np.exp(logw - logw.max())
    return w / w.sum()


def middleton_state_vars(params: MiddletonParams) -> np.ndarray:
    """State variances ``sigma2 * (m/A + Gamma) / (1 + Gamma)``."""
    if not isinstance(params, MiddletonParams):
        raise InvalidParameterError("expected MiddletonParams")
    m = np.arange(params.M, dtype=float)
    return params.sigma2 * (m / params.A + params.Gamma) / (1.0 + params.Gamma)


def _check_r(r):
    r = float(r)
    if not math.isfinite(r) or r < 0.0 or r > 1.0:
        raise InvalidParameterError(f"r must lie in [0, 1], got {r}")
    return r


def transition_matrix(r: float, p) -> np.ndarray:
    """Row-stochastic matrix ``P[i, j] = r*[i == j] + (1 - r)*p[j]``."""
    r = _check_r(r)
    p = check_probability_vector(p)
    P = np.tile((1.0 - r) * p, (p.size, 1))
    P[np.diag_indices(p.size)] += r
    return P


def mean_state_durations(r: float, p) -> np.ndarray:
    """Mean sojourn length in samples, ``1 / ((1 - r)(1 - p_m))``."""
    r = _check_r(r)
    p = check_probability_vector(p)
    if r == 1.0 or np.any(p >= 1.0):
        raise InfiniteDurationError("a state with stay probability 1 never ends")
    return 1.0 / ((1.0 - r) * (1.0 - p))


def correlation_from_duration(d0: float, p0: float) -> float:
    """Invert the background mean duration for ``r``.

    Values below zero by less than 1e-12 are rounding at the memoryless
    boundary and return exactly 0.

    Raises
    ------
    InconsistentMeasurementError
        When the implied ``r`` falls outside ``[0, 1)``; the raw value is
        attached as ``err.value``.
    """
    d0 = float(d0)
    p0 = float(p0)
    denom = d0 * (1.0 - p0)
    if not math.isfinite(denom) or denom <= 0:
        raise InconsistentMeasurementError(
            f"d0*(1-p0) = {denom} is not positive", value=float("nan")
        )
    r = 1.0 - 1.0 / denom
    if -_R_ROUNDOFF < r < 0.0:
        # d0*(1-p0) == 1 up to rounding: the memoryless boundary
        r = 0.0
    if not 0.0 <= r < 1.0:
        raise InconsistentMeasurementError(
            f"duration {d0} with p0={p0} implies r={r} outside [0, 1)", value=r
        )
    return r


def noise_pdf(z, profile: ModelProfile):
    """Gaussian-mixture density of a real noise sample (scalar or array)."""
    z = np.asarray(z, dtype=float)
    s = profile.state_sigmas
    zz = z[..., None]
    comp = np.exp(-0.5 * (zz / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
    out = comp @ profile.state_probs
    return float(out) if out.ndim == 0 else out


def stationary_distribution(P) -> np.ndarray:
    """Stationary vector ``pi`` with ``pi P = pi`` of an irreducible chain."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise InvalidParameterError("transition matrix must be square")
    if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > PROB_ATOL):
        raise InvalidParameterError("transition matrix is not row-stochastic")
    n = P.shape[0]
    ncomp, _ = connected_components(P > 0, directed=True, connection="strong")
    if ncomp != 1:
        raise InvalidParameterError("transition matrix is not irreducible")
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"stationary solve failed: {exc}") from exc
    if not np.all(np.isfinite(pi)) or np.any(pi < -1e-12):
        raise NumericError("stationary solve produced an invalid vector")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()
