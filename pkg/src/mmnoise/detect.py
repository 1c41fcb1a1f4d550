"""Soft-output BPSK detectors for channels with Markov-modulated noise.

LLRs are ``log P(x=+1 | y) - log P(x=-1 | y)``, positive favoring symbol +1
(bit 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InputError, InvalidParameterError
from .model import ModelProfile

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class DetectorInput:
    y: np.ndarray
    profile: ModelProfile
    symbol_priors: np.ndarray | None = None


def awgn_llrs(y, noise_variance: float) -> np.ndarray:
    """Memoryless Gaussian LLR ``2 y / sigma^2`` for unit-energy BPSK."""
    if not noise_variance > 0:
        raise InvalidParameterError(f"noise variance must be positive, got {noise_variance}")
    y = np.asarray(y, dtype=np.float64)
    return 2.0 * y / noise_variance


def _lse(x, axis=-1):
    mx = np.max(x, axis=axis, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        return np.squeeze(mx, axis) + np.log(np.sum(np.exp(x - mx), axis=axis))


def _log_prior(prior_llrs, shape):
    if prior_llrs is None:
        la = np.zeros(shape)
    else:
        la = np.broadcast_to(np.asarray(prior_llrs, dtype=np.float64), shape)
        if not np.all(np.isfinite(la)):
            raise InputError("prior LLRs must be finite")
    # log P(x=+1), log P(x=-1)
    return la, -np.logaddexp(0.0, -la), -np.logaddexp(0.0, la)


def bcjr_llrs(y, profile: ModelProfile, prior_llrs=None) -> np.ndarray:
    """A-posteriori symbol LLRs, marginalizing the hidden noise-state chain.

    Parameters
    ----------
    y : array_like, shape (n,) or (B, n)
        Received real samples ``x + z``; a leading axis holds independent
        blocks, each starting in the stationary state distribution.
    profile : ModelProfile
        Noise model; ``state_sigmas`` are per-sample standard deviations.
    prior_llrs : array_like, optional
        A-priori symbol LLRs, broadcast against ``y``. Default 0.

    Returns
    -------
    ndarray
        LLRs with the shape of ``y``. With one state the result is bitwise
        equal to :func:`awgn_llrs` with that state's variance.
    """
    if isinstance(y, DetectorInput):
        y, profile, prior_llrs = y.y, y.profile, y.symbol_priors
    y = np.asarray(y, dtype=np.float64)
    if y.ndim not in (1, 2):
        raise InputError("y must be 1-D or 2-D")
    if not np.all(np.isfinite(y)):
        raise InputError("received samples must be finite")
    la, lp_plus, lp_minus = _log_prior(prior_llrs, y.shape)
    var = profile.state_vars
    yy = y[..., None]
    # per-state Gaussian log densities for x = +1 and x = -1
    ln_plus = -0.5 * (_LOG_2PI + np.log(var)) - (yy - 1.0) ** 2 / (2.0 * var)
    ln_minus = -0.5 * (_LOG_2PI + np.log(var)) - (yy + 1.0) ** 2 / (2.0 * var)
    a_plus = lp_plus[..., None] + ln_plus
    a_minus = lp_minus[..., None] + ln_minus
    log_emit = np.logaddexp(a_plus, a_minus)
    with np.errstate(divide="ignore"):
        log_P = np.log(profile.transition_matrix())
        log_init = np.log(profile.state_probs)
    lpred, lbeta = kernels.forward_backward(log_emit, log_P, log_init)
    # Split each state's joint log weight into a part shared by both symbols
    # and a half log-ratio h = la/2 + y/sigma^2, so x = +/-1 get c +/- h.
    # Negating y (with zero priors) only flips h, which keeps the output
    # exactly antisymmetric; with one state the result is exactly 2h.
    c = lpred + lbeta + 0.5 * (a_plus + a_minus)
    c -= c.max(axis=-1, keepdims=True)
    h = 0.5 * la[..., None] + yy / var
    return _lse(c + h) - _lse(c - h)


def mixture_llrs(y, profile: ModelProfile) -> np.ndarray:
    """Memoryless Gaussian-mixture LLR, ignoring state correlation."""
    y = np.asarray(y, dtype=np.float64)[..., None]
    s = profile.state_sigmas
    lp = np.log(profile.state_probs) - np.log(s)
    num = _lse(lp - (y - 1.0) ** 2 / (2.0 * s * s))
    den = _lse(lp - (y + 1.0) ** 2 / (2.0 * s * s))
    return num - den
