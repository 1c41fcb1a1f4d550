"""Seeded synthesis of bursty impulsive noise from a :class:`ModelProfile`.

Randomness comes from counter-based Philox generators derived from one integer
seed. The state path and the Gaussian emissions use separate child streams,
so the same seed gives the same state path in real and complex mode, and the
real-mode samples equal the in-phase component of the complex-mode samples.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .model import ModelProfile

STATE_STREAM = 0
EMISSION_STREAM = 1
BLOCK_STREAM = 2


def _generator(seed, *key):
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(ss))


def _check(n, seed):
    if int(n) != n or n < 1:
        raise InvalidParameterError(f"n must be a positive integer, got {n}")
    if int(seed) != seed or seed < 0:
        raise InvalidParameterError(f"seed must be a non-negative integer, got {seed}")


def _state_path(profile, n, rng):
    """Draw a chain that stays put with probability r, else redraws from p.

    Redrawing from ``p`` (which may pick the current state again) reproduces
    the transition rows ``r*[i == j] + (1 - r)*p_j`` exactly. Index 0 always
    redraws, which starts the chain in its stationary distribution.
    """
    refresh = rng.random(n) >= profile.r
    refresh[0] = True
    idx = np.flatnonzero(refresh)
    cdf = np.cumsum(profile.state_probs)
    cdf[-1] = 1.0
    fresh = np.searchsorted(cdf, rng.random(idx.size), side="right")
    owner = np.zeros(n, dtype=np.int64)
    owner[idx] = np.arange(idx.size)
    np.maximum.accumulate(owner, out=owner)
    dtype = np.int8 if profile.M <= 127 else np.int32
    return fresh[owner].astype(dtype)


def sample_state_sequence(profile: ModelProfile, n: int, seed: int) -> np.ndarray:
    """Hidden state path of length ``n``; deterministic for a given seed."""
    _check(n, seed)
    return _state_path(profile, int(n), _generator(seed, STATE_STREAM))


@dataclass(frozen=True, eq=False)
class NoiseRealization:
    states: np.ndarray
    samples: np.ndarray
    profile: ModelProfile
    seed: int

    def __post_init__(self):
        if self.states.shape != self.samples.shape:
            raise InvalidParameterError("states and samples differ in length")


def _emit(profile, states, rng, mode):
    sig = profile.state_sigmas[states]
    i = rng.standard_normal(states.size)
    i *= sig
    if mode == "real":
        return i
    q = rng.standard_normal(states.size)
    q *= sig
    return i + 1j * q


def synthesize_noise(
    profile: ModelProfile, n: int, seed: int, mode: str = "complex"
) -> NoiseRealization:
    """One continuous realization of ``n`` noise samples.

    In complex mode I and Q are independent, each with per-component standard
    deviation ``sigma[state]``.
    """
    if mode not in ("real", "complex"):
        raise InvalidParameterError(f"mode must be 'real' or 'complex', got {mode!r}")
    states = sample_state_sequence(profile, n, seed)
    samples = _emit(profile, states, _generator(seed, EMISSION_STREAM), mode)
    return NoiseRealization(states, samples, profile, int(seed))


def _block(profile, length, seed, b, mode):
    ss = np.random.SeedSequence(int(seed), spawn_key=(BLOCK_STREAM, b))
    st_ss, em_ss = ss.spawn(2)
    states = _state_path(profile, length, np.random.Generator(np.random.Philox(st_ss)))
    samples = _emit(profile, states, np.random.Generator(np.random.Philox(em_ss)), mode)
    return states, samples


def synthesize_blocks(
    profile: ModelProfile,
    n: int,
    seed: int,
    block_len: int,
    mode: str = "complex",
    workers: int = 1,
) -> NoiseRealization:
    """Realization assembled from independently seeded blocks.

    Block ``b`` covers samples ``[b*block_len, (b+1)*block_len)`` and draws its
    own stationary initial state, so the state path is NOT continuous across
    block boundaries. The output depends only on ``(profile, n, seed,
    block_len, mode)``; ``workers`` changes speed, never values.
    """
    _check(n, seed)
    if int(block_len) != block_len or block_len < 1:
        raise InvalidParameterError("block_len must be a positive integer")
    if mode not in ("real", "complex"):
        raise InvalidParameterError(f"mode must be 'real' or 'complex', got {mode!r}")
    n, block_len = int(n), int(block_len)
    spans = [(b, min(block_len, n - s)) for b, s in enumerate(range(0, n, block_len))]

    def work(span):
        b, length = span
        return _block(profile, length, seed, b, mode)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, spans))
    else:
        parts = [work(s) for s in spans]
    states = np.concatenate([p[0] for p in parts])
    samples = np.concatenate([p[1] for p in parts])
    return NoiseRealization(states, samples, profile, int(seed))
