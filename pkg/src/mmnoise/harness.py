"""Monte-Carlo BER of LDPC-coded BPSK over Markov-modulated impulsive noise.

Each trial draws information bits, encodes them, maps bit ``b`` to the symbol
``1 - 2b``, adds real-valued noise synthesized from the profile scaled to the
requested SNR, and decodes the LLRs of every configured detector. All
detectors at a given ``(snr index, trial index)`` see the same bits and the
same noise.

Trials (frames of one or more codewords) are simulated in fixed-size
batches. Per detector and SNR point, the accounting stops at the first trial
whose cumulative error count reaches the target (or at the codeword budget),
so results do not depend on the batch size or the number of worker threads.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .detect import awgn_llrs, bcjr_llrs
from .errors import ConfigurationError, MMNoiseError
from .iq import atomic_write
from .ldpc import LdpcCode, load_code, peg_regular
from .model import ModelProfile
from .profile_io import load_profile
from .synth import synthesize_noise

CONVENTIONS = ("total", "background")
DETECTORS = ("bcjr", "awgn")
CSV_COLUMNS = (
    "snr_db", "convention", "detector", "ber", "bit_errors", "bits",
    "codewords", "convergence_rate", "seed", "low_confidence",
)


def reference_power(profile: ModelProfile, convention: str) -> float:
    if convention == "total":
        return profile.mixture_power
    if convention == "background":
        return float(profile.state_vars[0])
    raise ConfigurationError(f"unknown SNR convention {convention!r}; expected one of {CONVENTIONS}")


def scale_profile_to_snr(profile: ModelProfile, snr_db: float, convention: str = "total", rate: float = 0.5) -> ModelProfile:
    """Scale every state deviation so the reference power meets ``Eb/N0 = snr_db``.

    For unit-energy BPSK at code rate ``R`` the per-component noise power is
    ``1 / (2 R 10^(snr_db/10))``. ``convention`` picks the reference:
    ``"total"`` is the mixture power, ``"background"`` the state-0 power.
    """
    ref = reference_power(profile, convention)
    if not 0.0 < rate <= 1.0:
        raise ConfigurationError(f"code rate must lie in (0, 1], got {rate}")
    target = 1.0 / (2.0 * rate * 10.0 ** (snr_db / 10.0))
    return profile.scaled(float(np.sqrt(target / ref)))


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a BER sweep.

    ``profile`` and ``code`` accept loaded objects or references: a profile
    file path, and either an alist path or ``"peg:N[:SEED]"`` for a generated
    regular (3,6) code.

    ``interleave_depth`` > 1 groups that many codewords into a frame whose
    coded symbols are randomly permuted before transmission, so one noise
    burst spreads over several codewords. The default of 1 sends each
    codeword in natural order. ``max_codewords`` is rounded up to whole
    frames, and the error target is checked after each frame.
    """

    profile: Union[ModelProfile, str, Path]
    code: Union[LdpcCode, str, Path]
    snr_db: tuple
    detectors: tuple = DETECTORS
    convention: str = "total"
    max_codewords: int = 10_000
    target_errors: int = 100
    seed: int = 0
    max_iters: int = 50
    batch_size: int = 64
    workers: int = 1
    all_zero: bool = False
    interleave_depth: int = 1

    def __post_init__(self):
        snr = tuple(float(s) for s in np.atleast_1d(self.snr_db))
        if not snr:
            raise ConfigurationError("the SNR grid is empty")
        object.__setattr__(self, "snr_db", snr)
        object.__setattr__(self, "detectors", tuple(self.detectors))
        bad = [d for d in self.detectors if d not in DETECTORS]
        if bad or not self.detectors:
            raise ConfigurationError(f"detectors must be drawn from {DETECTORS}, got {self.detectors}")
        if self.convention not in CONVENTIONS:
            raise ConfigurationError(f"unknown SNR convention {self.convention!r}")
        if self.max_codewords < 1 or self.target_errors < 1 or self.batch_size < 1 or self.workers < 1:
            raise ConfigurationError("max_codewords, target_errors, batch_size and workers must be >= 1")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")
        if self.interleave_depth < 1:
            raise ConfigurationError("interleave_depth must be >= 1")

    def resolved_profile(self) -> ModelProfile:
        if isinstance(self.profile, ModelProfile):
            return self.profile
        try:
            return load_profile(self.profile)
        except (OSError, MMNoiseError) as exc:
            raise ConfigurationError(f"cannot load profile {self.profile}: {exc}") from exc

    def resolved_code(self) -> LdpcCode:
        if isinstance(self.code, LdpcCode):
            return self.code
        ref = str(self.code)
        try:
            if ref.startswith("peg:"):
                parts = ref.split(":")[1:]
                n = int(parts[0])
                seed = int(parts[1]) if len(parts) > 1 else 0
                return peg_regular(n, 3, 6, seed)
            return load_code(ref)
        except (OSError, ValueError, MMNoiseError) as exc:
            raise ConfigurationError(f"cannot load code {ref}: {exc}") from exc

    def echo(self) -> dict:
        """Flat description of the configuration for output headers."""
        def ref(x):
            return x if isinstance(x, (str, Path)) else type(x).__name__
        return {
            "profile": str(ref(self.profile)),
            "code": str(ref(self.code)),
            "snr_db": " ".join(repr(s) for s in self.snr_db),
            "detectors": " ".join(self.detectors),
            "convention": self.convention,
            "max_codewords": self.max_codewords,
            "target_errors": self.target_errors,
            "seed": self.seed,
            "max_iters": self.max_iters,
            "all_zero": self.all_zero,
            "interleave_depth": self.interleave_depth,
        }


@dataclass(frozen=True)
class BerPoint:
    snr_db: float
    detector: str
    bit_errors: int
    bits_simulated: int
    codewords: int
    converged: int
    convention: str = "total"
    seed: int = 0
    low_confidence: bool = False

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_simulated if self.bits_simulated else float("nan")

    @property
    def convergence_rate(self) -> float:
        return self.converged / self.codewords if self.codewords else float("nan")

    def row(self) -> dict:
        return {
            "snr_db": repr(self.snr_db),
            "convention": self.convention,
            "detector": self.detector,
            "ber": repr(self.ber),
            "bit_errors": self.bit_errors,
            "bits": self.bits_simulated,
            "codewords": self.codewords,
            "convergence_rate": repr(self.convergence_rate),
            "seed": self.seed,
            "low_confidence": int(self.low_confidence),
        }


def trial_seed(seed: int, snr_index: int, trial: int) -> int:
    """64-bit seed for one trial, derived from the experiment seed."""
    words = np.random.SeedSequence(seed, spawn_key=(snr_index, trial)).generate_state(2, np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


def _frame_inputs(cfg, code, noise_profile, seed):
    """Bits, channel output and de-interleaving map for one frame."""
    D, k, n = cfg.interleave_depth, code.k, code.n
    rng = np.random.default_rng(np.random.Philox(seed))
    if cfg.all_zero:
        bits = np.zeros((D, k), dtype=np.uint8)
        cw = np.zeros((D, n), dtype=np.uint8)
    else:
        bits = rng.integers(0, 2, (D, k), dtype=np.uint8)
        cw = code.encode(bits)
    x = (1.0 - 2.0 * cw).ravel()
    perm = rng.permutation(D * n) if D > 1 else None
    if perm is not None:
        # coded symbol j of the frame goes out at channel time perm[j]
        tx = np.empty_like(x)
        tx[perm] = x
        x = tx
    y = x + synthesize_noise(noise_profile, D * n, seed, mode="real").samples
    return bits, y, perm


def _run_trials(cfg, code, noise_profile, snr_index, trials, detectors):
    """Per-frame bit errors and converged-codeword counts of each detector."""
    D, n = cfg.interleave_depth, code.n
    B = len(trials)
    frames = [_frame_inputs(cfg, code, noise_profile, trial_seed(cfg.seed, snr_index, t)) for t in trials]
    y = np.stack([f[1] for f in frames])
    out = {}
    for det in detectors:
        if det == "bcjr":
            llr = bcjr_llrs(y, noise_profile)
        else:
            llr = awgn_llrs(y, float(noise_profile.state_vars[0]))
        errs = np.zeros(B, dtype=np.int64)
        conv = np.zeros(B, dtype=np.int64)
        for j, (bits, _, perm) in enumerate(frames):
            row = llr[j] if perm is None else llr[j][perm]
            for c in range(D):
                u_hat, ok, _ = code.decode(row[c * n : (c + 1) * n], cfg.max_iters)
                errs[j] += np.count_nonzero(u_hat != bits[c])
                conv[j] += ok
        out[det] = (errs, conv)
    return out


def run_ber(config: ExperimentConfig, progress=None) -> list[BerPoint]:
    """Simulate every SNR point for every detector.

    Returns points ordered by SNR then by detector as configured. A point is
    ``low_confidence`` when the codeword budget ran out before the error
    target was reached.
    """
    code = config.resolved_code()
    profile = config.resolved_profile()
    if code.k == 0:
        raise ConfigurationError("code has no information bits")
    D = config.interleave_depth
    max_frames = -(-config.max_codewords // D)
    points = []
    pool = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        for i, snr in enumerate(config.snr_db):
            noise_profile = scale_profile_to_snr(profile, snr, config.convention, code.rate)
            acc = {d: [0, 0, 0, False] for d in config.detectors}  # errors, frames, converged, done
            next_frame = 0
            while not all(a[3] for a in acc.values()):
                active = [d for d, a in acc.items() if not a[3]]
                span = min(config.batch_size * config.workers, max_frames - next_frame)
                trials = list(range(next_frame, next_frame + span))
                if pool is None:
                    parts = [_run_trials(config, code, noise_profile, i, trials, active)]
                else:
                    chunks = [c for c in np.array_split(trials, config.workers) if c.size]
                    parts = list(pool.map(
                        lambda c: _run_trials(config, code, noise_profile, i, c.tolist(), active), chunks
                    ))
                next_frame += span
                for det in active:
                    a = acc[det]
                    errs = np.concatenate([p[det][0] for p in parts])
                    conv = np.concatenate([p[det][1] for p in parts])
                    cum = a[0] + np.cumsum(errs)
                    hit = np.flatnonzero(cum >= config.target_errors)
                    stop = hit[0] + 1 if hit.size else errs.size
                    a[0] += int(errs[:stop].sum())
                    a[1] += int(stop)
                    a[2] += int(conv[:stop].sum())
                    a[3] = bool(hit.size) or next_frame >= max_frames
            for det in config.detectors:
                e, frames, cv, _ = acc[det]
                pt = BerPoint(
                    snr_db=snr,
                    detector=det,
                    bit_errors=e,
                    bits_simulated=frames * D * code.k,
                    codewords=frames * D,
                    converged=cv,
                    convention=config.convention,
                    seed=config.seed,
                    low_confidence=e < config.target_errors,
                )
                points.append(pt)
                if progress is not None:
                    progress(pt)
    finally:
        if pool is not None:
            pool.shutdown()
    return points


def format_ber_csv(points, echo: dict | None = None) -> str:
    buf = io.StringIO()
    for k, v in (echo or {}).items():
        buf.write(f"# {k} = {v}\n")
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for p in points:
        w.writerow(p.row())
    return buf.getvalue()


def write_ber_csv(points, path, echo: dict | None = None) -> None:
    atomic_write(path, format_ber_csv(points, echo), mode="w")
