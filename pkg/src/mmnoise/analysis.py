"""Impulse detection, burst segmentation, clustering and parameter estimation.

The estimation pipeline follows the measurement recipe step by step:

1. threshold ``|y| > alpha * W_rms`` to flag impulsive samples,
2. bridge short unflagged gaps and keep runs of at least a minimum duration
   as burst events,
3. cluster burst mean powers into ``M - 1`` impulsive groups with 1-D
   k-means; everything outside bursts is background,
4. read occupancy, run lengths and per-state spread off the labeling, and
   derive ``r`` from the background run length.

The threshold labeling misses sub-threshold samples inside impulsive runs and
cannot see transitions between two impulsive states inside one burst. An
optional refinement relabels every sample with its most probable hidden state
under the current estimate (forward-backward over the noise-state chain) and
repeats step 4 until the labeling settles.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Union

import numpy as np
from scipy import stats

from . import kernels
from .errors import (
    DegenerateClusterError,
    InconsistentMeasurementError,
    InsufficientDataError,
    InvalidParameterError,
)
from .iq import IQRecording
from .model import ModelProfile, check_probability_vector, correlation_from_duration

DEFAULT_ALPHA = 3.0
DEFAULT_MIN_DURATION_S = 0.5e-3
DEFAULT_GAP_TOLERANCE_S = 0.3e-6

# guards ceil() against 0.3e-6 * 2.6e6 = 0.7799999999999999 style round-off
_EPS = 1e-9


def samples_for_duration(seconds: float, sample_rate_hz: float) -> int:
    """Smallest whole number of samples spanning ``seconds``."""
    if seconds < 0:
        raise InvalidParameterError(f"duration must be nonnegative, got {seconds}")
    return max(0, math.ceil(seconds * sample_rate_hz - _EPS))


def _samples(rec):
    return rec.samples if isinstance(rec, IQRecording) else np.asarray(rec)


def rms(recording, start: int | None = None, stop: int | None = None) -> float:
    """Root mean square magnitude over the recording or ``[start, stop)``."""
    s = _samples(recording)[start:stop]
    if s.size == 0:
        raise InsufficientDataError("rms of an empty segment")
    a = s.real.astype(np.float64)
    b = s.imag.astype(np.float64)
    return math.sqrt((np.dot(a, a) + np.dot(b, b)) / s.size)


# --------------------------------------------------------------------------
# impulse mask and bursts


@dataclass(frozen=True, eq=False)
class ImpulseMask:
    """Boolean impulse flags with the threshold that produced them.

    In windowed mode ``threshold`` holds one value per consecutive window of
    ``window_len`` samples (the last window may be short).
    """

    flags: np.ndarray
    threshold: Union[float, np.ndarray]
    alpha: float
    window_len: int | None = None


def impulse_mask(recording, alpha: float = DEFAULT_ALPHA, window_len: int | None = None) -> ImpulseMask:
    """Flag samples whose magnitude strictly exceeds ``alpha * W_rms``."""
    if not alpha > 0:
        raise InvalidParameterError(f"alpha must be positive, got {alpha}")
    s = _samples(recording)
    mag = np.abs(s)
    if window_len is None:
        th = alpha * rms(s)
        return ImpulseMask(mag > th, th, float(alpha))
    if window_len < 1:
        raise InvalidParameterError("window_len must be >= 1")
    starts = np.arange(0, s.size, window_len)
    th = np.array([alpha * rms(s, a, a + window_len) for a in starts])
    per_sample = np.repeat(th, np.diff(np.r_[starts, s.size]))
    return ImpulseMask(mag > per_sample, th, float(alpha), int(window_len))


@dataclass(frozen=True)
class BurstEvent:
    start: int
    end: int
    mean_power: float
    cluster: int | None = None

    def __post_init__(self):
        if self.end <= self.start:
            raise InvalidParameterError("burst end must exceed start")

    @property
    def length(self) -> int:
        return self.end - self.start


def flagged_runs(flags) -> tuple[np.ndarray, np.ndarray]:
    """Start (inclusive) and end (exclusive) indices of runs of True."""
    d = np.diff(np.concatenate(([0], np.asarray(flags, dtype=np.int8), [0])))
    return np.flatnonzero(d == 1), np.flatnonzero(d == -1)


def burst_spans(flags, gap_samples: int, min_samples: int):
    """Bridge unflagged gaps of at most ``gap_samples`` and drop short runs."""
    s, e = flagged_runs(flags)
    if s.size == 0:
        return s, e
    keep = np.concatenate(([True], (s[1:] - e[:-1]) > gap_samples))
    heads = np.flatnonzero(keep)
    starts = s[heads]
    ends = e[np.concatenate((heads[1:] - 1, [s.size - 1]))]
    ok = (ends - starts) >= max(min_samples, 1)
    return starts[ok], ends[ok]


def _span_power(samples, starts, ends):
    p = np.abs(samples.astype(np.complex128)) ** 2
    cs = np.concatenate(([0.0], np.cumsum(p)))
    return (cs[ends] - cs[starts]) / (ends - starts)


def gap_samples(sample_rate_hz, gap_tolerance_s=DEFAULT_GAP_TOLERANCE_S, bridge_s=None):
    g = gap_tolerance_s if bridge_s is None else max(gap_tolerance_s, bridge_s)
    return samples_for_duration(g, sample_rate_hz)


def detect_bursts(
    mask: ImpulseMask,
    sample_rate_hz: float,
    min_duration_s: float = DEFAULT_MIN_DURATION_S,
    gap_tolerance_s: float = DEFAULT_GAP_TOLERANCE_S,
    *,
    bridge_s: float | None = None,
    samples=None,
) -> list[BurstEvent]:
    """Segment flagged samples into burst events.

    Gaps of unflagged samples no longer than the tolerance (in samples,
    rounded up) are bridged; ``bridge_s`` widens the tolerance further.
    Bridged runs shorter than ``min_duration_s`` are dropped. ``mean_power``
    is averaged over the bridged span and needs ``samples``; without them it
    is NaN.
    """
    if min_duration_s < 0 or gap_tolerance_s < 0 or (bridge_s is not None and bridge_s < 0):
        raise InvalidParameterError("durations must be nonnegative")
    g = gap_samples(sample_rate_hz, gap_tolerance_s, bridge_s)
    min_len = samples_for_duration(min_duration_s, sample_rate_hz)
    starts, ends = burst_spans(mask.flags, g, min_len)
    if samples is not None:
        power = _span_power(_samples(samples), starts, ends)
    else:
        power = np.full(starts.size, np.nan)
    return [BurstEvent(int(a), int(b), float(p)) for a, b, p in zip(starts, ends, power)]


def cover_mask(n: int, starts, ends) -> np.ndarray:
    """Boolean array that is True inside ``[starts[i], ends[i])``."""
    d = np.zeros(n + 1, dtype=np.int64)
    np.add.at(d, np.asarray(starts), 1)
    np.add.at(d, np.asarray(ends), -1)
    return np.cumsum(d[:-1]) > 0


# --------------------------------------------------------------------------
# background diagnostics


@dataclass(frozen=True, eq=False)
class BackgroundStats:
    n: int
    mean_i: float
    mean_q: float
    var_i: float
    var_q: float
    kurtosis_i: float
    kurtosis_q: float
    bin_edges: np.ndarray = field(repr=False)
    hist_i: np.ndarray = field(repr=False)
    hist_q: np.ndarray = field(repr=False)

    @property
    def kurtosis(self) -> float:
        return 0.5 * (self.kurtosis_i + self.kurtosis_q)

    def summary(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name[:4] not in ("bin_", "hist")}


MIN_BACKGROUND_SAMPLES = 100


def background_stats(recording, exclude, bins: int = 101) -> BackgroundStats:
    """Moments and histograms of I and Q over samples not excluded.

    ``exclude`` is an :class:`ImpulseMask` (flagged samples are excluded) or
    a boolean array of the recording's length. Kurtosis is the excess
    (Fisher) value, zero for a Gaussian.
    """
    s = _samples(recording)
    ex = exclude.flags if isinstance(exclude, ImpulseMask) else np.asarray(exclude, dtype=bool)
    if ex.shape != s.shape:
        raise InvalidParameterError("exclusion mask length differs from the recording")
    keep = s[~ex]
    if keep.size < MIN_BACKGROUND_SAMPLES:
        raise InsufficientDataError(
            f"only {keep.size} background samples; need {MIN_BACKGROUND_SAMPLES}"
        )
    i = keep.real.astype(np.float64)
    q = keep.imag.astype(np.float64)
    lim = 5.0 * max(i.std(), q.std(), np.finfo(float).tiny)
    edges = np.linspace(-lim, lim, bins + 1)
    return BackgroundStats(
        n=int(keep.size),
        mean_i=float(i.mean()),
        mean_q=float(q.mean()),
        var_i=float(i.var()),
        var_q=float(q.var()),
        kurtosis_i=float(stats.kurtosis(i)),
        kurtosis_q=float(stats.kurtosis(q)),
        bin_edges=edges,
        hist_i=np.histogram(i, edges)[0],
        hist_q=np.histogram(q, edges)[0],
    )


# --------------------------------------------------------------------------
# 1-D k-means


def kmeans_1d(values, k: int, max_iters: int = 100):
    """Lloyd's algorithm on scalars.

    Centroids start at the ``(2j+1)/(2k)`` quantiles. Assignment ties go to
    the lower-index centroid. Iteration stops when assignments stop changing
    or after ``max_iters`` updates. Work is done on the sorted values so the
    result does not depend on input order.

    Returns
    -------
    centroids : ndarray, shape (k,)
        Ascending.
    labels : ndarray of int
        Cluster index of each input value, matching ``centroids``.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if int(k) != k or k < 1:
        raise InvalidParameterError(f"k must be a positive integer, got {k}")
    if v.size < k:
        raise InvalidParameterError(f"need at least k={k} values, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise InvalidParameterError("values must be finite")
    uniq = np.unique(v)
    if uniq.size < k:
        raise DegenerateClusterError(f"{uniq.size} distinct values cannot fill {k} clusters")
    order = np.argsort(v, kind="stable")
    xs = v[order]
    cum = np.concatenate(([0.0], np.cumsum(xs)))
    q = (2 * np.arange(k) + 1) / (2 * k)
    c = np.quantile(xs, q)
    if np.unique(c).size < k:
        c = np.quantile(uniq, q)

    def assign(c):
        # sorted values against ascending centroids give contiguous clusters
        return np.argmin(np.abs(xs[:, None] - c[None, :]), axis=1)

    lab = assign(c)
    for _ in range(int(max_iters)):
        bounds = np.searchsorted(lab, np.arange(k + 1), side="left")
        cnt = np.diff(bounds)
        sums = cum[bounds[1:]] - cum[bounds[:-1]]
        new_c = np.where(cnt > 0, sums / np.maximum(cnt, 1), c)
        empty = np.flatnonzero(cnt == 0)
        for j in empty:
            # reseed at the value farthest from its current centroid
            far = int(np.argmax(np.abs(xs - new_c[lab])))
            new_c[j] = xs[far]
        c = np.sort(new_c)
        new_lab = assign(c)
        if np.array_equal(new_lab, lab):
            break
        lab = new_lab
    if np.unique(lab).size < k:
        raise DegenerateClusterError("k-means left a cluster empty")
    labels = np.empty_like(lab)
    labels[order] = lab
    return c, labels


def within_cluster_sse(values, centroids, labels) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.sum((v - np.asarray(centroids)[labels]) ** 2))


# --------------------------------------------------------------------------
# estimation


@dataclass(frozen=True)
class EstimationConfig:
    """Knobs for :func:`estimate_profile`.

    ``alpha`` may be ``"auto"``: a grid of thresholds is scanned and the one
    whose off-burst samples have excess kurtosis closest to zero is used.
    ``cluster_domain`` is ``"db"`` (cluster burst powers in decibels) or
    ``"linear"``. ``refine_iters`` counts state-posterior relabeling passes
    run after the threshold labeling; the default of 0 reports the threshold
    labeling as is.
    """

    M: int = 4
    alpha: Union[float, str] = DEFAULT_ALPHA
    min_duration_s: float = DEFAULT_MIN_DURATION_S
    gap_tolerance_s: float = DEFAULT_GAP_TOLERANCE_S
    bridge_s: float | None = None
    window_len: int | None = None
    cluster_domain: str = "db"
    kmeans_max_iters: int = 100
    refine_iters: int = 0
    refine_tol: float = 1e-4
    alpha_grid: tuple = tuple(np.round(np.geomspace(0.1, 5.0, 25), 4).tolist())
    alpha_scan_samples: int = 1 << 22

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise InvalidParameterError("M must be an integer >= 2")
        if self.alpha != "auto" and not (isinstance(self.alpha, (int, float)) and self.alpha > 0):
            raise InvalidParameterError(f"alpha must be positive or 'auto', got {self.alpha!r}")
        if self.cluster_domain not in ("db", "linear"):
            raise InvalidParameterError("cluster_domain must be 'db' or 'linear'")
        if self.refine_iters < 0:
            raise InvalidParameterError("refine_iters must be >= 0")

    @classmethod
    def for_synthetic(cls, **overrides):
        """Settings suited to model-generated noise with short state runs.

        Synthetic runs last tens of samples, so the minimum burst duration is
        dropped and a few microseconds of bridging keep sub-threshold samples
        inside impulsive runs. Bridged bursts often span several impulsive
        states, so up to ten relabeling passes split them by state.
        """
        kw = dict(alpha="auto", min_duration_s=0.0, bridge_s=2.5e-6, refine_iters=10)
        kw.update(overrides)
        return cls(**kw)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["alpha_grid"] = list(self.alpha_grid)
        return d


@dataclass(frozen=True, eq=False)
class EstimationReport:
    """Estimated profile with durations and diagnostics.

    ``durations`` are mean same-state run lengths in samples. ``profile.r``
    follows from ``durations[0]`` and ``profile.state_probs[0]``.
    """

    profile: ModelProfile
    durations: np.ndarray
    burst_count: int
    background_stats: BackgroundStats | None = None
    config: EstimationConfig | None = None
    alpha: float | None = None
    threshold: float | None = None
    bursts: list = field(default_factory=list, repr=False)
    initial_profile: ModelProfile | None = None
    refine_passes: int = 0
    refine_changed: float = float("nan")
    sample_rate_hz: float | None = None
    n_samples: int | None = None

    def __post_init__(self):
        d = np.asarray(self.durations, dtype=float)
        if d.shape != self.profile.state_probs.shape:
            raise InvalidParameterError("durations and state vector differ in length")
        check_probability_vector(self.profile.state_probs)
        if not 0.0 <= self.profile.r < 1.0:
            raise InconsistentMeasurementError(f"r = {self.profile.r} outside [0, 1)", value=self.profile.r)
        object.__setattr__(self, "durations", d)

    @property
    def implied_r(self) -> float:
        return correlation_from_duration(self.durations[0], self.profile.state_probs[0])

    def check_consistency(self, atol: float = 5e-4) -> float:
        """Compare ``r`` with the value implied by the background duration.

        Returns the implied value; raises when it differs by more than
        ``atol``.
        """
        implied = self.implied_r
        if abs(implied - self.profile.r) > atol:
            raise InconsistentMeasurementError(
                f"r = {self.profile.r} but background duration implies {implied:.6f}",
                value=implied,
            )
        return implied


def _labels_from_bursts(n, starts, ends, clusters):
    lbl = np.zeros(n, dtype=np.int8)
    for a, b, c in zip(starts, ends, clusters):
        lbl[a:b] = c
    return lbl


def label_runs(labels):
    """Starts, lengths and values of maximal constant runs."""
    labels = np.asarray(labels)
    ch = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.concatenate(([0], ch))
    ends = np.concatenate((ch, [labels.size]))
    return starts, ends - starts, labels[starts]


def estimates_from_labels(samples, labels, M):
    """Occupancy, mean run length and per-component spread of each state.

    Returns ``(p, durations, sigmas, r)``; ``r`` comes from the background
    run length and occupancy.
    """
    n = labels.size
    counts = np.bincount(labels, minlength=M).astype(np.float64)
    if counts.size > M:
        raise InvalidParameterError("labels exceed the state count")
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise InsufficientDataError(f"no samples attributed to state(s) {missing.tolist()}")
    p = counts / n
    p[0] = 1.0 - p[1:].sum()
    _, lengths, vals = label_runs(labels)
    runs = np.bincount(vals, minlength=M).astype(np.float64)
    durations = np.bincount(vals, weights=lengths, minlength=M) / runs
    z = samples.astype(np.complex128)
    sig = np.empty(M)
    for m in range(M):
        sel = z[labels == m]
        pooled = np.concatenate((sel.real, sel.imag))
        sig[m] = pooled.std(ddof=1) if pooled.size > 1 else 0.0
    if np.any(sig <= 0):
        raise InsufficientDataError("a state has zero spread; cannot estimate its sigma")
    r = correlation_from_duration(durations[0], p[0])
    return p, durations, sig, r


def _chunk_plan(n, core, overlap):
    L = core + 2 * overlap
    if n <= L:
        return n, [(0, 0, n)]
    plan = []
    for s in range(0, n, core):
        a = min(max(0, s - overlap), n - L)
        plan.append((a, s - a, min(core, n - s)))
    return L, plan


def map_state_labels(
    samples,
    profile: ModelProfile,
    core: int = 1 << 16,
    batch_samples: int = 1 << 21,
    workers: int = 1,
):
    """Most probable hidden state of every complex sample.

    The recording is processed in overlapping chunks; each chunk runs an
    independent forward-backward pass started from the stationary vector and
    contributes only its central ``core`` samples. The overlap grows with the
    chain memory ``1/(1-r)``. Chunks are grouped into fixed batches, and
    ``workers`` threads process whole batches, so the labels do not depend
    on ``workers``.
    """
    z = np.asarray(samples)
    n = z.size
    r = profile.r
    memory = 1.0 / max(1.0 - r, 1e-12)
    overlap = int(min(1 << 18, max(1024, math.ceil(20.0 * memory))))
    L, plan = _chunk_plan(n, core, overlap)
    var = profile.state_vars
    log_norm = -np.log(2.0 * np.pi * var)
    with np.errstate(divide="ignore"):
        log_P = np.log(profile.transition_matrix())
        log_init = np.log(profile.state_probs)
    a2 = z.real.astype(np.float64) ** 2 + z.imag.astype(np.float64) ** 2
    out = np.empty(n, dtype=np.int8)
    per = max(1, batch_samples // L)

    def work(group):
        seg = np.stack([a2[a : a + L] for a, _, _ in group])
        le = log_norm - seg[..., None] / (2.0 * var)
        lpred, lbeta = kernels.forward_backward(le, log_P, log_init)
        lab = np.argmax(lpred + le + lbeta, axis=-1)
        for row, (a, off, cnt) in zip(lab, group):
            out[a + off : a + off + cnt] = row[off : off + cnt]

    groups = [plan[i : i + per] for i in range(0, len(plan), per)]
    if workers > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, groups))
    else:
        for g in groups:
            work(g)
    return out


def choose_alpha(samples, sample_rate_hz, config: EstimationConfig):
    """Threshold factor whose off-burst samples look most Gaussian.

    Scans ``config.alpha_grid`` on the first ``alpha_scan_samples`` samples
    and returns ``(alpha, kurtosis_by_alpha)``.
    """
    z = np.asarray(samples)[: config.alpha_scan_samples]
    mag = np.abs(z)
    w = rms(z)
    g = gap_samples(sample_rate_hz, config.gap_tolerance_s, config.bridge_s)
    min_len = samples_for_duration(config.min_duration_s, sample_rate_hz)
    table = {}
    for alpha in config.alpha_grid:
        s, e = burst_spans(mag > alpha * w, g, min_len)
        if s.size == 0:
            continue
        off = ~cover_mask(z.size, s, e)
        if off.sum() < MIN_BACKGROUND_SAMPLES:
            continue
        k = 0.5 * (stats.kurtosis(z.real[off]) + stats.kurtosis(z.imag[off]))
        table[float(alpha)] = float(k)
    if not table:
        raise InsufficientDataError("no threshold in the scan produced any burst")
    best = min(table, key=lambda a: (abs(table[a]), a))
    return best, table


def estimate_profile(
    recording: IQRecording, config: EstimationConfig | None = None, workers: int = 1
) -> EstimationReport:
    """Estimate a :class:`ModelProfile` from an IQ recording.

    Thresholding and clustering are followed by refinement passes that
    relabel every sample with its most probable state under the current
    estimate and re-estimate, until fewer than ``config.refine_tol`` of the
    labels change. ``workers`` only affects speed.
    """
    cfg = config or EstimationConfig()
    z = recording.samples
    n = z.size
    fs = recording.sample_rate_hz
    alpha = choose_alpha(z, fs, cfg)[0] if cfg.alpha == "auto" else float(cfg.alpha)
    mask = impulse_mask(z, alpha, cfg.window_len)
    g = gap_samples(fs, cfg.gap_tolerance_s, cfg.bridge_s)
    min_len = samples_for_duration(cfg.min_duration_s, fs)
    starts, ends = burst_spans(mask.flags, g, min_len)
    k = cfg.M - 1
    if starts.size == 0:
        raise InsufficientDataError("no bursts detected; lower alpha or the minimum duration")
    if starts.size < k:
        raise InsufficientDataError(f"{starts.size} bursts cannot populate {k} clusters")
    power = _span_power(z, starts, ends)
    feat = 10.0 * np.log10(np.maximum(power, np.finfo(float).tiny)) if cfg.cluster_domain == "db" else power
    _, lab = kmeans_1d(feat, k, cfg.kmeans_max_iters)
    clusters = lab + 1
    bursts = [
        BurstEvent(int(a), int(b), float(p), int(c))
        for a, b, p, c in zip(starts, ends, power, clusters)
    ]
    labels = _labels_from_bursts(n, starts, ends, clusters)
    p, d, sig, r = estimates_from_labels(z, labels, cfg.M)
    initial = ModelProfile(p, sig, r)

    passes = 0
    changed = float("nan")
    for _ in range(cfg.refine_iters):
        current = ModelProfile(p, sig, r)
        new = map_state_labels(z, current, workers=workers)
        changed = float(np.mean(new != labels))
        labels = new
        passes += 1
        p, d, sig, r = estimates_from_labels(z, labels, cfg.M)
        if changed < cfg.refine_tol:
            break

    order = np.argsort(sig, kind="stable")
    if not np.array_equal(order, np.arange(cfg.M)):
        # keep durations aligned with the profile's ascending-sigma order
        d = d[order]
        labels = np.argsort(order)[labels].astype(np.int8)
    profile = ModelProfile(p, sig, r)
    bg = background_stats(z, labels != 0)
    return EstimationReport(
        profile=profile,
        durations=d,
        burst_count=int(starts.size),
        background_stats=bg,
        config=cfg,
        alpha=alpha,
        threshold=float(mask.threshold) if np.ndim(mask.threshold) == 0 else None,
        bursts=bursts,
        initial_profile=initial,
        refine_passes=passes,
        refine_changed=changed,
        sample_rate_hz=fs,
        n_samples=n,
    )
