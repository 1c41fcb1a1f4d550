"""Flat ``key = value`` text files for profiles and estimation reports.

One entry per line; ``#`` starts a comment line. Vectors are
space-separated decimals. A profile file looks like::

    kind = profile
    M = 4
    r = 0.979
    p = 0.54 0.13 0.11 0.22
    sigma = 0.01 0.066 0.112 0.183

A canonical Class A file uses ``kind = middleton`` with keys ``A``,
``Gamma``, ``sigma2``, ``M`` and ``r``. Estimation reports use
``kind = estimate`` and add durations, diagnostics and a ``config.*`` echo of
every setting that produced them.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidParameterError
from .iq import atomic_write
from .model import MiddletonParams, ModelProfile


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, str):
        return v
    if v is None:
        return "none"
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt(x) for x in np.asarray(v).tolist())
    return json.dumps(v, sort_keys=True)


def format_kv(entries: dict, header: str | None = None) -> str:
    lines = [f"# {ln}" for ln in (header or "").splitlines()]
    for key, val in entries.items():
        if "=" in key or key != key.strip():
            raise InvalidParameterError(f"bad key {key!r}")
        lines.append(f"{key} = {_fmt(val)}")
    return "\n".join(lines) + "\n"


def parse_kv(text: str, origin: str = "<text>") -> dict:
    """Ordered mapping of raw string values; duplicate keys are an error."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise FormatError(f"{origin}:{lineno}: expected 'key = value'", location=lineno)
        if key in out:
            raise FormatError(f"{origin}:{lineno}: duplicate key {key!r}", location=lineno)
        out[key] = (lineno, val.strip())
    return out


class _Reader:
    def __init__(self, entries, origin):
        self.entries = entries
        self.origin = origin

    def _get(self, key):
        if key not in self.entries:
            raise FormatError(f"{self.origin}: missing key {key!r}")
        return self.entries[key]

    def float(self, key):
        lineno, v = self._get(key)
        try:
            return float(v)
        except ValueError:
            raise FormatError(f"{self.origin}:{lineno}: {key} is not a number", location=lineno) from None

    def int(self, key):
        lineno, v = self._get(key)
        try:
            return int(v)
        except ValueError:
            raise FormatError(f"{self.origin}:{lineno}: {key} is not an integer", location=lineno) from None

    def vector(self, key, length=None):
        lineno, v = self._get(key)
        try:
            arr = np.array([float(t) for t in v.split()])
        except ValueError:
            raise FormatError(f"{self.origin}:{lineno}: {key} holds a non-number", location=lineno) from None
        if length is not None and arr.size != length:
            raise FormatError(
                f"{self.origin}:{lineno}: {key} has {arr.size} values, expected {length}", location=lineno
            )
        return arr

    def str(self, key):
        return self._get(key)[1]


def _build(fn, reader, key):
    try:
        return fn()
    except InvalidParameterError as exc:
        lineno = reader.entries.get(key, (None,))[0]
        raise FormatError(f"{reader.origin}: {exc}", location=lineno) from exc


def profile_entries(profile: ModelProfile) -> dict:
    return {
        "kind": "profile",
        "M": profile.M,
        "r": profile.r,
        "p": profile.state_probs,
        "sigma": profile.state_sigmas,
    }


def middleton_entries(params: MiddletonParams, r: float) -> dict:
    return {"kind": "middleton", "A": params.A, "Gamma": params.Gamma, "sigma2": params.sigma2, "M": params.M, "r": r}


def profile_from_entries(entries: dict, origin: str = "<text>") -> ModelProfile:
    """Build a :class:`ModelProfile` from parsed entries of any supported kind."""
    rd = _Reader(entries, origin)
    kind = rd.str("kind")
    if kind in ("profile", "estimate"):
        M = rd.int("M")
        return _build(lambda: ModelProfile(rd.vector("p", M), rd.vector("sigma", M), rd.float("r")), rd, "p")
    if kind == "middleton":
        params = _build(
            lambda: MiddletonParams(rd.float("A"), rd.float("Gamma"), rd.float("sigma2"), rd.int("M")), rd, "A"
        )
        return _build(lambda: params.profile(rd.float("r")), rd, "r")
    raise FormatError(f"{origin}: unknown kind {kind!r}", location=entries["kind"][0])


def load_profile(path) -> ModelProfile:
    path = Path(path)
    return profile_from_entries(parse_kv(path.read_text(), str(path)), str(path))


def save_profile(profile: ModelProfile, path, header: str | None = None) -> None:
    atomic_write(path, format_kv(profile_entries(profile), header), mode="w")


def report_entries(report, extra: dict | None = None) -> dict:
    """Entries for an :class:`~mmnoise.analysis.EstimationReport`."""
    e = profile_entries(report.profile)
    e["kind"] = "estimate"
    e["durations"] = report.durations
    e["r_implied"] = report.implied_r
    e["burst_count"] = report.burst_count
    e["alpha"] = report.alpha
    e["threshold"] = report.threshold
    e["n_samples"] = report.n_samples
    e["sample_rate_hz"] = report.sample_rate_hz
    e["refine_passes"] = report.refine_passes
    e["refine_changed"] = report.refine_changed
    if report.initial_profile is not None:
        e["initial.p"] = report.initial_profile.state_probs
        e["initial.sigma"] = report.initial_profile.state_sigmas
        e["initial.r"] = report.initial_profile.r
    if report.background_stats is not None:
        for k, v in report.background_stats.summary().items():
            e[f"background.{k}"] = v
    if report.config is not None:
        for k, v in report.config.as_dict().items():
            e[f"config.{k}"] = v
    for k, v in (extra or {}).items():
        e[k] = v
    return e


def save_report(report, path, extra: dict | None = None, header: str | None = None) -> None:
    atomic_write(path, format_kv(report_entries(report, extra), header), mode="w")
