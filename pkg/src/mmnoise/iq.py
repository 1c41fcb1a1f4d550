"""Headerless IQ recording files and windowed access.

Formats (selected by explicit tag, never sniffed):

``f32le``
    Interleaved little-endian IEEE-754 binary32, ``I0 Q0 I1 Q1 ...``.
``s16le``
    Interleaved little-endian two's-complement int16, scaled by 1/32768.
``csv``
    Text with header ``i,q`` and one decimal ``i,q`` row per sample.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import FormatError, InvalidParameterError, UsageError

DEFAULT_SAMPLE_RATE_HZ = 2.6e6
FORMATS = ("f32le", "s16le", "csv")
_FRAME_BYTES = {"f32le": 8, "s16le": 4}
_S16_SCALE = 32768.0


@dataclass(frozen=True, eq=False)
class IQRecording:
    samples: np.ndarray
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    origin: str = ""

    def __post_init__(self):
        s = np.asarray(self.samples)
        if not np.iscomplexobj(s):
            s = s.astype(np.complex128)
        if s.ndim != 1 or s.size == 0:
            raise InvalidParameterError("a recording needs a non-empty 1-D sample array")
        if not self.sample_rate_hz > 0:
            raise InvalidParameterError(f"sample rate must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


def _check_format(fmt):
    if fmt not in FORMATS:
        raise UsageError(f"unknown IQ format {fmt!r}; expected one of {', '.join(FORMATS)}")


def load_iq(path, fmt: str, sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ) -> IQRecording:
    """Read a recording; int16 input is scaled to the unit range."""
    _check_format(fmt)
    path = Path(path)
    if fmt == "csv":
        samples = _read_csv(path)
    else:
        raw = path.read_bytes()
        frame = _FRAME_BYTES[fmt]
        tail = len(raw) % frame
        if tail:
            offset = len(raw) - tail
            raise FormatError(
                f"{path}: truncated {fmt} frame at byte offset {offset}", location=offset
            )
        if not raw:
            raise FormatError(f"{path}: file holds no samples", location=0)
        if fmt == "f32le":
            iq = np.frombuffer(raw, dtype="<f4")
            samples = np.empty(iq.size // 2, dtype=np.complex64)
        else:
            iq = np.frombuffer(raw, dtype="<i2").astype(np.float64) / _S16_SCALE
            samples = np.empty(iq.size // 2, dtype=np.complex128)
        samples.real = iq[0::2]
        samples.imag = iq[1::2]
    return IQRecording(samples, sample_rate_hz, origin=str(path))


def _read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["i", "q"]:
            raise FormatError(f"{path}: expected header 'i,q'", location=1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise FormatError(f"{path}:{lineno}: expected two columns", location=lineno)
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: not a number", location=lineno) from None
    if not rows:
        raise FormatError(f"{path}: file holds no samples", location=2)
    a = np.array(rows)
    return a[:, 0] + 1j * a[:, 1]


def encode_iq(samples, fmt: str) -> bytes:
    """Bytes for ``samples`` in a binary format tag."""
    _check_format(fmt)
    s = np.asarray(samples)
    iq = np.empty(2 * s.size)
    iq[0::2] = s.real
    iq[1::2] = s.imag
    if fmt == "f32le":
        return iq.astype("<f4").tobytes()
    if fmt == "s16le":
        q = np.clip(np.rint(iq * _S16_SCALE), -32768, 32767)
        return q.astype("<i2").tobytes()
    raise UsageError("csv is a text format; use write_iq")


def atomic_write(path, data, mode="wb"):
    """Write through a temp file in the target directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if "b" in mode else {"newline": ""})) as fh:
            if callable(data):
                data(fh)
            else:
                fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_iq(recording: IQRecording | np.ndarray, path, fmt: str) -> None:
    """Write samples so that :func:`load_iq` with the same tag reads them back."""
    _check_format(fmt)
    samples = recording.samples if isinstance(recording, IQRecording) else np.asarray(recording)
    if fmt == "csv":
        def body(fh):
            fh.write("i,q\n")
            for v in samples.tolist():
                fh.write(f"{v.real!r},{v.imag!r}\n")
        atomic_write(path, body, mode="w")
    else:
        atomic_write(path, encode_iq(samples, fmt))


@dataclass(frozen=True)
class Window:
    index: int
    start: int
    samples: np.ndarray
    partial: bool

    @property
    def stop(self) -> int:
        return self.start + self.samples.size


def window_starts(n: int, window_len: int, hop: int) -> list[tuple[int, bool]]:
    """Window start offsets and whether each one is a short (partial) window.

    Full windows start at ``0, hop, 2*hop, ...`` while they fit; if the next
    hop position still lies inside the data, one partial window is added
    there.
    """
    if window_len < 1 or hop < 1:
        raise InvalidParameterError("window_len and hop must be >= 1")
    out = []
    start = 0
    while start + window_len <= n:
        out.append((start, False))
        start += hop
    if start < n:
        out.append((start, True))
    return out


def window_iter(recording: IQRecording, window_len: int, hop: int) -> Iterator[Window]:
    """Read-only views over the recording."""
    s = recording.samples.view()
    s.setflags(write=False)
    for i, (start, partial) in enumerate(window_starts(s.size, window_len, hop)):
        yield Window(i, start, s[start : start + window_len], partial)
