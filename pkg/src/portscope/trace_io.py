"""Trace files, serial stream decoding and directory-per-class manifests.

A trace file is UTF-8 text: optional ``# key=value`` header lines followed by
one decimal ADC count per line. Blank lines are ignored.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

PORTS = ("USB", "HDMI", "SYNTH")
HEADER_KEYS = ("trace_id", "label", "port", "sample_rate_hz", "adc_bits", "captured_gap_s")
DEFAULT_RATE_HZ = 40000.0
DEFAULT_ADC_BITS = 12
UNKNOWN_DIR = "unknown"


class TraceFormatError(ValueError):
    """Malformed trace file. ``line`` is 1-based, or None when not line-specific."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TraceRangeError(TraceFormatError):
    pass


class EmptyTraceError(TraceFormatError):
    pass


@dataclass(eq=False)
class RawTrace:
    samples: np.ndarray
    sample_rate_hz: float = DEFAULT_RATE_HZ
    adc_bits: int = DEFAULT_ADC_BITS
    port: str = "SYNTH"
    label: str | None = None
    trace_id: str = ""
    captured_gap_s: float | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.int64)
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if self.samples.size == 0:
            raise EmptyTraceError("trace has no samples")
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if self.adc_bits < 1:
            raise ValueError(f"adc_bits must be >= 1, got {self.adc_bits}")
        if self.port not in PORTS:
            raise ValueError(f"port must be one of {PORTS}, got {self.port!r}")
        top = self.max_count
        if self.samples.min() < 0 or self.samples.max() > top:
            raise TraceRangeError(f"samples must lie in [0, {top}]")

    @property
    def max_count(self) -> int:
        return (1 << self.adc_bits) - 1

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def __eq__(self, other):
        if not isinstance(other, RawTrace):
            return NotImplemented
        return (
            np.array_equal(self.samples, other.samples)
            and self.sample_rate_hz == other.sample_rate_hz
            and self.adc_bits == other.adc_bits
            and self.port == other.port
            and self.label == other.label
            and self.trace_id == other.trace_id
            and self.captured_gap_s == other.captured_gap_s
        )


def _parse_header(key, value, lineno):
    try:
        if key == "sample_rate_hz":
            rate = float(value)
            if not rate > 0 or not np.isfinite(rate):
                raise ValueError
            return rate
        if key == "adc_bits":
            bits = int(value)
            if not 1 <= bits <= 32:
                raise ValueError
            return bits
        if key == "captured_gap_s":
            gap = float(value)
            if not np.isfinite(gap):
                raise ValueError
            return gap
    except ValueError:
        raise TraceFormatError(f"bad value for header {key!r}: {value!r}", lineno) from None
    if key == "port":
        port = value.upper()
        if port not in PORTS:
            raise TraceFormatError(f"port must be one of {PORTS}, got {value!r}", lineno)
        return port
    return value


def parse_trace_file(data: bytes | str) -> RawTrace:
    """Parse trace file contents into a :class:`RawTrace`."""
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    lines = text.split("\n")
    meta = {}
    first_data = len(lines)
    for i, line in enumerate(lines):
        stripped = line.strip()
        if not stripped:
            continue
        if not stripped.startswith("#"):
            first_data = i
            break
        body = stripped[1:].strip()
        if "=" not in body:
            # free-form comment
            continue
        key, value = (part.strip() for part in body.split("=", 1))
        if key not in HEADER_KEYS:
            log.warning("ignoring unknown trace header %r (line %d)", key, i + 1)
            continue
        meta[key] = _parse_header(key, value, i + 1)

    body_lines = lines[first_data:]
    tokens = [s for s in (ln.strip() for ln in body_lines) if s]
    if not tokens:
        raise EmptyTraceError("trace has no data lines")
    try:
        # fast path; int() accepts '+5' and '1_0' so verify digits separately
        if not all(t.isdigit() for t in tokens):
            raise ValueError
        samples = np.array(tokens, dtype=np.int64)
    except (ValueError, OverflowError):
        _raise_bad_line(body_lines, first_data)
        raise  # unreachable

    bits = meta.get("adc_bits", DEFAULT_ADC_BITS)
    top = (1 << bits) - 1
    bad = np.flatnonzero(samples > top)
    if bad.size:
        lineno = _line_of_token(body_lines, first_data, int(bad[0]))
        raise TraceRangeError(f"sample {samples[bad[0]]} outside [0, {top}] for {bits}-bit ADC", lineno)

    return RawTrace(
        samples=samples,
        sample_rate_hz=meta.get("sample_rate_hz", DEFAULT_RATE_HZ),
        adc_bits=bits,
        port=meta.get("port", "SYNTH"),
        label=meta.get("label"),
        trace_id=meta.get("trace_id", ""),
        captured_gap_s=meta.get("captured_gap_s"),
    )


def _raise_bad_line(body_lines, offset):
    for j, line in enumerate(body_lines):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            raise TraceFormatError("header line after data", offset + j + 1)
        if s.startswith("-") and s[1:].isdigit():
            raise TraceRangeError(f"negative sample {s}", offset + j + 1)
        if not s.isdigit():
            raise TraceFormatError(f"not a non-negative integer: {s!r}", offset + j + 1)


def _line_of_token(body_lines, offset, token_index):
    seen = -1
    for j, line in enumerate(body_lines):
        if line.strip():
            seen += 1
            if seen == token_index:
                return offset + j + 1
    return None


def _fmt_float(x):
    return repr(float(x))


def write_trace_file(trace: RawTrace) -> bytes:
    """Serialize ``trace``; headers come out in a fixed key order."""
    head = []
    if trace.trace_id:
        head.append(f"# trace_id={trace.trace_id}")
    if trace.label is not None:
        head.append(f"# label={trace.label}")
    head.append(f"# port={trace.port}")
    head.append(f"# sample_rate_hz={_fmt_float(trace.sample_rate_hz)}")
    head.append(f"# adc_bits={trace.adc_bits}")
    if trace.captured_gap_s is not None:
        head.append(f"# captured_gap_s={_fmt_float(trace.captured_gap_s)}")
    body = "\n".join(map(str, trace.samples.tolist()))
    return ("\n".join(head) + "\n" + body + "\n").encode("utf-8")


def read_trace(path) -> RawTrace:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read trace file {path}: {exc.strerror}") from exc
    try:
        trace = parse_trace_file(data)
    except TraceFormatError as exc:
        raise type(exc)(f"{path}: {exc}") from None
    if not trace.trace_id:
        trace.trace_id = path.stem
    return trace


def save_trace(trace: RawTrace, path) -> None:
    Path(path).write_bytes(write_trace_file(trace))


class SerialDecoder:
    """Incremental decoder for newline-delimited ASCII samples.

    Lines that are not an in-range decimal count are dropped and counted in
    ``discarded``; that includes a cut-off first line that no longer parses
    and the unterminated tail handed to :meth:`finish`. One instance per stream.
    """

    def __init__(self, expected_bits: int = DEFAULT_ADC_BITS):
        self.max_count = (1 << expected_bits) - 1
        self.discarded = 0
        self._pending = b""

    def feed(self, chunk: bytes) -> list[int]:
        *complete, self._pending = (self._pending + chunk).split(b"\n")
        out = []
        for raw in complete:
            s = raw.strip()
            if s.isdigit() and int(s) <= self.max_count:
                out.append(int(s))
            else:
                self.discarded += 1
        return out

    def finish(self) -> None:
        if self._pending.strip():
            self.discarded += 1
        self._pending = b""


def decode_serial_stream(data: bytes, expected_bits: int = DEFAULT_ADC_BITS) -> tuple[list[int], int]:
    """Decode a captured serial dump into (samples, discarded_line_count)."""
    dec = SerialDecoder(expected_bits)
    samples = dec.feed(data)
    dec.finish()
    return samples, dec.discarded


@dataclass
class DatasetManifest:
    root_path: Path
    classes: list[tuple[str, list[Path]]]
    unknown_paths: list[Path] = field(default_factory=list)

    @property
    def class_names(self) -> list[str]:
        return [name for name, _ in self.classes]

    def iter_labeled(self):
        """Yield (path, label) for every known trace, then unknown ones labeled None."""
        for name, paths in self.classes:
            for p in paths:
                yield p, name
        for p in self.unknown_paths:
            yield p, None


def _trace_files(directory: Path) -> list[Path]:
    return sorted(
        (p for p in directory.iterdir() if p.is_file() and not p.name.startswith(".")),
        key=lambda p: p.name,
    )


def load_manifest(root, validate: bool = True) -> DatasetManifest:
    """Scan ``root`` for one subdirectory per class plus an optional ``unknown/``.

    With ``validate`` every file is parsed once so a corrupt file fails here,
    naming the file, rather than halfway through featurization.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} is not a directory")
    subdirs = sorted((p for p in root.iterdir() if p.is_dir()), key=lambda p: p.name)
    if not subdirs:
        raise ValueError(f"dataset root {root} is empty")
    classes = []
    unknown = []
    for d in subdirs:
        files = _trace_files(d)
        if d.name == UNKNOWN_DIR:
            unknown = files
            continue
        if not files:
            raise ValueError(f"class directory {d} has no trace files")
        classes.append((d.name, files))
    if not classes:
        raise ValueError(f"dataset root {root} has no known classes")
    if validate:
        for p in [p for _, fs in classes for p in fs] + unknown:
            if not os.access(p, os.R_OK):
                raise OSError(f"cannot read trace file {p}")
            read_trace(p)
    return DatasetManifest(root, classes, unknown)
