"""Self-describing binary files for coil stacks, masks and 16-bit images.

Stack and mask files start with a text header of ``key = value`` lines
between a magic line and ``end``, followed by the raw payload.  Pixels are
stored in column-major order over the centered grid (first index fastest).
"""
from pathlib import Path

import numpy as np

from .calibration import acs_mask
from .errors import AcsCoverageError, FormatError
from .sampling import SamplingPattern, format_kind, parse_kind

__all__ = [
    "STACK_MAGIC",
    "MASK_MAGIC",
    "encode_stack",
    "decode_stack",
    "write_stack",
    "read_stack",
    "encode_mask",
    "decode_mask",
    "write_mask",
    "read_mask",
    "encode_pgm",
    "decode_pgm",
    "write_pgm",
    "read_pgm",
]

STACK_MAGIC = "MOCCA-KSP/1"
MASK_MAGIC = "MOCCA-MSK/1"
LAYOUT = "column-major-centered"
SAMPLE_FORMAT = "complex: two little-endian 64-bit floats, real then imaginary"
_DOMAINS = ("kspace", "image")


def _header(magic, fields):
    lines = [magic] + [f"{k} = {v}" for k, v in fields] + ["end"]
    return ("\n".join(lines) + "\n").encode("ascii")


def _split(data: bytes, magic):
    """Parse the header and return ``(fields, payload)``."""
    pos = 0
    fields = {}
    first = True
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise FormatError("truncated header")
        try:
            line = data[pos:nl].decode("ascii")
        except UnicodeDecodeError:
            raise FormatError("header is not ASCII text") from None
        pos = nl + 1
        if first:
            if line != magic:
                raise FormatError(f"bad magic {line!r}, expected {magic!r}")
            first = False
            continue
        if line == "end":
            return fields, data[pos:]
        key, sep, value = line.partition(" = ")
        if not sep or not key:
            raise FormatError(f"malformed header line {line!r}")
        if key in fields:
            raise FormatError(f"duplicate header key {key!r}")
        fields[key] = value


def _int_field(fields, key):
    try:
        value = int(fields[key])
    except KeyError:
        raise FormatError(f"missing header key {key!r}") from None
    except ValueError:
        raise FormatError(f"header key {key!r} is not an integer") from None
    if value < 0:
        raise FormatError(f"header key {key!r} is negative")
    return value


def encode_stack(stack, domain="kspace") -> bytes:
    """Serialize an ``(N_c, N, N)`` or ``(N, N)`` complex array."""
    stack = np.asarray(stack)
    if stack.ndim == 2:
        stack = stack[None]
    if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
        raise FormatError(f"expected (coils, N, N), got shape {stack.shape}")
    if domain not in _DOMAINS:
        raise FormatError(f"unknown domain {domain!r}")
    nc, N = stack.shape[0], stack.shape[1]
    payload = np.asarray(stack, dtype="<c16").transpose(0, 2, 1).tobytes(order="C")
    head = _header(STACK_MAGIC, [
        ("n", N),
        ("coils", nc),
        ("layout", LAYOUT),
        ("sample_format", SAMPLE_FORMAT),
        ("payload_bytes", len(payload)),
        ("domain", domain),
    ])
    return head + payload


def decode_stack(data: bytes):
    """Inverse of :func:`encode_stack`; returns ``(stack, domain)`` with shape ``(N_c, N, N)``."""
    fields, payload = _split(data, STACK_MAGIC)
    N = _int_field(fields, "n")
    nc = _int_field(fields, "coils")
    if fields.get("layout") != LAYOUT:
        raise FormatError(f"unsupported layout {fields.get('layout')!r}")
    if fields.get("sample_format") != SAMPLE_FORMAT:
        raise FormatError(f"unsupported sample format {fields.get('sample_format')!r}")
    domain = fields.get("domain", "kspace")
    if domain not in _DOMAINS:
        raise FormatError(f"unknown domain {domain!r}")
    expected = 16 * N * N * nc
    if _int_field(fields, "payload_bytes") != expected or len(payload) != expected:
        raise FormatError(f"payload has {len(payload)} bytes, expected {expected}")
    flat = np.frombuffer(payload, dtype="<c16").astype(np.complex128)
    return flat.reshape(nc, N, N).transpose(0, 2, 1).copy(), domain


def encode_mask(pattern: SamplingPattern, M: int, L: int) -> bytes:
    payload = pattern.mask.astype(np.uint8).tobytes(order="F")
    head = _header(MASK_MAGIC, [
        ("n", pattern.n),
        ("m", M),
        ("l", L),
        ("kind", pattern.descriptor),
        ("payload_bytes", len(payload)),
    ])
    return head + payload


def decode_mask(data: bytes):
    """Returns ``(pattern, M, L)``; the centered ``(M+L-1)``-block must be sampled."""
    fields, payload = _split(data, MASK_MAGIC)
    N = _int_field(fields, "n")
    M = _int_field(fields, "m")
    L = _int_field(fields, "l")
    try:
        kind, a, b = parse_kind(fields.get("kind", ""))
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    if _int_field(fields, "payload_bytes") != N * N or len(payload) != N * N:
        raise FormatError(f"mask payload has {len(payload)} bytes, expected {N * N}")
    raw = np.frombuffer(payload, dtype=np.uint8)
    if np.any(raw > 1):
        raise FormatError("mask payload bytes must be 0 or 1")
    mask = raw.reshape((N, N), order="F").astype(bool)
    acs = M + L - 1
    if acs > N:
        raise FormatError(f"ACS block of size {acs} does not fit into N={N}")
    if not np.all(mask[acs_mask(N, acs)]):
        raise AcsCoverageError(f"mask does not cover the ACS block Lambda_{{M+L-1}} (size {acs})")
    if format_kind(kind, a, b) != fields["kind"]:
        raise FormatError(f"non-canonical kind descriptor {fields['kind']!r}")
    return SamplingPattern(N, mask, acs, kind, a, b), M, L


def encode_pgm(image, peak=None) -> bytes:
    """16-bit binary graymap, values mapped linearly from ``[0, peak]`` to ``[0, 65535]``.

    ``peak`` defaults to the image maximum.  Rows of the graymap are the first
    array index.  Values outside ``[0, peak]`` are clipped.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise FormatError(f"expected a 2-D image, got shape {image.shape}")
    if not np.all(np.isfinite(image)):
        raise FormatError("image contains non-finite values")
    peak = image.max() if peak is None else float(peak)
    scaled = np.clip(image / peak, 0.0, 1.0) if peak > 0 else np.zeros_like(image)
    values = np.rint(scaled * 65535.0).astype(">u2")
    rows, cols = image.shape
    return f"P5\n{cols} {rows}\n65535\n".encode("ascii") + values.tobytes(order="C")


def decode_pgm(data: bytes):
    """Read the graymap written by :func:`encode_pgm`; returns values in ``[0, 1]``."""
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5":
        raise FormatError("not a binary P5 graymap")
    try:
        cols, rows = (int(t) for t in parts[1].split())
        maxval = int(parts[2])
    except ValueError:
        raise FormatError("malformed graymap header") from None
    if maxval != 65535:
        raise FormatError(f"unsupported maxval {maxval}")
    payload = parts[3]
    if len(payload) != 2 * rows * cols:
        raise FormatError(f"graymap payload has {len(payload)} bytes, expected {2 * rows * cols}")
    return np.frombuffer(payload, dtype=">u2").reshape(rows, cols) / 65535.0


def _write(path, data):
    Path(path).write_bytes(data)


def _read(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from None


def write_stack(path, stack, domain="kspace"):
    _write(path, encode_stack(stack, domain))


def read_stack(path):
    return decode_stack(_read(path))


def write_mask(path, pattern, M, L):
    _write(path, encode_mask(pattern, M, L))


def read_mask(path):
    return decode_mask(_read(path))


def write_pgm(path, image, peak=None):
    _write(path, encode_pgm(image, peak))


def read_pgm(path):
    return decode_pgm(_read(path))
