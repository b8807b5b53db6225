"""Cartesian sampling patterns: a regular lattice plus a fully sampled center."""
import re
from dataclasses import dataclass

import numpy as np

from .calibration import acs_mask

__all__ = ["SamplingPattern", "make_pattern", "parse_kind", "format_kind"]

_KINDS = ("full", "columns", "rows_cols", "explicit")


@dataclass
class SamplingPattern:
    """Acquisition mask over ``Lambda_N``.

    ``row_stride``/``col_stride`` describe the regular lattice for structured
    kinds: row ``k`` (first index) is kept when ``(k + N/2) % row_stride == 0``,
    column ``l`` (second index) when ``(l + N/2) % col_stride == 0``.
    ``acs`` is the side of the centered block guaranteed to be sampled.
    """

    n: int
    mask: np.ndarray
    acs: int
    kind: str = "explicit"
    row_stride: int = 1
    col_stride: int = 1

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != (self.n, self.n):
            raise ValueError(f"mask shape {self.mask.shape} does not match N={self.n}")
        if self.kind not in _KINDS:
            raise ValueError(f"unknown pattern kind {self.kind!r}")

    @property
    def structured(self) -> bool:
        return self.kind in ("full", "columns", "rows_cols")

    def regular_mask(self) -> np.ndarray:
        """The lattice part of a structured pattern, without extra ACS samples."""
        if not self.structured:
            raise ValueError("explicit patterns have no regular lattice")
        return lattice_mask(self.n, self.row_stride, self.col_stride)

    @property
    def reduction_rate(self) -> float:
        return self.n * self.n / np.count_nonzero(self.mask)

    @property
    def descriptor(self) -> str:
        return format_kind(self.kind, self.row_stride, self.col_stride)


def lattice_mask(N, row_stride=1, col_stride=1):
    idx = np.arange(N)
    return (idx[:, None] % row_stride == 0) & (idx[None, :] % col_stride == 0)


def parse_kind(text):
    """Parse ``full``, ``cols:S``, ``rows-cols:A,B`` or ``explicit``.

    Returns ``(kind, row_stride, col_stride)``.
    """
    text = text.strip()
    if text in ("full", "explicit"):
        return text, 1, 1
    m = re.fullmatch(r"cols:(\d+)", text)
    if m:
        return "columns", 1, int(m.group(1))
    m = re.fullmatch(r"rows-cols:(\d+),(\d+)", text)
    if m:
        return "rows_cols", int(m.group(1)), int(m.group(2))
    raise ValueError(f"cannot parse sampling pattern {text!r}")


def format_kind(kind, row_stride=1, col_stride=1):
    if kind in ("full", "explicit"):
        return kind
    if kind == "columns":
        return f"cols:{col_stride}"
    return f"rows-cols:{row_stride},{col_stride}"


def make_pattern(kind, N, M, L):
    """Regular lattice united with the centered ``(M+L-1)``-block.

    ``kind`` is a descriptor string (see :func:`parse_kind`) or a
    ``(kind, row_stride, col_stride)`` tuple.  Strides must divide ``N``.
    """
    kind, a, b = parse_kind(kind) if isinstance(kind, str) else kind
    if kind == "explicit":
        raise ValueError("explicit patterns come from a mask, not from make_pattern")
    if N % 2 or N < 2:
        raise ValueError(f"N must be even, got {N}")
    for stride in (a, b):
        if stride < 1 or N % stride:
            raise ValueError(f"stride {stride} is incompatible with N={N}")
    acs = M + L - 1
    if acs > N:
        raise ValueError(f"ACS block of size {acs} does not fit into N={N}")
    mask = lattice_mask(N, a, b) | acs_mask(N, acs)
    return SamplingPattern(N, mask, acs, kind, a, b)
