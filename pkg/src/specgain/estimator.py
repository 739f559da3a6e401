"""Online improvement function mapping (burst position, expected gain) to a
corrected estimate of the realized gain.

The function is a ``horizon x bin_count`` table.  Each cell keeps an offset
``delta`` so that ``f(s, r) = r + delta[s, bin(r)]``; the offset is learned by
follow-the-regularized-leader with a quadratic regularizer and learning rate
``beta / sqrt(count)``.  The table of values at bin centres is exposed as
:attr:`ImprovementFunction.values` and is what gets serialized.

Bin numbers are 1-based (``1..bin_count``) everywhere in the public API;
numpy arrays are indexed with ``bin - 1``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "DomainError",
    "ImprovementFunction",
    "CellEstimator",
    "BanditContext",
    "bin_index",
    "query",
    "ftrl_step",
    "update_cell",
    "hallucinated_loss",
    "randomization_level",
    "dumps",
    "loads",
    "save",
    "load",
]

TAU_EPS = 1e-6


class DomainError(ValueError):
    """Raised when an argument lies outside the operation's domain."""


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


def bin_index(r: float, gain_cap: float, bin_count: int) -> int:
    """Return the 1-based bin ``k`` with ``r`` in ``[(k-1)*cap/b, k*cap/b)``.

    Gains at or above the cap land in the last bin.
    """
    if gain_cap <= 0 or bin_count < 1:
        raise DomainError(f"need gain_cap > 0 and bin_count >= 1, got {gain_cap}, {bin_count}")
    if not r >= 0:
        raise DomainError(f"gain must be non-negative, got {r}")
    if r >= gain_cap:
        return bin_count
    k = int(math.floor(r * bin_count / gain_cap)) + 1
    # settle float ties against the same boundaries the bins are defined by
    if k < bin_count and r >= k * gain_cap / bin_count:
        k += 1
    elif k > 1 and r < (k - 1) * gain_cap / bin_count:
        k -= 1
    return min(max(k, 1), bin_count)


@dataclass(frozen=True)
class CellEstimator:
    """FTRL state of a single table cell.

    ``rate`` is ``beta / sqrt(count)`` once the cell has been updated and
    ``inf`` before that (the pure-regularizer minimizer, offset 0).
    """

    offset: float = 0.0
    count: int = 0
    rate: float = math.inf
    last_sign: int = 0


def ftrl_step(cell: CellEstimator, d: int, gain_cap: float, coefficient: float = 2.0) -> CellEstimator:
    """One lazy-FTRL step on a cell.

    ``offset_a = (rate_a / rate_{a-1}) * offset_{a-1} + rate_a * d / coefficient``
    with ``rate_a = gain_cap / sqrt(a)``.  With ``coefficient=2`` this is the
    minimizer of ``-offset * sum(d) + offset**2 / rate``, so the offset always
    equals ``rate * sum(d) / 2``.  ``d`` is the negative subgradient sign of
    the absolute loss, i.e. ``sign(r_star - f)``.
    """
    if d not in (-1, 0, 1):
        raise DomainError(f"sign must be -1, 0 or +1, got {d}")
    count = cell.count + 1
    rate = gain_cap / math.sqrt(count)
    shrink = math.sqrt(cell.count / count)
    offset = shrink * cell.offset + rate * d / coefficient
    return CellEstimator(offset=offset, count=count, rate=rate, last_sign=d)


class ImprovementFunction:
    """Table of learned offsets with per-cell update counters.

    Parameters
    ----------
    horizon : int
        Number of positions in a planning burst (rows).
    bin_count : int
        Number of equal-width expected-gain bins over ``[0, gain_cap]``.
    gain_cap : float
        Upper bound on a single gain, in bits.
    coefficient : float
        Divisor of the sign term in the update; 4 reproduces the published
        update, 2 the exact FTRL minimizer.
    """

    def __init__(self, horizon: int, bin_count: int, gain_cap: float = 1.0, coefficient: float = 4.0):
        if horizon < 1 or bin_count < 1:
            raise DomainError(f"horizon and bin_count must be >= 1, got {horizon}, {bin_count}")
        if gain_cap <= 0 or coefficient <= 0:
            raise DomainError("gain_cap and coefficient must be positive")
        self.horizon = int(horizon)
        self.bin_count = int(bin_count)
        self.gain_cap = float(gain_cap)
        self.coefficient = float(coefficient)
        self.offsets = np.zeros((self.horizon, self.bin_count))
        self.counts = np.zeros((self.horizon, self.bin_count), dtype=np.int64)
        self.last_signs = np.zeros((self.horizon, self.bin_count), dtype=np.int8)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.horizon, self.bin_count)

    @property
    def centers(self) -> np.ndarray:
        k = np.arange(self.bin_count)
        return (k + 0.5) * self.gain_cap / self.bin_count

    @property
    def values(self) -> np.ndarray:
        """Table values at bin centres, shape ``(horizon, bin_count)``."""
        return self.centers[None, :] + self.offsets

    def clamp(self, r: float) -> float:
        return min(max(float(r), 0.0), self.gain_cap)

    def _check_position(self, s: int) -> None:
        if not 0 <= s < self.horizon:
            raise DomainError(f"position {s} outside 0..{self.horizon - 1}")

    def bin(self, r: float) -> int:
        return bin_index(self.clamp(r), self.gain_cap, self.bin_count)

    def query(self, s: int, r: float) -> float:
        self._check_position(s)
        if r < 0:
            raise DomainError(f"gain must be non-negative, got {r}")
        r = self.clamp(r)
        k = bin_index(r, self.gain_cap, self.bin_count)
        return r + float(self.offsets[s, k - 1])

    def cell(self, s: int, k: int) -> CellEstimator:
        """FTRL view of cell ``(s, k)``; ``k`` is the 1-based bin number."""
        self._check_position(s)
        count = int(self.counts[s, k - 1])
        rate = self.gain_cap / math.sqrt(count) if count else math.inf
        return CellEstimator(float(self.offsets[s, k - 1]), count, rate, int(self.last_signs[s, k - 1]))

    def update(self, s: int, r: float, r_star: float, weight: float = 1.0) -> int:
        """Apply one update to the cell that ``r`` falls into; return its bin.

        ``weight`` scales the sign term (importance weighting under bandit
        feedback); ``weight=0`` only rescales the offset.
        """
        self._check_position(s)
        r = self.clamp(r)
        r_star = self.clamp(r_star)
        k = bin_index(r, self.gain_cap, self.bin_count)
        j = k - 1
        prev = int(self.counts[s, j])
        now = prev + 1
        delta = float(self.offsets[s, j])
        sign = _sign(r + delta - r_star)
        delta = math.sqrt(prev / now) * delta - weight * self.gain_cap * sign / (self.coefficient * math.sqrt(now))
        self.offsets[s, j] = delta
        self.counts[s, j] = now
        self.last_signs[s, j] = -sign
        return k

    def copy(self) -> "ImprovementFunction":
        out = ImprovementFunction(self.horizon, self.bin_count, self.gain_cap, self.coefficient)
        out.offsets = self.offsets.copy()
        out.counts = self.counts.copy()
        out.last_signs = self.last_signs.copy()
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ImprovementFunction):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.gain_cap == other.gain_cap
            and self.coefficient == other.coefficient
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.counts, other.counts)
        )

    def __repr__(self) -> str:
        return (
            f"ImprovementFunction(horizon={self.horizon}, bin_count={self.bin_count}, "
            f"gain_cap={self.gain_cap}, coefficient={self.coefficient}, updates={int(self.counts.sum())})"
        )


def query(f: ImprovementFunction, s: int, r: float) -> float:
    """Corrected estimate of the realized gain at burst position ``s``."""
    return f.query(s, r)


def update_cell(
    f: ImprovementFunction, s: int, r: float, r_star: float, weight: float = 1.0
) -> ImprovementFunction:
    """Update ``f`` in place from one (expected, realized) gain pair and return it."""
    f.update(s, r, r_star, weight)
    return f


@dataclass(frozen=True)
class BanditContext:
    """Randomization bookkeeping for bandit feedback."""

    tau: float
    candidate_count: int
    horizon: int

    def __post_init__(self):
        if not 0 < self.tau < 0.5:
            raise DomainError(f"tau must lie in (0, 0.5), got {self.tau}")
        if self.candidate_count < 1 or self.horizon < 1:
            raise DomainError("candidate_count and horizon must be >= 1")

    @property
    def path_probability_floor(self) -> float:
        return self.tau * float(self.candidate_count) ** (-self.horizon)


def hallucinated_loss(
    discrepancy: float, offset: float, p: float, executed: bool, floor: float = 0.0
) -> float:
    """Importance-weighted absolute loss ``|discrepancy - offset| / p`` if executed, else 0."""
    if not p > 0 or p < floor:
        raise DomainError(f"path probability {p} below floor {floor}")
    if not executed:
        return 0.0
    return abs(discrepancy - offset) / p


def randomization_level(T: int) -> float:
    """Exploration probability ``T**-0.25``, kept strictly inside (0, 1/2)."""
    if T <= 0:
        raise DomainError(f"episode length must be positive, got {T}")
    return min(float(T) ** -0.25, 0.5 - TAU_EPS)


# ---------------------------------------------------------------------------
# text checkpoint format
#
#   <horizon> <bin_count> <gain_cap> <coefficient>
#   horizon rows of bin_count values (table at bin centres)
#   horizon rows of bin_count counts


def dumps(f: ImprovementFunction) -> str:
    out = io.StringIO()
    out.write(f"{f.horizon} {f.bin_count} {f.gain_cap!r} {f.coefficient!r}\n")
    for row in f.values:
        out.write(" ".join(repr(float(v)) for v in row) + "\n")
    for row in f.counts:
        out.write(" ".join(str(int(c)) for c in row) + "\n")
    return out.getvalue()


def loads(text: str) -> ImprovementFunction:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise DomainError("empty improvement function text")
    head = lines[0].split()
    if len(head) != 4:
        raise DomainError(f"bad header line: {lines[0]!r}")
    horizon, bins = int(head[0]), int(head[1])
    f = ImprovementFunction(horizon, bins, float(head[2]), float(head[3]))
    if len(lines) != 1 + 2 * horizon:
        raise DomainError(f"expected {1 + 2 * horizon} lines, got {len(lines)}")
    values = np.array([[float(v) for v in ln.split()] for ln in lines[1 : 1 + horizon]])
    counts = np.array([[int(v) for v in ln.split()] for ln in lines[1 + horizon :]], dtype=np.int64)
    if values.shape != f.shape or counts.shape != f.shape:
        raise DomainError("table shape does not match header")
    if (counts < 0).any():
        raise DomainError("negative counts")
    offsets = values - f.centers[None, :]
    fresh = counts == 0
    if np.any(np.abs(offsets[fresh]) > 1e-12):
        raise DomainError("untouched cells must hold the identity")
    offsets[fresh] = 0.0
    f.offsets = offsets
    f.counts = counts
    return f


def save(f: ImprovementFunction, path) -> None:
    Path(path).write_text(dumps(f))


def load(path) -> ImprovementFunction:
    return loads(Path(path).read_text())
