"""Affine constraint sets built from typed descriptors.

Every descriptor expands into one or two rows of the system ``A x <= b``.
Equality pins expand into paired inequalities relaxed by a tiny margin on
each side so that interior-point methods keep a strictly feasible slab.
"""

from dataclasses import dataclass, field

import numpy as np

EQUALITY_RELAXATION = 1e-9


@dataclass(frozen=True)
class NonNegative:
    """x[index] >= 0."""

    index: int


@dataclass(frozen=True)
class Box:
    """lo <= x[index] <= hi (either side may be infinite)."""

    index: int
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(
                f"Box on index {self.index} has lo={self.lo} > hi={self.hi}"
            )


@dataclass(frozen=True)
class FixEqual:
    """x[index] == value, as a relaxed pair of inequalities."""

    index: int
    value: float


@dataclass(frozen=True)
class General:
    """row . x <= rhs."""

    row: tuple
    rhs: float


def _equality_margin(value):
    return EQUALITY_RELAXATION * max(1.0, abs(value))


@dataclass(frozen=True)
class ConstraintSet:
    """Expanded affine system A x <= b plus the originating descriptors."""

    p: int
    descriptors: tuple = ()
    A: np.ndarray = field(default=None)
    b: np.ndarray = field(default=None)

    def __post_init__(self):
        rows = []
        rhs = []
        for d in self.descriptors:
            if isinstance(d, NonNegative):
                r = np.zeros(self.p)
                r[d.index] = -1.0
                rows.append(r)
                rhs.append(0.0)
            elif isinstance(d, Box):
                lo, hi = d.lo, d.hi
                if hi - lo < 2.0 * _equality_margin(0.5 * (lo + hi)):
                    # Degenerate box behaves like an equality pin.
                    eps = _equality_margin(0.5 * (lo + hi))
                    mid = 0.5 * (lo + hi)
                    lo, hi = mid - eps, mid + eps
                if np.isfinite(hi):
                    r = np.zeros(self.p)
                    r[d.index] = 1.0
                    rows.append(r)
                    rhs.append(float(hi))
                if np.isfinite(lo):
                    r = np.zeros(self.p)
                    r[d.index] = -1.0
                    rows.append(r)
                    rhs.append(-float(lo))
            elif isinstance(d, FixEqual):
                eps = _equality_margin(d.value)
                r = np.zeros(self.p)
                r[d.index] = 1.0
                rows.append(r)
                rhs.append(d.value + eps)
                r = np.zeros(self.p)
                r[d.index] = -1.0
                rows.append(r)
                rhs.append(-(d.value - eps))
            elif isinstance(d, General):
                r = np.asarray(d.row, dtype=float).ravel()
                if r.size != self.p:
                    raise ValueError(
                        f"General row has length {r.size}, expected {self.p}"
                    )
                rows.append(r)
                rhs.append(float(d.rhs))
            else:
                raise TypeError(f"unknown constraint descriptor {d!r}")
        A = np.array(rows, dtype=float).reshape(len(rows), self.p)
        b = np.array(rhs, dtype=float)
        object.__setattr__(self, "descriptors", tuple(self.descriptors))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def q(self):
        return self.A.shape[0]

    def is_empty(self):
        return self.q == 0

    def with_extra(self, extra):
        """New set with additional descriptors appended."""
        return ConstraintSet(self.p, tuple(self.descriptors) + tuple(extra))

    def shifted(self, d):
        """Constraint set for the translated variable x - d (b -> b + A d)."""
        shifted_rows = [General(tuple(row), float(rhs)) for row, rhs in
                        zip(self.A, self.b + self.A @ np.asarray(d, float))]
        return ConstraintSet(self.p, tuple(shifted_rows))

    def violation(self, x):
        """Max constraint violation at x (<= 0 means feasible)."""
        if self.q == 0:
            return -np.inf
        return float(np.max(self.A @ x - self.b))

    def bounds_for(self, index):
        """Tightest (lo, hi) implied for one coordinate by simple rows."""
        lo, hi = -np.inf, np.inf
        for row, rhs in zip(self.A, self.b):
            nz = np.nonzero(row)[0]
            if nz.size != 1 or nz[0] != index:
                continue
            c = row[index]
            if c > 0:
                hi = min(hi, rhs / c)
            else:
                lo = max(lo, rhs / c)
        return lo, hi


def nonnegativity(p, indices):
    """Convenience: non-negativity descriptors for the given indices."""
    return ConstraintSet(p, tuple(NonNegative(int(i)) for i in indices))
