"""Coefficient lattice of equivariant sphere classes and truncated downward
formal sums over it.

A lattice class B carries two additive weights: a real area weight (pairing
with the equivariant symplectic class) and an integer degree weight (pairing
with the equivariant first Chern class).  Formal sums of monomials q^B are
stored downward-truncated: terms whose area weight drops below -window are
removed and the element is flagged, so an exact zero and a truncated zero
stay distinguishable.

Normalization: the generator e_a of the lattice is the class whose clutching
loop winds once (angle 2*pi*t) through the a-th circle factor.  Its area
weight is then 2*pi*tau_a and its degree weight is the row sum of the weight
matrix; both are pinned by quadrature oracles in the tests.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidTarget, LatticeMismatch


@dataclass(frozen=True)
class GammaLattice:
    """Free abelian group Z^rank with two additive weights on it."""

    rank: int
    omega_gen: tuple   # area weight of each generator (floats)
    c1_gen: tuple      # degree weight of each generator (ints)

    def __post_init__(self):
        if len(self.omega_gen) != self.rank or len(self.c1_gen) != self.rank:
            raise InvalidTarget("weight tuples must match the lattice rank")

    def zero(self):
        return (0,) * self.rank

    def _vec(self, b):
        b = tuple(int(x) for x in np.atleast_1d(b))
        if len(b) != self.rank:
            raise LatticeMismatch(f"class {b} has wrong rank for lattice {self.rank}")
        return b

    def omega_weight(self, b):
        b = self._vec(b)
        return float(sum(w * x for w, x in zip(self.omega_gen, b)))

    def c1_weight(self, b):
        b = self._vec(b)
        return int(sum(w * x for w, x in zip(self.c1_gen, b)))

    def degree_shift(self, b, grading):
        """Grading of a generator after recapping by the class b."""
        return int(grading) - 2 * self.c1_weight(b)

    def snap_omega(self, value, tol=None):
        """Nearest lattice class (rank-1 only) with the given area weight.

        Returns (class, snap_distance); used to recover the class of a
        counted cylinder from a measured action gap.
        """
        if self.rank != 1:
            raise LatticeMismatch("omega snapping implemented for rank-1 lattices")
        step = self.omega_gen[0]
        if step == 0:
            raise LatticeMismatch("area weight degenerate: cannot snap")
        m = int(round(value / step))
        dist = abs(value - m * step)
        if tol is not None and dist > tol:
            raise LatticeMismatch(f"no lattice class within {tol} of weight {value}")
        return (m,), dist


def lattice_from_toric(target):
    """Coefficient lattice of a toric target.

    Generator e_a (unit clutching through circle factor a) has degree weight
    sum_j W[a, j] and area weight 2*pi*tau_a.
    """
    w = np.asarray(target.weights)
    tau = np.asarray(target.tau, dtype=float)
    if w.ndim != 2 or w.shape[0] != len(tau):
        raise InvalidTarget("weight matrix and moment shift are inconsistent")
    c1 = tuple(int(np.sum(w[a])) for a in range(w.shape[0]))
    omega = tuple(2.0 * math.pi * float(t) for t in tau)
    return GammaLattice(rank=w.shape[0], omega_gen=omega, c1_gen=c1)


class NovikovElement:
    """Finite truncated formal sum sum_B coeff_B q^B over a GammaLattice."""

    __slots__ = ("lattice", "base", "window", "terms", "truncated")

    def __init__(self, lattice, terms=None, base="Z2", window=100.0, truncated=False):
        if base not in ("Z", "Z2"):
            raise LatticeMismatch(f"unsupported base ring {base!r}")
        self.lattice = lattice
        self.base = base
        self.window = float(window)
        self.truncated = bool(truncated)
        clean = {}
        for b, c in (terms or {}).items():
            b = lattice._vec(b)
            c = int(c) % 2 if base == "Z2" else int(c)
            if c == 0:
                continue
            if lattice.omega_weight(b) < -self.window:
                self.truncated = True
                continue
            clean[b] = clean.get(b, 0) + c
        self.terms = {b: c for b, c in clean.items() if c != 0}

    # -- constructors ----------------------------------------------------

    @classmethod
    def zero(cls, lattice, base="Z2", window=100.0):
        return cls(lattice, {}, base=base, window=window)

    @classmethod
    def unit(cls, lattice, base="Z2", window=100.0):
        return cls(lattice, {lattice.zero(): 1}, base=base, window=window)

    @classmethod
    def monomial(cls, lattice, b, coeff=1, base="Z2", window=100.0):
        return cls(lattice, {tuple(b): coeff}, base=base, window=window)

    # -- structure -------------------------------------------------------

    def _check_compatible(self, other):
        if self.lattice != other.lattice or self.base != other.base:
            raise LatticeMismatch("operands over different lattices or base rings")

    def is_zero(self):
        return not self.terms

    def is_ambiguous_zero(self):
        return not self.terms and self.truncated

    def leading(self):
        """(class, coeff) of the term with the largest area weight."""
        if not self.terms:
            return None
        b = max(self.terms, key=self.lattice.omega_weight)
        return b, self.terms[b]

    def __add__(self, other):
        self._check_compatible(other)
        merged = dict(self.terms)
        for b, c in other.terms.items():
            merged[b] = merged.get(b, 0) + c
        return NovikovElement(self.lattice, merged, base=self.base,
                              window=min(self.window, other.window),
                              truncated=self.truncated or other.truncated)

    def __neg__(self):
        return NovikovElement(self.lattice, {b: -c for b, c in self.terms.items()},
                              base=self.base, window=self.window,
                              truncated=self.truncated)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, int):
            other = NovikovElement(self.lattice, {self.lattice.zero(): other},
                                   base=self.base, window=self.window)
        self._check_compatible(other)
        window = min(self.window, other.window)
        prod = {}
        truncated = self.truncated or other.truncated
        for b1, c1 in self.terms.items():
            for b2, c2 in other.terms.items():
                b = tuple(x + y for x, y in zip(b1, b2))
                if self.lattice.omega_weight(b) < -window:
                    truncated = True
                    continue
                prod[b] = prod.get(b, 0) + c1 * c2
        return NovikovElement(self.lattice, prod, base=self.base,
                              window=window, truncated=truncated)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, NovikovElement):
            return NotImplemented
        return (self.lattice == other.lattice and self.base == other.base
                and self.terms == other.terms)

    def __hash__(self):
        return hash((self.lattice, self.base, tuple(sorted(self.terms.items()))))

    def inverse(self):
        """Inverse of an element with invertible leading coefficient,
        expanded geometrically down to the window."""
        lead = self.leading()
        if lead is None:
            raise ZeroDivisionError("cannot invert zero")
        b0, c0 = lead
        if self.base == "Z2":
            c0_inv = 1
        elif c0 in (1, -1):
            c0_inv = c0
        else:
            raise ZeroDivisionError(f"leading coefficient {c0} not a unit over Z")
        head_inv = NovikovElement(self.lattice,
                                  {tuple(-x for x in b0): c0_inv},
                                  base=self.base, window=self.window)
        rest = self - NovikovElement(self.lattice, {b0: c0}, base=self.base,
                                     window=self.window)
        v = head_inv * rest  # strictly lower area weight than 1
        out = NovikovElement.unit(self.lattice, base=self.base, window=self.window)
        power = NovikovElement.unit(self.lattice, base=self.base, window=self.window)
        for _ in range(200):
            power = power * v
            if power.is_zero():
                break
            out = out + (-1) * power
        else:
            raise ZeroDivisionError("inverse expansion did not terminate in window")
        return out * head_inv

    def __repr__(self):
        if not self.terms:
            return "0" + ("~" if self.truncated else "")
        bits = []
        for b in sorted(self.terms, key=self.lattice.omega_weight, reverse=True):
            c = self.terms[b]
            bits.append(f"{c}*q{list(b)}")
        return " + ".join(bits) + ("~" if self.truncated else "")


def novikov_matrix_rank(rows):
    """Rank of a matrix of NovikovElements by leading-term elimination.

    Returns (rank, ambiguous) where ambiguous reports that a pivot decision
    rested on a truncated zero.
    """
    mat = [list(r) for r in rows]
    if not mat or not mat[0]:
        return 0, False
    rank = 0
    ambiguous = False
    nrows, ncols = len(mat), len(mat[0])
    pivot_rows = set()
    for col in range(ncols):
        pivot = None
        best = -np.inf
        for r in range(nrows):
            if r in pivot_rows:
                continue
            e = mat[r][col]
            if e.is_ambiguous_zero():
                ambiguous = True
            if not e.is_zero():
                w = e.lattice.omega_weight(e.leading()[0])
                if w > best:
                    best, pivot = w, r
        if pivot is None:
            continue
        rank += 1
        pivot_rows.add(pivot)
        inv = mat[pivot][col].inverse()
        for r in range(nrows):
            if r == pivot or r in pivot_rows:
                continue
            e = mat[r][col]
            if e.is_zero():
                continue
            factor = e * inv
            for c in range(ncols):
                mat[r][c] = mat[r][c] - factor * mat[pivot][c]
    return rank, ambiguous
