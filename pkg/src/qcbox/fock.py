"""Truncated symmetric Fock spaces of timestamped messages.

States are stored in the occupation-number representation.  A key assigns a
count to each slot ``(wire, time, basis index)``; the key stands for the
symmetric product of the corresponding basis messages in the unnormalized
``1/sqrt(n!)`` convention, so a key with counts ``n_j`` has squared norm
``prod_j n_j!``.  Dense vectors (``as_dense``) and all operators built by
:class:`FockSpace` use the orthonormal occupation basis instead.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimMismatch, EmbeddingMismatch, TruncationOverflow, WireMergeMismatch
from .linalg import ComplexVector, SpaceSpec

DEFAULT_TRUNCATION = 3

Slot = tuple[str, int, int]  # (wire label, time, basis index)


@dataclass(frozen=True)
class TimestampSet:
    """A nonempty, strictly increasing list of integer clock ticks."""

    times: tuple[int, ...]

    def __post_init__(self):
        times = tuple(int(t) for t in self.times)
        if not times:
            raise ValueError("a timestamp set cannot be empty")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"timestamps must be strictly increasing: {times}")
        object.__setattr__(self, "times", times)

    def __iter__(self):
        return iter(self.times)

    def __len__(self):
        return len(self.times)

    def __contains__(self, t):
        return t in self.times

    def issubset(self, other: "TimestampSet") -> bool:
        return set(self.times) <= set(other.times)


@dataclass(frozen=True)
class WireSpec:
    """A wire carrying ``message_dim``-dimensional messages at the given times."""

    label: str
    message_dim: int
    times: TimestampSet

    def __post_init__(self):
        if int(self.message_dim) < 1:
            raise ValueError("message_dim must be at least 1")
        if not isinstance(self.times, TimestampSet):
            object.__setattr__(self, "times", TimestampSet(tuple(self.times)))

    def slots(self) -> list[Slot]:
        return [(self.label, t, i) for t in self.times for i in range(self.message_dim)]


def wire(label: str, message_dim: int, times: Iterable[int]) -> WireSpec:
    return WireSpec(label, message_dim, TimestampSet(tuple(times)))


@dataclass(frozen=True, order=True)
class OccupationState:
    """Counts per slot, stored as a sorted tuple of ``(slot, count)`` with count > 0."""

    items: tuple[tuple[Slot, int], ...] = ()

    @classmethod
    def from_counts(cls, counts: Mapping[Slot, int]) -> "OccupationState":
        if any(c < 0 for c in counts.values()):
            raise ValueError("occupation counts must be nonnegative")
        return cls(tuple(sorted((tuple(k), int(c)) for k, c in counts.items() if c > 0)))

    @property
    def counts(self) -> dict[Slot, int]:
        return dict(self.items)

    @property
    def total(self) -> int:
        return sum(c for _, c in self.items)

    @property
    def weight(self) -> int:
        """Squared norm of the key, ``prod count!``."""
        return math.prod(math.factorial(c) for _, c in self.items)

    def merged(self, other: "OccupationState") -> "OccupationState":
        counts = self.counts
        for k, c in other.items:
            counts[k] = counts.get(k, 0) + c
        return OccupationState.from_counts(counts)


@dataclass(frozen=True)
class FockState:
    """A finite linear combination of occupation keys over declared wires."""

    wires: tuple[WireSpec, ...]
    amplitudes: Mapping[OccupationState, complex] = field(default_factory=dict)
    truncation: int = DEFAULT_TRUNCATION

    def __post_init__(self):
        labels = [w.label for w in self.wires]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate wire labels {labels}")
        allowed = {s for w in self.wires for s in w.slots()}
        clean = {}
        for key, amp in self.amplitudes.items():
            if key.total > self.truncation:
                raise TruncationOverflow(f"{key.total} messages exceed truncation {self.truncation}")
            bad = [s for s, _ in key.items if s not in allowed]
            if bad:
                raise ValueError(f"occupation refers to undeclared slots {bad}")
            amp = complex(amp)
            if amp != 0:
                clean[key] = clean.get(key, 0) + amp
        object.__setattr__(self, "amplitudes", {k: v for k, v in clean.items() if v != 0})
        object.__setattr__(self, "wires", tuple(self.wires))

    def __add__(self, other: "FockState") -> "FockState":
        _same_declarations(self, other)
        amps = dict(self.amplitudes)
        for k, v in other.amplitudes.items():
            amps[k] = amps.get(k, 0) + v
        return FockState(self.wires, amps, self.truncation)

    def __mul__(self, c: complex) -> "FockState":
        return FockState(self.wires, {k: c * v for k, v in self.amplitudes.items()}, self.truncation)

    __rmul__ = __mul__

    def message_counts(self) -> set[int]:
        return {k.total for k in self.amplitudes}


def _same_declarations(a: FockState, b: FockState) -> None:
    if a.wires != b.wires:
        raise DimMismatch("Fock states are declared over different wires")


def vacuum(wires: Sequence[WireSpec], truncation: int = DEFAULT_TRUNCATION) -> FockState:
    return FockState(tuple(wires), {OccupationState(): 1.0}, truncation)


def symmetric_product(
    messages: Sequence[tuple[str, int, np.ndarray | ComplexVector]],
    wires: Sequence[WireSpec],
    truncation: int = DEFAULT_TRUNCATION,
) -> FockState:
    """Symmetric product of single messages ``(wire, time, amplitudes)``.

    Expanding each message in its wire's basis and using multilinearity gives
    one occupation key per choice of basis indices; messages on different
    slots simply occupy different keys, which realises the tensor product
    across wires and times.
    """
    if len(messages) > truncation:
        raise TruncationOverflow(f"{len(messages)} messages exceed truncation {truncation}")
    dims = {w.label: w.message_dim for w in wires}
    supports = []
    for label, t, amps in messages:
        amps = amps.entries if isinstance(amps, ComplexVector) else np.asarray(amps, dtype=complex)
        if label not in dims or amps.shape != (dims[label],):
            raise DimMismatch(f"message for wire {label!r} has shape {amps.shape}")
        supports.append([((label, int(t), i), a) for i, a in enumerate(amps) if a != 0])
    out: dict[OccupationState, complex] = {}
    for choice in itertools.product(*supports):
        counts: dict[Slot, int] = {}
        amp = 1.0 + 0j
        for slot, a in choice:
            counts[slot] = counts.get(slot, 0) + 1
            amp *= a
        key = OccupationState.from_counts(counts)
        out[key] = out.get(key, 0) + amp
    return FockState(tuple(wires), out, truncation)


def fock_tensor(a: FockState, b: FockState, truncation: int | None = None) -> FockState:
    """Product state of two Fock states over disjoint wires.

    The default truncation is the sum of both, the largest total the product can reach.
    """
    if {w.label for w in a.wires} & {w.label for w in b.wires}:
        raise DimMismatch("fock_tensor needs disjoint wires")
    trunc = a.truncation + b.truncation if truncation is None else truncation
    amps: dict[OccupationState, complex] = {}
    for ka, va in a.amplitudes.items():
        for kb, vb in b.amplitudes.items():
            k = ka.merged(kb)
            amps[k] = amps.get(k, 0) + va * vb
    return FockState(a.wires + b.wires, amps, trunc)


def fock_inner(a: FockState, b: FockState) -> complex:
    """Fock-space inner product, conjugate-linear in ``a``.

    The sum is accumulated exactly in rationals and rounded once, so the
    result is the correctly rounded inner product of the stored amplitudes.
    """
    _same_declarations(a, b)
    re, im = Fraction(0), Fraction(0)
    for key, amp in a.amplitudes.items():
        other = b.amplitudes.get(key)
        if other is not None:
            ar, ai = Fraction(amp.real), Fraction(amp.imag)
            br, bi = Fraction(other.real), Fraction(other.imag)
            re += (ar * br + ai * bi) * key.weight
            im += (ar * bi - ai * br) * key.weight
    return complex(float(re), float(im))


def embed_vacuum(s: FockState, into: TimestampSet | Iterable[int]) -> FockState:
    """Declare every wire of ``s`` over ``into``; the new times carry vacuum."""
    into = into if isinstance(into, TimestampSet) else TimestampSet(tuple(into))
    for w in s.wires:
        if not w.times.issubset(into):
            raise EmbeddingMismatch(f"wire {w.label!r} times {w.times.times} not inside {into.times}")
    wires = tuple(WireSpec(w.label, w.message_dim, into) for w in s.wires)
    return FockState(wires, dict(s.amplitudes), s.truncation)


@dataclass(frozen=True)
class WireMerge:
    """Re-indexer between two wires and their direct-sum wire."""

    first: WireSpec
    second: WireSpec
    merged: WireSpec

    def _map(self, s: FockState, forward: bool) -> FockState:
        da = self.first.message_dim
        amps = {}
        for key, amp in s.amplitudes.items():
            counts = {}
            for (lab, t, i), c in key.items:
                if forward:
                    if lab == self.first.label:
                        slot = (self.merged.label, t, i)
                    elif lab == self.second.label:
                        slot = (self.merged.label, t, i + da)
                    else:
                        slot = (lab, t, i)
                elif lab == self.merged.label:
                    slot = (self.first.label, t, i) if i < da else (self.second.label, t, i - da)
                else:
                    slot = (lab, t, i)
                counts[slot] = counts.get(slot, 0) + c
            amps[OccupationState.from_counts(counts)] = amp
        if forward:
            wires = [w for w in s.wires if w.label not in (self.first.label, self.second.label)]
            wires.append(self.merged)
        else:
            wires = [w for w in s.wires if w.label != self.merged.label] + [self.first, self.second]
        return FockState(tuple(wires), amps, s.truncation)

    def __call__(self, s: FockState) -> FockState:
        return self._map(s, forward=True)

    def split(self, s: FockState) -> FockState:
        return self._map(s, forward=False)


def merge_wires(a: WireSpec, b: WireSpec, label: str | None = None) -> tuple[WireSpec, WireMerge]:
    """Direct-sum two wires with equal timestamps into one wire."""
    if a.times != b.times:
        raise WireMergeMismatch(f"wires {a.label!r} and {b.label!r} have different timestamps")
    merged = WireSpec(label or f"{a.label}+{b.label}", a.message_dim + b.message_dim, a.times)
    return merged, WireMerge(a, b, merged)


# --------------------------------------------------------------------------
# dense occupation bases


class FockSpace:
    """Orthonormal occupation basis over an ordered list of modes, at most ``truncation`` messages.

    Basis states are ordered by total message count and then lexicographically
    by the sorted tuple of occupied modes, so index 0 is the vacuum.
    """

    def __init__(self, modes: Sequence, truncation: int):
        self.modes = tuple(modes)
        if len(set(self.modes)) != len(self.modes):
            raise ValueError("modes must be distinct")
        self.truncation = int(truncation)
        n = len(self.modes)
        occupied = []
        for m in range(self.truncation + 1):
            occupied.extend(itertools.combinations_with_replacement(range(n), m))
        self._occupied = occupied
        self._index = {occ: i for i, occ in enumerate(occupied)}

    def __len__(self) -> int:
        return len(self._occupied)

    @property
    def dim(self) -> int:
        return len(self._occupied)

    def __eq__(self, other) -> bool:
        return isinstance(other, FockSpace) and self.modes == other.modes and self.truncation == other.truncation

    def __hash__(self):
        return hash((self.modes, self.truncation))

    def occupied(self, index: int) -> tuple[int, ...]:
        """Sorted mode indices (with repetition) of basis state ``index``."""
        return self._occupied[index]

    def index(self, occupied: Iterable[int]) -> int:
        occ = tuple(sorted(occupied))
        if len(occ) > self.truncation:
            raise TruncationOverflow(f"{len(occ)} messages exceed truncation {self.truncation}")
        return self._index[occ]

    def mode_index(self, mode) -> int:
        return self.modes.index(mode)

    @cached_property
    def message_counts(self) -> np.ndarray:
        return np.array([len(o) for o in self._occupied])

    @cached_property
    def weights(self) -> np.ndarray:
        """``sqrt(prod count!)`` per basis state."""
        out = np.empty(len(self._occupied))
        for i, occ in enumerate(self._occupied):
            out[i] = math.sqrt(math.prod(math.factorial(c) for c in _counts(occ).values()))
        return out

    def single(self, amplitudes: np.ndarray) -> np.ndarray:
        """Dense vector of a one-message state with the given mode amplitudes."""
        amplitudes = np.asarray(amplitudes, dtype=complex)
        if amplitudes.shape != (len(self.modes),):
            raise DimMismatch("one amplitude per mode expected")
        v = np.zeros(self.dim, dtype=complex)
        v[1 : 1 + len(self.modes)] = amplitudes
        return v

    def basis(self, index: int) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[index] = 1.0
        return v

    def sector_projector(self, counts: Iterable[int]) -> np.ndarray:
        keep = set(counts)
        return np.array([c in keep for c in self.message_counts], dtype=float)


def _counts(occupied: Iterable[int]) -> dict[int, int]:
    out: dict[int, int] = {}
    for j in occupied:
        out[j] = out.get(j, 0) + 1
    return out


def second_quantize(single, in_space: FockSpace, out_space: FockSpace) -> sp.csr_matrix:
    """Fock extension of a one-message map: ``a_j^dagger -> sum_k V[k, j] b_k^dagger``.

    ``single`` is an ``(len(out_space.modes), len(in_space.modes))`` array or
    sparse matrix.  The result acts on the orthonormal occupation bases, maps
    the vacuum to the vacuum and the m-message sector into the m-message
    sector.  It is an isometry whenever ``single`` is.
    """
    v = sp.csc_matrix(single, dtype=complex)
    if v.shape != (len(out_space.modes), len(in_space.modes)):
        raise DimMismatch(f"single-message map has shape {v.shape}")
    if in_space.truncation > out_space.truncation:
        raise TruncationOverflow("output truncation below input truncation")
    columns = [
        list(zip(v.indices[v.indptr[j] : v.indptr[j + 1]], v.data[v.indptr[j] : v.indptr[j + 1]]))
        for j in range(v.shape[1])
    ]
    rows, cols, vals = [], [], []
    in_w, out_w = in_space.weights, out_space.weights
    for col, occ in enumerate(in_space._occupied):
        acc: dict[tuple[int, ...], complex] = {}
        for choice in itertools.product(*(columns[j] for j in occ)):
            key = tuple(sorted(k for k, _ in choice))
            amp = 1.0 + 0j
            for _, a in choice:
                amp *= a
            acc[key] = acc.get(key, 0) + amp
        for key, amp in acc.items():
            if amp == 0:
                continue
            row = out_space._index[key]
            rows.append(row)
            cols.append(col)
            vals.append(amp * out_w[row] / in_w[col])
    return sp.csr_matrix((vals, (rows, cols)), shape=(out_space.dim, in_space.dim), dtype=complex)


def _space_for(wires: Sequence[WireSpec], truncation: int) -> FockSpace:
    modes = sorted(s for w in wires for s in w.slots())
    return FockSpace(modes, truncation)


def as_dense(s: FockState, basis_order: FockSpace | None = None) -> ComplexVector:
    """Coefficients in the orthonormal occupation basis (weight ``sqrt(prod count!)``)."""
    space = basis_order or _space_for(s.wires, s.truncation)
    out = np.zeros(space.dim, dtype=complex)
    for key, amp in s.amplitudes.items():
        occ = []
        for slot, c in key.items:
            occ.extend([space.mode_index(slot)] * c)
        out[space.index(occ)] += amp * math.sqrt(key.weight)
    label = "fock[" + ",".join(w.label for w in s.wires) + "]"
    return ComplexVector(SpaceSpec(((label, space.dim),)), out)


def from_dense(vec: ComplexVector | np.ndarray, wires: Sequence[WireSpec], truncation: int,
               basis_order: FockSpace | None = None) -> FockState:
    """Inverse of :func:`as_dense`."""
    space = basis_order or _space_for(wires, truncation)
    arr = vec.entries if isinstance(vec, ComplexVector) else np.asarray(vec, dtype=complex)
    if arr.shape != (space.dim,):
        raise DimMismatch(f"dense vector has shape {arr.shape}, basis has {space.dim} states")
    amps = {}
    for i, a in enumerate(arr):
        if a != 0:
            counts = _counts(space.occupied(i))
            key = OccupationState.from_counts({space.modes[j]: c for j, c in counts.items()})
            amps[key] = a / space.weights[i]
    return FockState(tuple(wires), amps, truncation)
