"""Dense complex linear algebra on labeled tensor factors.

Every operator, state and Choi object in the package is carried by a
:class:`ComplexMatrix` or :class:`ComplexVector` whose spaces are described by a
:class:`SpaceSpec`, an ordered list of ``(label, dim)`` factors.  Labels are the
glue of the link product: factors with equal labels are contracted, all others
are tensored.
"""

from __future__ import annotations

import string
from collections import Counter
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    DimMismatch,
    EmptyKrausSet,
    LabelCollision,
    LabelNotFound,
    LinkAssociativityViolation,
)

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class SpaceSpec:
    """Ordered tensor factors ``((label, dim), ...)`` with distinct labels."""

    factors: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        factors = tuple((str(lab), int(d)) for lab, d in self.factors)
        object.__setattr__(self, "factors", factors)
        labels = [lab for lab, _ in factors]
        dup = [lab for lab, c in Counter(labels).items() if c > 1]
        if dup:
            raise LabelCollision(f"duplicate labels in space: {dup}")
        bad = [lab for lab, d in factors if d < 1]
        if bad:
            raise DimMismatch(f"non-positive dimension for labels {bad}")

    @classmethod
    def of(cls, *factors: tuple[str, int]) -> "SpaceSpec":
        return cls(tuple(factors))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.factors else 1

    def __len__(self) -> int:
        return len(self.factors)

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LabelNotFound(f"label {label!r} not in {self.labels}") from None

    def dim_of(self, label: str) -> int:
        return self.factors[self.index(label)][1]

    def concat(self, other: "SpaceSpec") -> "SpaceSpec":
        clash = set(self.labels) & set(other.labels)
        if clash:
            raise LabelCollision(f"labels {sorted(clash)} appear on both sides")
        return SpaceSpec(self.factors + other.factors)

    def without(self, labels: Iterable[str]) -> "SpaceSpec":
        drop = set(labels)
        return SpaceSpec(tuple(f for f in self.factors if f[0] not in drop))

    def select(self, labels: Sequence[str]) -> "SpaceSpec":
        return SpaceSpec(tuple((lab, self.dim_of(lab)) for lab in labels))

    def relabel(self, mapping: dict[str, str]) -> "SpaceSpec":
        return SpaceSpec(tuple((mapping.get(lab, lab), d) for lab, d in self.factors))


def _checked_entries(entries, shape) -> np.ndarray:
    arr = np.array(entries, dtype=complex)
    if arr.size != int(np.prod(shape, dtype=np.int64)):
        raise DimMismatch(f"expected {shape} entries, got array of shape {arr.shape}")
    arr = arr.reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise ValueError("entries must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ComplexMatrix:
    """An operator from ``col_space`` to ``row_space``."""

    row_space: SpaceSpec
    col_space: SpaceSpec
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        shape = (self.row_space.dim, self.col_space.dim)
        object.__setattr__(self, "entries", _checked_entries(self.entries, shape))

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @property
    def is_square_labeled(self) -> bool:
        return self.row_space == self.col_space

    def tensor_view(self) -> np.ndarray:
        """Entries reshaped to one axis per row factor followed by one per column factor."""
        return self.entries.reshape(self.row_space.dims + self.col_space.dims)

    def dagger(self) -> "ComplexMatrix":
        return ComplexMatrix(self.col_space, self.row_space, self.entries.conj().T)

    def __matmul__(self, other: "ComplexMatrix") -> "ComplexMatrix":
        if self.col_space.dims != other.row_space.dims:
            raise DimMismatch(
                f"cannot compose {self.col_space.factors} with {other.row_space.factors}"
            )
        return ComplexMatrix(self.row_space, other.col_space, self.entries @ other.entries)

    def apply(self, vec: "ComplexVector") -> "ComplexVector":
        if self.col_space.dims != vec.space.dims:
            raise DimMismatch(f"operator input {self.col_space.factors} vs {vec.space.factors}")
        return ComplexVector(self.row_space, self.entries @ vec.entries)

    def permute(self, row_labels: Sequence[str], col_labels: Sequence[str] | None = None) -> "ComplexMatrix":
        """Reorder factors; ``col_labels`` defaults to ``row_labels``."""
        col_labels = row_labels if col_labels is None else col_labels
        if sorted(row_labels) != sorted(self.row_space.labels) or sorted(col_labels) != sorted(
            self.col_space.labels
        ):
            raise LabelNotFound("permutation must mention every factor exactly once")
        rperm = [self.row_space.index(lab) for lab in row_labels]
        cperm = [len(rperm) + self.col_space.index(lab) for lab in col_labels]
        t = self.tensor_view().transpose(rperm + cperm)
        rs, cs = self.row_space.select(row_labels), self.col_space.select(col_labels)
        return ComplexMatrix(rs, cs, t.reshape(rs.dim, cs.dim))

    def relabel(self, mapping: dict[str, str]) -> "ComplexMatrix":
        return ComplexMatrix(self.row_space.relabel(mapping), self.col_space.relabel(mapping), self.entries)

    def max_abs_diff(self, other: "ComplexMatrix") -> float:
        other = other.permute(self.row_space.labels, self.col_space.labels)
        if other.shape != self.shape:
            raise DimMismatch("shape mismatch")
        return float(np.abs(self.entries - other.entries).max(initial=0.0))


@dataclass(frozen=True)
class ComplexVector:
    """A vector in ``space``."""

    space: SpaceSpec
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "entries", _checked_entries(self.entries, (self.space.dim,)))

    def tensor_view(self) -> np.ndarray:
        return self.entries.reshape(self.space.dims)

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))

    def outer(self) -> ComplexMatrix:
        return ComplexMatrix(self.space, self.space, np.outer(self.entries, self.entries.conj()))

    def permute(self, labels: Sequence[str]) -> "ComplexVector":
        if sorted(labels) != sorted(self.space.labels):
            raise LabelNotFound("permutation must mention every factor exactly once")
        perm = [self.space.index(lab) for lab in labels]
        sp = self.space.select(labels)
        return ComplexVector(sp, self.tensor_view().transpose(perm).reshape(-1))

    def relabel(self, mapping: dict[str, str]) -> "ComplexVector":
        return ComplexVector(self.space.relabel(mapping), self.entries)

    def max_abs_diff(self, other: "ComplexVector") -> float:
        other = other.permute(self.space.labels)
        return float(np.abs(self.entries - other.entries).max(initial=0.0))


# --------------------------------------------------------------------------
# constructors


def identity(*factors: tuple[str, int]) -> ComplexMatrix:
    sp = SpaceSpec(tuple(factors))
    return ComplexMatrix(sp, sp, np.eye(sp.dim))


def operator(out_factors, in_factors, entries) -> ComplexMatrix:
    """Build an operator from ``in_factors`` to ``out_factors`` (lists of (label, dim))."""
    return ComplexMatrix(SpaceSpec(tuple(out_factors)), SpaceSpec(tuple(in_factors)), entries)


def vector(factors, entries) -> ComplexVector:
    return ComplexVector(SpaceSpec(tuple(factors)), entries)


def basis_vector(label: str, dim: int, index: int) -> ComplexVector:
    e = np.zeros(dim, dtype=complex)
    e[index] = 1.0
    return ComplexVector(SpaceSpec(((label, dim),)), e)


def scalar_matrix(c: complex) -> ComplexMatrix:
    return ComplexMatrix(SpaceSpec(), SpaceSpec(), [[c]])


# --------------------------------------------------------------------------
# tensor products and Choi objects


def tensor(a: ComplexMatrix, b: ComplexMatrix) -> ComplexMatrix:
    """Kronecker product with concatenated factor lists."""
    rows = a.row_space.concat(b.row_space)
    cols = a.col_space.concat(b.col_space)
    return ComplexMatrix(rows, cols, np.kron(a.entries, b.entries))


def tensor_vectors(a: ComplexVector, b: ComplexVector) -> ComplexVector:
    return ComplexVector(a.space.concat(b.space), np.kron(a.entries, b.entries))


def tensor_all(items: Sequence[ComplexMatrix]) -> ComplexMatrix:
    return reduce(tensor, items)


def choi_vector(v: ComplexMatrix) -> ComplexVector:
    """Return ``sum_i |i>^X (x) V|i>`` on ``X (x) Y`` for ``V: X -> Y``."""
    space = v.col_space.concat(v.row_space)
    # entry (i, y) of the Choi vector is V[y, i]
    return ComplexVector(space, v.entries.T.reshape(-1))


def operator_from_choi(vec: ComplexVector, in_labels: Sequence[str]) -> ComplexMatrix:
    """Invert :func:`choi_vector`, reading ``in_labels`` as the input factors."""
    out_labels = [lab for lab in vec.space.labels if lab not in set(in_labels)]
    v = vec.permute(list(in_labels) + out_labels)
    ins, outs = vec.space.select(in_labels), vec.space.select(out_labels)
    return ComplexMatrix(outs, ins, v.entries.reshape(ins.dim, outs.dim).T)


def choi_matrix(kraus_set: Sequence[ComplexMatrix]) -> ComplexMatrix:
    """Return ``sum_k |K_k>><<K_k|`` for a Kraus set sharing in/out spaces."""
    kraus_set = list(kraus_set)
    if not kraus_set:
        raise EmptyKrausSet("a Kraus set needs at least one operator")
    first = kraus_set[0]
    for k in kraus_set[1:]:
        if k.row_space != first.row_space or k.col_space != first.col_space:
            raise DimMismatch("all Kraus operators must share input and output spaces")
    vecs = [choi_vector(k) for k in kraus_set]
    space = vecs[0].space
    total = sum(np.outer(v.entries, v.entries.conj()) for v in vecs)
    return ComplexMatrix(space, space, total)


# --------------------------------------------------------------------------
# link products


def _shared_labels(a: SpaceSpec, b: SpaceSpec) -> list[str]:
    shared = [lab for lab in a.labels if lab in b]
    for lab in shared:
        if a.dim_of(lab) != b.dim_of(lab):
            raise DimMismatch(
                f"shared label {lab!r} has dimension {a.dim_of(lab)} vs {b.dim_of(lab)}"
            )
    return shared


def link_vectors(a: ComplexVector, b: ComplexVector) -> ComplexVector:
    """Link product of vectors: contract shared labels without conjugation.

    The result carries ``a``'s unshared factors followed by ``b``'s.
    """
    shared = _shared_labels(a.space, b.space)
    ax = [a.space.index(lab) for lab in shared]
    bx = [b.space.index(lab) for lab in shared]
    t = np.tensordot(a.tensor_view(), b.tensor_view(), axes=(ax, bx))
    space = a.space.without(shared).concat(b.space.without(shared))
    return ComplexVector(space, np.asarray(t).reshape(-1))


def link_matrices(a: ComplexMatrix, b: ComplexMatrix) -> ComplexMatrix:
    """Link product ``Tr_Y[(A^{T_Y} (x) 1)(1 (x) B)]`` of square-labeled matrices."""
    for m in (a, b):
        if not m.is_square_labeled:
            raise DimMismatch("link_matrices needs matrices acting on a single labeled space")
    sa, sb = a.row_space, b.row_space
    shared = _shared_labels(sa, sb)
    na, nb = len(sa), len(sb)
    ax = [sa.index(lab) for lab in shared] + [na + sa.index(lab) for lab in shared]
    bx = [sb.index(lab) for lab in shared] + [nb + sb.index(lab) for lab in shared]
    t = np.tensordot(a.tensor_view(), b.tensor_view(), axes=(ax, bx))
    # remaining axes: a-rows, a-cols, b-rows, b-cols (unshared only)
    ra, rb = sa.without(shared), sb.without(shared)
    ka, kb = len(ra), len(rb)
    t = np.asarray(t).transpose(
        list(range(ka)) + list(range(2 * ka, 2 * ka + kb)) + list(range(ka, 2 * ka)) + list(range(2 * ka + kb, 2 * ka + 2 * kb))
    )
    space = ra.concat(rb)
    return ComplexMatrix(space, space, t.reshape(space.dim, space.dim))


def _check_chain(spaces: Sequence[SpaceSpec]) -> None:
    counts = Counter(lab for sp in spaces for lab in sp.labels)
    over = sorted(lab for lab, c in counts.items() if c > 2)
    if over:
        raise LinkAssociativityViolation(f"labels {over} appear in more than two operands")


def link_chain(*operands):
    """Left fold of the link product over vectors or square-labeled matrices.

    Refuses chains where a label is shared by three or more operands, since the
    result would then depend on the bracketing.
    """
    if not operands:
        raise ValueError("link_chain needs at least one operand")
    if all(isinstance(o, ComplexVector) for o in operands):
        _check_chain([o.space for o in operands])
        return reduce(link_vectors, operands)
    if all(isinstance(o, ComplexMatrix) for o in operands):
        _check_chain([o.row_space for o in operands])
        return reduce(link_matrices, operands)
    raise TypeError("operands must be all vectors or all matrices")


# --------------------------------------------------------------------------
# traces and checks


def partial_trace(m: ComplexMatrix, labels: Iterable[str]) -> ComplexMatrix:
    """Trace out the factors named in ``labels`` (present in rows and columns)."""
    labels = list(dict.fromkeys(labels))
    if not labels:
        return m
    for lab in labels:
        if lab not in m.row_space or lab not in m.col_space:
            raise LabelNotFound(f"label {lab!r} must label both rows and columns")
        if m.row_space.dim_of(lab) != m.col_space.dim_of(lab):
            raise DimMismatch(f"row and column dimension of {lab!r} differ")
    nr, nc = len(m.row_space), len(m.col_space)
    if nr + nc > len(string.ascii_letters):
        raise DimMismatch("too many tensor factors for a single contraction")
    letters = string.ascii_letters[: nr + nc]
    t = m.tensor_view()
    sub = list(letters)
    for lab in labels:
        sub[nr + m.col_space.index(lab)] = sub[m.row_space.index(lab)]
    rows_keep = [sub[i] for i, lab in enumerate(m.row_space.labels) if lab not in labels]
    cols_keep = [sub[nr + i] for i, lab in enumerate(m.col_space.labels) if lab not in labels]
    out = np.einsum("".join(sub) + "->" + "".join(rows_keep + cols_keep), t)
    rs, cs = m.row_space.without(labels), m.col_space.without(labels)
    return ComplexMatrix(rs, cs, np.asarray(out).reshape(rs.dim, cs.dim))


def partial_transpose(m: ComplexMatrix, labels: Iterable[str]) -> ComplexMatrix:
    """Transpose the named factors of a square-labeled matrix."""
    if not m.is_square_labeled:
        raise DimMismatch("partial transpose needs a square-labeled matrix")
    n = len(m.row_space)
    perm = list(range(2 * n))
    for lab in labels:
        i = m.row_space.index(lab)
        perm[i], perm[n + i] = n + i, i
    t = m.tensor_view().transpose(perm)
    return ComplexMatrix(m.row_space, m.col_space, t.reshape(m.shape))


def is_isometry(v, tol: float = DEFAULT_TOL) -> tuple[bool, float]:
    """Return ``(ok, deviation)`` with ``deviation = max |V^dagger V - 1|``; sparse input stays sparse."""
    arr = v.entries if isinstance(v, ComplexMatrix) else v
    if sp.issparse(arr):
        arr = sp.csr_matrix(arr)
        diff = (arr.conj().T @ arr - sp.identity(arr.shape[1], format="csr")).tocoo()
        dev = float(np.abs(diff.data).max(initial=0.0))
    else:
        arr = np.asarray(arr)
        gram = arr.conj().T @ arr
        dev = float(np.abs(gram - np.eye(gram.shape[0])).max(initial=0.0))
    return dev <= tol, dev


def min_eigenvalue(m: ComplexMatrix) -> float:
    h = (m.entries + m.entries.conj().T) / 2
    return float(np.linalg.eigvalsh(h).min())
