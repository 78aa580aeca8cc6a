"""Causal boxes on truncated timestamped Fock spaces.

A box has input and output *ports*; a port bundles the wires that share one
timestamp and carries the joint Fock space of all their modes with at most
``truncation`` messages.  A box is stored either as a dense Choi matrix over
``(input ports, output ports)`` or as a sparse Stinespring isometry whose rows
are ``(output ports, terminal environment)`` and whose columns are the input
ports.  Sequence representations are composed into the isometric form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import AcausalLoop, DimMismatch, InvalidSlice, LabelCollision, LabelNotFound
from .fock import FockSpace
from .linalg import DEFAULT_TOL, ComplexMatrix, ComplexVector, SpaceSpec, is_isometry, partial_trace

DENSE_CHOI_LIMIT = 6000


@dataclass(frozen=True)
class Port:
    """Wires ``(label, message dimension)`` sharing the timestamp ``time``."""

    wires: tuple[tuple[str, int], ...]
    time: int
    truncation: int

    def __post_init__(self):
        wires = tuple(sorted((str(w), int(d)) for w, d in self.wires))
        if len({w for w, _ in wires}) != len(wires):
            raise LabelCollision(f"duplicate wire in port at time {self.time}")
        if any(d < 1 for _, d in wires) or self.truncation < 0:
            raise DimMismatch("message dimensions must be positive and truncation non-negative")
        object.__setattr__(self, "wires", wires)
        object.__setattr__(self, "time", int(self.time))
        object.__setattr__(self, "truncation", int(self.truncation))

    @property
    def label(self) -> str:
        return ",".join(w for w, _ in self.wires) + f"@{self.time}"

    @property
    def modes(self) -> list[tuple[str, int, int]]:
        return sorted((w, self.time, i) for w, d in self.wires for i in range(d))

    @cached_property
    def space(self) -> FockSpace:
        return FockSpace(self.modes, self.truncation)

    @property
    def dim(self) -> int:
        return self.space.dim

    def with_truncation(self, n: int) -> "Port":
        return Port(self.wires, self.time, n)

    def mode(self, wire_label: str, index: int) -> int:
        """Position of ``(wire, index)`` in the port's mode list."""
        return self.space.mode_index((wire_label, self.time, index))


def port(wires: Iterable[tuple[str, int]], time: int, truncation: int) -> Port:
    return Port(tuple(wires), time, truncation)


def _dims(ports: Sequence[Port]) -> list[int]:
    return [p.dim for p in ports]


def _check_unique(ports: Sequence[Port]) -> None:
    labels = [p.label for p in ports]
    if len(set(labels)) != len(labels):
        raise LabelCollision(f"duplicate port labels {labels}")


# --------------------------------------------------------------------------
# mixed-radix index helpers


def _digits(idx: np.ndarray, dims: Sequence[int]) -> list[np.ndarray]:
    idx = np.asarray(idx, dtype=np.int64)
    out = []
    for d in reversed(dims):
        out.append(idx % d)
        idx = idx // d
    return out[::-1]


def _combine(digits: Sequence[np.ndarray], dims: Sequence[int], like: np.ndarray | None = None) -> np.ndarray:
    acc = np.zeros_like(like if like is not None else (digits[0] if digits else np.zeros(1)), dtype=np.int64)
    for dig, d in zip(digits, dims):
        acc = acc * d + dig
    return acc


def _prod(dims: Iterable[int]) -> int:
    return math.prod(dims)


# --------------------------------------------------------------------------
# sequence representations


@dataclass(frozen=True)
class Slice:
    """One isometry ``(in ports (x) mem_in) -> (out ports (x) mem_out)``.

    Row index = ``out-port index * mem_out + memory``; column index =
    ``in-port index * mem_in + memory``; port indices are mixed radix in the
    listed port order.
    """

    in_ports: tuple[Port, ...]
    out_ports: tuple[Port, ...]
    matrix: sp.csr_matrix = field(repr=False)
    mem_in: int = 1
    mem_out: int = 1

    def __post_init__(self):
        object.__setattr__(self, "in_ports", tuple(self.in_ports))
        object.__setattr__(self, "out_ports", tuple(self.out_ports))
        m = sp.csr_matrix(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        shape = (_prod(_dims(self.out_ports)) * self.mem_out, _prod(_dims(self.in_ports)) * self.mem_in)
        if m.shape != shape:
            raise DimMismatch(f"slice matrix has shape {m.shape}, ports and memory give {shape}")
        if self.in_ports and self.out_ports:
            if min(p.time for p in self.out_ports) <= max(p.time for p in self.in_ports):
                raise InvalidSlice("every output time of a slice must exceed every input time")


@dataclass(frozen=True)
class SequenceRep:
    slices: tuple[Slice, ...]

    def __post_init__(self):
        slices = tuple(self.slices)
        object.__setattr__(self, "slices", slices)
        if not slices:
            raise InvalidSlice("a sequence needs at least one slice")
        if slices[0].mem_in != 1:
            raise InvalidSlice("the first slice cannot receive memory")
        for a, b in zip(slices, slices[1:]):
            if a.mem_out != b.mem_in:
                raise DimMismatch("memory dimensions of consecutive slices differ")
            for side in ("in_ports", "out_ports"):
                pa, pb = getattr(a, side), getattr(b, side)
                if pa and pb and max(p.time for p in pa) >= min(p.time for p in pb):
                    raise InvalidSlice(f"{side} times must strictly increase along the sequence")
        _check_unique([p for s in slices for p in s.in_ports])
        _check_unique([p for s in slices for p in s.out_ports])


def _apply_slice(u: sp.coo_matrix, mem: int, s: Slice) -> sp.coo_matrix:
    """Append a slice to an assembled isometry with rows ``(out, mem)`` and columns ``in``."""
    d_in = _prod(_dims(s.in_ports))
    d_out_new = _prod(_dims(s.out_ports)) * s.mem_out
    S = s.matrix.tocsc()
    S.sort_indices()
    o, m = u.row // mem, u.row % mem
    j = np.arange(d_in, dtype=np.int64)
    s_cols = (j[None, :] * mem + m[:, None]).reshape(-1)
    base_o = np.repeat(o, d_in)
    base_c = (u.col[:, None] * d_in + j[None, :]).reshape(-1)
    base_v = np.repeat(u.data, d_in)
    start, stop = S.indptr[s_cols].astype(np.int64), S.indptr[s_cols + 1].astype(np.int64)
    counts = stop - start
    total = int(counts.sum())
    offs = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(counts) - counts, counts)
    pos = np.repeat(start, counts) + offs
    rows = np.repeat(base_o, counts) * d_out_new + S.indices[pos]
    cols = np.repeat(base_c, counts)
    vals = np.repeat(base_v, counts) * S.data[pos]
    n_out = (u.shape[0] // mem) * d_out_new
    return sp.coo_matrix((vals, (rows, cols)), shape=(n_out, u.shape[1] * d_in))


# --------------------------------------------------------------------------
# boxes


class CausalBox:
    """A truncated causal box backed by a Choi matrix or a Stinespring isometry."""

    def __init__(self, in_ports: Sequence[Port], out_ports: Sequence[Port], *, choi: ComplexMatrix | None = None,
                 isometry=None, env_dim: int = 1, sequence: SequenceRep | None = None):
        self.in_ports = tuple(in_ports)
        self.out_ports = tuple(out_ports)
        _check_unique(self.in_ports)
        _check_unique(self.out_ports)
        if set(p.label for p in self.in_ports) & set(p.label for p in self.out_ports):
            raise LabelCollision("a port label is used for both input and output")
        if (choi is None) == (isometry is None):
            raise ValueError("give exactly one of choi or isometry")
        self.sequence = sequence
        self.env_dim = int(env_dim)
        if choi is not None:
            space = self.choi_space()
            if choi.row_space != space or choi.col_space != space:
                choi = choi.permute(space.labels)
                if choi.row_space != space:
                    raise DimMismatch("Choi matrix factors do not match the ports")
            self._choi = choi
            self._isometry = None
        else:
            iso = sp.csr_matrix(isometry, dtype=complex)
            if iso.shape != (self.out_dim * self.env_dim, self.in_dim):
                raise DimMismatch(f"isometry has shape {iso.shape}, ports give {(self.out_dim * self.env_dim, self.in_dim)}")
            self._isometry = iso
            self._choi = None

    # shapes ---------------------------------------------------------------

    @property
    def in_dims(self) -> list[int]:
        return _dims(self.in_ports)

    @property
    def out_dims(self) -> list[int]:
        return _dims(self.out_ports)

    @property
    def in_dim(self) -> int:
        return _prod(self.in_dims)

    @property
    def out_dim(self) -> int:
        return _prod(self.out_dims)

    def choi_space(self) -> SpaceSpec:
        return SpaceSpec(tuple((p.label, p.dim) for p in self.in_ports + self.out_ports))

    def port(self, label: str) -> Port:
        for p in self.in_ports + self.out_ports:
            if p.label == label:
                return p
        raise LabelNotFound(f"no port {label!r}")

    @property
    def is_isometric(self) -> bool:
        return self._isometry is not None

    @property
    def isometry(self) -> sp.csr_matrix:
        if self._isometry is None:
            raise ValueError("this box is stored as a Choi matrix")
        return self._isometry

    @property
    def choi(self) -> ComplexMatrix:
        """Dense Choi matrix over ``(input ports, output ports)``; the environment is traced."""
        if self._choi is None:
            if self.in_dim * self.out_dim > DENSE_CHOI_LIMIT:
                raise MemoryError(f"dense Choi matrix of dimension {self.in_dim * self.out_dim} exceeds the limit")
            b = self._gram_factor(list(range(len(self.out_ports))))
            self._choi = ComplexMatrix(self.choi_space(), self.choi_space(), (b @ b.conj().T).toarray())
        return self._choi

    def choi_vector_full(self) -> ComplexVector:
        """Pure Choi vector ``sum_i |i> (x) U|i>`` over inputs, outputs and ``env``."""
        space = self.choi_space().concat(SpaceSpec.of(("env", self.env_dim)))
        u = self.isometry.tocoo()
        idx = u.col.astype(np.int64) * (self.out_dim * self.env_dim) + u.row
        vec = np.zeros(space.dim, dtype=complex)
        np.add.at(vec, idx, u.data)
        return ComplexVector(space, vec)

    def _gram_factor(self, keep_out: Sequence[int]) -> sp.csr_matrix:
        """``B`` with rows ``(inputs, kept outputs)`` and columns ``(other outputs, env)``."""
        u = self.isometry.tocoo()
        dims = self.out_dims
        out_idx, env = u.row // self.env_dim, u.row % self.env_dim
        digs = _digits(out_idx, dims)
        rest = [i for i in range(len(dims)) if i not in keep_out]
        kept = _combine([digs[i] for i in keep_out], [dims[i] for i in keep_out], like=u.row)
        other = _combine([digs[i] for i in rest], [dims[i] for i in rest], like=u.row)
        d_keep = _prod(dims[i] for i in keep_out)
        d_rest = _prod(dims[i] for i in rest)
        rows = u.col.astype(np.int64) * d_keep + kept
        cols = other * self.env_dim + env
        return sp.csr_matrix((u.data, (rows, cols)), shape=(self.in_dim * d_keep, d_rest * self.env_dim))

    # actions --------------------------------------------------------------

    def apply(self, state: np.ndarray) -> np.ndarray:
        """Image of an input vector under the isometry: indices ``(outputs, env)``."""
        return self.isometry @ np.asarray(state, dtype=complex)

    def trace_deviation(self) -> float:
        """Max deviation of ``Tr_out J`` from the identity on inputs."""
        if self._isometry is not None:
            return is_isometry(self._isometry, np.inf)[1]
        red = partial_trace(self._choi, [p.label for p in self.out_ports])
        return float(np.abs(red.entries - np.eye(self.in_dim)).max(initial=0.0))

    def min_eigenvalue(self) -> float:
        if self._isometry is not None:
            return 0.0
        return float(np.linalg.eigvalsh(self._choi.entries).min())

    def message_conservation_defect(self) -> float:
        """Largest weight moved between different total message counts (in vs out)."""
        in_counts = _port_counts(self.in_ports)
        out_counts = _port_counts(self.out_ports)
        if self._isometry is not None:
            u = self._isometry.tocoo()
            c_in = in_counts[u.col]
            c_out = out_counts[u.row // self.env_dim]
            bad = c_in != c_out
            per_col = np.zeros(self.in_dim)
            np.add.at(per_col, u.col[bad], np.abs(u.data[bad]) ** 2)
            return float(per_col.max(initial=0.0))
        j = self._choi.entries
        cnt = (in_counts[:, None] == out_counts[None, :]).reshape(-1)
        off = j.copy()
        off[np.ix_(cnt, cnt)] = 0
        return float(np.abs(off).max(initial=0.0))

    def __repr__(self) -> str:
        kind = "isometry" if self._isometry is not None else "choi"
        return f"CausalBox(in={[p.label for p in self.in_ports]}, out={[p.label for p in self.out_ports]}, {kind})"


def _port_counts(ports: Sequence[Port]) -> np.ndarray:
    counts = np.zeros(1, dtype=np.int64)
    for p in ports:
        counts = (counts[:, None] + p.space.message_counts[None, :]).reshape(-1)
    return counts


def from_sequence(s: SequenceRep, tol: float = DEFAULT_TOL) -> CausalBox:
    """Compose the slices into one isometry; the last slice's memory is the environment."""
    for n, sl in enumerate(s.slices):
        ok, dev = is_isometry(sl.matrix, tol)
        if not ok:
            raise InvalidSlice(f"slice {n} is not an isometry (deviation {dev:.3g})")
    u = sp.coo_matrix(np.ones((1, 1), dtype=complex))
    mem = 1
    for sl in s.slices:
        u = _apply_slice(u, mem, sl)
        mem = sl.mem_out
    ins = [p for sl in s.slices for p in sl.in_ports]
    outs = [p for sl in s.slices for p in sl.out_ports]
    return CausalBox(ins, outs, isometry=u.tocsr(), env_dim=mem, sequence=s)


# --------------------------------------------------------------------------
# causality


@dataclass
class CausalityReport:
    deviations: dict[int, float]
    trace_deviation: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.trace_deviation <= self.tol and all(d <= self.tol for d in self.deviations.values())

    def failures(self) -> list[int]:
        return [t for t, d in self.deviations.items() if d > self.tol]

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "tol": self.tol,
            "trace_deviation": self.trace_deviation,
            "per_time": [{"t": t, "deviation": d, "ok": d <= self.tol} for t, d in sorted(self.deviations.items())],
        }


def _reduced_gram(cb: CausalBox, keep_out: list[int]) -> sp.csr_matrix:
    """``Tr_{other outputs} J`` with rows and columns ``(inputs, kept outputs)``."""
    if cb.is_isometric:
        b = cb._gram_factor(keep_out)
        return (b @ b.conj().T).tocsr()
    drop = [p.label for i, p in enumerate(cb.out_ports) if i not in keep_out]
    red = partial_trace(cb.choi, drop) if drop else cb.choi
    return sp.csr_matrix(red.entries)


def _causality_deviation(cb: CausalBox, t: int) -> float:
    keep_out = [i for i, p in enumerate(cb.out_ports) if p.time <= t]
    late_in = [i for i, p in enumerate(cb.in_ports) if p.time > t]
    if not late_in:
        return 0.0
    j = _reduced_gram(cb, keep_out).tocoo()
    d_keep = _prod(cb.out_dims[i] for i in keep_out)
    dims = cb.in_dims
    early_in = [i for i in range(len(dims)) if i not in late_in]
    d_late = _prod(dims[i] for i in late_in)

    def split(idx):
        o, i = idx % d_keep, idx // d_keep
        digs = _digits(i, dims)
        return digs, o

    r_digs, r_o = split(j.row)
    c_digs, c_o = split(j.col)
    r_late = _combine([r_digs[i] for i in late_in], [dims[i] for i in late_in], like=j.row)
    c_late = _combine([c_digs[i] for i in late_in], [dims[i] for i in late_in], like=j.col)
    base = (r_late == 0) & (c_late == 0)
    expected_rows, expected_cols, expected_vals = [], [], []
    b_digits = _digits(np.arange(d_late, dtype=np.int64), [dims[i] for i in late_in])
    for b in range(d_late):
        rd = [r_digs[i][base] if i in early_in else np.full(base.sum(), b_digits[late_in.index(i)][b]) for i in range(len(dims))]
        cd = [c_digs[i][base] if i in early_in else np.full(base.sum(), b_digits[late_in.index(i)][b]) for i in range(len(dims))]
        expected_rows.append(_combine(rd, dims, like=j.row[base]) * d_keep + r_o[base])
        expected_cols.append(_combine(cd, dims, like=j.col[base]) * d_keep + c_o[base])
        expected_vals.append(j.data[base])
    expected = sp.coo_matrix(
        (np.concatenate(expected_vals), (np.concatenate(expected_rows), np.concatenate(expected_cols))),
        shape=j.shape,
    ).tocsr()
    diff = (j.tocsr() - expected).tocoo()
    return float(np.abs(diff.data).max(initial=0.0))


def check_causality(cb: CausalBox, tol: float = DEFAULT_TOL, times: Iterable[int] | None = None) -> CausalityReport:
    """Outputs up to ``t`` must not depend on inputs after ``t``, for every port time ``t``.

    With ``J_t`` the Choi matrix with outputs after ``t`` traced out, the
    condition is ``J_t = J_t|_{late inputs vacuum} (x) 1_{late inputs}``, which
    is the statement that the reduced map factors through the trace of the
    late inputs, tested on every matrix unit of the truncated input space.
    """
    all_times = sorted({p.time for p in cb.in_ports + cb.out_ports}) if times is None else sorted(times)
    devs = {t: _causality_deviation(cb, t) for t in all_times}
    return CausalityReport(devs, cb.trace_deviation(), tol)


# --------------------------------------------------------------------------
# composition


def _loop_matrix(m: ComplexMatrix, out_label: str, in_label: str) -> ComplexMatrix:
    labels = m.row_space.labels
    if out_label not in labels or in_label not in labels:
        raise LabelNotFound(f"loop labels {out_label!r}, {in_label!r} not both present")
    if m.row_space.dim_of(out_label) != m.row_space.dim_of(in_label):
        raise DimMismatch(f"cannot loop {out_label!r} into {in_label!r}: dimensions differ")
    if not m.is_square_labeled:
        raise DimMismatch("loop composition needs a Choi matrix with equal row and column factors")
    n = len(labels)
    letters = [chr(ord("a") + i) for i in range(n)]
    cols = [chr(ord("A") + i) for i in range(n)]
    ci, bi = labels.index(out_label), labels.index(in_label)
    letters[bi] = letters[ci]
    cols[bi] = cols[ci]
    keep = [i for i in range(n) if i not in (ci, bi)]
    spec = "".join(letters) + "".join(cols) + "->" + "".join(letters[i] for i in keep) + "".join(cols[i] for i in keep)
    out = np.einsum(spec, m.tensor_view())
    space = m.row_space.without([out_label, in_label])
    return ComplexMatrix(space, space, out.reshape(space.dim, space.dim))


def loop_compose(m, out_label: str, in_label: str):
    """Feed output ``out_label`` back into input ``in_label`` in the computational basis.

    Works on a labeled Choi matrix or on a :class:`CausalBox`; for a box the
    output must carry an earlier timestamp than the input it feeds.
    """
    if isinstance(m, ComplexMatrix):
        return _loop_matrix(m, out_label, in_label)
    if not isinstance(m, CausalBox):
        raise TypeError("loop_compose expects a ComplexMatrix or a CausalBox")
    c = next((p for p in m.out_ports if p.label == out_label), None)
    b = next((p for p in m.in_ports if p.label == in_label), None)
    if c is None or b is None:
        raise LabelNotFound(f"{out_label!r} must be an output port and {in_label!r} an input port")
    if c.dim != b.dim:
        raise DimMismatch(f"ports {out_label!r} and {in_label!r} have different dimensions")
    if c.time >= b.time:
        raise AcausalLoop(f"output at t={c.time} cannot feed an input at t={b.time}")
    choi = _loop_matrix(m.choi, out_label, in_label)
    return CausalBox([p for p in m.in_ports if p is not b], [p for p in m.out_ports if p is not c], choi=choi)


def parallel_compose(a: CausalBox, b: CausalBox) -> CausalBox:
    """Tensor product of two boxes; inputs ``(a, b)`` and outputs ``(a, b)``."""
    labels_a = {p.label for p in a.in_ports + a.out_ports}
    labels_b = {p.label for p in b.in_ports + b.out_ports}
    if labels_a & labels_b:
        raise LabelCollision(f"port labels shared by both boxes: {sorted(labels_a & labels_b)}")
    ins, outs = a.in_ports + b.in_ports, a.out_ports + b.out_ports
    if a.is_isometric and b.is_isometric:
        k = sp.kron(a.isometry, b.isometry, format="coo")
        # rows of the kron are (out_a, env_a, out_b, env_b); reorder to (out_a, out_b, env_a, env_b)
        dims = [a.out_dim, a.env_dim, b.out_dim, b.env_dim]
        oa, ea, ob, eb = _digits(k.row, dims)
        rows = _combine([oa, ob, ea, eb], [a.out_dim, b.out_dim, a.env_dim, b.env_dim], like=k.row)
        iso = sp.csr_matrix((k.data, (rows, k.col)), shape=k.shape)
        return CausalBox(ins, outs, isometry=iso, env_dim=a.env_dim * b.env_dim)
    ja, jb = a.choi, b.choi
    joint = np.kron(ja.entries, jb.entries)
    space = ja.row_space.concat(jb.row_space)
    m = ComplexMatrix(space, space, joint)
    return CausalBox(ins, outs, choi=m)


def restrict_truncation(cb: CausalBox, n: int) -> CausalBox:
    """Keep only the sectors with at most ``n`` messages on every port (a prefix of each port basis)."""
    if any(n > p.truncation for p in cb.in_ports + cb.out_ports):
        raise ValueError("the new truncation must not exceed the current one")
    ins = [p.with_truncation(n) for p in cb.in_ports]
    outs = [p.with_truncation(n) for p in cb.out_ports]
    keep = [np.arange(p.dim) for p in ins + outs]
    full_dims = cb.in_dims + cb.out_dims
    idx = np.zeros(1, dtype=np.int64)
    for k, d in zip(keep, full_dims):
        idx = (idx[:, None] * d + k[None, :]).reshape(-1)
    sub = cb.choi.entries[np.ix_(idx, idx)]
    space = SpaceSpec(tuple((p.label, p.dim) for p in ins + outs))
    return CausalBox(ins, outs, choi=ComplexMatrix(space, space, sub))


def comp_link_deviation(m_a: ComplexMatrix, m_b: ComplexMatrix) -> float:
    """Max difference between looping the shared system of ``m_a (x) m_b`` and the link product."""
    from .linalg import link_matrices

    shared = [lab for lab in m_a.row_space.labels if lab in m_b.row_space.labels]
    renamed = {lab: f"{lab}~out" for lab in shared}
    a = m_a.relabel(renamed)
    space = a.row_space.concat(m_b.row_space)
    joint = ComplexMatrix(space, space, np.kron(a.entries, m_b.entries))
    for lab in shared:
        joint = _loop_matrix(joint, renamed[lab], lab)
    direct = link_matrices(m_a, m_b)
    return direct.max_abs_diff(joint.permute(direct.row_space.labels))


def verify_comp_is_link(m_a: ComplexMatrix, m_b: ComplexMatrix, tol: float = 1e-11) -> bool:
    """Loop composition over the shared systems equals the link product within ``tol``."""
    return comp_link_deviation(m_a, m_b) <= tol
