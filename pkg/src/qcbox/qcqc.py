"""Quantum circuits with quantum control of causal order.

A :class:`QcQc` stores, for every control transition ``(K, k) -> k'``, the
internal operator ``V^{->k'}_{K,k}`` mapping party ``k``'s output plus the
ancilla of that slot to party ``k'``'s input plus the next ancilla.  Parties are
numbered ``1..N``.  The control value before the first party uses ``k = 0``
(nothing has acted yet) and the transition into the global future uses
``k' = FUTURE``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DimMismatch, IncompleteQcQc
from .linalg import (
    DEFAULT_TOL,
    ComplexMatrix,
    ComplexVector,
    SpaceSpec,
    choi_matrix,
    choi_vector,
    is_isometry,
    link_chain,
    link_vectors,
    operator,
    partial_trace,
)

START = 0
FUTURE = "F"

Target = int | str
OpKey = tuple[frozenset, int, Target]


def label_in(k: int) -> str:
    return f"A{k}^I"


def label_out(k: int) -> str:
    return f"A{k}^O"


def label_anc(n: int) -> str:
    return f"alpha{n}"


PAST, FUT, ANC_F = "P", "F", "alphaF"


@dataclass(frozen=True, order=True)
class ControlState:
    """Control basis state ``|K, k>``: parties in ``acted`` are done, ``current`` acts next."""

    acted: frozenset
    current: Target

    def __post_init__(self):
        object.__setattr__(self, "acted", frozenset(self.acted))
        if self.current in self.acted:
            raise ValueError("the current party cannot already have acted")

    def sort_key(self):
        mask = sum(1 << (k - 1) for k in self.acted)
        cur = -1 if self.current == FUTURE else self.current
        return (mask, cur)


def control_states(n_parties: int, slot: int) -> list[ControlState]:
    """Control basis entering slot ``slot`` (1..N+1): ``|K_{slot-2}, k_{slot-1}>``.

    Slot 1 has the single start state; slot ``N+1`` has ``|N minus k, k>`` for each k.
    Ordered by (bitmask of K, current), the stable basis order used everywhere.
    """
    parties = range(1, n_parties + 1)
    if slot == 1:
        return [ControlState(frozenset(), START)]
    size = slot - 2
    states = [
        ControlState(frozenset(K), k)
        for K in itertools.combinations(parties, size)
        for k in parties
        if k not in K
    ]
    return sorted(states, key=ControlState.sort_key)


def _party_mod(k: int, shift: int, n: int) -> int:
    return (k - 1 + shift) % n + 1


@dataclass(frozen=True)
class QcQc:
    """Party dimensions, ancilla dimensions and the table of internal operators.

    ``dims[k-1] = (d_in, d_out)`` for party ``k``.  ``ancilla_dims`` lists
    ``alpha_1 .. alpha_N, alpha_F``.  ``ops`` maps ``(K, k, k')`` to a numpy
    array of shape ``(d_in(k') * alpha_{n+1}, d_out(k) * alpha_n)`` where the
    output party index is the major one (``A^I (x) alpha``).
    """

    n_parties: int
    dims: tuple[tuple[int, int], ...]
    past_dim: int
    future_dim: int
    ancilla_dims: tuple[int, ...]
    ops: Mapping[OpKey, np.ndarray] = field(repr=False)
    name: str = "qcqc"

    def __post_init__(self):
        n = int(self.n_parties)
        if n < 1:
            raise ValueError("a QC-QC needs at least one party")
        dims = tuple((int(a), int(b)) for a, b in self.dims)
        anc = tuple(int(a) for a in self.ancilla_dims)
        if len(dims) != n or len(anc) != n + 1:
            raise DimMismatch("dims needs N entries and ancilla_dims needs N+1 entries")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "ancilla_dims", anc)
        clean = {}
        for (K, k, kn), m in self.ops.items():
            K = frozenset(K)
            arr = np.array(m.entries if isinstance(m, ComplexMatrix) else m, dtype=complex)
            expect = (self.out_dim(len(K) + (k != START), kn), self.in_dim(len(K) + (k != START), k))
            if arr.shape != expect:
                raise DimMismatch(f"operator {(sorted(K), k, kn)} has shape {arr.shape}, expected {expect}")
            if k != START and (k in K or kn in K or kn == k):
                raise ValueError(f"inconsistent control transition {(sorted(K), k, kn)}")
            arr.flags.writeable = False
            clean[(K, k, kn)] = arr
        object.__setattr__(self, "ops", clean)

    # dimension helpers ----------------------------------------------------

    def alpha(self, n: int) -> int:
        """Ancilla dimension after slot ``n`` (``alpha_0 = 1``, ``alpha_{N+1} = alpha_F``)."""
        return 1 if n == 0 else self.ancilla_dims[n - 1]

    def in_dim(self, n: int, k: int) -> int:
        """Input dimension of an operator leaving party ``k`` after ``n`` parties were reached."""
        return self.past_dim if k == START else self.dims[k - 1][1] * self.alpha(n)

    def out_dim(self, n: int, kn: Target) -> int:
        if kn == FUTURE:
            return self.future_dim * self.ancilla_dims[-1]
        return self.dims[kn - 1][0] * self.alpha(n + 1)

    def op(self, K: Iterable[int], k: int, kn: Target) -> np.ndarray | None:
        return self.ops.get((frozenset(K), k, kn))

    def op_matrix(self, K: Iterable[int], k: int, kn: Target) -> ComplexMatrix | None:
        """The operator as a labeled :class:`ComplexMatrix`."""
        K = frozenset(K)
        arr = self.op(K, k, kn)
        if arr is None:
            return None
        n = len(K) + (k != START)
        ins = [(PAST, self.past_dim)] if k == START else [(label_out(k), self.dims[k - 1][1]), (label_anc(n), self.alpha(n))]
        if kn == FUTURE:
            outs = [(FUT, self.future_dim), (ANC_F, self.ancilla_dims[-1])]
        else:
            outs = [(label_in(kn), self.dims[kn - 1][0]), (label_anc(n + 1), self.alpha(n + 1))]
        return operator(outs, ins, arr)

    def transitions(self, slot: int) -> list[tuple[ControlState, Target]]:
        """All ``(control, next party)`` pairs of slot ``slot`` (1..N+1)."""
        out = []
        for c in control_states(self.n_parties, slot):
            done = c.acted | ({c.current} if c.current != START else set())
            nxt = [k for k in range(1, self.n_parties + 1) if k not in done] or [FUTURE]
            out.extend((c, kn) for kn in nxt)
        return out


# --------------------------------------------------------------------------
# assembled slot maps


@dataclass(frozen=True)
class SlotBasis:
    """Direct-sum basis of one side of an assembled slot map: ``(control, party index, ancilla)``."""

    entries: tuple[tuple[ControlState, int, int], ...]

    def index(self) -> dict:
        return {e: i for i, e in enumerate(self.entries)}


def slot_input_basis(q: QcQc, slot: int) -> SlotBasis:
    n = slot - 1
    out = []
    for c in control_states(q.n_parties, slot):
        d = q.past_dim if c.current == START else q.dims[c.current - 1][1]
        out.extend((c, x, a) for x in range(d) for a in range(q.alpha(n)))
    return SlotBasis(tuple(out))


def slot_output_basis(q: QcQc, slot: int) -> SlotBasis:
    if slot == q.n_parties + 1:
        fin = ControlState(frozenset(range(1, q.n_parties + 1)), FUTURE)
        return SlotBasis(tuple((fin, x, a) for x in range(q.future_dim) for a in range(q.ancilla_dims[-1])))
    out = []
    for c in control_states(q.n_parties, slot + 1):
        out.extend((c, x, a) for x in range(q.dims[c.current - 1][0]) for a in range(q.alpha(slot)))
    return SlotBasis(tuple(out))


def assemble_slot_isometry(q: QcQc, n: int, tol: float = DEFAULT_TOL, strict: bool = True) -> ComplexMatrix:
    """``V_n = sum V^{->k'}_{K,k} (x) |K u k, k'><K, k|`` on the direct-sum slot spaces.

    Missing table entries count as zero maps; if the assembled map is then not an
    isometry, :class:`IncompleteQcQc` is raised (unless ``strict`` is false).
    When every party has the same dimensions the row and column spaces carry
    the tensor labels ``(C, A, alpha)``; otherwise a single direct-sum label.
    """
    if not 1 <= n <= q.n_parties + 1:
        raise ValueError(f"slot index must be in 1..{q.n_parties + 1}")
    ib, ob = slot_input_basis(q, n), slot_output_basis(q, n)
    iidx, oidx = ib.index(), ob.index()
    mat = np.zeros((len(ob.entries), len(ib.entries)), dtype=complex)
    missing = []
    for c, kn in q.transitions(n):
        K = c.acted
        k = c.current
        arr = q.op(K, k, kn)
        if arr is None:
            missing.append((sorted(K), k, kn))
            continue
        nxt = ControlState(K | ({k} if k != START else set()), kn)
        a_in, a_out = q.alpha(n - 1), q.alpha(n) if kn != FUTURE else q.ancilla_dims[-1]
        d_in = q.past_dim if k == START else q.dims[k - 1][1]
        d_out = q.future_dim if kn == FUTURE else q.dims[kn - 1][0]
        cols = [iidx[(c, x, a)] for x in range(d_in) for a in range(a_in)]
        rows = [oidx[(nxt, y, b)] for y in range(d_out) for b in range(a_out)]
        mat[np.ix_(rows, cols)] += arr
    ok, dev = is_isometry(mat, tol)
    if missing and not ok and strict:
        raise IncompleteQcQc(f"slot {n} is not an isometry (deviation {dev:.3g}); missing operators {missing}")
    return ComplexMatrix(_slot_space(q, ob, n, "out"), _slot_space(q, ib, n, "in"), mat)


def _slot_space(q: QcQc, basis: SlotBasis, n: int, side: str) -> SpaceSpec:
    controls = list(dict.fromkeys(e[0] for e in basis.entries))
    per = {c: sum(1 for e in basis.entries if e[0] == c) for c in controls}
    if len(set(per.values())) == 1 and len(basis.entries) == len(controls) * next(iter(per.values())):
        first = controls[0]
        d_party = sum(1 for e in basis.entries if e[0] == first and e[2] == 0)
        d_anc = per[first] // d_party
        tag = f"{n}" if side == "in" else f"{n + 1}"
        return SpaceSpec.of((f"C{tag}", len(controls)), (f"A{tag}", d_party), (f"anc{tag}", d_anc))
    return SpaceSpec.of((f"slot{n}.{side}", len(basis.entries)),)


@dataclass
class ValidationReport:
    slot_deviations: list[float]
    krausiso_cross: float
    krausiso_diag: float
    tol: float

    @property
    def ok(self) -> bool:
        return all(d <= self.tol for d in self.slot_deviations) and max(self.krausiso_cross, self.krausiso_diag) <= self.tol

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "tol": self.tol,
            "slot_deviations": self.slot_deviations,
            "krausiso_cross": self.krausiso_cross,
            "krausiso_diag": self.krausiso_diag,
        }


def krausiso_deviations(q: QcQc, n: int) -> tuple[float, float]:
    """Check ``sum_{k'} V^dagger_{K,k} V_{L,l} = delta 1`` over pairs with ``K u k = L u l``.

    Returns ``(max cross-term entry, max deviation of diagonal terms from 1)``.
    Computed directly from the operator table, independently of the assembled map.
    """
    cross = diag = 0.0
    groups: dict[frozenset, list[ControlState]] = {}
    for c in control_states(q.n_parties, n):
        done = c.acted | ({c.current} if c.current != START else set())
        groups.setdefault(frozenset(done), []).append(c)
    for cs in groups.values():
        for c1, c2 in itertools.product(cs, repeat=2):
            done = c1.acted | ({c1.current} if c1.current != START else set())
            nxt = [k for k in range(1, q.n_parties + 1) if k not in done] or [FUTURE]
            total = None
            for kn in nxt:
                v1, v2 = q.op(c1.acted, c1.current, kn), q.op(c2.acted, c2.current, kn)
                if v1 is None or v2 is None:
                    continue
                term = v1.conj().T @ v2
                total = term if total is None else total + term
            if c1 == c2:
                size = q.in_dim(n - 1, c1.current)
                total = np.zeros((size, size)) if total is None else total
                diag = max(diag, float(np.abs(total - np.eye(size)).max(initial=0.0)))
            elif total is not None:
                cross = max(cross, float(np.abs(total).max(initial=0.0)))
    return cross, diag


def validate(q: QcQc, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Per-slot isometry deviations plus the block-wise isometry condition; never raises."""
    devs = []
    cross = diag = 0.0
    for n in range(1, q.n_parties + 2):
        v = assemble_slot_isometry(q, n, tol, strict=False)
        devs.append(is_isometry(v, tol)[1])
        c, d = krausiso_deviations(q, n)
        cross, diag = max(cross, c), max(diag, d)
    return ValidationReport(devs, cross, diag, tol)


# --------------------------------------------------------------------------
# process vector and Born rule


@dataclass(frozen=True)
class ProcessVector:
    """``|w>`` on ``P, A1^I, A1^O, ..., AN^I, AN^O, F, alphaF`` (in that factor order)."""

    vec: ComplexVector
    n_parties: int

    def process_matrix(self, keep_ancilla: bool = False) -> ComplexMatrix:
        m = self.vec.outer()
        return m if keep_ancilla else partial_trace(m, [ANC_F])


def canonical_labels(n_parties: int) -> list[str]:
    labels = [PAST]
    for k in range(1, n_parties + 1):
        labels += [label_in(k), label_out(k)]
    return labels + [FUT, ANC_F]


def orders(n_parties: int) -> list[tuple[int, ...]]:
    return list(itertools.permutations(range(1, n_parties + 1)))


def order_chain(q: QcQc, order: Sequence[int]) -> list[ComplexMatrix] | None:
    """The operators met along one causal order, or ``None`` if one of them is absent."""
    chain = []
    K: frozenset = frozenset()
    prev = START
    for kn in list(order) + [FUTURE]:
        m = q.op_matrix(K, prev, kn)
        if m is None:
            return None
        chain.append(m)
        if prev != START:
            K = K | {prev}
        prev = kn
    return chain


def process_vector(q: QcQc, order_list: Sequence[Sequence[int]] | None = None) -> ProcessVector:
    """Sum over causal orders of the chained link products of Choi vectors."""
    labels = canonical_labels(q.n_parties)
    total = None
    for order in order_list or orders(q.n_parties):
        chain = order_chain(q, order)
        if chain is None:
            continue
        term = link_chain(*[choi_vector(m) for m in chain]).permute(labels)
        total = term.entries if total is None else total + term.entries
    space = SpaceSpec(tuple(
        (lab, d)
        for lab, d in zip(labels, [q.past_dim] + [x for d in q.dims for x in d] + [q.future_dim, q.ancilla_dims[-1]])
    ))
    if total is None:
        total = np.zeros(space.dim, dtype=complex)
    return ProcessVector(ComplexVector(space, total), q.n_parties)


@dataclass(frozen=True)
class LocalOperation:
    """A single Kraus operator ``A_k: A_k^I -> A_k^O`` of party ``k``."""

    party: int
    kraus: np.ndarray

    def __post_init__(self):
        arr = np.array(self.kraus.entries if isinstance(self.kraus, ComplexMatrix) else self.kraus, dtype=complex)
        if arr.ndim != 2:
            raise DimMismatch("a Kraus operator must be a matrix")
        arr.flags.writeable = False
        object.__setattr__(self, "kraus", arr)

    def matrix(self) -> ComplexMatrix:
        d_out, d_in = self.kraus.shape
        return operator([(label_out(self.party), d_out)], [(label_in(self.party), d_in)], self.kraus)


def _check_locals(q_dims: Sequence[tuple[int, int]], local_ops: Sequence[LocalOperation]) -> dict[int, LocalOperation]:
    by_party = {op.party: op for op in local_ops}
    n = len(q_dims)
    if sorted(by_party) != list(range(1, n + 1)) or len(local_ops) != n:
        raise DimMismatch(f"need exactly one local operation per party 1..{n}")
    for k, op in by_party.items():
        d_in, d_out = q_dims[k - 1]
        if op.kraus.shape != (d_out, d_in):
            raise DimMismatch(f"party {k} expects a {d_out}x{d_in} Kraus operator, got {op.kraus.shape}")
    return by_party


def _as_process(q_or_w) -> ProcessVector:
    return q_or_w if isinstance(q_or_w, ProcessVector) else process_vector(q_or_w)


def _dims_of(w: ProcessVector) -> list[tuple[int, int]]:
    sp = w.vec.space
    return [(sp.dim_of(label_in(k)), sp.dim_of(label_out(k))) for k in range(1, w.n_parties + 1)]


def future_vector(q_or_w, local_ops: Sequence[LocalOperation], past_state) -> ComplexVector:
    """Pure Born rule: ``(|A_1>> (x) ... (x) |psi>^P) * |w>`` on ``F (x) alphaF``."""
    w = _as_process(q_or_w)
    by_party = _check_locals(_dims_of(w), local_ops)
    psi = np.asarray(past_state.entries if isinstance(past_state, ComplexVector) else past_state, dtype=complex)
    if psi.shape != (w.vec.space.dim_of(PAST),):
        raise DimMismatch(f"past state has shape {psi.shape}")
    parts = [ComplexVector(SpaceSpec.of((PAST, psi.size)), psi)]
    parts += [choi_vector(by_party[k].matrix()) for k in sorted(by_party)]
    operand = parts[0]
    for p in parts[1:]:
        operand = ComplexVector(operand.space.concat(p.space), np.kron(operand.entries, p.entries))
    return link_vectors(operand, w.vec).permute([FUT, ANC_F])


def born(q_or_w, local_ops: Sequence[LocalOperation], past_state, keep_future: bool = False,
         keep_ancilla: bool = False):
    """Generalized Born rule ``Tr_F[(rho^P (x) M_A1 (x) ... (x) M_AN) * W]``.

    ``past_state`` is a state vector or a density matrix on P.  With
    ``keep_future`` the unnormalized future state on F (plus alphaF if
    ``keep_ancilla``) is returned instead of the probability.
    """
    w = _as_process(q_or_w)
    by_party = _check_locals(_dims_of(w), local_ops)
    d_p = w.vec.space.dim_of(PAST)
    rho = np.asarray(past_state.entries if isinstance(past_state, (ComplexVector, ComplexMatrix)) else past_state, dtype=complex)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())
    if rho.shape != (d_p, d_p):
        raise DimMismatch(f"past state has shape {rho.shape}, P has dimension {d_p}")
    sp_p = SpaceSpec.of((PAST, d_p))
    operands = [ComplexMatrix(sp_p, sp_p, rho)]
    operands += [choi_matrix([by_party[k].matrix()]) for k in sorted(by_party)]
    operands.append(w.process_matrix(keep_ancilla=keep_ancilla))
    out = link_chain(*operands)
    keep = [FUT, ANC_F] if keep_ancilla else [FUT]
    out = out.permute(keep)
    if keep_future:
        return out
    return float(np.trace(out.entries).real)


# --------------------------------------------------------------------------
# built-in processes


def grenoble(psi: Sequence[complex] = (1.0, 0.0)) -> QcQc:
    """Three-party process with dynamical order; trivial P and F.

    The first party is chosen uniformly; a party receiving ``|0>`` (``|1>``)
    passes to the next party up (two up) modulo 3; the last party records in
    ``alpha_3`` whether its input agreed with the routing bit, and the future
    ancilla keeps the last party's output, ``alpha_3`` and the last party's label.
    """
    psi = np.asarray(psi, dtype=complex).reshape(2, 1)
    ops: dict[OpKey, np.ndarray] = {}
    for k1 in (1, 2, 3):
        ops[(frozenset(), START, k1)] = psi / np.sqrt(3)
        for shift, bit in ((1, 0), (2, 1)):
            k2 = _party_mod(k1, shift, 3)
            proj = np.zeros((2, 2))
            proj[bit, bit] = 1
            ops[(frozenset(), k1, k2)] = proj
            k3 = 6 - k1 - k2
            v = np.zeros((4, 2))
            for a in (0, 1):
                anc = a if shift == 1 else 1 - a
                v[a * 2 + anc, a] = 1
            ops[(frozenset({k1}), k2, k3)] = v
    for k3 in (1, 2, 3):
        fin = np.zeros((12, 4))
        for j in range(4):
            fin[j * 3 + (k3 - 1), j] = 1
        ops[(frozenset({1, 2, 3}) - {k3}, k3, FUTURE)] = fin
    return QcQc(3, ((2, 2),) * 3, 1, 1, (1, 1, 2, 12), ops, name="grenoble")


def quantum_switch() -> QcQc:
    """Two-party switch; P = control (x) target, F = target, alphaF = control."""
    eye = np.eye(2)
    sel = [np.kron(np.eye(2)[c].reshape(1, 2), eye) for c in (0, 1)]
    ops = {
        (frozenset(), START, 1): sel[0],
        (frozenset(), START, 2): sel[1],
        (frozenset(), 1, 2): eye,
        (frozenset(), 2, 1): eye,
        (frozenset({1}), 2, FUTURE): np.kron(eye, np.array([[1], [0]])),
        (frozenset({2}), 1, FUTURE): np.kron(eye, np.array([[0], [1]])),
    }
    return QcQc(2, ((2, 2), (2, 2)), 4, 2, (1, 1, 2), ops, name="quantum_switch")


def fixed_order_chain(channels: Sequence[np.ndarray | ComplexMatrix], name: str = "fixed_order") -> QcQc:
    """Parties ``1 < 2 < ... < N`` connected by the given isometric channels.

    ``channels[0]`` maps P to party 1's input, ``channels[n]`` maps party n's
    output to party n+1's input, and ``channels[N]`` maps party N's output to F.

    Control values other than the fixed order never occur, but the slot maps
    must still be isometries on them.  Such a branch hands the vacuum-like
    basis state ``|0>`` to the lowest party not yet acted and stores
    ``(position of k within K u k, input, old ancilla)`` in the ancilla, which
    keeps all branches with equal ``K u k`` orthogonal.
    """
    mats = [np.asarray(c.entries if isinstance(c, ComplexMatrix) else c, dtype=complex) for c in channels]
    if len(mats) < 2:
        raise ValueError("a fixed-order chain needs at least one party (two channels)")
    n = len(mats) - 1
    dims = tuple((mats[k - 1].shape[0], mats[k].shape[1]) for k in range(1, n + 1))
    if not is_isometry(mats[0])[0]:
        raise DimMismatch("the channel from P must be an isometry")
    d_max = max(d_out for _, d_out in dims)
    # alphas[m] is the ancilla after slot m; slot m stores one of m - 1 positions
    alphas = [1, 1]
    for m in range(2, n + 2):
        alphas.append((m - 1) * d_max * alphas[-1])
    ops: dict[OpKey, np.ndarray] = {(frozenset(), START, 1): mats[0]}
    parties = range(1, n + 1)
    for slot in range(2, n + 2):
        a_in, a_out = alphas[slot - 1], alphas[slot]
        for K in itertools.combinations(parties, slot - 2):
            for k in parties:
                if k in K:
                    continue
                done = sorted(set(K) | {k})
                rest = [p for p in parties if p not in done]
                kn = rest[0] if rest else FUTURE
                d_in_k = dims[k - 1][1]
                d_next = mats[-1].shape[0] if kn == FUTURE else dims[kn - 1][0]
                op = np.zeros((d_next * a_out, d_in_k * a_in), dtype=complex)
                if set(K) == set(range(1, slot - 1)) and k == slot - 1:
                    ch = mats[k]
                    if ch.shape[1] != d_in_k:
                        raise DimMismatch(f"channel {k} does not accept party {k}'s output")
                    # the real branch occupies the block of position len(done) - 1, input 0
                    off = (len(done) - 1) * d_max * a_in
                    for a in range(a_in):
                        emb = np.zeros((a_out, 1))
                        emb[off + a] = 1
                        op += np.kron(ch, emb) @ np.kron(np.eye(d_in_k), np.eye(a_in)[a:a + 1])
                    ops[(frozenset(K), k, kn)] = op
                    continue
                pos = done.index(k)
                for x in range(d_in_k):
                    for a in range(a_in):
                        b = (pos * d_max + x) * a_in + a
                        op[0 * a_out + b, x * a_in + a] = 1
                ops[(frozenset(K), k, kn)] = op
    for k in range(1, n + 1):
        if not is_isometry(mats[k])[0]:
            raise DimMismatch(f"channel {k} must be an isometry")
    return QcQc(n, dims, mats[0].shape[1], mats[-1].shape[0], tuple(alphas[1:]), ops, name=name)
