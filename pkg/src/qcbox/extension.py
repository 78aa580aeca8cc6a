"""Extensions of QC-QCs to causal boxes, extended local operations and the equivalence check.

Timestamps follow one fixed pattern: the past message enters at ``t = 1``, the
``n``-th party receives at ``t = 2n`` and answers at ``t = 2n + 1``, and the
future leaves at ``t = 2N + 2``.  All parties' wires that share a timestamp form
one port.

Three constructions are provided:

* :func:`isometric_extension` keeps control and ancilla in the box memory and
  handles every basis state outside the single-message, matching-control
  subspace with a pluggable basis-to-basis policy;
* :func:`photonic_extension` lets control and ancilla travel inside the message
  and applies the slot maps to every message independently (second
  quantization), so no memory is needed;
* :func:`grenoble_gate_extension` builds the three-party dynamical-order
  process from copy, controlled-not and polarizing-beam-splitter gates.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Hashable, Sequence

import numpy as np
import scipy.sparse as sp

from .causalbox import CausalBox, Port, SequenceRep, Slice, from_sequence, port
from .errors import DimMismatch, IncompleteKraus, InvalidPolicy
from .fock import FockSpace, second_quantize
from .linalg import DEFAULT_TOL, ComplexVector, SpaceSpec, choi_vector, is_isometry, link_vectors, operator
from .qcqc import (
    FUTURE,
    START,
    ControlState,
    LocalOperation,
    QcQc,
    control_states,
    future_vector,
    grenoble,
    label_in,
    label_out,
)

PAST_WIRE, FUTURE_WIRE = "P", "F"


def time_in(n: int) -> int:
    """Receiving time of the ``n``-th party (``n = 1..N``)."""
    return 2 * n


def time_out(n: int) -> int:
    return 2 * n + 1


# --------------------------------------------------------------------------
# extended local operations


@dataclass(frozen=True)
class ExtendedLocalOp:
    """A party's operation applied at every receiving time of its wire.

    ``form`` is ``"sum"`` (one message at any time, vacuum kept) or
    ``"product"`` (independent application at every time slot, at most one
    message per slot).  Both agree on the zero- and one-message sectors.
    """

    base: LocalOperation
    in_times: tuple[int, ...]
    form: str = "sum"

    def __post_init__(self):
        if self.form not in ("sum", "product"):
            raise ValueError("form must be 'sum' or 'product'")
        object.__setattr__(self, "in_times", tuple(sorted(set(int(t) for t in self.in_times))))

    def spaces(self, truncation: int = 1) -> tuple[FockSpace, FockSpace]:
        d_out, d_in = self.base.kraus.shape
        k = self.base.party
        ins = sorted((label_in(k), t, x) for t in self.in_times for x in range(d_in))
        outs = sorted((label_out(k), t + 1, y) for t in self.in_times for y in range(d_out))
        return FockSpace(ins, truncation), FockSpace(outs, truncation)

    def matrix(self, truncation: int = 1) -> sp.csr_matrix:
        """The operator on the truncated Fock spaces of the input and output wires."""
        fin, fout = self.spaces(truncation)
        a = self.base.kraus
        k = self.base.party
        rows, cols, vals = [], [], []
        for col in range(fin.dim):
            occ = [fin.modes[i] for i in fin.occupied(col)]
            times = [t for _, t, _ in occ]
            if len(set(times)) != len(times):
                continue
            if self.form == "sum" and len(occ) > 1:
                continue
            choices = [[((label_out(k), t + 1, y), a[y, x]) for y in range(a.shape[0])] for _, t, x in occ]
            for combo in itertools.product(*choices):
                amp = math.prod(v for _, v in combo) if combo else 1.0
                if amp == 0:
                    continue
                rows.append(fout.index(fout.mode_index(m) for m, _ in combo))
                cols.append(col)
                vals.append(amp)
        return sp.csr_matrix((vals, (rows, cols)), shape=(fout.dim, fin.dim), dtype=complex)


def extend_local(a: LocalOperation, in_times: Sequence[int], form: str = "sum") -> ExtendedLocalOp:
    return ExtendedLocalOp(a, tuple(in_times), form)


def complete_kraus(base: Sequence[LocalOperation], in_times: Sequence[int], truncation: int = 2,
                   tol: float = DEFAULT_TOL) -> list[sp.csr_matrix]:
    """Extended Kraus set on the truncated Fock space, completed to a full instrument.

    Every base operator acts on the one-message sector; the set is completed
    by the vacuum-to-vacuum map and the time-shifted projector onto two or
    more messages.
    """
    if not base:
        raise IncompleteKraus("empty Kraus set")
    total = sum(op.kraus.conj().T @ op.kraus for op in base)
    if np.abs(total - np.eye(total.shape[0])).max() > tol:
        raise IncompleteKraus("the base Kraus operators do not sum to the identity")
    ext = [extend_local(op, in_times, "sum") for op in base]
    fin, fout = ext[0].spaces(truncation)
    keep = sp.diags((fin.message_counts == 1).astype(float))
    out = [e.matrix(truncation) @ keep for e in ext]
    d = base[0].kraus.shape[1]
    if fin.dim != fout.dim or base[0].kraus.shape[0] != d:
        raise DimMismatch("completion needs equal input and output dimensions")
    shift = second_quantize(sp.identity(len(fin.modes)), fin, fout)
    vac = sp.csr_matrix(([1.0], ([0], [0])), shape=(fout.dim, fin.dim), dtype=complex)
    multi = shift @ sp.diags((fin.message_counts > 1).astype(float))
    return out + [vac, sp.csr_matrix(multi)]


# --------------------------------------------------------------------------
# extension layout


@dataclass
class Extension:
    """A sequence representation plus the layout needed to plug in local operations.

    ``extra[(k, n)]`` is the number of extra modes carried with party ``k``'s
    message at its ``n``-th possible slot (the local acts as ``A_k (x) 1``
    with the message index major).  ``readout`` tells where the future
    ancilla lives: ``"env"`` (leading block of the environment) or
    ``"modes"`` (inside the F message, future index major).
    """

    variant: str
    qcqc: QcQc
    sequence: SequenceRep
    truncation: int
    extra: dict[tuple[int, int], int]
    readout: str
    info: dict = field(default_factory=dict)

    @property
    def n_parties(self) -> int:
        return self.qcqc.n_parties

    @cached_property
    def box(self) -> CausalBox:
        return from_sequence(self.sequence)

    def local_map(self, n: int, local_ops: Sequence[LocalOperation]) -> sp.csr_matrix:
        """Second-quantized ``(+)_k A_k (x) 1_extra`` from the slot-``n`` input port to the output port."""
        out_port = self.sequence.slices[n - 1].out_ports[0]
        in_port = self.sequence.slices[n].in_ports[0]
        single = np.zeros((len(in_port.modes), len(out_port.modes)), dtype=complex)
        for op in local_ops:
            k = op.party
            e = self.extra[(k, n)]
            d_out, d_in = op.kraus.shape
            for x in range(d_in):
                for y in range(d_out):
                    if op.kraus[y, x] == 0:
                        continue
                    for j in range(e):
                        r = in_port.mode(label_out(k), y * e + j)
                        c = out_port.mode(label_in(k), x * e + j)
                        single[r, c] += op.kraus[y, x]
        return second_quantize(single, out_port.space, in_port.space)

    def past_vector(self, psi: np.ndarray) -> np.ndarray:
        p = self.sequence.slices[0].in_ports[0]
        v = np.zeros(p.dim, dtype=complex)
        for i, amp in enumerate(np.asarray(psi, dtype=complex)):
            v[p.space.index([p.mode(PAST_WIRE, i)])] = amp
        return v

    def future_embedding(self, fut: np.ndarray) -> np.ndarray:
        """Place a vector on ``F (x) alphaF`` in the box's final ``(F port, env)`` space."""
        last = self.sequence.slices[-1]
        fport, env = last.out_ports[0], last.mem_out
        d_f, a_f = self.qcqc.future_dim, self.qcqc.ancilla_dims[-1]
        fut = np.asarray(fut, dtype=complex).reshape(d_f, a_f)
        out = np.zeros(fport.dim * env, dtype=complex)
        for f in range(d_f):
            for b in range(a_f):
                if self.readout == "env":
                    idx = fport.space.index([fport.mode(FUTURE_WIRE, f)]) * env + b
                else:
                    idx = fport.space.index([fport.mode(FUTURE_WIRE, f * a_f + b)]) * env
                out[idx] += fut[f, b]
        return out


def _party_of(wire_label: str) -> int:
    return int(wire_label[1:wire_label.index("^")])


def _in_port(q: QcQc, n: int, dims: Sequence[int], truncation: int) -> Port:
    return port([(label_in(k), dims[k - 1]) for k in range(1, q.n_parties + 1)], time_in(n), truncation)


def _out_port(q: QcQc, n: int, dims: Sequence[int], truncation: int) -> Port:
    return port([(label_out(k), dims[k - 1]) for k in range(1, q.n_parties + 1)], time_out(n), truncation)


# --------------------------------------------------------------------------
# isometric extension

Policy = Callable[[int, tuple, ControlState, int, int], tuple]


def record_min_policy(slot: int, messages: tuple, control: ControlState, ancilla: int, n_parties: int):
    """Forward every message to the same party's input, add ``min(N minus (K u k))`` to the control.

    ``messages`` is a tuple of ``(party, basis index)``; returns
    ``(messages out, control out, junk key)``.
    """
    done = control.acted | {control.current}
    m = min(k for k in range(1, n_parties + 1) if k not in done)
    return messages, ControlState(control.acted | {m}, control.current), (ancilla, m)


def absorb_policy(slot: int, messages: tuple, control: ControlState, ancilla: int, n_parties: int):
    """Collect all messages in basis state 0 of party 1 and remember the full input in the ancilla."""
    done = control.acted | {control.current}
    m = min(k for k in range(1, n_parties + 1) if k not in done)
    return ((1, 0),) * len(messages), ControlState(control.acted | {m}, control.current), (messages, control, ancilla)


POLICIES = {"record-min": record_min_policy, "absorb": absorb_policy}


def _resolve_policy(policy) -> Policy:
    if callable(policy):
        return policy
    try:
        return POLICIES[policy]
    except KeyError:
        raise InvalidPolicy(f"unknown policy {policy!r}; choose one of {sorted(POLICIES)} or pass a callable") from None


def isometric_extension(q: QcQc, policy: str | Policy = "record-min", truncation: int = 2,
                        tol: float = DEFAULT_TOL) -> Extension:
    """Direct-sum extension with control and ancilla stored in the box memory.

    On a single message carried by the wire the control points to, with the
    ancilla in its original summand, slot ``n+1`` applies ``V_{n+1}``.
    Every other basis state is mapped basis-to-basis by ``policy`` (middle
    slots) or absorbed (first and last slot); the ancilla grows by one junk
    summand per slot recording what the policy needs to stay injective.
    """
    rule = _resolve_policy(policy)
    n_par = q.n_parties
    d_in = [q.dims[k][0] for k in range(n_par)]
    d_out = [q.dims[k][1] for k in range(n_par)]
    past = port([(PAST_WIRE, q.past_dim)], 1, truncation)
    fut = port([(FUTURE_WIRE, q.future_dim)], time_in(n_par + 1), truncation)
    in_ports = [past] + [_out_port(q, n, d_out, truncation) for n in range(1, n_par + 1)]
    out_ports = [_in_port(q, n, d_in, truncation) for n in range(1, n_par + 1)] + [fut]

    slices = []
    abar = [1]  # total ancilla dimension after each slot, index 0 = before the first slot
    for slot in range(1, n_par + 2):
        ip, op = in_ports[slot - 1], out_ports[slot - 1]
        last = slot == n_par + 1
        c_in = control_states(n_par, slot)
        c_out = [None] if last else control_states(n_par, slot + 1)
        c_out_idx = {c: i for i, c in enumerate(c_out)}
        a_in_bar = abar[-1]
        a_in = q.alpha(slot - 1)
        a_out = q.ancilla_dims[-1] if last else q.alpha(slot)
        corr: list[tuple[int, int, int, int, complex]] = []  # (col, out occ, control, anc, amp)
        mis: list[tuple[int, int, int, Hashable]] = []  # (col, out occ, control, key)
        for occ_idx in range(ip.dim):
            occ = [ip.modes[i] for i in ip.space.occupied(occ_idx)]
            for ci, c in enumerate(c_in):
                for a in range(a_in_bar):
                    col = (occ_idx * len(c_in) + ci) * a_in_bar + a
                    if len(occ) == 1 and a < a_in and _is_corr(occ[0], c):
                        x = occ[0][2]
                        for kn in _next_parties(c, n_par):
                            v = q.op(c.acted, c.current, kn)
                            if v is None:
                                continue
                            src = v[:, x * a_in + a]
                            nxt = None if last else ControlState(_done(c), kn)
                            for r in np.flatnonzero(src):
                                y, b = divmod(int(r), a_out)
                                wire = FUTURE_WIRE if kn == FUTURE else label_in(kn)
                                out_occ = op.space.index([op.mode(wire, y)])
                                corr.append((col, out_occ, c_out_idx[nxt], b, src[r]))
                        continue
                    if slot == 1:
                        out_msgs = [op.mode(label_in(1), 0)] * len(occ)
                        nxt, key = ControlState(frozenset(), 1), ("in", occ_idx)
                    elif last:
                        out_msgs = [op.mode(FUTURE_WIRE, 0)] * len(occ)
                        nxt, key = None, ("in", occ_idx, ci, a)
                    else:
                        msgs = tuple((_party_of(w), x) for w, _, x in occ)
                        out, nxt, key = rule(slot, msgs, c, a, n_par)
                        if nxt not in c_out_idx:
                            raise InvalidPolicy(f"policy returned an invalid control {nxt}")
                        out_msgs = []
                        for k, y in out:
                            if y >= d_in[k - 1]:
                                raise InvalidPolicy(
                                    f"party {k} receives {d_in[k - 1]}-dim messages but must forward index {y}; "
                                    "use the 'absorb' policy or pad the dimensions")
                            out_msgs.append(op.mode(label_in(k), y))
                    mis.append((col, op.space.index(out_msgs), c_out_idx[nxt], key))
        keys: dict = {}
        for *_, key in mis:
            keys.setdefault(key, len(keys))
        a_out_bar = a_out + len(keys)
        images = {(o, c, a_out + keys[key]) for _, o, c, key in mis}
        if len(images) != len(mis):
            raise InvalidPolicy(f"the policy is not injective at slot {slot}")
        mem_out = len(c_out) * a_out_bar
        rows, cols, vals = [], [], []
        for col, o, c, b, amp in corr:
            rows.append((o * len(c_out) + c) * a_out_bar + b)
            cols.append(col)
            vals.append(amp)
        for col, o, c, key in mis:
            rows.append((o * len(c_out) + c) * a_out_bar + a_out + keys[key])
            cols.append(col)
            vals.append(1.0)
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(op.dim * mem_out, ip.dim * len(c_in) * a_in_bar), dtype=complex)
        ok, dev = is_isometry(mat, tol)
        if not ok:
            raise InvalidPolicy(f"slot {slot} map is not an isometry (deviation {dev:.3g})")
        slices.append(Slice((ip,), (op,), mat, mem_in=len(c_in) * a_in_bar if slot > 1 else 1, mem_out=mem_out))
        abar.append(a_out_bar)
    extra = {(k, n): 1 for k in range(1, n_par + 1) for n in range(1, n_par + 1)}
    name = policy if isinstance(policy, str) else getattr(policy, "__name__", "custom")
    return Extension("isometric", q, SequenceRep(tuple(slices)), truncation, extra, "env",
                     {"policy": name, "ancilla_dims": abar[1:]})


def _is_corr(mode, c: ControlState) -> bool:
    wire = mode[0]
    if c.current == START:
        return wire == PAST_WIRE
    return wire == label_out(c.current)


def _done(c: ControlState) -> frozenset:
    return c.acted | ({c.current} if c.current != START else set())


def _next_parties(c: ControlState, n_par: int) -> list:
    done = _done(c)
    return [k for k in range(1, n_par + 1) if k not in done] or [FUTURE]


# --------------------------------------------------------------------------
# photonic extension


def _subsets(n_par: int, k: int, size: int) -> list[frozenset]:
    subs = [frozenset(s) for s in itertools.combinations([j for j in range(1, n_par + 1) if j != k], size)]
    return sorted(subs, key=lambda s: sum(1 << (j - 1) for j in s))


def photonic_mode_index(q: QcQc, k: int, n: int, x: int, a: int, K: frozenset) -> int:
    """Mode of party ``k``'s wire at its ``n``-th possible slot carrying basis state ``x``, ancilla ``a``, history ``K``."""
    subs = _subsets(q.n_parties, k, n - 1)
    return (x * q.alpha(n) + a) * len(subs) + subs.index(frozenset(K))


def photonic_extension(q: QcQc, truncation: int = 2, tol: float = DEFAULT_TOL) -> Extension:
    """Control and ancilla ride along with the message; every slot is a second-quantized mode map.

    Party ``k``'s wire at its ``n``-th possible slot has modes
    ``(basis index, ancilla alpha_n, set K of earlier parties)``.
    """
    n_par = q.n_parties
    subsets = {(k, n): _subsets(n_par, k, n - 1) for k in range(1, n_par + 1) for n in range(1, n_par + 1)}
    extra = {(k, n): q.alpha(n) * len(subsets[(k, n)]) for (k, n) in subsets}

    def wire_dims(n: int, side: int) -> list[int]:
        return [q.dims[k - 1][side] * extra[(k, n)] for k in range(1, n_par + 1)]

    past = port([(PAST_WIRE, q.past_dim)], 1, truncation)
    fut = port([(FUTURE_WIRE, q.future_dim * q.ancilla_dims[-1])], time_in(n_par + 1), truncation)
    ins = [past] + [_out_port(q, n, wire_dims(n, 1), truncation) for n in range(1, n_par + 1)]
    outs = [_in_port(q, n, wire_dims(n, 0), truncation) for n in range(1, n_par + 1)] + [fut]

    def mode_index(k: int, n: int, x: int, a: int, K: frozenset) -> int:
        return photonic_mode_index(q, k, n, x, a, K)

    slices = []
    for slot in range(1, n_par + 2):
        ip, op = ins[slot - 1], outs[slot - 1]
        single = np.zeros((len(op.modes), len(ip.modes)), dtype=complex)
        a_in = q.alpha(slot - 1)
        for c, kn in q.transitions(slot):
            v = q.op(c.acted, c.current, kn)
            if v is None:
                continue
            a_out = q.ancilla_dims[-1] if kn == FUTURE else q.alpha(slot)
            d_src = q.past_dim if c.current == START else q.dims[c.current - 1][1]
            for x in range(d_src):
                for a in range(a_in):
                    if c.current == START:
                        col = ip.mode(PAST_WIRE, x)
                    else:
                        col = ip.mode(label_out(c.current), mode_index(c.current, slot - 1, x, a, c.acted))
                    for r in np.flatnonzero(v[:, x * a_in + a]):
                        y, b = divmod(int(r), a_out)
                        if kn == FUTURE:
                            row = op.mode(FUTURE_WIRE, y * a_out + b)
                        else:
                            row = op.mode(label_in(kn), mode_index(kn, slot, y, b, _done(c)))
                        single[row, col] += v[r, x * a_in + a]
        ok, dev = is_isometry(single, tol)
        if not ok:
            raise InvalidPolicy(f"single-message map of slot {slot} is not an isometry (deviation {dev:.3g})")
        slices.append(Slice((ip,), (op,), second_quantize(single, ip.space, op.space)))
    return Extension("photonic", q, SequenceRep(tuple(slices)), truncation, extra, "modes")


# --------------------------------------------------------------------------
# gates


@dataclass(frozen=True)
class Gate:
    """A linear-optics element given by its single-photon mode map (rows: output modes)."""

    name: str
    in_modes: tuple
    out_modes: tuple
    single: np.ndarray = field(repr=False)

    def fock(self, truncation: int) -> sp.csr_matrix:
        return second_quantize(self.single, FockSpace(self.in_modes, truncation), FockSpace(self.out_modes, truncation))


def copy_gate() -> Gate:
    """``|m, n> -> |m, 0, 0, n>``: a photon in basis state j leaves in state ``|j>|j>``."""
    single = np.zeros((4, 2))
    single[0, 0] = single[3, 1] = 1
    return Gate("copy", (0, 1), (0, 1, 2, 3), single)


def cnot_gate() -> Gate:
    """``|m, n, k, l> -> |m, n, l, k>`` on the modes of two qubits (first one controls)."""
    return Gate("cnot", (0, 1, 2, 3), (0, 1, 2, 3), np.eye(4)[[0, 1, 3, 2]])


def pbs_gate() -> Gate:
    """``|m, n>|k, l> -> |m, l>|k, n>``: horizontal light passes, vertical light swaps ports."""
    ins = (("I0", 0), ("I0", 1), ("I1", 0), ("I1", 1))
    outs = (("O0", 0), ("O0", 1), ("O1", 0), ("O1", 1))
    single = np.zeros((4, 4))
    single[0, 0] = 1  # I0 horizontal -> O0 horizontal
    single[3, 1] = 1  # I0 vertical -> O1 vertical
    single[2, 2] = 1  # I1 horizontal -> O1 horizontal
    single[1, 3] = 1  # I1 vertical -> O0 vertical
    return Gate("pbs", ins, outs, single)


class ModeNetwork:
    """Compose single-photon mode maps of gates acting on named mode registers."""

    def __init__(self, inputs: Sequence[Hashable]):
        self.inputs = tuple(inputs)
        self.state: dict[Hashable, dict[Hashable, complex]] = {m: {m: 1.0} for m in self.inputs}

    def apply(self, gate: Gate, rename_in: dict, rename_out: dict) -> None:
        """Apply ``gate``; ``rename_in`` maps gate input modes to current registers, ``rename_out`` likewise."""
        reg_in = [rename_in[m] for m in gate.in_modes]
        reg_out = [rename_out[m] for m in gate.out_modes]
        for src, amps in self.state.items():
            new: dict[Hashable, complex] = {}
            for reg, amp in amps.items():
                if reg in reg_in:
                    j = reg_in.index(reg)
                    for i in np.flatnonzero(gate.single[:, j]):
                        new[reg_out[i]] = new.get(reg_out[i], 0) + amp * gate.single[i, j]
                else:
                    if reg in reg_out:
                        raise ValueError(f"gate output {reg!r} overwrites an occupied register")
                    new[reg] = new.get(reg, 0) + amp
            self.state[src] = new

    def relabel(self, mapping: dict) -> None:
        for src, amps in self.state.items():
            self.state[src] = {mapping.get(r, r): v for r, v in amps.items()}

    def matrix(self, outputs: Sequence[Hashable], tol: float = 1e-12) -> np.ndarray:
        """Single-photon map restricted to ``outputs``; leakage into other registers raises."""
        idx = {m: i for i, m in enumerate(outputs)}
        out = np.zeros((len(outputs), len(self.inputs)), dtype=complex)
        for j, src in enumerate(self.inputs):
            for reg, amp in self.state[src].items():
                if reg in idx:
                    out[idx[reg], j] += amp
                elif abs(amp) > tol:
                    raise ValueError(f"photon from {src!r} leaks into unused register {reg!r}")
        return out


def _unitary_with_first_column(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    basis = np.eye(len(psi), dtype=complex)
    basis[:, 0] = psi
    q, r = np.linalg.qr(basis)
    return q * (r[0, 0] / abs(r[0, 0]))


def _routing_step(net: ModeNetwork, path_reg, n_paths: int = 3) -> None:
    """Route a photon on path k with polarization p to path k + 1 + p using beam-splitter pairs.

    ``path_reg(k, x, p)`` names the register of path ``k``, target ``x`` and
    polarization ``p``.  Splitting: a PBS per path and target value, with a
    vacuum port, sends polarization 1 to a side arm.  Recombination: the PBS
    before path ``k + 1`` joins the straight arm of path ``k`` with the side
    arm of path ``k - 1`` (which is path ``k + 2`` mod 3); its second output
    stays empty.
    """
    pbs = pbs_gate()
    for k in range(1, n_paths + 1):
        for x in (0, 1):
            net.apply(pbs,
                      {("I0", 0): path_reg(k, x, 0), ("I0", 1): path_reg(k, x, 1),
                       ("I1", 0): ("vac-split", k, x, 0), ("I1", 1): ("vac-split", k, x, 1)},
                      {("O0", 0): ("straight", k, x, 0), ("O0", 1): ("straight", k, x, 1),
                       ("O1", 0): ("side", k, x, 0), ("O1", 1): ("side", k, x, 1)})
    for k in range(1, n_paths + 1):
        src_side = (k - 2) % n_paths + 1
        dst = k % n_paths + 1
        for x in (0, 1):
            net.apply(pbs,
                      {("I0", 0): ("straight", k, x, 0), ("I0", 1): ("straight", k, x, 1),
                       ("I1", 0): ("side", src_side, x, 0), ("I1", 1): ("side", src_side, x, 1)},
                      {("O0", 0): ("routed", dst, x, 0), ("O0", 1): ("routed", dst, x, 1),
                       ("O1", 0): ("dump", dst, x, 0), ("O1", 1): ("dump", dst, x, 1)})


def _register_state_check(net: ModeNetwork, allowed: set) -> None:
    for src, amps in net.state.items():
        for reg, amp in amps.items():
            if abs(amp) > 1e-12 and reg not in allowed:
                raise ValueError(f"gate network leaks {src!r} into {reg!r}")


def grenoble_gate_extension(psi: Sequence[complex] = (1.0, 0.0), truncation: int = 2) -> Extension:
    """The three-party dynamical-order process assembled from optical gates.

    Slot 1: a balanced three-way splitter followed by a waveplate preparing
    ``psi`` on each path.  Slot 2: a copy gate writes the target into the
    polarization, which then routes path ``k`` to ``k + 1 + p``.  Slot 3: the
    same routing followed by a controlled-not from target to polarization.
    Slot 4: the three paths merge into one output whose modes record target,
    polarization and path.  Every slot is the second quantization of the
    composed single-photon map, so it acts on each photon independently.
    """
    q = grenoble(psi)
    extra = {(k, 1): 1 for k in (1, 2, 3)} | {(k, n): 2 for k in (1, 2, 3) for n in (2, 3)}
    past = port([(PAST_WIRE, 1)], 1, truncation)
    fut = port([(FUTURE_WIRE, 12)], time_in(4), truncation)
    ins = [past] + [_out_port(q, n, [2 * extra[(k, n)] for k in (1, 2, 3)], truncation) for n in (1, 2, 3)]
    outs = [_in_port(q, n, [2 * extra[(k, n)] for k in (1, 2, 3)], truncation) for n in (1, 2, 3)] + [fut]
    singles = []

    # slot 1: tritter on (P, vacuum, vacuum), then the waveplate on every path
    net = ModeNetwork([("P", 0)])
    dft = np.array([[np.exp(2j * np.pi * r * c / 3) for c in range(3)] for r in range(3)]) / np.sqrt(3)
    tritter = Gate("tritter", (0, 1, 2), (0, 1, 2), dft)
    net.apply(tritter, {0: ("P", 0), 1: ("vac-tritter", 1), 2: ("vac-tritter", 2)},
              {0: ("path", 1, "h"), 1: ("path", 2, "h"), 2: ("path", 3, "h")})
    plate = _unitary_with_first_column(np.asarray(psi, dtype=complex))
    for k in (1, 2, 3):
        g = Gate("waveplate", (0, 1), (0, 1), plate)
        net.apply(g, {0: ("path", k, "h"), 1: ("vac-plate", k)}, {0: (label_in(k), 0), 1: (label_in(k), 1)})
    rows = [(label_in(k), x) for k in (1, 2, 3) for x in (0, 1)]
    singles.append((net.matrix(rows), rows, [("P", 0)]))

    # slot 2: copy target into polarization, then route by polarization
    inputs = [(label_out(k), x) for k in (1, 2, 3) for x in (0, 1)]
    net = ModeNetwork(inputs)
    cp = copy_gate()
    for k in (1, 2, 3):
        net.apply(cp, {0: (label_out(k), 0), 1: (label_out(k), 1)},
                  {i: ("reg", k, *divmod(i, 2)) for i in range(4)})
    _routing_step(net, lambda k, x, p: ("reg", k, x, p))
    out_regs = [("routed", k, x, p) for k in (1, 2, 3) for x in (0, 1) for p in (0, 1)]
    singles.append((net.matrix(out_regs), out_regs, inputs))

    # slot 3: route by polarization, then controlled-not from target to polarization
    inputs = [(label_out(k), x, p) for k in (1, 2, 3) for x in (0, 1) for p in (0, 1)]
    net = ModeNetwork(inputs)
    _routing_step(net, lambda k, x, p: (label_out(k), x, p))
    cn = cnot_gate()
    for k in (1, 2, 3):
        net.apply(cn, {i: ("routed", k, *divmod(i, 2)) for i in range(4)},
                  {i: ("final", k, *divmod(i, 2)) for i in range(4)})
    out_regs = [("final", k, x, a) for k in (1, 2, 3) for x in (0, 1) for a in (0, 1)]
    singles.append((net.matrix(out_regs), out_regs, inputs))

    # slot 4: merge the paths into F, keeping the path as a degree of freedom
    inputs = [(label_out(k), x, a) for k in (1, 2, 3) for x in (0, 1) for a in (0, 1)]
    net = ModeNetwork(inputs)
    net.relabel({(label_out(k), x, a): (FUTURE_WIRE, (x * 2 + a) * 3 + (k - 1))
                 for k in (1, 2, 3) for x in (0, 1) for a in (0, 1)})
    out_regs = [(FUTURE_WIRE, i) for i in range(12)]
    singles.append((net.matrix(out_regs), out_regs, inputs))

    slices = []
    for slot, (single, out_regs, in_regs) in enumerate(singles, start=1):
        ip, op = ins[slot - 1], outs[slot - 1]
        mat = np.zeros((len(op.modes), len(ip.modes)), dtype=complex)
        for j, reg in enumerate(in_regs):
            col = ip.mode(PAST_WIRE, 0) if slot == 1 else ip.mode(reg[0], _flat(reg, slot - 1))
            for i, oreg in enumerate(out_regs):
                if single[i, j] == 0:
                    continue
                if slot == 4:
                    row = op.mode(FUTURE_WIRE, oreg[1])
                elif slot == 1:
                    row = op.mode(oreg[0], oreg[1])
                else:
                    _, k, x, p = oreg
                    row = op.mode(label_in(k), x * 2 + p)
                mat[row, col] += single[i, j]
        ok, dev = is_isometry(mat)
        if not ok:
            raise ValueError(f"gate network of slot {slot} is not isometric (deviation {dev:.3g})")
        slices.append(Slice((ip,), (op,), second_quantize(mat, ip.space, op.space)))
    return Extension("gates", q, SequenceRep(tuple(slices)), truncation, extra, "modes")


def _flat(reg, n: int) -> int:
    """Mode index within a party wire for a register ``(wire, x)`` or ``(wire, x, extra)``."""
    if len(reg) == 2:
        return reg[1]
    return reg[1] * 2 + reg[2]


# --------------------------------------------------------------------------
# simulation with local operations plugged in


@dataclass
class RunResult:
    future: np.ndarray
    message_leak: float


def run_extension(ext: Extension, local_ops: Sequence[LocalOperation], psi) -> RunResult:
    """Feed ``psi`` at ``t = 1`` and close every party loop with its Fock-extended local operation.

    Returns the final vector over ``(F port, environment)`` and the largest
    weight seen on any party port outside the one-message sector.
    """
    state = ext.past_vector(psi)
    leak = 0.0
    slices = ext.sequence.slices
    for n, sl in enumerate(slices, start=1):
        state = sl.matrix @ state
        if n <= ext.n_parties:
            op = sl.out_ports[0]
            block = state.reshape(op.dim, sl.mem_out)
            weights = np.sum(np.abs(block) ** 2, axis=1)
            leak = max(leak, float(weights[op.space.message_counts != 1].sum()))
            local = ext.local_map(n, local_ops)
            state = (local @ block).reshape(-1)
    return RunResult(state, leak)


def extension_link_route(ext: Extension, local_ops: Sequence[LocalOperation], psi) -> np.ndarray:
    """The same quantity through the box's pure Choi vector and link products with the locals' Choi vectors."""
    full = ext.box.choi_vector_full()
    operand = ComplexVector(SpaceSpec.of((ext.sequence.slices[0].in_ports[0].label, len(ext.past_vector(psi)))),
                            ext.past_vector(psi))
    result = link_vectors(operand, full)
    for n in range(1, ext.n_parties + 1):
        sl_out = ext.sequence.slices[n - 1].out_ports[0]
        sl_in = ext.sequence.slices[n].in_ports[0]
        local = ext.local_map(n, local_ops).toarray()
        cv = choi_vector(operator([(sl_in.label, sl_in.dim)], [(sl_out.label, sl_out.dim)], local))
        result = link_vectors(cv, result)
    fport = ext.sequence.slices[-1].out_ports[0]
    return result.permute([fport.label, "env"]).entries


@dataclass
class ExtensionReport:
    deviations: list[float]
    message_leak: float
    tol: float

    @property
    def max_deviation(self) -> float:
        return max(self.deviations, default=0.0)

    @property
    def ok(self) -> bool:
        return self.max_deviation <= self.tol and self.message_leak <= self.tol

    def to_dict(self) -> dict:
        return {"ok": self.ok, "tol": self.tol, "trials": len(self.deviations),
                "max_deviation": self.max_deviation, "message_leak": self.message_leak}


def random_contraction(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    m = rng.normal(size=(rows, cols)) + 1j * rng.normal(size=(rows, cols))
    return m / (np.linalg.norm(m, 2) * (1 + rng.random()))


def random_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_trials(q: QcQc, n_unitary: int, n_contraction: int, rng: np.random.Generator):
    """Random local Kraus tuples (unitary then contraction samples) with random past states."""
    out = []
    for i in range(n_unitary + n_contraction):
        ops = []
        for k, (d_in, d_out) in enumerate(q.dims, start=1):
            if i < n_unitary and d_in == d_out:
                a = random_unitary(rng, d_in)
            else:
                a = random_contraction(rng, d_out, d_in)
            ops.append(LocalOperation(k, a))
        psi = rng.normal(size=q.past_dim) + 1j * rng.normal(size=q.past_dim)
        out.append((ops, psi / np.linalg.norm(psi)))
    return out


def verify_extension(ext: Extension, q: QcQc | None = None, trials: int | list = 50, tol: float = 1e-9,
                     seed: int = 0) -> ExtensionReport:
    """Compare the box with plugged-in extended locals against the QC-QC's pure Born rule.

    ``trials`` is a count (split 2:3 between unitary and contraction samples)
    or an explicit list of ``(local operations, past state)`` pairs.
    """
    q = q or ext.qcqc
    if isinstance(trials, int):
        n_u = round(trials * 2 / 5)
        trials = random_trials(q, n_u, trials - n_u, np.random.default_rng(seed))
    devs = []
    leak = 0.0
    for ops, psi in trials:
        lhs = future_vector(q, ops, psi).entries
        run = run_extension(ext, ops, psi)
        devs.append(float(np.abs(run.future - ext.future_embedding(lhs)).max(initial=0.0)))
        leak = max(leak, run.message_leak)
    return ExtensionReport(devs, leak, tol)


# --------------------------------------------------------------------------
# projective extension


@dataclass
class ProjectiveExtension:
    """Isometric extension with a two-outcome test before and after every slot.

    The accept test projects onto the single-message, matching-control
    subspace with the ancilla in its original summand.  Rejection aborts the
    run; the abort probability is the total rejected weight.
    """

    base: Extension
    accept_in: list[np.ndarray]
    accept_out: list[np.ndarray]

    def effective_slices(self) -> list[sp.csr_matrix]:
        return [sp.diags(po.astype(float)) @ sl.matrix @ sp.diags(pi.astype(float))
                for sl, pi, po in zip(self.base.sequence.slices, self.accept_in, self.accept_out)]

    def run(self, local_ops: Sequence[LocalOperation], psi, past_vector: np.ndarray | None = None):
        """Return ``(accepted final vector, accept probability, abort probability)``."""
        state = self.base.past_vector(psi) if past_vector is None else np.asarray(past_vector, dtype=complex)
        total = float(np.vdot(state, state).real)
        abort = 0.0
        for n, (sl, pi, po) in enumerate(zip(self.base.sequence.slices, self.accept_in, self.accept_out), start=1):
            abort += float(np.sum(np.abs(state[~pi]) ** 2))
            state = np.where(pi, state, 0)
            state = sl.matrix @ state
            abort += float(np.sum(np.abs(state[~po]) ** 2))
            state = np.where(po, state, 0)
            if n <= self.base.n_parties:
                block = state.reshape(sl.out_ports[0].dim, sl.mem_out)
                state = (self.base.local_map(n, local_ops) @ block).reshape(-1)
        accept = float(np.vdot(state, state).real)
        return state, accept / total if total else 0.0, abort / total if total else 0.0


def projective_extension(q: QcQc, truncation: int = 2) -> ProjectiveExtension:
    ext = isometric_extension(q, "record-min", truncation)
    n_par = q.n_parties
    abar = [1] + ext.info["ancilla_dims"]
    acc_in, acc_out = [], []
    for slot, sl in enumerate(ext.sequence.slices, start=1):
        ip, op = sl.in_ports[0], sl.out_ports[0]
        c_in = control_states(n_par, slot)
        mask_in = np.zeros(ip.dim * sl.mem_in, dtype=bool)
        for occ_idx in range(ip.dim):
            occ = [ip.modes[i] for i in ip.space.occupied(occ_idx)]
            if len(occ) != 1:
                continue
            for ci, c in enumerate(c_in):
                if _is_corr(occ[0], c):
                    for a in range(q.alpha(slot - 1)):
                        mask_in[(occ_idx * len(c_in) + ci) * abar[slot - 1] + a] = True
        last = slot == n_par + 1
        c_out = [None] if last else control_states(n_par, slot + 1)
        a_out = q.ancilla_dims[-1] if last else q.alpha(slot)
        mask_out = np.zeros(op.dim * sl.mem_out, dtype=bool)
        for occ_idx in range(op.dim):
            occ = [op.modes[i] for i in op.space.occupied(occ_idx)]
            if len(occ) != 1:
                continue
            for ci, c in enumerate(c_out):
                matches = occ[0][0] == FUTURE_WIRE if last else occ[0][0] == label_in(c.current)
                if matches:
                    for b in range(a_out):
                        mask_out[(occ_idx * len(c_out) + ci) * abar[slot] + b] = True
        acc_in.append(mask_in)
        acc_out.append(mask_out)
    return ProjectiveExtension(ext, acc_in, acc_out)
