"""Encoders and decoders relating a QC-QC to its extension, signalling tests and acyclicity checks.

The coarse map of a QC-QC sends ``P (x) A1^O (x) ... (x) AN^O`` to
``A1^I (x) ... (x) AN^I (x) F (x) alphaF``; its Choi vector is the process
vector.  The fine map is the extension's causal box with its environment
kept.  The encoder spreads the coarse inputs over the box's timestamped
ports, one causal order at a time, and the decoder projects the box output
onto the matching-control branches, strips the timestamps and undoes the
encoder amplitudes.
"""

from __future__ import annotations

import graphlib
import heapq
import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .causalbox import CausalBox, Port, SequenceRep
from .errors import DecoderSingular, DimMismatch, InvalidLambda, LabelNotFound, UnsupportedExtension
from .extension import Extension, photonic_mode_index, time_in, time_out
from .fock import FockSpace
from .linalg import ComplexMatrix, ComplexVector, SpaceSpec, is_isometry, operator_from_choi, partial_trace
from .qcqc import ANC_F, FUT, PAST, QcQc, label_in, label_out, orders, process_vector

Order = tuple[int, ...]
LIVE_TOL = 1e-12


def coarse_inputs(q: QcQc) -> list[tuple[str, int]]:
    return [(PAST, q.past_dim)] + [(label_out(k), d_out) for k, (_, d_out) in enumerate(q.dims, start=1)]


def coarse_outputs(q: QcQc) -> list[tuple[str, int]]:
    return [(label_in(k), d_in) for k, (d_in, _) in enumerate(q.dims, start=1)] + [
        (FUT, q.future_dim), (ANC_F, q.ancilla_dims[-1])]


def coarse_operator(q: QcQc, order_list: Sequence[Order] | None = None) -> np.ndarray:
    """The QC-QC as a linear map, rows over :func:`coarse_outputs`, columns over :func:`coarse_inputs`."""
    ins = [lab for lab, _ in coarse_inputs(q)]
    outs = [lab for lab, _ in coarse_outputs(q)]
    return operator_from_choi(process_vector(q, order_list).vec, ins).permute(outs, ins).entries


def order_operators(q: QcQc) -> dict[Order, np.ndarray]:
    """The contribution of each causal order to :func:`coarse_operator`."""
    return {o: coarse_operator(q, [o]) for o in orders(q.n_parties)}


# --------------------------------------------------------------------------
# encoder


@dataclass(frozen=True)
class EncoderSpec:
    """Amplitudes keyed by ``(order, (past index, i_1, ..., i_N))``; missing keys are zero."""

    lambdas: Mapping[tuple[Order, tuple[int, ...]], complex]

    def amplitude(self, order: Order, index: tuple[int, ...]) -> complex:
        return self.lambdas.get((tuple(order), tuple(index)), 0.0)


def default_lambdas(q: QcQc, tol: float = LIVE_TOL) -> EncoderSpec:
    """Uniform amplitudes over the orders whose chained operators do not annihilate the input."""
    parts = order_operators(q)
    dims = [d for _, d in coarse_inputs(q)]
    lambdas = {}
    for col, index in enumerate(np.ndindex(*dims)):
        live = [o for o, m in parts.items() if np.linalg.norm(m[:, col]) > tol] or list(parts)
        for o in live:
            lambdas[(o, index)] = 1 / np.sqrt(len(live))
    return EncoderSpec(lambdas)


def _check_lambdas(q: QcQc, spec: EncoderSpec, tol: float) -> None:
    dims = [d for _, d in coarse_inputs(q)]
    known = set(orders(q.n_parties))
    for order, index in spec.lambdas:
        if tuple(order) not in known:
            raise InvalidLambda(f"{order} is not an order of {q.n_parties} parties")
        if len(index) != len(dims) or any(not 0 <= i < d for i, d in zip(index, dims)):
            raise InvalidLambda(f"multi-index {index} is outside the input dimensions {dims}")
    for index in np.ndindex(*dims):
        total = sum(abs(spec.amplitude(o, index)) ** 2 for o in known)
        if abs(total - 1) > tol:
            raise InvalidLambda(f"squared amplitudes of multi-index {index} sum to {total:.12g}, not 1")


def _check_layout(q: QcQc, ext: Extension) -> None:
    if (q.n_parties, q.dims, q.past_dim, q.future_dim, q.ancilla_dims[-1]) != (
            ext.qcqc.n_parties, ext.qcqc.dims, ext.qcqc.past_dim, ext.qcqc.future_dim, ext.qcqc.ancilla_dims[-1]):
        raise DimMismatch("the extension was built for a QC-QC with different interfaces")
    if ext.variant == "photonic":
        if any(ext.qcqc.alpha(n) != 1 for n in range(1, q.n_parties + 1)):
            raise UnsupportedExtension(
                "the photonic extension carries the ancilla inside the messages, so an encoder cannot prepare it")
    elif ext.variant != "isometric":
        raise UnsupportedExtension(f"no encoder layout for the {ext.variant!r} extension")


def _message_mode(ext: Extension, k: int, n: int, x: int, history: frozenset) -> int:
    """Index within its wire of a party-``k`` message carrying ``x`` at the party's ``n``-th possible slot."""
    if ext.variant == "isometric":
        return x
    return photonic_mode_index(ext.qcqc, k, n, x, 0, history)


def _port_digit(p: Port, wire: str, mode: int) -> int:
    return p.space.index([p.mode(wire, mode)])


@dataclass
class Encoder:
    spec: EncoderSpec
    ext: Extension
    matrix: ComplexMatrix  # rows over the box input ports, columns over the coarse inputs


def build_encoder(q: QcQc, ext: Extension, lambdas: EncoderSpec | Mapping | None = None,
                  tol: float = 1e-12) -> Encoder:
    """``|p, i_1..i_N> -> sum_orders lambda |p @ 1> (x)_n |i_{k_n} on wire A_{k_n}^O @ 2n+1>``."""
    _check_layout(q, ext)
    if lambdas is None:
        spec = default_lambdas(q)
    else:
        spec = lambdas if isinstance(lambdas, EncoderSpec) else EncoderSpec(dict(lambdas))
    _check_lambdas(q, spec, tol)
    ports = [sl.in_ports[0] for sl in ext.sequence.slices]
    row_dims = [p.dim for p in ports]
    col_dims = [d for _, d in coarse_inputs(q)]
    entries = np.zeros((int(np.prod(row_dims)), int(np.prod(col_dims))), dtype=complex)
    for col, index in enumerate(np.ndindex(*col_dims)):
        for order in orders(q.n_parties):
            lam = spec.amplitude(order, index)
            if lam == 0:
                continue
            digits = [_port_digit(ports[0], PAST, index[0])]
            for n, k in enumerate(order, start=1):
                mode = _message_mode(ext, k, n, index[k], frozenset(order[:n - 1]))
                digits.append(_port_digit(ports[n], label_out(k), mode))
            entries[np.ravel_multi_index(digits, row_dims), col] += lam
    rows = SpaceSpec(tuple((p.label, p.dim) for p in ports))
    return Encoder(spec, ext, ComplexMatrix(rows, SpaceSpec(tuple(coarse_inputs(q))), entries))


# --------------------------------------------------------------------------
# decoder


@dataclass
class Decoder:
    """Projection onto the matching-control branch of each order, then rescaling to the QC-QC output.

    ``selectors[o]`` picks the coarse output out of the box output
    ``(output ports, environment)`` for order ``o``; ``rescalers[o]``
    undoes the encoder amplitudes on that branch.
    """

    ext: Extension
    selectors: dict[Order, sp.csr_matrix]
    rescalers: dict[Order, np.ndarray]

    def matrix(self) -> sp.csr_matrix:
        total = None
        for o, sel in self.selectors.items():
            term = sp.csr_matrix(self.rescalers[o]) @ sel
            total = term if total is None else total + term
        return total.tocsr()

    def project(self, vec: np.ndarray) -> dict[Order, np.ndarray]:
        """The per-order coarse components of a box output, before rescaling."""
        return {o: sel @ vec for o, sel in self.selectors.items()}

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return self.matrix() @ vec


def _selector(q: QcQc, ext: Extension, order: Order) -> sp.csr_matrix:
    slices = ext.sequence.slices
    ports = [sl.out_ports[0] for sl in slices]
    env = slices[-1].mem_out
    fine_dims = [p.dim for p in ports]
    out_dims = [d for _, d in coarse_outputs(q)]
    a_f = q.ancilla_dims[-1]
    rows, cols = [], []
    for row, index in enumerate(np.ndindex(*out_dims)):
        digits = []
        for n, k in enumerate(order, start=1):
            mode = _message_mode(ext, k, n, index[k - 1], frozenset(order[:n - 1]))
            digits.append(_port_digit(ports[n - 1], label_in(k), mode))
        f, b = index[-2], index[-1]
        if ext.readout == "env":
            digits.append(_port_digit(ports[-1], FUT, f))
            e = b
        else:
            digits.append(_port_digit(ports[-1], FUT, f * a_f + b))
            e = 0
        rows.append(row)
        cols.append(int(np.ravel_multi_index(digits, fine_dims)) * env + e)
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)),
                         shape=(int(np.prod(out_dims)), int(np.prod(fine_dims)) * env), dtype=complex)


def build_decoder(q: QcQc, enc: Encoder, tol: float = 1e-9) -> Decoder:
    """Per order, the linear map sending ``lambda * w_o(col)`` to ``w_o(col)`` on the span of those images.

    ``w_o`` is the order's contribution to the QC-QC.  A live column with a
    zero amplitude cannot be undone (:class:`DecoderSingular`); amplitudes
    that make the map ill-defined on linearly dependent images are reported
    as :class:`InvalidLambda`.
    """
    ext = enc.ext
    _check_layout(q, ext)
    dims = [d for _, d in coarse_inputs(q)]
    selectors, rescalers = {}, {}
    for o, target in order_operators(q).items():
        lam = np.array([enc.spec.amplitude(o, index) for index in np.ndindex(*dims)], dtype=complex)
        live = np.linalg.norm(target, axis=0) > LIVE_TOL
        if np.any(live & (lam == 0)):
            col = int(np.flatnonzero(live & (lam == 0))[0])
            raise DecoderSingular(f"order {o} is live on input column {col} but its amplitude is zero")
        images = target * lam
        rescale = target @ np.linalg.pinv(images, rcond=1e-10)
        residual = np.abs(rescale @ images - target).max(initial=0.0)
        if residual > tol:
            raise InvalidLambda(f"amplitudes of order {o} are not consistent on dependent images "
                                f"(residual {residual:.3g})")
        selectors[o] = _selector(q, ext, o)
        rescalers[o] = rescale
    return Decoder(ext, selectors, rescalers)


@dataclass
class FinegrainingReport:
    choi_deviation: float
    operator_deviation: float
    encoder_deviation: float
    decoder_gram_deviation: float
    mismatch_weight: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.choi_deviation <= self.tol and self.encoder_deviation <= self.tol

    def to_dict(self) -> dict:
        return {"ok": self.ok, "tol": self.tol, "choi_deviation": self.choi_deviation,
                "operator_deviation": self.operator_deviation, "encoder_deviation": self.encoder_deviation,
                "decoder_gram_deviation": self.decoder_gram_deviation, "mismatch_weight": self.mismatch_weight}


def composed_operator(enc: Encoder, dec: Decoder) -> tuple[np.ndarray, np.ndarray]:
    """``(Dec C Enc, C Enc)`` as dense matrices; ``C`` is the box with its environment kept."""
    fine = np.asarray(enc.ext.box.isometry @ enc.matrix.entries)
    return np.asarray(dec.matrix() @ fine), fine


def verify_finegraining(q: QcQc, enc: Encoder, dec: Decoder, tol: float = 1e-9) -> FinegrainingReport:
    """Compare ``Dec o C o Enc`` with the QC-QC as Choi matrices over the coarse interfaces."""
    coarse = coarse_operator(q)
    composed, fine = composed_operator(enc, dec)
    v_w = coarse.T.reshape(-1)
    v_c = composed.T.reshape(-1)
    choi_dev = float(np.abs(np.outer(v_c, v_c.conj()) - np.outer(v_w, v_w.conj())).max(initial=0.0))
    enc_dev = is_isometry(enc.matrix.entries)[1]
    gram_dev = float(np.abs(composed.conj().T @ composed - fine.conj().T @ fine).max(initial=0.0))
    kept = sum(sel.conj().T @ (sel @ fine) for sel in dec.selectors.values())
    mismatch = float(np.linalg.norm(fine - kept, axis=0).max(initial=0.0))
    return FinegrainingReport(choi_dev, float(np.abs(composed - coarse).max(initial=0.0)), enc_dev, gram_dev,
                              mismatch, tol)


# --------------------------------------------------------------------------
# signalling


@dataclass(frozen=True)
class SignallingQuery:
    source: tuple[str, ...]
    sink: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "source", tuple(self.source))
        object.__setattr__(self, "sink", tuple(self.sink))
        if not self.source or not self.sink:
            raise LabelNotFound("a signalling query needs at least one source and one sink")


@dataclass
class PureChoi:
    """Sparse Choi vector ``sum_i |i> (x) V|i>`` of a pure map; every label not in ``inputs`` is an output."""

    space: SpaceSpec
    inputs: tuple[str, ...]
    index: np.ndarray
    data: np.ndarray

    @classmethod
    def from_vector(cls, vec: ComplexVector, inputs: Sequence[str]) -> "PureChoi":
        nz = np.flatnonzero(vec.entries)
        return cls(vec.space, tuple(inputs), nz.astype(np.int64), vec.entries[nz])

    @property
    def outputs(self) -> tuple[str, ...]:
        return tuple(lab for lab in self.space.labels if lab not in self.inputs)

    def factor(self, rows: Sequence[str]) -> sp.csr_matrix:
        """``B`` with ``B B^dagger`` the Choi matrix traced over every label not in ``rows``."""
        labels, dims = self.space.labels, self.space.dims
        digits = np.unravel_index(self.index, dims) if dims else ()
        rest = [lab for lab in labels if lab not in rows]
        r_dims = [self.space.dim_of(lab) for lab in rows]
        c_dims = [self.space.dim_of(lab) for lab in rest]
        r = _ravel([digits[labels.index(lab)] for lab in rows], r_dims, len(self.index))
        c = _ravel([digits[labels.index(lab)] for lab in rest], c_dims, len(self.index))
        return sp.csr_matrix((self.data, (r, c)), shape=(_prod(r_dims), _prod(c_dims)))


def _prod(dims) -> int:
    out = 1
    for d in dims:
        out *= int(d)
    return out


def _ravel(digits, dims, n) -> np.ndarray:
    out = np.zeros(n, dtype=np.int64)
    for dig, d in zip(digits, dims):
        out = out * d + dig
    return out


@dataclass
class Marginal:
    """Choi matrix over ``(source, other inputs, sink)`` with the remaining outputs traced out."""

    matrix: sp.csr_matrix
    source_dim: int

    def deviation(self, kraus: Sequence[np.ndarray]) -> float:
        """``max |J_N - J|`` where ``J_N`` is the marginal after applying ``kraus`` on the source."""
        rest = self.matrix.shape[0] // self.source_dim
        changed = None
        for k in kraus:
            lift = sp.kron(sp.csr_matrix(np.asarray(k).T), sp.identity(rest, format="csr")).tocsr()
            term = lift @ self.matrix @ lift.conj().T
            changed = term if changed is None else changed + term
        diff = (changed - self.matrix).tocoo()
        return float(np.abs(diff.data).max(initial=0.0))


def marginal(choi, query: SignallingQuery, inputs: Sequence[str] | None = None) -> Marginal:
    """The part of ``choi`` that a local operation on ``query.source`` may change, as seen on ``query.sink``.

    ``choi`` is a :class:`PureChoi`, a pure Choi vector (``ComplexVector``) or
    a Choi matrix (``ComplexMatrix``); the latter two need ``inputs``.
    """
    if isinstance(choi, ComplexVector):
        choi = PureChoi.from_vector(choi, _need(inputs))
    if isinstance(choi, PureChoi):
        space, ins = choi.space, choi.inputs
    else:
        space, ins = choi.row_space, tuple(_need(inputs))
    for lab in query.source:
        if lab not in ins:
            raise LabelNotFound(f"source {lab!r} is not an input")
    for lab in query.sink:
        if lab not in space or lab in ins:
            raise LabelNotFound(f"sink {lab!r} is not an output")
    rows = list(query.source) + [lab for lab in ins if lab not in query.source] + list(query.sink)
    source_dim = _prod(space.dim_of(lab) for lab in query.source)
    if isinstance(choi, PureChoi):
        b = choi.factor(rows)
        return Marginal((b @ b.conj().T).tocsr(), source_dim)
    traced = [lab for lab in space.labels if lab not in rows]
    red = partial_trace(choi, traced) if traced else choi
    return Marginal(sp.csr_matrix(red.permute(rows).entries), source_dim)


def _need(inputs):
    if inputs is None:
        raise LabelNotFound("the input labels of the map must be given")
    return inputs


@dataclass
class Witness:
    kind: str
    kraus: list[np.ndarray]
    deviation: float


@dataclass
class SignallingResult:
    query: SignallingQuery
    witness_found: bool
    witnesses: list[Witness]
    trials: int

    @property
    def witness(self) -> Witness | None:
        return self.witnesses[0] if self.witnesses else None

    def to_dict(self) -> dict:
        return {"source": list(self.query.source), "sink": list(self.query.sink),
                "witness_found": self.witness_found, "witnesses": len(self.witnesses), "trials": self.trials,
                "max_deviation": max((w.deviation for w in self.witnesses), default=0.0)}


def _haar(rng: np.random.Generator, d: int) -> np.ndarray:
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def candidate_operations(d: int, trials: int, seed: int = 0):
    """Random unitaries alternating with replace-by-a-random-pure-state channels on a ``d``-dimensional source."""
    rng = np.random.default_rng(seed)
    for t in range(trials):
        if t % 2 == 0:
            yield "unitary", [_haar(rng, d)]
        else:
            s = rng.normal(size=d) + 1j * rng.normal(size=d)
            s /= np.linalg.norm(s)
            yield "replace", [np.outer(s, np.eye(d)[j]) for j in range(d)]


def check_signalling(choi, query: SignallingQuery, inputs: Sequence[str] | None = None, trials: int = 200,
                     tol: float = 1e-9, seed: int = 0, stop_at_first: bool = True) -> SignallingResult:
    """Search for a local operation on the source that changes the marginal on the sink.

    Finding none after ``trials`` candidates is reported as no witness, which
    is not a proof that the source cannot signal.
    """
    m = marginal(choi, query, inputs)
    found, used = [], 0
    for kind, kraus in candidate_operations(m.source_dim, trials, seed):
        used += 1
        dev = m.deviation(kraus)
        if dev > tol:
            found.append(Witness(kind, kraus, dev))
            if stop_at_first:
                break
    return SignallingResult(query, bool(found), found, used)


# --------------------------------------------------------------------------
# fine-grained signalling: box interfaces resolved per wire and time


def _wire_spaces(p: Port) -> list[FockSpace]:
    return [FockSpace([(w, p.time, i) for i in range(d)], p.truncation) for w, d in p.wires]


def _wire_table(p: Port) -> np.ndarray:
    """Row ``i``: the occupation index on every wire of port basis state ``i``."""
    spaces = _wire_spaces(p)
    table = np.zeros((p.dim, len(spaces)), dtype=np.int64)
    for i in range(p.dim):
        modes = [p.modes[m] for m in p.space.occupied(i)]
        for j, (s, (w, _)) in enumerate(zip(spaces, p.wires)):
            table[i, j] = s.index(s.mode_index(m) for m in modes if m[0] == w)
    return table


def wire_resolved_choi(box: CausalBox) -> PureChoi:
    """The box's pure Choi vector with every port split into its wires, labelled ``wire@time``.

    A port's Fock space embeds basis-to-basis into the tensor product of the
    per-wire Fock spaces (each truncated at the port's bound), so this is the
    same map written on tensor factors that single wires can be traced over.
    """
    if not box.is_isometric:
        raise UnsupportedExtension("wire resolution needs the box's Stinespring isometry")
    u = box.isometry.tocoo()
    env = box.env_dim
    factors, digits = [], []
    in_digits = np.unravel_index(u.col.astype(np.int64), box.in_dims) if box.in_ports else ()
    out_digits = np.unravel_index((u.row // env).astype(np.int64), box.out_dims) if box.out_ports else ()
    for ports, port_digits in ((box.in_ports, in_digits), (box.out_ports, out_digits)):
        for p, dig in zip(ports, port_digits):
            table = _wire_table(p)
            for j, ((w, _), s) in enumerate(zip(p.wires, _wire_spaces(p))):
                factors.append((f"{w}@{p.time}", s.dim))
                digits.append(table[dig, j])
    factors.append(("env", env))
    digits.append((u.row % env).astype(np.int64))
    space = SpaceSpec(tuple(factors))
    index = _ravel(digits, space.dims, len(u.data))
    n_in = sum(len(p.wires) for p in box.in_ports)
    return PureChoi(space, tuple(lab for lab, _ in factors[:n_in]), index, u.data.astype(complex))


def fine_labels(fine: PureChoi, wire: str, inputs: bool) -> list[str]:
    pool = fine.inputs if inputs else fine.outputs
    return [lab for lab in pool if lab.rsplit("@", 1)[0] == wire]


def transfer_witness(kraus: Sequence[np.ndarray], n_times: int, wire_dim: int, truncation: int) -> list[np.ndarray]:
    """Apply the same operation to the non-vacuum message at every time of a wire, identity on vacuum.

    A single unitary ``U`` becomes ``U (+) 1`` on each time slot; any other
    Kraus set ``{K_j}`` becomes ``{K_j (+) 0} u {0 (+) 1}`` so the result stays
    trace preserving.  The per-time operations are tensored over time.
    """
    kraus = [np.asarray(k, dtype=complex) for k in kraus]
    d = kraus[0].shape[1]
    if any(k.shape != (d, d) for k in kraus) or d != wire_dim:
        raise DimMismatch("the witness must act on the wire's message space")
    size = FockSpace(list(range(wire_dim)), truncation).dim
    one = slice(1, 1 + d)
    rest = np.eye(size, dtype=complex)
    rest[one, one] = 0
    if len(kraus) == 1 and np.allclose(kraus[0].conj().T @ kraus[0], np.eye(d)):
        per_time = [rest.copy()]
        per_time[0][one, one] = kraus[0]
    else:
        per_time = []
        for k in kraus:
            lifted = np.zeros((size, size), dtype=complex)
            lifted[one, one] = k
            per_time.append(lifted)
        per_time.append(rest)
    out = []
    for combo in itertools.product(per_time, repeat=n_times):
        m = np.ones((1, 1), dtype=complex)
        for op in combo:
            m = np.kron(m, op)
        out.append(m)
    return out


@dataclass
class TransferRecord:
    source: str
    sink: str
    witnesses: int
    transferred: int

    def to_dict(self) -> dict:
        return {"source": self.source, "sink": self.sink, "witnesses": self.witnesses,
                "transferred": self.transferred}


@dataclass
class SignallingTransferReport:
    records: list[TransferRecord] = field(default_factory=list)

    @property
    def found(self) -> int:
        return sum(r.witnesses for r in self.records)

    @property
    def transferred(self) -> int:
        return sum(r.transferred for r in self.records)

    @property
    def ok(self) -> bool:
        return self.found == self.transferred

    def to_dict(self) -> dict:
        return {"ok": self.ok, "witnesses": self.found, "transferred": self.transferred,
                "queries": [r.to_dict() for r in self.records]}


def signalling_transfer(q: QcQc, ext: Extension, trials: int = 10, tol: float = 1e-9,
                        seed: int = 0) -> SignallingTransferReport:
    """Every witness found on the QC-QC for a single-interface query, checked again on the box.

    Sources are ``P`` and every ``Ak^O``; sinks are every ``Ak^I`` and ``F``.
    On the box, the source becomes the same wire at all its times and the
    sink the same wire at all its times.
    """
    coarse = process_vector(q).vec
    ins = [lab for lab, _ in coarse_inputs(q)]
    fine = wire_resolved_choi(ext.box)
    wire_dims = {lab: d for lab, d in coarse_inputs(q)}
    report = SignallingTransferReport()
    sinks = [label_in(k) for k in range(1, q.n_parties + 1)] + [FUT]
    for source in ins:
        fine_src = fine_labels(fine, source, inputs=True)
        for sink in sinks:
            res = check_signalling(coarse, SignallingQuery((source,), (sink,)), ins, trials, tol, seed,
                                   stop_at_first=False)
            moved = 0
            if res.witnesses:
                m = marginal(fine, SignallingQuery(fine_src, fine_labels(fine, sink, inputs=False)))
                for w in res.witnesses:
                    lifted = transfer_witness(w.kraus, len(fine_src), wire_dims[source], ext.truncation)
                    moved += m.deviation(lifted) > tol
            report.records.append(TransferRecord(source, sink, len(res.witnesses), moved))
    return report


# --------------------------------------------------------------------------
# acyclicity


@dataclass(frozen=True)
class Node:
    """A map in a wiring diagram; wires are ``(label, time)`` pairs, internal wires have time ``None``."""

    name: str
    inputs: tuple[tuple[str, int | None], ...]
    outputs: tuple[tuple[str, int | None], ...]

    @property
    def time(self) -> int:
        """The node acts when it emits (or, with no timed outputs, when its last input arrives)."""
        outs = [t for _, t in self.outputs if t is not None]
        if outs:
            return min(outs)
        return max((t for _, t in self.inputs if t is not None), default=0)


@dataclass
class AcyclicityReport:
    acyclic: bool
    order: list[str]
    cycle: list[str]
    backward_edges: list[tuple[str, str]]
    time_order: list[str]

    @property
    def ok(self) -> bool:
        return self.acyclic and not self.backward_edges and self.order == self.time_order

    def to_dict(self) -> dict:
        return {"ok": self.ok, "acyclic": self.acyclic, "topological_order": self.order,
                "time_order": self.time_order, "cycle": self.cycle,
                "backward_edges": [list(e) for e in self.backward_edges]}


def extension_locals(ext: Extension) -> list[Node]:
    """One node per party and possible slot: the extended local acting on ``Ak^I @ 2n``."""
    return [Node(f"A{k}@{time_in(n)}", ((label_in(k), time_in(n)),), ((label_out(k), time_out(n)),))
            for n in range(1, ext.n_parties + 1) for k in range(1, ext.n_parties + 1)]


def sequence_nodes(s: SequenceRep) -> list[Node]:
    """Slices as nodes; the memory passed from slice ``n`` to ``n+1`` is an explicit wire."""
    nodes = []
    for n, sl in enumerate(s.slices, start=1):
        ins = [(w, p.time) for p in sl.in_ports for w, _ in p.wires]
        outs = [(w, p.time) for p in sl.out_ports for w, _ in p.wires]
        if n > 1:
            ins.append((f"memory{n - 1}", None))
        if n < len(s.slices):
            outs.append((f"memory{n}", None))
        nodes.append(Node(f"slice{n}", tuple(ins), tuple(outs)))
    return nodes


def check_acyclicity(s: SequenceRep | None, locals: Sequence[Node] = (), extra: Sequence[Node] = ()) -> AcyclicityReport:
    """Build the wiring digraph (an output feeds every input with the same wire and time) and order it.

    Edges must run from a node that acts earlier to one that acts later.  The
    topological order breaks ties by acting time, so on a forward-in-time
    network it equals the time order.
    """
    nodes = (sequence_nodes(s) if s is not None else []) + list(locals) + list(extra)
    names = [n.name for n in nodes]
    if len(set(names)) != len(names):
        raise LabelNotFound("node names must be unique")
    consumers: dict[tuple[str, int], list[Node]] = {}
    for node in nodes:
        for wire in node.inputs:
            consumers.setdefault(wire, []).append(node)
    edges: dict[str, set[str]] = {n.name: set() for n in nodes}
    backward = []
    for node in nodes:
        for wire in node.outputs:
            for other in consumers.get(wire, []):
                edges[node.name].add(other.name)
                if node.time >= other.time:
                    backward.append((node.name, other.name))
    time_of = {n.name: n.time for n in nodes}
    predecessors = {name: {src for src, dsts in edges.items() if name in dsts} for name in edges}
    try:
        tuple(graphlib.TopologicalSorter(predecessors).static_order())
    except graphlib.CycleError as err:
        return AcyclicityReport(False, [], list(err.args[1]), backward, _time_order(time_of))
    return AcyclicityReport(True, _kahn(edges, time_of), [], backward, _time_order(time_of))


def _time_order(time_of: dict[str, int]) -> list[str]:
    return sorted(time_of, key=lambda n: (time_of[n], n))


def _kahn(edges: dict[str, set[str]], time_of: dict[str, int]) -> list[str]:
    indeg = {n: 0 for n in edges}
    for dsts in edges.values():
        for d in dsts:
            indeg[d] += 1
    ready = [(time_of[n], n) for n, k in indeg.items() if k == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        _, n = heapq.heappop(ready)
        order.append(n)
        for d in edges[n]:
            indeg[d] -= 1
            if indeg[d] == 0:
                heapq.heappush(ready, (time_of[d], d))
    return order
