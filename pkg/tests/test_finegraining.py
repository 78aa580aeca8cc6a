from __future__ import annotations

import numpy as np
import pytest

from qcbox.errors import DecoderSingular, InvalidLambda, UnsupportedExtension
from qcbox.extension import grenoble_gate_extension, isometric_extension, photonic_extension
from qcbox.finegraining import (
    Node,
    SignallingQuery,
    build_decoder,
    build_encoder,
    check_acyclicity,
    check_signalling,
    coarse_inputs,
    coarse_operator,
    composed_operator,
    default_lambdas,
    extension_locals,
    order_operators,
    signalling_transfer,
    verify_finegraining,
)
from qcbox.linalg import ComplexMatrix, SpaceSpec, choi_vector, operator
from qcbox.qcqc import fixed_order_chain, grenoble, label_in, label_out, orders, process_vector, quantum_switch

PSI = (0.6, 0.8j)


def pipeline(q, builder=isometric_extension, lambdas=None):
    ext = builder(q, truncation=1)
    enc = build_encoder(q, ext, lambdas)
    return ext, enc, build_decoder(q, enc)


def test_single_party_encoder_is_timestamping():
    q = fixed_order_chain([np.eye(2), np.eye(2)])
    ext, enc, dec = pipeline(q)
    assert set(enc.spec.lambdas.values()) == {1}
    # |p, i> goes to one message p on P@1 and one message i on A1^O@3
    ports = [sl.in_ports[0] for sl in ext.sequence.slices]
    for p in range(2):
        for i in range(2):
            row = (ports[0].space.index([ports[0].mode("P", p)]) * ports[1].dim
                   + ports[1].space.index([ports[1].mode(label_out(1), i)]))
            col = enc.matrix.entries[:, p * 2 + i]
            assert col[row] == 1 and np.abs(col).sum() == 1
    assert verify_finegraining(q, enc, dec).choi_deviation == 0


def test_uniform_lambdas_give_isometric_encoder():
    q = quantum_switch()
    ext = isometric_extension(q, truncation=1)
    dims = [d for _, d in coarse_inputs(q)]
    uniform = {(o, idx): 1 / np.sqrt(2) for o in orders(2) for idx in np.ndindex(*dims)}
    enc = build_encoder(q, ext, uniform)
    gram = enc.matrix.entries.conj().T @ enc.matrix.entries
    assert np.abs(gram - np.eye(gram.shape[0])).max() <= 1e-12
    report = verify_finegraining(q, enc, build_decoder(q, enc))
    assert report.ok and report.choi_deviation <= 1e-12


def test_default_lambdas_count_live_orders():
    q = quantum_switch()
    spec = default_lambdas(q)
    # control |0> (past index 0 or 1) only lets Alice go first
    assert spec.amplitude((1, 2), (0, 0, 0)) == 1 and spec.amplitude((2, 1), (0, 0, 0)) == 0
    assert spec.amplitude((2, 1), (3, 1, 1)) == 1


def test_lambda_errors():
    q = quantum_switch()
    ext = isometric_extension(q, truncation=1)
    dims = [d for _, d in coarse_inputs(q)]
    half = {((1, 2), idx): 0.5 for idx in np.ndindex(*dims)}
    with pytest.raises(InvalidLambda):
        build_encoder(q, ext, half)
    with pytest.raises(InvalidLambda):
        build_encoder(q, ext, {((1, 3), (0, 0, 0)): 1.0})
    # all weight on the order that is dead for control |1>
    lopsided = {((1, 2), idx): 1.0 for idx in np.ndindex(*dims)}
    enc = build_encoder(q, ext, lopsided)
    with pytest.raises(DecoderSingular):
        build_decoder(q, enc)


@pytest.mark.parametrize("name", ["switch", "grenoble"])
def test_finegraining_identity(name):
    q = quantum_switch() if name == "switch" else grenoble(PSI)
    ext, enc, dec = pipeline(q)
    report = verify_finegraining(q, enc, dec)
    assert report.choi_deviation <= 1e-9
    assert report.encoder_deviation <= 1e-12
    assert report.decoder_gram_deviation <= 1e-10


def test_photonic_finegraining_and_limits():
    q = quantum_switch()
    ext, enc, dec = pipeline(q, photonic_extension)
    assert verify_finegraining(q, enc, dec).choi_deviation <= 1e-9
    with pytest.raises(UnsupportedExtension):
        build_encoder(grenoble(PSI), photonic_extension(grenoble(PSI), truncation=1))
    with pytest.raises(UnsupportedExtension):
        build_encoder(grenoble(PSI), grenoble_gate_extension(PSI, truncation=1))


def test_decoder_columns_and_mismatch_component():
    q = grenoble(PSI)
    ext, enc, dec = pipeline(q)
    composed, fine = composed_operator(enc, dec)
    coarse = coarse_operator(q)
    # column by column the decoded box output is the QC-QC output
    for col in range(coarse.shape[1]):
        assert np.abs(composed[:, col] - coarse[:, col]).max() <= 1e-12
    # the mismatched branches are present in the box output and invisible to the decoder
    kept = sum(sel.conj().T @ (sel @ fine) for sel in dec.selectors.values())
    ortho = fine - kept
    assert np.linalg.norm(ortho) > 0.1
    assert np.abs(dec.matrix() @ ortho).max() <= 1e-12
    assert np.abs(kept.conj().T @ ortho).max() <= 1e-12


def test_corrupted_decoder_is_detected():
    q = grenoble(PSI)
    ext, enc, dec = pipeline(q)
    order = next(o for o, m in order_operators(q).items() if np.abs(m).max() > 0)
    dec.rescalers[order] = -dec.rescalers[order]
    assert verify_finegraining(q, enc, dec).choi_deviation > 0.1


# ---- signalling -----------------------------------------------------------------


def test_identity_channel_signals():
    vec = choi_vector(operator([("B", 2)], [("A", 2)], np.eye(2)))
    res = check_signalling(vec, SignallingQuery(("A",), ("B",)), inputs=["A"])
    assert res.witness_found and res.witness.deviation > 1e-3


def test_independent_preparation_does_not_signal(rng):
    sigma = np.array([[0.7, 0.2j], [-0.2j, 0.3]])
    choi = ComplexMatrix(SpaceSpec.of(("A", 2), ("B", 2)), SpaceSpec.of(("A", 2), ("B", 2)), np.kron(np.eye(2), sigma))
    res = check_signalling(choi, SignallingQuery(("A",), ("B",)), inputs=["A"], trials=200)
    assert not res.witness_found and res.trials == 200


def test_switch_signalling_relations():
    w = quantum_switch()
    ins = [lab for lab, _ in coarse_inputs(w)]
    vec = process_vector(w).vec
    assert check_signalling(vec, SignallingQuery((label_out(1),), ("F",)), ins).witness_found
    # nothing a party sends can come back to its own input
    assert not check_signalling(vec, SignallingQuery((label_out(1),), (label_in(1),)), ins, trials=40).witness_found


def test_switch_witnesses_transfer_to_the_box():
    q = quantum_switch()
    report = signalling_transfer(q, isometric_extension(q, truncation=1), trials=6)
    assert report.found > 0 and report.ok
    f_rows = [r for r in report.records if r.source == label_out(1) and r.sink == "F"]
    assert f_rows[0].witnesses > 0 and f_rows[0].transferred == f_rows[0].witnesses


# ---- acyclicity -------------------------------------------------------------------


@pytest.mark.parametrize("builder", [isometric_extension, photonic_extension], ids=["iso", "photonic"])
def test_extension_networks_are_acyclic(builder):
    ext = builder(grenoble(PSI), truncation=1)
    report = check_acyclicity(ext.sequence, extension_locals(ext))
    assert report.ok
    assert report.order == report.time_order
    assert report.order[:2] == ["slice1", "A1@2"] and report.order[-1] == "slice4"


def test_back_edge_is_reported_as_cycle():
    ext = isometric_extension(quantum_switch(), truncation=1)
    bad = Node("late-sender", ((label_in(1), 4),), ((label_out(1), 3),))
    report = check_acyclicity(ext.sequence, extension_locals(ext), [bad])
    assert not report.acyclic and not report.ok
    assert "late-sender" in report.cycle and "slice2" in report.cycle
    assert ("slice2", "late-sender") in report.backward_edges
