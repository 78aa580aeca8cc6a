from __future__ import annotations

import json

import numpy as np
import pytest

from qcbox import serialize
from qcbox.causalbox import CausalBox, port
from qcbox.errors import SchemaError, SchemaVersionMismatch
from qcbox.extension import isometric_extension, photonic_extension, projective_extension, verify_extension
from qcbox.fock import FockState, OccupationState, wire
from qcbox.linalg import ComplexMatrix, SpaceSpec, vector
from qcbox.qcqc import LocalOperation, born, grenoble, quantum_switch, validate

PSI = (0.6, 0.8j)


def roundtrip(obj, kind=None):
    text = serialize.dumps(obj, kind)
    back = serialize.loads(text, kind)
    assert serialize.dumps(back, kind) == text
    return back


def test_qcqc_roundtrip_is_exact():
    q = grenoble(PSI)
    back = roundtrip(q)
    assert back.ops.keys() == q.ops.keys()
    assert all(np.array_equal(back.ops[k], q.ops[k]) for k in q.ops)
    assert validate(back).ok


def test_awkward_floats_survive():
    m = np.array([[1 / 3, np.pi * 1e-300], [-0.0, 1e308 + 0.1j]])
    back = roundtrip(ComplexMatrix(SpaceSpec.of(("a", 2)), SpaceSpec.of(("b", 2)), m))
    assert np.array_equal(back.entries, m)
    assert back.col_space.labels == ("b",)


def test_extension_roundtrip_still_verifies():
    q = quantum_switch()
    for ext in (isometric_extension(q, truncation=1), photonic_extension(q, truncation=1)):
        back = roundtrip(ext)
        assert (back.box.isometry != ext.box.isometry).nnz == 0
        assert verify_extension(back, trials=5).ok
    proj = roundtrip(projective_extension(q, truncation=1))
    assert all(np.array_equal(a, b) for a, b in zip(proj.accept_in, projective_extension(q, 1).accept_in))


def test_box_local_ops_fock_and_lambdas():
    p_in, p_out = port([("x", 2)], 1, 1), port([("y", 2)], 2, 1)
    space = SpaceSpec.of((p_in.label, 3), (p_out.label, 3))
    box = roundtrip(CausalBox([p_in], [p_out], choi=ComplexMatrix(space, space, np.eye(9) / 3)))
    assert np.array_equal(box.choi.entries, np.eye(9) / 3)
    ops = roundtrip([LocalOperation(1, np.eye(2)), LocalOperation(2, 1j * np.eye(2))])
    assert born(quantum_switch(), ops, vector([("P", 4)], [0.5] * 4)) == pytest.approx(1)
    state = FockState((wire("a", 2, [1, 2]),), {OccupationState.from_counts({("a", 1, 0): 2}): 0.5j}, 2)
    assert roundtrip(state) == state
    lam = {((1, 2), (0, 1, 0)): 1.0, ((2, 1), (3, 0, 1)): 1j}
    assert roundtrip(lam, "lambdas") == lam


def test_schema_errors_point_at_the_field():
    doc = serialize.dump(quantum_switch())
    doc["ops"][2]["matrix"]["entries"].pop()
    with pytest.raises(SchemaError) as err:
        serialize.load(doc)
    assert err.value.path == "$.ops[2].matrix.entries"
    doc = serialize.dump(quantum_switch())
    doc["ops"][0]["matrix"]["entries"][1] = [1.0]
    with pytest.raises(SchemaError, match=r"\$\.ops\[0\]\.matrix\.entries\[1\]"):
        serialize.load(doc)
    doc = serialize.dump(quantum_switch())
    del doc["n_parties"]
    with pytest.raises(SchemaError, match="n_parties"):
        serialize.load(doc)


def test_version_and_kind_are_checked():
    doc = serialize.dump(quantum_switch())
    with pytest.raises(SchemaError, match="expected a 'causal_box'"):
        serialize.load(doc, "causal_box")
    doc["version"] = 99
    with pytest.raises(SchemaVersionMismatch):
        serialize.load(doc)
    with pytest.raises(SchemaError, match="invalid JSON"):
        serialize.loads("{")


def test_canonical_form_sorts_keys():
    text = serialize.dumps(quantum_switch())
    assert text == json.dumps(json.loads(text), sort_keys=True, separators=(",", ":"))
