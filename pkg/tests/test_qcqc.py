from __future__ import annotations

import numpy as np
import pytest

from qcbox.errors import DimMismatch, IncompleteQcQc
from qcbox.qcqc import (
    FUTURE,
    START,
    LocalOperation,
    QcQc,
    assemble_slot_isometry,
    born,
    canonical_labels,
    control_states,
    fixed_order_chain,
    future_vector,
    grenoble,
    krausiso_deviations,
    orders,
    process_vector,
    quantum_switch,
    validate,
)

from conftest import random_isometry, random_unitary

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1, -1]).astype(complex)


def locals_of(*mats):
    return [LocalOperation(k + 1, m) for k, m in enumerate(mats)]


def grenoble_oracle(psi, A):
    """Path sum written out by hand: entry (out, alpha3, last party) of the future ancilla."""
    out = np.zeros((2, 2, 3), dtype=complex)
    psi = np.asarray(psi, dtype=complex) / np.sqrt(3)
    for k1 in (1, 2, 3):
        first = A[k1 - 1] @ psi
        for bit in (0, 1):
            k2 = (k1 - 1 + 1 + bit) % 3 + 1
            k3 = 6 - k1 - k2
            second = A[k2 - 1][:, bit] * first[bit]
            for j in (0, 1):
                out[:, j ^ bit, k3 - 1] += A[k3 - 1][:, j] * second[j]
    return out.reshape(-1)


def test_control_state_enumeration():
    assert len(control_states(3, 1)) == 1
    assert len(control_states(3, 2)) == 3
    assert len(control_states(3, 3)) == 6
    assert len(control_states(3, 4)) == 3


@pytest.mark.parametrize("factory", [grenoble, quantum_switch])
def test_builtins_validate(factory):
    report = validate(factory())
    assert report.ok
    assert report.krausiso_cross <= 1e-12
    assert report.krausiso_diag <= 1e-12


def test_krausiso_agrees_with_assembled_map(rng):
    q = grenoble(random_unitary(rng, 2)[:, 0])
    for n in range(1, 5):
        v = assemble_slot_isometry(q, n).entries
        cross, diag = krausiso_deviations(q, n)
        assert np.abs(v.conj().T @ v - np.eye(v.shape[1])).max() <= 1e-12
        assert max(cross, diag) <= 1e-12


def test_missing_operator_raises_incomplete():
    q = quantum_switch()
    ops = dict(q.ops)
    del ops[(frozenset(), 1, 2)]
    broken = QcQc(2, q.dims, q.past_dim, q.future_dim, q.ancilla_dims, ops)
    with pytest.raises(IncompleteQcQc):
        assemble_slot_isometry(broken, 2)
    assert not validate(broken).ok


def test_wrong_operator_shape_raises():
    with pytest.raises(DimMismatch):
        QcQc(1, ((2, 2),), 1, 1, (1, 1), {(frozenset(), START, 1): np.eye(3)})


def test_single_party_process_vector_matches_hand_construction(rng):
    c0, c1 = random_isometry(rng, 3, 2), random_isometry(rng, 4, 2)
    w = process_vector(fixed_order_chain([c0, c1]))
    assert w.vec.space.labels == tuple(canonical_labels(1))
    expect = np.zeros((2, 3, 2, 4, 2), dtype=complex)
    for p in range(2):
        for i in range(3):
            for o in range(2):
                for f in range(4):
                    expect[p, i, o, f, 0] = c0[i, p] * c1[f, o]
    assert np.abs(w.vec.entries - expect.reshape(-1)).max() <= 1e-14


def test_order_insensitivity():
    q = grenoble((0.6, 0.8j))
    ref = process_vector(q).vec.entries
    shuffled = list(reversed(orders(3)))
    again = process_vector(q, shuffled).vec.entries
    assert np.abs(ref - again).max() <= 1e-14


def test_switch_branch_state():
    plus_zero = np.kron([1, 1], [1, 0]) / np.sqrt(2)
    out = future_vector(quantum_switch(), locals_of(X, Z), plus_zero)
    assert out.space.labels == ("F", "alphaF")
    expect = np.kron([0, 1], [-1, 1]) / np.sqrt(2)
    assert np.abs(out.entries - expect).max() <= 1e-12


def test_switch_branches_with_random_unitaries(rng):
    U, V = random_unitary(rng, 2), random_unitary(rng, 2)
    psi = random_unitary(rng, 2)[:, 0]
    for c in (0, 1):
        out = future_vector(quantum_switch(), locals_of(U, V), np.kron(np.eye(2)[c], psi))
        branch = out.tensor_view()[:, c]
        expect = V @ U @ psi if c == 0 else U @ V @ psi
        assert np.abs(branch - expect).max() <= 1e-12
        assert np.abs(out.tensor_view()[:, 1 - c]).max() <= 1e-12


def test_grenoble_matches_path_sum(rng):
    psi = random_unitary(rng, 2)[:, 0]
    A = [random_unitary(rng, 2) for _ in range(3)]
    out = future_vector(grenoble(psi), locals_of(*A), [1.0])
    assert np.abs(out.entries - grenoble_oracle(psi, A)).max() <= 1e-12
    assert abs(born(grenoble(psi), locals_of(*A), [1.0]) - 1) <= 1e-12


def test_born_matrix_route_matches_pure_route(rng):
    q = quantum_switch()
    A = [random_unitary(rng, 2) * 0.8, random_unitary(rng, 2)]
    psi = random_unitary(rng, 4)[:, 0]
    pure = future_vector(q, locals_of(*A), psi).entries
    state = born(q, locals_of(*A), psi, keep_future=True, keep_ancilla=True)
    assert np.abs(state.entries - np.outer(pure, pure.conj())).max() <= 1e-12
    traced = born(q, locals_of(*A), psi, keep_future=True)
    assert traced.row_space.labels == ("F",)
    assert abs(born(q, locals_of(*A), psi) - np.vdot(pure, pure).real) <= 1e-12


def test_born_sums_to_one_over_complete_instruments(rng):
    q = quantum_switch()
    U = random_unitary(rng, 2)
    proj = [np.diag([1, 0]) @ U, np.diag([0, 1]) @ U]
    V = random_unitary(rng, 2)
    rho = np.diag([0.3, 0.2, 0.4, 0.1]).astype(complex)
    total = sum(born(q, locals_of(p, V), rho) for p in proj)
    assert abs(total - 1) <= 1e-12


def test_fixed_order_matches_channel_composition(rng):
    c = [random_isometry(rng, 2, 2), random_isometry(rng, 3, 2), random_isometry(rng, 4, 3)]
    A = [random_unitary(rng, 2), random_unitary(rng, 3)]
    q = fixed_order_chain(c)
    assert validate(q).ok
    psi = random_unitary(rng, 2)[:, 0]
    state = born(q, locals_of(*A), psi, keep_future=True)
    direct = c[2] @ A[1] @ c[1] @ A[0] @ c[0] @ psi
    assert np.abs(state.entries - np.outer(direct, direct.conj())).max() <= 1e-10
    assert abs(born(q, locals_of(*A), psi) - 1) <= 1e-10


def test_fixed_order_three_parties_validate():
    q = fixed_order_chain([np.eye(2)] * 4)
    assert validate(q).ok
    assert q.op(frozenset({1}), 2, 3) is not None
    assert q.op(frozenset({1, 2}), 3, FUTURE) is not None


def test_born_rejects_wrong_local_dims():
    with pytest.raises(DimMismatch):
        born(quantum_switch(), locals_of(np.eye(3), np.eye(2)), np.eye(4)[0])
    with pytest.raises(DimMismatch):
        born(quantum_switch(), locals_of(np.eye(2)), np.eye(4)[0])
    with pytest.raises(DimMismatch):
        born(quantum_switch(), locals_of(np.eye(2), np.eye(2)), [1, 0])
