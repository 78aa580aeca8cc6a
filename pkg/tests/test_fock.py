from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qcbox.errors import EmbeddingMismatch, TruncationOverflow, WireMergeMismatch
from qcbox.fock import (
    FockSpace,
    FockState,
    as_dense,
    embed_vacuum,
    fock_inner,
    fock_tensor,
    from_dense,
    merge_wires,
    second_quantize,
    symmetric_product,
    vacuum,
    wire,
)

from conftest import random_isometry, random_matrix

A = wire("A", 2, [1])
E0, E1 = np.array([1, 0]), np.array([0, 1])


def test_vacuum_examples():
    v = vacuum([A])
    assert list(v.amplitudes.values()) == [1.0]
    assert fock_inner(v, v) == 1
    psi = symmetric_product([("A", 1, [0.6, 0.8])], [A])
    assert fock_inner(psi, psi) == pytest.approx(1.0)
    assert symmetric_product([], [A]).amplitudes == v.amplitudes


def test_symmetric_product_norms():
    two = symmetric_product([("A", 1, E0), ("A", 1, E0)], [A])
    (key,) = two.amplitudes
    assert key.counts == {("A", 1, 0): 2}
    assert fock_inner(two, two) == 2
    w = wire("W", 2, [1, 2])
    prod = symmetric_product([("W", 1, E0), ("W", 2, E1)], [w])
    assert fock_inner(prod, prod) == 1
    mixed = symmetric_product([("A", 1, E0), ("A", 1, E1)], [A])
    assert fock_inner(mixed, mixed) == 1
    with pytest.raises(TruncationOverflow):
        symmetric_product([("A", 1, E0)] * 4, [A], truncation=3)


def test_fock_inner_paper_examples():
    pair = symmetric_product([("A", 1, E0), ("A", 1, E1)], [A])
    psi = (1 / math.sqrt(2)) * vacuum([A]) + (1 / math.sqrt(2)) * pair
    # 1/sqrt(2) is not representable, so equality holds to the last bit of rounding only
    assert abs(fock_inner(psi, psi) - 1) <= 4 * np.finfo(float).eps
    a0 = symmetric_product([("A", 1, E0)], [A])
    a1 = symmetric_product([("A", 1, E1)], [A])
    assert fock_inner(a0, a1) == 0
    wa, wb = wire("A", 2, [1, 2]), wire("B", 2, [1, 2])
    left = fock_tensor(
        symmetric_product([("A", 1, E0), ("A", 1, E1)], [wa]),
        symmetric_product([("B", 1, E0), ("B", 2, E0)], [wb]),
    )
    right = fock_tensor(
        symmetric_product([("A", 1, E0), ("A", 2, E0)], [wa]),
        symmetric_product([("B", 1, E0), ("B", 1, E1)], [wb]),
    )
    assert fock_inner(left, right) == 0


def _random_state(rng, wires, n_msgs, trunc=3):
    state = None
    for _ in range(2):
        msgs = []
        for _ in range(n_msgs):
            w = wires[rng.integers(len(wires))]
            t = w.times.times[rng.integers(len(w.times))]
            msgs.append((w.label, t, random_matrix(rng, w.message_dim, 1).ravel()))
        s = symmetric_product(msgs, wires, trunc)
        state = s if state is None else state + s
    return state


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(0, 3))
def test_exchange_symmetry_and_dense_bridge(seed, n):
    rng = np.random.default_rng(seed)
    wires = [wire("A", 2, [1, 2]), wire("B", 3, [2])]
    msgs = []
    for _ in range(n):
        w = wires[rng.integers(2)]
        msgs.append((w.label, w.times.times[-1], random_matrix(rng, w.message_dim, 1).ravel()))
    s = symmetric_product(msgs, wires)
    for perm in itertools.permutations(msgs):
        t = symmetric_product(list(perm), wires)
        assert set(t.amplitudes) == set(s.amplitudes)
        assert all(abs(t.amplitudes[k] - s.amplitudes[k]) <= 1e-12 * max(1, abs(s.amplitudes[k])) for k in s.amplitudes)
    a, b = _random_state(rng, wires, 2), _random_state(rng, wires, 2)
    dense = np.vdot(as_dense(a).entries, as_dense(b).entries)
    assert abs(dense - fock_inner(a, b)) <= 1e-12 * max(1.0, abs(dense))
    assert fock_inner(a, a).real >= 0


def test_sector_orthogonality(rng):
    wires = [wire("A", 2, [1, 2])]
    one = _random_state(rng, wires, 1)
    two = _random_state(rng, wires, 2)
    assert fock_inner(one, two) == 0
    empty = FockState(tuple(wires), {}, 3)
    assert fock_inner(empty, empty) == 0


def test_embed_vacuum(rng):
    w = wire("A", 2, [2])
    s = symmetric_product([("A", 2, [0.6, 0.8j])], [w])
    assert embed_vacuum(s, [2]).amplitudes == s.amplitudes
    e = embed_vacuum(s, [2, 4])
    assert e.wires[0].times.times == (2, 4)
    assert e.amplitudes == s.amplitudes
    assert fock_inner(e, e) == pytest.approx(fock_inner(s, s))
    with pytest.raises(EmbeddingMismatch):
        embed_vacuum(s, [3, 4])


def test_merge_wires(rng):
    a, b = wire("a", 1, [1, 2]), wire("b", 1, [1, 2])
    merged, reidx = merge_wires(a, b)
    assert merged.message_dim == 2
    wires = [a, b]
    s = _random_state(rng, wires, 2)
    m = reidx(s)
    assert abs(fock_inner(m, m) - fock_inner(s, s)) < 1e-12
    back = reidx.split(m)
    assert back.amplitudes == s.amplitudes
    with pytest.raises(WireMergeMismatch):
        merge_wires(a, wire("c", 1, [1]))


def test_as_dense_examples():
    v = as_dense(vacuum([A]))
    assert v.entries[0] == 1 and np.count_nonzero(v.entries) == 1
    two = symmetric_product([("A", 1, E0), ("A", 1, E0)], [A])
    d = as_dense(two).entries
    assert np.count_nonzero(d) == 1 and d[np.flatnonzero(d)[0]] == pytest.approx(math.sqrt(2))
    s = (0.3 * vacuum([A])) + symmetric_product([("A", 1, [0.1, 0.5j]), ("A", 1, [0.2, 1])], [A])
    back = from_dense(as_dense(s), [A], 3)
    assert all(abs(back.amplitudes[k] - s.amplitudes[k]) < 1e-15 for k in s.amplitudes)


def test_fock_space_dimensions_and_order():
    fs = FockSpace(range(3), 2)
    assert fs.dim == 1 + 3 + 6
    assert fs.occupied(0) == () and list(fs.message_counts[:4]) == [0, 1, 1, 1]


def _oracle_second_quantization(v, n_in, n_out, trunc):
    """Symmetric-subspace oracle: restrict V^{(x)m} to symmetrised basis vectors."""
    fin, fout = FockSpace(range(n_in), trunc), FockSpace(range(n_out), trunc)
    out = np.zeros((fout.dim, fin.dim), dtype=complex)

    def sym_vec(occ, n):
        m = len(occ)
        if m == 0:
            return np.ones(1)
        vec = np.zeros(n**m, dtype=complex)
        for perm in set(itertools.permutations(occ)):
            e = np.ones(1)
            for j in perm:
                e = np.kron(e, np.eye(n)[j])
            vec += e
        return vec / np.linalg.norm(vec)

    for ci in range(fin.dim):
        occ = fin.occupied(ci)
        m = len(occ)
        vm = np.ones((1, 1))
        for _ in range(m):
            vm = np.kron(vm, v)
        image = vm @ sym_vec(occ, n_in)
        for ri in range(fout.dim):
            if len(fout.occupied(ri)) == m:
                out[ri, ci] = np.vdot(sym_vec(fout.occupied(ri), n_out), image)
    return out


@pytest.mark.parametrize("n_in,n_out", [(2, 2), (2, 3), (3, 4)])
def test_second_quantize_matches_symmetric_oracle(rng, n_in, n_out):
    v = random_matrix(rng, n_out, n_in)
    gamma = second_quantize(v, FockSpace(range(n_in), 3), FockSpace(range(n_out), 3)).toarray()
    oracle = _oracle_second_quantization(v, n_in, n_out, 3)
    assert np.abs(gamma - oracle).max() < 1e-10


def test_second_quantize_preserves_isometry(rng):
    v = random_isometry(rng, 5, 3)
    g = second_quantize(v, FockSpace(range(3), 3), FockSpace(range(5), 3)).toarray()
    assert np.abs(g.conj().T @ g - np.eye(g.shape[1])).max() < 1e-12
