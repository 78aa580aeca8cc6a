from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from qcbox.causalbox import (
    CausalBox,
    SequenceRep,
    Slice,
    check_causality,
    comp_link_deviation,
    from_sequence,
    loop_compose,
    parallel_compose,
    port,
    restrict_truncation,
    verify_comp_is_link,
)
from qcbox.errors import AcausalLoop, DimMismatch, InvalidSlice, LabelCollision
from qcbox.fock import second_quantize
from qcbox.linalg import ComplexMatrix, SpaceSpec, choi_matrix, choi_vector, link_vectors, operator

from conftest import random_isometry


def identity_choi(labels_in, labels_out, d):
    v = np.eye(d).reshape(-1)
    space = SpaceSpec.of((labels_in, d), (labels_out, d))
    return ComplexMatrix(space, space, np.outer(v, v.conj()))


def delayed_identity(label="X", d=2, t=1, truncation=2):
    a, b = port([(label, d)], t, truncation), port([(label, d)], t + 1, truncation)
    return from_sequence(SequenceRep((Slice((a,), (b,), sp.identity(a.dim)),)))


def random_channel_choi(rng, d_in, d_out, n_kraus, lab_in, lab_out):
    stacked = random_isometry(rng, d_out * n_kraus, d_in)
    kraus = [stacked[i * d_out:(i + 1) * d_out] for i in range(n_kraus)]
    return choi_matrix([operator([(lab_out, d_out)], [(lab_in, d_in)], k) for k in kraus]), kraus


def test_delayed_identity_choi_and_causality():
    box = delayed_identity()
    d = box.in_dim
    assert box.choi.max_abs_diff(identity_choi("X@1", "X@2", d)) == 0
    report = check_causality(box)
    assert report.ok and set(report.deviations) == {1, 2}


def test_two_slices_compose_to_swap():
    ab1 = port([("A", 2), ("B", 2)], 1, 1)
    ab3 = port([("A", 2), ("B", 2)], 3, 1)
    store = Slice((ab1,), (), sp.identity(ab1.dim), mem_in=1, mem_out=ab1.dim)
    single = np.zeros((4, 4))
    for i in range(2):
        single[ab3.mode("B", i), ab1.mode("A", i)] = 1
        single[ab3.mode("A", i), ab1.mode("B", i)] = 1
    swap = second_quantize(single, ab1.space, ab3.space)
    release = Slice((), (ab3,), swap, mem_in=ab1.dim, mem_out=1)
    box = from_sequence(SequenceRep((store, release)))
    # direct oracle: the Choi matrix of the second-quantized swap
    expected = choi_matrix([operator([("A,B@3", ab3.dim)], [("A,B@1", ab1.dim)], swap.toarray())])
    assert box.choi.max_abs_diff(expected) <= 1e-14
    # link-product route: chain the two slice Choi vectors through the memory
    first = choi_vector(operator([("mem", ab1.dim)], [("A,B@1", ab1.dim)], store.matrix.toarray()))
    second = choi_vector(operator([("A,B@3", ab3.dim)], [("mem", ab1.dim)], release.matrix.toarray()))
    linked = link_vectors(first, second)
    full = box.choi_vector_full()
    assert np.abs(full.entries - linked.permute(["A,B@1", "A,B@3"]).entries).max() <= 1e-14
    assert check_causality(box).ok
    assert box.message_conservation_defect() == 0


def test_random_sequences_are_causal(rng):
    p1, p2, p3 = port([("A", 2)], 1, 1), port([("B", 2)], 2, 1), port([("C", 2)], 3, 1)
    q2, q3, q4 = port([("D", 2)], 2, 1), port([("E", 2)], 3, 1), port([("F", 2)], 4, 1)
    s1 = Slice((p1,), (q2,), random_isometry(rng, 3 * 2, 3), mem_out=2)
    s2 = Slice((p2,), (q3,), random_isometry(rng, 3 * 3, 3 * 2), mem_in=2, mem_out=3)
    s3 = Slice((p3,), (q4,), random_isometry(rng, 3 * 4, 3 * 3), mem_in=3, mem_out=4)
    box = from_sequence(SequenceRep((s1, s2, s3)))
    report = check_causality(box)
    assert report.ok, report.to_dict()
    # the Choi-backed copy of the same box gives the same verdict
    dense = CausalBox(box.in_ports, box.out_ports, choi=box.choi)
    dense_report = check_causality(dense)
    assert dense_report.ok
    assert max(abs(report.deviations[t] - dense_report.deviations[t]) for t in report.deviations) <= 1e-12


def test_acausal_map_fails_at_t3():
    x4, y3 = port([("X", 2)], 4, 1), port([("Y", 2)], 3, 1)
    box = CausalBox([x4], [y3], choi=identity_choi("X@4", "Y@3", x4.dim))
    report = check_causality(box)
    assert report.failures() == [3]
    assert report.trace_deviation <= 1e-12


def test_non_isometric_slice_rejected():
    a, b = port([("A", 2)], 1, 1), port([("A", 2)], 2, 1)
    with pytest.raises(InvalidSlice):
        from_sequence(SequenceRep((Slice((a,), (b,), 0.5 * sp.identity(3)),)))
    with pytest.raises(InvalidSlice):
        Slice((b,), (a,), sp.identity(3))


def test_loop_identity_with_delay_forwards_preparation():
    prep = delayed_identity("P", t=1)
    relay = CausalBox([port([("B", 2)], 3, 2)], [port([("D", 2)], 4, 2)],
                      choi=identity_choi("B@3", "D@4", prep.in_dim))
    joint = parallel_compose(CausalBox(prep.in_ports, prep.out_ports, choi=prep.choi), relay)
    looped = loop_compose(joint, "P@2", "B@3")
    assert [p.label for p in looped.in_ports] == ["P@1"]
    assert [p.label for p in looped.out_ports] == ["D@4"]
    assert looped.choi.max_abs_diff(identity_choi("P@1", "D@4", prep.in_dim)) <= 1e-14
    assert looped.trace_deviation() <= 1e-14
    assert check_causality(looped).ok


def test_loop_guards():
    box = CausalBox([port([("B", 2)], 1, 1)], [port([("C", 2)], 2, 1)], choi=identity_choi("B@1", "C@2", 3))
    with pytest.raises(AcausalLoop):
        loop_compose(box, "C@2", "B@1")
    wide = CausalBox([port([("B", 3)], 5, 1)], [port([("C", 2)], 2, 1)],
                     choi=ComplexMatrix(SpaceSpec.of(("B@5", 4), ("C@2", 3)), SpaceSpec.of(("B@5", 4), ("C@2", 3)),
                                        np.eye(12)))
    with pytest.raises(DimMismatch):
        loop_compose(wide, "C@2", "B@5")


def test_comp_is_link_identity():
    a = identity_choi("in", "mid", 2)
    b = identity_choi("mid", "out", 2)
    assert verify_comp_is_link(a, b)


@pytest.mark.parametrize("trial", range(10))
def test_comp_is_link_random_channels(rng, trial):
    dims = rng.integers(2, 4, size=3)
    ma, ka = random_channel_choi(rng, dims[0], dims[1], 2, "in", "mid")
    mb, kb = random_channel_choi(rng, dims[1], dims[2], 2, "mid", "out")
    assert comp_link_deviation(ma, mb) <= 1e-11
    composed = choi_matrix([
        operator([("out", dims[2])], [("in", dims[0])], b @ a) for a in ka for b in kb
    ])
    looped = loop_compose(
        ComplexMatrix(ma.relabel({"mid": "mid'"}).row_space.concat(mb.row_space),
                      ma.relabel({"mid": "mid'"}).row_space.concat(mb.row_space),
                      np.kron(ma.entries, mb.entries)),
        "mid'", "mid")
    assert looped.max_abs_diff(composed) <= 1e-11


def test_comp_is_link_pure_isometries(rng):
    va, vb = random_isometry(rng, 3, 2), random_isometry(rng, 3, 3)
    ma = choi_matrix([operator([("mid", 3)], [("in", 2)], va)])
    mb = choi_matrix([operator([("out", 3)], [("mid", 3)], vb)])
    assert verify_comp_is_link(ma, mb)


def test_parallel_with_trivial_box_and_causality():
    box = delayed_identity()
    trivial = CausalBox([], [], choi=ComplexMatrix(SpaceSpec(()), SpaceSpec(()), np.ones((1, 1))))
    combined = parallel_compose(CausalBox(box.in_ports, box.out_ports, choi=box.choi), trivial)
    assert combined.choi.max_abs_diff(box.choi) == 0
    both = parallel_compose(box, delayed_identity("Y", t=2))
    assert both.is_isometric
    assert check_causality(both).ok
    dense = parallel_compose(CausalBox(box.in_ports, box.out_ports, choi=box.choi),
                             CausalBox(*_ports(delayed_identity("Y", t=2)), choi=delayed_identity("Y", t=2).choi))
    assert both.choi.max_abs_diff(dense.choi) <= 1e-14
    with pytest.raises(LabelCollision):
        parallel_compose(box, delayed_identity())


def _ports(box):
    return box.in_ports, box.out_ports


def test_restrict_truncation():
    box = delayed_identity(truncation=2)
    full = restrict_truncation(box, 2)
    assert full.choi.max_abs_diff(box.choi) == 0
    one = restrict_truncation(box, 1)
    # block oracle: the identity on the at-most-one-message sector
    assert one.choi.max_abs_diff(identity_choi("X@1", "X@2", 3)) == 0
    other = delayed_identity("Y", t=5, truncation=2)
    lhs = restrict_truncation(parallel_compose(CausalBox(*_ports(box), choi=box.choi),
                                               CausalBox(*_ports(other), choi=other.choi)), 1)
    rhs = parallel_compose(restrict_truncation(box, 1), restrict_truncation(other, 1))
    assert lhs.choi.max_abs_diff(rhs.choi) == 0


def test_message_conservation_defect_detects_creation():
    a, b = port([("A", 2)], 1, 1), port([("A", 2)], 2, 1)
    create = np.zeros((3, 3))
    create[1, 0], create[0, 1], create[2, 2] = 1, 1, 1
    box = from_sequence(SequenceRep((Slice((a,), (b,), create),)))
    assert box.message_conservation_defect() == 1
    assert check_causality(box).ok
