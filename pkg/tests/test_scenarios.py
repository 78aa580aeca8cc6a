from __future__ import annotations

import numpy as np
import pytest

from qcbox.errors import AcausalLoop
from qcbox.causalbox import loop_compose, parallel_compose
from qcbox.scenarios import (
    ROUND,
    X,
    Hop,
    composed_born,
    loop_hops,
    loop_network,
    one_message,
    output_state,
    run_composability_demo,
    run_grenoble,
    run_switch,
    switch_oracle,
)


@pytest.fixture(scope="module")
def demo():
    return run_composability_demo()


def test_demo_passes_and_is_reproducible(demo):
    assert demo.overall
    assert demo.to_dict() == run_composability_demo().to_dict()


def test_loop_born_value_is_squared_trace_of_the_loop():
    # the looped parties close a single wire, so the value is |Tr U|^2 of the loop unitary
    assert composed_born(alice_loop=True) == 0
    assert composed_born(alice_loop=False) == 1


def test_message_alternates_with_depth():
    hops = loop_hops(3)
    for depth in (1, 2, 3):
        box, _ = loop_network(hops[: 4 * depth])
        rho = output_state(box, one_message(box, "in", 0))
        want = one_message(box, "out", depth % 2)
        assert np.abs(rho - np.outer(want, want)).max() <= 1e-12
        assert box.out_ports[0].time == ROUND * depth
        assert box.trace_deviation() <= 1e-10


def test_looped_network_is_a_channel_on_superpositions():
    box, _ = loop_network(loop_hops(1))
    psi = (one_message(box, "in", 0) + one_message(box, "in", 1)) / np.sqrt(2)
    out = (one_message(box, "out", 1) + one_message(box, "out", 0)) / np.sqrt(2)
    assert np.abs(output_state(box, psi) - np.outer(out, out)).max() <= 1e-12
    vac = one_message(box, "in", 0) * 0
    vac[0] = 1
    assert abs(output_state(box, vac)[0, 0] - 1) <= 1e-12


def test_same_time_wire_is_rejected():
    # a wire from an output at t=2 into an input at t=2 has no delay and is refused
    sender = Hop("W1", "A^O", "B^I", 1, np.eye(2)).box()
    receiver = Hop("Bob", "C", "B'^O", 2, np.eye(2)).box()
    with pytest.raises(AcausalLoop):
        loop_compose(parallel_compose(sender, receiver), "B^I@2", "C@2")


def test_switch_oracle_matches_hand_values():
    plus, zero = np.array([1, 1]) / np.sqrt(2), np.array([1.0, 0.0])
    z = np.diag([1, -1])
    got = switch_oracle(X, z, plus, zero)
    # Z X |0> = -|1> with control 0; X Z |0> = |1> with control 1
    want = np.array([0, 0, -1, 1]) / np.sqrt(2)
    assert np.abs(got - want).max() <= 1e-15


def test_switch_scenario():
    report = run_switch(trials=5, signalling_trials=3)
    assert report.overall, [s for s in report.steps if not s.passed]
    assert report.to_dict() == run_switch(trials=5, signalling_trials=3).to_dict()


def test_grenoble_scenario():
    report = run_grenoble(trials=5)
    assert report.overall, [s for s in report.steps if not s.passed]
    assert report.step("identity locals leave each party last with weight 1/3").passed
