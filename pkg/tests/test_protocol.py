import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dosetc.protocol import (RR, SAMPLED, TOD, NodePartition, ProtocolKind, apply_protocol,
                             contraction_violation, default_lambda, granted_node, protocol_W)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@st.composite
def scenario(draw):
    sizes = draw(st.lists(st.integers(1, 3), min_size=2, max_size=5))
    part = NodePartition.from_sizes(sizes)
    e = draw(arrays(float, part.size, elements=finite))
    s = draw(arrays(float, part.size, elements=finite))
    k = draw(st.integers(0, 10_000))
    return part, k, e, s


@pytest.mark.parametrize("tag", [SAMPLED, RR, TOD])
@given(sc=scenario())
def test_contraction_and_nonexpansion(tag, sc):
    part, k, e, s = sc
    kind = ProtocolKind(tag)
    lam = default_lambda(tag, part.n_nodes) if tag != SAMPLED else 0.37
    h = apply_protocol(kind, part, k, e)
    scale = 1.0 + float(np.abs(e).max() + np.abs(s).max())
    lhs = protocol_W(kind, part, k + 1, 1, e, h - e)
    assert lhs <= lam * protocol_W(kind, part, k, 0, e, s) + 1e-12 * scale
    lhs = protocol_W(kind, part, k, 0, s + e, np.zeros_like(s))
    assert lhs <= protocol_W(kind, part, k, 1, e, s) + 1e-12 * scale


@given(sc=scenario())
def test_sampled_data_h_zero(sc):
    part, k, e, _ = sc
    assert np.all(apply_protocol(ProtocolKind(SAMPLED), part, k, e) == 0.0)


@pytest.mark.parametrize("tag", [RR, TOD])
def test_random_contraction_samples(tag, rng):
    part = NodePartition.from_sizes([2, 3, 2])
    lam = default_lambda(tag, part.n_nodes)
    tx, up = contraction_violation(ProtocolKind(tag), part, lam, rng, n=1000)
    assert tx <= 1e-12 and up <= 1e-12


def test_sampled_contraction_any_lambda(rng):
    part = NodePartition.single(4)
    for lam in (1e-6, 0.5, 0.999):
        tx, up = contraction_violation(ProtocolKind(SAMPLED), part, lam, rng, n=200)
        assert tx <= 0.0 and up <= 1e-12


def test_tod_grants_larger_node():
    part = NodePartition.from_sizes([1, 1])
    e = np.array([3.0, 4.0])
    h = apply_protocol(ProtocolKind(TOD), part, 0, e)
    assert list(h - e) == [0.0, -4.0]


def test_tod_tie_break_lowest_index():
    part = NodePartition.from_sizes([2, 2, 2])
    e = np.array([3.0, 4.0, 0.0, 5.0, 5.0, 0.0])
    for k in range(5):
        assert granted_node(ProtocolKind(TOD), part, k, e) == 0
        assert granted_node(ProtocolKind(TOD), part, k, e.copy()) == 0


def test_rr_schedule():
    part = NodePartition.from_sizes([1, 1, 1])
    assert granted_node(ProtocolKind(RR), part, 4, np.zeros(3)) == 1   # node 2 in 1-based terms


def test_W_examples():
    kind = ProtocolKind(SAMPLED)
    part = NodePartition.single(2)
    assert protocol_W(kind, part, 0, 0, np.zeros(2), np.zeros(2)) == 0.0
    assert protocol_W(kind, part, 0, 0, np.array([3.0, 4.0]), np.zeros(2)) == 5.0


def test_tod_contraction_value():
    assert default_lambda(TOD, 4) == pytest.approx(math.sqrt(3 / 4))
    assert default_lambda(SAMPLED, 1) is None
    with pytest.raises(ValueError):
        default_lambda(RR, 1)


def test_partition_validation():
    with pytest.raises(ValueError):
        NodePartition((0, 2, 2))
    with pytest.raises(ValueError):
        NodePartition((1, 3))
    with pytest.raises(ValueError):
        ProtocolKind("token-ring")
