import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from passivnet.errors import DimensionError, GraphError
from passivnet.network import (CouplingGraph, DiscreteSubsystem, NetworkModel, assemble_global, block_diag_gains,
                               build_laplacian, compute_UW, expand_laplacian)


def scalar(a, b=1.0, f=0.1):
    return DiscreteSubsystem([[a]], [[b]], [[f]], [[1.0]])


def test_subsystem_dimension_checks():
    with pytest.raises(DimensionError):
        DiscreteSubsystem(np.eye(2), np.ones((3, 1)), np.ones((2, 1)), np.ones((1, 2)))
    with pytest.raises(DimensionError):
        DiscreteSubsystem(np.eye(2), np.ones((2, 1)), np.ones((2, 2)), np.ones((1, 2)))


def test_graph_rejects_bad_edges():
    with pytest.raises(GraphError):
        CouplingGraph(2, ((0, 0, 1.0),))
    with pytest.raises(GraphError):
        CouplingGraph(2, ((0, 1, 1.0), (0, 1, 2.0)))
    with pytest.raises(GraphError):
        CouplingGraph(2, ((0, 5, 1.0),))
    with pytest.raises(GraphError):
        CouplingGraph(2, ((0, 1, -1.0),))


def test_edge_convention():
    g = CouplingGraph(3, ((0, 2, 0.7),))
    assert g.weight(2, 0) == 0.7
    assert g.weight(0, 2) == 0.0
    assert g.in_neighbours(2) == [0]
    assert not g.is_symmetric


def test_laplacian_symmetric_path():
    g = CouplingGraph.undirected(3, [(0, 1, 2.0), (1, 2, 3.0)])
    L = build_laplacian(g)
    expected = np.array([[2.0, -2.0, 0.0], [-2.0, 5.0, -3.0], [0.0, -3.0, 3.0]])
    np.testing.assert_array_equal(L, expected)


def test_laplacian_directed_diagonal_uses_all_neighbours():
    # node 1 has out-neighbour 0 only: diagonal picks up l_10 = 0
    g = CouplingGraph(2, ((1, 0, 0.5),))
    L = build_laplacian(g)
    np.testing.assert_array_equal(L, [[0.5, -0.5], [0.0, 0.0]])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 7), st.data())
def test_laplacian_rows_sum_to_zero(M, data):
    pairs = []
    for i in range(M):
        for j in range(i + 1, M):
            if data.draw(st.booleans()):
                pairs.append((i, j, data.draw(st.floats(1e-3, 1e3))))
    L = build_laplacian(CouplingGraph.undirected(M, pairs))
    assert np.abs(L.sum(axis=1)).max() <= 1e-12 * max(1.0, np.abs(L).max())
    np.testing.assert_array_equal(L, L.T)


def test_expand_laplacian():
    L = np.array([[1.0, -1.0], [-1.0, 1.0]])
    Lt = expand_laplacian(L, [2, 2])
    assert Lt.shape == (4, 4)
    np.testing.assert_array_equal(Lt[:2, 2:], -np.eye(2))
    with pytest.raises(DimensionError):
        expand_laplacian(L, [1, 2])


def test_two_node_global_by_hand():
    s1 = DiscreteSubsystem([[0.9, 0.1], [0.0, 0.8]], [[0.0], [1.0]], [[0.2], [0.0]], [[1.0, 0.0]])
    s2 = DiscreteSubsystem([[0.7, 0.0], [0.3, 0.6]], [[1.0], [0.5]], [[0.1], [0.4]], [[0.0, 1.0]])
    net = NetworkModel((s1, s2), CouplingGraph.undirected(2, [(0, 1, 2.0)]))
    Ag, Bg, Cg, _ = assemble_global(net)
    # v_1 = 2 (x2_2 - x1_1), v_2 = 2 (x1_1 - x2_2)
    expected = np.array([
        [0.9 - 0.4, 0.1, 0.0, 0.4],
        [0.0, 0.8, 0.0, 0.0],
        [0.2, 0.0, 0.7, -0.2],
        [0.8, 0.0, 0.3, 0.6 - 0.8],
    ])
    np.testing.assert_allclose(Ag, expected, atol=1e-15)
    np.testing.assert_array_equal(Bg, [[0, 0], [1, 0], [0, 1], [0, 0.5]])


def test_coupling_inputs_match_laplacian():
    rng = np.random.default_rng(3)
    subs = [DiscreteSubsystem(rng.normal(size=(2, 2)), rng.normal(size=(2, 1)), rng.normal(size=(2, 1)),
                              rng.normal(size=(1, 2))) for _ in range(4)]
    g = CouplingGraph(4, ((0, 1, 0.3), (1, 0, 0.3), (1, 2, 1.5), (2, 1, 1.5), (3, 0, 0.2), (0, 3, 0.2)))
    net = NetworkModel(tuple(subs), g)
    x = rng.normal(size=net.n)
    v = np.concatenate(net.coupling_inputs(x))
    np.testing.assert_allclose(v, -net.expanded_laplacian @ net.C_global @ x, atol=1e-13)


def test_UW_slices():
    net = NetworkModel((scalar(0.5), scalar(0.6), scalar(0.7)), CouplingGraph.undirected(3, [(0, 1, 1.0)]))
    U, W, U_i, W_i = compute_UW(net)
    np.testing.assert_array_equal(U, net.expanded_laplacian @ net.C_global)
    np.testing.assert_array_equal(W, U.T)
    np.testing.assert_array_equal(U_i[2], [[0, 0, 0]])
    assert len(W_i) == 3


def test_gain_shape_checked():
    net = NetworkModel((scalar(0.5), scalar(0.6)), CouplingGraph(2))
    with pytest.raises(DimensionError):
        block_diag_gains(net, [np.zeros((1, 1))])
    with pytest.raises(DimensionError):
        block_diag_gains(net, [np.zeros((1, 2)), np.zeros((1, 1))])


def test_mismatched_output_dims():
    s2 = DiscreteSubsystem(np.eye(2), np.ones((2, 2)), np.ones((2, 2)), np.eye(2))
    with pytest.raises(DimensionError):
        NetworkModel((scalar(0.5), s2), CouplingGraph(2))


def test_empty_graph_laplacian():
    np.testing.assert_array_equal(build_laplacian(CouplingGraph(3)), np.zeros((3, 3)))


def test_two_node_laplacian_and_UW():
    g = CouplingGraph(2, ((0, 1, 2.0), (1, 0, 2.0)))
    L = build_laplacian(g)
    np.testing.assert_array_equal(L, [[2, -2], [-2, 2]])
    np.testing.assert_array_equal(expand_laplacian(L, [1, 1]), L)
    np.testing.assert_array_equal(expand_laplacian(L, [2, 2]),
                                  np.block([[2 * np.eye(2), -2 * np.eye(2)], [-2 * np.eye(2), 2 * np.eye(2)]]))
    net = NetworkModel((scalar(0.5), scalar(0.6)), g)
    U, W, _, _ = compute_UW(net)
    np.testing.assert_array_equal(U, [[2, -2], [-2, 2]])
    np.testing.assert_array_equal(W, U.T)


def test_decoupled_global_is_block_diagonal():
    s1, s2 = scalar(0.5), DiscreteSubsystem(np.diag([0.1, 0.2]), np.ones((2, 1)), np.ones((2, 1)),
                                            np.ones((1, 2)))
    net = NetworkModel((s1, s2), CouplingGraph(2))
    Ag, _, _, _ = assemble_global(net)
    np.testing.assert_array_equal(Ag, np.diag([0.5, 0.1, 0.2]))
    U, W, _, _ = compute_UW(net)
    assert not U.any() and not W.any()
    single = NetworkModel((s2,), CouplingGraph(1))
    np.testing.assert_array_equal(assemble_global(single)[0], s2.A)
