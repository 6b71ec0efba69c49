import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphshapley.errors import CapacityError, ParseError, ValidationError
from graphshapley.mrf import (
    Mrf, bfs_distances, brute_force_marginal, degree_sorted_neighbors, load_mrf, save_mrf,
    shortest_path_distance,
)

import oracles
from conftest import random_graph_mrf, random_tree_mrf


def test_construction_and_accessors():
    psi = np.array([[2.0, 1.0], [0.5, 3.0]])
    m = Mrf([[0.3, 0.7], [0.5, 0.5], [1.0, 0.0]], [(0, 1), (2, 1)], psi)
    assert m.node_count == 3 and m.class_count == 2
    assert m.degree(1) == 2 and m.has_edge(1, 2) and not m.has_edge(0, 2)
    assert np.array_equal(m.psi(0, 1), psi)
    assert np.array_equal(m.psi(1, 0), psi.T)
    # declared as (2, 1), so psi(1, 2) is the transpose of the stored matrix
    assert np.array_equal(m.psi(1, 2), psi.T)
    with pytest.raises(ValidationError):
        m.psi(0, 2)


@pytest.mark.parametrize("priors,edges,msg", [
    ([[0.5, 0.6], [0.5, 0.5]], [], "sums"),
    ([[-0.1, 1.1], [0.5, 0.5]], [], "negative"),
    ([[1.0], [1.0]], [], "class count"),
    ([[0.5, 0.5], [0.5, 0.5]], [(0, 0)], "self-loop"),
    ([[0.5, 0.5], [0.5, 0.5]], [(0, 1), (1, 0)], "duplicate"),
    ([[0.5, 0.5], [0.5, 0.5]], [(0, 2)], "out of range"),
])
def test_invalid_models_rejected(priors, edges, msg):
    with pytest.raises(ValidationError, match=msg):
        Mrf(priors, edges, np.ones((2, 2)))


def test_zero_row_potential_rejected():
    with pytest.raises(ValidationError):
        Mrf([[0.5, 0.5]] * 2, [(0, 1)], [[1.0, 1.0], [0.0, 0.0]])


def test_degree_sorted_neighbors_ties_by_id():
    # star: all leaves have degree 1
    star = Mrf([[0.5, 0.5]] * 4, [(0, 3), (0, 1), (0, 2)], np.ones((2, 2)))
    assert degree_sorted_neighbors(star, 0) == [1, 2, 3]
    # node 0 sees a leaf (3), then degree-2 nodes in id order
    m = Mrf([[0.5, 0.5]] * 5, [(0, 1), (0, 2), (0, 3), (1, 4), (2, 4)], np.ones((2, 2)))
    assert degree_sorted_neighbors(m, 0) == [3, 1, 2]


def test_distances():
    m = Mrf([[0.5, 0.5]] * 5, [(0, 1), (1, 2), (2, 3)], np.ones((2, 2)))
    assert bfs_distances(m, 0) == {0: 0, 1: 1, 2: 2, 3: 3}
    assert shortest_path_distance(m, 3, 0) == 3
    assert shortest_path_distance(m, 0, 4) is None


def test_brute_force_matches_independent_enumeration():
    for seed in range(15):
        m = random_graph_mrf(seed, 6, 8, c=3)
        for node in range(m.node_count):
            want = oracles.joint_marginal(m.priors, m.edges, m.potentials, node)
            np.testing.assert_allclose(brute_force_marginal(m, node), want, atol=1e-12)


def test_brute_force_capacity():
    m = Mrf(np.full((25, 2), 0.5))
    with pytest.raises(CapacityError):
        brute_force_marginal(m, 0)


def test_round_trip(tmp_path):
    m = random_graph_mrf(3, 7, 9, c=3)
    paths = [tmp_path / "g.txt", tmp_path / "p.csv", tmp_path / "psi.json"]
    save_mrf(m, *paths)
    back = load_mrf(*paths)
    assert back.edges == m.edges
    assert np.array_equal(back.priors, m.priors)
    assert np.array_equal(back.potentials, m.potentials)


def test_round_trip_shared_potential(tmp_path):
    m = Mrf([[0.2, 0.8], [0.5, 0.5], [0.6, 0.4]], [(0, 1), (1, 2)], [[0.9, 0.1], [0.1, 0.9]])
    paths = [tmp_path / "g.txt", tmp_path / "p.csv", tmp_path / "psi.json"]
    save_mrf(m, *paths)
    assert "global" in json.loads(paths[2].read_text())
    assert np.array_equal(load_mrf(*paths).potentials, m.potentials)


def test_load_defaults_and_reverse_keys(tmp_path):
    (tmp_path / "g.txt").write_text("# comment\n0 1\n\n1 2\n")
    (tmp_path / "p.csv").write_text("node,p_0,p_1\n0,0.25,0.75\n")
    (tmp_path / "psi.json").write_text(json.dumps(
        {"global": [[1, 0.5], [0.5, 1]], "edges": {"2,1": [[1, 2], [3, 4]]}}))
    m = load_mrf(tmp_path / "g.txt", tmp_path / "p.csv", tmp_path / "psi.json")
    assert m.node_count == 3
    assert np.allclose(m.priors[1], [0.5, 0.5])
    assert np.array_equal(m.psi(2, 1), [[1, 2], [3, 4]])
    assert np.array_equal(m.psi(0, 1), [[1, 0.5], [0.5, 1]])


@pytest.mark.parametrize("name,text,lineno", [
    ("g.txt", "0 1\n1 x\n", 2),
    ("g.txt", "0 1\n\n1 2 3\n", 3),
    ("p.csv", "node,p_0,p_1\n0,0.5,0.5\n1,0.5\n", 3),
    ("p.csv", "id,a,b\n", 1),
    ("psi.json", '{"global": [[1, 2],\n [3, 4]\n', 3),
])
def test_parse_errors_carry_line_numbers(tmp_path, name, text, lineno):
    files = {"g.txt": "0 1\n1 2\n", "p.csv": "node,p_0,p_1\n", "psi.json": '{"global": [[1, 1], [1, 1]]}'}
    files[name] = text
    for k, v in files.items():
        (tmp_path / k).write_text(v)
    with pytest.raises(ParseError) as info:
        load_mrf(tmp_path / "g.txt", tmp_path / "p.csv", tmp_path / "psi.json")
    assert info.value.lineno == lineno
    assert f":{lineno}:" in str(info.value)


def test_potential_for_missing_edge(tmp_path):
    (tmp_path / "g.txt").write_text("0 1\n")
    (tmp_path / "psi.json").write_text('{"edges": {"0,2": [[1, 1], [1, 1]]}}')
    with pytest.raises(ValidationError):
        load_mrf(tmp_path / "g.txt", None, tmp_path / "psi.json")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_brute_force_is_a_distribution(seed):
    m = random_tree_mrf(seed, n=5)
    for node in range(m.node_count):
        b = brute_force_marginal(m, node)
        assert np.all(b >= 0) and abs(b.sum() - 1) < 1e-12
