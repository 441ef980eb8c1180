import numpy as np
import pytest
from scipy import stats

from privcgd.data import DataError, DataMatrix
from privcgd.datasets import (
    BayesNetSpec,
    SemSpec,
    SpecError,
    chain_sem,
    dumps_csv,
    load_csv,
    load_network,
    loads_csv,
    parse_bayesnet,
    sample_bayesnet,
    sample_sem,
    shipped_networks,
    write_csv,
)


def test_csv_shape():
    data = loads_csv("a,b,c,d\n1,2,3,4\n5,6,7,8\n")
    assert (data.n, data.d) == (2, 4)
    assert data.names == ["a", "b", "c", "d"]


def test_csv_missing_cell_names_the_line():
    with pytest.raises(DataError, match="line 3"):
        loads_csv("a,b\n1,2\n3,\n")
    with pytest.raises(DataError, match="line 2"):
        loads_csv("a,b\n1,2,3\n")
    with pytest.raises(DataError, match="line 1"):
        loads_csv("")


def test_csv_categorical_codes():
    data = loads_csv("x,y\nlow,1\nhigh,2\nlow,3\n")
    assert list(data.values[:, 0]) == [0, 1, 0]
    assert data.categories == {"x": ["low", "high"]}


def test_csv_round_trip(tmp_path):
    X = np.random.default_rng(0).standard_normal((20, 3))
    X[:, 2] = np.round(X[:, 2])
    data = DataMatrix(X, ["p", "q", "r"])
    path = tmp_path / "d.csv"
    write_csv(data, path)
    back = load_csv(path)
    assert back.names == data.names
    assert np.array_equal(back.values, data.values)
    assert dumps_csv(back) == dumps_csv(data)


def test_sem_slope():
    W = np.array([[0.0, 2.0], [0.0, 0.0]])
    data, edges = sample_sem(SemSpec(W, [1.0, 0.01], 10_000, seed=1))
    x1, x2 = data.values.T
    slope = np.polyfit(x1, x2, 1)[0]
    assert abs(slope - 2) <= 0.01
    assert edges.pairs == [(0, 1)]


def test_sem_reproducible_and_cyclic_rejected():
    a, _ = sample_sem(chain_sem(4, 2.0, 0.5, 100, seed=3))
    b, _ = sample_sem(chain_sem(4, 2.0, 0.5, 100, seed=3))
    assert dumps_csv(a) == dumps_csv(b)
    with pytest.raises(SpecError):
        SemSpec(np.array([[0.0, 1.0], [1.0, 0.0]]), 1.0, 10)
    with pytest.raises(SpecError):
        SemSpec(np.zeros((2, 2)), 0.0, 10)


def test_sem_permutation_invariance():
    W = np.zeros((3, 3))
    W[0, 1] = 1.5
    W[1, 2] = -1.0
    data, _ = sample_sem(SemSpec(W, 0.5, 200, seed=4, names=["a", "b", "c"]))
    perm = [2, 0, 1]
    Wp = W[np.ix_(perm, perm)]
    permuted, _ = sample_sem(SemSpec(Wp, 0.5, 200, seed=4, names=["c", "a", "b"]))
    assert np.array_equal(permuted.values, data.values[:, perm])


def test_zero_weight_sem_columns_independent():
    data, edges = sample_sem(SemSpec(np.zeros((4, 4)), 1.0, 2000, seed=5))
    assert edges.pairs == []
    p = [stats.kendalltau(data.values[:, i], data.values[:, j]).pvalue for i in range(4) for j in range(i + 1, 4)]
    assert sum(v > 0.05 for v in p) >= 5


def one_node(probs):
    return BayesNetSpec(["a"], {"a": len(probs)}, {}, {"a": np.array([probs])})


def test_bayesnet_root_marginal():
    data, _ = sample_bayesnet(one_node([0.3, 0.7]), 100_000, seed=0)
    freq = np.bincount(data.values[:, 0].astype(int), minlength=2) / 100_000
    assert np.all(np.abs(freq - [0.3, 0.7]) <= 0.01)


def test_bayesnet_deterministic_child():
    spec = parse_bayesnet("node a 3\nnode b 3\nparents b a\ncpt a 0 0.2 0.3 0.5\n"
                          "cpt b 0 1 0 0\ncpt b 1 0 1 0\ncpt b 2 0 0 1\n")
    data, edges = sample_bayesnet(spec, 1000, seed=1)
    assert np.array_equal(data.values[:, 0], data.values[:, 1])
    assert edges.pairs == [(0, 1)]


def test_v_structure_parents_factorise():
    spec = parse_bayesnet(
        "node A 2\nnode B 2\nnode C 2\nparents C A B\n"
        "cpt A 0 0.5 0.5\ncpt B 0 0.5 0.5\n"
        "cpt C 0 0.9 0.1\ncpt C 1 0.2 0.8\ncpt C 2 0.3 0.7\ncpt C 3 0.6 0.4\n"
    )
    data, edges = sample_bayesnet(spec, 100_000, seed=2)
    A, B = data.values[:, 0].astype(int), data.values[:, 1].astype(int)
    joint = np.bincount(2 * A + B, minlength=4).reshape(2, 2) / 100_000
    product = np.outer(joint.sum(axis=1), joint.sum(axis=0))
    assert 0.5 * np.abs(joint - product).sum() <= 0.01
    assert sorted(edges.undirected()) == [(0, 2), (1, 2)]


def test_bayesnet_spec_errors():
    with pytest.raises(SpecError, match="probability"):
        parse_bayesnet("node a 2\ncpt a 0 0.5 0.6\n")
    with pytest.raises(SpecError, match="cycle"):
        parse_bayesnet("node a 2\nnode b 2\nparents a b\nparents b a\n"
                       "cpt a 0 1 0\ncpt a 1 1 0\ncpt b 0 1 0\ncpt b 1 1 0\n")
    with pytest.raises(SpecError, match="line 1"):
        parse_bayesnet("bogus a\n")
    with pytest.raises(SpecError):
        parse_bayesnet("node a 2\nnode b 2\nparents b a\ncpt a 0 0.5 0.5\ncpt b 0 1 0\n")


@pytest.mark.parametrize("name", ["asia", "cancer", "earthquake", "survey"])
def test_shipped_networks(name):
    assert name in shipped_networks()
    spec = load_network(name)
    assert parse_bayesnet(spec.dumps()).dumps() == spec.dumps()
    data, edges = sample_bayesnet(spec, 5000, seed=0)
    index = {n: k for k, n in enumerate(spec.names)}
    support = sorted((index[p], index[c]) for c in spec.names for p in spec.parents[c])
    assert edges.pairs == support
    for k, node in enumerate(spec.names):
        assert data.values[:, k].max() < spec.cardinality[node]
    again, _ = sample_bayesnet(spec, 5000, seed=0)
    assert np.array_equal(again.values, data.values)


def test_unknown_network():
    with pytest.raises(SpecError, match="available"):
        load_network("nope")
