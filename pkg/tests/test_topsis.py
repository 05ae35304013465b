import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regimecast.topsis import DecisionMatrix, TopsisError, rank, standard_matrix

from reference_tables import MODELS, ORDER, arrays


def test_dominance():
    dm = DecisionMatrix(("a", "b"), ("x", "y"), [[1.0, 5.0], [2.0, 3.0]], [True, False])
    r = rank(dm)
    np.testing.assert_allclose(r.closeness, [1.0, 0.0])
    assert r.order == ("a", "b")


def test_hand_worked_three_by_two():
    X = np.array([[1.0, 2.0], [2.0, 1.0], [1.5, 1.5]])
    dm = DecisionMatrix(("p", "q", "r"), ("c1", "c2"), X, [True, True])
    # steps 1-6 written out
    norms = np.sqrt([1 + 4 + 2.25, 4 + 1 + 2.25])
    V = X / norms * 0.5
    ideal = V.min(axis=0)
    anti = V.max(axis=0)
    sp = np.sqrt(((V - ideal) ** 2).sum(1))
    sm = np.sqrt(((V - anti) ** 2).sum(1))
    expected = sm / (sp + sm)
    r = rank(dm)
    np.testing.assert_allclose(r.closeness, expected, rtol=1e-12)
    assert r.closeness[0] == pytest.approx(0.5) and r.closeness[1] == pytest.approx(0.5)
    assert r.closeness[2] == pytest.approx(0.5)
    assert min(r.closeness[:2]) <= r.closeness[2] <= max(r.closeness[:2])


def test_hand_worked_asymmetric():
    X = np.array([[1.0, 3.0], [2.0, 1.0], [1.5, 1.5]])
    r = rank(DecisionMatrix(("p", "q", "r"), ("c1", "c2"), X, [True, True]))
    V = 0.5 * X / np.sqrt([7.25, 12.25])
    sp = np.hypot(V[:, 0] - V[0, 0], V[:, 1] - V[1, 1])
    sm = np.hypot(V[:, 0] - V[1, 0], V[:, 1] - V[0, 1])
    np.testing.assert_allclose(r.closeness, sm / (sp + sm), rtol=1e-12)
    # the compromise row wins when the extremes are unbalanced
    assert r.order[0] == "r"


def test_all_equal_gives_half_and_name_order():
    r = rank(DecisionMatrix(("b", "a"), ("x",), [[1.0], [1.0]], [True]))
    np.testing.assert_allclose(r.closeness, [0.5, 0.5])
    assert r.order == ("a", "b")


def test_zero_column_rejected():
    with pytest.raises(TopsisError):
        DecisionMatrix(("a", "b"), ("x",), [[0.0], [0.0]], [True])
    with pytest.raises(TopsisError):
        DecisionMatrix(("a", "b"), ("x", "y"), [[1, 2], [3, 4]], [True, True], [0.7, 0.7])


def matrices():
    return st.integers(0, 2**32 - 1).map(np.random.default_rng).map(
        lambda rng: (rng.uniform(0.1, 10, (int(rng.integers(2, 6)), int(rng.integers(1, 8)))), rng))


@given(matrices())
@settings(max_examples=60, deadline=None)
def test_invariants(case):
    X, rng = case
    m, n = X.shape
    names = tuple(f"m{i}" for i in range(m))
    flags = rng.random(n) < 0.5
    w = rng.dirichlet(np.ones(n))
    r = rank(DecisionMatrix(names, tuple(f"c{j}" for j in range(n)), X, flags, w))
    assert ((r.closeness >= 0) & (r.closeness <= 1)).all()
    # scaling one column leaves closeness unchanged
    Y = X.copy()
    j = int(rng.integers(n))
    Y[:, j] *= rng.uniform(0.01, 100)
    r2 = rank(DecisionMatrix(names, tuple(f"c{j}" for j in range(n)), Y, flags, w))
    np.testing.assert_allclose(r2.closeness, r.closeness, rtol=1e-9, atol=1e-12)
    # permuting rows permutes closeness
    perm = rng.permutation(m)
    r3 = rank(DecisionMatrix(tuple(names[i] for i in perm), tuple(f"c{j}" for j in range(n)),
                             X[perm], flags, w))
    np.testing.assert_allclose(r3.closeness, r.closeness[perm], rtol=1e-12)


def test_ideal_row_scores_one():
    X = np.array([[1.0, 9.0], [3.0, 2.0], [2.0, 5.0]])
    r = rank(DecisionMatrix(("a", "b", "c"), ("x", "y"), X, [True, False]))
    assert r.closeness[0] == 1.0


def test_from_long_frame():
    df = pd.DataFrame({
        "alternative": ["a", "a", "b", "b"],
        "criterion": ["cost", "gain", "cost", "gain"],
        "value": [1.0, 5.0, 2.0, 3.0],
        "direction": ["minimize", "maximize", "minimize", "maximize"],
        "weight": [0.5, 0.5, 0.5, 0.5],
    })
    dm = DecisionMatrix.from_long(df)
    assert dm.alternatives == ("a", "b")
    np.testing.assert_array_equal(dm.minimize, [True, False])
    assert rank(dm).order == ("a", "b")


def test_recent_year_ranked_first_by_rnp():
    r = rank(standard_matrix(MODELS, *arrays(2023), regret_iv_minimize=False))
    assert r.order[0] == "R-NP"
    assert r.order == ORDER[2023]


def test_all_regrets_minimised_reading():
    # reading every regret column as a cost: 2021 and 2023 orderings still hold,
    # 2022 puts DNN first because of its small Case IV regret entry
    assert rank(standard_matrix(MODELS, *arrays(2021))).order == ORDER[2021]
    assert rank(standard_matrix(MODELS, *arrays(2023))).order == ORDER[2023]
    r22 = rank(standard_matrix(MODELS, *arrays(2022)))
    assert r22.order[0] == "DNN"
    np.testing.assert_allclose(r22.closeness, [0.3995, 0.6547, 0.3722], atol=1e-4)
