"""Exact tree enumeration against hand-computed values."""

import pytest

import nccmc.oracle as oracle
from nccmc.oracle import (
    TreeSizeError,
    enumerate_atoms,
    exact_components,
    exact_delta,
    exact_total_variance,
)
from nccmc.process_models import load_tree
from nccmc.stopping_rules import FixedDateRule, TreeRule


def symmetric_tree(high):
    return load_tree({"root": {"payoff": 1.0, "children": [
        {"prob": 0.5, "payoff": high}, {"prob": 0.5, "payoff": 0.0}]}})


def test_symmetric_one_period_is_fair():
    tree = symmetric_tree(2.0)
    assert exact_delta(tree, FixedDateRule(0), FixedDateRule(1)) == pytest.approx(0.0, abs=1e-15)


def test_one_period_hand_values(tree1):
    # stop-now value 1 vs continuation mean 1.5; trunk information is
    # trivial so all variance is conditional
    A, B = FixedDateRule(0), FixedDateRule(1)
    assert exact_delta(tree1, A, B) == pytest.approx(-0.5, abs=1e-15)
    v1, v2 = exact_components(tree1, A, B)
    assert v1 == pytest.approx(0.0, abs=1e-15)
    assert v2 == pytest.approx(2.25, abs=1e-15)


def test_two_period_hand_values(tree2, tree2_rules):
    A, B = tree2_rules
    # atom at node 0 (p=0.6): diffs {-2, +1} -> mean -0.5, var 2.25;
    # atom at node 1 (p=0.4): diffs {+1.5, -0.5} at odds 3:7 -> mean 0.1, var 0.84
    assert exact_delta(tree2, A, B) == pytest.approx(-0.26, abs=1e-12)
    v1, v2 = exact_components(tree2, A, B)
    assert v1 == pytest.approx(0.0864, abs=1e-12)
    assert v2 == pytest.approx(1.686, abs=1e-12)


def test_equal_rules_have_no_difference(tree2):
    rule = TreeRule(tree2, ["0"])
    assert exact_delta(tree2, rule, rule) == 0.0
    assert exact_components(tree2, rule, rule) == (0.0, 0.0)


@pytest.mark.parametrize("labels_a,labels_b", [
    (["0"], ["1"]),
    (["0", "1"], []),
    ([], ["1"]),
    (["root"], ["0", "1"]),
])
def test_variance_decomposition(tree2, labels_a, labels_b):
    A = TreeRule(tree2, labels_a)
    B = TreeRule(tree2, labels_b)
    v1, v2 = exact_components(tree2, A, B)
    total = exact_total_variance(tree2, A, B)
    assert v1 + v2 == pytest.approx(total, rel=1e-10, abs=1e-12)


def test_atom_probabilities_sum_to_one(tree2, tree2_rules):
    atoms = enumerate_atoms(tree2, *tree2_rules)
    assert sum(a.probability for a in atoms) == pytest.approx(1.0, abs=1e-12)
    assert all(a.S in (-1, 0, 1) for a in atoms)


def test_coinciding_atom_carries_no_variance(tree2):
    A = TreeRule(tree2, ["0"])
    B = TreeRule(tree2, ["0", "1"])
    atoms = enumerate_atoms(tree2, A, B)
    for a in atoms:
        if a.S == 0:
            assert a.conditional_mean == 0.0 and a.conditional_var == 0.0


def test_oversized_tree_rejected(tree2, tree2_rules, monkeypatch):
    monkeypatch.setattr(oracle, "MAX_PATHS", 3)
    with pytest.raises(TreeSizeError):
        exact_delta(tree2, *tree2_rules)
