import json
import math

import numpy as np
import pytest
from scipy.special import expit

from zico.errors import ParameterError
from zico.graph import DagGraph, generate_ba, generate_er, split_support
from zico.simulate import (DropoutConfig, SimParams, apply_dropout, logic_sample, parse_sign,
                           retention_probability, sample_params, sign_ranges, write_simulation)


def root_params(gamma=1.5, delta=1.5, r=5.0, family="zinb", zero_link="count"):
    g = DagGraph.from_edges(1, [])
    z = np.zeros((1, 1))
    return SimParams(g, z, z, np.array([gamma]), np.array([delta]), np.array([r]),
                     family=family, zero_link=zero_link)


def test_root_nonzero_fraction_matches_closed_form():
    n = 100_000
    x = logic_sample(root_params(), n, seed=0).x[:, 0]
    pi, mu, r = expit(1.5), math.exp(1.5), 5.0
    nb_zero = (r / (r + mu)) ** r
    expected = pi * (1 - nb_zero)
    se = math.sqrt(expected * (1 - expected) / n)
    assert abs((x > 0).mean() - expected) <= 4 * se


def test_count_component_mean():
    # with gamma huge there are no structural zeros, so the mean is mu
    x = logic_sample(root_params(gamma=50.0), 100_000, seed=1).x[:, 0]
    assert abs(x.mean() / math.exp(1.5) - 1) <= 0.02
    # NB variance mu + mu^2 / r
    mu = math.exp(1.5)
    assert abs(x.var() / (mu + mu * mu / 5) - 1) <= 0.05


def test_zip_root_is_poisson():
    x = logic_sample(root_params(gamma=50.0, family="zip"), 50_000, seed=2).x[:, 0]
    assert abs(x.var() / x.mean() - 1) <= 0.05


def test_all_structural_zeros():
    assert np.all(logic_sample(root_params(gamma=-800.0), 1000, seed=0).x == 0)
    assert np.all(logic_sample(root_params(gamma=800.0, zero_link="structural"), 1000, seed=0).x == 0)


def test_structural_link_flips_zero_probability():
    n = 50_000
    a = logic_sample(root_params(gamma=1.0), n, seed=3).x
    b = logic_sample(root_params(gamma=-1.0, zero_link="structural"), n, seed=3).x
    assert abs((a > 0).mean() - (b > 0).mean()) <= 0.01
    with pytest.raises(ParameterError):
        sample_params(DagGraph.from_edges(2, []), zero_link="dropout")


def test_reduced_families_have_no_structural_zeros():
    n = 100_000
    x = logic_sample(root_params(gamma=-800.0, family="nb"), n, seed=5).x[:, 0]
    mu, r = math.exp(1.5), 5.0
    expected = (r / (r + mu)) ** r
    assert abs((x == 0).mean() - expected) <= 4 * math.sqrt(expected * (1 - expected) / n)
    x = logic_sample(root_params(gamma=-800.0, family="poisson"), n, seed=5).x[:, 0]
    assert abs((x == 0).mean() - math.exp(-mu)) <= 0.003
    g = generate_er(6, 0.5, seed=1)
    assert np.all(sample_params(g, family="nb", seed=1).true_w0 == 0)


@pytest.mark.parametrize("sign", ["++", "--", "+-", "-+"])
def test_sign_ranges_respected(sign):
    g = generate_er(15, 0.3, seed=4)
    sp = sample_params(g, sign, seed=4)
    adj = g.adjacency().astype(bool)
    (lo0, hi0), (lo1, hi1) = sign_ranges(sign)
    assert np.all((sp.true_w0[adj] >= lo0) & (sp.true_w0[adj] <= hi0))
    assert np.all((sp.true_w1[adj] >= lo1) & (sp.true_w1[adj] <= hi1))
    assert np.all(sp.true_w0[~adj] == 0) and np.all(sp.true_w1[~adj] == 0)


def test_parse_sign_forms():
    assert parse_sign("(+,-)") == "+-"
    assert parse_sign(("-", "+")) == "-+"
    with pytest.raises(ParameterError):
        parse_sign("+")


def test_empty_graph_and_masks():
    g = DagGraph.from_edges(4, [])
    sp = sample_params(g, seed=0)
    assert np.all(sp.true_w0 == 0) and np.all(sp.true_w1 == 0)
    g = generate_ba(12, 2, seed=1)
    masks = split_support(g, 0.0, seed=1)
    sp = sample_params(g, "++", masks=masks, seed=1)
    assert not np.any((sp.true_w0 != 0) & (sp.true_w1 != 0))
    assert np.array_equal(sp.true_w0 != 0, masks.m0)


def test_parents_drive_children():
    g = DagGraph.from_edges(2, [(0, 1)])
    sp = sample_params(g, "+-", seed=0)
    x = logic_sample(sp, 20_000, seed=0).x
    hi, lo = x[:, 0] >= 3, x[:, 0] == 0
    # negative W1: large parents shrink the child's positive counts
    assert x[hi & (x[:, 1] > 0), 1].mean() < x[lo & (x[:, 1] > 0), 1].mean()


def test_sampling_is_deterministic_and_validated():
    g = generate_er(8, 0.3, seed=2)
    sp = sample_params(g, seed=2)
    assert np.array_equal(logic_sample(sp, 50, seed=9).x, logic_sample(sp, 50, seed=9).x)
    with pytest.raises(ParameterError):
        logic_sample(sp, 0)
    with pytest.raises(ParameterError):
        sample_params(g, family="negbin")


def test_dropout_properties():
    rng = np.random.default_rng(0)
    x = rng.poisson(3.0, size=(200, 10))
    y = apply_dropout(x, DropoutConfig(1.0, 65.0, seed=1)).x
    assert np.all((y == 0) | (y == x))
    assert np.all(y <= x)
    z = np.log1p(x.astype(float))
    m = np.percentile(z, 65)
    p = retention_probability(x, 1.0, 65.0)
    at_m = np.isclose(z, m)
    if at_m.any():
        assert np.allclose(p[at_m], 0.5)
    step = retention_probability(x, math.inf, 65.0)
    assert set(np.unique(step)) <= {0.0, 0.5, 1.0}
    assert np.all(step[z > m] == 1.0) and np.all(step[z < m] == 0.0)
    steep = retention_probability(x, 1e6, 65.0)
    assert np.allclose(steep[~at_m], step[~at_m])
    a = apply_dropout(x, DropoutConfig(seed=4)).x
    assert np.array_equal(a, apply_dropout(x, DropoutConfig(seed=4)).x)
    with pytest.raises(ParameterError):
        DropoutConfig(slope=0.0)
    with pytest.raises(ParameterError):
        DropoutConfig(percentile=100.0)


def test_dropout_retention_rises_with_expression():
    x = np.arange(0, 50).reshape(5, 10)
    p = retention_probability(x, 1.0, 65.0)
    flat = p.ravel()
    assert np.all(np.diff(flat) > 0)


def test_write_simulation(tmp_path):
    g = generate_er(5, 0.5, seed=0)
    sp = sample_params(g, seed=0)
    data = logic_sample(sp, 20, seed=0)
    write_simulation(tmp_path, sp, data, seed=0)
    meta = json.loads((tmp_path / "sim.json").read_text())
    assert meta["seed"] == 0 and meta["n"] == 20 and meta["zero_link"] == "count"
    assert np.allclose(np.loadtxt(tmp_path / "truth_w1.csv", delimiter=","), sp.true_w1)
    assert (tmp_path / "graph.edges").read_text().startswith("# d=5")
