import numpy as np
import pytest

from auction_forge import env
from auction_forge import tensor as T
from auction_forge.evaluator import CSV_COLUMNS, RegretReport, evaluate, out_of_setting_eval, revenue
from auction_forge.mechanisms import ConstantAllocation, FirstPrice, SecondPrice
from auction_forge.myerson import ItemWiseMyerson
from auction_forge.net import MechanismNet, NetConfig

TINY = dict(embed_dim=4, d=8, d_h=8, heads=2, conv_hidden=8)


@pytest.fixture(scope="module")
def data_a():
    return env.generate_dataset(env.SETTINGS["A"], 60, seed=7)


def test_constant_stub_has_no_revenue_or_regret(data_a):
    rep = evaluate(ConstantAllocation(), data_a, restarts=3, steps=5)
    assert rep.revenue == 0.0
    assert rep.mean_regret == 0.0


def test_second_price_is_truthful(data_a):
    rep = evaluate(SecondPrice(), data_a, restarts=5, steps=20)
    assert rep.mean_regret < 1e-4
    assert max(rep.per_bidder_regret) < 1e-4


def test_first_price_has_regret(data_a):
    rep = evaluate(FirstPrice(), data_a, restarts=3, steps=20)
    assert rep.mean_regret > 0.01


def test_regret_monotone_in_restarts_and_steps(data_a):
    fp = FirstPrice()
    r = [evaluate(fp, data_a, restarts=k, steps=10).mean_regret for k in (1, 2, 4)]
    s = [evaluate(fp, data_a, restarts=2, steps=k).mean_regret for k in (0, 5, 20)]
    assert r == sorted(r)
    assert s == sorted(s)


def test_revenue_matches_direct_computation(data_a):
    direct = SecondPrice()(T.Tensor(data_a.v), data_a.x, data_a.y).p.data.astype(np.float64).sum(axis=1).mean()
    assert revenue(SecondPrice(), data_a, batch_size=7) == pytest.approx(direct, rel=1e-6)
    assert evaluate(SecondPrice(), data_a, restarts=1, steps=0).revenue == pytest.approx(direct, rel=1e-6)


def test_deterministic_and_batch_independent_revenue(data_a):
    a = evaluate(FirstPrice(), data_a, restarts=2, steps=5, seed=3)
    b = evaluate(FirstPrice(), data_a, restarts=2, steps=5, seed=3)
    assert a == b


def test_myerson_regret_is_negligible():
    spec = env.SETTINGS["A"]
    data = env.generate_dataset(spec, 100, seed=1)
    rep = evaluate(ItemWiseMyerson(spec), data, restarts=5, steps=3)
    assert rep.mean_regret < 1e-3


def test_out_of_setting_same_size_matches_in_setting():
    spec = env.SETTINGS["D"]
    net = MechanismNet(NetConfig.for_setting(spec, **TINY), seed=1)
    kw = dict(restarts=2, steps=3, seed=5)
    oos = out_of_setting_eval(net, spec, spec.n, spec.m, 20, data_seed=9, **kw)
    ins = evaluate(net, env.generate_dataset(spec, 20, seed=9), **kw)
    assert oos == ins


def test_out_of_setting_other_sizes_run():
    spec = env.SETTINGS["D"]
    net = MechanismNet(NetConfig.for_setting(spec, **TINY), seed=1)
    for m in (3, 7):
        rep = out_of_setting_eval(net, spec, spec.n, m, 10, data_seed=2, restarts=1, steps=2)
        assert rep.m == m and len(rep.per_bidder_regret) == spec.n


def test_report_round_trip_and_csv(data_a):
    rep = evaluate(FirstPrice(), data_a, restarts=1, steps=2, tag="first_price")
    assert RegretReport.from_json(rep.to_json()) == rep
    lines = rep.to_csv().splitlines()
    assert lines[0].split(",") == CSV_COLUMNS
    assert lines[1].startswith("A,first_price,3,")


@pytest.mark.parametrize("restarts,steps", [(0, 10), (1, -1)])
def test_bad_protocol_rejected(data_a, restarts, steps):
    with pytest.raises(ValueError):
        evaluate(SecondPrice(), data_a, restarts=restarts, steps=steps)
