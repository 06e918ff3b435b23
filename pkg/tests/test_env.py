import numpy as np
import pytest
from scipy import integrate, stats

from auction_forge import env
from auction_forge.env import SETTINGS, get_setting


def test_setting_table():
    shapes = {k: (s.n, s.m, s.context) for k, s in SETTINGS.items()}
    assert shapes["A"] == (3, 1, "discrete")
    assert (SETTINGS["A"].bidder_domain, SETTINGS["A"].item_domain) == (5, 1)
    assert shapes["D"] == (2, 5, "discrete")
    assert (SETTINGS["D"].bidder_domain, SETTINGS["D"].item_domain) == (10, 10)
    assert shapes["G"] == (2, 5, "continuous")
    assert shapes["I"] == (5, 10, "continuous")
    assert SETTINGS["C"].context_dim == 10


def test_unknown_setting():
    with pytest.raises(ValueError, match="unknown setting"):
        get_setting("Z")


def test_setting_a_contexts():
    x, y = env.sample_contexts(SETTINGS["A"], 2000, env.make_rng(0, "c"))
    assert set(np.unique(x)) == {1, 2, 3, 4, 5}
    assert np.all(y == 1)


def test_setting_c_contexts_in_cube():
    x, y = env.sample_contexts(SETTINGS["C"], 2000, env.make_rng(0, "c"))
    assert x.shape == (2000, 5, 10) and y.shape == (2000, 1, 10)
    assert x.min() >= -1 and x.max() <= 1


def test_setting_a_context_mean():
    x, _ = env.sample_contexts(SETTINGS["A"], 100_000 // 3 + 1, env.make_rng(3, "c"))
    assert abs(x.mean() - 3.0) < 0.02


def test_setting_a_symmetric_truncation_mean():
    spec = SETTINGS["A"]
    x = np.full((100_000, 1), 3)
    y = np.ones((100_000, 1), dtype=int)
    v = env.sample_valuations(spec.resized(1, 1), x, y, env.make_rng(1, "v"))
    assert abs(v.mean() - 0.5) < 0.005


def test_setting_c_support():
    batch = env.generate_dataset(SETTINGS["C"], 5000, seed=2)
    assert np.all(batch.v <= batch.upper_bound() + 1e-7)


def test_setting_d_mean_parameter():
    law = env.conditional_law(SETTINGS["D"], 9, 2)
    assert law.mu == pytest.approx(2 / 11)
    assert law.sd == 0.05


def test_setting_c_cdf_is_uniform():
    rng = np.random.default_rng(4)
    xi, yj = rng.uniform(-1, 1, 10), rng.uniform(-1, 1, 10)
    s = 1 / (1 + np.exp(-xi @ yj))
    for t in [0.0, 0.1, s / 2, s, 0.99, 1.0]:
        assert env.conditional_cdf(SETTINGS["C"], xi, yj, t) == pytest.approx(min(t / s, 1.0))


def test_setting_a_cdf_half_by_quadrature():
    spec = SETTINGS["A"]
    quad, _ = integrate.quad(lambda t: env.conditional_pdf(spec, 3, 1, t), 0, 0.5, epsabs=1e-12)
    assert quad == pytest.approx(0.5, abs=1e-9)
    assert env.conditional_cdf(spec, 3, 1, 0.5) == pytest.approx(0.5, abs=1e-12)


CONTEXT_CASES = [
    ("A", 1, 1, 0), ("A", 5, 1, 2), ("B", 2, 1, 0), ("B", 4, 2, 0), ("B", 4, 2, 2),
    ("D", 9, 2, 0), ("D", 1, 10, 1), ("E", 5, 5, 0), ("F", 10, 10, 4),
]


@pytest.mark.parametrize("sid,xi,yj,bidder", CONTEXT_CASES)
def test_pdf_integrates_to_one(sid, xi, yj, bidder):
    spec = SETTINGS[sid]
    law = env.conditional_law(spec, xi, yj, bidder)
    total, _ = integrate.quad(law.pdf, 0, 1, epsabs=1e-12, epsrel=1e-12, limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)
    assert law.cdf(0.0) == 0.0 and law.cdf(1.0) == pytest.approx(1.0, abs=1e-12)
    grid = np.linspace(0, 1, 501)
    assert np.all(np.diff(law.cdf(grid)) >= 0)


@pytest.mark.parametrize("sid", ["C", "G", "H", "I"])
def test_continuous_pdf_integrates_to_one(sid):
    rng = np.random.default_rng(7)
    law = env.conditional_law(SETTINGS[sid], rng.uniform(-1, 1, 10), rng.uniform(-1, 1, 10))
    total, _ = integrate.quad(law.pdf, 0, 1, points=[law.support[1]], epsabs=1e-12)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_unsupported_law():
    bogus = env.SettingSpec("Q", 1, 1, "discrete", "mystery")
    with pytest.raises(ValueError):
        env.conditional_cdf(bogus, 1, 1, 0.5)


def test_reproducible_bit_exact():
    a = env.generate_dataset(SETTINGS["E"], 300, seed=11)
    b = env.generate_dataset(SETTINGS["E"], 300, seed=11)
    c = env.generate_dataset(SETTINGS["E"], 300, seed=12)
    assert a.v.tobytes() == b.v.tobytes() and np.array_equal(a.x, b.x)
    assert not np.array_equal(a.v, c.v)


@pytest.mark.parametrize("sid", sorted(SETTINGS))
def test_support_containment(sid):
    spec = SETTINGS[sid]
    count = max(1, 100_000 // (spec.n * spec.m))
    batch = env.generate_dataset(spec, count, seed=5)
    assert batch.v.min() >= 0
    assert np.all(batch.v <= batch.upper_bound() + 1e-6)
    assert np.all(np.isfinite(batch.v))


@pytest.mark.parametrize("sid,xi,yj,bidder", [("A", 2, 1, 0), ("B", 3, 2, 1), ("D", 4, 7, 0), ("B", 5, 1, 2)])
def test_empirical_cdf_ks(sid, xi, yj, bidder):
    spec = SETTINGS[sid]
    n = bidder + 1
    count = 100_000
    x = np.full((count, n), xi)
    y = np.full((count, 1), yj)
    v = env.sample_valuations(spec.resized(n, 1), x, y, env.make_rng(9, "ks"))[:, bidder, 0]
    law = env.conditional_law(spec, xi, yj, bidder)
    stat = stats.kstest(v.astype(np.float64), law.cdf).statistic
    assert stat < 0.01


def test_continuous_ks():
    spec = SETTINGS["C"]
    rng = np.random.default_rng(0)
    xi, yj = rng.uniform(-1, 1, 10).astype(np.float32), rng.uniform(-1, 1, 10).astype(np.float32)
    count = 100_000
    x = np.broadcast_to(xi, (count, 1, 10))
    y = np.broadcast_to(yj, (count, 1, 10))
    v = env.sample_valuations(spec.resized(1, 1), x, y, env.make_rng(3, "ks"))[:, 0, 0]
    law = env.conditional_law(spec, xi, yj)
    assert stats.kstest(v.astype(np.float64), law.cdf).statistic < 0.01


@pytest.mark.parametrize("sid", ["A", "G"])
def test_dataset_file_roundtrip(tmp_path, sid):
    batch = env.generate_dataset(SETTINGS[sid], 64, seed=7)
    path = tmp_path / "d.bin"
    env.save_dataset(batch, path)
    back = env.load_dataset(path)
    assert back.spec == batch.spec
    assert np.array_equal(back.x, batch.x) and np.array_equal(back.y, batch.y)
    assert back.v.tobytes() == batch.v.tobytes()
    env.save_dataset(back, tmp_path / "e.bin")
    assert (tmp_path / "e.bin").read_bytes() == path.read_bytes()
    text = env.dataset_csv(batch)
    assert len(text.strip().splitlines()) == 65


def test_resize_validation():
    with pytest.raises(ValueError):
        SETTINGS["D"].resized(0, 5)
    assert SETTINGS["D"].resized(2, 7).m == 7
