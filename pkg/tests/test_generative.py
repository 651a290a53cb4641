import numpy as np
import pytest
from conftest import make_table

from flowbalance.generative import (
    CddpmConfig, CvaeConfig, CwganConfig, GeneratorRegistry, Schedule, TrainingDiverged, UnknownClass,
    generate, generative_oversample, gradient_penalty, load_model, make_config, train_cvae, train_cwgan,
    train_model,
)
from flowbalance.nn import NetSpec, Network, gaussian_kl

CENTER_A = np.array([0.25, 0.25])
CENTER_B = np.array([0.75, 0.75])


def two_blobs(n_a=500, n_b=500, seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([CENTER_A + 0.06 * rng.standard_normal((n_a, 2)),
                   CENTER_B + 0.06 * rng.standard_normal((n_b, 2))]).clip(0, 1)
    return make_table(X, np.repeat([0, 1], [n_a, n_b]), ["A", "B"])


@pytest.fixture(scope="module")
def trained():
    table = two_blobs()
    return {k: train_model(k, table, make_config(k, seed=0)) for k in ("CVAE", "CWGAN", "CDDPM")}


# --- C-VAE -------------------------------------------------------------------

def test_kl_examples_and_sign():
    assert gaussian_kl(np.zeros((3, 5)), np.zeros((3, 5)))[0] == 0.0
    assert gaussian_kl(np.ones((1, 4)), np.zeros((1, 4)))[0] == pytest.approx(0.5 * 4)
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert gaussian_kl(3 * rng.standard_normal((8, 6)), 3 * rng.standard_normal((8, 6)))[0] >= 0


def test_cvae_memorizes_single_row():
    x_star = np.array([0.2, 0.7, 0.45])
    table = make_table(np.tile(x_star, (2048, 1)), np.zeros(2048, dtype=int))
    model = train_cvae(table, CvaeConfig(epochs=200, seed=0))
    out = model.decode(np.zeros((1, model.config.latent_dim)), 0)
    assert np.abs(out[0] - x_star).max() < 0.05
    assert len(model.loss_trace) == 200 and all(np.isfinite(model.loss_trace))


def test_non_finite_loss_aborts():
    with pytest.raises(TrainingDiverged):
        train_cvae(two_blobs(50, 50), CvaeConfig(epochs=20, lr=1e12, seed=0))


# --- C-WGAN-GP ---------------------------------------------------------------

def _linear_critic(slope):
    net = Network(NetSpec((3, 1), ("identity",)))
    net.W(0)[:, 0] = [slope, 0.7, -0.4]  # last two inputs are the one-hot condition
    return net


def test_gradient_penalty_examples():
    x = np.hstack([np.random.default_rng(0).random((9, 1)), np.tile([1.0, 0.0], (9, 1))])
    assert gradient_penalty(_linear_critic(1.0), x, 1, 10.0)[0] == 0.0
    assert gradient_penalty(_linear_critic(2.0), x, 1, 10.0)[0] == pytest.approx(10.0, abs=1e-12)
    assert gradient_penalty(_linear_critic(-2.0), x, 1, 10.0)[0] == pytest.approx(10.0, abs=1e-12)


def test_gradient_penalty_nonnegative_and_input_gradient():
    rng = np.random.default_rng(1)
    net = Network(NetSpec((4, 8, 1), ("tanh", "identity"), seed=2))
    x = rng.random((6, 4))
    _, cache = net.forward(x)
    g = net.input_gradient(cache, np.ones((6, 1)))
    eps = 1e-6
    num = np.zeros_like(x)
    for i in range(6):
        for j in range(4):
            xp, xm = x.copy(), x.copy()
            xp[i, j] += eps
            xm[i, j] -= eps
            num[i, j] = (net(xp)[i, 0] - net(xm)[i, 0]) / (2 * eps)
    assert np.linalg.norm(g - num) / np.linalg.norm(num) < 1e-3
    for seed in range(10):
        assert gradient_penalty(net, np.random.default_rng(seed).random((5, 4)), 2, 10.0)[0] >= 0


def test_cwgan_config_validation():
    with pytest.raises(ValueError):
        CwganConfig(gp_weight=0.0)
    with pytest.raises(ValueError):
        CwganConfig(n_critic=0)


@pytest.mark.slow
def test_cwgan_collapses_to_single_point():
    x_star = np.array([0.3, 0.8, 0.55])
    table = make_table(np.tile(x_star, (8192, 1)), np.zeros(8192, dtype=int))
    model = train_cwgan(table, CwganConfig(seed=0))
    out = generate(model, 0, 500, seed=3)
    assert np.abs(out - x_star).max() < 0.1


# --- C-DDPM schedule ---------------------------------------------------------

def default_schedule():
    cfg = CddpmConfig()
    return Schedule.linear(cfg.steps, cfg.beta_start, cfg.resolved_beta_end)


def test_schedule_invariants():
    s = default_schedule()
    assert 0 < s.betas[0] < s.betas[-1] < 1
    assert np.all(np.diff(s.alpha_bars) < 0)
    assert s.alpha_bars[-1] < 0.05
    # sqrt(1 - 1e-4) = 0.9999499987...; the 0.99995 bound holds to first order in beta_1 only
    assert np.sqrt(s.alpha_bars[0]) == pytest.approx(1 - s.betas[0] / 2, abs=2e-9)
    assert round(float(np.sqrt(s.alpha_bars[0])), 5) >= 0.99995
    assert np.allclose(s.alpha_bars, np.cumprod(1 - s.betas), rtol=0, atol=1e-15)
    with pytest.raises(ValueError):
        Schedule.linear(10, 0.02, 0.01)


def test_posterior_variance_bounds():
    s = default_schedule()
    assert s.posterior_variance(1) == 0.0
    for t in range(2, s.steps + 1):
        assert 0 < s.posterior_variance(t) <= s.betas[t - 1]


def _within_3se(samples, mean, std):
    n = samples.size
    return (abs(samples.mean() - mean) <= 3 * std / np.sqrt(n)
            and abs(samples.std() - std) <= 3 * std / np.sqrt(2 * n))


def test_forward_marginal_monte_carlo():
    s = default_schedule()
    T, x0, n = s.steps, 0.6, 10_000
    ab = s.alpha_bars[-1]
    rng = np.random.default_rng(0)
    closed = s.q_sample(np.full(n, x0), T, rng.standard_normal(n))
    assert _within_3se(closed, np.sqrt(ab) * x0, np.sqrt(1 - ab))
    x = np.full(n, x0)
    for t in range(1, T + 1):
        x = s.q_step(x, t, rng.standard_normal(n))
    assert _within_3se(x, np.sqrt(ab) * x0, np.sqrt(1 - ab))
    mid = 50
    ab_mid = s.alpha_bars[mid - 1]
    x = np.full(n, x0)
    for t in range(1, mid + 1):
        x = s.q_step(x, t, rng.standard_normal(n))
    assert _within_3se(x, np.sqrt(ab_mid) * x0, np.sqrt(1 - ab_mid))


# --- generation contract -----------------------------------------------------

@pytest.mark.parametrize("kind", ["CVAE", "CWGAN", "CDDPM"])
def test_generation_contract(trained, kind):
    model = trained[kind]
    out = generate(model, 1, 10_000, seed=5)
    assert out.shape == (10_000, 2)
    assert out.min() >= 0.0 and out.max() <= 1.0
    assert np.array_equal(out, generate(model, 1, 10_000, seed=5))
    assert generate(model, 0, 0, seed=1).shape == (0, 2)
    closer_b = np.linalg.norm(out - CENTER_B, axis=1) < np.linalg.norm(out - CENTER_A, axis=1)
    assert closer_b.mean() >= 0.9
    with pytest.raises(UnknownClass):
        generate(model, 2, 5)
    with pytest.raises(ValueError):
        generate(model, 0, -1)


@pytest.mark.parametrize("kind", ["CVAE", "CWGAN", "CDDPM"])
def test_checkpoint_round_trip(trained, kind, tmp_path):
    model = trained[kind]
    path = tmp_path / f"{kind}.json"
    model.save(path)
    again = load_model(path)
    assert type(again) is type(model)
    assert np.array_equal(generate(again, 0, 50, seed=2), generate(model, 0, 50, seed=2))


def test_training_is_seed_deterministic():
    table = two_blobs(60, 40)
    cfg = make_config("CWGAN", {"epochs": 3}, seed=4)
    a, b = train_model("CWGAN", table, cfg), train_model("CWGAN", table, cfg)
    assert a.loss_trace == b.loss_trace
    assert np.array_equal(generate(a, 1, 20, 0), generate(b, 1, 20, 0))


def test_generative_oversample_counts(trained):
    table = two_blobs(100, 40)
    out, mask, _ = generative_oversample(table, "CVAE", make_config("CVAE", {"epochs": 5}), seed=0)
    assert out.counts().tolist() == [100, 100]
    assert mask.sum() == 60 and not mask[:140].any()
    assert np.all(out.labels[mask] == 1)
    assert out.features[mask].min() >= 0 and out.features[mask].max() <= 1
    assert out.take(np.arange(140)).equals(table)
    balanced = two_blobs(50, 50)
    out, mask, model = generative_oversample(balanced, "CDDPM", make_config("CDDPM", {"epochs": 1}))
    assert out.equals(balanced) and not mask.any() and len(model.loss_trace) == 1
    with pytest.raises(ValueError):
        generative_oversample(make_table(np.zeros((3, 2)), [0, 0, 0]), "CVAE")


def test_registry_reuses_model():
    reg = GeneratorRegistry({"CVAE": {"epochs": 2}})
    table = two_blobs(30, 10)
    a = reg["CVAE"](table, 0)
    b = reg["CVAE"](table, 0)
    assert a.equals(b) and len(reg.trace) == 1
    assert "CDDPM" in reg and "GAN" not in reg
    with pytest.raises(KeyError):
        reg["GAN"]
