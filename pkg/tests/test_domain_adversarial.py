import math

import numpy as np
import pytest

from damstf import nn_core
from damstf.domain_adversarial import (AdvConfig, Discriminator, discriminator_gradient, discriminator_step,
                                       domain_loss, domain_targets, feature_ascent_step, feature_gradient,
                                       make_discriminator, run_adversarial_pass)
from damstf.errors import ConfigError
from damstf.nn_core import Architecture

ARCH = Architecture((2, 6, 2))


def _batch(seed=0, n=16, sep=0.0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    doms = ["source"] * (n // 2) + ["target"] * (n - n // 2)
    X[n // 2:, 0] += sep
    return rng, X, doms, domain_targets(doms)


def test_domain_targets():
    assert np.array_equal(domain_targets(["source", "target"]), [[1, 0], [0, 1]])


def test_uniform_discriminator_loss_is_log2():
    _, X, _, D = _batch()
    disc = make_discriminator(ARCH.feature_dim, 0)
    disc = Discriminator(np.zeros_like(disc.params), disc.arch)
    assert domain_loss(nn_core.init_params(ARCH, 0), ARCH, disc, X, D) == pytest.approx(math.log(2), abs=1e-15)


def test_loss_matches_direct_mean():
    rng, X, _, D = _batch(1)
    theta = nn_core.init_params(ARCH, 1)
    disc = make_discriminator(ARCH.feature_dim, 2)
    feats = np.tanh(X @ nn_core.unpack(theta, ARCH)[0][0].T)
    probs = nn_core.predict_proba(disc.params, disc.arch, feats)
    direct = np.mean([-math.log(probs[i] @ D[i]) for i in range(len(X))])
    assert domain_loss(theta, ARCH, disc, X, D) == pytest.approx(direct, rel=1e-12)


def test_converged_discriminator_on_separated_domains():
    _, X, doms, D = _batch(2, n=64, sep=12.0)
    theta = nn_core.init_params(ARCH, 3)
    disc = make_discriminator(ARCH.feature_dim, 4)
    for _ in range(3000):
        disc = discriminator_step(disc, theta, ARCH, X, D, 1.0)
    assert domain_loss(theta, ARCH, disc, X, D) < 0.05


def test_discriminator_step_eta_zero():
    _, X, _, D = _batch()
    theta = nn_core.init_params(ARCH, 0)
    disc = make_discriminator(ARCH.feature_dim, 0)
    assert np.array_equal(discriminator_step(disc, theta, ARCH, X, D, 0.0).params, disc.params)


def test_discriminator_step_reduces_loss():
    _, X, _, D = _batch(3, sep=3.0)
    theta = nn_core.init_params(ARCH, 0)
    disc = make_discriminator(ARCH.feature_dim, 0)
    before = domain_loss(theta, ARCH, disc, X, D)
    after = domain_loss(theta, ARCH, discriminator_step(disc, theta, ARCH, X, D, 0.1), X, D)
    assert after < before


def test_discriminator_gradient_matches_finite_differences():
    _, X, _, D = _batch(4)
    theta = nn_core.init_params(ARCH, 0)
    disc = make_discriminator(ARCH.feature_dim, 5)
    g = discriminator_gradient(theta, ARCH, disc, X, D)
    fd = nn_core.finite_difference(lambda v: domain_loss(theta, ARCH, Discriminator(v, disc.arch), X, D),
                                   disc.params, 1e-5)
    assert np.allclose(g, fd, rtol=1e-5, atol=1e-10)


def test_feature_gradient_matches_finite_differences():
    _, X, _, D = _batch(5)
    theta = nn_core.init_params(ARCH, 6)
    disc = make_discriminator(ARCH.feature_dim, 7)
    g = feature_gradient(theta, ARCH, disc, X, D)
    fd = nn_core.finite_difference(lambda t: domain_loss(t, ARCH, disc, X, D), theta, 1e-5)
    assert np.allclose(g, fd, rtol=1e-5, atol=1e-10)


def test_ascent_eta_zero():
    _, X, _, D = _batch()
    theta = nn_core.init_params(ARCH, 0)
    disc = make_discriminator(ARCH.feature_dim, 0)
    assert np.array_equal(feature_ascent_step(theta, ARCH, disc, X, D, 0.0), theta)


def test_ascent_leaves_head_bitwise():
    _, X, _, D = _batch(6)
    theta = nn_core.init_params(ARCH, 1)
    disc = make_discriminator(ARCH.feature_dim, 2)
    out = feature_ascent_step(theta, ARCH, disc, X, D, 5.0)
    head = ARCH.head_slice()
    assert np.array_equal(out[head], theta[head])
    assert not np.array_equal(out, theta)


def test_small_ascent_step_does_not_decrease_loss():
    _, X, _, D = _batch(7, sep=2.0)
    theta = nn_core.init_params(ARCH, 3)
    disc = make_discriminator(ARCH.feature_dim, 4)
    before = domain_loss(theta, ARCH, disc, X, D)
    after = domain_loss(feature_ascent_step(theta, ARCH, disc, X, D, 1e-4), ARCH, disc, X, D)
    assert after >= before


def test_pass_without_generator_steps_keeps_theta():
    _, X, doms, _ = _batch(8)
    theta = nn_core.init_params(ARCH, 0)
    disc = make_discriminator(ARCH.feature_dim, 0)
    out, disc2 = run_adversarial_pass(theta, ARCH, disc, X, doms, AdvConfig(t_g=0, batch_size=4), 0)
    assert np.array_equal(out, theta)
    assert not np.array_equal(disc2.params, disc.params)


def test_pass_empty_pool():
    theta = nn_core.init_params(ARCH, 0)
    disc = make_discriminator(ARCH.feature_dim, 0)
    out, d2 = run_adversarial_pass(theta, ARCH, disc, np.zeros((0, 2)), [], AdvConfig(), 0)
    assert np.array_equal(out, theta) and d2 is disc


def test_pass_is_seeded():
    _, X, doms, _ = _batch(9)
    theta = nn_core.init_params(ARCH, 0)
    disc = make_discriminator(ARCH.feature_dim, 0)
    a, _ = run_adversarial_pass(theta, ARCH, disc, X, doms, AdvConfig(batch_size=4), 3)
    b, _ = run_adversarial_pass(theta, ARCH, disc, X, doms, AdvConfig(batch_size=4), 3)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("field,value", [("eta1", 0.0), ("eta2", -1.0), ("t_d", -1), ("t_g", -2),
                                         ("batch_size", 0)])
def test_adv_config_validation(field, value):
    with pytest.raises(ConfigError, match=f"adv.{field}"):
        AdvConfig(**{field: value}).validate()
