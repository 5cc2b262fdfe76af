"""Domain discriminator and the alternating min-max on the feature extractor.

The discriminator reads the task model's features (output of the last hidden
layer). Per batch it takes ``t_d`` descent steps on its own parameters, then
the feature extractor takes ``t_g`` plain ascent steps on the same loss. The
task head is never touched.
"""
from dataclasses import dataclass

import numpy as np

from . import nn_core
from .errors import ConfigError
from .nn_core import Architecture

SOURCE_DOMAIN = np.array([1.0, 0.0])
TARGET_DOMAIN = np.array([0.0, 1.0])

DISCRIMINATOR_HIDDEN = 16


@dataclass
class Discriminator:
    params: np.ndarray
    arch: Architecture


@dataclass
class AdvConfig:
    eta1: float = 0.2
    eta2: float = 3.0
    t_d: int = 5
    t_g: int = 1
    batch_size: int = 32

    def validate(self, prefix="adv"):
        for name in ("eta1", "eta2"):
            if not getattr(self, name) > 0:
                raise ConfigError("must be > 0", field=f"{prefix}.{name}")
        for name in ("t_d", "t_g"):
            if getattr(self, name) < 0:
                raise ConfigError("must be >= 0", field=f"{prefix}.{name}")
        if self.batch_size < 1:
            raise ConfigError("must be >= 1", field=f"{prefix}.batch_size")


def make_discriminator(feature_dim, seed, hidden=DISCRIMINATOR_HIDDEN, n_domains=2):
    arch = Architecture((feature_dim, hidden, n_domains), "tanh")
    return Discriminator(params=nn_core.init_params(arch, seed), arch=arch)


def domain_targets(domains):
    return np.stack([SOURCE_DOMAIN if d == "source" else TARGET_DOMAIN for d in domains])


def domain_loss(theta, arch, disc, X, D):
    feats = nn_core.features(theta, arch, X)
    return float(nn_core.example_losses(disc.params, disc.arch, feats, D).mean())


def discriminator_gradient(theta, arch, disc, X, D):
    feats = nn_core.features(theta, arch, X)
    return nn_core.mean_gradient(disc.params, disc.arch, feats, D)


def feature_gradient(theta, arch, disc, X, D):
    """d L_DA / d theta, nonzero only on the feature-extractor coordinates."""
    feats = nn_core.features(theta, arch, X)
    d_feats = nn_core.input_gradient(disc.params, disc.arch, feats, D)
    return nn_core.feature_backward(theta, arch, X, d_feats)


def discriminator_step(disc, theta, arch, X, D, eta1):
    grad = discriminator_gradient(theta, arch, disc, X, D)
    return Discriminator(params=nn_core.axpy(disc.params, -eta1, grad), arch=disc.arch)


def feature_ascent_step(theta, arch, disc, X, D, eta2):
    return nn_core.axpy(theta, eta2, feature_gradient(theta, arch, disc, X, D))


def run_adversarial_pass(theta, arch, disc, X, domains, cfg, seed):
    """One epoch over the mixed source/target pool; returns (theta, disc)."""
    theta = np.array(theta, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        return theta, disc
    D = domain_targets(domains)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(X.shape[0])
    for start in range(0, X.shape[0], cfg.batch_size):
        idx = perm[start:start + cfg.batch_size]
        Xb, Db = X[idx], D[idx]
        for _ in range(cfg.t_d):
            disc = discriminator_step(disc, theta, arch, Xb, Db, cfg.eta1)
        for _ in range(cfg.t_g):
            theta = feature_ascent_step(theta, arch, disc, Xb, Db, cfg.eta2)
    return theta, disc
