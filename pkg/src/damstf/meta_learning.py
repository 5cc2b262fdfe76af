"""Bi-level instance reweighting on mixed source / pseudo-target batches.

Each batch starts from neutral raw weights (sigmoid 0.5). For ``t_m`` inner
steps the model takes a virtual SGD step under the current weights, the
meta-validation gradient at the virtually updated parameters is taken, and
the weights move against the hypergradient. The hypergradient of one virtual
SGD step has an exact closed form:

    dL_M/dw_i = -(eta * s_i * (1 - s_i) / |B|) * <g_val(theta_hat), g_i(theta)>

with s = sigmoid(w), so no second-order object is ever built.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import nn_core
from .errors import ConfigError, InputShapeError


@dataclass
class MetaConfig:
    eta: float = 0.1
    gamma: float = 200.0
    t_m: int = 5
    batch_size: int = 32

    def validate(self, prefix="meta"):
        if not self.eta > 0:
            raise ConfigError("must be > 0", field=f"{prefix}.eta")
        if not self.gamma > 0:
            raise ConfigError("must be > 0", field=f"{prefix}.gamma")
        if self.t_m < 0:
            raise ConfigError("must be >= 0", field=f"{prefix}.t_m")
        if self.batch_size < 1:
            raise ConfigError("must be >= 1", field=f"{prefix}.batch_size")


@dataclass
class InstanceWeights:
    raw: np.ndarray

    @property
    def activated(self):
        return expit(self.raw)

    @classmethod
    def neutral(cls, n):
        return cls(np.zeros(n))


@dataclass
class TrainingPool:
    """Meta-training examples with their supervision and bookkeeping for the weight log."""
    X: np.ndarray
    Y: np.ndarray
    ids: list
    domains: list
    supervision: list          # "true" or "pseudo"
    confidence: np.ndarray     # pseudo-label confidence; nan for ground-truth rows
    correct: list              # pseudo label correct? None when unknown or not pseudo

    def __len__(self):
        return self.X.shape[0]


@dataclass
class WeightRecord:
    example_id: str
    domain: str
    supervision_source: str
    confidence: float
    correct: object
    sigma_w: float


def make_training_pool(source_examples, pseudo_examples, n_classes=2):
    rows, targets, ids, domains, sup, conf, corr = [], [], [], [], [], [], []
    for ex in source_examples:
        rows.append(ex.features)
        targets.append(nn_core.one_hot([ex.label], n_classes)[0])
        ids.append(ex.uid)
        domains.append(ex.domain)
        sup.append("true")
        conf.append(np.nan)
        corr.append(None)
    for pe in pseudo_examples:
        rows.append(pe.base.features)
        targets.append(pe.one_hot)
        ids.append(pe.base.uid)
        domains.append(pe.base.domain)
        sup.append("pseudo")
        conf.append(pe.confidence)
        corr.append(pe.correct)
    if rows:
        X, Y = np.stack(rows).astype(np.float64), np.stack(targets)
    else:
        X, Y = np.zeros((0, 0)), np.zeros((0, n_classes))
    return TrainingPool(X=X, Y=Y, ids=ids, domains=domains, supervision=sup,
                        confidence=np.array(conf, dtype=np.float64), correct=corr)


def _raw(weights):
    return weights.raw if isinstance(weights, InstanceWeights) else np.asarray(weights, dtype=np.float64)


def _check_sizes(X, weights):
    if np.asarray(X).shape[0] != _raw(weights).shape[0]:
        raise InputShapeError(f"batch has {np.asarray(X).shape[0]} rows but {_raw(weights).shape[0]} weights")


def weighted_batch_loss(params, arch, X, Y, weights):
    _check_sizes(X, weights)
    losses = nn_core.example_losses(params, arch, X, Y)
    return float(np.dot(expit(_raw(weights)), losses) / len(losses))


def _weighted_step(params, arch, X, Y, weights, eta):
    _check_sizes(X, weights)
    grad = nn_core.mean_gradient(params, arch, X, Y, sample_weights=expit(_raw(weights)))
    return nn_core.axpy(params, -eta, grad)


def virtual_update(params, arch, X, Y, weights, eta):
    """theta_hat(w) = theta - eta * grad L_T(theta, w); ``params`` is left untouched."""
    return _weighted_step(params, arch, X, Y, weights, eta)


def model_update(params, arch, X, Y, weights_star, eta):
    return _weighted_step(params, arch, X, Y, weights_star, eta)


def meta_validation_loss(params_hat, arch, d_m):
    if len(d_m) == 0:
        raise ConfigError("meta validation set is empty")
    return float(nn_core.example_losses(params_hat, arch, d_m.X, d_m.Y).mean())


def validation_gradient(params, arch, d_m):
    """Mean per-example gradient over the meta validation set."""
    if len(d_m) == 0:
        raise ConfigError("meta validation set is empty")
    return nn_core.mean_gradient(params, arch, d_m.X, d_m.Y)


def guidance_from_gradients(G, g_val, raw, eta):
    s = expit(raw)
    return -(eta * s * (1.0 - s) / G.shape[0]) * (G @ g_val)


def training_guidance(params, arch, X, Y, weights, d_m, eta):
    """Exact dL_M(theta_hat(w))/dw for one virtual SGD step."""
    _check_sizes(X, weights)
    raw = _raw(weights)
    G = nn_core.per_example_gradients(params, arch, X, Y)
    theta_hat = nn_core.axpy(params, -eta / G.shape[0], G.T @ expit(raw))
    return guidance_from_gradients(G, validation_gradient(theta_hat, arch, d_m), raw, eta)


def weight_update(weights, guidance, gamma):
    raw = _raw(weights)
    guidance = np.asarray(guidance, dtype=np.float64)
    if raw.shape != guidance.shape:
        raise InputShapeError("weights and guidance differ in size")
    return InstanceWeights(raw - gamma * guidance)


def optimise_batch_weights(params, arch, X, Y, d_m, cfg):
    """Run the t_m inner iterations for one batch and return the final raw weights."""
    raw = np.zeros(X.shape[0])
    if cfg.t_m == 0:
        return raw
    G = nn_core.per_example_gradients(params, arch, X, Y)
    n = G.shape[0]
    for _ in range(cfg.t_m):
        theta_hat = nn_core.axpy(params, -cfg.eta / n, G.T @ expit(raw))
        g_val = validation_gradient(theta_hat, arch, d_m)
        raw = raw - cfg.gamma * guidance_from_gradients(G, g_val, raw, cfg.eta)
    return raw


def batches(n, batch_size, rng):
    perm = rng.permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def run_meta_pass(params, arch, pool, d_m, cfg, seed):
    """One epoch of meta-reweighted training over ``pool``.

    Returns the updated parameters and a list of WeightRecord (one per
    example, final sigmoid weight of the batch it was trained in).
    """
    rng = np.random.default_rng(seed)
    log = []
    if len(pool) == 0:
        return np.array(params, dtype=np.float64), log
    if d_m is None or len(d_m) == 0:
        if cfg.t_m > 0:
            raise ConfigError("meta validation set is empty")
    for idx in batches(len(pool), cfg.batch_size, rng):
        X, Y = pool.X[idx], pool.Y[idx]
        raw = optimise_batch_weights(params, arch, X, Y, d_m, cfg)
        params = model_update(params, arch, X, Y, raw, cfg.eta)
        sig = expit(raw)
        for j, i in enumerate(idx):
            log.append(WeightRecord(
                example_id=pool.ids[i], domain=pool.domains[i],
                supervision_source=pool.supervision[i],
                confidence=float(pool.confidence[i]), correct=pool.correct[i],
                sigma_w=float(sig[j])))
    return params, log
