"""Feed-forward classifier on a flat parameter vector.

Parameters for every layer live in one float64 vector. Layers are stored in
order as (weights, bias), so the feature extractor is always a prefix of the
vector and the task head (last affine layer) is the suffix. Gradients are
computed by hand-written reverse mode, either summed over a batch or kept per
example.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InputShapeError, LayoutError

EPS = 1e-12

ACTIVATIONS = ("tanh", "relu")


@dataclass(frozen=True)
class Architecture:
    layer_dims: tuple
    activation: str = "tanh"

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 2:
            raise ValueError("layer_dims needs at least input and output sizes")
        if any(d <= 0 for d in dims):
            raise ValueError(f"layer sizes must be positive, got {dims}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @property
    def n_layers(self):
        return len(self.layer_dims) - 1

    @property
    def feature_cut(self):
        # layers [0, feature_cut) form the feature extractor, the rest is the head
        return self.n_layers - 1

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def n_outputs(self):
        return self.layer_dims[-1]

    @property
    def feature_dim(self):
        return self.layer_dims[-2]

    @property
    def n_params(self):
        return sum((i + 1) * o for i, o in zip(self.layer_dims[:-1], self.layer_dims[1:]))

    def layout(self):
        """Map layer index -> {"W": (offset, shape), "b": (offset, shape)}."""
        out = {}
        off = 0
        for l, (fan_in, fan_out) in enumerate(zip(self.layer_dims[:-1], self.layer_dims[1:])):
            out[l] = {"W": (off, (fan_out, fan_in))}
            off += fan_in * fan_out
            out[l]["b"] = (off, (fan_out,))
            off += fan_out
        return out

    def feature_slice(self):
        """Slice of the parameter vector holding the feature extractor."""
        head_start = self.layout()[self.n_layers - 1]["W"][0]
        return slice(0, head_start)

    def head_slice(self):
        head_start = self.layout()[self.n_layers - 1]["W"][0]
        return slice(head_start, self.n_params)


@dataclass
class ForwardResult:
    features: np.ndarray
    probabilities: np.ndarray
    logits: np.ndarray


def _check_params(params, arch):
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (arch.n_params,):
        raise LayoutError(f"expected {arch.n_params} parameters, got shape {params.shape}")
    return params


def unpack(params, arch):
    """List of (W, b) views into ``params``."""
    params = _check_params(params, arch)
    layers = []
    lay = arch.layout()
    for l in range(arch.n_layers):
        (wo, ws), (bo, bs) = lay[l]["W"], lay[l]["b"]
        W = params[wo:wo + ws[0] * ws[1]].reshape(ws)
        b = params[bo:bo + bs[0]]
        layers.append((W, b))
    return layers


def init_params(arch, seed):
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = np.zeros(arch.n_params)
    for l, spec in arch.layout().items():
        off, (fan_out, fan_in) = spec["W"]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[off:off + fan_in * fan_out] = rng.uniform(-limit, limit, size=fan_in * fan_out)
    return params


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def clamp_probs(probs):
    return np.clip(probs, EPS, 1.0 - EPS)


def _act(name, z):
    return np.tanh(z) if name == "tanh" else np.maximum(z, 0.0)


def _act_grad(name, z, a):
    if name == "tanh":
        return 1.0 - a * a
    return (z > 0).astype(np.float64)


def _as_batch(X, arch):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != arch.input_dim:
        raise InputShapeError(f"expected inputs of dim {arch.input_dim}, got shape {X.shape}")
    return X


def _forward_cache(layers, activation, X):
    acts, zs = [X], []
    for l, (W, b) in enumerate(layers):
        z = acts[-1] @ W.T + b
        zs.append(z)
        if l < len(layers) - 1:
            acts.append(_act(activation, z))
    return acts, zs


def _backward(layers, activation, acts, zs, dz, top, per_example):
    """Backpropagate ``dz`` (gradient w.r.t. pre-activation of layer ``top``).

    Returns (grads, d_input) where grads[l] = (dW, db) for l <= top. With
    ``per_example`` the leading axis of each gradient is the batch axis,
    otherwise gradients are summed over the batch.
    """
    grads = [None] * (top + 1)
    for l in range(top, -1, -1):
        a_prev = acts[l]
        if per_example:
            dW = dz[:, :, None] * a_prev[:, None, :]
            db = dz
        else:
            dW = dz.T @ a_prev
            db = dz.sum(axis=0)
        grads[l] = (dW, db)
        da = dz @ layers[l][0]
        if l > 0:
            dz = da * _act_grad(activation, zs[l - 1], acts[l])
    return grads, da


def _flatten(grads, n=None):
    parts = []
    for dW, db in grads:
        if n is None:
            parts += [dW.ravel(), db.ravel()]
        else:
            parts += [dW.reshape(n, -1), db.reshape(n, -1)]
    if n is None:
        return np.concatenate(parts) if parts else np.zeros(0)
    return np.concatenate(parts, axis=1) if parts else np.zeros((n, 0))


def forward_batch(params, arch, X):
    """Batched forward pass; returns (probabilities, logits, features)."""
    X = _as_batch(X, arch)
    acts, zs = _forward_cache(unpack(params, arch), arch.activation, X)
    return softmax(zs[-1]), zs[-1], acts[-1]


def forward(params, arch, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != arch.input_dim:
        raise InputShapeError(f"expected input vector of length {arch.input_dim}, got shape {x.shape}")
    probs, logits, feats = forward_batch(params, arch, x)
    return ForwardResult(features=feats[0], probabilities=probs[0], logits=logits[0])


def predict_proba(params, arch, X):
    return forward_batch(params, arch, X)[0]


def features(params, arch, X):
    return forward_batch(params, arch, X)[2]


def cross_entropy(probs, y):
    """-sum y_c log p_c with clamped probabilities; works row-wise on batches."""
    probs = clamp_probs(np.asarray(probs, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    return -(y * np.log(probs)).sum(axis=-1)


def one_hot(labels, n_classes):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def example_losses(params, arch, X, Y):
    return cross_entropy(predict_proba(params, arch, X), Y)


def per_example_gradients(params, arch, X, Y):
    """Matrix of shape (n, n_params); row i is the cross-entropy gradient of example i."""
    X = _as_batch(X, arch)
    Y = np.asarray(Y, dtype=np.float64).reshape(X.shape[0], arch.n_outputs)
    layers = unpack(params, arch)
    acts, zs = _forward_cache(layers, arch.activation, X)
    dz = softmax(zs[-1]) - Y
    grads, _ = _backward(layers, arch.activation, acts, zs, dz, arch.n_layers - 1, per_example=True)
    return _flatten(grads, n=X.shape[0])


def per_example_gradient(params, arch, x, y):
    return per_example_gradients(params, arch, np.asarray(x)[None, :], np.asarray(y)[None, :])[0]


def mean_gradient(params, arch, X, Y, sample_weights=None):
    """Gradient of (1/n) sum_i s_i * CE_i, without materialising per-example rows."""
    X = _as_batch(X, arch)
    n = X.shape[0]
    Y = np.asarray(Y, dtype=np.float64).reshape(n, arch.n_outputs)
    layers = unpack(params, arch)
    acts, zs = _forward_cache(layers, arch.activation, X)
    dz = softmax(zs[-1]) - Y
    if sample_weights is not None:
        dz = dz * np.asarray(sample_weights, dtype=np.float64)[:, None]
    grads, _ = _backward(layers, arch.activation, acts, zs, dz / n, arch.n_layers - 1, per_example=False)
    return _flatten(grads)


def feature_backward(params, arch, X, d_features):
    """Gradient w.r.t. the feature-extractor parameters given dL/d(features).

    ``d_features`` is already scaled by the caller (e.g. divided by batch
    size). Returns a full-length vector whose head coordinates are zero.
    """
    X = _as_batch(X, arch)
    out = np.zeros(arch.n_params)
    cut = arch.feature_cut
    if cut == 0:
        return out
    layers = unpack(params, arch)
    acts, zs = _forward_cache(layers, arch.activation, X)
    dz = d_features * _act_grad(arch.activation, zs[cut - 1], acts[cut])
    grads, _ = _backward(layers, arch.activation, acts, zs, dz, cut - 1, per_example=False)
    out[arch.feature_slice()] = _flatten(grads)
    return out


def input_gradient(params, arch, X, Y):
    """Gradient of the mean cross-entropy w.r.t. the inputs, shape (n, input_dim)."""
    X = _as_batch(X, arch)
    n = X.shape[0]
    layers = unpack(params, arch)
    acts, zs = _forward_cache(layers, arch.activation, X)
    dz = (softmax(zs[-1]) - np.asarray(Y, dtype=np.float64)) / n
    _, dx = _backward(layers, arch.activation, acts, zs, dz, arch.n_layers - 1, per_example=False)
    return dx


def finite_difference(f, theta, step=1e-5, order=2):
    """Central differences of scalar ``f`` at every coordinate of ``theta``.

    ``order=4`` uses the five-point stencil, whose truncation error is
    O(step^4) instead of O(step^2).
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    theta = np.array(theta, dtype=np.float64, ndmin=1)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        orig = theta[i]

        def at(k):
            theta[i] = orig + k * step
            return f(theta)

        if order == 2:
            grad[i] = (at(1) - at(-1)) / (2.0 * step)
        else:
            grad[i] = (at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * step)
        theta[i] = orig
    return grad


def finite_difference_gradient(params, arch, x, y, step=1e-5, order=2):
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    def loss(p):
        return float(cross_entropy(forward(p, arch, x).probabilities, y))

    return finite_difference(loss, _check_params(params, arch), step, order)


def axpy(dst, scale, src):
    """Return dst + scale * src as a new vector."""
    dst = np.asarray(dst, dtype=np.float64)
    src = np.asarray(src, dtype=np.float64)
    if dst.shape != src.shape:
        raise LayoutError(f"layout mismatch: {dst.shape} vs {src.shape}")
    return dst + scale * src
