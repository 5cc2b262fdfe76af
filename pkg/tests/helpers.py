"""Fixtures shared by the unit and acceptance tests."""
import numpy as np

from damstf import nn_core
from damstf.data import Example, flip_labels, gen_shifted_gaussians, stack
from damstf.meta_constructor import (PseudoExample, build_meta_validation, entropy, expansion_size,
                                     partition, pseudo_label)
from damstf.nn_core import Architecture
from damstf.self_training import pretrain_on_source

ARCH = Architecture((2, 16, 2))


def random_case(rng, max_params=200):
    """Random small MLP with its parameters, within the parameter budget."""
    while True:
        dims = [int(rng.integers(1, 5))] + [int(rng.integers(2, 9)) for _ in range(rng.integers(1, 3))]
        dims.append(int(rng.integers(2, 4)))
        arch = Architecture(tuple(dims), str(rng.choice(["tanh", "relu"])))
        if arch.n_params <= max_params:
            break
    params = rng.normal(0.0, 0.8, arch.n_params)
    return arch, params


def random_batch(rng, arch, n):
    X = rng.normal(0.0, 1.0, (n, arch.input_dim))
    Y = nn_core.one_hot(rng.integers(0, arch.n_outputs, n), arch.n_outputs)
    return X, Y


def pretrained(seed, bundle=None, arch=ARCH):
    bundle = bundle or gen_shifted_gaussians(seed)
    p = pretrain_on_source(nn_core.init_params(arch, seed), arch, bundle.source_labeled, 20, 0.1, seed)
    return bundle, p


def expansion_setup(seed):
    """Pretrained model, lowest-entropy 10% of the unlabeled pool, D_M built from it alone."""
    bundle, p = pretrained(seed)
    pseudo = pseudo_label(p, ARCH, bundle.target_unlabeled)
    part = partition(pseudo, expansion_size(0.1, len(pseudo)))
    d_m = build_meta_validation([], part.expansion, "unsupervised")
    return bundle, p, part, d_m


def noisy_pseudo_fixture(seed, noise=0.3, n_unlabeled=1000):
    """Pseudo labels equal to ground truth with ``noise`` of them flipped.

    Returns (bundle, pretrained params, pseudo examples, flip mask).
    """
    bundle, p = pretrained(seed, gen_shifted_gaussians(seed, n_target_unlabeled=n_unlabeled))
    clean = [Example(e.features, label=e.true_label, domain=e.domain, uid=e.uid)
             for e in bundle.target_unlabeled]
    flipped, mask = flip_labels(clean, noise, seed)
    probs = nn_core.predict_proba(p, ARCH, stack(clean))
    ents = entropy(probs)
    pseudo = [PseudoExample(base=Example(f.features, None, f.domain, true_label=c.label, uid=c.uid),
                            distribution=probs[i], pseudo_label=f.label, entropy=float(ents[i]), index=i)
              for i, (f, c) in enumerate(zip(flipped, clean))]
    return bundle, p, pseudo, np.asarray(mask)


ACCEPTANCE_LINES = []


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
