"""Pseudo labeling, entropy ranking and construction of the meta validation set."""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import nn_core
from .data import stack
from .errors import ConfigError

SEMI_SUPERVISED = "semi_supervised"
UNSUPERVISED = "unsupervised"
MODES = (SEMI_SUPERVISED, UNSUPERVISED)


@dataclass(eq=False)
class PseudoExample:
    base: object
    distribution: np.ndarray
    pseudo_label: int
    entropy: float
    index: int

    @property
    def one_hot(self):
        y = np.zeros(len(self.distribution))
        y[self.pseudo_label] = 1.0
        return y

    @property
    def confidence(self):
        # confidence of the model's prediction, independent of the assigned label
        return float(np.max(self.distribution))

    @property
    def correct(self):
        """Whether the pseudo label matches the hidden truth (None if unknown)."""
        truth = self.base.truth
        return None if truth is None else bool(truth == self.pseudo_label)


@dataclass
class Partition:
    expansion: list
    remainder: list
    k: int


@dataclass
class MetaValidationSet:
    X: np.ndarray
    Y: np.ndarray
    mode: str
    # "true" for in-domain ground truth, "pseudo" for expansion members
    sources: list = field(default_factory=list)

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_pseudo(self):
        return sum(s == "pseudo" for s in self.sources)


def entropy(probs):
    """Prediction entropy -sum p log p over the last axis, clamped probabilities."""
    p = nn_core.clamp_probs(np.asarray(probs, dtype=np.float64))
    return -(p * np.log(p)).sum(axis=-1)


def pseudo_label(params, arch, pool):
    if not pool:
        return []
    probs = nn_core.predict_proba(params, arch, stack(pool))
    ents = entropy(probs)
    labels = probs.argmax(axis=1)
    return [PseudoExample(base=ex, distribution=probs[i], pseudo_label=int(labels[i]),
                          entropy=float(ents[i]), index=i)
            for i, ex in enumerate(pool)]


def expansion_size(k_fraction, pool_size):
    """Number of expansion instances for a pool: round(fraction * n), at least one
    when the pool and fraction are non-empty."""
    if pool_size == 0 or k_fraction <= 0:
        return 0
    return min(pool_size, max(1, int(math.floor(k_fraction * pool_size + 0.5))))


def partition(pool, k):
    if k < 0:
        raise ValueError("k must be >= 0")
    # stable: ties keep pool order
    order = sorted(range(len(pool)), key=lambda i: (pool[i].entropy, i))
    ranked = [pool[i] for i in order]
    k_eff = min(k, len(ranked))
    return Partition(expansion=ranked[:k_eff], remainder=ranked[k_eff:], k=k)


def build_meta_validation(in_domain, expansion, mode, n_classes=2):
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}", field="mode")
    if mode == UNSUPERVISED:
        in_domain = []
    if not in_domain and not expansion:
        raise ConfigError("meta validation set would be empty")
    rows, targets, sources = [], [], []
    for ex in in_domain:
        rows.append(ex.features)
        targets.append(nn_core.one_hot([ex.label], n_classes)[0])
        sources.append("true")
    for pe in expansion:
        rows.append(pe.base.features)
        targets.append(pe.one_hot)
        sources.append("pseudo")
    return MetaValidationSet(X=np.stack(rows).astype(np.float64), Y=np.stack(targets),
                             mode=mode, sources=sources)


def write_partition_csv(part, path):
    selected = {id(pe) for pe in part.expansion}
    rows = sorted(part.expansion + part.remainder, key=lambda pe: pe.index)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "entropy", "selected"])
        for pe in rows:
            w.writerow([pe.index, repr(pe.entropy), int(id(pe) in selected)])
