"""Executable versions of the error-bound quantities and the vanishment probes."""
import math
from dataclasses import dataclass

import numpy as np

from . import nn_core
from .data import labels_of, stack
from .errors import ConfigError, InputShapeError

HDH_METHOD = "nested_set_proxy"

# selection ratios for the entropy-vs-error curve
SELECTION_RATIOS = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
CONFIDENCE_EDGES = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
WEIGHT_BINS = 10


@dataclass
class BoundReport:
    eps_val: float
    hdh_term: float
    rho: float
    eps_expansion: float
    bound: float
    actual_target_error: float
    hdh_method: str = HDH_METHOD

    @property
    def holds(self):
        return self.actual_target_error <= self.bound + 1e-12


def disagreement(preds_a, preds_b):
    """Mean over examples of ||h1(x) - h2(x)||_1 / C for one-hot predictions."""
    a = np.asarray(preds_a, dtype=np.float64)
    b = np.asarray(preds_b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputShapeError(f"prediction shapes differ: {a.shape} vs {b.shape}")
    if a.shape[0] == 0:
        return 0.0
    C = a.shape[1]
    return float((np.abs(a - b).sum(axis=1) / C).mean())


def hdh_nested(size_inner, size_outer):
    """H-delta-H distance between nested input sets: 2 (|D2| - |D1|) / |D2|."""
    if size_outer <= 0:
        raise ValueError("outer set must be non-empty")
    if size_inner < 0 or size_inner > size_outer:
        raise ValueError(f"need 0 <= size_inner <= size_outer, got ({size_inner}, {size_outer})")
    return 2.0 * (size_outer - size_inner) / size_outer


def theorem3_check(sizes):
    n1, n2, n3 = sizes
    if not (0 <= n1 <= n2 <= n3) or n3 == 0:
        raise ValueError(f"sizes must satisfy 0 <= n1 <= n2 <= n3, n3 > 0; got {sizes}")
    return hdh_nested(n2, n3) <= hdh_nested(n1, n3)


def theorem2_report(params_t, params_prev, arch, d_tl, d_e, target_truth):
    """Assemble the three bound terms for snapshot ``params_t``.

    ``d_tl`` are labeled in-domain examples, ``d_e`` PseudoExamples whose
    pseudo labels came from ``params_prev``, and ``target_truth`` a labeled
    target pool containing both (its ``truth`` labels stand in for h*).
    """
    if not d_tl and not d_e:
        raise ConfigError("bound needs a non-empty in-domain set or expansion set")
    C = arch.n_outputs
    X_m = stack(list(d_tl) + [pe.base for pe in d_e])
    sup = [ex.label for ex in d_tl] + [pe.pseudo_label for pe in d_e]
    pred_t = nn_core.predict_proba(params_t, arch, X_m).argmax(axis=1)
    eps_val = disagreement(nn_core.one_hot(pred_t, C), nn_core.one_hot(sup, C))

    if d_e:
        truth_e = [pe.base.truth for pe in d_e]
        if any(t is None for t in truth_e):
            raise ConfigError("expansion examples need ground truth for the bound")
        pred_prev = nn_core.predict_proba(params_prev, arch, stack([pe.base for pe in d_e])).argmax(axis=1)
        eps_exp = disagreement(nn_core.one_hot(truth_e, C), nn_core.one_hot(pred_prev, C))
    else:
        eps_exp = 0.0
    rho = len(d_e) / (len(d_tl) + len(d_e))

    n_pool = len(target_truth)
    hdh_term = 0.5 * hdh_nested(min(len(d_tl) + len(d_e), n_pool), n_pool)
    truth = labels_of(target_truth, "truth")
    pred_pool = nn_core.predict_proba(params_t, arch, stack(target_truth)).argmax(axis=1)
    actual = float((pred_pool != truth).mean())
    return BoundReport(eps_val=eps_val, hdh_term=hdh_term, rho=rho, eps_expansion=eps_exp,
                       bound=eps_val + hdh_term + rho * eps_exp, actual_target_error=actual)


def vanishment_probe(params, arch, d_e, d_m):
    """(norm of mean validation gradient on d_m, mean pseudo-label loss on d_e)."""
    if not d_e:
        raise ConfigError("expansion set is empty")
    g = nn_core.mean_gradient(params, arch, d_m.X, d_m.Y)
    X = stack([pe.base for pe in d_e])
    Y = np.stack([pe.one_hot for pe in d_e])
    loss = float(nn_core.example_losses(params, arch, X, Y).mean())
    return float(np.linalg.norm(g)), loss


def entropy_error_curve(pseudo, ratios=SELECTION_RATIOS):
    """Error rate and mean pseudo-label loss on the lowest-entropy fraction of a pool.

    Returns rows (ratio, n_selected, error_rate, mean_loss); pool members need
    ground truth.
    """
    if not pseudo:
        return []
    order = sorted(range(len(pseudo)), key=lambda i: (pseudo[i].entropy, i))
    wrong = np.array([not pseudo[i].correct for i in order], dtype=np.float64)
    # loss of the hard pseudo label is -log(max prob)
    loss = np.array([-math.log(max(pseudo[i].confidence, nn_core.EPS)) for i in order])
    rows = []
    for r in ratios:
        k = max(1, int(math.floor(r * len(pseudo) + 0.5)))
        rows.append((r, k, float(wrong[:k].mean()), float(loss[:k].mean())))
    return rows


def confidence_bucket(conf, edges=CONFIDENCE_EDGES):
    if conf is None or not np.isfinite(conf):
        return ""
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo <= conf < hi or (hi == edges[-1] and conf == hi):
            return f"[{lo:.1f},{hi:.1f})"
    return ""


def weight_distribution_export(weight_log, edges=CONFIDENCE_EDGES, n_bins=WEIGHT_BINS):
    """Histogram of sigma(w) per (confidence bucket x correctness).

    Each (bucket, correctness) histogram is normalised on its own, so the
    correct and the wrong curve of a bucket each sum to 1. Returns rows of
    (bucket, correct, bin_lo, bin_hi, count, density).
    """
    records = [r for r in weight_log if r.supervision_source == "pseudo" and r.correct is not None]
    bins = np.linspace(0.0, 1.0, n_bins + 1)
    rows = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        name = f"[{lo:.1f},{hi:.1f})"
        in_bucket = [r for r in records if confidence_bucket(r.confidence, edges) == name]
        for correct in (True, False):
            sig = np.array([r.sigma_w for r in in_bucket if r.correct == correct])
            if sig.size == 0:
                continue
            counts, _ = np.histogram(sig, bins=bins)
            for b in range(n_bins):
                rows.append((name, correct, float(bins[b]), float(bins[b + 1]),
                             int(counts[b]), counts[b] / sig.size))
    return rows


def mean_weight_by_correctness(weight_log, bucket=None):
    """(mean sigma(w) on wrong pseudo labels, mean on correct ones); nan if absent."""
    wrong, right = [], []
    for r in weight_log:
        if r.supervision_source != "pseudo" or r.correct is None:
            continue
        if bucket is not None and confidence_bucket(r.confidence) not in bucket:
            continue
        (right if r.correct else wrong).append(r.sigma_w)
    return (float(np.mean(wrong)) if wrong else float("nan"),
            float(np.mean(right)) if right else float("nan"))
