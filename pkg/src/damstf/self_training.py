"""Top-level self-training driver, evaluation and the exposure sweep."""
import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import nn_core
from .data import SOURCE, labels_of, stack
from .domain_adversarial import AdvConfig, make_discriminator, run_adversarial_pass
from .errors import ConfigError
from .meta_constructor import (MODES, SEMI_SUPERVISED, UNSUPERVISED, build_meta_validation,
                               expansion_size, partition, pseudo_label)
from .meta_learning import MetaConfig, make_training_pool, run_meta_pass
from .nn_core import Architecture
from .theory import entropy_error_curve, theorem2_report, vanishment_probe

PHASES = ("pseudo_label", "entropy", "partition", "build_meta_validation",
          "domain_adversarial", "meta_learning")

# fraction of the labeled target pool used for testing; the rest validates
TEST_SHARE = 0.7


@dataclass
class Seeds:
    data: int = 0
    init: int = 0
    shuffle: int = 0


@dataclass
class RunConfig:
    mode: str = SEMI_SUPERVISED
    k_fraction: float = 0.1
    max_iters: int = 10
    patience: int = 3
    no_adversarial: bool = False
    no_expansion: bool = False
    accumulate_expansion: bool = False
    exposure_fraction: float = 1.0
    hidden: tuple = (16,)
    activation: str = "tanh"
    pretrain_epochs: int = 20
    pretrain_eta: float = 0.1
    batch_size: int = 32
    seeds: Seeds = field(default_factory=Seeds)
    meta: MetaConfig = field(default_factory=MetaConfig)
    adv: AdvConfig = field(default_factory=AdvConfig)

    @property
    def variant(self):
        return variant_name(self.no_adversarial, self.no_expansion)

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"must be one of {MODES}", field="mode")
        if not 0.0 <= self.k_fraction <= 1.0:
            raise ConfigError("must be in [0, 1]", field="k_fraction")
        if not 0.0 <= self.exposure_fraction <= 1.0:
            raise ConfigError("must be in [0, 1]", field="exposure_fraction")
        if self.max_iters < 0:
            raise ConfigError("must be >= 0", field="max_iters")
        if self.patience < 1:
            raise ConfigError("must be >= 1", field="patience")
        if self.pretrain_epochs < 0:
            raise ConfigError("must be >= 0", field="pretrain_epochs")
        if not self.pretrain_eta > 0:
            raise ConfigError("must be > 0", field="pretrain_eta")
        if self.batch_size < 1:
            raise ConfigError("must be >= 1", field="batch_size")
        if any(int(h) < 1 for h in self.hidden):
            raise ConfigError("hidden sizes must be >= 1", field="hidden")
        if self.activation not in nn_core.ACTIVATIONS:
            raise ConfigError(f"must be one of {nn_core.ACTIVATIONS}", field="activation")
        if self.mode == UNSUPERVISED and self.no_expansion:
            raise ConfigError("meta validation set would be empty "
                              "(unsupervised mode needs the expansion set)", field="no_expansion")
        self.meta.validate()
        self.adv.validate()
        return self

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        return run_config_from_dict(d)


def _build(klass, d, prefix):
    if not isinstance(d, dict):
        raise ConfigError("expected an object", field=prefix or None)
    names = {f.name: f for f in dataclasses.fields(klass)}
    kwargs = {}
    for key, value in d.items():
        path = f"{prefix}.{key}" if prefix else key
        if key not in names:
            raise ConfigError("unknown field", field=path)
        default = getattr(klass(), key)
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value, path)
            continue
        try:
            if isinstance(default, bool):
                if not isinstance(value, bool):
                    raise TypeError
            elif isinstance(default, int):
                if isinstance(value, bool) or int(value) != value:
                    raise TypeError
                value = int(value)
            elif isinstance(default, float):
                if isinstance(value, bool):
                    raise TypeError
                value = float(value)
            elif isinstance(default, tuple):
                value = tuple(int(v) for v in value)
            elif isinstance(default, str) and not isinstance(value, str):
                raise TypeError
        except (TypeError, ValueError):
            raise ConfigError(f"bad value {value!r} (expected {type(default).__name__})", field=path) from None
        kwargs[key] = value
    return klass(**kwargs)


def run_config_from_dict(d):
    """Build and validate a RunConfig from a (possibly partial) nested dict."""
    return _build(RunConfig, d, "").validate()


def variant_name(no_adversarial, no_expansion):
    if no_adversarial and no_expansion:
        return "w/o D,E"
    if no_adversarial:
        return "w/o D"
    if no_expansion:
        return "w/o E"
    return "DaMSTF"


@dataclass
class IterationReport:
    iteration: int
    variant: str
    target_f1: float
    macro_f1: float
    accuracy: float
    val_macro_f1: float
    mean_entropy_expansion: float
    validation_grad_norm: float
    expansion_error_rate: float
    n_expansion: int
    n_meta_train: int
    n_meta_validation: int
    bound: object = None

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class RunResult:
    reports: list
    params: np.ndarray            # snapshot with the best validation macro-F1
    final_params: np.ndarray
    pretrained: np.ndarray
    arch: Architecture
    trace: list
    weight_log: list              # (iteration, WeightRecord)
    diagnostics: list             # per-iteration probe data
    test_metrics: tuple = None    # evaluate() of ``params`` on the test split

    @property
    def macro_f1(self):
        return self.test_metrics[1] if self.test_metrics else float("nan")

    @property
    def best_report(self):
        if not self.reports:
            return None
        return max(self.reports, key=lambda r: (r.val_macro_f1, -r.iteration))


def evaluate(params, arch, test):
    """(f1 per class, macro F1, accuracy) for labeled examples."""
    if not test:
        raise ValueError("cannot evaluate on an empty test set")
    y = labels_of(test, "truth")
    pred = nn_core.predict_proba(params, arch, stack(test)).argmax(axis=1)
    return f1_scores(y, pred, arch.n_outputs)


def f1_scores(y, pred, n_classes):
    f1 = []
    for c in range(n_classes):
        tp = int(np.sum((pred == c) & (y == c)))
        fp = int(np.sum((pred == c) & (y != c)))
        fn = int(np.sum((pred != c) & (y == c)))
        denom = 2 * tp + fp + fn
        f1.append(2 * tp / denom if denom and tp else 0.0)
    return f1, float(np.mean(f1)), float(np.mean(pred == y))


def pretrain_on_source(params, arch, d_s, epochs, eta, seed, batch_size=32):
    """Plain mini-batch cross-entropy SGD on labeled source examples."""
    params = np.array(params, dtype=np.float64)
    if epochs == 0 or not d_s:
        return params
    X = stack(d_s)
    Y = nn_core.one_hot(labels_of(d_s), arch.n_outputs)
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        perm = rng.permutation(len(X))
        for i in range(0, len(X), batch_size):
            b = perm[i:i + batch_size]
            params = nn_core.axpy(params, -eta, nn_core.mean_gradient(params, arch, X[b], Y[b]))
    return params


def visible_subset(pool, fraction, seed):
    """First round(fraction * n) items of a seeded permutation; nested in ``fraction``."""
    n = len(pool)
    k = int(math.floor(fraction * n + 0.5))
    order = np.random.default_rng([seed, 1]).permutation(n)
    return [pool[i] for i in sorted(order[:k])]


def split_test_validation(test, seed):
    n = len(test)
    order = np.random.default_rng([seed, 2]).permutation(n)
    n_test = int(math.floor(TEST_SHARE * n + 0.5))
    return [test[i] for i in sorted(order[:n_test])], [test[i] for i in sorted(order[n_test:])]


def _has_truth(examples):
    return all(e.truth is not None for e in examples)


def run_damstf(bundle, cfg):
    cfg.validate()
    if cfg.mode == SEMI_SUPERVISED and not bundle.target_in_domain and cfg.no_expansion:
        raise ConfigError("meta validation set would be empty (no in-domain data and no expansion)")
    n_classes = max(labels_of(bundle.source_labeled).max() + 1, 2)
    dim = len(bundle.source_labeled[0].features)
    arch = Architecture((dim, *cfg.hidden, int(n_classes)), cfg.activation)
    seeds = cfg.seeds

    params = nn_core.init_params(arch, seeds.init)
    params = pretrain_on_source(params, arch, bundle.source_labeled, cfg.pretrain_epochs,
                                cfg.pretrain_eta, [seeds.shuffle, 0], cfg.batch_size)
    pretrained = params.copy()
    disc = make_discriminator(arch.feature_dim, [seeds.init, 1])

    in_domain = bundle.target_in_domain if cfg.mode == SEMI_SUPERVISED else []
    visible = visible_subset(bundle.target_unlabeled, cfg.exposure_fraction, seeds.data)
    test, val = split_test_validation(bundle.target_test, seeds.data)
    truth_pool = list(in_domain) + list(bundle.target_unlabeled) + list(bundle.target_test)
    with_bound = bool(truth_pool) and _has_truth(truth_pool)

    X_mix = stack(bundle.source_labeled + visible)
    dom_mix = [SOURCE] * len(bundle.source_labeled) + [e.domain for e in visible]

    reports, trace, weight_log, diagnostics = [], [], [], []
    best_val, best_params, stale = -np.inf, params, 0
    accumulated = []
    n_iters = cfg.max_iters
    if cfg.mode == UNSUPERVISED and not visible:
        n_iters = 0

    for it in range(1, n_iters + 1):
        phases = []
        prev = params.copy()
        pseudo = pseudo_label(params, arch, visible)
        phases += ["pseudo_label", "entropy"]
        k = 0 if cfg.no_expansion else expansion_size(cfg.k_fraction, len(pseudo))
        part = partition(pseudo, k)
        phases.append("partition")
        if cfg.no_expansion:
            expansion, remainder = [], pseudo
        elif cfg.accumulate_expansion:
            seen = {id(pe.base) for pe in accumulated}
            accumulated = accumulated + [pe for pe in part.expansion if id(pe.base) not in seen]
            in_exp = {id(pe.base) for pe in accumulated}
            expansion = accumulated
            remainder = [pe for pe in pseudo if id(pe.base) not in in_exp]
        else:
            expansion, remainder = part.expansion, part.remainder
        d_m = build_meta_validation(in_domain, expansion, cfg.mode, arch.n_outputs)
        phases.append("build_meta_validation")

        diag = {"iteration": it}
        if pseudo and _has_truth([pe.base for pe in pseudo]):
            diag["entropy_curve"] = entropy_error_curve(pseudo)
        if expansion:
            diag["probe_before"] = vanishment_probe(params, arch, expansion, d_m)

        if not cfg.no_adversarial:
            params, disc = run_adversarial_pass(params, arch, disc, X_mix, dom_mix, cfg.adv,
                                                [seeds.shuffle, it, 1])
            phases.append("domain_adversarial")
        if expansion:
            diag["probe_after"] = vanishment_probe(params, arch, expansion, d_m)
        diag["validation_grad_norm"] = float(np.linalg.norm(
            nn_core.mean_gradient(params, arch, d_m.X, d_m.Y)))

        pool = make_training_pool(bundle.source_labeled, remainder, arch.n_outputs)
        params, wlog = run_meta_pass(params, arch, pool, d_m, cfg.meta, [seeds.shuffle, it, 2])
        phases.append("meta_learning")
        weight_log += [(it, rec) for rec in wlog]
        trace.append(phases)

        f1, macro, acc = evaluate(params, arch, test) if test else ([np.nan], np.nan, np.nan)
        val_macro = evaluate(params, arch, val)[1] if val else np.nan
        bound = None
        if with_bound and (in_domain or expansion):
            bound = theorem2_report(params, prev, arch, in_domain, expansion, truth_pool)
        exp_truth = [pe.correct for pe in expansion]
        reports.append(IterationReport(
            iteration=it, variant=cfg.variant,
            target_f1=float(f1[-1]), macro_f1=float(macro), accuracy=float(acc),
            val_macro_f1=float(val_macro),
            mean_entropy_expansion=float(np.mean([pe.entropy for pe in expansion])) if expansion else float("nan"),
            validation_grad_norm=diag["validation_grad_norm"],
            expansion_error_rate=(float(np.mean([not c for c in exp_truth]))
                                  if expansion and None not in exp_truth else float("nan")),
            n_expansion=len(expansion), n_meta_train=len(pool), n_meta_validation=len(d_m),
            bound=bound,
        ))
        diagnostics.append(diag)

        if not val or val_macro > best_val:
            best_val, best_params, stale = val_macro, params.copy(), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    if not reports:
        best_params = pretrained
    metrics = evaluate(best_params, arch, test) if test else None
    return RunResult(reports=reports, params=best_params, final_params=params, pretrained=pretrained,
                     arch=arch, trace=trace, weight_log=weight_log, diagnostics=diagnostics,
                     test_metrics=metrics)


def exposure_sweep(bundle, cfg, fractions):
    """Run the driver once per exposure fraction; rows of (fraction, macro_f1)."""
    rows = []
    for f in sorted(fractions):
        if not 0.0 <= f <= 1.0:
            raise ConfigError(f"fraction {f} outside [0, 1]", field="fractions")
        run_cfg = dataclasses.replace(cfg, exposure_fraction=float(f))
        rows.append((float(f), run_damstf(bundle, run_cfg).macro_f1))
    return rows
