"""Examples, synthetic shifted-Gaussian benchmark, JSONL ingestion, label noise."""
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, SchemaError

SOURCE = "source"
TARGET = "target"
DOMAINS = (SOURCE, TARGET)

BUNDLE_FILES = {
    "source_labeled": "source.jsonl",
    "target_unlabeled": "target_unlabeled.jsonl",
    "target_in_domain": "in_domain.jsonl",
    "target_test": "target_test.jsonl",
}


@dataclass(frozen=True, eq=False)
class Example:
    features: np.ndarray
    label: int = None
    domain: str = SOURCE
    # hidden ground truth for unlabeled synthetic data; never used for training
    true_label: int = None
    uid: str = ""

    @property
    def labeled(self):
        return self.label is not None

    @property
    def truth(self):
        return self.true_label if self.true_label is not None else self.label

    def to_json(self):
        d = {
            "features": [float(v) for v in self.features],
            "label": self.label,
            "domain": self.domain,
        }
        if self.true_label is not None:
            d["true_label"] = self.true_label
        if self.uid:
            d["id"] = self.uid
        return d


@dataclass
class DatasetBundle:
    source_labeled: list
    target_unlabeled: list
    target_in_domain: list = field(default_factory=list)
    target_test: list = field(default_factory=list)

    @property
    def mode(self):
        return "semi_supervised" if self.target_in_domain else "unsupervised"

    def splits(self):
        return {name: getattr(self, name) for name in BUNDLE_FILES}

    def check_disjoint(self):
        seen = {}
        for name, examples in self.splits().items():
            for ex in examples:
                key = id(ex)
                if key in seen:
                    raise SchemaError(f"example shared between {seen[key]} and {name}")
                seen[key] = name


def stack(examples):
    """Features of a list of examples as an (n, d) array."""
    if not examples:
        return np.zeros((0, 0))
    return np.stack([np.asarray(e.features, dtype=np.float64) for e in examples])


def labels_of(examples, attr="label"):
    return np.array([getattr(e, attr) for e in examples], dtype=np.int64)


# class means sit at +-CLASS_OFFSET on the first axis
CLASS_OFFSET = 2.0
# translation of the target domain along the first axis per radian of rotation
TRANSLATION_PER_RADIAN = 1.0


def rotation(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def _draw(rng, n, noise_std, domain, shift_angle, prefix, hide_labels):
    n0 = n // 2
    labels = np.array([0] * n0 + [1] * (n - n0), dtype=np.int64)
    rng.shuffle(labels)
    means = np.where(labels[:, None] == 1, CLASS_OFFSET, -CLASS_OFFSET) * np.array([1.0, 0.0])
    X = means + noise_std * rng.standard_normal((n, 2))
    if domain == TARGET:
        X = X @ rotation(shift_angle).T + np.array([TRANSLATION_PER_RADIAN * shift_angle, 0.0])
    out = []
    for i in range(n):
        y = int(labels[i])
        out.append(Example(
            features=X[i].copy(),
            label=None if hide_labels else y,
            domain=domain,
            true_label=y if hide_labels else None,
            uid=f"{prefix}{i}",
        ))
    return out


def gen_shifted_gaussians(seed, n_source=400, n_target_unlabeled=400, n_in_domain=100,
                          n_test=400, shift_angle=math.pi / 4, noise_std=1.0):
    """Two-class 2-D Gaussians; the target domain is rotated by ``shift_angle``
    about the origin and translated along the first axis in proportion to it.

    Unlabeled target examples keep their hidden class in ``true_label`` so
    diagnostics can score pseudo labels.
    """
    for name, n in [("n_source", n_source), ("n_target_unlabeled", n_target_unlabeled),
                    ("n_in_domain", n_in_domain), ("n_test", n_test)]:
        if n < 0:
            raise ValueError(f"{name} must be >= 0")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    rng = np.random.default_rng(seed)
    bundle = DatasetBundle(
        source_labeled=_draw(rng, n_source, noise_std, SOURCE, shift_angle, "s", False),
        target_unlabeled=_draw(rng, n_target_unlabeled, noise_std, TARGET, shift_angle, "u", True),
        target_in_domain=_draw(rng, n_in_domain, noise_std, TARGET, shift_angle, "l", False),
        target_test=_draw(rng, n_test, noise_std, TARGET, shift_angle, "t", False),
    )
    return bundle


def parse_example(obj, lineno=None):
    if not isinstance(obj, dict):
        raise SchemaError(f"line {lineno}: expected a JSON object")
    try:
        feats = np.asarray(obj["features"], dtype=np.float64)
    except KeyError:
        raise SchemaError(f"line {lineno}: missing 'features'") from None
    except (TypeError, ValueError):
        raise SchemaError(f"line {lineno}: 'features' must be a list of numbers") from None
    if feats.ndim != 1:
        raise SchemaError(f"line {lineno}: 'features' must be a flat list")
    label = obj.get("label")
    if label is not None and (isinstance(label, bool) or not isinstance(label, int) or label < 0):
        raise SchemaError(f"line {lineno}: 'label' must be a non-negative integer or null")
    domain = obj.get("domain", SOURCE)
    if domain not in DOMAINS:
        raise SchemaError(f"line {lineno}: 'domain' must be one of {DOMAINS}")
    true_label = obj.get("true_label")
    return Example(features=feats, label=label, domain=domain,
                   true_label=true_label, uid=str(obj.get("id", "")))


def load_jsonl(path):
    examples = []
    dim = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise ParseError(f"malformed JSON ({err.msg})", line=lineno) from None
            ex = parse_example(obj, lineno)
            if dim is None:
                dim = ex.features.shape[0]
            elif ex.features.shape[0] != dim:
                raise SchemaError(
                    f"line {lineno}: feature length {ex.features.shape[0]} differs from first line ({dim})")
            examples.append(ex)
    return examples


def save_jsonl(examples, path):
    # json emits repr() floats, which round-trip float64 exactly
    with open(path, "w") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json()) + "\n")


def save_bundle(bundle, directory):
    os.makedirs(directory, exist_ok=True)
    paths = {}
    for name, fname in BUNDLE_FILES.items():
        path = os.path.join(directory, fname)
        save_jsonl(getattr(bundle, name), path)
        paths[name] = path
    return paths


def load_bundle(directory):
    kwargs = {}
    for name, fname in BUNDLE_FILES.items():
        path = os.path.join(directory, fname)
        kwargs[name] = load_jsonl(path) if os.path.exists(path) else []
        if name == "source_labeled" and not os.path.exists(path):
            raise FileNotFoundError(path)
    bundle = DatasetBundle(**kwargs)
    dims = {len(e.features) for exs in bundle.splits().values() for e in exs}
    if len(dims) > 1:
        raise SchemaError(f"inconsistent feature lengths across files: {sorted(dims)}")
    for e in bundle.target_unlabeled:
        if e.label is not None:
            raise SchemaError("target_unlabeled.jsonl must not carry labels")
    return bundle


def flip_labels(examples, fraction, seed):
    """Flip exactly round(fraction * n) binary labels; returns (examples, mask)."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    n = len(examples)
    if any(e.label is None for e in examples):
        raise ValueError("flip_labels needs labeled examples")
    if any(e.label not in (0, 1) for e in examples):
        raise ValueError("flip_labels is defined for binary labels only")
    n_flip = int(math.floor(fraction * n + 0.5))
    rng = np.random.default_rng(seed)
    idx = rng.permutation(n)[:n_flip]
    mask = np.zeros(n, dtype=bool)
    mask[idx] = True
    out = []
    for e, flip in zip(examples, mask):
        if flip:
            e = Example(features=e.features, label=1 - e.label, domain=e.domain,
                        true_label=e.label, uid=e.uid)
        out.append(e)
    return out, mask.tolist()
