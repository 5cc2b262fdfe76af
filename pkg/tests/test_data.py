import json
import math

import numpy as np
import pytest

from damstf import nn_core
from damstf.data import (DatasetBundle, Example, flip_labels, gen_shifted_gaussians, load_bundle,
                         load_jsonl, parse_example, save_bundle, stack)
from damstf.errors import ParseError, SchemaError
from damstf.nn_core import Architecture
from damstf.self_training import evaluate, pretrain_on_source


def test_zero_shift_domains_match():
    b = gen_shifted_gaussians(0, n_source=4000, n_target_unlabeled=4000, shift_angle=0.0)
    Xs, Xt = stack(b.source_labeled), stack(b.target_unlabeled)
    assert np.allclose(Xs.mean(axis=0), Xt.mean(axis=0), atol=0.1)
    assert np.allclose(np.cov(Xs.T), np.cov(Xt.T), atol=0.2)


def test_target_is_rotated_and_translated():
    # same labels and noise draw with and without shift: the map is exactly affine
    angle = 0.6
    b0 = gen_shifted_gaussians(3, shift_angle=0.0)
    b1 = gen_shifted_gaussians(3, shift_angle=angle)
    X0, X1 = stack(b0.target_test), stack(b1.target_test)
    c, s = math.cos(angle), math.sin(angle)
    expected = np.column_stack([c * X0[:, 0] - s * X0[:, 1] + angle, s * X0[:, 0] + c * X0[:, 1]])
    assert np.allclose(X1, expected, atol=1e-12)


def test_same_seed_same_bundle():
    a, b = gen_shifted_gaussians(9), gen_shifted_gaussians(9)
    for name, exs in a.splits().items():
        other = b.splits()[name]
        assert np.array_equal(stack(exs), stack(other))
        assert [e.truth for e in exs] == [e.truth for e in other]


def test_bundle_sizes_labels_and_balance():
    b = gen_shifted_gaussians(1, n_source=10, n_target_unlabeled=7, n_in_domain=3, n_test=5)
    assert [len(v) for v in b.splits().values()] == [10, 7, 3, 5]
    assert all(e.label is None and e.true_label is not None for e in b.target_unlabeled)
    assert all(e.domain == "target" for e in b.target_test)
    assert sum(e.label for e in b.source_labeled) == 5
    b.check_disjoint()


def test_source_only_classifier_degrades_on_target():
    arch = Architecture((2, 16, 2))
    gaps = []
    for seed in range(5):
        b = gen_shifted_gaussians(seed)
        p = pretrain_on_source(nn_core.init_params(arch, seed), arch, b.source_labeled, 20, 0.1, seed)
        src = evaluate(p, arch, b.source_labeled)[2]
        tgt = evaluate(p, arch, b.target_test)[2]
        gaps.append(src - tgt)
    assert np.mean(gaps) > 0


def test_zero_shift_accuracy_gap_small():
    arch = Architecture((2, 16, 2))
    b = gen_shifted_gaussians(2, n_test=2000, shift_angle=0.0)
    p = pretrain_on_source(nn_core.init_params(arch, 2), arch, b.source_labeled, 20, 0.1, 2)
    assert abs(evaluate(p, arch, b.source_labeled)[2] - evaluate(p, arch, b.target_test)[2]) < 0.03


def test_negative_sizes_rejected():
    with pytest.raises(ValueError):
        gen_shifted_gaussians(0, n_test=-1)


def test_parse_labeled_line():
    ex = parse_example(json.loads('{"features":[0.0,1.0],"label":1,"domain":"source"}'))
    assert ex.label == 1 and ex.domain == "source"
    assert np.array_equal(ex.features, [0.0, 1.0])


def test_parse_null_label():
    ex = parse_example({"features": [0.5], "label": None, "domain": "target"})
    assert ex.label is None and not ex.labeled


@pytest.mark.parametrize("obj", [
    {"label": 1},
    {"features": "abc"},
    {"features": [[1.0], [2.0]]},
    {"features": [1.0], "label": -1},
    {"features": [1.0], "label": 1.5},
    {"features": [1.0], "domain": "elsewhere"},
])
def test_parse_schema_errors(obj):
    with pytest.raises(SchemaError):
        parse_example(obj)


def test_feature_length_change_is_schema_error(tmp_path):
    path = tmp_path / "x.jsonl"
    path.write_text('{"features":[0.0,1.0],"label":1}\n{"features":[0.0],"label":0}\n')
    with pytest.raises(SchemaError, match="line 2"):
        load_jsonl(path)


def test_malformed_line_reports_line_number(tmp_path):
    path = tmp_path / "x.jsonl"
    path.write_text('{"features":[0.0],"label":1}\n\n{"features":[1.0],\n')
    with pytest.raises(ParseError) as err:
        load_jsonl(path)
    assert err.value.line == 3


def test_bundle_round_trip_is_exact(tmp_path):
    b = gen_shifted_gaussians(4, n_source=20, n_target_unlabeled=10, n_in_domain=5, n_test=8)
    save_bundle(b, tmp_path)
    back = load_bundle(tmp_path)
    for name, exs in b.splits().items():
        other = back.splits()[name]
        assert np.array_equal(stack(exs), stack(other))
        assert [(e.label, e.truth, e.domain, e.uid) for e in exs] == \
            [(e.label, e.truth, e.domain, e.uid) for e in other]


def test_bundle_requires_source_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_bundle(tmp_path)


def test_unlabeled_file_must_not_carry_labels(tmp_path):
    (tmp_path / "source.jsonl").write_text('{"features":[0.0],"label":1}\n')
    (tmp_path / "target_unlabeled.jsonl").write_text('{"features":[0.0],"label":1,"domain":"target"}\n')
    with pytest.raises(SchemaError):
        load_bundle(tmp_path)


def test_bundle_mode():
    b = gen_shifted_gaussians(0, n_source=4, n_target_unlabeled=4, n_in_domain=0, n_test=4)
    assert b.mode == "unsupervised"
    assert DatasetBundle(b.source_labeled, b.target_unlabeled, b.source_labeled[:1]).mode == "semi_supervised"


def _labeled(n):
    return [Example(np.zeros(1), label=i % 2) for i in range(n)]


def test_flip_fraction_zero():
    out, mask = flip_labels(_labeled(10), 0.0, 0)
    assert not any(mask)
    assert [e.label for e in out] == [i % 2 for i in range(10)]


def test_flip_fraction_one():
    src = _labeled(10)
    out, mask = flip_labels(src, 1.0, 0)
    assert all(mask)
    assert all(a.label != b.label for a, b in zip(src, out))


def test_flip_exact_count_and_truth_kept():
    src = _labeled(10)
    out, mask = flip_labels(src, 0.3, 7)
    assert sum(mask) == 3
    for e, o, m in zip(src, out, mask):
        assert (e.label != o.label) == m
        assert o.truth == e.label


def test_flip_rejects_non_binary():
    with pytest.raises(ValueError):
        flip_labels([Example(np.zeros(1), label=2)], 0.5, 0)
