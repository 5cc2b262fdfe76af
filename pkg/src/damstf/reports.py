"""Serialization of run artifacts: JSON lines, CSV tables and the run manifest."""
import csv
import dataclasses
import json
import math
import os
import tempfile

import numpy as np

from .meta_learning import WeightRecord
from .theory import confidence_bucket

FORMAT_VERSION = "1"

SUMMARY_COLUMNS = ["iteration", "variant", "macro_f1", "target_f1", "accuracy", "val_macro_f1",
                   "mean_entropy_expansion", "validation_grad_norm", "expansion_error_rate",
                   "n_expansion", "n_meta_train", "n_meta_validation", "bound", "actual_target_error"]
WEIGHT_COLUMNS = ["iteration", "example_id", "domain", "supervision_source", "confidence",
                  "confidence_bucket", "correct_flag", "sigma_w"]
ENTROPY_COLUMNS = ["iteration", "selection_ratio", "n_selected", "error_rate", "mean_loss"]
EXPANSION_COLUMNS = ["iteration", "loss_before", "loss_after", "grad_norm_before", "grad_norm_after"]
WEIGHT_DIST_COLUMNS = ["confidence_bucket", "correct", "bin_lo", "bin_hi", "count", "density"]
BOUND_COLUMNS = ["iteration", "eps_val", "hdh_term", "rho", "eps_expansion", "bound",
                 "actual_target_error", "hdh_method"]
EXPOSURE_COLUMNS = ["fraction", "macro_f1", "seed"]


def clean(obj):
    """Make an object JSON-safe: dataclasses to dicts, numpy scalars to floats, NaN to None."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        obj = dataclasses.asdict(obj)
    if isinstance(obj, dict):
        return {k: clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if math.isnan(obj) else float(obj)
    return obj


def write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    write_atomic(path, json.dumps(clean(obj), indent=2, sort_keys=True) + "\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_jsonl(path, rows):
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(clean(row), sort_keys=True) + "\n")


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summary_rows(reports):
    for r in reports:
        b = r.bound
        yield [r.iteration, r.variant, r.macro_f1, r.target_f1, r.accuracy, r.val_macro_f1,
               r.mean_entropy_expansion, r.validation_grad_norm, r.expansion_error_rate,
               r.n_expansion, r.n_meta_train, r.n_meta_validation,
               b.bound if b else None, b.actual_target_error if b else None]


def weight_rows(weight_log):
    for it, rec in weight_log:
        yield [it, rec.example_id, rec.domain, rec.supervision_source, rec.confidence,
               confidence_bucket(rec.confidence), rec.correct, rec.sigma_w]


def load_weight_log(path):
    out = []
    for row in read_csv(path):
        flag = row["correct_flag"]
        out.append((int(row["iteration"]), WeightRecord(
            example_id=row["example_id"], domain=row["domain"],
            supervision_source=row["supervision_source"],
            confidence=float(row["confidence"]) if row["confidence"] else float("nan"),
            correct=None if flag == "" else flag == "1",
            sigma_w=float(row["sigma_w"]))))
    return out


def bound_rows(report_dicts):
    for r in report_dicts:
        b = r.get("bound")
        if not b:
            continue
        yield [r["iteration"], b["eps_val"], b["hdh_term"], b["rho"], b["eps_expansion"],
               b["bound"], b["actual_target_error"], b["hdh_method"]]


def entropy_rows(diagnostics):
    for d in diagnostics:
        for ratio, n, err, loss in d.get("entropy_curve") or []:
            yield [d["iteration"], ratio, n, err, loss]


def expansion_rows(diagnostics):
    for d in diagnostics:
        if d.get("probe_before") is None or d.get("probe_after") is None:
            continue
        (g0, l0), (g1, l1) = d["probe_before"], d["probe_after"]
        yield [d["iteration"], l0, l1, g0, g1]
