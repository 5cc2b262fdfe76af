"""Command line: generate data, train, sweep exposure, export diagnostics.

Every command that produces results also writes ``manifest.json``; passing it
back with ``--manifest`` reruns the command with the same resolved inputs.
Explicit flags win over the manifest, which wins over built-in defaults.

Exit codes: 0 ok, 2 config/validation, 3 I/O, 4 internal invariant.
"""
import argparse
import copy
import dataclasses
import hashlib
import logging
import math
import os
import sys

from . import plots, reports
from .data import BUNDLE_FILES, gen_shifted_gaussians, load_bundle, save_bundle
from .errors import ConfigError, InvariantError, ParseError, SchemaError
from .meta_constructor import SEMI_SUPERVISED, UNSUPERVISED
from .self_training import PHASES, RunConfig, exposure_sweep, run_config_from_dict, run_damstf
from .theory import weight_distribution_export

log = logging.getLogger("damstf")

OUTPUT_ENV = "DAMSTF_OUTPUT_DIR"
SMOKE_DATA = os.path.join(os.path.dirname(__file__), "smoke_data")
DEFAULT_FRACTIONS = (0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
MODE_FLAGS = {"semi": SEMI_SUPERVISED, "unsup": UNSUPERVISED}
ABLATIONS = {"none": (False, False), "D": (True, False), "E": (False, True), "DE": (True, True)}

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INVARIANT = 0, 2, 3, 4

GENERATE_DEFAULTS = {"seed": 0, "shift_angle": math.pi / 4, "n_source": 400, "n_target": 400,
                     "n_in_domain": 100, "n_test": 400, "noise_std": 1.0}


def parse_fractions(text):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"not a comma separated list of numbers: {text!r}", field="fractions") from None
    if not vals:
        raise ConfigError("empty list", field="fractions")
    for v in vals:
        if not 0.0 <= v <= 1.0:
            raise ConfigError(f"fraction {v} outside [0, 1]", field="fractions")
    return vals


def parse_seeds(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"not a comma separated list of integers: {text!r}", field="seeds") from None


def _out_dir(args):
    out = args.out or os.environ.get(OUTPUT_ENV)
    if not out:
        raise ConfigError(f"no output directory (pass --out or set {OUTPUT_ENV})", field="out")
    os.makedirs(out, exist_ok=True)
    return out


def _load_manifest(path, command):
    if path is None:
        return None
    m = reports.read_json(path)
    if m.get("command") != command:
        raise ConfigError(f"manifest was written by {m.get('command')!r}, not {command!r}", field="manifest")
    if m.get("format_version") != reports.FORMAT_VERSION:
        raise ConfigError(f"unsupported format version {m.get('format_version')!r}", field="manifest")
    return m


def _pick(flag, manifest, key, default):
    if flag is not None:
        return flag
    if manifest is not None and key in manifest["args"]:
        return manifest["args"][key]
    return default


def _digest(directory):
    out = {}
    for fname in sorted(BUNDLE_FILES.values()):
        path = os.path.join(directory, fname)
        if os.path.exists(path):
            with open(path, "rb") as fh:
                out[fname] = hashlib.sha256(fh.read()).hexdigest()
    return out


def _merge(base, override, prefix=""):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v, f"{prefix}{k}.")
        else:
            out[k] = v
    return out


def resolve_run_config(args, manifest):
    """RunConfig from defaults < manifest < --config file < flags."""
    cfg = RunConfig().to_dict()
    if manifest is not None:
        cfg = _merge(cfg, manifest["config"])
    if getattr(args, "config", None):
        user = reports.read_json(args.config)
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = _merge(cfg, user)
    if args.mode is not None:
        cfg["mode"] = MODE_FLAGS[args.mode]
    if args.ablate is not None:
        cfg["no_adversarial"], cfg["no_expansion"] = ABLATIONS[args.ablate]
    if getattr(args, "seed", None) is not None:
        cfg["seeds"] = {"data": args.seed, "init": args.seed, "shuffle": args.seed}
    if getattr(args, "max_iters", None) is not None:
        cfg["max_iters"] = args.max_iters
    if getattr(args, "exposure", None) is not None:
        cfg["exposure_fraction"] = args.exposure
    return run_config_from_dict(cfg)


def _resolve_data(args, manifest):
    if getattr(args, "smoke", False):
        return SMOKE_DATA
    if args.data is not None:
        return os.path.abspath(args.data)
    if manifest is not None:
        data = manifest["args"]["data"]
        if manifest.get("data_digest") and _digest(data) != manifest["data_digest"]:
            raise ConfigError(f"files under {data} changed since the manifest was written", field="data")
        return data
    raise ConfigError("no dataset (pass --data DIR or --smoke)", field="data")


def _manifest(command, args, artifacts, **extra):
    m = {"format_version": reports.FORMAT_VERSION, "command": command, "args": args,
         "artifacts": artifacts}
    m.update(extra)
    return m


def cmd_generate(args):
    manifest = _load_manifest(args.manifest, "generate")
    resolved = {k: _pick(getattr(args, k), manifest, k, d) for k, d in GENERATE_DEFAULTS.items()}
    for k in ("n_source", "n_target", "n_in_domain", "n_test"):
        if resolved[k] < 0:
            raise ConfigError("must be >= 0", field=k)
    if resolved["n_source"] < 1:
        raise ConfigError("at least one source example is needed", field="n_source")
    if not resolved["noise_std"] >= 0:
        raise ConfigError("must be >= 0", field="noise_std")
    out = _out_dir(args)
    bundle = gen_shifted_gaussians(resolved["seed"], n_source=resolved["n_source"],
                                   n_target_unlabeled=resolved["n_target"],
                                   n_in_domain=resolved["n_in_domain"], n_test=resolved["n_test"],
                                   shift_angle=resolved["shift_angle"], noise_std=resolved["noise_std"])
    paths = save_bundle(bundle, out)
    artifacts = {k: os.path.basename(p) for k, p in paths.items()}
    reports.write_json(os.path.join(out, "manifest.json"), _manifest("generate", resolved, artifacts))
    log.info("wrote %d files to %s", len(paths), out)
    return EXIT_OK


TRAIN_ARTIFACTS = {"reports": "reports.jsonl", "summary": "summary.csv", "weights": "weights.csv",
                   "diagnostics": "diagnostics.json", "model": "model.json"}


def check_run_invariants(result):
    for phases in result.trace:
        order = [PHASES.index(p) for p in phases]
        if order != sorted(order):
            raise InvariantError(f"phases ran out of order: {phases}")
    for r in result.reports:
        if r.bound is not None and not r.bound.holds:
            raise InvariantError(f"iteration {r.iteration}: target error {r.bound.actual_target_error} "
                                 f"exceeds the assembled bound {r.bound.bound}")


def write_run(out, result, cfg):
    reports.write_jsonl(os.path.join(out, TRAIN_ARTIFACTS["reports"]), [r.to_dict() for r in result.reports])
    reports.write_csv(os.path.join(out, TRAIN_ARTIFACTS["summary"]), reports.SUMMARY_COLUMNS,
                      reports.summary_rows(result.reports))
    reports.write_csv(os.path.join(out, TRAIN_ARTIFACTS["weights"]), reports.WEIGHT_COLUMNS,
                      reports.weight_rows(result.weight_log))
    reports.write_json(os.path.join(out, TRAIN_ARTIFACTS["diagnostics"]), result.diagnostics)
    reports.write_json(os.path.join(out, TRAIN_ARTIFACTS["model"]), {
        "layer_dims": list(result.arch.layer_dims), "activation": result.arch.activation,
        "params": result.params, "pretrained": result.pretrained,
        "test_metrics": result.test_metrics, "variant": cfg.variant,
    })


def cmd_train(args):
    manifest = _load_manifest(args.manifest, "train")
    data = _resolve_data(args, manifest)
    cfg = resolve_run_config(args, manifest)
    bundle = load_bundle(data)
    out = _out_dir(args)
    m = _manifest("train", {"data": data}, TRAIN_ARTIFACTS, config=cfg.to_dict(),
                  seeds=dataclasses.asdict(cfg.seeds), data_digest=_digest(data), status="running")
    path = os.path.join(out, "manifest.json")
    reports.write_json(path, m)
    result = run_damstf(bundle, cfg)
    check_run_invariants(result)
    write_run(out, result, cfg)
    m["status"] = "complete"
    m["iterations"] = len(result.reports)
    reports.write_json(path, m)
    log.info("%s: %d iterations, test macro-F1 %.4f", cfg.variant, len(result.reports), result.macro_f1)
    return EXIT_OK


def cmd_sweep(args):
    manifest = _load_manifest(args.manifest, "sweep")
    data = _resolve_data(args, manifest)
    cfg = resolve_run_config(args, manifest)
    fractions = parse_fractions(args.fractions) if args.fractions is not None else \
        _pick(None, manifest, "fractions", list(DEFAULT_FRACTIONS))
    seeds = parse_seeds(args.seeds) if args.seeds is not None else _pick(None, manifest, "seeds", [0])
    bundle = load_bundle(data)
    out = _out_dir(args)
    artifacts = {"exposure": "exposure.csv", "figure": "exposure.png"}
    reports.write_json(os.path.join(out, "manifest.json"), _manifest(
        "sweep", {"data": data, "fractions": fractions, "seeds": seeds}, artifacts,
        config=cfg.to_dict(), data_digest=_digest(data)))
    rows = []
    for s in seeds:
        run_cfg = dataclasses.replace(cfg, seeds=dataclasses.replace(cfg.seeds, data=s, init=s, shuffle=s))
        rows += [(f, f1, s) for f, f1 in exposure_sweep(bundle, run_cfg, fractions)]
    rows.sort(key=lambda r: (r[0], r[2]))
    reports.write_csv(os.path.join(out, artifacts["exposure"]), reports.EXPOSURE_COLUMNS, rows)
    plots.exposure(rows, os.path.join(out, artifacts["figure"]))
    return EXIT_OK


def cmd_diagnose(args):
    run = args.run
    for name in ("reports", "weights", "diagnostics"):
        path = os.path.join(run, TRAIN_ARTIFACTS[name])
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing run artifact {path}")
    out = args.out or run
    os.makedirs(out, exist_ok=True)
    report_dicts = reports.read_jsonl(os.path.join(run, TRAIN_ARTIFACTS["reports"]))
    diagnostics = reports.read_json(os.path.join(run, TRAIN_ARTIFACTS["diagnostics"]))
    weight_log = reports.load_weight_log(os.path.join(run, TRAIN_ARTIFACTS["weights"]))
    # weights as they stand after the last logged iteration
    last = max((it for it, _ in weight_log), default=None)
    final_weights = [rec for it, rec in weight_log if it == last]

    tables = [
        ("entropy_vs_error", reports.ENTROPY_COLUMNS, list(reports.entropy_rows(diagnostics)),
         plots.entropy_vs_error),
        ("expansion_loss", reports.EXPANSION_COLUMNS, list(reports.expansion_rows(diagnostics)),
         plots.expansion_loss),
        ("weight_distribution", reports.WEIGHT_DIST_COLUMNS, weight_distribution_export(final_weights),
         plots.weight_distribution),
        ("bound_trace", reports.BOUND_COLUMNS, list(reports.bound_rows(report_dicts)), plots.bound_trace),
    ]
    for name, columns, rows, figure in tables:
        csv_path = os.path.join(out, name + ".csv")
        reports.write_csv(csv_path, columns, rows)
        if rows:
            figure(reports.read_csv(csv_path), os.path.join(out, name + ".png"))
    return EXIT_OK


def _add_run_flags(p):
    p.add_argument("--data", help="directory holding the dataset JSONL files")
    p.add_argument("--smoke", action="store_true", help="use the small dataset shipped with the package")
    p.add_argument("--config", help="JSON file with RunConfig fields (partial is fine)")
    p.add_argument("--mode", choices=sorted(MODE_FLAGS))
    p.add_argument("--ablate", choices=list(ABLATIONS))
    p.add_argument("--max-iters", type=int)
    p.add_argument("--manifest", help="rerun from a manifest.json written by this command")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV})")


def build_parser():
    parser = argparse.ArgumentParser(prog="damstf", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write the shifted-Gaussian benchmark as JSONL")
    g.add_argument("--seed", type=int)
    g.add_argument("--shift-angle", type=float, help="radians (default pi/4)")
    g.add_argument("--n-source", type=int)
    g.add_argument("--n-target", type=int, help="unlabeled target examples")
    g.add_argument("--n-in-domain", type=int)
    g.add_argument("--n-test", type=int)
    g.add_argument("--noise-std", type=float)
    g.add_argument("--manifest")
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="run meta self-training on a dataset")
    _add_run_flags(t)
    t.add_argument("--seed", type=int, help="sets the data, init and shuffle seeds")
    t.add_argument("--exposure", type=float, help="fraction of unlabeled target data to use")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="macro-F1 as a function of exposed unlabeled data")
    _add_run_flags(s)
    s.add_argument("--fractions", help="comma list in [0, 1] (default 0,0.05,0.1,0.2,...,1)")
    s.add_argument("--seeds", help="comma list of seeds (default 0)")
    s.set_defaults(func=cmd_sweep)

    d = sub.add_parser("diagnose", help="export diagnostic tables and figures for a finished run")
    d.add_argument("--run", required=True)
    d.add_argument("--out", help="defaults to the run directory")
    d.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SchemaError, ParseError, ValueError) as e:
        print(f"damstf: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"damstf: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except InvariantError as e:
        print(f"damstf: invariant violated: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except Exception:
        log.exception("unexpected failure")
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
