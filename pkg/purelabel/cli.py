"""
.. module:: cli
   :platform: Unix, Windows
   :synopsis: Command-line pipelines (synth, corrupt, purify, retrain, eval, report)

.. moduleauthor:: purelabel contributors

Every subcommand writes a run manifest (resolved config, input digests, seeds,
version, timestamps) next to its primary output. A manifest is accepted back
as ``--config``, which replays the run.

Numerical modules are imported inside the subcommands so that ``--threads``
can pin the BLAS thread pools before numpy loads.
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from multi_key_dict import multi_key_dict

from . import __version__
from .errors import InvalidSpecError, PurifyError

logger = logging.getLogger(__name__)

#: Version of the JSON config and manifest format
CONFIG_VERSION = 1

# Each purify config field is reachable under its argparse dest and its dotted
# JSON path; the value is the path into the nested config dict.
FLAG_FIELDS = multi_key_dict()
FLAG_FIELDS["alpha", "ipc.alpha"] = ("ipc", "alpha")
FLAG_FIELDS["lam", "ipc.lam"] = ("ipc", "lam")
FLAG_FIELDS["eta_i", "ipc.eta_i"] = ("ipc", "eta_i")
FLAG_FIELDS["ipc_gamma_ent", "ipc.gamma_ent"] = ("ipc", "gamma_ent")
FLAG_FIELDS["val_batch", "ipc.val_batch"] = ("ipc", "val_batch")
FLAG_FIELDS["gram_scale", "ipc.gram_scale"] = ("ipc", "gram_scale")
FLAG_FIELDS["bias_feature", "ipc.bias_feature"] = ("ipc", "bias_feature")
FLAG_FIELDS["eta_e", "eac.eta_e"] = ("eac", "eta_e")
FLAG_FIELDS["period", "eac.period"] = ("eac", "period")
FLAG_FIELDS["eac_gamma_ent", "eac.gamma_ent"] = ("eac", "gamma_ent")
FLAG_FIELDS["lr", "eac.optimizer.step_size"] = ("eac", "optimizer", "step_size")
FLAG_FIELDS["beta1", "eac.optimizer.beta1"] = ("eac", "optimizer", "beta1")
FLAG_FIELDS["beta2", "eac.optimizer.beta2"] = ("eac", "optimizer", "beta2")
FLAG_FIELDS["epsilon", "eac.optimizer.epsilon"] = ("eac", "optimizer", "epsilon")
FLAG_FIELDS["eac_seed", "eac.seed"] = ("eac", "seed")
FLAG_FIELDS["blend_space", "eac.blend_space"] = ("eac", "blend_space")
FLAG_FIELDS["hard_targets", "eac.hard_targets"] = ("eac", "hard_targets")
FLAG_FIELDS["use_bias", "eac.use_bias"] = ("eac", "use_bias")
FLAG_FIELDS["eac_steps", "eac.steps_per_iter"] = ("eac", "steps_per_iter")
FLAG_FIELDS["eac_init_std", "eac.init_std"] = ("eac", "init_std")
FLAG_FIELDS["batch", "batch_size"] = ("batch_size",)
FLAG_FIELDS["epochs"] = ("epochs",)
FLAG_FIELDS["seed", "shuffle_seed"] = ("shuffle_seed",)
FLAG_FIELDS["mode"] = ("mode",)
FLAG_FIELDS["init_scale"] = ("init_scale",)
FLAG_FIELDS["normalize_features"] = ("normalize_features",)
FLAG_FIELDS["val_fraction"] = ("val_fraction",)
FLAG_FIELDS["deterministic"] = ("deterministic",)

# Same scheme for the retrain config
TRAIN_FIELDS = multi_key_dict()
TRAIN_FIELDS["epochs"] = ("epochs",)
TRAIN_FIELDS["batch"] = ("batch",)
TRAIN_FIELDS["seed"] = ("seed",)
TRAIN_FIELDS["weight_decay"] = ("weight_decay",)
TRAIN_FIELDS["lr", "optimizer.step_size"] = ("optimizer", "step_size")
TRAIN_FIELDS["use_bias"] = ("use_bias",)

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


@dataclass
class RunManifest:
    """Provenance of one CLI run."""
    command: str
    argv: list
    config: dict
    inputs: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    version: str = __version__
    started: str = ""
    finished: str = ""

    def write(self, path):
        with Path(path).open("w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def file_digest(path) -> str:
    """sha256 of a file's bytes"""
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _digests(**paths) -> dict:
    return {name: {"path": str(p), "sha256": file_digest(p)}
            for name, p in paths.items() if p is not None}


def _set_path(values: dict, path: tuple, value):
    for key in path[:-1]:
        values = values.setdefault(key, {})
    values[path[-1]] = value


def _merge(base: dict, override: dict):
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value


def read_config_file(path, table: multi_key_dict) -> dict:
    """Reads a JSON config (or a run manifest) into a nested dict.

    Dotted top-level keys such as ``"ipc.alpha"`` are expanded through the
    flag table.

    :raises: InvalidSpecError on a wrong version or unknown key
    """
    with Path(path).open(encoding="utf-8") as fh:
        raw = json.load(fh)
    if "command" in raw and "config" in raw:
        raw = raw["config"]
    raw = dict(raw)
    version = raw.pop("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise InvalidSpecError(
            "{}: unsupported config version {}".format(path, version))
    nested = {}
    for key, value in raw.items():
        if "." in key:
            try:
                _set_path(nested, table[key], value)
            except KeyError:
                raise InvalidSpecError("{}: unknown config key {!r}".format(path, key))
        elif isinstance(value, dict) and isinstance(nested.get(key), dict):
            _merge(nested[key], value)
        else:
            nested[key] = value
    return nested


def thread_count(args) -> int:
    """BLAS threads for a run.

    ``--threads`` wins. Otherwise a deterministic purify run (the default) gets
    one thread, and ``--no-deterministic`` or ``"deterministic": false`` in the
    config file releases every core.
    """
    if args.threads is not None:
        return args.threads
    deterministic = getattr(args, "deterministic", None)
    if args.command == "purify" and deterministic is None and args.config:
        deterministic = read_config_file(args.config, FLAG_FIELDS).get("deterministic")
    if deterministic is False:
        return os.cpu_count() or 1
    return 1


def resolve(defaults: dict, config_path, args, table: multi_key_dict) -> dict:
    """Defaults, then the config file, then flags"""
    values = json.loads(json.dumps(defaults))
    if config_path:
        _merge(values, read_config_file(config_path, table))
    for dest, value in vars(args).items():
        if value is None:
            continue
        try:
            path = table[dest]
        except KeyError:
            continue
        _set_path(values, path, value)
    return values


def _build(cls, values: dict):
    try:
        return cls.from_dict(values)
    except InvalidSpecError:
        raise
    except (TypeError, ValueError) as err:
        raise InvalidSpecError("Bad configuration: {}".format(err))


def _manifest_path(args, primary) -> Path:
    return Path(args.manifest) if args.manifest else Path(str(primary) + ".manifest.json")


def _finish(manifest: RunManifest, args, primary):
    manifest.finished = _now()
    path = _manifest_path(args, primary)
    manifest.write(path)
    logger.info("Wrote run manifest %s", path)


# Subcommands

def cmd_synth(args) -> int:
    from .datamodel import FeatureFormat, write_features, write_labels
    from .noise import MixtureSpec, gen_gaussian_mixture, split_clean

    started = _now()
    extra = args.val_size + args.test_size
    spec = MixtureSpec(args.n + extra, args.dim, args.classes, args.separation, args.seed)
    features, labels = gen_gaussian_mixture(spec)
    splits = []
    for size, out_f, out_l, offset in (
            (args.test_size, args.out_test_features, args.out_test_labels, 1),
            (args.val_size, args.out_val_features, args.out_val_labels, 2)):
        if size == 0:
            continue
        if out_f is None or out_l is None:
            raise InvalidSpecError("A split of {} samples needs both output paths"
                                   .format(size))
        (features, labels), (held_f, held_l) = split_clean(
            features, labels, size, args.seed + offset)
        splits.append((held_f, held_l, out_f, out_l))
    for held_f, held_l, out_f, out_l in splits:
        write_features(held_f, out_f, FeatureFormat.for_path(out_f))
        write_labels(held_l, out_l)
    write_features(features, args.out_features, FeatureFormat.for_path(args.out_features))
    write_labels(labels, args.out_labels)
    logger.info("Wrote %d training samples to %s", features.rows, args.out_features)
    config = dict(asdict(spec), version=CONFIG_VERSION, n=args.n,
                  val_size=args.val_size, test_size=args.test_size)
    _finish(RunManifest("synth", args.argv, config, seeds={"seed": args.seed},
                        started=started), args, args.out_features)
    return 0


def cmd_corrupt(args) -> int:
    from .datamodel import load_labels, write_labels
    from .noise import NoiseKind, NoiseSpec, inject, label_accuracy, parse_class_map

    started = _now()
    labels = load_labels(args.labels, args.classes)
    class_map = parse_class_map(args.map) if args.map else None
    spec = NoiseSpec(NoiseKind(args.kind), args.ratio, args.seed, class_map,
                     args.exact_count)
    noisy = inject(labels, spec)
    write_labels(noisy, args.out)
    print("noise: {:.4f} of labels changed".format(1.0 - label_accuracy(noisy, labels)))
    config = {"version": CONFIG_VERSION, "kind": spec.kind.value, "ratio": spec.ratio,
              "class_map": spec.class_map, "exact_count": spec.exact_count,
              "classes": labels.classes}
    _finish(RunManifest("corrupt", args.argv, config, _digests(labels=args.labels),
                        {"seed": args.seed}, started=started), args, args.out)
    return 0


def _load_matrix(path):
    from .datamodel import FeatureFormat, load_features
    return load_features(path, FeatureFormat.for_path(path))


def cmd_purify(args) -> int:
    from .datamodel import (
        CleanValidationSet, FeatureFormat, HardLabels, load_any_labels,
        load_labels, write_features, write_labels,
    )
    from .purifier import PurifierConfig, purify, save_report

    started = _now()
    values = resolve(PurifierConfig().to_dict(), args.config, args, FLAG_FIELDS)
    cfg = _build(PurifierConfig, values)
    if cfg.deterministic and args.threads != 1:
        logger.warning("Deterministic run requested with --threads %d; "
                       "outputs are only bitwise reproducible with one thread",
                       args.threads)
    features = _load_matrix(args.features)
    noisy = load_labels(args.labels, args.classes)
    val_labels = load_any_labels(args.val_labels, args.classes)
    # --truth is report-only and never sets the class count
    classes = args.classes or max(noisy.classes, val_labels.classes)
    truth = load_labels(args.truth, classes) if args.truth else None
    noisy = HardLabels(noisy.values, classes)
    val = CleanValidationSet.from_hard(
        _load_matrix(args.val_features), HardLabels(val_labels.values, classes))
    logits, labels, report = purify(features, noisy, val, cfg, track_truth=truth)

    write_labels(labels, args.out_labels)
    if args.out_logits:
        write_features(logits, args.out_logits, FeatureFormat.for_path(args.out_logits))
    if args.report:
        save_report(report, args.report)
    if report.tracked:
        print("label accuracy: {:.4f} -> {:.4f}".format(
            report.summary["initial_accuracy"], report.summary["final_accuracy"]))
    config = dict(cfg.to_dict(), version=CONFIG_VERSION)
    inputs = _digests(features=args.features, labels=args.labels,
                      val_features=args.val_features, val_labels=args.val_labels,
                      truth=args.truth)
    seeds = {"shuffle_seed": cfg.shuffle_seed, "eac.seed": cfg.eac.seed}
    _finish(RunManifest("purify", args.argv, config, inputs, seeds, started=started),
            args, args.out_labels)
    return 0


def cmd_retrain(args) -> int:
    from .datamodel import LabelLogits, effective_labels, hard_labels, load_labels
    from .evaluate import TrainConfig, save_classifier, train_linear_ce

    started = _now()
    values = resolve(TrainConfig().to_dict(), args.config, args, TRAIN_FIELDS)
    cfg = _build(TrainConfig, values)
    features = _load_matrix(args.features)
    targets = None
    if args.logits:
        logits = LabelLogits(_load_matrix(args.logits).values)
        labels = hard_labels(logits)
        if args.soft:
            targets = effective_labels(logits, args.alpha)
    elif args.labels:
        labels = load_labels(args.labels, args.classes)
    else:
        raise InvalidSpecError("retrain needs --labels or --logits")
    clf = train_linear_ce(features, labels, cfg, targets)
    save_classifier(clf, args.out_model)
    config = dict(cfg.to_dict(), version=CONFIG_VERSION, soft=bool(args.soft),
                  alpha=args.alpha)
    inputs = _digests(features=args.features, labels=args.labels, logits=args.logits)
    _finish(RunManifest("retrain", args.argv, config, inputs, {"seed": cfg.seed},
                        started=started), args, args.out_model)
    return 0


def cmd_eval(args) -> int:
    from .datamodel import load_labels
    from .evaluate import evaluate_classifier, load_classifier

    started = _now()
    clf = load_classifier(args.model)
    features = _load_matrix(args.features)
    labels = load_labels(args.labels, clf.classes)
    accuracy = evaluate_classifier(clf, features, labels)
    print("accuracy: {:.4f}".format(accuracy))
    inputs = _digests(model=args.model, features=args.features, labels=args.labels)
    manifest = RunManifest("eval", args.argv, {"version": CONFIG_VERSION}, inputs,
                           started=started)
    manifest.config["accuracy"] = accuracy
    _finish(manifest, args, str(args.model) + ".eval")
    return 0


def cmd_report(args) -> int:
    from .purifier import load_report

    started = _now()
    report = load_report(args.input)
    columns = ["p", "epoch", "val_loss", "grad_norm", "eac_update"]
    if report.tracked:
        columns.append("acc")
    with Path(args.csv).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for record in report.records:
            writer.writerow(record.to_dict())
    for key, value in sorted(report.summary.items()):
        print("{}: {}".format(key, value))
    _finish(RunManifest("report", args.argv, {"version": CONFIG_VERSION},
                        _digests(report=args.input), started=started), args, args.csv)
    return 0


# Parser

def _common(parser):
    parser.add_argument("--manifest", help="manifest output path "
                        "(default: <primary output>.manifest.json)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="purelabel",
        description="Purify noisy classification labels over frozen features.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    parser.add_argument("--threads", type=int,
                        help="BLAS threads (default: 1, or all cores with --no-deterministic)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("synth", help="draw a labelled Gaussian mixture")
    p.add_argument("--n", type=int, required=True, help="training samples")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--separation", type=float, default=8.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-features", required=True)
    p.add_argument("--out-labels", required=True)
    p.add_argument("--val-size", type=int, default=0)
    p.add_argument("--out-val-features")
    p.add_argument("--out-val-labels")
    p.add_argument("--test-size", type=int, default=0)
    p.add_argument("--out-test-features")
    p.add_argument("--out-test-labels")
    _common(p)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("corrupt", help="inject label noise")
    p.add_argument("--labels", required=True)
    p.add_argument("--classes", type=int, help="class count (default: max label + 1)")
    p.add_argument("--kind", choices=["symmetric", "asymmetric"], default="symmetric")
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--map", help='asymmetric class map, e.g. "0:1,2:3" '
                   "(default: CIFAR-10 similar classes)")
    p.add_argument("--exact-count", action="store_true",
                   help="flip exactly round(ratio * eligible) labels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(handler=cmd_corrupt)

    p = sub.add_parser("purify", help="purify noisy labels")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--classes", type=int)
    p.add_argument("--val-features", required=True)
    p.add_argument("--val-labels", required=True,
                   help="class indices or one-hot CSV")
    p.add_argument("--config", help="JSON config or run manifest to replay")
    p.add_argument("--truth", help="ground-truth labels, for the report only")
    p.add_argument("--out-labels", required=True)
    p.add_argument("--out-logits")
    p.add_argument("--report", help="JSON-lines report path")
    p.add_argument("--alpha", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--eta-i", type=float)
    p.add_argument("--eta-e", type=float)
    p.add_argument("--period", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int, help="shuffle seed")
    p.add_argument("--eac-seed", type=int)
    p.add_argument("--ipc-gamma-ent", type=float)
    p.add_argument("--eac-gamma-ent", type=float)
    p.add_argument("--val-batch", type=int)
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--gram-scale", choices=["none", "batch"])
    p.add_argument("--bias-feature", action="store_true", default=None)
    p.add_argument("--lr", type=float, help="classifier step size")
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--blend-space", choices=["logit", "probability"])
    p.add_argument("--hard-targets", action="store_true", default=None)
    p.add_argument("--no-bias", dest="use_bias", action="store_false", default=None)
    p.add_argument("--eac-steps", type=int)
    p.add_argument("--eac-init-std", type=float,
                   help="deviation of the seeded initial classifier weights (default: 0, zeros)")
    p.add_argument("--mode", choices=["full", "ipc_only", "eac_only"])
    p.add_argument("--init-scale", type=float)
    p.add_argument("--normalize-features", action="store_true", default=None)
    p.add_argument("--no-deterministic", dest="deterministic",
                   action="store_false", default=None,
                   help="let BLAS use every core (outputs may differ in the last bits)")
    _common(p)
    p.set_defaults(handler=cmd_purify)

    p = sub.add_parser("retrain", help="train a linear head on (purified) labels")
    p.add_argument("--features", required=True)
    p.add_argument("--labels")
    p.add_argument("--classes", type=int)
    p.add_argument("--logits", help="purified logits instead of --labels")
    p.add_argument("--soft", action="store_true",
                   help="train on softmax(alpha * logits)")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--config", help="JSON training config")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-bias", dest="use_bias", action="store_false", default=None)
    p.add_argument("--out-model", required=True)
    _common(p)
    p.set_defaults(handler=cmd_retrain)

    p = sub.add_parser("eval", help="accuracy of a saved classifier")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    _common(p)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("report", help="flatten a JSON-lines report to CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--csv", required=True)
    _common(p)
    p.set_defaults(handler=cmd_report)
    return parser


def dispatch(argv) -> int:
    """Runs one subcommand and returns its exit status.

    0 on success, 2 on a usage error, 1 on a runtime failure.
    """
    argv = list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return exit_.code if isinstance(exit_.code, int) else 2
    args.argv = argv

    level = logging.DEBUG if args.verbose else (
        logging.WARNING if args.quiet else logging.INFO)
    logging.basicConfig(
        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.getLogger().setLevel(level)

    try:
        args.threads = thread_count(args)
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
        return args.handler(args)
    except (PurifyError, OSError, json.JSONDecodeError) as err:
        logger.error("%s failed: %s", args.command, err)
        return 1


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
