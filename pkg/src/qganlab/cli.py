"""Command-line entry points.

Subcommands: prepare-data, train-classifier, oracle, train, ablate, report.
Configuration resolves defaults <- JSON config file (--config) <- flags; every
config key is reachable through repeatable --set key=value flags.

Exit codes: 0 success, 2 input error, 3 invalid campaign, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback

from . import campaign as camp
from .data import IdxParseError
from .ising import IsingSpec, build_class_hamiltonian
from .metrics import FeatureClassifier
from .quantum import ground_state_energy
from .stats import IncompleteCampaignError, ProtocolError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INVALID_CAMPAIGN = 3
EXIT_INTERNAL = 4


class InputError(Exception):
    pass


def _parse_overrides(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    for item in args.set or []:
        if "=" not in item:
            raise InputError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    for key in ("dataset", "data_dir", "output_dir", "workers", "epochs", "seeds"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return overrides


def _config(args: argparse.Namespace) -> camp.CampaignConfig:
    try:
        return camp.config_from_file(args.config, _parse_overrides(args))
    except (ValueError, OSError) as err:
        raise InputError(str(err)) from err


def cmd_prepare_data(args: argparse.Namespace) -> int:
    config = _config(args)
    try:
        path = camp.prepare_data(config)
    except FileNotFoundError as err:
        raise InputError(str(err)) from err
    from .data import load_cache

    train, test = load_cache(path)
    print(f"dataset cache: {path}")
    print(f"  train: {len(train)} images {train.image_shape}, test: {len(test)}")
    return EXIT_OK


def cmd_train_classifier(args: argparse.Namespace) -> int:
    config = _config(args)
    path = camp.prepare_classifier(config)
    clf = FeatureClassifier.load(path)
    print(f"classifier checkpoint: {path}")
    print(f"  held-out test accuracy: {clf.test_accuracy:.4f}")
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    config = _config(args)
    spec = IsingSpec(
        n_qubits=config.n_qubits,
        coupling=config.coupling_j,
        h_global=config.h_global,
        delta_h=config.delta_h,
        n_classes=config.n_classes,
    )
    if args.class_label == "all":
        labels = range(spec.n_classes)
    else:
        labels = [int(args.class_label)]
        if not 0 <= labels[0] < spec.n_classes:
            raise InputError(f"class must be in [0, {spec.n_classes})")
    print("class  ground-state energy  argmin bitstring (qubit 0 first)")
    for c in labels:
        energy, index = ground_state_energy(build_class_hamiltonian(spec, c))
        bits = "".join(str((index >> q) & 1) for q in range(spec.n_qubits))
        print(f"{c:>5}  {energy:>19.12f}  {bits}")
    return EXIT_OK


def _require_prepared(config: camp.CampaignConfig) -> None:
    missing = [
        str(p)
        for p in (config.dataset_cache_path(), config.classifier_path())
        if not p.exists()
    ]
    if missing:
        raise InputError(
            "missing prerequisites (run prepare-data and train-classifier first): "
            + ", ".join(missing)
        )


def cmd_train(args: argparse.Namespace) -> int:
    config = _config(args)
    _require_prepared(config)
    if args.variant not in camp.DEFAULT_VARIANTS:
        raise InputError(f"unknown variant {args.variant!r}")
    summary = camp.execute_run(config, args.variant, args.seed)
    csv_path, json_path = camp.run_paths(config.campaign_dir(), args.variant, args.seed)
    print(f"run record: {csv_path}")
    print(f"summary:    {json_path}")
    if summary["diverged"]:
        print(f"DIVERGED after {summary['epochs_completed']} epochs: {summary['divergence_note']}")
    elif summary["final"] is not None:
        final = summary["final"]
        print(
            f"final epoch: accuracy={final['accuracy']:.4f} fid={final['fid']:.3f} "
            f"is={final['inception_score']:.3f} diversity={final['diversity']:.4f}"
        )
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    config = _config(args)
    _require_prepared(config)
    outcome = camp.run_campaign(config)
    print(f"campaign {outcome['campaign_id']}: {outcome['runs']} runs "
          f"({outcome['executed']} executed now) -> {outcome['campaign_dir']}")
    if outcome["failures"]:
        print(f"failed runs: {outcome['failures']}")
    if outcome["invalid"]:
        print("campaign INVALID: more than 20% of runs failed")
        return EXIT_INVALID_CAMPAIGN
    report = camp.write_report(config)
    print(f"report: {config.campaign_dir() / 'report.txt'}")
    print(f"preregistered thresholds: {report.preregistered}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    config = _config(args)
    report = camp.write_report(config)
    print((config.campaign_dir() / "report.txt").read_text())
    if not report.preregistered:
        print("NOTE: thresholds were overridden; report is stamped preregistered=false")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qganlab",
        description="Energy-regularized ACGAN ablation laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("-c", "--config", help="JSON config file with flat CampaignConfig keys")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key (repeatable)")
        p.add_argument("--dataset", choices=("synthetic", "mnist"))
        p.add_argument("--data-dir", dest="data_dir")
        p.add_argument("--output-dir", dest="output_dir")
        p.add_argument("--epochs", type=int)
        p.add_argument("--seeds", help="comma-separated seed list")

    p = sub.add_parser("prepare-data", help="build and cache the desk dataset")
    common(p)
    p.set_defaults(fn=cmd_prepare_data)

    p = sub.add_parser("train-classifier", help="train and freeze the metric classifier")
    common(p)
    p.set_defaults(fn=cmd_train_classifier)

    p = sub.add_parser("oracle", help="exact ground-state energies by enumeration")
    common(p)
    p.add_argument("--class", dest="class_label", default="all",
                   help="class label or 'all'")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("train", help="one training run")
    common(p)
    p.add_argument("--variant", required=True, help="vqe | mlp | bias | noise | none")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("ablate", help="full variants x seeds campaign plus report")
    common(p)
    p.add_argument("--workers", type=int)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("report", help="rebuild the verdict report from run records")
    common(p)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (IdxParseError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (IncompleteCampaignError, ProtocolError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID_CAMPAIGN
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
