"""Command-line interface for the detection pipeline.

Subcommands cover the full workflow:

* ``train``: fit the cue observation model and all detectors;
* ``test``: evaluate the trained detectors over the test suite and
  perturbation grid, writing ``results.csv`` and ``placement.csv``;
* ``report``: aggregate results into plot-ready summary tables;
* ``suite``: write a scene suite definition without rendering it;
* ``fit-segregation``: fit and save only the cue observation model.

Every subcommand exits 0 on success.  Failures print one JSON line to
stderr with ``error`` and ``message`` fields and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from seldkit.experiment import (
    ExperimentConfig,
    build_sound_pool,
    emit_report,
    run_test,
    run_train,
    split_pool,
)


def _load_config(args) -> ExperimentConfig:
    if args.config:
        config = ExperimentConfig.load(args.config)
        if args.output_dir:
            config = ExperimentConfig.from_dict({**config.to_dict(), "output_dir": args.output_dir})
    else:
        if not args.output_dir:
            raise ValueError("either --config or --output-dir is required")
        config = ExperimentConfig(output_dir=args.output_dir)
    return config


def _cmd_train(args) -> int:
    config = _load_config(args)
    manifest = run_train(config, jobs=args.jobs)
    print(json.dumps({"trained": sorted(manifest["detectors"]), "output_dir": config.output_dir}))
    return 0


def _cmd_test(args) -> int:
    config = _load_config(args)
    info = run_test(config, jobs=args.jobs, max_scenes=args.max_scenes)
    print(json.dumps(info))
    return 0


def _cmd_report(args) -> int:
    out_dir = args.output_dir or (args.config and ExperimentConfig.load(args.config).output_dir)
    if not out_dir:
        raise ValueError("either --config or --output-dir is required")
    info = emit_report(out_dir)
    print(json.dumps(info))
    return 0


def _cmd_suite(args) -> int:
    from seldkit.scene.suites import build_scene_suite, save_suite

    config = _load_config(args)
    pool = build_sound_pool(config)
    train_pool, test_pool = split_pool(pool, config.split_ratio, config.split_seed)
    side_pool = train_pool if args.kind == "train" else test_pool
    seed = config.train_suite_seed if args.kind == "train" else config.test_suite_seed
    scenes = build_scene_suite(
        kind=args.kind,
        seed=seed,
        pool=side_pool,
        target_classes=list(config.target_classes),
        duration_s=config.scene_duration_s,
        profile=config.profile,
        n_train=config.n_train_scenes if args.kind == "train" else None,
    )
    out_path = Path(config.output_dir) / f"{args.kind}_suite.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_suite(scenes, out_path)
    print(json.dumps({"suite": str(out_path), "n_scenes": len(scenes)}))
    return 0


def _cmd_fit_segregation(args) -> int:
    from seldkit.experiment import _fit_observation_model
    from seldkit.segregation import save_observation_model

    config = _load_config(args)
    model = _fit_observation_model(config)
    out_path = Path(config.output_dir) / "observation_model.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_observation_model(model, out_path)
    print(json.dumps({"model": str(out_path), "order": model.order}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seldkit",
        description="Binaural sound event detection and localization pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON experiment config file")
        p.add_argument("--output-dir", help="artifact directory (overrides the config)")

    p_train = sub.add_parser("train", help="fit the observation model and detectors")
    add_common(p_train)
    p_train.add_argument("--jobs", type=int, default=1, help="parallel scene workers")
    p_train.set_defaults(func=_cmd_train)

    p_test = sub.add_parser("test", help="evaluate detectors on the test suite")
    add_common(p_test)
    p_test.add_argument("--jobs", type=int, default=1, help="parallel scene workers")
    p_test.add_argument("--max-scenes", type=int, default=None, help="limit evaluated scenes")
    p_test.set_defaults(func=_cmd_test)

    p_report = sub.add_parser("report", help="aggregate results into summary tables")
    add_common(p_report)
    p_report.set_defaults(func=_cmd_report)

    p_suite = sub.add_parser("suite", help="write a scene suite definition")
    add_common(p_suite)
    p_suite.add_argument("--kind", choices=("train", "test"), required=True)
    p_suite.set_defaults(func=_cmd_suite)

    p_fit = sub.add_parser("fit-segregation", help="fit only the cue observation model")
    add_common(p_fit)
    p_fit.set_defaults(func=_cmd_fit_segregation)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # single machine-readable error line
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
