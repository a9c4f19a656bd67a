"""Command line harness.

Subcommands::

    generate-data   synthesize + normalize a dataset, write it as RISD
    fit-gmm         fit the mixture prior on the training split
    train-cnn       train one joint phase+CNN model per sweep point
    search-dft      exhaustive DFT-column search, cache the result
    histogram       export the search histogram CSV
    evaluate        run the configured NMSE sweep, write the result CSV

Every subcommand reads one YAML experiment config.  Exit codes: 0 success,
2 configuration problem, 3 data problem (incl. missing artifacts),
4 numerical failure, 5 I/O or file-format failure.
"""

from __future__ import annotations

import argparse
import sys

from . import channelgen, experiment
from .errors import ConfigError, DataError, FormatError, NumericError

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_IO = 5


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to the experiment YAML")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="override the output path")
    common.add_argument("--preset", default=None,
                        help="named dimension preset (desk, paper-small, paper-large)")
    common.add_argument("--parallel", type=int, default=1,
                        help="number of concurrently evaluated sweep groups")

    parser = argparse.ArgumentParser(
        prog="risce",
        description="NMSE benchmarking of channel estimators under reduced "
                    "RIS phase allocations",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate-data", parents=[common],
                   help="synthesize and save the dataset")
    sub.add_parser("fit-gmm", parents=[common], help="fit the mixture prior")
    sub.add_parser("train-cnn", parents=[common],
                   help="train joint phase+CNN models for all sweep points")
    sub.add_parser("search-dft", parents=[common],
                   help="exhaustive DFT-column search")
    sub.add_parser("histogram", parents=[common],
                   help="export the DFT-column occurrence histogram")
    sub.add_parser("evaluate", parents=[common], help="run the NMSE sweep")
    return parser


def _load_config(args) -> experiment.ExperimentConfig:
    return experiment.load_config(args.config, preset=args.preset,
                                  seed=args.seed, output=args.out)


def _cmd_generate_data(args) -> None:
    config = _load_config(args)
    if config.scenario is None:
        raise ConfigError("generate-data needs a scenario section in the config")
    path = args.out or config.dataset_path
    if path is None:
        raise ConfigError("generate-data needs a dataset path (config `dataset:` or --out)")
    count = config.train_count + config.test_count
    dataset = channelgen.normalize(channelgen.generate(config.scenario, count))
    channelgen.save(dataset, path)
    print(f"generated {count} samples (M={config.bs_antennas}, "
          f"L={config.ris_elements}) -> {path}")


def _cmd_fit_gmm(args) -> None:
    config = _load_config(args)
    path = experiment.fit_gmm_artifact(config)
    print(f"fitted {config.gmm.components}-component mixture -> {path}")


def _cmd_train_cnn(args) -> None:
    config = _load_config(args)
    paths = experiment.train_cnn_artifacts(config, verbose=True)
    print(f"trained {len(paths)} checkpoint(s) under {config.artifacts_dir}")


def _cmd_search_dft(args) -> None:
    config = _load_config(args)
    result, path = experiment.run_search(config)
    print(f"best average DFT column set {list(result.best_average_set)} -> {path}")


def _cmd_histogram(args) -> None:
    config = _load_config(args)
    out = experiment.run_dft_histogram(config, out_path=args.out)
    print(f"histogram CSV -> {out}")


def _cmd_evaluate(args) -> None:
    config = _load_config(args)
    records = experiment.run_experiment(config, parallel=args.parallel)
    print(f"wrote {len(records)} records -> {config.output}")


_COMMANDS = {
    "generate-data": _cmd_generate_data,
    "fit-gmm": _cmd_fit_gmm,
    "train-cnn": _cmd_train_cnn,
    "search-dft": _cmd_search_dft,
    "histogram": _cmd_histogram,
    "evaluate": _cmd_evaluate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
