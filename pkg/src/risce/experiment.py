"""Experiment harness: declarative NMSE sweeps over strategies and estimators.

An experiment is described by a YAML config (see ``configs/`` and the
README for the schema), names the phase allocation strategies and
estimators to cross, and sweeps either SNR at a fixed allocation count or
the allocation count at a fixed SNR.  Heavy artifacts (fitted mixture
models, trained checkpoints, search results) are produced by dedicated
subcommands and cached under content-derived names; evaluation refuses to
run without them and names the subcommand to produce them.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from . import channelgen
from .channelgen import ChannelDataset, ScenarioConfig
from .errors import ConfigError, DataError
from .estimators import Estimator, LeastSquares, SampleCovarianceLmmse
from .gmm import GmmEstimator, gmm_fit, load_gmm, save_gmm
from .learn import CnnEstimator, TrainConfig, load_model, save_model, train_joint
from .model import SystemDims, complex_normal, snr_to_noise_variance, vec, vec_batch
from .phases import (
    DftSearchResult,
    dft_column_subset,
    dft_submatrix,
    exhaustive_dft_search,
    random_phases,
    write_histogram_csv,
)

STRATEGIES = ("dft_sub", "random", "dft_search", "learned")
ESTIMATORS = ("ls", "sample_cov", "gmm", "cnn")

PRESETS = {
    "desk": {
        "dims": {"bs_antennas": 4, "ris_elements": 8},
        "scenario": {"ris_rows": 2, "ris_cols": 4},
    },
    "paper-small": {
        "dims": {"bs_antennas": 8, "ris_elements": 16},
        "scenario": {"ris_rows": 4, "ris_cols": 4},
    },
    "paper-large": {
        "dims": {"bs_antennas": 16, "ris_elements": 64},
        "scenario": {"ris_rows": 8, "ris_cols": 8},
    },
}


@dataclass(frozen=True)
class GmmSettings:
    components: int = 16
    max_iter: int = 100
    tol: float = 1e-5
    reg_floor: float = 1e-6


@dataclass(frozen=True)
class SearchSettings:
    estimator: str = "gmm"
    snr_db: float = 40.0
    num_phases: int | None = None
    samples: int = 300
    max_combinations: int = 200_000


@dataclass(frozen=True)
class ResultRecord:
    """One measured sweep point."""

    strategy: str
    estimator: str
    snr_db: float
    n_v: int
    nmse: float
    samples: int
    seed: int

    def __post_init__(self):
        if self.nmse < 0:
            raise ValueError(f"nmse must be nonnegative, got {self.nmse}")


@dataclass(frozen=True)
class ExperimentConfig:
    bs_antennas: int
    ris_elements: int
    scenario: ScenarioConfig | None
    dataset_path: str | None
    train_count: int
    test_count: int
    strategies: tuple[str, ...]
    estimators: tuple[str, ...]
    snr_points: tuple[float, ...]
    nv_points: tuple[int, ...]
    sweep_axis: str  # "snr" or "nv"
    seed: int
    artifacts_dir: str
    output: str
    gmm: GmmSettings
    train: TrainConfig
    search: SearchSettings

    @property
    def points(self) -> list[tuple[float, int]]:
        """Sweep points as (snr_db, n_v) pairs in declaration order."""
        if self.sweep_axis == "snr":
            return [(snr, self.nv_points[0]) for snr in self.snr_points]
        return [(self.snr_points[0], nv) for nv in self.nv_points]


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"missing required config key {key!r} in {context}")
    return mapping[key]


def config_from_dict(raw: dict, preset: str | None = None,
                     seed: int | None = None, output: str | None = None) -> ExperimentConfig:
    """Build a validated :class:`ExperimentConfig` from parsed YAML."""
    if not isinstance(raw, dict):
        raise ConfigError("experiment config must be a mapping")
    raw = dict(raw)
    preset = preset or raw.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}, choose from {sorted(PRESETS)}")
        base = PRESETS[preset]
        raw.setdefault("dims", base["dims"])
        scenario = dict(base["scenario"])
        scenario.update(raw.get("scenario") or {})
        raw["scenario"] = scenario

    dims_raw = _require(raw, "dims", "experiment")
    bs_antennas = int(_require(dims_raw, "bs_antennas", "dims"))
    ris_elements = int(_require(dims_raw, "ris_elements", "dims"))

    sweep = _require(raw, "sweep", "experiment")
    snr_raw = _require(sweep, "snr_db", "sweep")
    nv_raw = _require(sweep, "n_v", "sweep")
    snr_is_list = isinstance(snr_raw, (list, tuple))
    nv_is_list = isinstance(nv_raw, (list, tuple))
    if snr_is_list == nv_is_list:
        raise ConfigError("exactly one of sweep.snr_db / sweep.n_v must be a list")
    snr_points = tuple(float(s) for s in (snr_raw if snr_is_list else [snr_raw]))
    nv_points = tuple(int(v) for v in (nv_raw if nv_is_list else [nv_raw]))
    if not snr_points or not nv_points:
        raise ConfigError("sweep axis must contain at least one point")
    if any(v < 1 for v in nv_points):
        raise ConfigError("sweep.n_v values must be positive")

    strategies = tuple(raw.get("strategies") or ())
    estimators = tuple(raw.get("estimators") or ())
    if not strategies or not estimators:
        raise ConfigError("strategies and estimators must be nonempty lists")
    for s in strategies:
        if s not in STRATEGIES:
            raise ConfigError(f"unknown strategy {s!r}, choose from {STRATEGIES}")
    for e in estimators:
        if e not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {e!r}, choose from {ESTIMATORS}")

    train_count = int(raw.get("train_count", 10_000))
    test_count = int(raw.get("test_count", 1_000))
    if test_count < 1:
        raise ConfigError(f"test_count must be >= 1, got {test_count}")
    if train_count < 1:
        raise ConfigError(f"train_count must be >= 1, got {train_count}")

    cfg_seed = int(raw.get("seed", 0)) if seed is None else int(seed)

    scenario = None
    if raw.get("scenario") is not None:
        sc = dict(raw["scenario"])
        ris_rows = int(_require(sc, "ris_rows", "scenario"))
        ris_cols = int(_require(sc, "ris_cols", "scenario"))
        try:
            scenario = ScenarioConfig(
                dims=SystemDims(bs_antennas, ris_elements, nv_points[0]),
                ris_rows=ris_rows,
                ris_cols=ris_cols,
                downtilt_deg=float(sc.get("downtilt_deg", 0.0)),
                clusters_direct=int(sc.get("clusters_direct", 3)),
                clusters_mt_ris=int(sc.get("clusters_mt_ris", 3)),
                rician_k_factor=float(sc.get("rician_k_factor", 10.0)),
                angle_spread_deg=float(sc.get("angle_spread_deg", 5.0)),
                seed=int(sc.get("seed", cfg_seed)),
            )
        except ValueError as exc:
            raise ConfigError(f"invalid scenario: {exc}") from exc
    dataset_path = raw.get("dataset")
    if scenario is None and dataset_path is None:
        raise ConfigError("config needs either a scenario section or a dataset path")

    gmm_raw = raw.get("gmm") or {}
    gmm = GmmSettings(
        components=int(gmm_raw.get("components", 16)),
        max_iter=int(gmm_raw.get("max_iter", 100)),
        tol=float(gmm_raw.get("tol", 1e-5)),
        reg_floor=float(gmm_raw.get("reg_floor", 1e-6)),
    )

    train_raw = raw.get("train") or {}
    try:
        train = TrainConfig(
            batch_size=int(train_raw.get("batch_size", 128)),
            learning_rate=float(train_raw.get("learning_rate", 1e-3)),
            epochs=int(train_raw.get("epochs", 20)),
            num_kernels=int(train_raw.get("kernels", 24)),
            num_layers=int(train_raw.get("layers", 3)),
            activation=str(train_raw.get("activation", "silu")),
            batch_norm=bool(train_raw.get("batch_norm", False)),
            lock_first_row=bool(train_raw.get("lock_first_row", True)),
            seed=cfg_seed,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid train section: {exc}") from exc

    search_raw = raw.get("search") or {}
    search_est = str(search_raw.get("estimator", "gmm"))
    if search_est not in ("ls", "sample_cov", "gmm"):
        raise ConfigError(f"search.estimator must be ls, sample_cov or gmm, got {search_est!r}")
    search = SearchSettings(
        estimator=search_est,
        snr_db=float(search_raw.get("snr_db", 40.0)),
        num_phases=(int(search_raw["n_v"]) if "n_v" in search_raw else None),
        samples=int(search_raw.get("samples", 300)),
        max_combinations=int(search_raw.get("max_combinations", 200_000)),
    )

    return ExperimentConfig(
        bs_antennas=bs_antennas,
        ris_elements=ris_elements,
        scenario=scenario,
        dataset_path=dataset_path,
        train_count=train_count,
        test_count=test_count,
        strategies=strategies,
        estimators=estimators,
        snr_points=snr_points,
        nv_points=nv_points,
        sweep_axis="snr" if snr_is_list else "nv",
        seed=cfg_seed,
        artifacts_dir=str(raw.get("artifacts_dir", "artifacts")),
        output=output or str(raw.get("output", "results.csv")),
        gmm=gmm,
        train=train,
        search=search,
    )


def load_config(path, preset: str | None = None, seed: int | None = None,
                output: str | None = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return config_from_dict(raw, preset=preset, seed=seed, output=output)


# ---- datasets and artifact names --------------------------------------


def _dataset_identity(config: ExperimentConfig) -> str:
    if config.dataset_path:
        digest = hashlib.sha256()
        with open(config.dataset_path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                digest.update(chunk)
        return digest.hexdigest()[:12]
    sc = asdict(config.scenario)
    sc["train_count"] = config.train_count
    sc["test_count"] = config.test_count
    blob = json.dumps(sc, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _artifact_key(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def prepare_datasets(config: ExperimentConfig):
    """Load or generate the experiment dataset; returns (train, test) splits."""
    if config.dataset_path and os.path.exists(config.dataset_path):
        dataset = channelgen.load(config.dataset_path)
        if (dataset.bs_antennas != config.bs_antennas
                or dataset.ris_elements != config.ris_elements):
            raise DataError(
                f"dataset {config.dataset_path} has dims "
                f"M={dataset.bs_antennas}, L={dataset.ris_elements}; config expects "
                f"M={config.bs_antennas}, L={config.ris_elements}"
            )
    elif config.dataset_path:
        raise DataError(
            f"dataset file {config.dataset_path} not found; run `generate-data` first"
        )
    else:
        dataset = channelgen.generate(config.scenario, config.train_count + config.test_count)
    if not dataset.normalized:
        dataset = channelgen.normalize(dataset)
    needed = config.train_count + config.test_count
    if len(dataset) < needed:
        raise DataError(
            f"dataset holds {len(dataset)} samples, config needs {needed} "
            "(train_count + test_count)"
        )
    train = dataset.subset(0, config.train_count)
    test = dataset.subset(config.train_count, needed)
    return train, test


def gmm_artifact_path(config: ExperimentConfig) -> Path:
    key = _artifact_key("gmm", _dataset_identity(config), config.train_count,
                        asdict(config.gmm), config.seed)
    return Path(config.artifacts_dir) / f"gmm-{key}.rgmm"


def cnn_artifact_path(config: ExperimentConfig, snr_db: float, n_v: int) -> Path:
    key = _artifact_key("cnn", _dataset_identity(config), config.train_count,
                        asdict(config.train), config.seed, snr_db, n_v)
    return Path(config.artifacts_dir) / f"cnn-{key}.rcnn"


def search_artifact_path(config: ExperimentConfig, n_v: int) -> Path:
    key = _artifact_key("search", _dataset_identity(config), config.train_count,
                        asdict(config.search), config.seed, n_v)
    return Path(config.artifacts_dir) / f"search-{key}.json"


# ---- artifact production ----------------------------------------------


def fit_gmm_artifact(config: ExperimentConfig, verbose: bool = False) -> Path:
    """Fit the mixture prior on the training split and cache it."""
    train, _ = prepare_datasets(config)
    path = gmm_artifact_path(config)
    path.parent.mkdir(parents=True, exist_ok=True)
    model = gmm_fit(
        vec_batch(train.composites),
        components=config.gmm.components,
        max_iter=config.gmm.max_iter,
        tol=config.gmm.tol,
        reg_floor=config.gmm.reg_floor,
        rng=config.seed,
    )
    save_gmm(model, path)
    if verbose:
        print(f"fitted {config.gmm.components}-component mixture on "
              f"{len(train)} samples -> {path}")
    return path


def train_cnn_artifacts(config: ExperimentConfig, verbose: bool = False) -> list[Path]:
    """Train one joint model per sweep point and cache the checkpoints."""
    train, test = prepare_datasets(config)
    paths = []
    for snr_db, n_v in config.points:
        path = cnn_artifact_path(config, snr_db, n_v)
        path.parent.mkdir(parents=True, exist_ok=True)
        if path.exists():
            paths.append(path)
            if verbose:
                print(f"checkpoint for snr={snr_db} n_v={n_v} already cached -> {path}")
            continue
        dims = SystemDims(config.bs_antennas, config.ris_elements, n_v)
        train_config = replace(config.train, snr_db=snr_db, seed=config.seed)
        model, log = train_joint(train, dims, train_config, val_dataset=test)
        save_model(model, path)
        log.to_csv(path.with_suffix(".log.csv"))
        paths.append(path)
        if verbose:
            print(f"trained joint model snr={snr_db} n_v={n_v} "
                  f"final val nmse {log.val_nmse[-1]:.4e} -> {path}")
    return paths


def _search_estimator(config: ExperimentConfig, train: ChannelDataset) -> Estimator:
    if config.search.estimator == "ls":
        return LeastSquares()
    if config.search.estimator == "sample_cov":
        return SampleCovarianceLmmse.fit(vec_batch(train.composites))
    path = gmm_artifact_path(config)
    if not path.exists():
        raise DataError(
            f"GMM artifact {path} not found; run `fit-gmm` with this config first"
        )
    return GmmEstimator(load_gmm(path))


def run_search(config: ExperimentConfig, verbose: bool = False) -> tuple[DftSearchResult, Path]:
    """Exhaustive DFT-column search on a slice of the training split."""
    train, _ = prepare_datasets(config)
    n_v = config.search.num_phases or config.points[0][1]
    estimator = _search_estimator(config, train)
    subset = train.subset(0, min(config.search.samples, len(train)))
    noise_variance = snr_to_noise_variance(config.search.snr_db)
    rng = np.random.default_rng([config.seed, 0x5EA2C4])
    result = exhaustive_dft_search(
        subset, estimator, n_v, noise_variance, rng=rng,
        max_combinations=config.search.max_combinations,
    )
    path = search_artifact_path(config, n_v)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "n_v": n_v,
        "estimator": config.search.estimator,
        "snr_db": config.search.snr_db,
        "samples": len(subset),
        "best_average_set": list(result.best_average_set),
        "best_average_nmse": result.best_average_nmse,
        "histogram": [float(f) for f in result.histogram],
    }
    path.write_text(json.dumps(payload, indent=2))
    if verbose:
        print(f"searched {len(subset)} samples, best average set "
              f"{result.best_average_set} -> {path}")
    return result, path


def run_dft_histogram(config: ExperimentConfig, out_path=None,
                      verbose: bool = False) -> Path:
    """Search (or reuse a cached search) and export the histogram CSV."""
    n_v = config.search.num_phases or config.points[0][1]
    artifact = search_artifact_path(config, n_v)
    if artifact.exists():
        payload = json.loads(artifact.read_text())
        histogram = np.asarray(payload["histogram"])
        result = DftSearchResult(
            per_sample_best=[],
            histogram=histogram,
            best_average_set=tuple(payload["best_average_set"]),
            best_average_nmse=float(payload["best_average_nmse"]),
        )
    else:
        result, _ = run_search(config, verbose=verbose)
    out = Path(out_path) if out_path else Path(config.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_histogram_csv(result, out)
    if verbose:
        print(f"histogram over {len(result.histogram)} DFT columns -> {out}")
    return out


# ---- evaluation ---------------------------------------------------------


def _point_rng(config: ExperimentConfig, strategy: str, snr_db: float, n_v: int,
               stream: str) -> np.random.Generator:
    key = _artifact_key(stream, strategy, snr_db, n_v)
    return np.random.default_rng([config.seed, int(key[:8], 16)])


def _strategy_phases(config: ExperimentConfig, strategy: str, snr_db: float, n_v: int,
                     learned_models: dict):
    """Allocation for one sweep point; None means per-sample random draws."""
    if strategy == "dft_sub":
        return dft_submatrix(config.ris_elements, n_v)
    if strategy == "dft_search":
        artifact = search_artifact_path(config, n_v)
        payload = json.loads(artifact.read_text())
        return dft_column_subset(config.ris_elements, payload["best_average_set"])
    if strategy == "learned":
        return learned_models[(snr_db, n_v)].phase_matrix()
    return None


def _make_estimator(name: str, shared: dict, learned_models: dict,
                    snr_db: float, n_v: int) -> Estimator:
    """Fresh estimator per evaluation group (mixture estimators cache
    per-allocation factorizations, so they must not be shared across
    concurrently evaluated groups)."""
    if name == "ls":
        return LeastSquares()
    if name == "sample_cov":
        return SampleCovarianceLmmse(shared["cov"])
    if name == "gmm":
        return GmmEstimator(shared["gmm"])
    return CnnEstimator(learned_models[(snr_db, n_v)])


def _evaluate_group(config: ExperimentConfig, test: ChannelDataset, strategy: str,
                    snr_db: float, n_v: int, shared: dict,
                    learned_models: dict) -> list[ResultRecord]:
    """All estimators on one (strategy, sweep point): shared observations."""
    noise_variance = snr_to_noise_variance(snr_db)
    composites = test.composites
    targets = vec_batch(composites)
    n_test = len(test)
    m = config.bs_antennas

    noise_rng = _point_rng(config, strategy, snr_db, n_v, "noise")
    noise = complex_normal(noise_rng, (n_test, m, n_v), noise_variance) \
        if noise_variance > 0 else np.zeros((n_test, m, n_v), dtype=np.complex128)

    phases = _strategy_phases(config, strategy, snr_db, n_v, learned_models)
    if phases is not None:
        ys = vec_batch(composites @ phases.mat + noise)
        per_sample_phases = None
    else:
        # fresh random allocation per terminal, shared across estimators
        phase_rng = _point_rng(config, strategy, snr_db, n_v, "phases")
        per_sample_phases = [random_phases(config.ris_elements, n_v, phase_rng)
                             for _ in range(n_test)]
        ys = np.stack([vec(composites[i] @ per_sample_phases[i].mat + noise[i])
                       for i in range(n_test)])

    records = []
    for name in config.estimators:
        estimator = _make_estimator(name, shared, learned_models, snr_db, n_v)
        if per_sample_phases is None:
            estimates = estimator.estimate_batch(ys, phases, noise_variance)
        else:
            estimates = np.stack([
                estimator.estimate(ys[i], per_sample_phases[i], noise_variance)
                for i in range(n_test)
            ])
        err = float(np.mean(np.sum(np.abs(estimates - targets) ** 2, axis=1))
                    / test.composite_dim)
        records.append(ResultRecord(
            strategy=strategy, estimator=name, snr_db=snr_db, n_v=n_v,
            nmse=err, samples=n_test, seed=config.seed,
        ))
    return records


def write_result_csv(records: list[ResultRecord], path) -> None:
    """Write records sorted by (strategy, estimator, sweep values)."""
    ordered = sorted(records, key=lambda r: (r.strategy, r.estimator, r.snr_db, r.n_v))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "estimator", "snr_db", "n_v", "nmse", "samples", "seed"])
        for r in ordered:
            writer.writerow([r.strategy, r.estimator, repr(r.snr_db), r.n_v,
                             repr(r.nmse), r.samples, r.seed])


def run_experiment(config: ExperimentConfig, parallel: int = 1,
                   verbose: bool = False) -> list[ResultRecord]:
    """Evaluate every (strategy, estimator, sweep point) and write the CSV.

    Requires cached artifacts for the `gmm` and `cnn` estimators and the
    `dft_search` and `learned` strategies; missing ones raise
    :class:`DataError` naming the producing subcommand.
    """
    train, test = prepare_datasets(config)

    if "cnn" in config.estimators and "learned" not in config.strategies:
        raise ConfigError("the cnn estimator requires the learned strategy "
                          "(its phases come from the joint checkpoint)")

    shared: dict = {}
    if "sample_cov" in config.estimators:
        shared["cov"] = SampleCovarianceLmmse.fit(vec_batch(train.composites)).cov
    if "gmm" in config.estimators:
        path = gmm_artifact_path(config)
        if not path.exists():
            raise DataError(
                f"GMM artifact {path} not found; run `fit-gmm` with this config first"
            )
        shared["gmm"] = load_gmm(path)

    learned_models = {}
    if "learned" in config.strategies or "cnn" in config.estimators:
        for snr_db, n_v in config.points:
            path = cnn_artifact_path(config, snr_db, n_v)
            if not path.exists():
                raise DataError(
                    f"CNN checkpoint {path} not found for snr={snr_db}, n_v={n_v}; "
                    "run `train-cnn` with this config first"
                )
            model = load_model(path)
            if model.dims != SystemDims(config.bs_antennas, config.ris_elements, n_v):
                raise DataError(
                    f"checkpoint {path} was trained for {model.dims}, config expects "
                    f"M={config.bs_antennas}, L={config.ris_elements}, N_v={n_v}"
                )
            learned_models[(snr_db, n_v)] = model

    if "dft_search" in config.strategies:
        for _, n_v in config.points:
            artifact = search_artifact_path(config, n_v)
            if not artifact.exists():
                raise DataError(
                    f"search artifact {artifact} not found for n_v={n_v}; "
                    "run `search-dft` with this config first"
                )

    groups = [(strategy, snr_db, n_v)
              for strategy in config.strategies
              for snr_db, n_v in config.points]

    def evaluate(group):
        strategy, snr_db, n_v = group
        return _evaluate_group(config, test, strategy, snr_db, n_v,
                               shared, learned_models)

    records = []
    if parallel > 1:
        # groups derive independent rng streams, so results do not depend
        # on the completion schedule
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            for chunk in pool.map(evaluate, groups):
                records.extend(chunk)
    else:
        for group in groups:
            records.extend(evaluate(group))

    write_result_csv(records, config.output)
    if verbose:
        for r in sorted(records, key=lambda r: (r.strategy, r.estimator, r.snr_db, r.n_v)):
            print(f"{r.strategy:10s} {r.estimator:10s} snr={r.snr_db:6.1f} "
                  f"n_v={r.n_v:3d} nmse={r.nmse:.4e}")
    return records
