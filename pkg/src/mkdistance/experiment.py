import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from dataclasses import field
from pathlib import Path
from typing import Optional

import pandas as pd

from mkdistance.distances import DistanceKind
from mkdistance.distances import Metric
from mkdistance.distances import TangentConfig
from mkdistance.exceptions import ConfigError
from mkdistance.exceptions import ExperimentError
from mkdistance.exceptions import MKDistanceError
from mkdistance.knn import DistanceCache
from mkdistance.knn import accuracy
from mkdistance.mnist_io import ProtocolSets
from mkdistance.mnist_io import build_protocol_sets
from mkdistance.mnist_io import find_mnist_files
from mkdistance.mnist_io import load_raw_dataset
from mkdistance.mnist_io import training_subset
from mkdistance.transport import PivotRule
from mkdistance.transport import SolverOptions
from mkdistance.transport import verify_optimality

PER_DIGIT = 21
MAX_TRAINING_SETS = 20
MAX_TEST_PER_DIGIT = 20
TABLE_SIZES = (1, 5, 10, 15, 21)
DISTANCE_ORDER = {kind: position for position, kind in enumerate(DistanceKind)}


def _items(value) -> list:
    if isinstance(value, str):
        return [item.strip() for item in value.split(',') if item.strip()]
    return list(value)


def _optional_float(value) -> Optional[float]:
    if value is None or (isinstance(value, str) and value.strip().lower() in ('', 'none', 'auto')):
        return None
    return float(value)


def _optional_int(value) -> Optional[int]:
    if value is None or (isinstance(value, str) and value.strip().lower() in ('', 'none', 'auto')):
        return None
    return int(value)


_CONVERTERS = {
    'mnist_dir': str,
    'train_images': str,
    'train_labels': str,
    'test_images': str,
    'test_labels': str,
    'seed': int,
    'distances': lambda value: tuple(DistanceKind(str(item).lower()) for item in _items(value)),
    'training_sizes': lambda value: tuple(int(item) for item in _items(value)),
    'num_training_sets': int,
    'test_size_per_digit': int,
    'pool_per_digit': int,
    'k': int,
    'output_dir': str,
    'workers': int,
}
_SOLVER_CONVERTERS = {
    'pivot_rule': lambda value: PivotRule(str(value).lower()),
    'max_iterations': _optional_int,
    'dual_tol': float,
    'marginal_tol': float,
}
_TANGENT_CONVERTERS = {
    'tangent_transformations': ('transformations', lambda value: tuple(_items(value))),
    'smoothing_sigma': ('smoothing_sigma', float),
    'regularization': ('regularization', _optional_float),
}


@dataclass
class ExperimentConfig:
    """
    Parameters of one experiment run. Paths left empty are looked up in mnist_dir under the official file names.
    """
    train_images: str = ''
    train_labels: str = ''
    test_images: str = ''
    test_labels: str = ''
    mnist_dir: str = ''
    seed: int = 0
    distances: tuple = tuple(DistanceKind)
    training_sizes: tuple = TABLE_SIZES
    num_training_sets: int = MAX_TRAINING_SETS
    test_size_per_digit: int = MAX_TEST_PER_DIGIT
    pool_per_digit: int = 1000
    k: int = 1
    solver_options: SolverOptions = field(default_factory=SolverOptions)
    tangent_config: TangentConfig = field(default_factory=TangentConfig)
    output_dir: str = 'results'
    workers: int = 1

    def __post_init__(self):
        self.distances = tuple(DistanceKind(kind) for kind in self.distances)
        self.training_sizes = tuple(sorted(set(int(size) for size in self.training_sizes)))
        problems = []
        if not self.distances:
            problems.append("at least one distance is required")
        if not self.training_sizes or not all(1 <= size <= PER_DIGIT for size in self.training_sizes):
            problems.append(f"training_sizes must be a nonempty subset of 1..{PER_DIGIT}")
        if not 1 <= self.num_training_sets <= MAX_TRAINING_SETS:
            problems.append(f"num_training_sets must lie in 1..{MAX_TRAINING_SETS}")
        if not 1 <= self.test_size_per_digit <= MAX_TEST_PER_DIGIT:
            problems.append(f"test_size_per_digit must lie in 1..{MAX_TEST_PER_DIGIT}")
        if self.k < 1:
            problems.append("k must be at least 1")
        if self.workers < 1:
            problems.append("workers must be at least 1")
        if problems:
            error_msg = f"Invalid experiment configuration: {'; '.join(problems)}."
            logging.error(error_msg)
            raise ConfigError(error_msg)
        if self.mnist_dir:
            located = find_mnist_files(self.mnist_dir)
            for name, path in located.items():
                if not getattr(self, name):
                    setattr(self, name, path)

    @classmethod
    def from_mapping(cls, values: dict) -> 'ExperimentConfig':
        """
        Builds a config from flat key/value pairs, values may be strings as read from a config file
        """
        kwargs = {}
        solver = {}
        tangent = {}
        try:
            for key, value in values.items():
                if value is None:
                    continue
                if key in _CONVERTERS:
                    kwargs[key] = _CONVERTERS[key](value)
                elif key in _SOLVER_CONVERTERS:
                    solver[key] = _SOLVER_CONVERTERS[key](value)
                elif key in _TANGENT_CONVERTERS:
                    name, convert = _TANGENT_CONVERTERS[key]
                    tangent[name] = convert(value)
                else:
                    raise ConfigError(f"Unknown configuration key '{key}'")
            return cls(solver_options=SolverOptions(**solver), tangent_config=TangentConfig(**tangent), **kwargs)
        except ConfigError:
            raise
        except (ValueError, TypeError) as e:
            error_msg = f"Invalid experiment configuration: {e}"
            logging.error(error_msg)
            raise ConfigError(error_msg) from e

    @classmethod
    def from_file(cls, path, **overrides) -> 'ExperimentConfig':
        """
        Reads flat `key = value` lines. Blank lines and text after # are ignored, lists are comma separated.
        Overrides given as keyword arguments win over the file, None overrides are ignored.
        """
        with open(path, encoding='utf8') as fh:
            values = parse_config_text(fh.read())
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls.from_mapping(values)


def parse_config_text(text: str) -> dict:
    values = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            error_msg = f"Line {number} of the configuration is not of the form key = value: {line!r}"
            logging.error(error_msg)
            raise ConfigError(error_msg)
        key, value = line.split('=', 1)
        values[key.strip()] = value.strip()
    return values


@dataclass(frozen=True)
class AccuracyRecord:
    distance: DistanceKind
    training_size: int
    set_index: int
    accuracy: float


@dataclass(frozen=True)
class SummaryRow:
    distance: DistanceKind
    training_size: int
    mean_accuracy: float
    std_dev: float


class ProtocolLoader:
    """Reads the MNIST files named in the config and draws the protocol sets."""

    def load(self, cfg: ExperimentConfig) -> ProtocolSets:
        for name in ('train_images', 'train_labels', 'test_images', 'test_labels'):
            if not getattr(cfg, name):
                error_msg = f"No path configured for {name}; set it or mnist_dir."
                logging.error(error_msg)
                raise ConfigError(error_msg)
        train = load_raw_dataset(cfg.train_images, cfg.train_labels)
        test = load_raw_dataset(cfg.test_images, cfg.test_labels)
        return build_protocol_sets(train, test, cfg.seed, num_training_sets=cfg.num_training_sets,
                                   per_digit=PER_DIGIT, pool_per_digit=cfg.pool_per_digit,
                                   test_per_digit=cfg.test_size_per_digit)


_WORKER_STATE = {}


def _init_worker(tests, training_sets, solver_options, tangent_config):
    _WORKER_STATE['tests'] = tests
    _WORKER_STATE['training_sets'] = training_sets
    _WORKER_STATE['metrics'] = {kind: Metric(kind, solver_options, tangent_config) for kind in DistanceKind}


def _distance_row(task) -> tuple:
    """
    Distances from one test image to every item of one training set, with a certificate row per
    Kantorovich solve
    """
    kind, set_index, position = task
    test = _WORKER_STATE['tests'][position]
    metric = _WORKER_STATE['metrics'][kind]
    opts = metric.solver_options
    values = {}
    diagnostics = []
    for item in _WORKER_STATE['training_sets'][set_index]:
        try:
            result = metric(item.pixels, test.pixels, a_key=item.source_index)
        except MKDistanceError as e:
            raise ExperimentError(f"{kind.value} distance failed between test image {test.source_index} and "
                                  f"training image {item.source_index} of set {set_index}: {e}") from e
        values[(test.source_index, item.source_index, kind)] = result.value
        if result.plan is not None:
            report = verify_optimality(result.plan, result.cost, opts.dual_tol, opts.marginal_tol)
            diagnostics.append({
                'distance': kind.value,
                'set_index': set_index,
                'test_index': test.source_index,
                'train_index': item.source_index,
                'iterations': result.plan.iterations,
                'status': result.plan.status.value,
                'max_dual_violation': report.max_dual_violation,
                'max_slackness_residual': report.max_slackness_residual,
                'max_marginal_residual': report.max_marginal_residual,
                'duality_gap': report.duality_gap,
                'passed': report.passed,
            })
    return values, diagnostics


class AccuracyEvaluator:
    """
    Computes every (distance, training size, set) accuracy.
    Distances from each test image to the largest training subset are computed once, in a pool of worker
    processes, and the nested smaller subsets are classified from the merged cache.
    """

    def __init__(self, workers: int = 1):
        self._workers = workers

    def evaluate(self, protocol: ProtocolSets, cfg: ExperimentConfig) -> tuple:
        tests = training_subset(protocol.test_set, cfg.test_size_per_digit)
        largest = max(cfg.training_sizes)
        training_sets = [training_subset(protocol.training_sets[set_index], largest)
                         for set_index in range(cfg.num_training_sets)]
        tasks = [(kind, set_index, position) for kind in cfg.distances
                 for set_index in range(cfg.num_training_sets) for position in range(len(tests))]
        logging.info(f"Evaluating {len(tasks)} distance rows of {len(training_sets[0])} training images "
                     f"with {self._workers} worker(s)")

        cache = DistanceCache()
        diagnostics = []
        initargs = (tests, training_sets, cfg.solver_options, cfg.tangent_config)
        for done, (values, rows) in enumerate(self._map(_distance_row, tasks, initargs), start=1):
            cache.update(values)
            diagnostics.extend(rows)
            if done % max(1, len(tasks) // 10) == 0 or done == len(tasks):
                logging.info(f"Completed {done}/{len(tasks)} distance rows")

        records = []
        for kind in cfg.distances:
            metric = Metric(kind, cfg.solver_options, cfg.tangent_config)
            for size in cfg.training_sizes:
                for set_index, training_set in enumerate(training_sets):
                    train = training_subset(training_set, size)
                    records.append(AccuracyRecord(kind, size, set_index, accuracy(tests, train, metric, cfg.k, cache)))
        records.sort(key=_record_key)
        diagnostics_df = pd.DataFrame(diagnostics, columns=DIAGNOSTIC_COLUMNS)
        self._report(diagnostics_df)
        return records, diagnostics_df

    def _map(self, fn, tasks, initargs):
        if self._workers == 1:
            return self._serial_map(fn, tasks, initargs)
        return self._pooled_map(fn, tasks, initargs)

    @staticmethod
    def _serial_map(fn, tasks, initargs):
        # the main process doubles as the worker; drop its datasets and tangent caches once done
        _init_worker(*initargs)
        try:
            yield from map(fn, tasks)
        finally:
            _WORKER_STATE.clear()

    def _pooled_map(self, fn, tasks, initargs):
        with ProcessPoolExecutor(max_workers=self._workers, initializer=_init_worker, initargs=initargs) as pool:
            yield from pool.map(fn, tasks, chunksize=max(1, len(tasks) // (self._workers * 8)))

    @staticmethod
    def _report(diagnostics_df: pd.DataFrame):
        if diagnostics_df.empty:
            return
        limited = int((diagnostics_df['status'] != 'optimal').sum())
        failed = int((~diagnostics_df['passed'].astype(bool)).sum())
        if limited:
            logging.warning(f"{limited} transport solves stopped at the iteration cap, see diagnostics.csv")
        if failed:
            logging.warning(f"{failed} transport plans failed their optimality certificate, see diagnostics.csv")


DIAGNOSTIC_COLUMNS = ['distance', 'set_index', 'test_index', 'train_index', 'iterations', 'status',
                      'max_dual_violation', 'max_slackness_residual', 'max_marginal_residual', 'duality_gap',
                      'passed']


def _record_key(record: AccuracyRecord) -> tuple:
    return DISTANCE_ORDER[record.distance], record.training_size, record.set_index


def records_frame(records) -> pd.DataFrame:
    return pd.DataFrame(
        [(record.distance.value, record.training_size, record.set_index, record.accuracy)
         for record in sorted(records, key=_record_key)],
        columns=['distance', 'training_size', 'set_index', 'accuracy'])


def summary_frame(summary) -> pd.DataFrame:
    return pd.DataFrame(
        [(row.distance.value, row.training_size, row.mean_accuracy, row.std_dev) for row in summary],
        columns=['distance', 'training_size', 'mean', 'std_dev'])


def summarise(records) -> list:
    """
    Mean and population standard deviation of the accuracy over the sets, per distance and training size
    """
    df = records_frame(records)
    grouped = df.groupby(['distance', 'training_size'], sort=False)['accuracy'].agg(
        mean='mean', std_dev=lambda accuracies: accuracies.std(ddof=0)).reset_index()
    return [SummaryRow(DistanceKind(row.distance), int(row.training_size), float(row.mean), float(row.std_dev))
            for row in grouped.itertuples(index=False)]


class PersistenceUnit:

    def __init__(self, output_dir):
        self._output_dir = output_dir

    def save_results(self, records, summary, diagnostics: Optional[pd.DataFrame] = None) -> list:
        """
        Writes the result files into the configured directory:
        records.csv: distance,training_size,set_index,accuracy
        summary.csv: distance,training_size,mean,std_dev
        table1.txt: mean accuracy in percent at the sampled training sizes, one row per distance
        curves.csv: mean and the mean -/+ one standard deviation band per size, for plotting
        diagnostics.csv: one certificate row per transport solve, when diagnostics are given
        :param records: accuracy records
        :param summary: summary rows
        :param diagnostics: certificate rows
        :return: the written paths
        """
        if not records:
            error_msg = "There are no accuracy records to write."
            logging.error(error_msg)
            raise ExperimentError(error_msg)
        os.makedirs(self._output_dir, exist_ok=True)
        written = []

        filename = os.path.join(self._output_dir, 'records.csv')
        logging.info(f"Saving accuracy records to {filename}")
        records_frame(records).to_csv(filename, index=False)
        written.append(filename)

        summary_df = summary_frame(summary)
        filename = os.path.join(self._output_dir, 'summary.csv')
        logging.info(f"Saving accuracy summary to {filename}")
        summary_df.to_csv(filename, index=False)
        written.append(filename)

        filename = os.path.join(self._output_dir, 'table1.txt')
        logging.info(f"Saving sampled accuracy table to {filename}")
        Path(filename).write_text(format_table(summary_df), encoding='utf8')
        written.append(filename)

        filename = os.path.join(self._output_dir, 'curves.csv')
        logging.info(f"Saving accuracy curves to {filename}")
        curves_df = summary_df.assign(lower=summary_df['mean'] - summary_df['std_dev'],
                                      upper=summary_df['mean'] + summary_df['std_dev'])
        curves_df.to_csv(filename, index=False)
        written.append(filename)

        if diagnostics is not None:
            filename = os.path.join(self._output_dir, 'diagnostics.csv')
            logging.info(f"Saving solver diagnostics to {filename}")
            diagnostics.to_csv(filename, index=False)
            written.append(filename)
        return written


def format_table(summary_df: pd.DataFrame) -> str:
    """
    Mean accuracies in percent with one decimal, at the sizes of TABLE_SIZES that were run
    (at all sizes run when none of them was)
    """
    sizes = sorted(summary_df['training_size'].unique())
    columns = [size for size in TABLE_SIZES if size in sizes] or sizes
    lines = ["Number of training digits with accuracy (%)",
             f"{'Distance':<12}" + ''.join(f"{size:>8}" for size in columns)]
    for distance, rows in summary_df.groupby('distance', sort=False):
        means = dict(zip(rows['training_size'], rows['mean']))
        cells = ''.join(f"{means[size] * 100:>8.1f}" if size in means else f"{'-':>8}" for size in columns)
        lines.append(f"{distance.capitalize():<12}" + cells)
    return '\n'.join(lines) + '\n'


def emit_outputs(records, summary, outdir, diagnostics: Optional[pd.DataFrame] = None) -> list:
    return PersistenceUnit(outdir).save_results(records, summary, diagnostics)


class ExperimentRunner:
    def __init__(self, loader, evaluator, persistence_unit):
        self._loader = loader
        self._evaluator = evaluator
        self._persistence_unit = persistence_unit

    def run(self, cfg: ExperimentConfig) -> tuple:
        """
        Loads the protocol sets, evaluates every accuracy and persists the results.
        The steps are delegated to the injected loader, evaluator and persistence unit.
        :param cfg: the experiment configuration
        :return: the sorted accuracy records and the summary rows
        """
        logging.info(f"Running experiment with distances {[kind.value for kind in cfg.distances]}, "
                     f"training sizes {list(cfg.training_sizes)} and {cfg.num_training_sets} training sets")
        protocol = self._loader.load(cfg)
        records, diagnostics = self._evaluator.evaluate(protocol, cfg)
        summary = summarise(records)
        self._persistence_unit.save_results(records, summary, diagnostics)
        return records, summary


def run_experiment(cfg: ExperimentConfig) -> tuple:
    runner = ExperimentRunner(ProtocolLoader(), AccuracyEvaluator(cfg.workers), PersistenceUnit(cfg.output_dir))
    return runner.run(cfg)
