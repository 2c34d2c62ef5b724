"""
Running experiments and writing their results.

An `ExperimentPreset` bundles a population, a policy configuration and the
true effect with a per-seed trial function and a way to reduce the trials
to the rows of a `ResultTable`. `run_preset` runs the trials (optionally on
a process pool) and `emit_result_table` writes the table as CSV together
with an SVG line chart.

Run configurations are JSON documents with up to three sections:

    {
      "population": {"types": [{"fraction": 0.5,
                                "theta_prior": {"mean": -0.5, "std_dev": 1.0},
                                "baseline": {"hyper_mean": 0.0, "hyper_std": 1.0, "noise_std": 1.0}},
                               ...]},
      "policy": {"rho": 0.001, "ell": 100000, ...},
      "experiment": {"theta": 0.5, "seeds": 5, "behavior": "theory"}
    }

A k-arm type gives `"arm_priors": [{...}, ...]` instead of `"theta_prior"`.
`policy` accepts the fields of `ivlab.mechanism.PolicyConfig`. Unknown keys
raise `ConfigKeyError`.
"""


from __future__ import annotations
from typing import Any, Callable, Mapping, Optional, Sequence, Union
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from hashlib import sha256
from pathlib import Path

import csv
import json

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from ..agents import BayesMC, BehaviorModel, PopulationSpec, TheoryDriven, TypeSpec
from ..compliance import PriorSpec
from ..errors import IVLabError, ConfigurationError
from ..mechanism import LengthMode, PolicyConfig
from ..stats import GaussianBaseline, TruncatedGaussian


class ConfigKeyError(IVLabError):
    """A run configuration has an unknown key, or a key with an unusable value."""

    def __init__(self, key: str, problem: str="unknown key"):
        super().__init__(f"{problem}: {key}")
        self.key = key
        """The dotted path of the offending key, e.g. `policy.rho`."""


class OutputError(IVLabError):
    """A result file could not be written."""
    pass


Theta = Union[float, tuple[float, ...]]


@dataclass(frozen=True)
class ResultTable:
    """
    Named columns of floats. The first column is the x-axis; a column
    `name_mean` followed by `name_se` is one series with its standard error,
    and any other column is a series on its own.
    """
    name: str
    columns: tuple[str, ...]
    rows: tuple[tuple[float, ...], ...]
    seeds: tuple[int, ...] = ()
    config_hash: str = ""
    log_y: bool = False

    def __post_init__(self):
        if len(self.columns) < 2:
            raise ConfigurationError("a result table needs an x column and at least one series")
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ConfigurationError(f"row {row!r} does not match columns {self.columns!r}")

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([row[i] for row in self.rows])

    def series(self) -> list[tuple[str, str, Optional[str]]]:
        """Returns (label, value column, standard-error column or None) for each series."""
        found = []
        for c in self.columns[1:]:
            if c.endswith("_se"):
                continue
            label = c[:-len("_mean")] if c.endswith("_mean") else c
            se = f"{label}_se"
            found.append((label, c, se if se in self.columns else None))
        return found


def summarize(values: Sequence[float]) -> tuple[float, float]:
    """
    Returns the mean of the finite `values` and its standard error (sample
    standard deviation over √n). Both are NaN if no value is finite.
    """
    finite = np.asarray([v for v in values if np.isfinite(v)], dtype=np.float64)
    if len(finite) == 0:
        return (float('nan'), float('nan'))
    if len(finite) == 1:
        return (float(finite[0]), 0.0)
    return (float(finite.mean()), float(finite.std(ddof=1) / np.sqrt(len(finite))))


def _write_csv(table: ResultTable, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as f:
        f.write(f"# name: {table.name}\n")
        f.write(f"# seeds: {' '.join(str(s) for s in table.seeds)}\n")
        f.write(f"# config_hash: {table.config_hash}\n")
        f.write(f"# log_y: {int(table.log_y)}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([repr(float(v)) for v in row])


def _write_svg(table: ResultTable, path: Path) -> None:
    x = table.column(table.columns[0])
    with matplotlib.rc_context({"svg.hashsalt": "ivlab", "svg.fonttype": "path"}):
        fig = Figure(figsize=(6.4, 4.8))
        ax = fig.subplots()
        for (label, values, se) in table.series():
            y = table.column(values)
            (line,) = ax.plot(x, y, marker="o", label=label, gid=label)
            if se is not None:
                ax.errorbar(x, y, yerr=table.column(se), fmt="none", ecolor=line.get_color())
        if len(x) > 1 and x.min() > 0 and x.max() >= 100 * x.min():
            ax.set_xscale("log")
        if table.log_y:
            ax.set_yscale("log")
        ax.set_xlabel(table.columns[0])
        ax.set_title(table.name)
        ax.legend()
        fig.savefig(path, format="svg", metadata={"Date": None})


def emit_result_table(table: ResultTable, out_dir: Path) -> tuple[Path, Path]:
    """
    Writes `<out_dir>/<name>.csv` and `<out_dir>/<name>.svg` and returns
    their paths. Floats are written in shortest round-trip form, so
    `read_result_table` returns an equal table.
    """
    if not table.rows:
        raise ConfigurationError(f"result table {table.name!r} is empty")
    csv_path = out_dir / f"{table.name}.csv"
    svg_path = out_dir / f"{table.name}.svg"
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_csv(table, csv_path)
        _write_svg(table, svg_path)
    except OSError as e:
        raise OutputError(f"cannot write results to {out_dir}: {e.strerror or e}") from e
    return (csv_path, svg_path)


def read_result_table(path: Path) -> ResultTable:
    """Reads a CSV written by `emit_result_table`."""
    meta: dict[str, str] = {}
    with path.open(newline="", encoding="utf-8") as f:
        lines = f.read().split("\n")
    body = []
    for line in lines:
        if line.startswith("# "):
            (key, _, value) = line[2:].partition(": ")
            meta[key] = value
        elif line:
            body.append(line)
    reader = csv.reader(body)
    columns = tuple(next(reader))
    rows = tuple(tuple(float(v) for v in row) for row in reader)
    seeds = tuple(int(s) for s in meta.get("seeds", "").split())
    return ResultTable(meta.get("name", path.stem), columns, rows, seeds, meta.get("config_hash", ""),
                       meta.get("log_y", "0") == "1")


def config_hash(document: Mapping[str, Any]) -> str:
    """A short digest of a configuration document, independent of key order."""
    canonical = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _int_tuple(value: Any) -> tuple[int, ...]:
    if not isinstance(value, list):
        raise TypeError("expected a list")
    return tuple(int(v) for v in value)


def _float_tuple(value: Any) -> tuple[float, ...]:
    if not isinstance(value, list):
        raise TypeError("expected a list")
    return tuple(float(v) for v in value)


def _theta(value: Any) -> Theta:
    return tuple(float(v) for v in value) if isinstance(value, list) else float(value)


def _bool(value: Any) -> bool:
    if not isinstance(value, bool):
        raise TypeError("expected true or false")
    return value


_POLICY_KEYS: dict[str, Callable[[Any], Any]] = {
    'rho': float, 'ell': int, 'delta': float, 'horizon': int, 'ell0': int, 'ell1': int, 'h': int, 'tau': float,
    'xi_delta': float, 'g_gap_bound': float, 'g_gap_bounds': _float_tuple, 'sigma_g': float, 'arm_count': int,
    'mirrored': _bool, 'checkpoints': _int_tuple, 'ell_mode': LengthMode, 'ell_cap': int,
    'compliant_types': _int_tuple, 'monte_carlo_iters': int,
}

_EXPERIMENT_KEYS: dict[str, Callable[[Any], Any]] = {
    'theta': _theta, 'seeds': int, 'behavior': str, 'posterior_samples': int, 'n': int, 'iters': int,
}

_DISTRIBUTION_KEYS = {'mean': float, 'std_dev': float, 'lower': float, 'upper': float}
_BASELINE_KEYS = {'hyper_mean': float, 'hyper_std': float, 'noise_std': float}


def _section(value: Any, where: str, keys: Mapping[str, Callable[[Any], Any]]) -> dict[str, Any]:
    if not isinstance(value, dict):
        raise ConfigKeyError(where, "expected an object")
    parsed = {}
    for (key, raw) in value.items():
        if key not in keys:
            raise ConfigKeyError(f"{where}.{key}")
        try:
            parsed[key] = keys[key](raw)
        except (TypeError, ValueError):
            raise ConfigKeyError(f"{where}.{key}", f"invalid value {raw!r}")
    return parsed


def _prior(value: Any, where: str) -> PriorSpec:
    if not isinstance(value, dict):
        raise ConfigKeyError(where, "expected an object")
    for key in value:
        if key not in ('fraction', 'theta_prior', 'arm_priors', 'baseline'):
            raise ConfigKeyError(f"{where}.{key}")
    baseline = GaussianBaseline(**_section(value.get('baseline', {}), f"{where}.baseline", _BASELINE_KEYS))
    if 'arm_priors' in value:
        arms = value['arm_priors']
        if not isinstance(arms, list):
            raise ConfigKeyError(f"{where}.arm_priors", "expected a list")
        return PriorSpec(arm_priors=tuple(
            TruncatedGaussian(**_section(a, f"{where}.arm_priors[{i}]", _DISTRIBUTION_KEYS))
            for (i, a) in enumerate(arms)), baseline=baseline)
    if 'theta_prior' not in value:
        raise ConfigKeyError(f"{where}.theta_prior", "missing key")
    return PriorSpec(TruncatedGaussian(**_section(value['theta_prior'], f"{where}.theta_prior",
                                                  _DISTRIBUTION_KEYS)), baseline)


def parse_population(value: Any, where: str="population") -> PopulationSpec:
    """Builds a `PopulationSpec` from the `population` section of a run configuration."""
    if not isinstance(value, dict):
        raise ConfigKeyError(where, "expected an object")
    for key in value:
        if key != 'types':
            raise ConfigKeyError(f"{where}.{key}")
    types = value.get('types')
    if not isinstance(types, list):
        raise ConfigKeyError(f"{where}.types", "expected a list")
    specs = []
    for (i, t) in enumerate(types):
        prior = _prior(t, f"{where}.types[{i}]")
        try:
            fraction = float(t.get('fraction', 1.0))
        except (TypeError, ValueError):
            raise ConfigKeyError(f"{where}.types[{i}].fraction", f"invalid value {t.get('fraction')!r}")
        specs.append(TypeSpec(prior, fraction))
    return PopulationSpec(tuple(specs))


@dataclass(frozen=True)
class RunConfig:
    """A parsed run configuration. Empty sections leave the preset's defaults alone."""
    population: Optional[PopulationSpec] = None
    policy: dict[str, Any] = field(default_factory=dict)
    experiment: dict[str, Any] = field(default_factory=dict)
    digest: str = config_hash({})


def parse_config(document: Any) -> RunConfig:
    if not isinstance(document, dict):
        raise ConfigKeyError("(root)", "expected an object")
    for key in document:
        if key not in ('population', 'policy', 'experiment'):
            raise ConfigKeyError(key)
    population = parse_population(document['population']) if 'population' in document else None
    return RunConfig(population, _section(document.get('policy', {}), "policy", _POLICY_KEYS),
                     _section(document.get('experiment', {}), "experiment", _EXPERIMENT_KEYS),
                     config_hash(document))


def load_config(path: Optional[Path]) -> RunConfig:
    """Reads and parses the run configuration at `path`; no path gives the empty configuration."""
    if path is None:
        return RunConfig()
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"cannot read {path}: {e.strerror or e}") from e
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e
    return parse_config(document)


def behavior_model(name: str, posterior_samples: int=2000) -> BehaviorModel:
    """Returns the behavior model called `name`: "theory" or "bayes"."""
    if name == "theory":
        return TheoryDriven()
    if name == "bayes":
        return BayesMC(posterior_samples)
    raise ConfigKeyError("experiment.behavior", f"invalid value {name!r}")


@dataclass(frozen=True)
class ExperimentPreset:
    """
    A named experiment. `trial` runs one seed; `reduce` turns the trials of
    every seed (in seed order) into table rows.
    """
    name: str
    description: str
    population: PopulationSpec
    policy: PolicyConfig
    theta: Theta
    seed_count: int
    trial: Callable[[ExperimentPreset, int], Any]
    reduce: Callable[[ExperimentPreset, list[Any]], list[tuple[float, ...]]]
    columns: tuple[str, ...]
    log_y: bool = False
    grid: tuple[float, ...] = ()
    """The values the preset sweeps over, if any."""
    iters: int = 1000
    """Monte Carlo iterations, for presets that estimate constants."""
    n: int = 1000
    """Rounds per run, for presets that run a fixed-length trial."""
    behavior: str = "theory"
    posterior_samples: int = 2000

    def configure(self, config: RunConfig) -> ExperimentPreset:
        """Returns this preset with the overrides of `config` applied."""
        population = self.population if config.population is None else config.population
        policy = replace(self.policy, **config.policy) if config.policy else self.policy
        exp = config.experiment
        preset = replace(self, population=population, policy=policy,
                         theta=exp.get('theta', self.theta), seed_count=exp.get('seeds', self.seed_count),
                         iters=exp.get('iters', self.iters), n=exp.get('n', self.n),
                         behavior=exp.get('behavior', self.behavior),
                         posterior_samples=exp.get('posterior_samples', self.posterior_samples))
        if preset.seed_count < 1:
            raise ConfigKeyError("experiment.seeds", f"invalid value {preset.seed_count!r}")
        behavior_model(preset.behavior, preset.posterior_samples)
        return preset

    def behavior_model(self) -> BehaviorModel:
        return behavior_model(self.behavior, self.posterior_samples)


def seed_list(base: int, count: int) -> tuple[int, ...]:
    return tuple(base + i for i in range(count))


def _run_trial(task: tuple[ExperimentPreset, int]) -> Any:
    (preset, seed) = task
    return preset.trial(preset, seed)


def run_trials(preset: ExperimentPreset, seeds: Sequence[int], jobs: int=1) -> list[Any]:
    """Runs one trial per seed, on `jobs` worker processes, and returns them in seed order."""
    tasks = [(preset, s) for s in sorted(seeds)]
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_trial(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(_run_trial, tasks))


def run_preset(preset: ExperimentPreset, seeds: Sequence[int], jobs: int=1,
               digest: str="") -> tuple[ResultTable, list[Any]]:
    """Runs `preset` for `seeds` and returns its result table and the per-seed trials."""
    trials = run_trials(preset, seeds, jobs)
    rows = preset.reduce(preset, trials)
    table = ResultTable(preset.name, preset.columns, tuple(tuple(float(v) for v in r) for r in rows),
                        tuple(sorted(seeds)), digest or config_hash({'preset': preset.name}), preset.log_y)
    return (table, trials)


__all__ = ['ConfigKeyError', 'OutputError', 'ResultTable', 'summarize', 'emit_result_table', 'read_result_table',
           'config_hash', 'parse_population', 'RunConfig', 'parse_config', 'load_config', 'behavior_model',
           'ExperimentPreset', 'seed_list', 'run_trials', 'run_preset']

import unittest
from tempfile import TemporaryDirectory
from xml.etree import ElementTree


_ROWS = ((1000.0, 0.5, 0.1, 1.2, 0.2), (3000.0, 0.3, 0.05, 1.1, 0.2))


def _table(rows: Sequence[tuple[float, ...]]=_ROWS) -> ResultTable:
    return ResultTable("demo", ("x", "iv_mean", "iv_se", "ols_mean", "ols_se"), tuple(rows), (7, 8), "abc123")


class TestResultTable(unittest.TestCase):
    def test_series(self) -> None:
        self.assertEqual(_table().series(), [("iv", "iv_mean", "iv_se"), ("ols", "ols_mean", "ols_se")])
        t = ResultTable("rho", ("gap", "p_xi", "p_xi_se", "rho_ceiling"), ((0.1, 0.005, 0.002, 0.008),))
        self.assertEqual(t.series(), [("p_xi", "p_xi", "p_xi_se"), ("rho_ceiling", "rho_ceiling", None)])

    def test_round_trip(self) -> None:
        table = _table(((1000.0, 0.1 + 0.2, 1 / 3, 1e-17, 2.5e300),))
        with TemporaryDirectory() as d:
            (csv_path, _) = emit_result_table(table, Path(d))
            self.assertEqual(read_result_table(csv_path), table)

    def test_single_row(self) -> None:
        with TemporaryDirectory() as d:
            (csv_path, _) = emit_result_table(_table(((1.0, 2.0, 0.0, 3.0, 0.0),)), Path(d))
            text = csv_path.read_text(encoding="utf-8")
            self.assertNotIn("\r", text)
            data = [line for line in text.splitlines() if not line.startswith("#")]
            self.assertEqual(data, ["x,iv_mean,iv_se,ols_mean,ols_se", "1.0,2.0,0.0,3.0,0.0"])
            self.assertIn("# config_hash: abc123", text)

    def test_reproducible(self) -> None:
        with TemporaryDirectory() as a, TemporaryDirectory() as b:
            paths_a = emit_result_table(_table(), Path(a))
            paths_b = emit_result_table(_table(), Path(b))
            for (pa, pb) in zip(paths_a, paths_b):
                self.assertEqual(pa.read_bytes(), pb.read_bytes())

    def test_svg(self) -> None:
        with TemporaryDirectory() as d:
            (_, svg_path) = emit_result_table(_table(), Path(d))
            root = ElementTree.parse(svg_path).getroot()
            ids = {e.get('id') for e in root.iter()}
            self.assertIn("iv", ids)
            self.assertIn("ols", ids)

    def test_empty(self) -> None:
        with TemporaryDirectory() as d:
            self.assertRaises(ConfigurationError, emit_result_table, _table(()), Path(d))

    def test_unwritable(self) -> None:
        with TemporaryDirectory() as d:
            blocker = Path(d) / "file"
            blocker.write_text("", encoding="utf-8")
            self.assertRaises(OutputError, emit_result_table, _table(), blocker / "out")

    def test_summarize(self) -> None:
        self.assertEqual(summarize([2.0]), (2.0, 0.0))
        (mean, se) = summarize([1.0, 3.0, float('nan')])
        self.assertEqual(mean, 2.0)
        self.assertAlmostEqual(se, 1.0)


class TestConfig(unittest.TestCase):
    DOCUMENT = {
        'population': {'types': [
            {'fraction': 0.5, 'theta_prior': {'mean': -0.5, 'std_dev': 1.0},
             'baseline': {'hyper_mean': 0.0, 'hyper_std': 1.0, 'noise_std': 1.0}},
            {'fraction': 0.5, 'theta_prior': {'mean': 0.9, 'std_dev': 1.0},
             'baseline': {'hyper_mean': 0.1, 'hyper_std': 1.0, 'noise_std': 1.0}},
        ]},
        'policy': {'rho': 0.01, 'checkpoints': [100, 200], 'ell_mode': 'empirical'},
        'experiment': {'theta': 0.5, 'seeds': 3},
    }

    def test_parse(self) -> None:
        config = parse_config(self.DOCUMENT)
        assert config.population is not None
        self.assertEqual(config.population.never_takers(), [0])
        self.assertEqual(config.policy, {'rho': 0.01, 'checkpoints': (100, 200), 'ell_mode': LengthMode.EMPIRICAL})
        self.assertEqual(config.experiment, {'theta': 0.5, 'seeds': 3})
        self.assertEqual(parse_config({'policy': {'g_gap_bounds': [0, 0.5]}}).policy, {'g_gap_bounds': (0.0, 0.5)})

    def test_unknown_keys(self) -> None:
        for (document, key) in (({'policy': {'rhoo': 0.1}}, "policy.rhoo"),
                                ({'polcy': {}}, "polcy"),
                                ({'experiment': {'seeds': "many"}}, "experiment.seeds"),
                                ({'population': {'types': [{'theta_prior': {'mean': 0.1, 'sd': 1}}]}},
                                 "population.types[0].theta_prior.sd")):
            with self.assertRaises(ConfigKeyError) as cm:
                parse_config(document)
            self.assertEqual(cm.exception.key, key)

    def test_hash(self) -> None:
        reordered = dict(reversed(list(self.DOCUMENT.items())))
        self.assertEqual(config_hash(self.DOCUMENT), config_hash(reordered))
        self.assertNotEqual(config_hash(self.DOCUMENT), config_hash({}))

    def test_load(self) -> None:
        with TemporaryDirectory() as d:
            path = Path(d) / "c.json"
            path.write_text(json.dumps(self.DOCUMENT), encoding="utf-8")
            self.assertEqual(load_config(path).digest, config_hash(self.DOCUMENT))
            path.write_text("{\"policy\": ", encoding="utf-8")
            self.assertRaises(ConfigurationError, load_config, path)
        self.assertEqual(load_config(None), RunConfig())

    def test_behavior(self) -> None:
        self.assertIsInstance(behavior_model("theory"), TheoryDriven)
        self.assertIsInstance(behavior_model("bayes", 10), BayesMC)
        self.assertRaises(ConfigKeyError, behavior_model, "random")
