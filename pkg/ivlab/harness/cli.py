"""
The `ivlab` command.

    ivlab constants  [--config c.json]
    ivlab simulate   [--policy combined|sampling|racing|trial] [--config c.json] [--out-dir out]
    ivlab estimate   --input samples.csv [--arms K] [--delta D] [--sigma-g S]
    ivlab experiment PRESET [--config c.json] [--out-dir out] [--jobs N]

Every subcommand accepts `--seed` (falling back to `IVLAB_SEED`, then 0)
and `--verbose`, which logs planner and agent events as a table.
"""


from __future__ import annotations
from typing import Optional, Sequence, TextIO
from argparse import ArgumentParser, Namespace
from dataclasses import replace
from pathlib import Path

import csv
import os
import sys

import numpy as np

from ..compliance import (delta_budget, estimate_xi_probability, estimate_xi_probability_k,
                          exploration_probability_bound, exploration_probability_bound_k, racing_thresholds)
from ..errors import IVLabError, ConfigurationError
from ..estimator import BINARY, SampleSet, estimate, ols_estimate
from ..logging import Logger, PrintLogger
from ..mechanism import TrajectoryLog, pseudo_regret
from ..mechanism.binary import run_combined_policy, run_racing_stage, run_randomized_trial, run_sampling_stage
from ..mechanism.karm import run_combined_policy_k, run_racing_stage_k, run_sampling_stage_k
from ..stats import Streams, truncated_mean
from . import ExperimentPreset, OutputError, emit_result_table, load_config, run_preset, seed_list
from .experiments import PRESETS


SEED_VARIABLE = "IVLAB_SEED"


def resolve_seed(flag: Optional[int]) -> int:
    """`--seed` if given, else `IVLAB_SEED`, else 0."""
    if flag is not None:
        return flag
    value = os.environ.get(SEED_VARIABLE)
    if value is None or value.strip() == "":
        return 0
    try:
        return int(value)
    except ValueError:
        raise ConfigurationError(f"{SEED_VARIABLE} must be an integer, not {value!r}") from None


def _configured(name: str, args: Namespace) -> ExperimentPreset:
    return PRESETS[name].configure(load_config(args.config))


def _logger(args: Namespace, out: TextIO) -> Logger:
    return PrintLogger(out) if args.verbose else Logger()


def constants(args: Namespace, out: TextIO) -> None:
    """Prints the compliance constants of every type."""
    preset = _configured('fig1', args)
    pop = preset.population
    cfg = preset.policy
    iters = preset.iters
    streams = Streams(resolve_seed(args.seed))
    if pop.arm_count == BINARY:
        thresholds = racing_thresholds(pop, cfg.tau)
        xi_cfg = cfg.xi_config(pop).running()
        print(f"G = {xi_cfg.g_gap_bound:.6g}, delta = {cfg.delta:.6g}, xi delta = {cfg.effective_xi_delta:.6g}",
              file=out)
        for (u, t) in enumerate(pop.types):
            prior = t.prior
            print(f"type {u}: {prior.preference.name.lower()}, fraction {t.fraction:.6g}, "
                  f"mu = {prior.prior_mean_theta:.6g}", file=out)
            if u in pop.never_takers():
                p_xi = estimate_xi_probability(pop, xi_cfg, iters, streams.stream('monte_carlo'), type_index=u)
                rho = exploration_probability_bound(prior.prior_mean_theta, p_xi.value)
                print(f"  P[xi] = {p_xi}, rho ceiling = {rho:.6g}", file=out)
            threshold = thresholds[u]
            budget = delta_budget(cfg.tau, 4 * threshold / cfg.tau)
            print(f"  racing threshold = {threshold:.6g}, delta budget = {budget:.6g}", file=out)
        return

    rng = streams.stream('monte_carlo')
    thresholds = racing_thresholds(pop, cfg.tau, iters, rng)
    for (u, t) in enumerate(pop.types):
        print(f"type {u}: fraction {t.fraction:.6g}, arm means "
              + ", ".join(f"{m:.6g}" for m in map(truncated_mean, t.prior.arm_priors)), file=out)
        p_xi = estimate_xi_probability_k(pop, cfg.ell, cfg.sigma_g, cfg.effective_xi_delta, iters, rng,
                                         type_index=u)
        try:
            rho = f"{exploration_probability_bound_k(t.prior.arm_means, p_xi.value):.6g}"
        except ConfigurationError as e:
            rho = f"undefined ({e})"
        print(f"  P[xi] = {p_xi}, rho ceiling = {rho}", file=out)
        print(f"  racing threshold = {thresholds[u]:.6g}", file=out)


TRAJECTORY_COLUMNS = ("t", "stage", "phase", "type", "z", "x", "y", "explore")


def write_trajectory(log: TrajectoryLog, path: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(TRAJECTORY_COLUMNS)
            for r in log.records:
                writer.writerow((r.t, r.stage.value, r.phase, r.type_index, "" if r.z is None else r.z, r.x,
                                 repr(r.y), int(r.explore)))
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e.strerror or e}") from e


def simulate(args: Namespace, out: TextIO) -> None:
    """Runs one policy and writes its trajectory."""
    preset = _configured('racing_fig', args)
    pop = preset.population
    cfg = preset.policy
    theta = preset.theta
    streams = Streams(resolve_seed(args.seed))
    behavior = preset.behavior_model()
    logger = _logger(args, out)
    karm = pop.arm_count != BINARY
    if karm:
        theta_k = tuple(np.atleast_1d(np.asarray(theta, dtype=float)))
        if args.policy == 'combined':
            (log, _) = run_combined_policy_k(cfg, pop, theta_k, streams, behavior, logger)
        elif args.policy == 'sampling':
            (_, log) = run_sampling_stage_k(cfg, pop, theta_k, streams, behavior, logger)
        elif args.policy == 'racing':
            s0 = SampleSet.from_records([], pop.arm_count)
            (log, _, _) = run_racing_stage_k(s0, cfg, pop, theta_k, streams, behavior, logger)
        else:
            raise ConfigurationError("the randomized trial needs a binary population")
    else:
        theta_b = float(theta)  # type: ignore[arg-type]
        if args.policy == 'combined':
            (log, _) = run_combined_policy(cfg, pop, theta_b, streams, behavior, logger)
        elif args.policy == 'sampling':
            (_, log) = run_sampling_stage(cfg, pop, theta_b, streams, behavior, logger)
        elif args.policy == 'racing':
            (log, _, _) = run_racing_stage(SampleSet.from_records([]), cfg, pop, theta_b, streams, behavior, logger)
        else:
            (_, log) = run_randomized_trial(cfg.horizon, pop, theta_b, streams, behavior=behavior, logger=logger)

    path = args.out_dir / "trajectory.csv"
    write_trajectory(log, path)
    winner = "undecided" if log.winner is None else str(log.winner)
    print(f"rounds = {len(log)}, winner = {winner}, stop round = {log.stop_round}", file=out)
    if log.records:
        print(f"regret = {pseudo_regret(log, theta).total:.6g}", file=out)
    print(f"wrote {path}", file=out)


def read_samples(path: Path, arm_count: int) -> SampleSet:
    """Reads a `z,x,y` CSV file."""
    try:
        with path.open(encoding="utf-8", newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames is None or not {"z", "x", "y"} <= set(reader.fieldnames):
                raise ConfigurationError(f"{path}: expected a header with columns z,x,y")
            rows = [(int(row["z"]), int(row["x"]), float(row["y"])) for row in reader]
    except OSError as e:
        raise ConfigurationError(f"cannot read {path}: {e.strerror or e}") from e
    except ValueError as e:
        raise ConfigurationError(f"{path}: {e}") from e
    return SampleSet.from_records(rows, arm_count)


def estimate_command(args: Namespace, out: TextIO) -> None:
    """Runs the estimators on stored samples."""
    samples = read_samples(args.input, args.arms)
    est = estimate(samples, args.delta, args.sigma_g)
    print(f"n = {len(samples)}", file=out)
    if samples.is_binary():
        print(f"theta_iv = {est.theta_hat:.6g}", file=out)
        try:
            print(f"theta_ols = {ols_estimate(samples):.6g}", file=out)
        except IVLabError as e:
            print(f"theta_ols = undefined ({e})", file=out)
    else:
        print("theta_iv = " + ", ".join(f"{v:.6g}" for v in est.theta_hat), file=out)
    print(f"bound = {est.bound:.6g} (delta = {args.delta:.6g})", file=out)


def experiment(args: Namespace, out: TextIO) -> None:
    """Runs a preset and writes its CSV and SVG."""
    config = load_config(args.config)
    preset = PRESETS[args.preset].configure(config)
    if args.seeds is not None:
        preset = replace(preset, seed_count=args.seeds)
    seeds = seed_list(resolve_seed(args.seed), preset.seed_count)
    (table, _) = run_preset(preset, seeds, args.jobs, config.digest)
    (csv_path, svg_path) = emit_result_table(table, args.out_dir)
    print(f"wrote {csv_path}", file=out)
    print(f"wrote {svg_path}", file=out)


def parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help=f"base seed (default ${SEED_VARIABLE}, then 0)")
    common.add_argument("--out-dir", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--config", type=Path, default=None, help="JSON run configuration")
    common.add_argument("--verbose", action="store_true", help="log every event")

    p = ArgumentParser(prog="ivlab", description="Incentivized exploration with instrumental variables.")
    commands = p.add_subparsers(dest="command", required=True)

    c = commands.add_parser("constants", parents=[common], help="print the compliance constants")
    c.set_defaults(handler=constants)

    s = commands.add_parser("simulate", parents=[common], help="run one policy and write its trajectory")
    s.add_argument("--policy", choices=("combined", "sampling", "racing", "trial"), default="combined")
    s.set_defaults(handler=simulate)

    e = commands.add_parser("estimate", parents=[common], help="estimate the effect from stored samples")
    e.add_argument("--input", type=Path, required=True, help="CSV with header z,x,y")
    e.add_argument("--arms", type=int, default=BINARY, help="number of arms (1 for binary)")
    e.add_argument("--delta", type=float, default=0.05)
    e.add_argument("--sigma-g", type=float, default=1.0)
    e.set_defaults(handler=estimate_command)

    x = commands.add_parser("experiment", parents=[common], help="run an experiment preset")
    x.add_argument("preset", choices=sorted(PRESETS))
    x.add_argument("--jobs", type=int, default=1, help="worker processes")
    x.add_argument("--seeds", type=int, default=None, help="number of seeds (overrides the preset)")
    x.set_defaults(handler=experiment)
    return p


def cli_run(argv: Optional[Sequence[str]]=None, out: TextIO=sys.stdout, err: TextIO=sys.stderr) -> int:
    """Runs the command line `argv` and returns the exit status."""
    try:
        args = parser().parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    try:
        args.handler(args, out)
    except IVLabError as e:
        print(f"ivlab: error: {e}", file=err)
        return 1
    return 0


def run() -> None:
    sys.exit(cli_run())


__all__ = ['resolve_seed', 'constants', 'write_trajectory', 'simulate', 'read_samples', 'estimate_command',
           'experiment', 'parser', 'cli_run', 'run']

import json
import re
import unittest
from contextlib import redirect_stderr
from io import StringIO
from tempfile import TemporaryDirectory
from unittest.mock import patch


class TestSeed(unittest.TestCase):
    def test_precedence(self) -> None:
        with patch.dict(os.environ, {SEED_VARIABLE: "11"}):
            self.assertEqual(resolve_seed(3), 3)
            self.assertEqual(resolve_seed(None), 11)
        with patch.dict(os.environ, {}, clear=True):
            self.assertEqual(resolve_seed(None), 0)
        with patch.dict(os.environ, {SEED_VARIABLE: "x"}):
            self.assertRaises(ConfigurationError, resolve_seed, None)


class TestCli(unittest.TestCase):
    def _run(self, *argv: str) -> tuple[int, str, str]:
        (out, err) = (StringIO(), StringIO())
        with redirect_stderr(err):
            status = cli_run(list(argv), out, err)
        return (status, out.getvalue(), err.getvalue())

    def test_estimate(self) -> None:
        with TemporaryDirectory() as d:
            path = Path(d) / "samples.csv"
            path.write_text("z,x,y\n1,1,1.2\n1,0,0.1\n0,0,-0.1\n0,0,0.0\n", encoding="utf-8")
            (status, out, _) = self._run("estimate", "--input", str(path))
        self.assertEqual(status, 0)
        self.assertIn("theta_iv = 1.4\n", out)

    def test_estimate_bad_input(self) -> None:
        with TemporaryDirectory() as d:
            path = Path(d) / "samples.csv"
            path.write_text("a,b\n1,2\n", encoding="utf-8")
            (status, _, err) = self._run("estimate", "--input", str(path))
        self.assertEqual(status, 1)
        self.assertIn("z,x,y", err)

    def test_constants(self) -> None:
        with TemporaryDirectory() as d:
            path = Path(d) / "c.json"
            path.write_text('{"experiment": {"iters": 10000}}', encoding="utf-8")
            (status, out, _) = self._run("constants", "--seed", "1", "--config", str(path))
        self.assertEqual(status, 0)
        self.assertIn("type 0: never_taker", out)
        ceilings = re.findall(r"rho ceiling = (\S+)", out)
        self.assertEqual(len(ceilings), 1)
        self.assertGreaterEqual(float(ceilings[0]), 0.001)
        self.assertLessEqual(float(ceilings[0]), 0.008)

    def test_constants_k_arm_delta(self) -> None:
        arms = [{"mean": 0.6, "std_dev": 0.3}, {"mean": 0.4, "std_dev": 0.3}]
        document = {"population": {"types": [{"arm_priors": arms}]},
                    "policy": {"arm_count": 2, "ell": 50, "xi_delta": 0.2, "checkpoints": []},
                    "experiment": {"iters": 200}}
        with TemporaryDirectory() as d, \
                patch(f"{__name__}.estimate_xi_probability_k", wraps=estimate_xi_probability_k) as spy:
            path = Path(d) / "c.json"
            path.write_text(json.dumps(document), encoding="utf-8")
            (status, out, _) = self._run("constants", "--config", str(path))
        self.assertEqual(status, 0)
        self.assertIn("rho ceiling", out)
        self.assertEqual(spy.call_args.args[3], 0.2)

    def test_usage_errors(self) -> None:
        self.assertEqual(self._run("--bogus")[0], 2)
        self.assertEqual(self._run("experiment", "no_such_preset")[0], 2)
        self.assertEqual(self._run()[0], 2)

    def test_bad_config(self) -> None:
        with TemporaryDirectory() as d:
            path = Path(d) / "c.json"
            path.write_text('{"policy": {"rhoo": 0.1}}', encoding="utf-8")
            (status, _, err) = self._run("constants", "--config", str(path))
        self.assertEqual(status, 1)
        self.assertIn("policy.rhoo", err)

    def test_simulate(self) -> None:
        with TemporaryDirectory() as d:
            config = Path(d) / "c.json"
            config.write_text('{"policy": {"horizon": 600}}', encoding="utf-8")
            (status, out, _) = self._run("simulate", "--policy", "trial", "--config", str(config),
                                         "--out-dir", d, "--seed", "2", "--verbose")
            lines = (Path(d) / "trajectory.csv").read_text(encoding="utf-8").splitlines()
        self.assertEqual(status, 0)
        self.assertIn("winner = undecided", out)
        self.assertIn("   Round | Stage    | Type | Event      | Detail", out)
        self.assertIn("       0 | trial    |    - | stage      | trial", out.splitlines())
        self.assertEqual(lines[0], ",".join(TRAJECTORY_COLUMNS))
        self.assertEqual(len(lines), 601)

    def test_experiment(self) -> None:
        with TemporaryDirectory() as d:
            config = Path(d) / "c.json"
            config.write_text('{"experiment": {"n": 200, "seeds": 3}}', encoding="utf-8")
            (status, out, _) = self._run("experiment", "coverage", "--config", str(config), "--out-dir", d)
            self.assertTrue((Path(d) / "coverage.csv").exists())
            self.assertTrue((Path(d) / "coverage.svg").exists())
        self.assertEqual(status, 0)
        self.assertIn("coverage.csv", out)
