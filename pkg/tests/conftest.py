"""Shared fixtures: a cached end-to-end pipeline runner for training-dependent tests."""

import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List

import numpy as np
import pytest

from lieflow.analysis.metrics import EvalReport
from lieflow.analysis.plots import read_csv
from lieflow.cli.commands import cmd_eval, cmd_gen, cmd_sample, cmd_train
from lieflow.cli.config import RunConfig

# criterion lines collected by test_acceptance.py, printed in the terminal summary
ACCEPTANCE_LINES: List[str] = []


@dataclass
class PipelineRun:
    cfg: RunConfig
    run: Path
    losses: list
    report: EvalReport
    train_seconds: float

    def canonical(self) -> np.ndarray:
        """Canonicalized generated elements, working layout."""
        header, data = read_csv(self.run / "elements.csv")
        cols = [i for i, h in enumerate(header) if h.startswith("c_")]
        w = int(round(len(cols) ** 0.5))
        return data[:, cols].reshape(-1, w, w)


class Pipeline:
    """Runs gen/train/sample/eval once per distinct config and caches the result.

    ``LIEFLOW_TEST_RUNS`` points at a persistent directory to reuse finished runs.
    """

    def __init__(self, root: Path):
        self.root = root
        self._cache: Dict[str, PipelineRun] = {}

    def __call__(self, **overrides) -> PipelineRun:
        cfg = RunConfig.from_dict({k: str(v) for k, v in overrides.items()})
        key = cfg.dumps()
        if key in self._cache:
            return self._cache[key]
        tag = "-".join(f"{k}={v}" for k, v in sorted(overrides.items()))
        run = self.root / tag
        done = run / "eval_report.txt"
        if done.exists() and (run / "config.txt").read_text() == key:
            losses = [float(r.split(",")[1]) for r in (run / "loss.csv").read_text().splitlines()[1:]]
            seconds = float((run / "train_seconds.txt").read_text())
            report = EvalReport.from_text(done.read_text())
        else:
            cmd_gen(cfg, run)
            t0 = time.perf_counter()
            _, losses = cmd_train(cfg, run)
            seconds = time.perf_counter() - t0
            (run / "train_seconds.txt").write_text(repr(seconds))
            cmd_sample(cfg, run)
            report = cmd_eval(cfg, run)
        out = PipelineRun(cfg, run, losses, report, seconds)
        self._cache[key] = out
        return out


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    root = os.environ.get("LIEFLOW_TEST_RUNS")
    path = Path(root) if root else tmp_path_factory.mktemp("runs")
    path.mkdir(parents=True, exist_ok=True)
    return Pipeline(path)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


class ScalarDemos:
    """Cached ``scalar-demo`` runs keyed by seed."""

    def __init__(self, root: Path):
        self.root = root
        self._cache = {}

    def __call__(self, seed: int = 0):
        if seed not in self._cache:
            from lieflow.cli.commands import cmd_scalar_demo

            self._cache[seed] = cmd_scalar_demo(RunConfig(seed=seed), self.root / f"scalar-s{seed}")
        return self._cache[seed]


@pytest.fixture(scope="session")
def scalar_demo(tmp_path_factory):
    return ScalarDemos(tmp_path_factory.mktemp("scalar"))
