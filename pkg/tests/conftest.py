"""Shared fixtures and the acceptance-summary hook.

The overfit model is expensive (a few hundred optimizer steps), so it is
trained once per session and shared between the training-behaviour tests and
the end-to-end acceptance checks. The terminal hook prints one PASS/FAIL
line per acceptance test so a run's acceptance status is readable at a
glance.
"""

from __future__ import annotations

import time

import pytest

from textseg.data import generate_synthetic_dataset
from textseg.model import TextGuidedSegmentationModel
from textseg.training import TrainConfig, train

OVERFIT_SAMPLES = 10
OVERFIT_STEPS = 200
OVERFIT_SEED = 0


@pytest.fixture(scope="session")
def overfit_setup(tmp_path_factory):
    """(manifest, trained model, train result, wall seconds) on 10 samples."""
    root = tmp_path_factory.mktemp("overfit-data")
    manifest = generate_synthetic_dataset(OVERFIT_SEED, OVERFIT_SAMPLES, 64, root, split="train")
    model = TextGuidedSegmentationModel()
    config = TrainConfig(steps=OVERFIT_STEPS, epochs=10_000, seed=OVERFIT_SEED)
    started = time.perf_counter()
    result = train(config, manifest, model, out_dir=root / "run")
    elapsed = time.perf_counter() - started
    return manifest, model, result, elapsed


@pytest.fixture(scope="session")
def tiny_manifest(tmp_path_factory):
    """Six 64x64 synthetic samples for fast training-loop tests."""
    root = tmp_path_factory.mktemp("tiny-data")
    return generate_synthetic_dataset(3, 6, 64, root, split="train")


# ---------------------------------------------------------------------------
# Acceptance summary: one line per test in test_acceptance.py
# ---------------------------------------------------------------------------

_acceptance_outcomes: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.failed:
        _acceptance_outcomes[name] = "FAIL"
    elif report.skipped:
        _acceptance_outcomes.setdefault(name, "SKIP")
    elif report.when == "call" and report.passed:
        _acceptance_outcomes.setdefault(name, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance_outcomes.items():
        terminalreporter.write_line(f"[{outcome}] {name}")
