"""Shared fixtures and the acceptance summary printed at the end of a run."""

import re

import numpy as np
import pytest

from mmwave_swipt_ee.analog import design_analog_precoder
from mmwave_swipt_ee.channel import ArrayGeometry, sample_channel
from mmwave_swipt_ee.instance import ProblemInstance
from mmwave_swipt_ee.metrics import SwiptConfig

# filled by test_acceptance.py, one (label, title, passed, detail) per criterion; labels like "5a"
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")

    def order(entry):
        label = str(entry[0])
        return int(re.match(r"\d+", label).group()), label

    for label, title, passed, detail in sorted(ACCEPTANCE_LINES, key=order):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} [{str(label):>3}] {title}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# 64-antenna arrays have less beam gain than the 256-antenna default, hence the larger offset
def make_instance(seed=0, structure="fully_connected", n_tx=64, n_rf=4, k=2, p_max=1.0, e_min=1e-4,
                  offset=60.0, trial=0):
    ch = sample_channel(k, 8, ArrayGeometry(n_tx), 30.0, seed, trial=trial, gain_offset_db=offset)
    F = design_analog_precoder(ch, structure, n_rf)
    return ProblemInstance.from_channel(ch, F, SwiptConfig(p_max=p_max, e_min=e_min))
