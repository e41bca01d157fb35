import os

import numpy as np
import pytest
import torch
from hypothesis import settings

from jamloc import synth

torch.set_num_threads(1)
settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_source():
    cfg = synth.default_source_config(6, 8, align_first_path=True)
    return synth.synth_generate(cfg, 3)


@pytest.fixture(scope="session")
def small_target(small_source):
    cfg = synth.default_target_config(4, 8, avoid=synth.grid_positions(6), align_first_path=True)
    return synth.synth_generate(cfg, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def real_data_dir():
    root = os.environ.get("JAMLOC_DATA_DIR")
    if not root:
        return None
    return root if os.path.isdir(root) else None


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next((m for name, m in list(sys.modules.items()) if name.endswith("test_acceptance")), None)
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
