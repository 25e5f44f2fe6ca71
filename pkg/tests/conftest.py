import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from increpair.corpus import SynthConfig, generate_synthetic  # noqa: E402
from increpair.training import train_bundle, train_lms  # noqa: E402

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def synth_corpus():
    return generate_synthetic(SynthConfig(n_utts=400, repair_rate=0.2, seed=5))


@pytest.fixture(scope="session")
def synth_lms(synth_corpus):
    return train_lms(synth_corpus)


@pytest.fixture(scope="session")
def small_bundle(synth_corpus):
    return train_bundle(synth_corpus, folds=3, seed=0)


@pytest.fixture(scope="session")
def bundle_dir(small_bundle, tmp_path_factory):
    d = tmp_path_factory.mktemp("bundle")
    small_bundle.save(d)
    return d


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
