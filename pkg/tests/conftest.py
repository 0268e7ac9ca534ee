import pytest

from bwma.checkpoint import load_checkpoint
from bwma.config import RunConfig
from bwma.data import ensure_synthetic_mnist, resolve_mnist
from bwma.train import train


class AcceptanceLog:
    """Collects one line per acceptance criterion for the terminal summary."""

    def __init__(self):
        self.lines = []

    def record(self, criterion: int, ok: bool, detail: str):
        status = "PASS" if ok else "FAIL"
        self.lines.append(f"ACCEPTANCE {criterion}: {status} - {detail}")
        print(self.lines[-1])
        assert ok, f"criterion {criterion}: {detail}"


_LOG = AcceptanceLog()


@pytest.fixture(scope="session")
def acceptance_log():
    return _LOG


def pytest_terminal_summary(terminalreporter):
    if _LOG.lines:
        terminalreporter.section("acceptance criteria")
        for line in _LOG.lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def mini_data_dir(tmp_path_factory):
    """Small synthetic digit set, enough to train a usable toy model quickly."""
    d = tmp_path_factory.mktemp("mini_data")
    ensure_synthetic_mnist(str(d), n_train=1500, n_test=400)
    return str(d)


@pytest.fixture(scope="session")
def mini_datasets(mini_data_dir):
    train_set, test_set, _ = resolve_mnist(mini_data_dir)
    return train_set, test_set


@pytest.fixture(scope="session")
def mini_trained(tmp_path_factory, mini_data_dir):
    """A 2-epoch mnist-tiny training run shared by the cim/cli tests."""
    out = tmp_path_factory.mktemp("mini_run")
    cfg = RunConfig(arch="mnist-tiny", act_bits=4, epochs=2, seed=11, data_dir=mini_data_dir)
    result = train(cfg, str(out))
    model, ste, header = load_checkpoint(result.checkpoint_path)
    return {"result": result, "model": model, "config": cfg, "header": header}
