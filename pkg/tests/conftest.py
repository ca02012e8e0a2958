import numpy as np
import pytest


@pytest.fixture
def blobs():
    """Three well-separated Gaussian classes in 4 dimensions."""
    rng = np.random.default_rng(7)
    centres = np.array([[0, 0, 0, 0], [4, 4, 0, 0], [0, 4, 4, 0]], dtype=float)
    y = np.repeat(np.arange(3), [120, 80, 60])
    X = centres[y] + rng.normal(scale=0.7, size=(y.size, 4))
    return X, y


def write_csv(path, header, rows):
    path.write_text("\n".join([",".join(header)] + [",".join(map(str, r)) for r in rows]) + "\n")
    return path


TINY_COUNTS = (300, 200, 100, 40, 12)

# small budgets and narrow domains so an end-to-end run takes about a second
TINY_CONFIG = {
    "k": 3,
    "hpo_budget": 3,
    "meta_budget": 2,
    "tpe_startup": 2,
    "hpo_folds": 2,
    "space_overrides": {"n_estimators": [5, 15], "max_depth": [3, 8], "num_leaves": [8, 32], "depth": [3, 5]},
    "tvae": {"epochs": 20, "hidden_sizes": [16], "latent_dim": 4},
    "inference_batch": 200,
}


@pytest.fixture(scope="session")
def tiny_csv(tmp_path_factory):
    from autoids.fixtures import write_fixture

    return write_fixture(tmp_path_factory.mktemp("tiny") / "flows.csv", 1, counts=TINY_COUNTS, n_features=12)


@pytest.fixture
def tiny_config(tiny_csv):
    return dict(TINY_CONFIG, data=str(tiny_csv))


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        def order(line):
            tag = line.split()[1].rstrip(":")
            return int(tag.rstrip("ab")), tag

        for line in sorted(ACCEPTANCE_LINES, key=order):
            terminalreporter.write_line(line)
