import numpy as np
import pytest

from catfair.dataset import ColumnSchema, Dataset

ETHNIC_ROWS = [
    ("African-American", 1),
    ("Caucasian", 1),
    ("Caucasian", 0),
    ("Caucasian", 0),
    ("Hispanic", 0),
]
ETHNIC_SCHEMA = (
    ColumnSchema("Ethnic", "categorical", "protected"),
    ColumnSchema("Label", "binary-target", "target"),
)


@pytest.fixture
def ethnic():
    return Dataset(
        ETHNIC_SCHEMA,
        {"Ethnic": [r[0] for r in ETHNIC_ROWS], "Label": [r[1] for r in ETHNIC_ROWS]},
    )


@pytest.fixture
def ethnic_csv(tmp_path):
    path = tmp_path / "ethnic.csv"
    path.write_text("Ethnic,Label\n" + "".join(f"{z},{y}\n" for z, y in ETHNIC_ROWS))
    return path


def make_dataset(groups, y, extra=None, name="Z"):
    schema = [ColumnSchema(name, "categorical", "protected")]
    columns = {name: np.asarray(groups).astype(str)}
    for col, values in (extra or {}).items():
        schema.append(ColumnSchema(col, "numeric", "feature"))
        columns[col] = values
    schema.append(ColumnSchema("Y", "binary-target", "target"))
    columns["Y"] = np.asarray(y)
    return Dataset(tuple(schema), columns)


@pytest.fixture
def random_dataset():
    rng = np.random.default_rng(1234)
    groups = rng.choice(["a", "b", "c", "d"], size=200, p=[0.5, 0.3, 0.15, 0.05])
    y = (rng.random(200) < 0.4).astype(int)
    return make_dataset(groups, y)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
