import pathlib

import pytest

from valforme import io

DATA = pathlib.Path(__file__).parent / "data"


def load(name):
    return io.load_table(DATA / name)


@pytest.fixture
def data_dir():
    return DATA


def _corpus():
    from valforme import PRICE, VALUE, ConstraintSet, ReproductionConstraint

    def repro(space, *js):
        return ConstraintSet(reproduction_constraints=tuple(ReproductionConstraint(j, space) for j in js))

    drift = ConstraintSet({1: 385.0}, [0.001, 0.0, -0.001], reference_branch=1)
    return {
        "2A": ("table2A.json", ConstraintSet(), None),
        "3A-300": ("table3A.json", ConstraintSet({2: 300.0}), None),
        "3A-367": ("table3A.json", ConstraintSet({2: 367.9263}), None),
        "3H": ("table3A.json",
               ConstraintSet(reproduction_constraints=(ReproductionConstraint(2, PRICE, True),)), None),
        "4A": ("table4A.json", ConstraintSet(), None),
        "4C": ("table4C.json", ConstraintSet(), None),
        "2E": ("table2E.json", ConstraintSet(), None),
        "5A-230": ("table5A.json", ConstraintSet({2: 230.0}), None),
        "5A-300": ("table5A.json", ConstraintSet({2: 300.0}), None),
        "5A-drift": ("table5A.json", ConstraintSet({1: 385.0}, [0.001, 0.0, -0.001], reference_branch=1), None),
        "8A": ("table8A.json", ConstraintSet({2: 300.0}), None),
        "10A-drift": ("table10A.json", drift, None),
        "11C": ("table10A.json", ConstraintSet({1: 384.9}, reference_branch=1), None),
        "14C": ("table12.json", ConstraintSet({2: 242.0, 3: 358.0, 4: 5.0}), 933.5),
        "16": ("table13.json", ConstraintSet({2: 242.0, 3: 358.0, 4: 5.0}), 933.5),
        "20C": ("table20A.json", ConstraintSet({2: 300.0, 3: 100.0}), None),
        "20E": ("table20D.json", repro(VALUE, 0, 1), None),
        "21C": ("table21.json", repro(VALUE, 0, 1, 2), None),
        "21F": ("table21.json", repro(PRICE, 0, 1, 2), None),
        "22": ("table22.json", ConstraintSet(), None),
    }


CORPUS = _corpus()


def solve_corpus(name):
    from valforme import solve

    path, cons, K_total = CORPUS[name]
    table = load(path)
    return table, solve(table, cons, K_total=K_total)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
