import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def gaussian(rng, rows, cols):
    return rng.standard_normal((rows, cols))


def pinv_projection(xc):
    """Row-space projection via Y^T (Y Y^T)^{-1} Y, Y = first n rows of the centred matrix.

    Centred rows sum to zero, so dropping the last row keeps the row space
    and makes Y Y^T invertible for generic data. No SVD involved.
    """
    y = xc[:-1]
    return y.T @ np.linalg.solve(y @ y.T, y)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
