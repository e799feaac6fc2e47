import math

import numpy as np
from hypothesis import settings
from hypothesis import strategies as st

from spinpath.su2_core import CoherentLabel

# timing varies a lot on a shared single core
settings.register_profile("spinpath", deadline=None)
settings.load_profile("spinpath")

thetas = st.floats(0.0, math.pi, allow_nan=False)
interior_thetas = st.floats(1e-3, math.pi - 1e-3)
phis = st.floats(0.0, 2 * math.pi, allow_nan=False, exclude_max=True)
chis = st.floats(-20.0, 20.0, allow_nan=False)
components = st.floats(-3.0, 3.0, allow_nan=False)
fields = st.tuples(components, components, components).map(np.array)


@st.composite
def labels(draw, chi=False):
    c = draw(chis) if chi else 0.0
    return CoherentLabel(draw(thetas), draw(phis), c)


def random_labels(rng, size):
    theta = np.arccos(rng.uniform(-1, 1, size))
    phi = rng.uniform(0, 2 * math.pi, size)
    return [CoherentLabel(t, p) for t, p in zip(theta, phi)]


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
