import numpy as np
import pytest

from nestedcp.core import LabelSpace
from nestedcp.metrics import ConfusionTable

# three-class probation confusion counts, rows actual, columns forecast
PROBATION_COUNTS = [
    [18661, 8120, 3753],
    [3617, 10274, 2410],
    [682, 1009, 2751],
]
PROBATION_NAMES = ["NoArrest", "NonViolent", "Violent"]


@pytest.fixture
def probation():
    return ConfusionTable.from_counts(PROBATION_COUNTS, LabelSpace.from_names(PROBATION_NAMES))


def brute_force_scores(p):
    """Conformity scores straight from the nested-set definition.

    The naive set at level gamma is the shortest descending-probability
    prefix holding mass >= 1 - gamma. A class's score is the smallest gamma
    at which it drops out of that set (1 for the top class). Membership only
    changes at subset sums of ``p``, so every subset sum is tried.
    """
    from itertools import combinations

    p = np.asarray(p, dtype=float)
    K = len(p)
    order = sorted(range(K), key=lambda j: (-p[j], j))
    cands = {0.0, 1.0}
    for r in range(1, K + 1):
        for combo in combinations(range(K), r):
            cands.add(min(1.0, float(sum(p[list(combo)]))))
    out = np.ones(K)
    for j in range(K):
        if j == order[0]:
            continue
        for g in sorted(cands):
            mass, members = 0.0, []
            for c in order:
                if members and mass >= 1 - g - 1e-12:
                    break
                members.append(c)
                mass += p[c]
            if j not in members:
                out[j] = g
                break
    return out


def brute_force_gamma(cal_scores, alpha):
    """Largest candidate threshold covering at least k of n calibration scores.

    Scans candidates {s_i} U {0, 1} and counts coverage directly; no sorting
    or order-statistic indexing.
    """
    import math
    from fractions import Fraction

    n = len(cal_scores)
    k = math.ceil((n + 1) * (1 - Fraction(repr(alpha))))
    best = 0.0
    for g in sorted({0.0, 1.0, *map(float, cal_scores)}):
        if sum(s >= g for s in cal_scores) >= k:
            best = max(best, g)
    return best


def random_dist(rng, K, tie_prob=0.0):
    p = rng.dirichlet(np.ones(K))
    if tie_prob and rng.random() < tie_prob:
        i, j = rng.choice(K, 2, replace=False)
        m = (p[i] + p[j]) / 2
        p[i] = p[j] = m
    return p / p.sum()


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
