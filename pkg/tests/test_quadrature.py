import math
from itertools import product

import numpy as np
import pytest

from logsob_lab.quadrature import simplex_rule


def _exact_mean(powers):
    """Mean of prod lambda_i^a_i over the n-simplex (Dirichlet moment)."""
    n = len(powers) - 1
    num = math.factorial(n) * math.prod(math.factorial(a) for a in powers)
    return num / math.factorial(n + sum(powers))


@pytest.mark.parametrize("n,k", [(1, 2), (2, 3), (3, 3), (2, 4)])
def test_exact_for_degree_2k_minus_1(n, k):
    bary, w = simplex_rule(n, k)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.all(w > 0) and np.allclose(bary.sum(axis=1), 1.0)
    for powers in product(range(2 * k), repeat=n + 1):
        if sum(powers) > 2 * k - 1:
            continue
        got = float(np.dot(w, np.prod(bary ** np.array(powers), axis=1)))
        assert got == pytest.approx(_exact_mean(powers), rel=1e-12, abs=1e-15)


def test_rule_is_cached_and_readonly():
    a, _ = simplex_rule(2, 3)
    assert simplex_rule(2, 3)[0] is a
    with pytest.raises(ValueError):
        a[0, 0] = 1.0
