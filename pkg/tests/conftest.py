import numpy as np
import pytest

import sylfem as sf


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def desk_matrix():
    """Admissible (k, N, domain, bc) combinations of the small test grid."""
    combos = []
    for k in (1, 2, 3, 4):
        for n in (8, 16, 24):
            if n % k:
                continue
            for name in ("square", "cap", "jar"):
                for bc in (sf.BCKind.DIRICHLET, sf.BCKind.NEUMANN):
                    combos.append((k, n, name, bc))
    return combos


def elliptic_gamma(bc) -> float:
    """Coercive reaction coefficient for the given boundary condition."""
    return 0.0 if bc is sf.BCKind.DIRICHLET else 1.0


def build_problem_operator(k, n, domain_name, bc, lumped=False, gamma=None):
    domain = sf.domain_from_name(domain_name)
    x, y = sf.build_direction_sets(domain, k, n, bc, lumped=lumped or k == 1)
    g = elliptic_gamma(bc) if gamma is None else gamma
    op, rhs_of = sf.elliptic_operator(x, y, g, lumped=lumped)
    return domain, x, y, op, rhs_of
