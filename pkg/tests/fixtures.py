"""Random polytope fixtures shared by the test modules."""

import numpy as np

from polysample.model import ConstrainedPolytope


def random_polytope(rng, d, n, n_free=0):
    """A bounded, strictly feasible constrained polytope.

    The first ``n_free`` rows pin each free coordinate to a random combination
    of the nonnegative ones, the next row caps their sum, and the remaining
    rows are random. ``b`` is chosen so a random positive point is feasible.
    """
    assert n_free + 1 <= n < d
    k = d - n_free
    A = np.zeros((n, d))
    A[:n_free, :n_free] = np.eye(n_free)
    A[:n_free, n_free:] = rng.normal(size=(n_free, k))
    A[n_free, n_free:] = 1.0
    A[n_free + 1:] = rng.normal(size=(n - n_free - 1, d))
    x = np.concatenate([rng.normal(size=n_free), rng.uniform(0.2, 1.5, size=k)])
    x[:n_free] = -A[:n_free, n_free:] @ x[n_free:] + rng.normal(size=n_free)
    # fix the free coordinates so that the pinning rows have random right-hand sides
    b = A @ x
    return ConstrainedPolytope(A, b, k), x
