"""Shared generators for the test modules."""

import numpy as np

from sucag.theory import RecursionSpec, constant, q_thresholds


def power_profile(a):
    def f(k):
        return (1.0 + np.asarray(k, dtype=float)) ** a
    return f


def random_valid_spec(rng):
    """A random RecursionSpec with q_j set to a fraction of its threshold.

    Returns ``(spec, delta)``; the spec passes ``check_q_condition`` at
    ``delta`` by construction.
    """
    J = int(rng.integers(1, 4))
    p = float(rng.uniform(0.3, 0.95))
    delta = float(p + rng.uniform(0.05, 0.9) * (1.0 - p))
    eta = rng.uniform(1.2, 3.0, size=J).tolist()
    m1 = [power_profile(float(rng.uniform(0.0, 1.0))) for _ in range(J)]
    m2 = [constant(int(rng.integers(0, 6))) for _ in range(J)]
    R0 = float(np.exp(rng.uniform(np.log(0.1), np.log(10.0))))
    probe = RecursionSpec(p=p, q=[0.0] * J, eta=eta, m1=m1, m2=m2, R0=R0)
    thr = q_thresholds(probe, delta)
    q = (thr * rng.uniform(0.0, 1.0, size=J)).tolist()
    return RecursionSpec(p=p, q=q, eta=eta, m1=m1, m2=m2, R0=R0), delta


def roundoff_allowance(r, scale):
    """Absolute slack for comparing squared distances ``r = |theta - theta*|^2``.

    Storing ``theta`` perturbs each coordinate by about ``eps * scale``
    (``scale = |theta*|`` or similar), which moves ``r`` by at most
    ``2 sqrt(r) e + e^2`` with ``e = 4 eps scale``.
    """
    e = 4.0 * np.finfo(float).eps * max(scale, 1.0)
    return 2.0 * np.sqrt(r) * e + e * e
