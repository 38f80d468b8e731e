"""Central finite-difference gradient oracle.

Evaluates in float64 with step 1e-4 and checks the engine's backward pass to
relative error 1e-4 with an absolute floor of 1e-6. The oracle only re-runs
the forward function; it never touches the backward code it is checking.
"""

import numpy as np

FD_STEP = 1e-4
REL_TOL = 1e-4
ABS_FLOOR = 1e-6


def numeric_grads(f, arrays, step=FD_STEP):
    """Central differences of scalar f(*arrays) w.r.t. every float64 array."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = f(*arrays)
            flat[i] = orig - step
            fm = f(*arrays)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * step)
        grads.append(g)
    return grads


def assert_grads_close(analytic, numeric, rel_tol=REL_TOL, abs_floor=ABS_FLOOR):
    for k, (an, nu) in enumerate(zip(analytic, numeric)):
        an = np.asarray(an).reshape(-1)
        nu = np.asarray(nu).reshape(-1)
        bound = np.maximum(abs_floor, rel_tol * np.abs(nu))
        bad = np.abs(an - nu) > bound
        assert not bad.any(), (
            f"gradient {k} disagrees with finite differences at "
            f"{int(bad.sum())}/{bad.size} entries; worst "
            f"analytic={an[bad][0]:.8g} numeric={nu[bad][0]:.8g}")
