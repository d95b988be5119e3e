import numpy as np

from hslab.media import PointSourceSet


def random_admissible(rng, sphere, eta, n, amp_range=(0.2, 1.5), margin=1.1):
    """Rejection-sample an admissible configuration with a little slack."""
    sep = 8.0 * eta * margin
    locs = []
    while len(locs) < n:
        z = rng.uniform(-1, 1, size=3) * (sphere.radius - sep)
        if np.linalg.norm(z) > sphere.radius - sep:
            continue
        if all(np.linalg.norm(z - w) > sep for w in locs):
            locs.append(z)
    amps = rng.uniform(*amp_range, size=n)
    return PointSourceSet(amps, np.array(locs), eta)
