"""Independent reference computations used to freeze derived constants.

Deliberately written without scipy or the package's own helpers.
"""

import math


def bisect(f, lo, hi, iters=200):
    flo = f(lo)
    for _ in range(iters):
        mid = (lo + hi) / 2
        fm = f(mid)
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return (lo + hi) / 2


def gamma_oracle(r_lin=10_000, sent=15_000, received=14_544):
    excess, target = sent - r_lin, received - r_lin
    return bisect(lambda g: g * math.log(1 + excess / g) - target, 1.0, 1e9)


def received_oracle(sent, r_lin, gamma):
    if sent <= r_lin:
        return float(sent)
    return r_lin + gamma * math.log(1 + (sent - r_lin) / gamma)


def kappa_oracle(anchor, mid, ceiling, level=0.95):
    """kappa such that mid + (ceiling - mid)(1 - e^{-anchor/kappa}) = level * ceiling."""
    f = lambda k: mid + (ceiling - mid) * (1 - math.exp(-anchor / k)) - level * ceiling
    return bisect(f, 1e-6, 1e9)


# frozen by running gamma_oracle() once
RPI_GAMMA_FROZEN = 24130.885425953187
