import math


def _bisect(lo, hi):
    if lo > 0.0 and hi > 8.0 * lo:
        return math.sqrt(lo * hi)
    return 0.5 * (lo + hi)


def increasing_root(fun, lo, hi, x0=None, rtol=1e-14, atol=0.0, maxiter=300):
    """Root of an increasing function bracketed by ``lo < root <= hi``.

    ``fun(x)`` returns ``(value, derivative)``; ``value`` may be ``-inf`` to
    mark a point that is known to lie left of the root. Newton steps are taken
    whenever they stay inside the current bracket, bisection otherwise.
    """
    x = hi if x0 is None else x0
    for _ in range(maxiter):
        fx, dfx = fun(x)
        if fx == 0.0:
            return x
        if fx < 0.0:
            lo = x
        else:
            hi = x
        if hi - lo <= rtol * abs(hi) + atol:
            return hi if fx < 0.0 else x
        xn = None
        if math.isfinite(fx) and dfx > 0.0:
            xn = x - fx / dfx
            if not lo < xn < hi:
                xn = None
        if xn is None:
            xn = _bisect(lo, hi)
        if abs(xn - x) <= rtol * abs(xn) + atol:
            return xn
        x = xn
    return x
