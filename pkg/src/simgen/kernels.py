"""Modified Bessel functions of the second kind and the Matern covariance

K0 and K1 use the Abramowitz & Stegun 9.8 polynomial approximations
(absolute error below 1e-7 on x <= 2, relative error below 2e-7 above).
Higher integer orders follow the forward recurrence.
"""
import math

import numpy as np
from scipy import special
from scipy.spatial.distance import cdist

from src.common.errors import PreconditionError

# I0(x), I1(x)/x in t = x / 3.75, valid for |x| <= 3.75
_I0_COEFS = [1.0, 3.5156229, 3.0899424, 1.2067492, 0.2659732, 0.0360768, 0.0045813]
_I1_COEFS = [0.5, 0.87890594, 0.51498869, 0.15084934, 0.02658733, 0.00301532, 0.00032411]

# x <= 2, in y = (x/2)^2
_K0_SMALL = [-0.57721566, 0.42278420, 0.23069756, 0.03488590, 0.00262698, 0.00010750, 0.00000740]
_K1_SMALL = [1.0, 0.15443144, -0.67278579, -0.18156897, -0.01919402, -0.00110404, -0.00004686]

# x > 2, in 2/x, scaled by sqrt(x) exp(x)
_K0_LARGE = [1.25331414, -0.07832358, 0.02189568, -0.01062446, 0.00587872, -0.00251540, 0.00053208]
_K1_LARGE = [1.25331414, 0.23498619, -0.03655620, 0.01504268, -0.00780353, 0.00325614, -0.00068245]


def _series(coefs, v):
    # np.polyval wants the highest power first
    return np.polyval(coefs[::-1], v)


def _bessel_i0(x):
    return _series(_I0_COEFS, (x / 3.75) ** 2)


def _bessel_i1(x):
    return x * _series(_I1_COEFS, (x / 3.75) ** 2)


def _k0(x):
    small = np.minimum(x, 2.0)
    large = np.maximum(x, 2.0)
    k_small = -np.log(small / 2.0) * _bessel_i0(small) + _series(_K0_SMALL, (small / 2.0) ** 2)
    k_large = np.exp(-large) / np.sqrt(large) * _series(_K0_LARGE, 2.0 / large)
    return np.where(x <= 2.0, k_small, k_large)


def _k1(x):
    small = np.minimum(x, 2.0)
    large = np.maximum(x, 2.0)
    k_small = (small * np.log(small / 2.0) * _bessel_i1(small) + _series(_K1_SMALL, (small / 2.0) ** 2)) / small
    k_large = np.exp(-large) / np.sqrt(large) * _series(_K1_LARGE, 2.0 / large)
    return np.where(x <= 2.0, k_small, k_large)


def bessel_k(order, z):
    """K_order(z) for integer order >= 0 and z > 0"""
    if int(order) != order or order < 0:
        raise PreconditionError(f"bessel_k needs a non-negative integer order, got {order}")
    order = int(order)
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr <= 0) or not np.all(np.isfinite(z_arr)):
        raise PreconditionError("bessel_k is defined for finite z > 0 only")

    k_prev = _k0(z_arr)
    if order == 0:
        result = k_prev
    else:
        k = _k1(z_arr)
        for n in range(1, order):
            k_prev, k = k, k_prev + (2 * n / z_arr) * k
        result = k

    return float(result) if np.ndim(z) == 0 else result


def _matern_closed_form(scaled, nu):
    if nu == 0.5:
        return np.exp(-scaled)
    if nu == 1.5:
        t = math.sqrt(3.0) * scaled
        return (1.0 + t) * np.exp(-t)
    t = math.sqrt(5.0) * scaled
    return (1.0 + t + t**2 / 3.0) * np.exp(-t)


def matern_kernel(r, length_scale=1.0, nu=2.0):
    """Unit-variance Matern covariance at distance r (exactly 1 at r = 0)"""
    if length_scale <= 0 or nu <= 0:
        raise PreconditionError(f"Matern needs length_scale > 0 and nu > 0, got {length_scale}, {nu}")
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise PreconditionError("Matern distance must be non-negative")

    if nu in (0.5, 1.5, 2.5):
        values = _matern_closed_form(r_arr / length_scale, nu)
    else:
        z = math.sqrt(2.0 * nu) * r_arr / length_scale
        positive = z > 0
        safe_z = np.where(positive, z, 1.0)
        if float(nu).is_integer():
            bessel = bessel_k(int(nu), safe_z)
        else:
            bessel = special.kv(nu, safe_z)
        scale = 2.0 ** (1.0 - nu) / special.gamma(nu)
        with np.errstate(invalid="ignore", under="ignore"):
            values = np.where(positive, scale * safe_z**nu * bessel, 1.0)
        # far tails underflow to 0 * inf
        values = np.nan_to_num(values, nan=0.0)

    return float(values) if np.ndim(r) == 0 else values


def matern_gram(A, B, length_scale=1.0, nu=2.0):
    A = np.asarray(A, dtype=float).reshape(len(A), -1)
    B = np.asarray(B, dtype=float).reshape(len(B), -1)
    return matern_kernel(cdist(A, B), length_scale, nu)


def rbf_gram(A, B, bandwidth=1.0):
    A = np.asarray(A, dtype=float).reshape(len(A), -1)
    B = np.asarray(B, dtype=float).reshape(len(B), -1)
    return np.exp(-cdist(A, B, "sqeuclidean") / (2.0 * bandwidth**2))
