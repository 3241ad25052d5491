"""Factorization helpers with jitter-escalation retry logic"""
import logging
from functools import wraps

import numpy as np
from scipy import linalg

from src.common.errors import FactorizationError

logger = logging.getLogger(__name__)


def jitter_retry(start=1e-10, factor=10.0, max_jitter=1e-6):
    """Retry decorator for factorizations that adds escalating diagonal jitter.

    The wrapped function receives the jitter through a ``jitter`` keyword.
    The first attempt uses ``start``; each LinAlgError multiplies it by
    ``factor`` until ``max_jitter`` is exceeded.
    """

    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            jitter = start
            while jitter <= max_jitter * (1 + 1e-12):
                try:
                    return func(*args, jitter=jitter, **kwargs)
                except (np.linalg.LinAlgError, linalg.LinAlgError) as e:
                    next_jitter = jitter * factor
                    if next_jitter <= max_jitter * (1 + 1e-12):
                        logger.warning(
                            f"Factorization failed with jitter {jitter:.1e} ({e}), retrying with {next_jitter:.1e}"
                        )
                    jitter = next_jitter
            raise FactorizationError(
                f"factorization failed after jitter escalation up to {max_jitter:.1e}"
            )

        return wrapper

    return decorator


@jitter_retry(start=1e-10, factor=10.0, max_jitter=1e-6)
def cholesky_with_jitter(K, jitter=0.0):
    """Lower Cholesky factor of K + jitter * I"""
    K = np.asarray(K, dtype=float)
    return linalg.cholesky(K + jitter * np.eye(K.shape[0]), lower=True)


def solve_spd(A, b):
    """Solve A x = b for symmetric positive definite A via Cholesky"""
    factor = linalg.cho_factor(A, lower=True, check_finite=False)
    return linalg.cho_solve(factor, b, check_finite=False)
