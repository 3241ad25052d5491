"""Chunked iteration helpers for minibatches and paged predictions"""
import numpy as np


def iter_minibatches(n, batch_size, rng=None):
    """Yield index pages covering range(n), shuffled when an rng is given"""
    order = rng.permutation(n) if rng is not None else np.arange(n)
    batch_size = max(1, int(batch_size))
    start = 0

    while start < n:
        yield order[start : start + batch_size]
        start += batch_size


def predict_in_chunks(fn, X, chunk_size=4096):
    """Evaluate fn page by page over the rows of X and concatenate"""
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        return np.empty(0)

    outputs = []
    for start in range(0, X.shape[0], chunk_size):
        outputs.append(np.asarray(fn(X[start : start + chunk_size]), dtype=float))

    return np.concatenate(outputs)
