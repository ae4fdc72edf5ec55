"""Chunked deterministic Monte Carlo plumbing.

Every estimator in this package draws randomness through `substream`, a
Philox generator keyed by (seed, chunk index). Work is split into fixed-size
chunks and chunk results are reduced in index order, so a run is bitwise
reproducible for a given (seed, chunk_size) no matter how many workers
execute the chunks.
"""

from collections import namedtuple
from concurrent.futures import ProcessPoolExecutor
import math

import numpy as np


DEFAULT_CHUNK = 4096


class NumericFailure(RuntimeError):
    """Raised when a computation cannot proceed for numerical reasons."""


def substream(seed, chunk_index):
    """Independent generator for one chunk of one run."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(chunk_index),))
    return np.random.Generator(np.random.Philox(ss))


def stream_ids(seed, n_chunks):
    return [f"philox:{int(seed)}:{k}" for k in range(n_chunks)]


def derive_seed(seed, tag):
    """Deterministic child seed for an independent sub-run of a composite
    estimator (schedule points, product factors, refinement passes)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(0x5EED, int(tag)))
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


def _run_chunk(kernel, seed, chunk_index, chunk_n, params, width=None):
    rng = substream(seed, chunk_index)
    out = np.asarray(kernel(rng, chunk_n, params), dtype=float)
    want = (chunk_n,) if width is None else (chunk_n, int(width))
    if out.shape != want:
        raise ValueError(f"kernel returned shape {out.shape}, expected {want}")
    return out.sum(axis=0), np.square(out).sum(axis=0)


def chunked_mean(kernel, n_samples, seed, params=None, chunk_size=DEFAULT_CHUNK,
                 workers=1, min_batches=30):
    """Mean and batch-means standard error of a sample kernel.

    kernel(rng, m, params) must return m per-sample values. Chunks are the
    batching unit; adjacent chunks are merged into >= min_batches batches
    (fewer only when there are not enough chunks to go around).
    """
    n_samples = int(n_samples)
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    sizes = [chunk_size] * (n_samples // chunk_size)
    rem = n_samples % chunk_size
    if rem:
        sizes.append(rem)
    n_chunks = len(sizes)

    sums = np.empty(n_chunks)
    sqs = np.empty(n_chunks)
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=int(workers)) as pool:
            futs = [pool.submit(_run_chunk, kernel, seed, k, sizes[k], params)
                    for k in range(n_chunks)]
            for k, fut in enumerate(futs):
                sums[k], sqs[k] = fut.result()
    else:
        for k in range(n_chunks):
            sums[k], sqs[k] = _run_chunk(kernel, seed, k, sizes[k], params)

    total = float(np.sum(sums))
    mean = total / n_samples
    se = float(batch_se(sums, np.asarray(sizes, dtype=float), min_batches=min_batches))
    return mean, se, n_chunks


def chunked_mean_vec(kernel, n_samples, seed, params, width, chunk_size=DEFAULT_CHUNK,
                     workers=1, min_batches=30):
    """Vector version of chunked_mean for kernels returning (m, width) arrays.

    All width columns come from the same samples, so column estimates share
    the per-path randomness (exact pathwise monotonicity across columns is
    preserved when the kernel guarantees it). Returns (means, ses, n_chunks).
    """
    n_samples = int(n_samples)
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    sizes = [chunk_size] * (n_samples // chunk_size)
    rem = n_samples % chunk_size
    if rem:
        sizes.append(rem)
    n_chunks = len(sizes)

    sums = np.empty((n_chunks, width))
    sqs = np.empty((n_chunks, width))
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=int(workers)) as pool:
            futs = [pool.submit(_run_chunk, kernel, seed, k, sizes[k], params, width)
                    for k in range(n_chunks)]
            for k, fut in enumerate(futs):
                sums[k], sqs[k] = fut.result()
    else:
        for k in range(n_chunks):
            sums[k], sqs[k] = _run_chunk(kernel, seed, k, sizes[k], params, width)

    means = sums.sum(axis=0) / n_samples
    ses = batch_se(sums, np.asarray(sizes, dtype=float), min_batches=min_batches)
    return means, np.asarray(ses), n_chunks


def batch_se(chunk_sums, chunk_sizes, min_batches=30):
    """Standard error of the overall mean from per-chunk sums via batch means.

    chunk_sums may be (n_chunks,) or (n_chunks, width); the result matches.
    """
    chunk_sums = np.asarray(chunk_sums, dtype=float)
    n_chunks = chunk_sums.shape[0]
    n_batches = min(max(min_batches, 1), n_chunks)
    edges = np.linspace(0, n_chunks, n_batches + 1).astype(int)
    bs = []
    for i in range(n_batches):
        lo, hi = edges[i], edges[i + 1]
        if hi <= lo:
            continue
        w = chunk_sizes[lo:hi].sum()
        bs.append(chunk_sums[lo:hi].sum(axis=0) / w)
    bs = np.asarray(bs)
    if bs.shape[0] < 2:
        return np.full(chunk_sums.shape[1:], np.nan) if chunk_sums.ndim > 1 else float("nan")
    out = bs.std(axis=0, ddof=1) / math.sqrt(bs.shape[0])
    return out if chunk_sums.ndim > 1 else float(out)


def wilson_interval(k, n, z=1.959963984540054):
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return 0.0, 1.0
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


LineFit = namedtuple("LineFit", "slope intercept slope_se intercept_se residuals")


def fit_line(xs, ys, ses):
    """Weighted least squares fit y = slope*x + intercept.

    Weights 1/se^2 with the given ses taken as true standard errors (the
    parameter covariance is (A'WA)^-1, not rescaled by residuals).
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    ses = np.asarray(ses, dtype=float)
    if np.any(~np.isfinite(ses)) or np.any(ses <= 0):
        ses = np.ones_like(ys)
    w = 1.0 / ses ** 2
    A = np.vstack([xs, np.ones_like(xs)]).T
    Aw = A * np.sqrt(w)[:, None]
    yw = ys * np.sqrt(w)
    coef, *_ = np.linalg.lstsq(Aw, yw, rcond=None)
    cov = np.linalg.inv(Aw.T @ Aw)
    resid = ys - A @ coef
    return LineFit(float(coef[0]), float(coef[1]),
                   float(math.sqrt(cov[0, 0])), float(math.sqrt(cov[1, 1])), resid)
