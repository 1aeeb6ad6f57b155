"""Monte Carlo expectation engine.

Per-sample RNG streams are derived from (master_seed, purpose, index), so an
estimate is a pure function of the seed and the sample count: the result does
not depend on thread count or scheduling.  Integrands with huge dynamic range
(Chernoff exponents reach |L n| ~ 1e5) are accumulated in log domain through a
streaming log-sum-exp.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

__all__ = [
    "McConfig",
    "McEstimate",
    "stream_rng",
    "StreamingLogSumExp",
    "logsumexp_stream",
    "estimate_mean",
    "estimate_log_mean",
]


@dataclass(frozen=True)
class McConfig:
    """Sample counts and seeding policy for every bound evaluation."""

    n_search: int = 500
    n_final: int = 10000
    master_seed: int = 0
    antithetic: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.n_search < 1:
            raise ValueError("n_search must be >= 1")
        if self.n_final < self.n_search:
            raise ValueError("n_final must be >= n_search")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def samples(self, final: bool) -> int:
        return self.n_final if final else self.n_search


@dataclass(frozen=True)
class McEstimate:
    """Sample mean (or log-mean), its standard error, and the sample count.

    For ``is_log`` estimates, ``mean`` holds the log of the sample mean and
    ``std_error`` the *relative* standard error of the linear-domain mean.
    ``all_zero`` flags a log estimate in which every sample contributed -inf.
    """

    mean: float
    std_error: float
    n_samples: int
    is_log: bool = False
    all_zero: bool = False


def _purpose_key(purpose) -> int:
    digest = hashlib.blake2s(repr(purpose).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream_rng(master_seed: int, purpose, index: int) -> np.random.Generator:
    """Independent generator for sample ``index`` of the given purpose tag."""
    ss = np.random.SeedSequence(
        entropy=(int(master_seed) & ((1 << 64) - 1), _purpose_key(purpose), int(index)))
    return np.random.Generator(np.random.Philox(ss))


class _SignFlipRng:
    """Negates Gaussian draws; used to build antithetic partner samples."""

    def __init__(self, rng: np.random.Generator):
        self._rng = rng

    def standard_normal(self, *args, **kwargs):
        return -self._rng.standard_normal(*args, **kwargs)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return loc - (self._rng.normal(loc=loc, scale=scale, size=size) - loc)

    def __getattr__(self, name):
        return getattr(self._rng, name)


def _sample_rng(cfg: McConfig, purpose, index: int):
    if cfg.antithetic:
        base = stream_rng(cfg.master_seed, purpose, index // 2)
        if index % 2 == 1:
            return _SignFlipRng(base)
        return base
    return stream_rng(cfg.master_seed, purpose, index)


class StreamingLogSumExp:
    """One-pass log-sum-exp accumulator; tolerates -inf terms."""

    def __init__(self):
        self._max = -math.inf
        self._sum = 0.0
        self.count = 0

    def add(self, value: float) -> None:
        self.count += 1
        if value == -math.inf:
            return
        if value <= self._max:
            self._sum += math.exp(value - self._max)
        else:
            self._sum = self._sum * math.exp(self._max - value) + 1.0 if self._sum else 1.0
            self._max = value

    def add_many(self, values) -> None:
        for v in values:
            self.add(float(v))

    def result(self) -> float:
        if self._max == -math.inf:
            return -math.inf
        return self._max + math.log(self._sum)


def logsumexp_stream(values) -> float:
    acc = StreamingLogSumExp()
    acc.add_many(np.asarray(values, dtype=float).ravel())
    return acc.result()


def _evaluate_indices(sampler, f, cfg: McConfig, purpose, n: int) -> np.ndarray:
    out = np.empty(n, dtype=float)

    def work(i: int) -> None:
        rng = _sample_rng(cfg, purpose, i)
        out[i] = f(sampler(rng))

    if cfg.threads > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            list(pool.map(work, range(n)))
    else:
        for i in range(n):
            work(i)
    return out


def estimate_mean(sampler, f, cfg: McConfig, *, n_samples: int | None = None,
                  purpose="mean") -> McEstimate:
    """Unbiased sample mean of f(sample); sample i drawn from stream (seed, i)."""
    n = cfg.n_final if n_samples is None else int(n_samples)
    if n < 1:
        raise ValueError("need at least one sample")
    vals = _evaluate_indices(sampler, f, cfg, purpose, n)
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return McEstimate(mean=mean, std_error=se, n_samples=n)


def estimate_log_mean(sampler, log_f, cfg: McConfig, *, n_samples: int | None = None,
                      purpose="log_mean") -> McEstimate:
    """log of the sample mean of exp(log_f(sample)), computed without leaving log domain."""
    n = cfg.n_final if n_samples is None else int(n_samples)
    if n < 1:
        raise ValueError("need at least one sample")
    logs = _evaluate_indices(sampler, log_f, cfg, purpose, n)
    return log_mean_from_values(logs)


def log_mean_from_values(logs: np.ndarray) -> McEstimate:
    """Assemble a log-domain McEstimate from precomputed per-sample log values."""
    logs = np.asarray(logs, dtype=float)
    n = logs.size
    lse = logsumexp_stream(logs)
    if lse == -math.inf:
        return McEstimate(mean=-math.inf, std_error=0.0, n_samples=n,
                          is_log=True, all_zero=True)
    log_mean = lse - math.log(n)
    if n > 1:
        w = np.exp(np.clip(logs - log_mean, -745.0, 50.0))
        rel_se = float(np.std(w, ddof=1) / math.sqrt(n))
    else:
        rel_se = 0.0
    return McEstimate(mean=float(log_mean), std_error=rel_se, n_samples=n, is_log=True)


def standard_cn(rng, rows: int, cols: int) -> np.ndarray:
    """Unit-variance complex Gaussian draws (the common-random-number primitive).

    Bound engines draw at unit variance and scale by sqrt(P') analytically, so
    the same draws serve every power point along a search.
    """
    re = rng.standard_normal((rows, cols))
    im = rng.standard_normal((rows, cols))
    return math.sqrt(0.5) * (re + 1j * im)


def draw_batch(cfg: McConfig, purpose, n: int, draw_fn, threads: int | None = None):
    """Stack per-index draws: draw_fn(rng) -> tuple of arrays, stacked along axis 0."""
    first = draw_fn(_sample_rng(cfg, purpose, 0))
    single = not isinstance(first, tuple)
    parts = (first,) if single else first
    out = [np.empty((n,) + np.asarray(p).shape, dtype=np.asarray(p).dtype) for p in parts]
    for j, p in enumerate(parts):
        out[j][0] = p

    def work(i: int) -> None:
        drawn = draw_fn(_sample_rng(cfg, purpose, i))
        drawn = (drawn,) if single else drawn
        for j, p in enumerate(drawn):
            out[j][i] = p

    nthreads = cfg.threads if threads is None else threads
    if nthreads > 1 and n > 2:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            list(pool.map(work, range(1, n)))
    else:
        for i in range(1, n):
            work(i)
    return out[0] if single else tuple(out)
