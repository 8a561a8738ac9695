"""Model-comparison statistics: total variation distance and the streaming
likelihood ratio L = prod_i pr(n_i | A) / pr(n_i | B)."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .hafnian import DetectionPattern
from .probability import (ModelSpec, PatternDistribution, StateKernel,
                          distribution_from_kernel)


def tvd(p: PatternDistribution, q: PatternDistribution) -> float:
    """Total variation distance D = sum_i |p_i - q_i| / 2 on a shared index set."""
    if p.patterns != q.patterns:
        raise ConfigurationError("distributions are indexed by different pattern sets")
    return float(np.abs(p.probabilities - q.probabilities).sum() / 2)


@dataclass
class LikelihoodTrace:
    """Per-sample log-ratio increments and the cumulative likelihood ratio."""

    increments: np.ndarray
    flagged: list = field(default_factory=list)
    model_a: str = ""
    model_b: str = ""

    @property
    def sample_count(self) -> int:
        return len(self.increments)

    @property
    def cumulative_log(self) -> np.ndarray:
        return np.cumsum(self.increments)

    @property
    def log_ratio(self) -> float:
        return float(math.fsum(self.increments))

    @property
    def ratio(self) -> float:
        return float(np.exp(self.log_ratio))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["sample", "log_increment", "cumulative_log_L", "L"])
        cum = 0.0
        for i, inc in enumerate(self.increments):
            cum += inc
            writer.writerow([i + 1, f"{inc:.17g}", f"{cum:.17g}", f"{np.exp(cum):.17g}"])
        return buf.getvalue()


def likelihood_ratio(samples, model_a: ModelSpec, model_b: ModelSpec,
                     state_or_kernel, normalized: bool = True,
                     collision_free: bool = True,
                     state_or_kernel_b=None) -> LikelihoodTrace:
    """Streaming likelihood ratio over a sample list.

    By default both models are normalized over the fixed-N collision-free
    pattern set of each sample before entering the ratio, matching how the
    fixed-N distributions are constructed elsewhere; pass
    ``normalized=False`` to use raw probabilities.

    ``state_or_kernel_b`` lets model B run on its own surrogate state (the
    classical-input comparison); it defaults to the shared kernel.

    Samples with zero probability under either model contribute -inf/+inf
    and are reported in ``flagged`` rather than silently dropped.
    """
    def as_kernel(obj):
        return obj if isinstance(obj, StateKernel) else StateKernel.from_state(obj)

    kernel_a = as_kernel(state_or_kernel)
    kernel_b = kernel_a if state_or_kernel_b is None else as_kernel(state_or_kernel_b)
    samples = [s if isinstance(s, DetectionPattern) else DetectionPattern(tuple(s))
               for s in samples]
    cache: dict = {}

    def prob(n: DetectionPattern, model: ModelSpec, kernel, side) -> float:
        if normalized:
            key = (side, model.label(), n.total)
            if key not in cache:
                try:
                    cache[key] = distribution_from_kernel(
                        kernel, n.total, collision_free, model).as_dict()
                except ConfigurationError:
                    # zero mass in this sector: every sample gets flagged
                    cache[key] = {}
            return cache[key].get(n.counts, 0.0)
        return kernel.pattern_probability(n, model)

    increments = np.zeros(len(samples))
    flagged = []
    for i, n in enumerate(samples):
        pa = prob(n, model_a, kernel_a, "a")
        pb = prob(n, model_b, kernel_b, "b")
        if pa <= 0 or pb <= 0:
            flagged.append((i, n.counts, pa, pb))
            increments[i] = (-np.inf if pa <= 0 < pb
                             else np.inf if pb <= 0 < pa else 0.0)
        else:
            increments[i] = np.log(pa) - np.log(pb)
    return LikelihoodTrace(increments, flagged,
                           model_a=model_a.label(), model_b=model_b.label())
