"""Pattern probabilities and fixed-N distributions for displaced GBS.

pr(n) = p_vac / prod(n_i!) * lhaf(A~_n), evaluated under four model kinds:
the full quantum model, the k-order truncation, the squeezer-only model
(displacement forced to zero) and the classical surrogate (same formula,
evaluated on the closest-classical input state built by the caller).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ConfigurationError, EnumerationBudgetError
from .hafnian import (DetectionPattern, ReducedKernel, loop_hafnian,
                      matching_polynomial, reduce_by_pattern)
from .states import (AMatrix, GammaVector, GaussianState, a_matrix,
                     gamma_vector, log_vacuum_probability)

DEFAULT_PATTERN_BUDGET = 200_000

MODEL_KINDS = ("full", "korder", "squeezer_only", "classical")


@dataclass(frozen=True)
class ModelSpec:
    """Which probability model to evaluate.

    ``classical`` is a labelling convenience: the formula is the full one
    and the classical-ness lives in the surrogate state the caller passes.
    """

    kind: str = "full"
    k: int = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigurationError(f"unknown model kind {self.kind!r}")
        if self.kind == "korder":
            if self.k is None or self.k < 0:
                raise ConfigurationError("korder model needs k >= 0")
        elif self.k is not None:
            raise ConfigurationError(f"model {self.kind!r} takes no k")

    def label(self) -> str:
        return f"korder({self.k})" if self.kind == "korder" else self.kind

    @classmethod
    def parse(cls, text: str) -> "ModelSpec":
        text = text.strip()
        if text.startswith("korder"):
            inner = text[len("korder"):].strip("()")
            return cls("korder", int(inner))
        if text.startswith("k") and text[1:].isdigit():
            return cls("korder", int(text[1:]))
        return cls(text)


class StateKernel:
    """Cached (A, gamma, p_vac) triple of a state, the probability engine."""

    def __init__(self, a: AMatrix, gamma: GammaVector, log_p_vac: float):
        self.a = a
        self.gamma = gamma
        self.log_p_vac = float(log_p_vac)
        self.p_vac = math.exp(self.log_p_vac)

    @classmethod
    def from_state(cls, state: GaussianState) -> "StateKernel":
        return cls(a_matrix(state), gamma_vector(state),
                   log_vacuum_probability(state))

    @property
    def d(self) -> int:
        return self.a.d

    def reduced(self, n: DetectionPattern, zero_gamma: bool = False) -> ReducedKernel:
        gamma = self.gamma
        if zero_gamma:
            gamma = GammaVector(np.zeros_like(self.gamma.gamma))
        return reduce_by_pattern(self.a, gamma, n)

    def korder_terms(self, n: DetectionPattern) -> np.ndarray:
        """Unnormalized pr(n)/p_vac contributions resolved by pair count:
        entry p is the term in which p photons came from the squeezers.
        Cumulative sums give every k-order value at once."""
        kern = self.reduced(n)
        poly = matching_polynomial(kern.a_n, kern.gamma_tilde)
        norm = 1.0
        for c in n.counts:
            norm *= math.factorial(c)
        return poly / norm

    def pattern_probability(self, n: DetectionPattern,
                            model: ModelSpec = ModelSpec()) -> float:
        if n.d != self.d:
            raise ConfigurationError(f"pattern has {n.d} modes, state has {self.d}")
        if n.total == 0:
            return self.p_vac
        if model.kind == "squeezer_only":
            kern = self.reduced(n, zero_gamma=True)
            val = loop_hafnian(kern)
            norm = 1.0
            for c in n.counts:
                norm *= math.factorial(c)
            val = val / norm
        else:
            terms = self.korder_terms(n)
            if model.kind == "korder":
                val = terms[:min(model.k, n.total) + 1].sum()
            else:
                val = terms.sum()
        val = complex(val)
        if abs(val.imag) > 1e-9 * max(1.0, abs(val.real)):
            raise ConfigurationError(
                f"probability came out non-real ({val!r}); kernel inconsistent")
        # Truncated models can dip slightly negative; clamp at zero.
        return max(val.real, 0.0) * self.p_vac


def pattern_probability(state: GaussianState, n: DetectionPattern,
                        model: ModelSpec = ModelSpec()) -> float:
    return StateKernel.from_state(state).pattern_probability(n, model)


def predict_single(state_or_kernel, j: int) -> tuple:
    """(p_j, p'_j) = (C_jj, C_jj + |gamma_j|^2), as ratios to p_vac."""
    kern = _as_kernel(state_or_kernel)
    c_jj = kern.a.c[j, j].real
    return c_jj, c_jj + abs(kern.gamma.gamma[j]) ** 2


def predict_twofold(state_or_kernel, j: int, k: int, phi: float = 0.0) -> tuple:
    """(p_jk, p'_jk) as ratios to p_vac; phi is an extra phase added to the
    state's own displacement phase.  p'_jk(phi) = a + b cos(2 phi + c)."""
    if j == k:
        raise ConfigurationError("twofold prediction needs two distinct modes")
    kern = _as_kernel(state_or_kernel)
    b_m, c_m, g = kern.a.b, kern.a.c, kern.gamma.gamma
    p_j, p_k = c_m[j, j].real, c_m[k, k].real
    blocked = p_j * p_k + abs(b_m[j, k]) ** 2 + abs(c_m[j, k]) ** 2
    gj, gk = g[j], g[k]
    p1j = p_j + abs(gj) ** 2
    p1k = p_k + abs(gk) ** 2
    offset = (p1j * p1k + abs(b_m[j, k]) ** 2 + abs(c_m[j, k]) ** 2
              + 2 * (c_m[j, k] * np.conj(gj) * gk).real)
    fringe = b_m[j, k] * np.conj(gj) * np.conj(gk) * np.exp(2j * phi)
    return blocked, offset + 2 * fringe.real


def _as_kernel(obj) -> StateKernel:
    if isinstance(obj, StateKernel):
        return obj
    return StateKernel.from_state(obj)


def all_patterns(d: int, total: int, collision_free: bool,
                 budget: int = DEFAULT_PATTERN_BUDGET):
    """Lexicographically ordered patterns with the given photon total."""
    if collision_free:
        if total > d:
            return []
        count = math.comb(d, total)
    else:
        count = math.comb(total + d - 1, d - 1)
    if count > budget:
        raise EnumerationBudgetError(
            f"{count} patterns exceed enumeration budget {budget}")
    if collision_free:
        return [DetectionPattern.from_modes(modes, d)
                for modes in combinations(range(d), total)]
    patterns = []

    def rec(prefix, remaining):
        if len(prefix) == d - 1:
            patterns.append(DetectionPattern((*prefix, remaining)))
            return
        for c in range(remaining + 1):
            rec((*prefix, c), remaining - c)

    rec((), total)
    return patterns


@dataclass(frozen=True)
class PatternDistribution:
    """Normalized probability table over fixed-N detection patterns."""

    d: int
    total: int
    collision_free: bool
    patterns: tuple
    probabilities: np.ndarray
    model: str = "full"
    provenance: str = ""

    def __post_init__(self):
        probs = np.asarray(self.probabilities, dtype=float)
        if len(self.patterns) != probs.shape[0]:
            raise ConfigurationError("pattern/probability length mismatch")
        if probs.size and (probs.min() < -1e-12 or abs(probs.sum() - 1) > 1e-9):
            raise ConfigurationError("probabilities must be nonnegative and sum to 1")
        probs = np.clip(probs, 0.0, None)
        s = probs.sum()
        if s > 0:
            probs = probs / s
        probs.setflags(write=False)
        object.__setattr__(self, "probabilities", probs)
        object.__setattr__(self, "patterns", tuple(self.patterns))

    def __len__(self):
        return len(self.patterns)

    def as_dict(self) -> dict:
        return {p.counts: float(q) for p, q in zip(self.patterns, self.probabilities)}

    def to_rows(self):
        for p, q in zip(self.patterns, self.probabilities):
            yield "".join(str(c) for c in p.counts), q

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["pattern", "probability"])
        for label, q in self.to_rows():
            writer.writerow([label, f"{q:.17g}"])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "d": self.d,
            "total": self.total,
            "collision_free": self.collision_free,
            "model": self.model,
            "provenance": self.provenance,
            "patterns": [list(p.counts) for p in self.patterns],
            "probabilities": [float(q) for q in self.probabilities],
        }, sort_keys=True)


def distribution_from_kernel(kernel: StateKernel, total: int,
                             collision_free: bool = True,
                             model: ModelSpec = ModelSpec(),
                             budget: int = DEFAULT_PATTERN_BUDGET,
                             provenance: str = "") -> PatternDistribution:
    patterns = all_patterns(kernel.d, total, collision_free, budget)
    raw = np.array([kernel.pattern_probability(n, model) for n in patterns])
    s = raw.sum()
    if s <= 0:
        raise ConfigurationError("distribution has zero total mass; cannot normalize")
    return PatternDistribution(kernel.d, total, collision_free,
                               tuple(patterns), raw / s,
                               model=model.label(), provenance=provenance)


def enumerate_distribution(state: GaussianState, total: int,
                           collision_free: bool = True,
                           model: ModelSpec = ModelSpec(),
                           budget: int = DEFAULT_PATTERN_BUDGET) -> PatternDistribution:
    """Normalized fixed-N distribution over all (collision-free) patterns."""
    kernel = StateKernel.from_state(state)
    return distribution_from_kernel(kernel, total, collision_free, model,
                                    budget, provenance=state.content_hash())
