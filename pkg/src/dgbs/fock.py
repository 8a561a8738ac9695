"""Brute-force truncated-Fock-space oracle for small systems.

Loss is handled by unitary dilation (sub-unitary d x d map embedded in the
top-left block of a 2d x 2d unitary) followed by marginalizing the ancilla
modes; the state itself stays pure throughout.  Intended for d <= 3 or 4,
used as the independent ground truth behind the loop-Hafnian engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, CutoffError
from .hafnian import DetectionPattern
from .states import SourceConfig, TransferMatrix

UNITARY_TOL = 1e-12
DEFAULT_TRUNCATION_EPS = 1e-6


@dataclass
class FockVector:
    """Sparse pure state: occupation tuple -> complex amplitude."""

    d: int
    cutoff: int
    amplitudes: dict = field(default_factory=dict)

    def norm_sq(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    @property
    def truncation_loss(self) -> float:
        return max(0.0, 1.0 - self.norm_sq())

    def tensor(self, other: "FockVector") -> "FockVector":
        out = FockVector(self.d + other.d, max(self.cutoff, other.cutoff))
        for ka, va in self.amplitudes.items():
            for kb, vb in other.amplitudes.items():
                if sum(ka) + sum(kb) <= out.cutoff:
                    out.amplitudes[ka + kb] = va * vb
        return out


def coherent_fock(alpha: complex, cutoff: int) -> FockVector:
    v = FockVector(1, cutoff)
    amp = math.exp(-abs(alpha) ** 2 / 2)
    term = complex(amp)
    for n in range(cutoff + 1):
        v.amplitudes[(n,)] = term
        term = term * alpha / math.sqrt(n + 1)
    return v


def tmsv_fock(r: float, cutoff: int) -> FockVector:
    v = FockVector(2, cutoff)
    t = math.tanh(r)
    amp = 1.0 / math.cosh(r)
    for n in range(cutoff // 2 + 1):
        v.amplitudes[(n, n)] = amp * t ** n
    return v


def vacuum_fock(d: int, cutoff: int) -> FockVector:
    v = FockVector(d, cutoff)
    v.amplitudes[(0,) * d] = 1.0
    return v


def expand_inputs(config: SourceConfig, total_modes: int, cutoff: int,
                  eps: float = DEFAULT_TRUNCATION_EPS) -> FockVector:
    """TMSV (sum tanh^n r / cosh r |n,n>) and coherent state placed on their
    ports, vacuum elsewhere; total-photon cutoff."""
    ports = (*config.squeezer_ports, config.coherent_port)
    if max(ports) >= total_modes:
        raise ConfigurationError("input port exceeds total modes")
    tm = tmsv_fock(config.r, cutoff)
    coh = coherent_fock(config.alpha_mag * np.exp(1j * config.phi), cutoff)
    out = FockVector(total_modes, cutoff)
    p, q, c = config.squeezer_ports[0], config.squeezer_ports[1], config.coherent_port
    for (na, nb), va in tm.amplitudes.items():
        for (nc,), vc in coh.amplitudes.items():
            if na + nb + nc > cutoff:
                continue
            key = [0] * total_modes
            key[p], key[q], key[c] = na, nb, nc
            out.amplitudes[tuple(key)] = va * vc
    if out.truncation_loss > eps:
        raise CutoffError(
            f"truncation loss {out.truncation_loss:.3e} exceeds eps={eps:.1e}; "
            "raise the cutoff")
    return out


def apply_interferometer(psi: FockVector, u: np.ndarray) -> FockVector:
    """Apply a_i^dag -> sum_j u[j, i] a_j^dag (u acts like delta' = u delta).

    Passive transformations conserve total photon number, so the total-photon
    cutoff introduces no boundary loss.
    """
    u = np.asarray(u, dtype=complex)
    d = psi.d
    if u.shape != (d, d):
        raise ConfigurationError(f"unitary shape {u.shape} != ({d},{d})")
    if np.abs(u @ u.conj().T - np.eye(d)).max() > 1e-10:
        raise ConfigurationError("interferometer matrix is not unitary")
    out = FockVector(d, psi.cutoff)
    zero = (0,) * d
    for ket, amp in psi.amplitudes.items():
        # expand prod_i (sum_j u[j,i] a_j^dag)^{n_i} |0>, tracked as monomial
        # coefficients; |m> amplitude picks up sqrt(prod m_j!).
        poly = {zero: amp / math.sqrt(_fact_prod(ket))}
        for i, n_i in enumerate(ket):
            col = u[:, i]
            for _ in range(n_i):
                nxt = {}
                for mono, coeff in poly.items():
                    for j in range(d):
                        cj = col[j]
                        if cj == 0:
                            continue
                        key = list(mono)
                        key[j] += 1
                        key = tuple(key)
                        nxt[key] = nxt.get(key, 0.0) + coeff * cj
                poly = nxt
        for mono, coeff in poly.items():
            val = coeff * math.sqrt(_fact_prod(mono))
            out.amplitudes[mono] = out.amplitudes.get(mono, 0.0) + val
    out.amplitudes = {k: v for k, v in out.amplitudes.items() if v != 0}
    return out


def _fact_prod(occ) -> float:
    p = 1
    for n in occ:
        p *= math.factorial(n)
    return p


def dilate_lossy(t: TransferMatrix) -> np.ndarray:
    """Unitary dilation of the mode map S = t.mode_map(): returns a 2d x 2d
    unitary whose top-left d x d block equals S (outputs first, ancillas
    second)."""
    s = t.mode_map()
    d = t.d
    u, sv, vh = np.linalg.svd(s)
    sv = np.clip(sv, 0.0, 1.0)
    c = np.sqrt(1.0 - sv ** 2)
    w = np.zeros((2 * d, 2 * d), dtype=complex)
    w[:d, :d] = s
    w[:d, d:] = u @ np.diag(c) @ u.conj().T
    w[d:, :d] = vh.conj().T @ np.diag(c) @ vh
    w[d:, d:] = -vh.conj().T @ np.diag(sv) @ u.conj().T
    if np.abs(w @ w.conj().T - np.eye(2 * d)).max() > UNITARY_TOL * 100:
        raise ConfigurationError("dilation failed to produce a unitary")
    return w


def input_tail_mass(config: SourceConfig, cutoff: int, top: int = 120) -> float:
    """Probability that the (pre-loss) input carries more than ``cutoff``
    photons in total: TMSV pair statistics convolved with the Poisson
    coherent intensity."""
    x = math.tanh(config.r) ** 2
    a2 = config.alpha_mag ** 2
    half = top // 2
    pdc = (1 - x) * x ** np.arange(half + 1)
    coh = np.exp(-a2) * np.array([a2 ** n / math.factorial(n)
                                  for n in range(top + 1)])
    total = np.zeros(2 * half + top + 2)
    for n, p in enumerate(pdc):
        total[2 * n:2 * n + top + 1] += p * coh
    return float(total[cutoff + 1:].sum())


def choose_cutoff(config: SourceConfig, t: TransferMatrix, pattern_total: int,
                  tol: float = 1e-7, max_cutoff: int = 18) -> int:
    """Smallest total-photon cutoff whose estimated probability error stays
    under ``tol``.

    Two error channels: in a lossy circuit, above-cutoff input components
    can reach the pattern by shedding their extra photons, bounded by the
    tail mass times (1 - eta_min)^extra; in a near-unitary circuit only the
    interference-squared term ~2 (N+1)^2 tail^2 survives.  Both prefactors
    are calibrated against measured engine/oracle deviations.
    """
    sv_min = float(np.linalg.svd(t.mode_map(), compute_uv=False).min())
    eta_min = config.eta_tot * sv_min ** 2
    quad = 2.0 * (pattern_total + 1) ** 2
    for cutoff in range(pattern_total + 2, max_cutoff + 1):
        tail = input_tail_mass(config, cutoff)
        extra = cutoff + 1 - pattern_total
        est = tail * max(3.0 * (1.0 - eta_min) ** extra, quad * tail)
        if est < tol:
            return cutoff
    raise CutoffError(
        f"no cutoff <= {max_cutoff} reaches tolerance {tol:.1e}; the input "
        "is too bright for the Fock oracle")


def oracle_probability(config: SourceConfig, t: TransferMatrix,
                       pattern: DetectionPattern, cutoff: int = None,
                       eps: float = 0.05, tol: float = 1e-7,
                       check_convergence: bool = False) -> float:
    """Pattern probability by brute-force Fock expansion; the independent
    cross-check for the loop-Hafnian engine.

    Passive evolution is exact within each total-photon sector, so the
    result's error comes only from the input mass above the cutoff; by
    default the cutoff is chosen adaptively to keep that error under
    ``tol``.
    """
    if pattern.d != t.d:
        raise ConfigurationError("pattern dimension does not match circuit")
    if cutoff is None:
        cutoff = choose_cutoff(config, t, pattern.total, tol=tol)
    value = _oracle_probability_at(config, t, pattern, cutoff, eps)
    if check_convergence:
        again = _oracle_probability_at(config, t, pattern, 2 * cutoff, eps)
        if abs(again - value) > 1e-6:
            raise CutoffError(
                f"oracle not converged: {value:.3e} vs {again:.3e} at doubled cutoff")
        value = again
    return value


def _oracle_probability_at(config, t, pattern, cutoff, eps) -> float:
    d = t.d
    psi = expand_inputs(config, 2 * d, cutoff, eps=eps)
    # uniform source loss eta_tot folds into the transfer before dilation
    if config.eta_tot < 1:
        t = TransferMatrix(d, d, math.sqrt(config.eta_tot) * t.embedded())
    w = dilate_lossy(t)
    psi = apply_interferometer(psi, w)
    target = pattern.counts
    prob = 0.0
    for ket, amp in psi.amplitudes.items():
        if ket[:d] == target:
            prob += abs(amp) ** 2
    return prob
