"""Synthetic-experiment generation: shot-noise sampling, three-setting
measurement records, phase drift + PID locking, and transfer-matrix
amplitude estimation from singles rates."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError
from .hafnian import DetectionPattern
from .probability import ModelSpec, StateKernel, all_patterns
from .reconstruction import MeasurementRecord
from .states import (GaussianState, SourceConfig, TransferMatrix,
                     build_input_state, propagate)


# ---------------------------------------------------------------------------
# pattern sampling

@dataclass(frozen=True)
class ClickRecord:
    pulse: int
    bitmask: int        # collision-free pattern bitmask; -1 = discarded
    phi: float


class ClickTable:
    """Column-oriented store of per-pulse detection outcomes."""

    def __init__(self, bitmasks: np.ndarray, phi: np.ndarray, d: int):
        self.bitmasks = np.asarray(bitmasks, dtype=np.int64)
        self.phi = np.asarray(phi, dtype=float)
        self.d = d

    def __len__(self):
        return len(self.bitmasks)

    def __iter__(self):
        for i, (m, p) in enumerate(zip(self.bitmasks, self.phi)):
            yield ClickRecord(i, int(m), float(p))

    def patterns(self, min_photons: int = 0):
        """Detection patterns (discards skipped) with at least min_photons."""
        out = []
        for m in self.bitmasks:
            if m < 0:
                continue
            if int(m).bit_count() < min_photons:
                continue
            counts = tuple((int(m) >> i) & 1 for i in range(self.d))
            out.append(DetectionPattern(counts))
        return out

    def nfold_rate(self, n: int) -> float:
        kept = self.bitmasks[self.bitmasks >= 0]
        hits = sum(1 for m in kept if int(m).bit_count() == n)
        return hits / len(self.bitmasks)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["pulse", "bitmask_hex", "phi"])
        for i, (m, p) in enumerate(zip(self.bitmasks, self.phi)):
            writer.writerow([i, format(int(m), "x") if m >= 0 else "discard",
                             f"{p:.17g}"])
        return buf.getvalue()


def sample_patterns(state: GaussianState, model: ModelSpec, pulses: int,
                    n_max: int, seed: int, phi: float = 0.0) -> ClickTable:
    """Draw i.i.d. collision-free patterns with N <= n_max from the exact
    distribution; residual probability mass goes to a discard bucket."""
    kernel = StateKernel.from_state(state)
    patterns, probs = _pattern_table(kernel, model, n_max)
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(probs), size=pulses, p=probs)
    masks = np.array([p.bitmask() for p in patterns] + [-1], dtype=np.int64)
    return ClickTable(masks[idx], np.full(pulses, phi), kernel.d)


def _pattern_table(kernel: StateKernel, model: ModelSpec, n_max: int):
    patterns = []
    for total in range(0, n_max + 1):
        patterns.extend(all_patterns(kernel.d, total, collision_free=True))
    probs = np.array([kernel.pattern_probability(n, model) for n in patterns])
    overflow = max(0.0, 1.0 - probs.sum())
    probs = np.concatenate([probs, [overflow]])
    probs = np.clip(probs, 0, None)
    return patterns, probs / probs.sum()


def sample_patterns_with_phase(state_builder, model: ModelSpec, phi_per_pulse,
                               n_max: int, seed: int,
                               phi_bins: int = 64) -> ClickTable:
    """Like :func:`sample_patterns` but with the instantaneous (locked)
    phase coupled into the state; phases are quantized to ``phi_bins`` bins
    per 2 pi to bound the number of exact distributions computed."""
    phi_per_pulse = np.asarray(phi_per_pulse, dtype=float)
    pulses = len(phi_per_pulse)
    width = 2 * math.pi / phi_bins
    bins = np.round(phi_per_pulse / width).astype(int)
    rng = np.random.default_rng(seed)
    masks = np.empty(pulses, dtype=np.int64)
    d = None
    for b in np.unique(bins):
        sel = np.nonzero(bins == b)[0]
        state = state_builder(b * width)
        kernel = StateKernel.from_state(state)
        d = kernel.d
        patterns, probs = _pattern_table(kernel, model, n_max)
        table = np.array([p.bitmask() for p in patterns] + [-1], dtype=np.int64)
        masks[sel] = table[rng.choice(len(probs), size=len(sel), p=probs)]
    return ClickTable(masks, phi_per_pulse, d)


# ---------------------------------------------------------------------------
# three-setting measurement records

def _setting_rates(kernel: StateKernel, include_collisions: bool):
    d = kernel.d
    p_vac = kernel.p_vac
    singles = np.array([kernel.pattern_probability(
        DetectionPattern.from_modes([j], d)) for j in range(d)])
    twofolds = {}
    for j in range(d):
        for k in range(j if include_collisions else j + 1, d):
            n = DetectionPattern.from_modes([j, k], d)
            twofolds[(j, k)] = kernel.pattern_probability(n)
    return p_vac, singles, twofolds


def _binomial_rates(rng, rate, pulses):
    return rng.binomial(int(pulses), np.clip(rate, 0, 1)) / pulses


def simulate_records(config: SourceConfig, t: TransferMatrix,
                     second_input_port: int = None,
                     phi_grid=None, pulses_per_setting: float = math.inf,
                     seed: int = None,
                     include_collisions: bool = False) -> dict:
    """Generate the three measurement settings the reconstruction consumes.

    With finite ``pulses_per_setting`` every observable receives independent
    binomial counting noise (pulses are split evenly over the phi grid for
    scanned settings); ``math.inf`` yields exact noiseless rates.
    """
    if phi_grid is None:
        phi_grid = np.linspace(0, 10 * math.pi, 100, endpoint=False)
    phi_grid = np.asarray(phi_grid, dtype=float)
    rng = np.random.default_rng(seed)
    noisy = np.isfinite(pulses_per_setting)
    records = {}

    blocked_cfg = replace(config, alpha_mag=0.0)
    kernel = StateKernel.from_state(propagate(build_input_state(blocked_cfg, t.d), t))
    p_vac, singles, twofolds = _setting_rates(kernel, include_collisions)
    if noisy:
        singles = _binomial_rates(rng, singles, pulses_per_setting)
        twofolds = {k: float(_binomial_rates(rng, v, pulses_per_setting))
                    for k, v in twofolds.items()}
        p_vac = float(_binomial_rates(rng, p_vac, pulses_per_setting))
    records["blocked"] = MeasurementRecord(
        "blocked", t.d, pulses_per_setting, p_vac, singles, twofolds)

    settings = [("input1", config.coherent_port)]
    if second_input_port is not None:
        settings.append(("input2", second_input_port))
    pulses_per_bin = pulses_per_setting / len(phi_grid) if noisy else math.inf
    for name, port in settings:
        cfg = replace(config, coherent_port=port,
                      squeezer_ports=_avoid_overlap(config.squeezer_ports, port))
        nphi = len(phi_grid)
        p_vac = np.zeros(nphi)
        singles = np.zeros((t.d, nphi))
        two = {}
        for i, phv in enumerate(phi_grid):
            kern = StateKernel.from_state(propagate(
                build_input_state(replace(cfg, phi=phv), t.d), t))
            pv, s, tf = _setting_rates(kern, include_collisions)
            p_vac[i] = pv
            singles[:, i] = s
            for key, v in tf.items():
                two.setdefault(key, np.zeros(nphi))[i] = v
        if noisy:
            p_vac = _binomial_rates(rng, p_vac, pulses_per_bin)
            singles = _binomial_rates(rng, singles, pulses_per_bin)
            two = {k: _binomial_rates(rng, v, pulses_per_bin)
                   for k, v in two.items()}
        records[name] = MeasurementRecord(
            name, t.d, pulses_per_bin, p_vac, singles, two, phi=phi_grid)
    return records


def _avoid_overlap(squeezer_ports, coherent_port):
    if coherent_port not in squeezer_ports:
        return squeezer_ports
    raise ConfigurationError(
        f"second coherent input port {coherent_port} collides with the squeezer ports")


# ---------------------------------------------------------------------------
# phase drift and PID locking

@dataclass(frozen=True)
class DriftModel:
    """Phase drift: random walk, sinusoid, or their sum."""

    kind: str = "composite"
    sigma: float = 0.015          # random-walk step std (rad per step)
    amplitude: float = 1.8        # sinusoid amplitude (rad)
    period: float = 15.0          # sinusoid period (s)
    step_interval: float = 0.1    # s

    def __post_init__(self):
        if self.kind not in ("random_walk", "sinusoidal", "composite"):
            raise ConfigurationError(f"unknown drift kind {self.kind!r}")
        if self.sigma < 0 or self.step_interval <= 0:
            raise ConfigurationError("need sigma >= 0 and step_interval > 0")

    def trace(self, duration: float, rng) -> np.ndarray:
        n = int(round(duration / self.step_interval))
        t = np.arange(n) * self.step_interval
        out = np.zeros(n)
        if self.kind in ("random_walk", "composite"):
            out += np.concatenate([[0.0], np.cumsum(
                rng.normal(0, self.sigma, size=n - 1))])
        if self.kind in ("sinusoidal", "composite"):
            out += self.amplitude * np.sin(2 * math.pi * t / self.period)
        return out


@dataclass(frozen=True)
class PidConfig:
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0
    setpoint: float = math.pi / 4
    update_interval: float = 0.1
    actuator_limit: float = 4 * math.pi

    def __post_init__(self):
        if self.update_interval <= 0:
            raise ConfigurationError("update interval must be positive")


@dataclass
class LockResult:
    times: np.ndarray
    phi: np.ndarray
    setpoint: float
    residual_std: float
    diverged: bool
    settle_fraction: float = 0.2


def build_error_signal(twofold_rates, pairs):
    """S(phi) = sum over (j, k, sign) of sign * p'_{j,k}(phi).

    ``twofold_rates`` maps phi to a dict {(j, k): rate} or to a matrix.
    """
    if not pairs:
        raise ConfigurationError("error signal needs at least one mode pair")

    def signal(phi: float) -> float:
        rates = twofold_rates(phi)
        total = 0.0
        for j, k, sign in pairs:
            r = rates[(j, k)] if isinstance(rates, dict) else rates[j, k]
            total += sign * r
        return total

    return signal


def twofold_rates_from_state(config: SourceConfig, t: TransferMatrix):
    """phi -> {(j, k): p'_{j,k}} evaluated exactly from the circuit model."""
    from .probability import predict_twofold

    base = StateKernel.from_state(propagate(
        build_input_state(replace(config, phi=0.0), t.d), t))

    def rates(phi: float) -> dict:
        out = {}
        for j in range(t.d):
            for k in range(j + 1, t.d):
                out[(j, k)] = predict_twofold(base, j, k, phi)[1]
        return out

    return rates


def auto_select_pairs(config: SourceConfig, t: TransferMatrix,
                      setpoint: float = math.pi / 4, n_pairs: int = 5):
    """Pick the highest-visibility twofold fringes; signs are chosen so all
    slopes at the lock point add constructively (anti-correlated fringes are
    weighted by -1)."""
    from .probability import predict_twofold

    kernel = StateKernel.from_state(propagate(
        build_input_state(replace(config, phi=0.0), t.d), t))
    b, g = kernel.a.b, kernel.gamma.gamma
    candidates = []
    for j in range(t.d):
        for k in range(j + 1, t.d):
            offset = predict_twofold(kernel, j, k, 0.0)[0]
            amp = 2 * abs(b[j, k] * g[j] * g[k])
            if amp == 0:
                continue
            phase = float(np.angle(b[j, k] * np.conj(g[j]) * np.conj(g[k])))
            slope = -2 * amp * math.sin(2 * setpoint + phase)
            vis = amp / max(offset + amp, 1e-30)
            candidates.append((vis, j, k, slope))
    candidates.sort(reverse=True)
    chosen = candidates[:n_pairs]
    if not chosen:
        raise ConfigurationError("no fringing pairs available for an error signal")
    ref_slope = chosen[0][3]
    return [(j, k, 1 if slope * ref_slope > 0 else -1)
            for _, j, k, slope in chosen]


def pid_lock(drift: DriftModel, pid: PidConfig, error_signal,
             duration: float, seed: int = 0,
             initial_phi: float = None) -> LockResult:
    """Closed-loop simulation at the PID update interval.

    The measured error is S(phi) - S(setpoint); the actuator adds a phase
    correction updated every ``pid.update_interval`` seconds.
    """
    rng = np.random.default_rng(seed)
    dt = pid.update_interval
    drift_trace = drift.trace(duration, rng)
    n = len(drift_trace)
    target = error_signal(pid.setpoint)
    phi0 = pid.setpoint if initial_phi is None else initial_phi
    v = 0.0
    integral = 0.0
    prev_e = None
    phi = np.zeros(n)
    diverged = False
    for i in range(n):
        phi[i] = phi0 + drift_trace[i] + v
        e = error_signal(phi[i]) - target
        integral += e * dt
        deriv = 0.0 if prev_e is None else (e - prev_e) / dt
        prev_e = e
        v = v - (pid.kp * e + pid.ki * integral + pid.kd * deriv)
        if abs(v) > pid.actuator_limit:
            v = math.copysign(pid.actuator_limit, v)
            diverged = True
    settle = int(n * 0.2)
    residual = float(np.std(phi[settle:] - pid.setpoint))
    if residual > math.pi:
        diverged = True
    times = np.arange(n) * dt
    return LockResult(times, phi, pid.setpoint, residual, diverged)


def tune_pid_gains(drift: DriftModel, error_signal, duration: float = 30.0,
                   seed: int = 0, setpoint: float = math.pi / 4,
                   kp_grid=None, ki_grid=None) -> PidConfig:
    """Grid search (both loop signs) minimizing the locked residual std."""
    # normalize gains by the error-signal slope at the setpoint
    eps = 1e-4
    slope = (error_signal(setpoint + eps) - error_signal(setpoint - eps)) / (2 * eps)
    if slope == 0:
        raise ConfigurationError("error signal has zero slope at the setpoint")
    if kp_grid is None:
        kp_grid = [0.3, 0.6, 0.9, 1.2]
    if ki_grid is None:
        ki_grid = [0.0, 0.5, 2.0, 6.0]
    best = None
    for kp in kp_grid:
        for ki in ki_grid:
            cfg = PidConfig(kp=kp / slope, ki=ki / slope, setpoint=setpoint)
            res = pid_lock(drift, cfg, error_signal, duration, seed=seed)
            score = math.inf if res.diverged else res.residual_std
            if best is None or score < best[0]:
                best = (score, cfg)
    return best[1]


# ---------------------------------------------------------------------------
# transfer-matrix amplitude estimation

def transfer_from_singles(rates: np.ndarray, eta_tot: float) -> np.ndarray:
    """|T_ij|^2 = eta_tot * R_ij / sum_j R_ij, row by row."""
    rates = np.asarray(rates, dtype=float)
    if rates.ndim != 2 or (rates < 0).any():
        raise ConfigurationError("rates must be a nonnegative m x d matrix")
    row_sums = rates.sum(axis=1)
    if (row_sums <= 0).any():
        raise ConfigurationError("every input row needs a positive total rate")
    return eta_tot * rates / row_sums[:, None]
