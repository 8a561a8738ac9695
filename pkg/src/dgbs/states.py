"""Multimode Gaussian states in the doubled annihilation/creation ordering.

A d-mode Gaussian state is stored as a 2d x 2d covariance matrix ``sigma``
and a length-2d displacement vector ``delta``, with indices 0..d-1 referring
to annihilation operators and d..2d-1 to creation operators.  The covariance
has the block form ``[[G, M], [conj(M), conj(G)]]`` with G Hermitian
(vacuum: G = I/2) and M symmetric.  The displacement satisfies
``delta[j + d] = conj(delta[j])``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigurationError, NumericalError, PhysicalityError

BLOCK_TOL = 1e-10
COND_LIMIT = 1e12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def block_swap(d: int) -> np.ndarray:
    """The 2d x 2d matrix X = [[0, I], [I, 0]] swapping the two d-blocks."""
    x = np.zeros((2 * d, 2 * d))
    x[:d, d:] = np.eye(d)
    x[d:, :d] = np.eye(d)
    return x


@dataclass(frozen=True)
class GaussianState:
    """Covariance ``sigma`` and displacement ``delta`` of a d-mode state."""

    d: int
    sigma: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        d = self.d
        sigma = np.asarray(self.sigma, dtype=complex)
        delta = np.asarray(self.delta, dtype=complex)
        if d < 1:
            raise ConfigurationError("mode count must be positive")
        if sigma.shape != (2 * d, 2 * d) or delta.shape != (2 * d,):
            raise ConfigurationError(
                f"expected sigma (2d,2d) and delta (2d,) for d={d}, "
                f"got {sigma.shape} and {delta.shape}")
        g, m = sigma[:d, :d], sigma[:d, d:]
        if (np.abs(g - g.conj().T).max() > BLOCK_TOL
                or np.abs(m - m.T).max() > BLOCK_TOL
                or np.abs(sigma[d:, :d] - m.conj()).max() > BLOCK_TOL
                or np.abs(sigma[d:, d:] - g.conj()).max() > BLOCK_TOL):
            raise PhysicalityError("covariance lacks [[G,M],[M*,G*]] structure")
        if np.abs(delta[d:] - delta[:d].conj()).max() > BLOCK_TOL:
            raise PhysicalityError("displacement is not conjugate-paired")
        eigs = np.linalg.eigvalsh(sigma + np.eye(2 * d) / 2)
        if eigs.min() <= 0:
            raise PhysicalityError(
                f"Sigma_Q not positive definite (min eigenvalue {eigs.min():.3e})")
        object.__setattr__(self, "sigma", _frozen(sigma))
        object.__setattr__(self, "delta", _frozen(delta))

    @property
    def gamma_block(self) -> np.ndarray:
        """Hermitian block G (annihilation-annihilation correlations)."""
        return self.sigma[:self.d, :self.d]

    @property
    def m_block(self) -> np.ndarray:
        """Symmetric block M (annihilation-annihilation pairing)."""
        return self.sigma[:self.d, self.d:]

    @property
    def mean_photons(self) -> np.ndarray:
        """Per-mode mean photon number <a_j^dag a_j>."""
        occ = np.diag(self.gamma_block).real - 0.5
        return occ + np.abs(self.delta[:self.d]) ** 2

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.round(self.sigma, 12).tobytes())
        h.update(np.round(self.delta, 12).tobytes())
        return h.hexdigest()[:16]


def vacuum_state(d: int) -> GaussianState:
    return GaussianState(d, np.eye(2 * d, dtype=complex) / 2,
                         np.zeros(2 * d, dtype=complex))


@dataclass(frozen=True)
class TransferMatrix:
    """Sub-unitary m x d map of input-port to output-port amplitudes.

    ``t[i, j]`` is the amplitude for light entering port ``input_ports[i]``
    to exit output port j.  All loss is folded into the sub-unitarity of t.
    """

    m: int
    d: int
    t: np.ndarray
    input_ports: tuple = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=complex)
        if t.shape != (self.m, self.d):
            raise ConfigurationError(f"transfer matrix shape {t.shape} != ({self.m},{self.d})")
        ports = self.input_ports
        if ports is None:
            ports = tuple(range(self.m))
        ports = tuple(int(p) for p in ports)
        if len(ports) != self.m or len(set(ports)) != self.m:
            raise ConfigurationError("input ports must be m distinct indices")
        if any(p < 0 or p >= self.d for p in ports):
            raise ConfigurationError("input port index out of range")
        smax = np.linalg.svd(t, compute_uv=False).max() if t.size else 0.0
        if smax > 1 + 1e-12:
            raise PhysicalityError(f"transfer matrix is not sub-unitary (s_max={smax:.6g})")
        object.__setattr__(self, "t", _frozen(t))
        object.__setattr__(self, "input_ports", ports)

    @classmethod
    def square(cls, t: np.ndarray) -> "TransferMatrix":
        t = np.asarray(t, dtype=complex)
        return cls(t.shape[0], t.shape[1], t)

    def embedded(self) -> np.ndarray:
        """d x d matrix with row input_ports[i] taken from t, others zero."""
        e = np.zeros((self.d, self.d), dtype=complex)
        for i, p in enumerate(self.input_ports):
            e[p, :] = self.t[i, :]
        return e

    def mode_map(self) -> np.ndarray:
        """d x d matrix S with a_out = S a_in (i.e. delta' = S delta)."""
        return self.embedded().T


@dataclass(frozen=True)
class SourceConfig:
    """Two-mode squeezer plus single coherent beam feeding the circuit."""

    r: float = 0.0
    alpha_mag: float = 0.0
    phi: float = 0.0
    squeezer_ports: tuple = (0, 1)
    coherent_port: int = 2
    eta_c: float = 1.0
    eta_g: float = 1.0
    eta_p: float = 1.0
    eta_d: float = 1.0

    def __post_init__(self):
        for name in ("eta_c", "eta_g", "eta_p", "eta_d"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ConfigurationError(f"{name}={v} outside [0,1]")
        if self.r < 0 or self.alpha_mag < 0:
            raise ConfigurationError("r and alpha_mag must be nonnegative")
        ports = (*self.squeezer_ports, self.coherent_port)
        if len(set(ports)) != 3:
            raise ConfigurationError(f"input ports overlap: {ports}")

    @property
    def eta_tot(self) -> float:
        return self.eta_c * self.eta_g ** 2 * self.eta_p * self.eta_d

    @property
    def n_alpha(self) -> float:
        """Coherent intensity |alpha|^2 before losses."""
        return self.alpha_mag ** 2

    @property
    def n_pdc(self) -> float:
        """Mean detected squeezer photons per pulse and per mode."""
        return self.eta_tot * np.sinh(self.r) ** 2

    @classmethod
    def from_detected_means(cls, n_pdc: float, n_alpha: float,
                            eta_tot: float = None, per_mode: bool = True,
                            **kw) -> "SourceConfig":
        """Build a config from detected mean photon numbers.

        ``r = arcsinh(sqrt(n_pdc / eta_tot))`` with ``n_pdc`` interpreted
        per squeezer mode by default (set ``per_mode=False`` to treat it as
        the total over both modes).
        """
        if eta_tot is None:
            probe = cls(**kw)
            eta_tot = probe.eta_tot
        if eta_tot <= 0:
            raise ConfigurationError("eta_tot must be positive")
        n = n_pdc if per_mode else n_pdc / 2
        r = float(np.arcsinh(np.sqrt(n / eta_tot)))
        return cls(r=r, alpha_mag=float(np.sqrt(n_alpha)), **kw)


def build_input_state(config: SourceConfig, total_modes: int) -> GaussianState:
    """Pre-interferometer state: TMSV on the squeezer ports, coherent
    displacement on the coherent port, vacuum elsewhere.

    The config's efficiency product eta_tot is applied as uniform loss on
    every mode; uniform loss commutes with a unitary circuit, so this covers
    source and detection loss alike.  Mode-dependent circuit loss belongs in
    a sub-unitary transfer matrix instead.
    """
    d = total_modes
    ports = (*config.squeezer_ports, config.coherent_port)
    if max(ports) >= d:
        raise ConfigurationError(f"input port {max(ports)} >= total modes {d}")
    sigma = np.eye(2 * d, dtype=complex) / 2
    p, q = config.squeezer_ports
    sh, ch = np.sinh(config.r), np.cosh(config.r)
    sigma[p, p] += sh ** 2
    sigma[q, q] += sh ** 2
    sigma[p + d, p + d] += sh ** 2
    sigma[q + d, q + d] += sh ** 2
    sigma[p, q + d] = sigma[q, p + d] = sh * ch
    sigma[p + d, q] = sigma[q + d, p] = sh * ch
    delta = np.zeros(2 * d, dtype=complex)
    alpha = config.alpha_mag * np.exp(1j * config.phi)
    delta[config.coherent_port] = alpha
    delta[config.coherent_port + d] = np.conj(alpha)
    state = GaussianState(d, sigma, delta)
    if config.eta_tot < 1:
        root = np.sqrt(config.eta_tot) * np.eye(d)
        state = propagate(state, TransferMatrix.square(root))
    return state


def propagate(state: GaussianState, t: TransferMatrix) -> GaussianState:
    """Push a state through a lossy circuit: Sigma' = S Sigma S^dag +
    (I - S S^dag)/2 and delta' = S delta, with S = T_map (+) conj(T_map)."""
    if state.d != t.d:
        raise ConfigurationError(f"state has {state.d} modes, circuit expects {t.d}")
    s = t.mode_map()
    d = t.d
    s_full = np.zeros((2 * d, 2 * d), dtype=complex)
    s_full[:d, :d] = s
    s_full[d:, d:] = s.conj()
    sigma = s_full @ state.sigma @ s_full.conj().T
    sigma += (np.eye(2 * d) - s_full @ s_full.conj().T) / 2
    delta = s_full @ state.delta
    return GaussianState(d, sigma, delta)


def q_covariance(state: GaussianState) -> np.ndarray:
    """Covariance of the state's Q-function, Sigma_Q = Sigma + I/2."""
    return state.sigma + np.eye(2 * state.d) / 2


def _solve_sigma_q(state: GaussianState):
    """Hermitian solve against Sigma_Q; rejects ill-conditioned states."""
    sq = q_covariance(state)
    cond = np.linalg.cond(sq)
    if cond > COND_LIMIT:
        raise NumericalError(f"Sigma_Q condition number {cond:.3e} exceeds {COND_LIMIT:.1e}")
    factor = cho_factor((sq + sq.conj().T) / 2)
    inv = cho_solve(factor, np.eye(2 * state.d, dtype=complex))
    return sq, inv


@dataclass(frozen=True)
class AMatrix:
    """Kernel matrix A = X (I - Sigma_Q^-1), stored via its B and C blocks."""

    d: int
    b: np.ndarray
    c: np.ndarray
    sigma_q_inv: np.ndarray = None

    def __post_init__(self):
        b = np.asarray(self.b, dtype=complex)
        c = np.asarray(self.c, dtype=complex)
        if b.shape != (self.d, self.d) or c.shape != (self.d, self.d):
            raise ConfigurationError("B and C must both be d x d")
        if np.abs(b - b.T).max() > BLOCK_TOL:
            raise PhysicalityError("B block is not symmetric")
        if np.abs(c - c.conj().T).max() > BLOCK_TOL:
            raise PhysicalityError("C block is not Hermitian")
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "c", _frozen(c))
        if self.sigma_q_inv is not None:
            object.__setattr__(self, "sigma_q_inv",
                               _frozen(np.asarray(self.sigma_q_inv, dtype=complex)))

    @property
    def full(self) -> np.ndarray:
        """The 2d x 2d matrix [[B, C], [C^T, conj(B)]]."""
        top = np.hstack([self.b, self.c])
        bottom = np.hstack([self.c.T, self.b.conj()])
        return np.vstack([top, bottom])


def a_matrix(state: GaussianState) -> AMatrix:
    sq, inv = _solve_sigma_q(state)
    a = block_swap(state.d) @ (np.eye(2 * state.d) - inv)
    d = state.d
    b = (a[:d, :d] + a[d:, d:].conj()) / 2
    b = (b + b.T) / 2
    c = (a[:d, d:] + a[d:, :d].T) / 2
    c = (c + c.conj().T) / 2
    return AMatrix(d, b, c, sigma_q_inv=inv)


@dataclass(frozen=True)
class GammaVector:
    """Loop weights gamma = delta^dag Sigma_Q^-1 (length 2d row vector)."""

    gamma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma",
                           _frozen(np.asarray(self.gamma, dtype=complex)))

    @property
    def d(self) -> int:
        return self.gamma.shape[0] // 2

    @classmethod
    def from_halves(cls, first: np.ndarray) -> "GammaVector":
        first = np.asarray(first, dtype=complex)
        return cls(np.concatenate([first, first.conj()]))


def gamma_vector(state: GaussianState) -> GammaVector:
    _, inv = _solve_sigma_q(state)
    return GammaVector(state.delta.conj() @ inv)


def vacuum_probability(state: GaussianState) -> float:
    """p_vac = exp(-delta^dag Sigma_Q^-1 delta / 2) / sqrt(det Sigma_Q)."""
    return float(np.exp(log_vacuum_probability(state)))


def log_vacuum_probability(state: GaussianState) -> float:
    sq, inv = _solve_sigma_q(state)
    quad = (state.delta.conj() @ inv @ state.delta).real
    sign, logdet = np.linalg.slogdet(sq)
    if sign.real <= 0:
        raise NumericalError("det Sigma_Q not positive")
    return -quad / 2 - logdet / 2


def state_from_a(a: AMatrix, gamma: GammaVector) -> GaussianState:
    """Materialize the state with kernel (A, gamma): Sigma_Q = (I - X A)^-1."""
    d = a.d
    ixa = np.eye(2 * d) - block_swap(d) @ a.full
    try:
        sq = np.linalg.inv(ixa)
    except np.linalg.LinAlgError as exc:
        raise PhysicalityError("I - X A is singular") from exc
    sq = (sq + sq.conj().T) / 2
    eigs = np.linalg.eigvalsh(sq)
    if eigs.min() <= 0:
        raise PhysicalityError(
            f"kernel does not describe a physical state (min Sigma_Q eig {eigs.min():.3e})")
    delta = (gamma.gamma @ sq).conj()
    return GaussianState(d, sq - np.eye(2 * d) / 2, delta)


@dataclass(frozen=True)
class ClassicalStateParams:
    """Squeezed-thermal parameters of the closest classical approximant."""

    a_plus: float
    a_minus: float
    s_c: float
    n_th: float
    s: float

    def quad_variances(self) -> tuple:
        """(V+, V-) of the classical state in vacuum-is-1 units; V- == 1."""
        return ((2 * self.n_th + 1) * np.exp(2 * self.s),
                (2 * self.n_th + 1) * np.exp(-2 * self.s))


def closest_classical_state(r: float, eta: float) -> ClassicalStateParams:
    """Closest classical squeezed thermal state to a lossy squeezed vacuum.

    a_pm = eta e^{+-2r} + (1 - eta); s_c = ln sqrt(a+ a-);
    n = -1/2 + sqrt(1 + 2 sinh(2 s_c) sqrt(a+/a-)) / 2; s = ln(2n+1)/2.
    """
    if r < 0 or not 0 <= eta <= 1:
        raise ConfigurationError("need r >= 0 and eta in [0,1]")
    a_plus = eta * np.exp(2 * r) + (1 - eta)
    a_minus = eta * np.exp(-2 * r) + (1 - eta)
    s_c = np.log(np.sqrt(a_plus * a_minus))
    n_th = -0.5 + 0.5 * np.sqrt(1 + 2 * np.sinh(2 * s_c) * np.sqrt(a_plus / a_minus))
    s = 0.5 * np.log(2 * n_th + 1)
    return ClassicalStateParams(float(a_plus), float(a_minus), float(s_c),
                                float(n_th), float(s))


def build_classical_input(config: SourceConfig, total_modes: int) -> GaussianState:
    """Classical surrogate input: two closest-classical squeezed thermal
    states (opposite squeezing phases) combined on a balanced beam splitter
    at the squeezer ports, plus the coherent beam.

    eta_tot is already folded into the squeezed-thermal parameters, so the
    coherent amplitude is attenuated by sqrt(eta_tot) to match; feed the
    result through a lossless circuit.
    """
    d = total_modes
    params = closest_classical_state(config.r, config.eta_tot)
    v_plus, v_minus = params.quad_variances()
    g = (v_plus + v_minus) / 4          # <a a^dag + a^dag a>/2
    m = (v_plus - v_minus) / 4          # <a a>
    sigma = np.eye(2 * d, dtype=complex) / 2
    p, q = config.squeezer_ports
    for port, sign in ((p, 1.0), (q, -1.0)):
        sigma[port, port] = g
        sigma[port + d, port + d] = g
        sigma[port, port + d] = sign * m
        sigma[port + d, port] = sign * m
    delta = np.zeros(2 * d, dtype=complex)
    alpha = np.sqrt(config.eta_tot) * config.alpha_mag * np.exp(1j * config.phi)
    delta[config.coherent_port] = alpha
    delta[config.coherent_port + d] = np.conj(alpha)
    state = GaussianState(d, sigma, delta)
    bs = np.eye(d, dtype=complex)
    inv_sqrt2 = 1 / np.sqrt(2)
    bs[p, p] = bs[p, q] = bs[q, p] = inv_sqrt2
    bs[q, q] = -inv_sqrt2
    return propagate(state, TransferMatrix.square(bs))
