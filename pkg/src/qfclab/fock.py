"""Truncated three-mode Fock-space engine for the conversion device.

Models two pumped three-wave interactions on the modes (signal, idler,
output):

* pair generation  H_pair = i*gamma*A * (a_s a_i) + h.c.
* frequency conversion (beamsplitter between idler and output)
  H_conv = i*kappa*A * (a_i^dag a_o) + h.c.

hbar = 1 throughout; couplings are angular rates and the classical pump
amplitude A is real with optical power proportional to A^2. Time evolution
uses U = exp(+i t H), so starting from vacuum the leading-order state is

    gamma*A*t |1,1,0>  +  gamma*kappa*A^2*t^2 |1,0,1>

with both amplitudes real and positive. The sign convention is pinned by
<1,1,0| H_pair |0,0,0> = -i*gamma*A (test-enforced); only magnitudes are
observable.

All functions are pure: inputs are never mutated and identical inputs give
bitwise-identical outputs, so values can be shared freely across threads.
"""

from dataclasses import dataclass

import numpy as np

MODES = ("signal", "idler", "output")


class UnknownModeError(ValueError):
    pass


class NonHermitianError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


class UndefinedCorrelationError(ValueError):
    """A requested correlation has a mean photon number too small to divide by."""


class TruncationError(RuntimeError):
    pass


@dataclass(frozen=True)
class FockBasis:
    """Number basis |n_s, n_i, n_o> with 0 <= n <= n_max per mode.

    Enumeration is lexicographic in (n_s, n_i, n_o): index =
    n_s*(n_max+1)^2 + n_i*(n_max+1) + n_o, so the output occupation varies
    fastest. dim = (n_max+1)^3.
    """

    n_max: int = 3
    modes: tuple = MODES

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")

    @property
    def dim(self):
        return (self.n_max + 1) ** 3

    def index(self, n_s, n_i, n_o):
        d = self.n_max + 1
        for n in (n_s, n_i, n_o):
            if not 0 <= n <= self.n_max:
                raise ValueError(f"occupation {n} outside [0, {self.n_max}]")
        return (n_s * d + n_i) * d + n_o

    def occupations(self):
        """(dim, 3) integer array of occupation numbers, row k = state k."""
        d = self.n_max + 1
        idx = np.arange(self.dim)
        return np.stack([idx // (d * d), (idx // d) % d, idx % d], axis=1)

    def mode_axis(self, mode):
        try:
            return self.modes.index(mode)
        except ValueError:
            raise UnknownModeError(f"unknown mode {mode!r}, expected one of {self.modes}")


@dataclass(frozen=True)
class FockState:
    """Normalized complex amplitude vector over a FockBasis."""

    basis: FockBasis
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (self.basis.dim,):
            raise ValueError(f"amplitude vector must have length {self.basis.dim}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-12:
            if norm == 0:
                raise ValueError("cannot normalize a zero state")
            amps = amps / norm
        object.__setattr__(self, "amplitudes", amps)

    def amplitude(self, n_s, n_i, n_o):
        return self.amplitudes[self.basis.index(n_s, n_i, n_o)]

    def population(self, n_s, n_i, n_o):
        return abs(self.amplitude(n_s, n_i, n_o)) ** 2

    def expectation(self, operator):
        return np.vdot(self.amplitudes, operator.matrix @ self.amplitudes)


@dataclass(frozen=True)
class CouplingParams:
    """Pump-scaled coupling rates for both processes and the interaction time.

    kappa: conversion coupling (s^-1 per unit pump amplitude)
    gamma: pair-generation coupling (s^-1 per unit pump amplitude)
    pump_amplitude: dimensionless A, power ~ A^2
    interaction_time: seconds
    """

    kappa: float
    gamma: float
    pump_amplitude: float
    interaction_time: float

    def __post_init__(self):
        if self.kappa < 0 or self.gamma < 0 or self.interaction_time < 0:
            raise ValueError("kappa, gamma and interaction_time must be >= 0")


@dataclass(frozen=True)
class FockOperator:
    basis: FockBasis
    matrix: np.ndarray

    def dagger(self):
        return FockOperator(self.basis, self.matrix.conj().T)

    def is_hermitian(self, tol=1e-12):
        scale = max(1.0, np.abs(self.matrix).max())
        return np.abs(self.matrix - self.matrix.conj().T).max() <= tol * scale


def vacuum(basis):
    amps = np.zeros(basis.dim, dtype=np.complex128)
    amps[basis.index(0, 0, 0)] = 1.0
    return FockState(basis, amps)


def number_state(basis, n_s, n_i, n_o):
    amps = np.zeros(basis.dim, dtype=np.complex128)
    amps[basis.index(n_s, n_i, n_o)] = 1.0
    return FockState(basis, amps)


def build_annihilator(basis, mode):
    """Ladder-down operator for one mode: <..n-1..|a|..n..> = sqrt(n)."""
    axis = basis.mode_axis(mode)
    occ = basis.occupations()
    d = basis.n_max + 1
    strides = np.array([d * d, d, 1])
    mat = np.zeros((basis.dim, basis.dim), dtype=np.complex128)
    src = np.nonzero(occ[:, axis] > 0)[0]
    dst = src - strides[axis]
    mat[dst, src] = np.sqrt(occ[src, axis])
    return FockOperator(basis, mat)


def build_number_operator(basis, mode):
    a = build_annihilator(basis, mode).matrix
    return FockOperator(basis, a.conj().T @ a)


def build_qfc_hamiltonian(basis, params):
    """Conversion (idler <-> output) Hamiltonian, i*kappa*A*(a_i^dag a_o) + h.c.

    Commutes with n_i + n_o. Sign fixed so that
    <1,0,1| H |1,1,0> = -i*kappa*A.
    """
    a_i = build_annihilator(basis, "idler").matrix
    a_o = build_annihilator(basis, "output").matrix
    m = 1j * params.kappa * params.pump_amplitude * (a_i.conj().T @ a_o)
    return FockOperator(basis, m + m.conj().T)


def build_spdc_hamiltonian(basis, params):
    """Pair-generation Hamiltonian, i*gamma*A*(a_s a_i) + h.c.

    Commutes with n_s - n_i. Sign fixed so that
    <1,1,0| H |0,0,0> = -i*gamma*A.
    """
    a_s = build_annihilator(basis, "signal").matrix
    a_i = build_annihilator(basis, "idler").matrix
    m = 1j * params.gamma * params.pump_amplitude * (a_s @ a_i)
    return FockOperator(basis, m + m.conj().T)


def evolve(state, hamiltonian, time, tolerance=1e-10):
    """Apply U = exp(+i*time*H) to the state.

    Uses eigendecomposition of the Hermitian H (unconditionally stable).
    Raises NonHermitianError for non-Hermitian input and ConvergenceError if
    the requested elementwise tolerance is below what the factorization can
    deliver. The returned state is renormalized; the correction is at the
    1e-12 level or the call fails.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be > 0")
    h = hamiltonian.matrix
    if not hamiltonian.is_hermitian():
        raise NonHermitianError("evolution requires a Hermitian generator")
    dim = h.shape[0]
    scale = max(1.0, np.abs(h).max() * abs(time))
    err_est = 50 * dim * np.finfo(np.float64).eps * scale
    if tolerance < err_est:
        raise ConvergenceError(
            f"tolerance {tolerance:g} below achievable {err_est:g} for this problem size")
    if time == 0:
        return state
    w, v = np.linalg.eigh(h)
    phases = np.exp(1j * time * w)
    out = v @ (phases * (v.conj().T @ state.amplitudes))
    norm = np.linalg.norm(out)
    if abs(norm - 1.0) > 1e-12:
        if abs(norm - 1.0) > 1e-9:
            raise ConvergenceError(f"norm drifted to {norm}")
        out = out / norm
    return FockState(state.basis, out)


def evolution_operator(hamiltonian, time):
    """Dense U = exp(+i*time*H) for inspection/tests (unitarity checks)."""
    w, v = np.linalg.eigh(hamiltonian.matrix)
    return FockOperator(hamiltonian.basis,
                        (v * np.exp(1j * time * w)) @ v.conj().T)


def cascaded_evolution(basis, params, joint=False, tolerance=1e-10):
    """Vacuum through pair generation then conversion.

    Default is the sequential product U_conv * U_pair applied to |0,0,0>,
    i.e. two successive exponentials. joint=True instead exponentiates the
    summed generator once (sensitivity-study variant; not equivalent because
    the two Hamiltonians do not commute).
    """
    h_pair = build_spdc_hamiltonian(basis, params)
    h_conv = build_qfc_hamiltonian(basis, params)
    t = params.interaction_time
    state = vacuum(basis)
    if joint:
        h_sum = FockOperator(basis, h_pair.matrix + h_conv.matrix)
        return evolve(state, h_sum, t, tolerance)
    state = evolve(state, h_pair, t, tolerance)
    return evolve(state, h_conv, t, tolerance)


@dataclass
class QuantumCorrelations:
    """Plain record of photon-number moments and normalized correlations."""

    mean_photons: dict
    g2_cross: dict          # {(mode_a, mode_b): value}
    g2_auto: dict           # {mode: value}
    n_max: int
    truncation_limited: bool = None
    truncation_delta: float = None

    def as_record(self):
        out = {"n_max": self.n_max, "truncation_limited": self.truncation_limited}
        for m, v in self.mean_photons.items():
            out[f"n_{m}"] = v
        for (a, b), v in self.g2_cross.items():
            out[f"g2_{a}_{b}"] = v
        for m, v in self.g2_auto.items():
            out[f"g2_{m}_{m}"] = v
        return out


_MIN_MEAN = 1e-15


def correlation_observables(state, pairs=(("signal", "idler"), ("signal", "output"))):
    """Normalized second-order correlations of a pure three-mode state.

    Cross: g2_ab = <n_a n_b> / (<n_a><n_b>) for the requested mode pairs.
    Auto:  g2_a = <a^dag a^dag a a> / <n_a>^2 for every mode involved.

    Raises UndefinedCorrelationError when any required mean photon number is
    below 1e-15 (e.g. vacuum input) instead of returning a number.
    """
    basis = state.basis
    occ = basis.occupations()
    p = np.abs(state.amplitudes) ** 2
    means = {m: float(p @ occ[:, k]) for k, m in enumerate(basis.modes)}

    needed = sorted({m for ab in pairs for m in ab})
    for m in needed:
        if m not in means:
            raise UnknownModeError(f"unknown mode {m!r}")
        if means[m] < _MIN_MEAN:
            raise UndefinedCorrelationError(
                f"mean photon number in mode {m!r} is {means[m]:.3g}; correlation undefined")

    cross = {}
    for a, b in pairs:
        ka, kb = basis.mode_axis(a), basis.mode_axis(b)
        nanb = float(p @ (occ[:, ka] * occ[:, kb]))
        cross[(a, b)] = nanb / (means[a] * means[b])

    auto = {}
    for m in needed:
        k = basis.mode_axis(m)
        n2 = float(p @ (occ[:, k] * (occ[:, k] - 1)))
        auto[m] = n2 / means[m] ** 2

    return QuantumCorrelations(mean_photons=means, g2_cross=cross, g2_auto=auto,
                               n_max=basis.n_max)


def truncation_delta(params, n_max, joint=False):
    """Max scaled change of the reported observables when n_max grows by one.

    The change is absolute for order-unity quantities and relative for
    larger ones (low-gain cross-correlations are O(1/<n>) and would otherwise
    dominate with pure float noise).
    """
    vals = []
    for n in (n_max, n_max + 1):
        st = cascaded_evolution(FockBasis(n_max=n), params, joint=joint)
        obs = correlation_observables(st)
        rec = obs.as_record()
        vals.append(np.array([rec[k] for k in sorted(rec)
                              if isinstance(rec[k], float)]))
    scale = np.maximum(1.0, np.maximum(np.abs(vals[0]), np.abs(vals[1])))
    return float((np.abs(vals[0] - vals[1]) / scale).max())


def observables_with_truncation_check(params, n_max=3, limit=1e-6, joint=False):
    """Cascaded-state observables plus a truncation-stability flag.

    The flag is set when growing the basis by one photon moves any reported
    observable by more than `limit`; results should then be treated as
    truncation-limited and recomputed at higher n_max.
    """
    state = cascaded_evolution(FockBasis(n_max=n_max), params, joint=joint)
    obs = correlation_observables(state)
    delta = truncation_delta(params, n_max, joint=joint)
    obs.truncation_delta = delta
    obs.truncation_limited = bool(delta > limit)
    return obs
