"""Unitary propagation, gate-sequence evolution and small qubit channels."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import ConfigurationError, IntegrityError, ParameterError, ResetDegenerateError
from .model import (RotatingGenerator, SystemSpec, dressed_basis, dressed_transition,
                    excitation_numbers, rotating_generator)
from .pulseshape import PulseSpec

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-9


@dataclass(frozen=True)
class PropagationSettings:
    dt: float = 0.05
    method: str = "piecewise-exponential"
    tolerance: float = UNITARY_TOL

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError("dt must be positive")
        if self.method != "piecewise-exponential":
            raise ParameterError(f"unknown propagation method {self.method!r}")


def _check_hermitian(op: np.ndarray, name: str) -> None:
    scale = max(1.0, float(np.max(np.abs(op))))
    if np.max(np.abs(op - op.conj().T)) > HERMITIAN_TOL * scale:
        raise IntegrityError(f"{name} is not Hermitian")


def _expm_hermitian(h: np.ndarray, tau: float) -> np.ndarray:
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * tau)[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


def _ordered_product(us: np.ndarray) -> np.ndarray:
    """``us[n-1] @ ... @ us[1] @ us[0]`` by pairwise batched reduction."""
    while len(us) > 1:
        if len(us) % 2:
            tail = us[-1:]
            us = us[:-1]
        else:
            tail = None
        us = us[1::2] @ us[0::2]
        if tail is not None:
            us = np.concatenate([us, tail])
    return us[0]


def propagate_unitary(generator: RotatingGenerator, duration: float | None = None,
                      settings: PropagationSettings = PropagationSettings()) -> np.ndarray:
    """Midpoint-rule product of exact exponentials over uniform steps of at most ``dt``."""
    duration = generator.duration if duration is None else float(duration)
    if duration < 0:
        raise ParameterError("duration must be non-negative")
    for op, name in ((generator.static, "static generator"), (generator.x_op, "drive x operator"),
                     (generator.y_op, "drive y operator")):
        _check_hermitian(op, name)
    dim = generator.static.shape[0]
    if duration == 0:
        return np.eye(dim, dtype=complex)
    if generator.pulse is None:
        return _expm_hermitian(generator.static, duration)
    n = max(1, int(np.ceil(duration / settings.dt - 1e-9)))
    h = duration / n
    tm = (np.arange(n) + 0.5) * h
    hs = generator(np.minimum(tm, generator.duration))
    u = _ordered_product(_expm_hermitian(hs, h))
    if np.max(np.abs(u.conj().T @ u - np.eye(dim))) > settings.tolerance:
        raise IntegrityError("propagator lost unitarity")
    return u


# --- sequence items -------------------------------------------------------

@dataclass(frozen=True)
class Pulse:
    spec: PulseSpec


@dataclass(frozen=True)
class Idle:
    tau: float


@dataclass(frozen=True)
class VirtualZ:
    phi: float
    mode: str


@dataclass(frozen=True)
class IdealSwap:
    mode_a: str
    mode_b: str


@dataclass(frozen=True)
class ProjectGround:
    mode: str


SequenceItem = Union[Pulse, Idle, VirtualZ, IdealSwap, ProjectGround]


def ground_state(system: SystemSpec) -> np.ndarray:
    psi = np.zeros(system.dimension, dtype=complex)
    psi[0] = 1.0
    return psi


def basis_state(system: SystemSpec, occupation: Sequence[int]) -> np.ndarray:
    psi = np.zeros(system.dimension, dtype=complex)
    psi[system.state_index(occupation)] = 1.0
    return psi


def swap_permutation(system: SystemSpec, mode_a: str, mode_b: str) -> np.ndarray:
    """Index map exchanging the occupations of two modes where both can hold them."""
    ia, ib = system.index(mode_a), system.index(mode_b)
    shared = min(system.dims[ia], system.dims[ib])
    perm = np.arange(system.dimension)
    for k, occ in enumerate(system.bare_states()):
        if occ[ia] < shared and occ[ib] < shared:
            new = list(occ)
            new[ia], new[ib] = occ[ib], occ[ia]
            perm[k] = system.state_index(new)
    return perm


def mode_populations(system: SystemSpec, state: np.ndarray, mode: str) -> np.ndarray:
    """Level populations of one mode (partial trace over the others)."""
    probs = np.abs(np.asarray(state)) ** 2
    probs = probs.reshape(system.dims)
    idx = system.index(mode)
    axes = tuple(k for k in range(len(system.dims)) if k != idx)
    return probs.sum(axis=axes)


def excited_population(system: SystemSpec, state: np.ndarray, mode: str) -> float:
    """``1 - P(ground)``: every non-ground level counts as excited."""
    return float(1.0 - mode_populations(system, state, mode)[0])


class DrivenSystem:
    """A system driven on one target mode in the frame rotating at ``carrier``.

    Holds the rotating-frame operators, the dressed basis and a bounded cache
    of pulse propagators so that repeated gates cost one matrix product.
    Virtual-Z gates are exact frame rotations ``exp(i phi N)`` with ``N`` the
    total excitation number: every drive shares the carrier frame and every
    non-pulse item conserves ``N``.
    """

    def __init__(self, system: SystemSpec, target: str, carrier: float | None = None,
                 leaks: dict[str, float] | None = None,
                 settings: PropagationSettings = PropagationSettings(), cache_size: int = 512):
        self.system = system
        self.target = target
        system.index(target)
        self.carrier = dressed_transition(system, target) if carrier is None else float(carrier)
        self.leaks = dict(leaks or {})
        self.settings = settings
        gen = rotating_generator(system, self.carrier, None, target, self.leaks)
        self.static, self.x_op, self.y_op = gen.static, gen.x_op, gen.y_op
        self.numbers = excitation_numbers(system)
        self.basis, energies = dressed_basis(system)
        # rotating-frame energies of the dressed states
        self.frame_energies = np.real(np.einsum("ij,jk,ki->i", self.basis.conj().T, self.static, self.basis))
        self._cache: OrderedDict[PulseSpec, np.ndarray] = OrderedDict()
        self._cache_size = cache_size

    @property
    def dimension(self) -> int:
        return self.system.dimension

    def generator(self, pulse: PulseSpec | None) -> RotatingGenerator:
        return RotatingGenerator(self.static, self.x_op, self.y_op, pulse)

    def pulse_unitary(self, pulse: PulseSpec) -> np.ndarray:
        u = self._cache.get(pulse)
        if u is None:
            u = propagate_unitary(self.generator(pulse), settings=self.settings)
            self._cache[pulse] = u
            if len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        else:
            self._cache.move_to_end(pulse)
        return u

    def idle_unitary(self, tau: float) -> np.ndarray:
        if tau < 0:
            raise ParameterError("idle time must be non-negative")
        phases = np.exp(-1j * self.frame_energies * tau)
        return (self.basis * phases[None, :]) @ self.basis.conj().T

    def frame_phase(self, phi: float) -> np.ndarray:
        """Diagonal of the virtual-Z operator ``exp(i phi N)``."""
        return np.exp(1j * phi * self.numbers)

    def check_vz_mode(self, mode: str) -> None:
        if mode != self.target:
            raise ConfigurationError(f"virtual-Z on {mode!r}, but only {self.target!r} is driven")

    def to_dressed(self, state: np.ndarray) -> np.ndarray:
        return self.basis.conj().T @ state

    def from_dressed(self, coords: np.ndarray) -> np.ndarray:
        return self.basis @ coords

    def populations(self, state: np.ndarray, mode: str) -> np.ndarray:
        """Level populations of ``mode`` read out in the dressed (idle) basis."""
        return mode_populations(self.system, self.to_dressed(state), mode)

    def excited(self, state: np.ndarray, mode: str) -> float:
        return float(1.0 - self.populations(state, mode)[0])

    def dressed_projector_mask(self, mode: str) -> np.ndarray:
        """Boolean mask over dressed coordinates where ``mode`` is in its ground level."""
        idx = self.system.index(mode)
        return np.array([occ[idx] == 0 for occ in self.system.bare_states()])


def item_unitary(driven: DrivenSystem, item: SequenceItem) -> np.ndarray:
    if isinstance(item, Pulse):
        return driven.pulse_unitary(item.spec)
    if isinstance(item, Idle):
        return driven.idle_unitary(item.tau)
    if isinstance(item, VirtualZ):
        driven.check_vz_mode(item.mode)
        return np.diag(driven.frame_phase(item.phi))
    if isinstance(item, IdealSwap):
        perm = swap_permutation(driven.system, item.mode_a, item.mode_b)
        p = np.eye(driven.dimension)[perm]
        return driven.basis @ p @ driven.basis.conj().T
    raise ConfigurationError(f"{type(item).__name__} is not unitary")


def sequence_unitary(driven: DrivenSystem, items: Iterable[SequenceItem]) -> np.ndarray:
    u = np.eye(driven.dimension, dtype=complex)
    for item in items:
        u = item_unitary(driven, item) @ u
    return u


def evolve_sequence(driven: DrivenSystem, initial: np.ndarray,
                    items: Iterable[SequenceItem]) -> np.ndarray:
    """Apply the items in order to a state vector (bare-basis coordinates).

    Swaps and ground projections act on dressed labels, i.e. in the basis
    where the system idles and is read out.
    """
    psi = np.array(initial, dtype=complex)
    for item in items:
        if isinstance(item, VirtualZ):
            driven.check_vz_mode(item.mode)
            psi = driven.frame_phase(item.phi) * psi
        elif isinstance(item, Pulse):
            psi = driven.pulse_unitary(item.spec) @ psi
        elif isinstance(item, Idle):
            psi = driven.idle_unitary(item.tau) @ psi
        elif isinstance(item, IdealSwap):
            perm = swap_permutation(driven.system, item.mode_a, item.mode_b)
            coords = driven.to_dressed(psi)
            new = np.empty_like(coords)
            new[perm] = coords
            psi = driven.from_dressed(new)
        elif isinstance(item, ProjectGround):
            coords = driven.to_dressed(psi)
            coords = np.where(driven.dressed_projector_mask(item.mode), coords, 0.0)
            norm = np.linalg.norm(coords)
            if norm < 1e-12:
                raise ResetDegenerateError(f"projecting {item.mode!r} to ground leaves no state")
            psi = driven.from_dressed(coords / norm)
        else:
            raise ConfigurationError(f"unknown sequence item {item!r}")
    return psi


# --- single-qubit channels used by the excitation-rate model ---------------

@dataclass(frozen=True)
class AmplitudeDamping:
    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ParameterError(f"damping rate must lie in [0, 1], got {self.gamma}")


@dataclass(frozen=True)
class XYTwirl:
    gamma_e: float

    def __post_init__(self):
        if not 0.0 <= self.gamma_e <= 1.0:
            raise ParameterError(f"excitation rate must lie in [0, 1], got {self.gamma_e}")


_PX = np.array([[0, 1], [1, 0]], dtype=complex)
_PY = np.array([[0, -1j], [1j, 0]], dtype=complex)


def apply_channel(rho: np.ndarray, channel: AmplitudeDamping | XYTwirl) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if isinstance(channel, AmplitudeDamping):
        g = channel.gamma
        e1 = np.array([[1, 0], [0, np.sqrt(1 - g)]], dtype=complex)
        e2 = np.array([[0, np.sqrt(g)], [0, 0]], dtype=complex)
        return e1 @ rho @ e1.conj().T + e2 @ rho @ e2.conj().T
    if isinstance(channel, XYTwirl):
        ge = channel.gamma_e
        return (1 - ge) * rho + 0.5 * ge * (_PX @ rho @ _PX + _PY @ rho @ _PY)
    raise ParameterError(f"unknown channel {channel!r}")
