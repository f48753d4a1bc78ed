"""Coupled transmon / TLS Hamiltonians in the drive rotating frame.

Modes are truncated oscillators.  The drift Hamiltonian is

    H0 = sum_i (w_i n_i + alpha_i/2 a_i^dag a_i^dag a_i a_i) + sum g (a^dag b + b^dag a)

and the drive on a target mode is ``(Omega a^dag + Omega^* a) / 2`` in a frame
rotating at the carrier for every mode (RWA).  All operators are dense numpy
arrays in rad/ns; the basis is the tensor-product bare basis with the first
mode most significant.
"""

from __future__ import annotations

import enum
import itertools
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import CapacityError, ConfigurationError, InvalidSpecError, NearResonanceWarning
from .pulseshape import PulseSpec, drive_waveform
from .units import ghz, mhz

MAX_DIMENSION = 64
LEVEL_NAMES = "gefhijklmn"


class ModeKind(str, enum.Enum):
    TRANSMON = "transmon"
    TLS = "tls"


@dataclass(frozen=True)
class ModeSpec:
    label: str
    kind: ModeKind
    frequency_ghz: float
    anharmonicity_mhz: float | None = None
    levels: int | None = None

    def __post_init__(self):
        kind = ModeKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.levels is None:
            object.__setattr__(self, "levels", 3 if kind is ModeKind.TRANSMON else 2)
        if self.levels < 2:
            raise InvalidSpecError(f"mode {self.label!r} needs at least 2 levels")
        if kind is ModeKind.TRANSMON and self.anharmonicity_mhz is None:
            raise InvalidSpecError(f"transmon {self.label!r} needs an anharmonicity")

    @property
    def frequency(self) -> float:
        return ghz(self.frequency_ghz)

    @property
    def anharmonicity(self) -> float:
        if self.kind is ModeKind.TLS or self.anharmonicity_mhz is None:
            return 0.0
        return mhz(self.anharmonicity_mhz)


@dataclass(frozen=True)
class CouplingSpec:
    mode_a: str
    mode_b: str
    g_mhz: float

    def __post_init__(self):
        if self.mode_a == self.mode_b:
            raise InvalidSpecError("a coupling needs two distinct modes")
        if not np.isreal(self.g_mhz):
            raise InvalidSpecError("coupling must be real")

    @property
    def g(self) -> float:
        return mhz(self.g_mhz)


@dataclass(frozen=True)
class SystemSpec:
    modes: tuple[ModeSpec, ...]
    couplings: tuple[CouplingSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "couplings", tuple(self.couplings))
        labels = [m.label for m in self.modes]
        if len(set(labels)) != len(labels):
            raise InvalidSpecError(f"duplicate mode labels in {labels}")
        for c in self.couplings:
            for lab in (c.mode_a, c.mode_b):
                if lab not in labels:
                    raise InvalidSpecError(f"coupling references unknown mode {lab!r}")
        if self.dimension > MAX_DIMENSION:
            raise CapacityError(f"Hilbert dimension {self.dimension} exceeds {MAX_DIMENSION}")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(m.levels for m in self.modes)

    @property
    def dimension(self) -> int:
        return int(np.prod(self.dims))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(m.label for m in self.modes)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown mode {label!r}") from None

    def mode(self, label: str) -> ModeSpec:
        return self.modes[self.index(label)]

    def bare_states(self) -> list[tuple[int, ...]]:
        return list(itertools.product(*(range(d) for d in self.dims)))

    def state_index(self, occupation: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(occupation), self.dims))

    def state_name(self, occupation: Sequence[int]) -> str:
        return "".join(LEVEL_NAMES[k] if k < len(LEVEL_NAMES) else f"({k})" for k in occupation)


def two_mode_system(target_ghz: float = 3.76, detuning_mhz: float = 45.0, g_mhz: float = 1.0,
                    target_alpha_mhz: float = -194.6, spectator_alpha_mhz: float | None = -193.2,
                    spectator_kind: str = "transmon", target_levels: int = 3,
                    spectator_levels: int | None = None,
                    labels: tuple[str, str] = ("Q0", "Q1")) -> SystemSpec:
    """Target plus one spectator sitting ``detuning_mhz`` above it."""
    target = ModeSpec(labels[0], ModeKind.TRANSMON, target_ghz, target_alpha_mhz, target_levels)
    kind = ModeKind(spectator_kind)
    spec = ModeSpec(labels[1], kind, target_ghz + detuning_mhz / 1e3,
                    spectator_alpha_mhz if kind is ModeKind.TRANSMON else None, spectator_levels)
    return SystemSpec((target, spec), (CouplingSpec(labels[0], labels[1], g_mhz),))


def ladder(levels: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, levels, dtype=float)), 1).astype(complex)


def _embed(system: SystemSpec, label: str, op: np.ndarray) -> np.ndarray:
    idx = system.index(label)
    out = np.array([[1.0 + 0j]])
    for k, d in enumerate(system.dims):
        out = np.kron(out, op if k == idx else np.eye(d))
    return out


def annihilation(system: SystemSpec, label: str) -> np.ndarray:
    return _embed(system, label, ladder(system.mode(label).levels))


def number_operator(system: SystemSpec, label: str | None = None) -> np.ndarray:
    """Number operator of one mode, or the total excitation number if ``label`` is None."""
    if label is not None:
        a = annihilation(system, label)
        return a.conj().T @ a
    return sum(number_operator(system, m.label) for m in system.modes)


def excitation_numbers(system: SystemSpec) -> np.ndarray:
    """Diagonal of the total number operator (bare basis)."""
    return np.array([sum(s) for s in system.bare_states()], dtype=float)


def build_drift(system: SystemSpec) -> np.ndarray:
    """Lab-frame drift Hamiltonian ``H0`` in rad/ns."""
    dim = system.dimension
    h = np.zeros((dim, dim), dtype=complex)
    for m in system.modes:
        a = annihilation(system, m.label)
        ad = a.conj().T
        h += m.frequency * ad @ a
        if m.anharmonicity:
            h += 0.5 * m.anharmonicity * ad @ ad @ a @ a
    for c in system.couplings:
        a = annihilation(system, c.mode_a)
        b = annihilation(system, c.mode_b)
        h += c.g * (a.conj().T @ b + b.conj().T @ a)
    return 0.5 * (h + h.conj().T)


@dataclass(frozen=True)
class DressedLevel:
    bare_label: str
    occupation: tuple[int, ...]
    energy: float
    overlap: float

    @property
    def ambiguous(self) -> bool:
        return self.overlap <= 0.5


def _eig(system: SystemSpec):
    vals, vecs = np.linalg.eigh(build_drift(system))
    return vals, vecs


def dressed_spectrum(system: SystemSpec) -> list[DressedLevel]:
    """Eigenlevels of ``H0`` labelled by their dominant bare state.

    Ties go to the lowest bare index.  Levels whose best overlap is <= 0.5
    are flagged ``ambiguous`` and a :class:`NearResonanceWarning` is issued.
    """
    vals, vecs = _eig(system)
    weights = np.abs(vecs) ** 2
    states = system.bare_states()
    levels = []
    for j in range(len(vals)):
        k = int(np.argmax(weights[:, j]))  # argmax returns the first (lowest) index on ties
        occ = states[k]
        levels.append(DressedLevel(system.state_name(occ), occ, float(vals[j]), float(weights[k, j])))
    if any(lv.ambiguous for lv in levels):
        warnings.warn("dressed labelling is ambiguous (overlap <= 0.5); system is near resonance",
                      NearResonanceWarning, stacklevel=2)
    return levels


def dressed_basis(system: SystemSpec) -> tuple[np.ndarray, np.ndarray]:
    """Dressed eigenvectors ordered like the bare basis, and their energies.

    Column ``k`` is the eigenvector assigned to bare state ``k`` (maximum-weight
    assignment, so the map is always a bijection).  Each column is phased so
    its bare component is real and positive.
    """
    vals, vecs = _eig(system)
    weights = np.abs(vecs) ** 2
    rows, cols = linear_sum_assignment(-weights)
    order = np.empty(len(vals), dtype=int)
    order[rows] = cols
    basis = vecs[:, order]
    diag = basis[np.arange(len(vals)), np.arange(len(vals))]
    basis = basis * (np.abs(diag) / np.where(diag == 0, 1, diag))[None, :]
    return basis, vals[order]


def dressed_energy(system: SystemSpec, occupation: Sequence[int]) -> float:
    _, energies = dressed_basis(system)
    return float(energies[system.state_index(occupation)])


def dressed_transition(system: SystemSpec, label: str) -> float:
    """Dressed ``|g..g> -> |..e..>`` frequency for exciting ``label`` alone (rad/ns)."""
    occ = [0] * len(system.modes)
    occ[system.index(label)] = 1
    _, energies = dressed_basis(system)
    return float(energies[system.state_index(occ)] - energies[0])


def bare_transition(system: SystemSpec, label: str) -> float:
    return system.mode(label).frequency


def detuning_report(system: SystemSpec, target: str, spectator: str) -> dict[str, float]:
    """Target/spectator detuning computed on bare and dressed levels (rad/ns)."""
    bare = bare_transition(system, spectator) - bare_transition(system, target)
    dressed = dressed_transition(system, spectator) - dressed_transition(system, target)
    return {"bare": bare, "dressed": dressed, "difference": dressed - bare}


def drive_term(system: SystemSpec, target: str) -> tuple[np.ndarray, np.ndarray]:
    """Operators multiplying ``Re Omega`` and ``Im Omega``: ``(a+a^dag)/2`` and ``i(a^dag-a)/2``."""
    a = annihilation(system, target)
    ad = a.conj().T
    return 0.5 * (a + ad), 0.5j * (ad - a)


@dataclass(frozen=True)
class RotatingGenerator:
    """``H(t) = static + Re Omega(t) x_op + Im Omega(t) y_op`` on ``[0, pulse.t_g]``."""

    static: np.ndarray = field(repr=False)
    x_op: np.ndarray = field(repr=False)
    y_op: np.ndarray = field(repr=False)
    pulse: PulseSpec | None = None

    @property
    def duration(self) -> float:
        return 0.0 if self.pulse is None else self.pulse.t_g

    def waveform(self, t):
        if self.pulse is None:
            return np.zeros_like(np.asarray(t, dtype=float), dtype=complex)
        return drive_waveform(self.pulse, t)

    def __call__(self, t):
        om = self.waveform(t)
        t_arr = np.asarray(t)
        if t_arr.ndim == 0:
            return self.static + om.real * self.x_op + om.imag * self.y_op
        return (self.static[None] + om.real[:, None, None] * self.x_op[None]
                + om.imag[:, None, None] * self.y_op[None])


def rotating_frame_static(system: SystemSpec, carrier: float) -> np.ndarray:
    """``H0 - carrier * N - E_ground``: drift in the carrier frame, ground at zero."""
    h = build_drift(system)
    ground = float(np.linalg.eigvalsh(h)[0])
    return h - carrier * number_operator(system) - ground * np.eye(system.dimension)


def rotating_generator(system: SystemSpec, carrier: float, pulse: PulseSpec | None,
                       target: str, leaks: dict[str, float] | None = None,
                       max_offset: float = ghz(1.0)) -> RotatingGenerator:
    """Time-dependent generator in the frame rotating at ``carrier`` (rad/ns).

    ``leaks`` maps spectator labels to a direct-drive coefficient ``nu``: the
    spectator then also sees ``nu * Omega(t)`` (classical microwave crosstalk).
    """
    if abs(carrier - dressed_transition(system, target)) > max_offset:
        raise ConfigurationError("carrier is more than 1 GHz from the target transition")
    x_op, y_op = drive_term(system, target)
    for label, nu in (leaks or {}).items():
        if nu:
            lx, ly = drive_term(system, label)
            x_op = x_op + nu * lx
            y_op = y_op + nu * ly
    return RotatingGenerator(rotating_frame_static(system, carrier), x_op, y_op, pulse)


def to_dressed(system: SystemSpec, op: np.ndarray) -> np.ndarray:
    basis, _ = dressed_basis(system)
    return basis.conj().T @ op @ basis
