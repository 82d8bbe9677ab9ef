# -*- coding: utf-8 -*-
"""Full-order systems: representations, generators, file ingestion and reference simulators."""
import logging
import math
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from .errors import (
    ConsistencyError,
    DimensionError,
    DivergenceError,
    DomainError,
    ParseError,
)
from .numerics import as_matrix, spectral_abscissa, zoh

logger = logging.getLogger(__name__)

SYSTEM_TYPES = ("parabolic_pde", "hyperbolic_pde", "elliptic_pde", "ode_system")
LINEARITY_TYPES = ("LTI", "LTV", "nonlinear")
EQUILIBRIUM_TOLERANCE = 1e-8


@dataclass(frozen=True)
class LtiSystem:
    """Linear time-invariant full-order model x' = Ax + Bu, y = Cx."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    labels: Optional[Dict[str, List[str]]] = None
    parameters: Dict[str, float] = field(default_factory=dict)
    builder: Optional[Callable[..., "LtiSystem"]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        A = as_matrix("A", self.A, square=True)
        B = as_matrix("B", self.B)
        C = as_matrix("C", self.C)
        if B.shape[0] != A.shape[0]:
            raise DimensionError(f"B has {B.shape[0]} rows but A is {A.shape[0]}x{A.shape[0]}")
        if C.shape[1] != A.shape[0]:
            raise DimensionError(f"C has {C.shape[1]} columns but A is {A.shape[0]}x{A.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    is_linear = True

    @property
    def n(self) -> int:
        """State dimension."""
        return self.A.shape[0]

    @property
    def m(self) -> int:
        """Input count."""
        return self.B.shape[1]

    @property
    def p(self) -> int:
        """Output count."""
        return self.C.shape[0]

    @property
    def x0(self) -> np.ndarray:
        """Nominal initial state (the origin)."""
        return np.zeros(self.n)

    def vector_field(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Evaluate Ax + Bu."""
        return self.A @ x + self.B @ u

    def output(self, x: np.ndarray) -> np.ndarray:
        """Evaluate Cx (columns of x are separate states)."""
        return self.C @ x


@dataclass(frozen=True)
class NonlinearSystem:
    """Nonlinear full-order model x' = f(x, u), y = h(x).

    When ``A``, ``B`` and ``nonlinear_term`` are given, f(x, u) equals
    A x + B u + nonlinear_term(x) and the reduced model may interpolate the
    nonlinear term.
    """

    n: int
    m: int
    p: int
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    h: Callable[[np.ndarray], np.ndarray]
    x_eq: np.ndarray
    u_eq: np.ndarray
    A: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    C: Optional[np.ndarray] = None
    nonlinear_term: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    parameters: Dict[str, float] = field(default_factory=dict)
    builder: Optional[Callable[..., Any]] = field(default=None, repr=False, compare=False)

    is_linear = False

    def __post_init__(self):
        x_eq = np.asarray(self.x_eq, dtype=float).reshape(self.n)
        u_eq = np.asarray(self.u_eq, dtype=float).reshape(self.m)
        object.__setattr__(self, "x_eq", x_eq)
        object.__setattr__(self, "u_eq", u_eq)
        residual = float(np.linalg.norm(self.f(x_eq, u_eq)))
        if residual > EQUILIBRIUM_TOLERANCE * (1.0 + np.linalg.norm(x_eq)):
            raise DomainError(f"declared equilibrium has residual {residual:.3e}")

    @property
    def x0(self) -> np.ndarray:
        """Nominal initial state (the declared equilibrium)."""
        return self.x_eq.copy()

    def vector_field(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Evaluate f(x, u)."""
        return self.f(x, u)

    def output(self, x: np.ndarray) -> np.ndarray:
        """Evaluate h on a state or on the columns of a state matrix."""
        if x.ndim == 1:
            return np.asarray(self.h(x), dtype=float)
        return np.column_stack([self.h(column) for column in x.T])


FullOrderSystem = Union[LtiSystem, NonlinearSystem]


@dataclass
class SystemDescriptor:
    """Structured system description used for method selection."""

    system_type: str
    physics: str
    linearity: str
    N: int
    m: int
    p: int
    tau_slow: float
    tau_fast: float
    u_min: float
    u_max: float
    objective: str = "tracking"
    error_tolerance: float = 2.0
    nonlinear_terms: List[str] = field(default_factory=list)
    polynomial_degree: Optional[int] = None
    f_s_hz: Optional[float] = None
    commanded_amplitude: Optional[float] = None
    rom_method: Optional[str] = None
    controller_type: Optional[str] = None
    rom_order_range: Optional[Tuple[int, int]] = None
    rho: Optional[float] = None
    y_max: Optional[List[float]] = None

    def __post_init__(self):
        if self.system_type not in SYSTEM_TYPES:
            raise DomainError(f"unknown system_type '{self.system_type}'")
        if self.linearity not in LINEARITY_TYPES:
            raise DomainError(f"unknown linearity type '{self.linearity}'")
        if min(self.N, self.m, self.p) < 1:
            raise DomainError(f"dimensions must be positive, got N={self.N} m={self.m} p={self.p}")
        if not 0 < self.tau_fast <= self.tau_slow:
            raise DomainError(
                f"time constants must satisfy 0 < tau_fast <= tau_slow, "
                f"got {self.tau_fast} and {self.tau_slow}"
            )
        if not self.u_min < self.u_max:
            raise DomainError(f"u_min {self.u_min} must be below u_max {self.u_max}")

    @property
    def f_max(self) -> float:
        """Highest system frequency in Hz."""
        return 1.0 / (2.0 * math.pi * self.tau_fast)

    def sampling_frequency(self, factor: float = 20.0) -> float:
        """Identification sampling rate: the override when it is fast enough, else factor*f_max."""
        minimum = factor * self.f_max
        if self.f_s_hz is None:
            return minimum
        if self.f_s_hz < minimum:
            logger.warning(
                "Descriptor f_s %.3f Hz is below %.0f*f_max, using %.3f Hz",
                self.f_s_hz,
                factor,
                minimum,
            )
            return minimum
        return float(self.f_s_hz)

    def sampling_bound(self, factor: float = 20.0, tau_fraction: float = 0.1) -> float:
        """Largest admissible ROM sampling period."""
        return min(tau_fraction * self.tau_fast, 1.0 / (factor * self.f_max))

    @property
    def u_bound(self) -> float:
        """Largest input magnitude."""
        return max(abs(self.u_min), abs(self.u_max))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SystemDescriptor":
        """Build a descriptor from the central-output JSON shape."""
        try:
            linearity = data.get("linearity", {"type": "LTI"})
            if isinstance(linearity, str):
                linearity = {"type": linearity}
            details = linearity.get("details", {}) or {}
            dims = data["dimensions"]
            constants = data["time_constants"]
            constraints = data.get("constraints", {})
            bounds = constraints["input_bounds"]
            objective = data.get("control_objective", {})
            sampling = data.get("sampling_requirements", {})
            selections = data.get("method_selections", {})
            design = data.get("design_parameters", {})
            order_range = design.get("rom_order_range")
            return cls(
                system_type=data["system_type"],
                physics=data.get("physics", "thermal"),
                linearity=linearity["type"],
                nonlinear_terms=list(details.get("nonlinear_terms", [])),
                polynomial_degree=details.get("polynomial_degree"),
                N=int(dims["N"]),
                m=int(dims["m"]),
                p=int(dims["p"]),
                tau_slow=float(constants["tau_slow"]),
                tau_fast=float(constants["tau_fast"]),
                objective=objective.get("type", "tracking"),
                error_tolerance=float(objective.get("error_tolerance", 2.0)),
                u_min=float(bounds["u_min"]),
                u_max=float(bounds["u_max"]),
                commanded_amplitude=constraints.get("commanded_amplitude"),
                f_s_hz=sampling.get("f_s_recommended_hz"),
                rom_method=selections.get("rom_method"),
                controller_type=selections.get("controller_type"),
                rom_order_range=tuple(order_range) if order_range else None,
                rho=(design.get("lqr_weights") or {}).get("rho"),
                y_max=data.get("output_ranges"),
            )
        except KeyError as error:
            logger.error("Descriptor is missing field: %s", error)
            raise DomainError(f"descriptor is missing field {error}") from error

    def to_dict(self) -> Dict[str, Any]:
        """Serialize to the central-output JSON shape."""
        f_s = self.sampling_frequency()
        data: Dict[str, Any] = {
            "system_type": self.system_type,
            "physics": self.physics,
            "linearity": {
                "type": self.linearity,
                "details": {
                    "time_varying": self.linearity == "LTV",
                    "nonlinear_terms": list(self.nonlinear_terms),
                    "polynomial_degree": self.polynomial_degree,
                },
            },
            "dimensions": {"N": self.N, "m": self.m, "p": self.p},
            "time_constants": {
                "tau_slow": self.tau_slow,
                "tau_fast": self.tau_fast,
                "ratio": self.tau_slow / self.tau_fast,
            },
            "sampling_requirements": {"f_s_recommended_hz": f_s, "dt_s": 1.0 / f_s},
            "frequency_content": {"f_max_hz": self.f_max, "dominant_modes_hz": []},
            "control_objective": {"type": self.objective, "error_tolerance": self.error_tolerance},
            "constraints": {"input_bounds": {"u_min": self.u_min, "u_max": self.u_max}},
        }
        if self.commanded_amplitude is not None:
            data["constraints"]["commanded_amplitude"] = self.commanded_amplitude
        if self.rom_method or self.controller_type:
            data["method_selections"] = {
                "rom_method": self.rom_method,
                "controller_type": self.controller_type,
            }
        if self.rom_order_range or self.rho is not None:
            data["design_parameters"] = {}
            if self.rom_order_range:
                data["design_parameters"]["rom_order_range"] = list(self.rom_order_range)
            if self.rho is not None:
                data["design_parameters"]["lqr_weights"] = {"rho": self.rho}
        if self.y_max is not None:
            data["output_ranges"] = list(self.y_max)
        return data


@dataclass
class Trajectory:
    """Simulated trajectory; column k of states/outputs is time k*dt."""

    states: np.ndarray
    outputs: np.ndarray
    inputs: np.ndarray
    dt: float

    @property
    def steps(self) -> int:
        """Number of propagated steps."""
        return self.states.shape[1] - 1

    @property
    def times(self) -> np.ndarray:
        """Sample instants in seconds."""
        return self.dt * np.arange(self.states.shape[1])


def _evenly_spaced(count: int, n: int) -> List[int]:
    return [int(round((j + 1) * (n + 1) / (count + 1))) - 1 for j in range(count)]


def make_heat_chain(
    n: int,
    diffusivity: float = 0.01,
    n_inputs: int = 1,
    n_outputs: int = 1,
    spacing: Optional[float] = None,
) -> LtiSystem:
    """Finite-difference 1-D heat equation with Dirichlet ends.

    Grid spacing defaults to 1/(n+1) (unit rod). Inputs are point sources and
    outputs point sensors at evenly spaced grid nodes.
    """
    if n < 3:
        raise DomainError(f"heat chain needs at least 3 nodes, got {n}")
    if diffusivity <= 0:
        raise DomainError(f"diffusivity must be positive, got {diffusivity}")
    if not 1 <= n_inputs <= n or not 1 <= n_outputs <= n:
        raise DomainError(f"input/output counts must lie in [1, {n}]")
    h = spacing if spacing is not None else 1.0 / (n + 1)
    coeff = diffusivity / h**2
    off = np.ones(n - 1)
    A = coeff * (np.diag(-2.0 * np.ones(n)) + np.diag(off, 1) + np.diag(off, -1))
    B = np.zeros((n, n_inputs))
    for column, index in enumerate(_evenly_spaced(n_inputs, n)):
        B[index, column] = 1.0
    C = np.zeros((n_outputs, n))
    for row, index in enumerate(_evenly_spaced(n_outputs, n)):
        C[row, index] = 1.0
    if np.max(np.linalg.eigvalsh(A)) >= 0:
        raise DomainError("heat chain operator is not Hurwitz")
    builder = partial(make_heat_chain, n, n_inputs=n_inputs, n_outputs=n_outputs, spacing=spacing)
    return LtiSystem(
        A=A,
        B=B,
        C=C,
        labels={
            "states": [f"T{i}" for i in range(n)],
            "inputs": [f"q{j}" for j in range(n_inputs)],
            "outputs": [f"y{i}" for i in range(n_outputs)],
        },
        parameters={"diffusivity": diffusivity},
        builder=builder,
    )


def make_spring_mass_chain(
    n_masses: int,
    stiffness: float = 1.0,
    damping: float = 0.1,
    cubic_coeff: float = 0.0,
    n_inputs: int = 1,
    mass: float = 1.0,
    n_outputs: Optional[int] = None,
) -> FullOrderSystem:
    """Fixed-fixed chain of masses with optional cubic springs and dashpots to ground.

    State is [positions; velocities]. Forces act on evenly spaced masses and the
    outputs are the positions of evenly spaced masses.
    """
    if n_masses < 2:
        raise DomainError(f"spring chain needs at least 2 masses, got {n_masses}")
    if stiffness <= 0 or mass <= 0 or damping < 0 or cubic_coeff < 0:
        raise DomainError("stiffness and mass must be positive, damping and cubic_coeff >= 0")
    n_outputs = n_inputs if n_outputs is None else n_outputs
    n = n_masses
    K = stiffness * (2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1))
    A = np.block([[np.zeros((n, n)), np.eye(n)], [-K / mass, -(damping / mass) * np.eye(n)]])
    B = np.zeros((2 * n, n_inputs))
    for column, index in enumerate(_evenly_spaced(n_inputs, n)):
        B[n + index, column] = 1.0 / mass
    C = np.zeros((n_outputs, 2 * n))
    for row, index in enumerate(_evenly_spaced(n_outputs, n)):
        C[row, index] = 1.0
    parameters = {"stiffness": stiffness, "damping": damping, "cubic_coeff": cubic_coeff}
    builder = partial(
        make_spring_mass_chain,
        n_masses,
        n_inputs=n_inputs,
        mass=mass,
        n_outputs=n_outputs,
    )
    labels = {
        "states": [f"q{i}" for i in range(n)] + [f"v{i}" for i in range(n)],
        "inputs": [f"F{j}" for j in range(n_inputs)],
        "outputs": [f"y{i}" for i in range(n_outputs)],
    }
    if cubic_coeff == 0:
        return LtiSystem(A=A, B=B, C=C, labels=labels, parameters=parameters, builder=builder)

    def cubic_forces(x: np.ndarray) -> np.ndarray:
        positions = np.concatenate(([0.0], x[:n], [0.0]))
        tension = cubic_coeff * np.diff(positions) ** 3
        return np.concatenate((np.zeros(n), np.diff(tension) / mass))

    return NonlinearSystem(
        n=2 * n,
        m=n_inputs,
        p=n_outputs,
        f=lambda x, u: A @ x + B @ u + cubic_forces(x),
        h=lambda x: C @ x,
        x_eq=np.zeros(2 * n),
        u_eq=np.zeros(n_inputs),
        A=A,
        B=B,
        C=C,
        nonlinear_term=cubic_forces,
        parameters=parameters,
        builder=builder,
    )


def perturb(system: FullOrderSystem, factors: Mapping[str, float]) -> FullOrderSystem:
    """Rebuild ``system`` with named parameters scaled by multiplicative factors.

    Systems without a generator accept the pseudo-parameter ``A`` which scales
    the state matrix.
    """
    if not factors:
        return system
    if system.builder is None or "A" in factors:
        if set(factors) != {"A"} or not isinstance(system, LtiSystem):
            raise DomainError(f"system has no generator parameters to perturb: {sorted(factors)}")
        return LtiSystem(A=system.A * factors["A"], B=system.B, C=system.C, labels=system.labels)
    unknown = set(factors) - set(system.parameters)
    if unknown:
        raise DomainError(f"unknown system parameters {sorted(unknown)}")
    scaled = {name: value * factors.get(name, 1.0) for name, value in system.parameters.items()}
    logger.debug("Perturbing system parameters %s -> %s", system.parameters, scaled)
    return system.builder(**scaled)


_MM_FORMATS = ("coordinate", "array")
_MM_FIELDS = ("real", "integer", "double")
_MM_SYMMETRIES = ("general", "symmetric")


def read_matrix_market(path: Union[str, Path]) -> np.ndarray:
    """Read a dense matrix from a Matrix Market file (1-based, column-major arrays)."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    if not lines:
        raise ParseError(f"{path.name} is empty", 1)

    header = lines[0].split()
    if len(header) != 5 or header[0].lower() != "%%matrixmarket" or header[1].lower() != "matrix":
        raise ParseError(f"{path.name}: malformed header '{lines[0]}'", 1)
    fmt, field_type, symmetry = (token.lower() for token in header[2:])
    if fmt not in _MM_FORMATS or field_type not in _MM_FIELDS or symmetry not in _MM_SYMMETRIES:
        raise ParseError(f"{path.name}: unsupported header '{lines[0]}'", 1)

    body = [
        (number, text.strip())
        for number, text in enumerate(lines[1:], start=2)
        if text.strip() and not text.lstrip().startswith("%")
    ]
    if not body:
        raise ParseError(f"{path.name}: missing size line", len(lines))

    size_line, size_text = body[0]
    try:
        sizes = [int(token) for token in size_text.split()]
    except ValueError as error:
        raise ParseError(f"{path.name}: bad size line '{size_text}'", size_line) from error
    expected_sizes = 3 if fmt == "coordinate" else 2
    if len(sizes) != expected_sizes or min(sizes[:2]) < 1:
        raise ParseError(f"{path.name}: bad size line '{size_text}'", size_line)
    rows, cols = sizes[0], sizes[1]
    if symmetry == "symmetric" and rows != cols:
        raise ParseError(f"{path.name}: symmetric matrix must be square", size_line)

    matrix = np.zeros((rows, cols))
    entries = body[1:]
    if fmt == "coordinate":
        nnz = sizes[2]
        if len(entries) != nnz:
            raise ParseError(
                f"{path.name}: expected {nnz} entries, found {len(entries)}", len(lines)
            )
        for number, text in entries:
            tokens = text.split()
            try:
                i, j, value = int(tokens[0]), int(tokens[1]), float(tokens[2])
            except (IndexError, ValueError) as error:
                raise ParseError(f"{path.name}: bad entry '{text}'", number) from error
            if not (1 <= i <= rows and 1 <= j <= cols):
                raise ParseError(f"{path.name}: index ({i}, {j}) out of range", number)
            matrix[i - 1, j - 1] = value
            if symmetry == "symmetric":
                matrix[j - 1, i - 1] = value
        return matrix

    if symmetry == "symmetric":
        positions = [(i, j) for j in range(cols) for i in range(j, rows)]
    else:
        positions = [(i, j) for j in range(cols) for i in range(rows)]
    if len(entries) != len(positions):
        raise ParseError(
            f"{path.name}: expected {len(positions)} values, found {len(entries)}", len(lines)
        )
    for (i, j), (number, text) in zip(positions, entries):
        try:
            value = float(text.split()[0])
        except (IndexError, ValueError) as error:
            raise ParseError(f"{path.name}: bad value '{text}'", number) from error
        matrix[i, j] = value
        if symmetry == "symmetric":
            matrix[j, i] = value
    return matrix


def load_matrix_market(
    a_path: Union[str, Path], b_path: Union[str, Path], c_path: Union[str, Path]
) -> LtiSystem:
    """Assemble an LtiSystem from three Matrix Market files."""
    A = read_matrix_market(a_path)
    B = read_matrix_market(b_path)
    C = read_matrix_market(c_path)
    if A.shape[0] != A.shape[1]:
        raise ConsistencyError(f"A must be square, got {A.shape}")
    if B.shape[0] != A.shape[0]:
        raise ConsistencyError(f"B has {B.shape[0]} rows, A has {A.shape[0]}")
    if C.shape[1] != A.shape[0]:
        raise ConsistencyError(f"C has {C.shape[1]} columns, A has {A.shape[0]}")
    logger.info("Loaded system n=%d m=%d p=%d from %s", A.shape[0], B.shape[1], C.shape[0], a_path)
    return LtiSystem(A=A, B=B, C=C)


def _input_matrix(u, steps: int, m: int) -> np.ndarray:
    U = np.asarray(u, dtype=float)
    if U.ndim == 1:
        U = U.reshape(-1, 1) if m == 1 else U.reshape(1, -1)
    if U.shape[0] == 1 and steps > 1:
        U = np.repeat(U, steps, axis=0)
    if U.shape[1] != m or U.shape[0] < steps:
        raise DimensionError(
            f"input sequence shape {U.shape} cannot drive {steps} steps of {m} inputs"
        )
    return U[:steps]


def simulate_lti(
    system: LtiSystem, u, x0: Optional[np.ndarray] = None, dt: float = 0.1, steps: int = 1
) -> Trajectory:
    """Exact zero-order-hold propagation of an LTI system."""
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    U = _input_matrix(u, steps, system.m)
    A_d, B_d = zoh(system.A, system.B, dt)
    forcing = B_d @ U.T
    states = np.empty((system.n, steps + 1))
    states[:, 0] = system.x0 if x0 is None else np.asarray(x0, dtype=float)
    for k in range(steps):
        states[:, k + 1] = A_d @ states[:, k] + forcing[:, k]
        if not np.all(np.isfinite(states[:, k + 1])):
            raise DivergenceError("LTI simulation diverged", k + 1)
    return Trajectory(states=states, outputs=system.C @ states, inputs=U, dt=dt)


def rk4_step(f: Callable, x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step with the input held."""
    k1 = f(x, u)
    k2 = f(x + 0.5 * dt * k1, u)
    k3 = f(x + 0.5 * dt * k2, u)
    k4 = f(x + dt * k3, u)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate_nonlinear(
    system: NonlinearSystem,
    u,
    x0: Optional[np.ndarray] = None,
    dt: float = 0.01,
    steps: int = 1,
    tau_fast: Optional[float] = None,
) -> Trajectory:
    """Fourth-order Runge-Kutta propagation of a nonlinear system."""
    if dt <= 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if tau_fast is not None and dt > 0.1 * tau_fast * (1.0 + 1e-12):
        raise DomainError(f"dt={dt} exceeds 0.1*tau_fast={0.1 * tau_fast}")
    U = _input_matrix(u, steps, system.m)
    states = np.empty((system.n, steps + 1))
    states[:, 0] = system.x0 if x0 is None else np.asarray(x0, dtype=float)
    for k in range(steps):
        states[:, k + 1] = rk4_step(system.f, states[:, k], U[k], dt)
        if not np.all(np.isfinite(states[:, k + 1])):
            raise DivergenceError("nonlinear simulation diverged", k + 1)
    return Trajectory(states=states, outputs=system.output(states), inputs=U, dt=dt)


def simulate(system: FullOrderSystem, u, x0=None, dt: float = 0.1, steps: int = 1, tau_fast=None):
    """Dispatch to the exact LTI propagator or the RK4 integrator."""
    if isinstance(system, LtiSystem):
        return simulate_lti(system, u, x0=x0, dt=dt, steps=steps)
    substeps = 1 if tau_fast is None else max(1, int(math.ceil(dt / (0.1 * tau_fast) - 1e-9)))
    if substeps == 1:
        return simulate_nonlinear(system, u, x0=x0, dt=dt, steps=steps, tau_fast=tau_fast)
    U = _input_matrix(u, steps, system.m)
    fine = simulate_nonlinear(
        system, np.repeat(U, substeps, axis=0), x0=x0, dt=dt / substeps, steps=steps * substeps
    )
    states = fine.states[:, ::substeps]
    return Trajectory(states=states, outputs=system.output(states), inputs=U, dt=dt)


def linearize(
    system: FullOrderSystem, x0: Optional[np.ndarray] = None, u0: Optional[np.ndarray] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Central finite-difference Jacobians of f at (x0, u0)."""
    if isinstance(system, LtiSystem):
        return system.A.copy(), system.B.copy()
    x0 = system.x_eq if x0 is None else np.asarray(x0, dtype=float)
    u0 = system.u_eq if u0 is None else np.asarray(u0, dtype=float)

    def jacobian(func, point):
        columns = []
        for j in range(point.size):
            step = 1e-6 * (1.0 + abs(point[j]))
            forward, backward = point.copy(), point.copy()
            forward[j] += step
            backward[j] -= step
            columns.append((func(forward) - func(backward)) / (2.0 * step))
        result = np.column_stack(columns)
        if not np.all(np.isfinite(result)):
            raise DomainError("non-finite difference quotient while linearizing")
        return result

    A_lin = jacobian(lambda x: system.f(x, u0), x0)
    B_lin = jacobian(lambda u: system.f(x0, u), u0)
    return A_lin, B_lin


def output_matrix(system: FullOrderSystem) -> np.ndarray:
    """Linear output map C (finite-difference Jacobian of h when not given)."""
    if system.C is not None:
        return system.C
    columns = []
    for j in range(system.n):
        step = 1e-6
        e = np.zeros(system.n)
        e[j] = step
        columns.append((system.h(system.x_eq + e) - system.h(system.x_eq - e)) / (2 * step))
    return np.column_stack(columns)


def steady_state(system: FullOrderSystem, u: np.ndarray) -> np.ndarray:
    """Equilibrium state of the linear (or linearized) dynamics under constant input."""
    A, B = linearize(system)
    base = np.zeros(A.shape[0]) if isinstance(system, LtiSystem) else system.x_eq
    return base + np.linalg.solve(A, -B @ np.asarray(u, dtype=float))


def describe_system(
    system: FullOrderSystem,
    system_type: str,
    physics: str,
    u_bound: float,
    tau_ratio: float = 3.0,
    **overrides: Any,
) -> SystemDescriptor:
    """Descriptor derived from the slowest decay rate of the (linearized) dynamics.

    tau_fast is set to tau_slow / tau_ratio so the retained sampling period
    still contracts the slowest mode below the discrete stability margin.
    """
    A, _ = linearize(system)
    abscissa = spectral_abscissa(A)
    if abscissa >= 0:
        raise DomainError("cannot describe a system without a decaying slowest mode")
    tau_slow = -1.0 / abscissa
    fields_ = {
        "system_type": system_type,
        "physics": physics,
        "linearity": "LTI" if system.is_linear else "nonlinear",
        "N": system.n,
        "m": system.m,
        "p": system.p,
        "tau_slow": tau_slow,
        "tau_fast": tau_slow / tau_ratio,
        "u_min": -u_bound,
        "u_max": u_bound,
    }
    if not system.is_linear:
        fields_["nonlinear_terms"] = ["cubic_stiffness"]
        fields_["polynomial_degree"] = 3
    fields_.update(overrides)
    return SystemDescriptor(**fields_)
