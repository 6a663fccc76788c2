"""Mini coupling environment for two-participant partitioned simulations.

One participant (the *driver*) owns the outer time loop: it writes its
output field and calls :meth:`CoupledSystem.advance` once per coupling
window iteration.  The partner participant is registered with a solver
callback which the system invokes at the point the scheme dictates.

Four schemes are provided.  Serial schemes hand fresh data to the second
participant inside the same window; parallel schemes let both participants
consume partner data from the previous window (the classic one-window lag).
Implicit variants sub-iterate the window through a fixed-point loop with
checkpoint/reload and optional underrelaxation or adaptive Aitken
acceleration of the incoming iterate.

Field buffers travel through a small in-process transport with send/receive
queue semantics; a distributed transport could be slotted in behind the
same interface.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, CouplingProtocolError
from .mapping import MappingConstraint, MappingSpec, build_mapping


class SchemeKind(enum.Enum):
    SERIAL_EXPLICIT = "serial-explicit"
    PARALLEL_EXPLICIT = "parallel-explicit"
    SERIAL_IMPLICIT = "serial-implicit"
    PARALLEL_IMPLICIT = "parallel-implicit"

    @property
    def implicit(self) -> bool:
        return self in (SchemeKind.SERIAL_IMPLICIT, SchemeKind.PARALLEL_IMPLICIT)

    @property
    def parallel(self) -> bool:
        return self in (SchemeKind.PARALLEL_EXPLICIT, SchemeKind.PARALLEL_IMPLICIT)


class Outcome(enum.Enum):
    WINDOW_CONVERGED = "window-converged"
    ITERATE_AGAIN = "iterate-again"


class AcceleratorKind(enum.Enum):
    NONE = "none"
    CONSTANT = "constant"
    AITKEN = "aitken"


def residual(current: np.ndarray, previous: np.ndarray,
             floor: float = 1e-30) -> float:
    """Relative L2 distance ||cur - prev|| / max(||cur||, floor)."""
    current = np.asarray(current, dtype=float).ravel()
    previous = np.asarray(previous, dtype=float).ravel()
    if current.shape != previous.shape:
        raise ValueError(f"field length mismatch: {current.shape} vs {previous.shape}")
    return float(np.linalg.norm(current - previous) / max(np.linalg.norm(current), floor))


class Accelerator:
    """Relaxation of fixed-point iterates: x~ = x_prev + omega (x_new - x_prev).

    Constant underrelaxation keeps omega fixed; Aitken updates it from the
    two most recent residuals.  ``reset`` must be called at each window
    start so the first iteration falls back to omega0.
    """

    # adaptive omega keeps its sign but is clamped in magnitude: a stalled
    # residual pair must not zero the update nor fling the iterate away
    OMEGA_MIN = 1e-4
    OMEGA_MAX = 10.0

    def __init__(self, kind: AcceleratorKind = AcceleratorKind.NONE, omega0: float = 0.5):
        self.kind = AcceleratorKind(kind)
        self.omega0 = float(omega0)
        self.omega = self.omega0
        self._prev_residual = None

    def reset(self) -> None:
        self.omega = self.omega0
        self._prev_residual = None

    def relax(self, x_prev: np.ndarray, x_new: np.ndarray) -> np.ndarray:
        x_prev = np.asarray(x_prev, dtype=float)
        x_new = np.asarray(x_new, dtype=float)
        if self.kind is AcceleratorKind.NONE:
            return x_new.copy()
        r = (x_new - x_prev).ravel()
        if self.kind is AcceleratorKind.AITKEN and self._prev_residual is not None:
            dr = r - self._prev_residual
            norm2 = float(dr @ dr)
            if norm2 > 0.0:
                omega = -self.omega * float(self._prev_residual @ dr) / norm2
                sign = 1.0 if omega >= 0.0 else -1.0
                self.omega = sign * float(np.clip(abs(omega), self.OMEGA_MIN, self.OMEGA_MAX))
            # else: keep the previous omega (stalled residual)
        if self.kind is AcceleratorKind.AITKEN:
            self._prev_residual = r.copy()
        return x_prev + self.omega * (x_new - x_prev)


def accelerate(accelerator: Accelerator, x_prev, x_new) -> np.ndarray:
    return accelerator.relax(x_prev, x_new)


# --------------------------------------------------------------- meshes

@dataclass
class CouplingMeshData:
    """Vertex coordinates plus named per-vertex vector fields.

    Coordinates are frozen after construction; only field values change.
    """

    mesh_id: str
    coordinates: np.ndarray
    edges: np.ndarray | None = None
    fields: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coordinates = np.asarray(self.coordinates, dtype=float)
        self.coordinates.setflags(write=False)
        if self.edges is not None:
            self.edges = np.asarray(self.edges, dtype=np.int64)

    @property
    def n_vertices(self) -> int:
        return len(self.coordinates)

    def declare_field(self, name: str) -> None:
        self.fields.setdefault(name, np.zeros_like(self.coordinates))

    def set_field(self, name: str, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_vertices, self.coordinates.shape[1]):
            raise ValueError(
                f"field {name!r} on mesh {self.mesh_id!r}: expected shape "
                f"{(self.n_vertices, self.coordinates.shape[1])}, got {values.shape}")
        self.fields[name] = values.copy()

    def get_field(self, name: str) -> np.ndarray:
        if name not in self.fields:
            raise ConfigurationError(f"unknown field {name!r} on mesh {self.mesh_id!r}")
        return self.fields[name].copy()


class InProcessTransport:
    """Message-queue contract used for every field exchange.

    send/receive are keyed by (mesh id, field name); a remote transport can
    replace this class without touching the scheme logic.
    """

    def __init__(self):
        self._queues: dict = {}

    def send(self, mesh_id: str, name: str, values: np.ndarray) -> None:
        self._queues.setdefault((mesh_id, name), deque()).append(np.array(values, dtype=float))

    def receive(self, mesh_id: str, name: str) -> np.ndarray:
        queue = self._queues.get((mesh_id, name))
        if not queue:
            raise CouplingProtocolError(f"no pending data for {name!r} on mesh {mesh_id!r}")
        return queue.popleft()


# --------------------------------------------------------------- configuration

@dataclass
class ExchangeSpec:
    field_name: str
    source: str            # participant name
    target: str
    mapping: MappingSpec


@dataclass
class SchemeConfig:
    kind: SchemeKind = SchemeKind.SERIAL_IMPLICIT
    window_dt: float = 1e-3
    max_iterations: int = 30
    tolerance: float = 1e-3
    accelerator: AcceleratorKind = AcceleratorKind.AITKEN
    omega0: float = 0.5
    residual_field: str | None = None   # None: last exchanged field (displacements)

    def __post_init__(self):
        self.kind = SchemeKind(self.kind)
        self.accelerator = AcceleratorKind(self.accelerator)
        if self.window_dt <= 0:
            raise ConfigurationError("window_dt must be positive")
        if self.tolerance <= 0:
            raise ConfigurationError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")


class ParticipantSolver:
    """Callback interface for the participant driven by the system."""

    def solve_window(self, t_start: float, dt: float, mesh: CouplingMeshData) -> None:
        raise NotImplementedError

    def save_checkpoint(self):
        raise NotImplementedError

    def load_checkpoint(self, checkpoint) -> None:
        raise NotImplementedError


# --------------------------------------------------------------- system

class CoupledSystem:
    """State machine steering one coupling window at a time.

    ``participants`` maps name -> CouplingMeshData.  Exactly one participant
    may register a solver callback; the other one drives the loop by writing
    its field and calling ``advance(window_dt)``.  The audit log records
    (event, detail) tuples for scheme-order verification.
    """

    def __init__(self, participants: dict, exchanges: list[ExchangeSpec],
                 scheme: SchemeConfig, solvers: dict | None = None,
                 transport: InProcessTransport | None = None):
        if len(participants) != 2:
            raise ConfigurationError("exactly two participants are required")
        self.meshes: dict[str, CouplingMeshData] = {}
        self.participant_mesh: dict[str, str] = {}
        for name, mesh in participants.items():
            if mesh.mesh_id in self.meshes:
                raise ConfigurationError(f"mesh {mesh.mesh_id!r} registered twice")
            self.meshes[mesh.mesh_id] = mesh
            self.participant_mesh[name] = mesh.mesh_id
        self.exchanges = list(exchanges)
        self.scheme = scheme
        self.transport = transport or InProcessTransport()
        self.solvers = dict(solvers or {})
        for name in self.solvers:
            if name not in self.participant_mesh:
                raise ConfigurationError(f"solver registered for unknown participant {name!r}")
        driver = [p for p in self.participant_mesh if p not in self.solvers]
        if len(driver) != 1:
            raise ConfigurationError("exactly one participant must drive the loop "
                                     "(register one solver callback)")
        self.driver = driver[0]
        self.partner = next(p for p in self.participant_mesh if p != self.driver)

        self._plans = {}
        for ex in self.exchanges:
            if ex.source not in self.participant_mesh or ex.target not in self.participant_mesh:
                raise ConfigurationError(
                    f"exchange {ex.field_name!r}: unknown participant "
                    f"{ex.source!r} or {ex.target!r}")
            src = self.meshes[self.participant_mesh[ex.source]]
            tgt = self.meshes[self.participant_mesh[ex.target]]
            src.declare_field(ex.field_name)
            tgt.declare_field(ex.field_name)
            self._plans[ex.field_name] = build_mapping(
                ex.mapping, src.coordinates, tgt.coordinates,
                source_edges=src.edges, target_edges=tgt.edges)

        self.window = 0
        self.iteration = 0
        self.time = 0.0
        self.iterations_last_window = 0
        self.audit_log: list = []
        self._driver_wrote = False
        self._partner_checkpoint = None
        self._accelerator = Accelerator(scheme.accelerator, scheme.omega0)
        self._residual_field = scheme.residual_field or self._incoming_field_name()
        self._last_iterate = None
        self.ongoing = True
        self._end_time = None

    # -- helpers ------------------------------------------------------

    def _incoming_field_name(self) -> str:
        """Field mapped towards the driver (the displacement in FSI runs)."""
        for ex in self.exchanges:
            if ex.target == self.driver:
                return ex.field_name
        raise ConfigurationError("no exchange targets the driving participant")

    def initialize(self, end_time: float | None = None) -> float:
        self._end_time = end_time
        self.audit_log.append(("initialize", self.scheme.kind.value))
        return self.scheme.window_dt

    def write_field(self, participant: str, name: str, values: np.ndarray) -> None:
        mesh = self.meshes[self.participant_mesh[participant]]
        mesh.set_field(name, values)
        self.audit_log.append(("write", participant, name))
        if participant == self.driver:
            self._driver_wrote = True

    def read_field(self, participant: str, name: str) -> np.ndarray:
        self.audit_log.append(("read", participant, name))
        return self.meshes[self.participant_mesh[participant]].get_field(name)

    def requires_checkpoint(self) -> bool:
        """True when the driver must snapshot its state (window start, implicit)."""
        return self.scheme.kind.implicit and self.iteration == 0

    def _exchange(self, ex: ExchangeSpec) -> None:
        src_mesh = self.meshes[self.participant_mesh[ex.source]]
        tgt_mesh = self.meshes[self.participant_mesh[ex.target]]
        plan = self._plans[ex.field_name]
        mapped = plan.apply(src_mesh.get_field(ex.field_name))
        self.transport.send(tgt_mesh.mesh_id, ex.field_name, mapped)
        tgt_mesh.set_field(ex.field_name, self.transport.receive(tgt_mesh.mesh_id, ex.field_name))
        self.audit_log.append(("map", ex.field_name, ex.source, ex.target))

    def _solve_partner(self, dt: float) -> None:
        mesh = self.meshes[self.participant_mesh[self.partner]]
        self.audit_log.append(("solve", self.partner))
        self.solvers[self.partner].solve_window(self.time, dt, mesh)
        for ex in self.exchanges:
            if ex.source == self.partner:
                self.audit_log.append(("write", self.partner, ex.field_name))

    def _finish_window(self, dt: float) -> None:
        self.iterations_last_window = self.iteration + 1
        self.window += 1
        self.iteration = 0
        self.time += dt
        self._partner_checkpoint = None
        self._last_iterate = None
        if self._end_time is not None and self.time >= self._end_time - 1e-12 * dt:
            self.ongoing = False

    # -- main entry ----------------------------------------------------

    def advance(self, dt: float) -> Outcome:
        """Run one iteration of the current coupling window.

        The driver must have written its output field since the previous
        advance; the partner is solved internally at the point the scheme
        prescribes.  Implicit schemes return ITERATE_AGAIN until the
        residual of the incoming field drops below tolerance, and the
        driver must then reload its own checkpoint.
        """
        if not self._driver_wrote:
            raise CouplingProtocolError(
                f"advance() before {self.driver!r} wrote its output field")
        if abs(dt - self.scheme.window_dt) > 1e-9 * self.scheme.window_dt:
            raise CouplingProtocolError(
                f"advance(dt={dt}) does not match the window size {self.scheme.window_dt}")
        self._driver_wrote = False
        kind = self.scheme.kind

        to_partner = [ex for ex in self.exchanges if ex.target == self.partner]
        to_driver = [ex for ex in self.exchanges if ex.target == self.driver]

        if not kind.implicit:
            if kind.parallel:
                # partner consumes data exchanged at the previous window end
                self._solve_partner(dt)
                for ex in to_partner:
                    self._exchange(ex)
            else:
                for ex in to_partner:
                    self._exchange(ex)
                self._solve_partner(dt)
            for ex in to_driver:
                self._exchange(ex)
            self.audit_log.append(("converged", self.window, 1))
            self._finish_window(dt)
            return Outcome.WINDOW_CONVERGED

        # implicit: fixed-point sub-iteration with checkpointing
        driver_mesh = self.meshes[self.participant_mesh[self.driver]]
        if self.iteration == 0:
            self._partner_checkpoint = self.solvers[self.partner].save_checkpoint()
            self.audit_log.append(("checkpoint", self.partner))
            self._accelerator.reset()
            self._last_iterate = driver_mesh.get_field(self._residual_field)

        if kind.parallel:
            self._solve_partner(dt)
            for ex in to_partner:
                self._exchange(ex)
        else:
            for ex in to_partner:
                self._exchange(ex)
            self._solve_partner(dt)
        for ex in to_driver:
            self._exchange(ex)

        raw = driver_mesh.get_field(self._residual_field)
        res = residual(raw, self._last_iterate)
        self.audit_log.append(("residual", self.window, self.iteration, res))

        if res < self.scheme.tolerance or self.iteration + 1 >= self.scheme.max_iterations:
            # the window ends on the raw solver answer; relaxation only ever
            # shapes the next sub-iterate, never the accepted state
            driver_mesh.set_field(self._residual_field, raw)
            self.audit_log.append(("converged", self.window, self.iteration + 1))
            self._finish_window(dt)
            return Outcome.WINDOW_CONVERGED

        relaxed = self._accelerator.relax(self._last_iterate, raw)
        driver_mesh.set_field(self._residual_field, relaxed)
        self._last_iterate = relaxed

        self.solvers[self.partner].load_checkpoint(self._partner_checkpoint)
        self.audit_log.append(("reload", self.partner))
        self.iteration += 1
        return Outcome.ITERATE_AGAIN


def initialize(participants: dict, exchanges: list[ExchangeSpec], scheme: SchemeConfig,
               solvers: dict, end_time: float | None = None):
    """Build a coupled system and return it with its first window size."""
    system = CoupledSystem(participants, exchanges, scheme, solvers=solvers)
    dt = system.initialize(end_time)
    return system, dt
