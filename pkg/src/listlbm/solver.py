"""List-based D3Q19 TRT flow solver over the sparse representation.

Each partition loads its chunk of the 1-D fluid cell list, rewrites the
adjacency to local slot ids (ghost slots for remote fluid neighbors,
bounce-back self-references for solid neighbors) and runs a fused
pull-scheme stream-collide step on two population arrays. Partitions
exchange full 19-population ghost sets once per step; results are
bit-identical for any partition count and any worker scheduling.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .adjacency import STENCIL, SparseRecords
from .errors import (
    DivergenceError,
    NotConvergedError,
    ParameterError,
    ProtocolError,
)
from .partition import chunk_ranges
from .sparse_io import SparseHeader, read_chunk

__all__ = [
    "BenchReport",
    "LocalDomain",
    "Simulation",
    "TrtParams",
    "init_equilibrium",
    "load_and_localize",
    "macroscopic",
    "poiseuille_error",
    "run_benchmark",
]

# population 0 is the rest population; 1..18 follow STENCIL order
C19 = np.vstack([np.zeros((1, 3), dtype=np.int64), STENCIL])
CF = C19.astype(float)
W = np.array([1.0 / 3.0] + [1.0 / 18.0] * 6 + [1.0 / 36.0] * 12)
OPP = np.array([0] + [((p - 1) ^ 1) + 1 for p in range(1, 19)], dtype=np.int64)

# index lists for moment sums; fixed expressions keep the arithmetic
# identical for every partition size
_POS = [np.flatnonzero(C19[:, a] == 1) for a in range(3)]
_NEG = [np.flatnonzero(C19[:, a] == -1) for a in range(3)]

FLOPS_PER_UPDATE = 200


@dataclass(frozen=True)
class TrtParams:
    """Two-relaxation-time parameters and body force (lattice units)."""

    tau_plus: float
    magic_lambda: float = 3.0 / 16.0
    force: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.tau_plus > 0.5:
            raise ParameterError(f"tau_plus must exceed 1/2, got {self.tau_plus}")
        if not self.magic_lambda > 0.0:
            raise ParameterError(
                f"magic lambda must be positive, got {self.magic_lambda}"
            )

    @property
    def nu(self) -> float:
        return (self.tau_plus - 0.5) / 3.0

    @property
    def tau_minus(self) -> float:
        return 0.5 + self.magic_lambda / (self.tau_plus - 0.5)

    @property
    def omega_plus(self) -> float:
        return 1.0 / self.tau_plus

    @property
    def omega_minus(self) -> float:
        return 1.0 / self.tau_minus


class LocalDomain:
    """One partition's owned cells, ghosts and rewritten adjacency."""

    def __init__(self, header: SparseHeader, records: SparseRecords, assignment, part: int):
        lo = int(assignment.boundaries[part])
        hi = int(assignment.boundaries[part + 1])
        if not np.array_equal(records.ic, np.arange(lo, hi, dtype=np.uint64)):
            raise ProtocolError(
                f"partition {part} needs records [{lo}, {hi}), got {len(records)}"
            )
        self.header = header
        self.part = part
        self.ic0 = lo
        self.n_own = hi - lo
        self.coords = records.coords
        nbr = records.nbr.astype(np.int64)

        foreign = (nbr != 0) & ((nbr < lo) | (nbr >= hi))
        self.ghost_ic = np.unique(nbr[foreign])
        self.n_ghost = int(self.ghost_ic.size)
        nslots = self.n_own + self.n_ghost
        self.nslots = nslots

        # population p at a cell pulls from the neighbor opposite to its
        # direction of travel; nbr 0 turns into a bounce-back self-pull
        # of the opposite population
        self_slots = np.arange(self.n_own, dtype=np.int64)
        pull_slot = np.empty((19, self.n_own), dtype=np.int64)
        pull_pop = np.empty((19, self.n_own), dtype=np.int64)
        pull_slot[0] = self_slots
        pull_pop[0] = 0
        for p in range(1, 19):
            src = nbr[:, (p - 1) ^ 1]
            solid = src == 0
            in_own = (src >= lo) & (src < hi)
            gpos = np.searchsorted(self.ghost_ic, src)
            slot = np.where(in_own, src - lo, self.n_own + gpos)
            pull_slot[p] = np.where(solid, self_slots, slot)
            pull_pop[p] = np.where(solid, OPP[p], p)
        self._pull_flat = pull_pop * nslots + pull_slot

        # send set to q: own cells with any neighbor in q's range; by link
        # symmetry this equals q's ghost set from this partition
        owner = assignment.owner_of(records.nbr)  # solid entries map to -1
        self.send_to: dict[int, np.ndarray] = {}
        for q in np.unique(owner):
            q = int(q)
            if q < 0 or q == part:
                continue
            self.send_to[q] = np.flatnonzero((owner == q).any(axis=1))
        self.recv_from: dict[int, np.ndarray] = {}
        gowner = assignment.owner_of(self.ghost_ic)
        for q in np.unique(gowner):
            q = int(q)
            self.recv_from[q] = self.n_own + np.flatnonzero(gowner == q)

        self.f_src = np.zeros((19, nslots))
        self.f_dst = np.zeros((19, nslots))


def load_and_localize(path, n: int, N: int) -> LocalDomain:
    """Read chunk n of N from a sparse file and localize its adjacency."""
    header, records = read_chunk(path, n, N)
    assignment = chunk_ranges(header.n_fluid, N)
    return LocalDomain(header, records, assignment, n)


def init_equilibrium(domain: LocalDomain, rho0: float, u0=(0.0, 0.0, 0.0)) -> None:
    """Set every slot (owned and ghost) to the equilibrium of (rho0, u0)."""
    if not rho0 > 0.0:
        raise ParameterError(f"rho0 must be positive, got {rho0}")
    u = np.asarray(u0, dtype=float)
    cu = CF @ u
    feq = W * rho0 * (1.0 + 3.0 * cu + 4.5 * cu * cu - 1.5 * float(u @ u))
    domain.f_src[:] = feq[:, None]
    domain.f_dst[:] = feq[:, None]


def _moments(f: np.ndarray):
    """Density and raw momentum with a partition-size-independent
    summation order."""
    rho = f.sum(axis=0)
    m = np.empty((3, f.shape[1]))
    for a in range(3):
        m[a] = f[_POS[a]].sum(axis=0) - f[_NEG[a]].sum(axis=0)
    return rho, m


def _collide_stream(domain: LocalDomain, params: TrtParams) -> None:
    """Fused pull + TRT collision + forcing into the destination array."""
    n = domain.n_own
    f = domain.f_src.reshape(-1)[domain._pull_flat]
    rho, m = _moments(f)
    u = m / rho
    cu = (
        CF[:, 0, None] * u[0]
        + CF[:, 1, None] * u[1]
        + CF[:, 2, None] * u[2]
    )
    usq = u[0] * u[0] + u[1] * u[1] + u[2] * u[2]
    feq = W[:, None] * rho * (1.0 + 3.0 * cu + 4.5 * cu * cu - 1.5 * usq)
    f_opp = f[OPP]
    feq_opp = feq[OPP]
    post = (
        f
        - (0.5 * params.omega_plus) * ((f + f_opp) - (feq + feq_opp))
        - (0.5 * params.omega_minus) * ((f - f_opp) - (feq - feq_opp))
    )
    g = params.force
    if g[0] or g[1] or g[2]:
        cg = CF[:, 0] * g[0] + CF[:, 1] * g[1] + CF[:, 2] * g[2]
        post += (3.0 * W * cg)[:, None] * rho
    domain.f_dst[:, :n] = post


def macroscopic(domain: LocalDomain, params: TrtParams):
    """Per-cell density and velocity, with the half-force correction
    u = (sum c_i f_i + g/2) / rho."""
    f = domain.f_src[:, : domain.n_own]
    rho, m = _moments(f)
    g = np.asarray(params.force, dtype=float)
    u = (m + 0.5 * g[:, None]) / rho
    return rho, u.T.copy()


class Simulation:
    """Coordinator for N partitions stepping in lockstep.

    Workers only ever write their own arrays; the ghost exchange runs
    at a barrier between steps, so results do not depend on scheduling.
    """

    def __init__(self, header, records, nparts: int, params: TrtParams, workers: int | None = None):
        self.header = header
        self.params = params
        self.assignment = chunk_ranges(header.n_fluid, nparts)
        self.workers = workers
        bounds = self.assignment.boundaries
        rec = records.sorted_by_ic()
        self.domains = []
        for p in range(nparts):
            lo, hi = int(bounds[p]), int(bounds[p + 1])
            sl = slice(lo - 1, hi - 1)
            chunk = SparseRecords(rec.coords[sl], rec.ic[sl], rec.nbr[sl])
            self.domains.append(LocalDomain(header, chunk, self.assignment, p))
        self._wire()
        self.step_count = 0
        self.compute_seconds = np.zeros(nparts)
        self.exchange_seconds = np.zeros(nparts)

    @classmethod
    def from_file(cls, path, nparts: int, params: TrtParams, workers: int | None = None):
        """Each partition reads only its own chunk from the file."""
        domains = [load_and_localize(path, p, nparts) for p in range(nparts)]
        sim = cls.__new__(cls)
        sim.header = domains[0].header
        sim.params = params
        sim.assignment = chunk_ranges(sim.header.n_fluid, nparts)
        sim.workers = workers
        sim.domains = domains
        sim._wire()
        sim.step_count = 0
        sim.compute_seconds = np.zeros(nparts)
        sim.exchange_seconds = np.zeros(nparts)
        return sim

    def _wire(self):
        # validate that send sets line up with the receivers' ghost sets
        for p, dp in enumerate(self.domains):
            for q, slots in sorted(dp.send_to.items()):
                dq = self.domains[q]
                recv = dq.recv_from.get(p)
                if recv is None or len(recv) != len(slots):
                    raise ProtocolError(
                        f"partition {p} sends {len(slots)} cells to {q}, "
                        f"which expects "
                        f"{0 if recv is None else len(recv)} ghosts"
                    )
                sent_ic = dp.ic0 + slots.astype(np.uint64)
                ghost_ic = dq.ghost_ic[recv - dq.n_own]
                if not np.array_equal(sent_ic, ghost_ic):
                    raise ProtocolError(
                        f"ghost indices of partition {q} from {p} do not "
                        f"match the sender's cells"
                    )
        for p, dp in enumerate(self.domains):
            for q in dp.recv_from:
                if p not in self.domains[q].send_to:
                    raise ProtocolError(
                        f"partition {p} expects ghosts from {q}, "
                        f"which sends none"
                    )

    @property
    def nparts(self) -> int:
        return len(self.domains)

    def init_equilibrium(self, rho0: float = 1.0, u0=(0.0, 0.0, 0.0)) -> None:
        for d in self.domains:
            init_equilibrium(d, rho0, u0)
        self._exchange()

    def _exchange(self):
        for q, dq in enumerate(self.domains):
            t0 = time.perf_counter()
            for p in sorted(dq.recv_from):
                dp = self.domains[p]
                dq.f_src[:, dq.recv_from[p]] = dp.f_src[:, dp.send_to[q]]
            self.exchange_seconds[q] += time.perf_counter() - t0

    def _compute_one(self, d: LocalDomain):
        t0 = time.perf_counter()
        _collide_stream(d, self.params)
        self.compute_seconds[d.part] += time.perf_counter() - t0

    def step(self) -> None:
        """One stream-collide-exchange cycle for all partitions."""
        if self.workers and self.workers > 1 and len(self.domains) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                list(pool.map(self._compute_one, self.domains))
        else:
            for d in self.domains:
                self._compute_one(d)
        for d in self.domains:
            if np.isnan(d.f_dst[:, : d.n_own]).any():
                raise DivergenceError(self.step_count + 1)
        for d in self.domains:
            d.f_src, d.f_dst = d.f_dst, d.f_src
        self._exchange()
        self.step_count += 1

    def run(self, steps: int) -> None:
        for _ in range(steps):
            self.step()

    def reset_timers(self):
        self.compute_seconds[:] = 0.0
        self.exchange_seconds[:] = 0.0

    def gather_state(self) -> np.ndarray:
        """(19, N_f) population state assembled in I_c order."""
        return np.concatenate([d.f_src[:, : d.n_own] for d in self.domains], axis=1)

    def gather_coords(self) -> np.ndarray:
        return np.concatenate([d.coords for d in self.domains], axis=0)

    def macroscopic_all(self):
        """(rho, u) over all fluid cells in I_c order."""
        parts = [macroscopic(d, self.params) for d in self.domains]
        rho = np.concatenate([p[0] for p in parts])
        u = np.concatenate([p[1] for p in parts], axis=0)
        return rho, u

    def total_mass(self) -> float:
        return float(sum(d.f_src[:, : d.n_own].sum() for d in self.domains))


@dataclass(frozen=True)
class BenchReport:
    """Throughput report in fluid lattice updates per second."""

    partitions: int
    steps: int
    fluid_cells: int
    seconds: float
    compute_seconds: tuple[float, ...]
    exchange_seconds: tuple[float, ...]

    @property
    def flup_count(self) -> int:
        return self.fluid_cells * self.steps

    @property
    def flups(self) -> float:
        return self.flup_count / max(self.seconds, 1e-12)

    @property
    def gflops_est(self) -> float:
        return self.flups * FLOPS_PER_UPDATE / 1e9

    def csv(self) -> str:
        return (
            "partitions,steps,fluid_cells,seconds,flups,gflops_est\n"
            f"{self.partitions},{self.steps},{self.fluid_cells},"
            f"{self.seconds:.6f},{self.flups:.3f},{self.gflops_est:.6f}\n"
        )


def run_benchmark(sim: Simulation, steps: int, warmup: int = 0) -> BenchReport:
    """Time `steps` updates (after `warmup` untimed ones)."""
    if steps < 1:
        raise ParameterError(f"benchmark needs steps >= 1, got {steps}")
    if warmup:
        sim.run(warmup)
    sim.reset_timers()
    t0 = time.perf_counter()
    sim.run(steps)
    seconds = time.perf_counter() - t0
    return BenchReport(
        partitions=sim.nparts,
        steps=steps,
        fluid_cells=sim.header.n_fluid,
        seconds=seconds,
        compute_seconds=tuple(sim.compute_seconds),
        exchange_seconds=tuple(sim.exchange_seconds),
    )


def _ux_profile(sim: Simulation):
    """Mean u_x per y row over all fluid cells, rows sorted ascending."""
    _, u = sim.macroscopic_all()
    ys = sim.gather_coords()[:, 1].astype(np.int64)
    rows = np.unique(ys)
    sums = np.bincount(ys, weights=u[:, 0], minlength=int(rows.max()) + 1)
    counts = np.bincount(ys, minlength=int(rows.max()) + 1)
    return rows, sums[rows] / counts[rows]


def poiseuille_error(
    sim: Simulation,
    max_steps: int = 200_000,
    check_every: int = 100,
    tol: float = 1e-10,
) -> float:
    """Converge a plate-channel flow and return the relative L2 error of
    u_x(y) against the parabolic profile.

    Geometry expectation: solid plates at y = 0 and y = Y-1, periodic x
    and z, body force along x. The analytic wall sits half a cell off
    the solid nodes, so yhat = j - 1/2 and L = Y - 2.
    """
    gx = sim.params.force[0]
    if gx == 0.0:
        return 0.0
    rows, prof = _ux_profile(sim)
    residual = np.inf
    stepped = 0
    while stepped < max_steps:
        todo = min(check_every, max_steps - stepped)
        sim.run(todo)
        stepped += todo
        rows, new = _ux_profile(sim)
        scale = max(float(np.abs(new).max()), 1e-300)
        residual = float(np.abs(new - prof).max()) / scale
        prof = new
        if residual < tol:
            break
    else:
        raise NotConvergedError(
            f"profile residual {residual:.3e} above {tol:.1e} "
            f"after {max_steps} steps",
            residual=residual,
        )
    Y = sim.header.dims[1]
    L = Y - 2
    yhat = rows.astype(float) - 0.5
    analytic = gx / (2.0 * sim.params.nu) * yhat * (L - yhat)
    return float(np.linalg.norm(prof - analytic) / np.linalg.norm(analytic))
