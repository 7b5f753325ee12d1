"""Planar confined-space world: labelled occupancy grid, A*, FODs and a depth-ray sensor.

Grid conventions: ``occupied[r, c]`` with row ``r`` along +y and column ``c``
along +x; cell ``(r, c)`` covers ``[c, c+1) × [r, r+1)`` times the resolution.
``labels[r, c]`` is the region of a free cell and -1 for occupied cells.
Moves are 8-connected with costs 1 and √2 (times the resolution); a diagonal
move needs both orthogonal cells free, so paths never squeeze between two
walls that touch at a corner.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import ndimage

from .anomaly import ObservedPoint, PlanarPose, ReferenceCloud, propagate_point
from .graph import RegionGraph, load_graph, parse_graph

log = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
NEIGHBORS = ((0, 1, 1.0), (1, 0, 1.0), (0, -1, 1.0), (-1, 0, 1.0),
             (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2))


class WorldError(ValueError):
    """Malformed scenario or unreachable navigation goal."""


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    resolution: float
    occupied: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        occ = np.asarray(self.occupied, dtype=bool)
        lab = np.asarray(self.labels, dtype=int)
        if occ.ndim != 2 or lab.shape != occ.shape:
            raise WorldError("occupancy and label arrays must be 2D with equal shapes")
        if self.resolution <= 0:
            raise WorldError("resolution must be positive")
        if np.any(lab[~occ] < 0):
            raise WorldError("every free cell needs a region label")
        lab = np.where(occ, -1, lab)
        object.__setattr__(self, "occupied", occ)
        object.__setattr__(self, "labels", lab)

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupied.shape

    @property
    def n_regions(self) -> int:
        return int(self.labels.max()) + 1

    def in_bounds(self, cell) -> bool:
        r, c = cell
        return 0 <= r < self.shape[0] and 0 <= c < self.shape[1]

    def is_free(self, cell) -> bool:
        return self.in_bounds(cell) and not self.occupied[cell[0], cell[1]]

    def index(self, cell) -> int:
        return int(cell[0]) * self.shape[1] + int(cell[1])

    def center(self, cell) -> np.ndarray:
        return (np.array([cell[1], cell[0]], dtype=float) + 0.5) * self.resolution

    def cell_at(self, xy) -> tuple[int, int]:
        return int(math.floor(xy[1] / self.resolution)), int(math.floor(xy[0] / self.resolution))

    def region_at(self, xy) -> int:
        cell = self.cell_at(xy)
        if not self.in_bounds(cell):
            return -1
        return int(self.labels[cell])

    def free_cells(self, region: int | None = None) -> np.ndarray:
        """(k, 2) array of free cells, optionally restricted to one region, in row-major order."""
        mask = ~self.occupied if region is None else self.labels == region
        return np.argwhere(mask)

    def region_sizes(self) -> np.ndarray:
        return np.bincount(self.labels[~self.occupied], minlength=self.n_regions)

    def with_blocked(self, blocked: np.ndarray) -> "OccupancyGrid":
        """Copy with extra occupied cells (e.g. under foreign objects)."""
        return OccupancyGrid(self.resolution, self.occupied | blocked, self.labels)


def region_components(grid: OccupancyGrid) -> np.ndarray:
    """Number of 4-connected components of each region's free cells."""
    out = np.zeros(grid.n_regions, dtype=int)
    for reg in range(grid.n_regions):
        _, k = ndimage.label(grid.labels == reg)
        out[reg] = k
    return out


def region_adjacency(grid: OccupancyGrid) -> set[tuple[int, int]]:
    """Unordered region pairs joined by at least one legal single move."""
    pairs = set()
    H, W = grid.shape
    lab = grid.labels
    free = ~grid.occupied
    for dr, dc, _ in NEIGHBORS:
        r0, r1 = max(0, -dr), H - max(0, dr)
        c0, c1 = max(0, -dc), W - max(0, dc)
        a = lab[r0:r1, c0:c1]
        b = lab[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
        ok = free[r0:r1, c0:c1] & free[r0 + dr:r1 + dr, c0 + dc:c1 + dc] & (a != b)
        if dr and dc:
            ok &= free[r0 + dr:r1 + dr, c0:c1] & free[r0:r1, c0 + dc:c1 + dc]
        for x, y in zip(a[ok].tolist(), b[ok].tolist()):
            pairs.add((min(x, y), max(x, y)))
    return pairs


# -- navigation -------------------------------------------------------------------

MoveRule = Callable[[int, int], bool]


def graph_move_rule(graph: RegionGraph) -> MoveRule:
    """Cell moves may stay in a region or cross into a region along a graph edge."""
    edges = graph.edges

    def allowed(a: int, b: int) -> bool:
        return a == b or (a, b) in edges
    return allowed


@dataclass(frozen=True)
class GridPath:
    cells: tuple[tuple[int, int], ...]
    length: float


def octile(a, b) -> float:
    dr, dc = abs(a[0] - b[0]), abs(a[1] - b[1])
    return max(dr, dc) + (SQRT2 - 1.0) * min(dr, dc)


def _moves(grid: OccupancyGrid, cell, rule: MoveRule | None):
    r, c = cell
    occ, lab = grid.occupied, grid.labels
    H, W = grid.shape
    for dr, dc, cost in NEIGHBORS:
        nr, nc = r + dr, c + dc
        if not (0 <= nr < H and 0 <= nc < W) or occ[nr, nc]:
            continue
        if dr and dc and (occ[r + dr, c] or occ[r, c + dc]):
            continue
        if rule is not None and not rule(lab[r, c], lab[nr, nc]):
            continue
        yield (nr, nc), cost


def astar(grid: OccupancyGrid, start, goal, rule: MoveRule | None = None) -> GridPath:
    """Shortest 8-connected path with the octile heuristic.

    Open-list ties are broken by (f, h, cell index), so results are
    deterministic.  ``rule`` optionally restricts moves between regions.
    """
    start, goal = tuple(map(int, start)), tuple(map(int, goal))
    for name, cell in (("start", start), ("goal", goal)):
        if not grid.is_free(cell):
            raise WorldError(f"{name} cell {cell} is not free")
    if start == goal:
        return GridPath((start,), 0.0)
    g = {start: 0.0}
    parent = {start: None}
    h0 = octile(start, goal)
    heap = [(h0, h0, grid.index(start), start)]
    closed = set()
    while heap:
        _, _, _, cell = heapq.heappop(heap)
        if cell in closed:
            continue
        if cell == goal:
            break
        closed.add(cell)
        gc = g[cell]
        for nxt, cost in _moves(grid, cell, rule):
            if nxt in closed:
                continue
            ng = gc + cost
            if ng < g.get(nxt, math.inf) - 1e-12:
                g[nxt] = ng
                parent[nxt] = cell
                h = octile(nxt, goal)
                heapq.heappush(heap, (ng + h, h, grid.index(nxt), nxt))
    else:
        raise WorldError(f"goal {goal} unreachable from {start}")
    path = [goal]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    path.reverse()
    return GridPath(tuple(path), g[goal] * grid.resolution)


# -- sensing ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SensorModel:
    fov: float = math.radians(69.0)
    min_depth: float = 0.2
    max_depth: float = 3.0
    range_noise_sigma: float = 0.01
    rays: int = 64
    bearing_sigma: float = 0.002

    def __post_init__(self):
        if not 0 < self.fov <= 2 * math.pi:
            raise WorldError("fov must lie in (0, 2π]")
        if not 0 < self.min_depth < self.max_depth:
            raise WorldError("need 0 < min_depth < max_depth")
        if self.range_noise_sigma < 0 or self.rays < 1 or self.bearing_sigma < 0:
            raise WorldError("sensor noise and ray count must be positive")

    def angles(self) -> np.ndarray:
        """Ray bearings relative to the heading, spread evenly across the field of view."""
        if self.rays == 1:
            return np.zeros(1)
        if self.fov >= 2 * math.pi - 1e-12:
            return -math.pi + 2 * math.pi * np.arange(self.rays) / self.rays
        return np.linspace(-self.fov / 2, self.fov / 2, self.rays)


@dataclass(frozen=True)
class FOD:
    center: np.ndarray
    radius: float


def cast_ray(grid: OccupancyGrid, origin, angle: float, max_range: float) -> float:
    """Distance from ``origin`` to the first occupied cell along the ray (inf beyond max_range).

    Exact grid traversal: steps from cell boundary to cell boundary.
    """
    res = grid.resolution
    x, y = origin[0] / res, origin[1] / res
    dx, dy = math.cos(angle), math.sin(angle)
    c, r = int(math.floor(x)), int(math.floor(y))
    H, W = grid.shape
    step_c = 1 if dx > 0 else -1
    step_r = 1 if dy > 0 else -1
    t_max_c = ((c + (step_c > 0)) - x) / dx if dx != 0 else math.inf
    t_max_r = ((r + (step_r > 0)) - y) / dy if dy != 0 else math.inf
    t_dc = abs(1.0 / dx) if dx != 0 else math.inf
    t_dr = abs(1.0 / dy) if dy != 0 else math.inf
    limit = max_range / res
    occ = grid.occupied
    t = 0.0
    while t <= limit:
        if t_max_c < t_max_r:
            t = t_max_c
            t_max_c += t_dc
            c += step_c
        else:
            t = t_max_r
            t_max_r += t_dr
            r += step_r
        if not (0 <= r < H and 0 <= c < W) or occ[r, c]:
            return t * res if t <= limit else math.inf
    return math.inf


def ray_disc(origin, angle: float, center, radius: float) -> float:
    """Smallest positive distance where the ray meets the disc boundary (inf if it misses)."""
    d = np.array([math.cos(angle), math.sin(angle)])
    m = np.asarray(origin, dtype=float) - np.asarray(center, dtype=float)
    b = float(m @ d)
    cc = float(m @ m) - radius * radius
    disc = b * b - cc
    if disc < 0:
        return math.inf
    sq = math.sqrt(disc)
    for t in (-b - sq, -b + sq):
        if t > 0:
            return t
    return math.inf


@dataclass(frozen=True)
class Scan:
    """Noise-free ray returns: bearings (world frame), hit distances and what was hit (-1 wall, i FOD i)."""

    angles: np.ndarray
    distances: np.ndarray
    kinds: np.ndarray


def scan(world: "InspectionWorld", position, heading: float) -> Scan:
    """Noise-free first intersections for every sensor ray (inf when nothing is within max_depth)."""
    s = world.sensor
    angles = heading + s.angles()
    dist = np.empty(angles.size)
    kinds = np.full(angles.size, -1)
    for k, a in enumerate(angles):
        best = cast_ray(world.grid, position, a, s.max_depth)
        for i, f in enumerate(world.fods):
            t = ray_disc(position, a, f.center, f.radius)
            if t < best:
                best, kinds[k] = t, i
        dist[k] = best
    dist[dist > s.max_depth] = math.inf
    return Scan(angles, dist, kinds)


def sense(world: "InspectionWorld", pose: PlanarPose, rng: np.random.Generator | None = None,
          noise: bool = True) -> list[ObservedPoint]:
    """Observed points from one depth scan at ``pose``.

    Each ray's first hit within [min_depth, max_depth] gives one point; the
    measured range carries Gaussian noise and the point covariance combines
    range/bearing noise with the pose covariance to first order.
    """
    s = world.sensor
    sc = scan(world, pose.position, pose.heading)
    rel = sc.angles - pose.heading
    out = []
    for k in range(sc.angles.size):
        d = sc.distances[k]
        if not (s.min_depth <= d <= s.max_depth):
            continue
        if noise and rng is not None and s.range_noise_sigma > 0:
            d = d + rng.normal(0.0, s.range_noise_sigma)
        a = rel[k]
        u = np.array([math.cos(a), math.sin(a)])
        v = np.array([-u[1], u[0]])
        var_r = max(s.range_noise_sigma, 1e-4) ** 2
        var_t = max(d * s.bearing_sigma, 1e-4) ** 2
        local_cov = var_r * np.outer(u, u) + var_t * np.outer(v, v)
        out.append(propagate_point(pose, d * u, local_cov))
    return out


# -- reference cloud ------------------------------------------------------------------

def wall_cloud(grid: OccupancyGrid, spacing: float, k_nn: int = 5) -> ReferenceCloud:
    """Sample every free/occupied cell boundary at ``spacing``; normals point into free space."""
    res = grid.resolution
    per_edge = max(1, int(round(res / spacing)))
    offsets = (np.arange(per_edge) + 0.5) / per_edge
    pts, nrm, reg = [], [], []
    H, W = grid.shape
    for r, c in grid.free_cells():
        x0, y0 = c * res, r * res
        for dr, dc in ((0, 1), (1, 0), (0, -1), (-1, 0)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < H and 0 <= nc < W and not grid.occupied[nr, nc]:
                continue
            normal = (-dc, -dr)
            for o in offsets:
                if dc:  # vertical wall segment
                    x = x0 + (res if dc > 0 else 0.0)
                    pts.append((x, y0 + o * res))
                else:
                    y = y0 + (res if dr > 0 else 0.0)
                    pts.append((x0 + o * res, y))
                nrm.append(normal)
                reg.append(grid.labels[r, c])
    return ReferenceCloud(np.array(pts), np.array(nrm, dtype=float), np.array(reg), k_nn)


# -- scenarios ----------------------------------------------------------------------------

def rle_encode(row) -> str:
    out, prev, count = [], None, 0
    for ch in row:
        if ch == prev:
            count += 1
            continue
        if prev is not None:
            out.append(f"{count}:{prev}")
        prev, count = ch, 1
    out.append(f"{count}:{prev}")
    return ",".join(out)


def rle_decode(text: str) -> str:
    chars = []
    for token in text.split(","):
        count, ch = token.split(":")
        if len(ch) != 1:
            raise WorldError(f"bad run-length token {token!r}")
        chars.append(ch * int(count))
    return "".join(chars)


def grid_from_rows(rows: list[str], resolution: float) -> OccupancyGrid:
    """Rows of '#' (occupied) or a region digit; ``rows[0]`` is the bottom row."""
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise WorldError("scenario rows have different lengths")
    occ = np.array([[ch == "#" for ch in row] for row in rows])
    lab = np.array([[-1 if ch == "#" else int(ch) for ch in row] for row in rows])
    return OccupancyGrid(resolution, occ, lab)


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    grid: OccupancyGrid
    graph: RegionGraph
    sensor: SensorModel
    fod_count: tuple[int, int]
    fod_radius: tuple[float, float]
    start: tuple[int, int]
    cloud_spacing: float
    pose_sigma: tuple[float, float, float]
    speed: float
    targets: dict = field(default_factory=dict)

    def pose_covariance(self) -> np.ndarray:
        return np.diag(np.square(self.pose_sigma))


def parse_scenario(doc: dict, base: Path | None = None) -> Scenario:
    try:
        rows = [rle_decode(r) for r in doc["rows"]]
        grid = grid_from_rows(rows, float(doc["resolution"]))
        gdoc = doc["graph"]
        if isinstance(gdoc, str):
            graph = load_graph((base or Path(".")) / gdoc)
        else:
            graph = parse_graph(gdoc)
        sdoc = dict(doc.get("sensor", {}))
        if "fov_deg" in sdoc:
            sdoc["fov"] = math.radians(sdoc.pop("fov_deg"))
        sensor = SensorModel(**sdoc)
        fods = doc.get("fods", {})
        return Scenario(
            name=doc.get("name", "scenario"),
            grid=grid,
            graph=graph,
            sensor=sensor,
            fod_count=tuple(fods.get("count", (4, 6))),
            fod_radius=tuple(fods.get("radius", (0.05, 0.15))),
            start=tuple(doc["start"]),
            cloud_spacing=float(doc.get("cloud_spacing", 0.02)),
            pose_sigma=tuple(doc.get("pose_sigma", (0.005, 0.005, 0.002))),
            speed=float(doc.get("speed", 0.2)),
            targets={k: np.asarray(v, dtype=float) for k, v in doc.get("targets", {}).items()},
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, WorldError):
            raise
        raise WorldError(f"cannot parse scenario: {exc}") from exc


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise WorldError(f"cannot parse scenario {path}: {exc}") from exc
    return parse_scenario(doc, path.parent)


def default_scenario_path() -> Path:
    return Path(__file__).parent / "data" / "tank7.json"


def validate_scenario(sc: Scenario) -> list[str]:
    """Human-readable list of invariant violations (empty when the scenario is sound)."""
    problems = []
    g, graph = sc.grid, sc.graph
    if g.n_regions != graph.n:
        problems.append(f"grid has {g.n_regions} regions, graph has {graph.n}")
    for reg, k in enumerate(region_components(g)):
        if k != 1:
            problems.append(f"region {reg} has {k} connected components")
    physical = region_adjacency(g)
    skeleton = {(min(i, j), max(i, j)) for i, j in graph.edges}
    for a, b in sorted(skeleton - physical):
        problems.append(f"graph edge {a}-{b} has no doorway in the grid")
    for a, b in sorted(physical - skeleton):
        problems.append(f"regions {a} and {b} touch but the graph has no edge between them")
    if not g.is_free(sc.start):
        problems.append(f"start cell {sc.start} is not free")
    lo, hi = sc.fod_count
    if not 0 <= lo <= hi:
        problems.append("fod count range is invalid")
    rlo, rhi = sc.fod_radius
    if not 0 < rlo <= rhi:
        problems.append("fod radius range is invalid")
    for name, t in sc.targets.items():
        if t.shape != (graph.n,) or np.any(t < 0) or t.sum() <= 0:
            problems.append(f"target preset {name!r} is not a distribution over {graph.n} regions")
    return problems


# -- worlds and foreign objects ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InspectionWorld:
    scenario: Scenario
    cloud: ReferenceCloud
    fods: tuple[FOD, ...] = ()
    nav_grid: OccupancyGrid | None = None

    @property
    def grid(self) -> OccupancyGrid:
        return self.scenario.grid

    @property
    def graph(self) -> RegionGraph:
        return self.scenario.graph

    @property
    def sensor(self) -> SensorModel:
        return self.scenario.sensor

    @property
    def navigation_grid(self) -> OccupancyGrid:
        return self.nav_grid if self.nav_grid is not None else self.grid


_CLOUD_CACHE: dict[int, ReferenceCloud] = {}


def build_world(sc: Scenario, fods=()) -> InspectionWorld:
    key = id(sc)
    if key not in _CLOUD_CACHE:
        _CLOUD_CACHE.clear()
        _CLOUD_CACHE[key] = wall_cloud(sc.grid, sc.cloud_spacing)
    world = InspectionWorld(sc, _CLOUD_CACHE[key])
    return with_fods(world, fods)


def fod_footprint(grid: OccupancyGrid, fods) -> np.ndarray:
    """Cells whose centers lie inside any FOD disc."""
    H, W = grid.shape
    ys = (np.arange(H) + 0.5) * grid.resolution
    xs = (np.arange(W) + 0.5) * grid.resolution
    X, Y = np.meshgrid(xs, ys)
    mask = np.zeros((H, W), dtype=bool)
    for f in fods:
        mask |= (X - f.center[0]) ** 2 + (Y - f.center[1]) ** 2 <= f.radius ** 2
    return mask


def with_fods(world: InspectionWorld, fods) -> InspectionWorld:
    fods = tuple(fods)
    nav = world.grid.with_blocked(fod_footprint(world.grid, fods)) if fods else None
    return replace(world, fods=fods, nav_grid=nav)


def edge_sites(grid: OccupancyGrid) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """(free cell, wall direction) for every free cell side facing an occupied cell or the border."""
    H, W = grid.shape
    sites = []
    for r, c in grid.free_cells():
        for dr, dc in ((0, 1), (1, 0), (0, -1), (-1, 0)):
            nr, nc = r + dr, c + dc
            if not (0 <= nr < H and 0 <= nc < W) or grid.occupied[nr, nc]:
                sites.append(((int(r), int(c)), (dr, dc)))
    return sites


def _site_center(grid: OccupancyGrid, site, radius: float) -> np.ndarray:
    (r, c), (dr, dc) = site
    mid = grid.center((r, c)) + 0.5 * grid.resolution * np.array([dc, dr], dtype=float)
    return mid - radius * np.array([dc, dr], dtype=float)


def _fod_valid(world: InspectionWorld, fod: FOD, others, reference) -> bool:
    grid = world.grid
    for o in others:
        if np.linalg.norm(o.center - fod.center) < o.radius + fod.radius + grid.resolution:
            return False
    blocked = grid.with_blocked(fod_footprint(grid, list(others) + [fod]))
    if np.any(blocked.occupied[tuple(np.array(world.scenario.start))]):
        return False
    comps, adj = reference
    if not np.array_equal(region_components(blocked), comps) or region_adjacency(blocked) != adj:
        return False
    return _observable(world, fod, blocked)


def _observable(world: InspectionWorld, fod: FOD, grid: OccupancyGrid) -> bool:
    s = world.sensor
    cells = grid.free_cells()
    centers = (cells[:, ::-1] + 0.5) * grid.resolution
    d = np.linalg.norm(centers - fod.center, axis=1) - fod.radius
    near = np.flatnonzero((d >= s.min_depth) & (d <= s.max_depth))
    for k in near[np.argsort(d[near], kind="stable")][:40]:
        p = centers[k]
        v = fod.center - p
        a = math.atan2(v[1], v[0])
        hit = ray_disc(p, a, fod.center, fod.radius)
        if hit <= cast_ray(world.grid, p, a, s.max_depth):
            return True
    return False


def place_fods(world: InspectionWorld, count: int, rng: np.random.Generator,
               radius_range: tuple[float, float] | None = None) -> list[FOD]:
    """Place ``count`` disc FODs against walls.

    Each is drawn uniformly over free cells that touch a wall (then over that
    cell's wall sides).  A placement that would split a region, cut a doorway,
    cover the start cell, overlap another FOD or be invisible from every
    reachable cell is moved to the nearest valid wall site.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return []
    lo, hi = radius_range or world.scenario.fod_radius
    grid = world.grid
    sites = edge_sites(grid)
    by_cell: dict[tuple[int, int], list] = {}
    for s in sites:
        by_cell.setdefault(s[0], []).append(s)
    cells = sorted(by_cell)
    reference = (region_components(grid), region_adjacency(grid))
    placed: list[FOD] = []
    for _ in range(count):
        radius = float(rng.uniform(lo, hi))
        cell = cells[int(rng.integers(len(cells)))]
        choices = by_cell[cell]
        site = choices[int(rng.integers(len(choices)))]
        origin = _site_center(grid, site, radius)
        candidates = sorted(
            sites, key=lambda s: (float(np.linalg.norm(_site_center(grid, s, radius) - origin)),
                                  grid.index(s[0]), s[1]))
        for s in candidates:
            fod = FOD(_site_center(grid, s, radius), radius)
            if _fod_valid(world, fod, placed, reference):
                placed.append(fod)
                break
        else:
            raise WorldError("no valid location left for a foreign object")
    return placed


def random_world(sc: Scenario, rng: np.random.Generator, count: int | None = None) -> InspectionWorld:
    world = build_world(sc)
    if count is None:
        lo, hi = sc.fod_count
        count = int(rng.integers(lo, hi + 1))
    return with_fods(world, place_fods(world, count, rng))


# -- visibility for waypoint scoring -----------------------------------------------------

class VisibilityIndex:
    """Per-cell lists of reference points visible from the cell center, ignoring FODs.

    A point counts as visible when it lies within [min_depth, max_depth] and no
    wall lies closer along its bearing (a polar depth map of ``bins`` rays per
    cell).  Lists are built lazily and cached; since FODs are ignored one index
    serves every world built from a scenario (see :meth:`for_scenario`).
    """

    _shared: dict[int, "VisibilityIndex"] = {}

    def __init__(self, grid: OccupancyGrid, points: np.ndarray, sensor: SensorModel, bins: int = 720):
        self.grid = grid
        self.points = np.asarray(points, dtype=float)
        self.sensor = sensor
        self.bins = bins
        self._cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    @classmethod
    def for_world(cls, world: InspectionWorld) -> "VisibilityIndex":
        key = id(world.scenario)
        idx = cls._shared.get(key)
        if idx is None or idx.grid is not world.grid:
            cls._shared.clear()
            idx = cls._shared[key] = cls(world.grid, world.cloud.points, world.sensor)
        return idx

    def _depths(self, p) -> np.ndarray:
        g = self.grid
        angles = 2 * math.pi * np.arange(self.bins) / self.bins
        step = 0.25 * g.resolution
        t = np.arange(1, int(self.sensor.max_depth / step) + 2) * step
        xs = p[0] + np.outer(np.cos(angles), t)
        ys = p[1] + np.outer(np.sin(angles), t)
        c = np.floor(xs / g.resolution).astype(int)
        r = np.floor(ys / g.resolution).astype(int)
        H, W = g.shape
        inside = (r >= 0) & (r < H) & (c >= 0) & (c < W)
        hit = ~inside
        hit[inside] = g.occupied[r[inside], c[inside]]
        first = np.where(hit.any(axis=1), hit.argmax(axis=1), t.size - 1)
        return t[first]

    def visible(self, cell) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(point indices, bearings, distances) of reference points visible from ``cell``."""
        cell = (int(cell[0]), int(cell[1]))
        hit = self._cache.get(cell)
        if hit is not None:
            return hit
        s = self.sensor
        p = self.grid.center(cell)
        v = self.points - p
        dist = np.hypot(v[:, 0], v[:, 1])
        near = np.flatnonzero((dist >= s.min_depth) & (dist <= s.max_depth))
        bearing = np.arctan2(v[near, 1], v[near, 0])
        depth = self._depths(p)
        k = np.round(np.mod(bearing, 2 * math.pi) / (2 * math.pi) * self.bins).astype(int) % self.bins
        ok = dist[near] <= depth[k] + 0.6 * self.grid.resolution
        out = (near[ok], bearing[ok], dist[near][ok])
        self._cache[cell] = out
        return out

    def frustum_scores(self, cell, headings, mu_p: np.ndarray) -> np.ndarray:
        """μ_p mass inside the frustum for each heading at ``cell``."""
        idx, bearing, _ = self.visible(cell)
        headings = np.atleast_1d(np.asarray(headings, dtype=float))
        rel = np.abs(np.mod(bearing[None, :] - headings[:, None] + math.pi, 2 * math.pi) - math.pi)
        return (rel <= self.sensor.fov / 2) @ mu_p[idx]

    def frustum_score(self, cell, heading: float, mu_p: np.ndarray) -> float:
        return float(self.frustum_scores(cell, [heading], mu_p)[0])
