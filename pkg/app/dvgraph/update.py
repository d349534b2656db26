"""The per-frame update cycle of the global DV-graph."""
from __future__ import annotations

import dataclasses
import itertools

from .connectivity import connectivity_analysis
from .graph import DVGraph, VertexKind, build_local_graph
from .merge import FieldOfView, merge_local_into_global
from ..config import Config
from ..extraction import PolygonSetLocal, extract
from ..interaction import PushPrimitive, PushSearchFailure, gamma
from ..logging import logger
from ..model import Point2
from ..world import ScanFrame

_CacheKey = tuple[str, tuple[int, int], tuple[int, int], tuple[int, int], tuple]


@dataclasses.dataclass
class UpdateStats:
    updates: int = 0
    gamma_calls: int = 0
    cache_hits: int = 0
    failures: int = 0


class GraphUpdater:
    """Owns the global graph and folds every new scan into it.

    A scan is rasterized and turned into polygons, a local graph is built on them, every movable object
    gets its components and waypoints, and every ordered waypoint pair of a pushable object gets an
    interaction edge. The local graph is then merged into the global one.
    """

    def __init__(self, config: Config = None, interactive: bool = True, reduced: bool = True,
                 prior: DVGraph = None):
        """Creates an updater.

        :param config: Settings; the defaults if None.
        :param interactive: If false no interaction edge is ever computed.
        :param reduced: Keep only tangent visibility edges in the global graph.
        :param prior: A prior map to start from.
        """
        self.config = config or Config()
        self.interactive = interactive
        self.reduced = reduced
        self.graph = prior.snapshot() if prior is not None else DVGraph()
        self.last_polys: PolygonSetLocal | None = None
        self.stats = UpdateStats()
        self._cache: dict[_CacheKey, tuple[float, PushPrimitive] | None] = {}

    def update(self, scan: ScanFrame) -> DVGraph:
        """Runs one update cycle.

        :param scan: The newest labeled scan.
        :return: The new global graph.
        """
        _, polys = extract(scan, self.config.mapping)
        local = self.local_graph(polys)
        fov = FieldOfView(scan.origin.position, self.config.sensor.max_range, polys.polygons())
        self.graph = merge_local_into_global(self.graph, local, fov, self.config.mapping, self.reduced)
        self.last_polys = polys
        self.stats.updates += 1
        return self.graph

    def local_graph(self, polys: PolygonSetLocal) -> DVGraph:
        """Builds the local graph of one frame, waypoints and interaction edges included."""
        local = build_local_graph(polys, frame=self.graph.frame)
        for oid in polys.movable_ids:
            components = connectivity_analysis(polys, oid, self.config.mapping)
            waypoints = [c.waypoint for c in components if c.waypoint is not None]
            ids = [local.add_vertex(w.position, VertexKind.TOPO_WAYPOINT, object_id=oid, component_id=w.component_id)
                   for w in waypoints]
            local.connect_visible(ids)
            if self.interactive and len(ids) >= 2:
                self._add_interactions(local, polys, oid, ids)
        return local

    def _add_interactions(self, local: DVGraph, polys: PolygonSetLocal, object_id: str, waypoint_ids: list[int]):
        affordance = self.graph.affordance(object_id, self.config.interaction)
        if not affordance.pushable:
            return
        movable = polys.movable_polygon(object_id)
        obstacles = [p for p in polys.polygons() if p.id != movable.id]
        for s, t in itertools.permutations(waypoint_ids, 2):
            start, goal = local.vertex(s).position, local.vertex(t).position
            if self.graph.is_suppressed(object_id, start, goal, self.config.mapping.association_radius):
                continue
            key = self._key(object_id, movable.centroid, start, goal, affordance)
            if key in self._cache:
                self.stats.cache_hits += 1
                cached = self._cache[key]
                if cached is not None:
                    local.set_interaction_edge(s, t, object_id, cached[0], cached[1])
                continue
            self.stats.gamma_calls += 1
            try:
                cost, primitive, _ = gamma(start, goal, movable, obstacles, affordance, self.config.interaction,
                                           local, (s, t))
            except PushSearchFailure:
                self.stats.failures += 1
                self._cache[key] = None
            else:
                self._cache[key] = (cost, primitive)

    def _key(self, object_id: str, centroid: Point2, start: Point2, goal: Point2, affordance) -> _CacheKey:
        step = self.config.mapping.resolution

        def cell(p: Point2) -> tuple[int, int]:
            return round(p.x / step), round(p.y / step)

        return (object_id, cell(centroid), cell(start), cell(goal),
                (affordance.pushable, affordance.friction, affordance.effort))

    def reestimate(self, object_id: str, start: Point2, goal: Point2) -> tuple[float, PushPrimitive]:
        """Recomputes the cost of pushing an object between two points from the newest polygons.

        :raise PushSearchFailure: If no strategy exists or the object is not in view.
        """
        polys = self.last_polys
        movable = polys.movable_polygon(object_id) if polys is not None else None
        if movable is None:
            raise PushSearchFailure(PushSearchFailure.NO_CONTACT)
        obstacles = [p for p in polys.polygons() if p.id != movable.id]
        affordance = self.graph.affordance(object_id, self.config.interaction)
        cost, primitive, _ = gamma(start, goal, movable, obstacles, affordance, self.config.interaction)
        logger.info(f'geometric re-estimate for {object_id!r}: {cost:.3f}')
        return cost, primitive

    def clear_cache(self, object_id: str = None):
        if object_id is None:
            self._cache.clear()
        else:
            self._cache = {k: v for k, v in self._cache.items() if k[0] != object_id}

    def snapshot(self) -> DVGraph:
        return self.graph.snapshot()
