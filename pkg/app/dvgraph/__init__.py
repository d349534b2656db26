from .connectivity import FreeComponent, TopoWaypoint, connectivity_analysis, free_labels, intersection_points, \
    region_vertices, verify_topo_visibility
from .graph import DVGraph, DVVertex, FrameMismatchError, InteractionEdge, PolygonRecord, SuppressedInteraction, \
    VertexKind, VisibilityEdge, build_local_graph, build_prior_graph
from .merge import FieldOfView, associate, merge_local_into_global
from .text_format import GraphFormatError, dumps, graph_summary, load_graph, loads, save_graph
from .update import GraphUpdater, UpdateStats
