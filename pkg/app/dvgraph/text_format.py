"""Versioned text format of DV-graphs, used to save and load prior maps."""
from __future__ import annotations

import json
import pathlib
import typing as typ

import lark

from .graph import DVGraph, PolygonRecord, SuppressedInteraction, VertexKind
from .. import constants
from ..interaction import Affordance, ContactPoint, ContactSwitch, PushPrimitive, PushSegment
from ..logging import logger
from ..model import Point2, PolygonClass, Pose2


class GraphFormatError(ValueError):
    pass


def _num(x: float) -> str:
    return repr(float(x))


def _str(s: str | None) -> str:
    return '-' if s is None else json.dumps(s, ensure_ascii=False)


def _pose(p: Pose2) -> str:
    return f'{_num(p.x)} {_num(p.y)} {_num(p.psi)}'


def _contact(c: ContactPoint) -> str:
    return (f'({c.edge} {_num(c.t)} {_num(c.point.x)} {_num(c.point.y)} '
            f'{_num(c.normal.x)} {_num(c.normal.y)})')


def dumps(graph: DVGraph) -> str:
    """Serializes a graph. Output is sorted, so equal graphs give equal text.

    :param graph: The graph to serialize.
    :return: The text, newline-terminated.
    """
    lines = [f'dvgraph {constants.GRAPH_FORMAT_VERSION}', f'frame {_str(graph.frame)}']
    for v in graph.vertices():
        component = '-' if v.component_id is None else str(v.component_id)
        lines.append(f'vertex {v.id} {v.kind.value} {_num(v.position.x)} {_num(v.position.y)} {v.unobserved_count} '
                     f'{_str(v.polygon_id)} {_str(v.object_id)} {component}')
    for r in graph.polygon_records():
        lines.append(f'polygon {_str(r.id)} {r.kind.value} {_str(r.object_id)} ' + ' '.join(map(str, r.vertex_ids)))
    for e in graph.visibility_edges():
        lines.append(f'visible {e.a} {e.b} {_num(e.length)}')
    for a in graph.affordances():
        lines.append(f'affordance {_str(a.object_id)} {str(a.pushable).lower()} '
                     f'{_num(a.friction)} {_num(a.effort)} {_num(a.resistance)}')
    for e in graph.interaction_edges():
        p = e.primitive
        lines.append(f'interaction {e.source} {e.target} {_str(e.object_id)} {_num(e.cost)} {_num(p.cost)}')
        lines.append(f'start {_pose(p.start_pose)}')
        lines.append(f'result {_pose(p.result_pose)}')
        for action in p.actions:
            if isinstance(action, PushSegment):
                lines.append(f'push {_contact(action.contact)} {_num(action.v)} {_num(action.omega)} '
                             f'{_num(action.duration)} {_pose(action.object_start)} {_pose(action.robot_start)}')
            else:
                points = ''.join(f' {_num(q.x)} {_num(q.y)}' for q in action.path)
                lines.append(f'switch {_contact(action.source)} {_contact(action.target)}{points}')
        lines.append('end')
    for s in graph.suppressed:
        lines.append(f'suppressed {_str(s.object_id)} {_num(s.source.x)} {_num(s.source.y)} '
                     f'{_num(s.target.x)} {_num(s.target.y)}')
    return '\n'.join(lines) + '\n'


@lark.v_args(inline=True)
class _TreeToRecords(lark.Transformer):
    """Converts a parse tree into plain record tuples."""

    def start(self, *records):
        return list(records)

    def header(self, version, frame):
        return 'header', int(version), json.loads(frame)

    def number(self, token):
        return float(token)

    def none(self):
        return None

    def optional(self, value):
        return None if value is None else json.loads(value)

    def optional_int(self, value):
        return None if value is None else int(value)

    def point(self, x, y):
        return Point2(x, y)

    def pose(self, x, y, psi):
        return Pose2(x, y, psi)

    def contact(self, edge, t, px, py, nx, ny):
        return ContactPoint(int(edge), t, Point2(px, py), Point2(nx, ny))

    def vertex(self, vid, kind, x, y, unobserved, polygon_id, object_id, component):
        return 'vertex', int(vid), VertexKind(str(kind)), Point2(x, y), int(unobserved), polygon_id, object_id, \
            component

    def polygon(self, pid, kind, object_id, *vertex_ids):
        return 'polygon', PolygonRecord(json.loads(pid), PolygonClass(str(kind)), tuple(int(i) for i in vertex_ids),
                                        object_id)

    def visible(self, a, b, length):
        return 'visible', int(a), int(b), length

    def affordance(self, object_id, pushable, friction, effort, resistance):
        return 'affordance', Affordance(json.loads(object_id), str(pushable) == 'true', friction, effort, resistance)

    def push(self, contact, v, omega, duration, object_start, robot_start):
        return PushSegment(contact, v, omega, duration, object_start, robot_start)

    def switch(self, source, target, *path):
        return ContactSwitch(source, target, tuple(path))

    def interaction(self, source, target, object_id, cost, primitive_cost, start_pose, result_pose, *actions):
        oid = json.loads(object_id)
        primitive = PushPrimitive(oid, tuple(actions), start_pose, result_pose, primitive_cost)
        return 'interaction', int(source), int(target), oid, cost, primitive

    def suppressed(self, object_id, source, target):
        return 'suppressed', SuppressedInteraction(json.loads(object_id), source, target)


_parser = None


def _get_parser() -> lark.Lark:
    global _parser
    if _parser is None:
        with constants.GRAPH_GRAMMAR_FILE.open(encoding='UTF-8') as f:
            _parser = lark.Lark(f.read(), parser='lalr', lexer='contextual', start='start')
    return _parser


def loads(text: str) -> DVGraph:
    """Parses a graph from its text form.

    :param text: Output of dumps.
    :return: The graph.
    :raise GraphFormatError: If the text is malformed, has another format version or is inconsistent.
    """
    try:
        records = _TreeToRecords().transform(_get_parser().parse(text))
    except lark.UnexpectedCharacters as e:
        raise GraphFormatError(f'illegal character {text[e.pos_in_stream]!r} at line {e.line}, column {e.column}')
    except lark.UnexpectedInput as e:
        raise GraphFormatError(f'syntax error at line {e.line}, column {e.column}')
    except lark.exceptions.VisitError as e:
        raise GraphFormatError(f'invalid value: {e.orig_exc}')

    _, version, frame = records[0]
    if version != constants.GRAPH_FORMAT_VERSION:
        raise GraphFormatError(f'unsupported format version {version}')
    graph = DVGraph(frame)
    try:
        for record in records[1:]:
            _apply(graph, record)
    except (KeyError, ValueError) as e:
        raise GraphFormatError(f'inconsistent graph: {e}')
    return graph


def _apply(graph: DVGraph, record: tuple):
    match record:
        case ('vertex', vid, kind, position, unobserved, polygon_id, object_id, component):
            graph.add_vertex(position, kind, polygon_id, object_id, component, vertex_id=vid,
                             unobserved_count=unobserved)
        case ('polygon', polygon):
            graph.add_polygon_record(polygon)
        case ('visible', a, b, length):
            if not graph.has_vertex(a) or not graph.has_vertex(b):
                raise KeyError(f'visibility edge ({a}, {b})')
            graph.add_visibility_edge(a, b, length)
        case ('affordance', affordance):
            graph.set_affordance(affordance)
        case ('interaction', source, target, object_id, cost, primitive):
            graph.set_interaction_edge(source, target, object_id, cost, primitive)
        case ('suppressed', entry):
            graph.add_suppressed(entry)


def save_graph(graph: DVGraph, path: pathlib.Path) -> bool:
    """Writes a graph to a file.

    :return: True if the file was written.
    """
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps(graph), encoding='UTF-8')
    except OSError as e:
        logger.exception(e)
        return False
    return True


def load_graph(path: pathlib.Path) -> DVGraph | None:
    """Reads a graph file.

    :return: The graph, or None if the file could not be read.
    :raise GraphFormatError: If the file content is malformed.
    """
    try:
        text = path.read_text(encoding='UTF-8')
    except OSError as e:
        logger.exception(e)
        return None
    return loads(text)


def graph_summary(graph: DVGraph) -> dict[str, typ.Any]:
    return {
        'frame': graph.frame,
        'vertices': len(graph),
        'polygons': len(graph.polygon_records()),
        'visibility_edges': len(graph.visibility_edges()),
        'interaction_edges': len(graph.interaction_edges()),
        'waypoints': len(graph.waypoints()),
    }
