import math
import pathlib

APP_NAME = 'DV-Nav'
VERSION = '1.0'
CONFIG_FILE = pathlib.Path('config.ini').absolute()
LOG_FILE = pathlib.Path('logs/nav.log').absolute()
GRAPH_GRAMMAR_FILE = (pathlib.Path(__file__).parent / 'assets' / 'dvgraph.lark').absolute()
GRAPH_FORMAT_VERSION = 1
SCENARIO_FORMAT_VERSION = 1

# Global tolerance for point equality and on-boundary tests, in meters.
EPSILON = 1e-6
GRAVITY = 9.81
TWO_PI = 2 * math.pi

# Sensor
SCAN_ANGULAR_RESOLUTION = 0.25  # degrees
SCAN_MAX_RANGE = 15.0
SCAN_RATE = 10.0
SCAN_NOISE_SIGMA = 0.0
GRAPH_UPDATE_EVERY = 4

# Mapping
LOCAL_GRID_SIZE = 60.0
GRID_RESOLUTION = 0.15
SIMPLIFY_TOLERANCE_CELLS = 1.5
# Enclosed free areas at least this large survive contour extraction, in m²
HOLE_MIN_AREA = 0.25
HOLE_CUT_OVERLAP = 0.02
MIN_BLOB_CELLS = 2
ASSOCIATION_RADIUS = 0.3
VOTING_THRESHOLD = 5
WAYPOINT_OFFSET = 0.5
CHORD_SAGITTA = 0.02

# Robot
ROBOT_RADIUS = 0.15
ROBOT_MAX_PUSH_FORCE = 50.0
ROBOT_MAX_SPEED = 1.0
ROBOT_MAX_YAW_RATE = 1.5

# Interaction
PUSH_SPEED = 0.2
PUSH_ARC_LENGTH = 0.3
CURVATURE_SAMPLES = 7
HEADING_BIN = 10.0  # degrees
NODE_BUDGET = 20_000
CONTACT_WIDTH = 0.2
DEFAULT_FRICTION = 0.5
DEFAULT_EFFORT = 1.0
NOMINAL_FORCE = 0.3 * 1.0 * GRAVITY

# Executor
APPROACH_RADIUS = 1.5
COST_THRESHOLD = 0.5
NOT_MOVED_TICKS = 3
REPLAN_CAP = 3
GOAL_TOLERANCE = 0.3
CLEARANCE_MARGIN = 0.1
SLOWDOWN_RADIUS = 1.0
CONTACT_TOLERANCE = 0.05

# Harness
TIME_OF_IMPACT_TOLERANCE = 1e-3
ROOM_PATH_THRESHOLD = 15.0
TUNNEL_PATH_THRESHOLD = 80.0
OFFICE_PATH_THRESHOLD = 40.0
WALL_THICKNESS = 0.3
DOORWAY_WIDTH = 1.2
TASKS_PER_SCENARIO = 10
SVG_HASH_SALT = 'dv-nav'
