from .affordance import Affordance, default_affordance, gamma
from .push import ContactError, ContactPoint, StableCone, footprint_of, is_sticking, pusher_frame_offset, \
    sample_contacts, stable_cone
from .search import ContactSwitch, PushAction, PushPrimitive, PushProblem, PushSearchFailure, PushSegment, \
    SearchState, expand_state, heuristic_polygons, robot_detour, search_primitive
