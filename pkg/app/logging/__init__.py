from .logger import logger, set_level
