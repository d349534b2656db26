"""Interactive navigation among movable obstacles on a dynamic directed visibility graph."""
