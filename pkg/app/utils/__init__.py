from . import tables, threads
