import abc
import threading


class WorkerThread(threading.Thread):
    """Base class for worker threads."""

    def __init__(self, name: str = None):
        super().__init__(name=name, daemon=True)
        self._error = None
        self._cancelled = threading.Event()

    def cancel(self):
        """Interrupts this thread."""
        self._cancelled.set()

    @property
    def cancelled(self) -> bool:
        """Whether this thread was cancelled."""
        return self._cancelled.is_set()

    @abc.abstractmethod
    def run(self):
        pass

    @property
    def failed(self) -> bool:
        """Returns True if the operation failed."""
        return self._error is not None

    @property
    def error(self) -> str | None:
        """If the operation failed, returns the reason; otherwise returns None."""
        return self._error

    @error.setter
    def error(self, value: str):
        """Sets the error message."""
        self._error = value
