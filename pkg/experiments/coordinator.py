# experiments/coordinator.py
from concurrent.futures import ThreadPoolExecutor
from queue import Queue
import threading
import logging
from typing import Any, Callable, Dict, List, Optional

from messages import create_run_message, get_run_id
from utils.logging_config import system_logger

logger = logging.getLogger(__name__)


class ExperimentCoordinator:
    """
    Routes run messages through registered nodes. Every run gets its own
    queue; independent runs are fanned out over a thread pool and results are
    returned in sorted run-key order.
    """

    def __init__(self, threads: int = 1):
        self.threads = max(1, int(threads))
        self.nodes: Dict[str, Callable] = {}  # name -> callable(msg, send)
        self.edges: Dict[str, List[str]] = {}  # source_node -> [target_nodes]
        self.consumers_log: List[Dict[str, Any]] = []  # routed messages, for inspection
        self._log_lock = threading.Lock()
        self._results: Dict[str, Dict[str, Any]] = {}
        self._results_lock = threading.Lock()

    def register_node(self, name: str, fn: Callable):
        self.nodes[name] = fn

    def add_edge(self, source: str, target: str):
        """Add an edge from source node to target node."""
        self.edges.setdefault(source, []).append(target)

    def record_result(self, run_id: str, content: Dict[str, Any]):
        with self._results_lock:
            self._results[run_id] = content

    def _dispatch(self, msg: Dict[str, Any], queue: Queue):
        target_name = msg.get("name")
        run_id = get_run_id(msg)
        with self._log_lock:
            self.consumers_log.append({"name": target_name, "run_id": run_id})

        node_fn = self.nodes.get(target_name)
        if node_fn is None:
            logger.warning("No node registered for %s", target_name)
            return

        try:
            result = node_fn(msg, queue.put)
        except Exception as exc:
            # Nodes report expected failures themselves; anything else ends the run here
            system_logger.log_error(exc, {"node": target_name, "run_id": run_id})
            self.record_result(run_id, {"status": "error", "run": msg.get("content", {}).get("run"),
                                        "error": f"{type(exc).__name__}: {exc}", "node": target_name})
            return

        if result and target_name in self.edges:
            for next_node in self.edges[target_name]:
                queue.put(create_run_message("node", next_node, result.get("content", {}), run_id))

    def execute_run(self, initial_msg: Dict[str, Any]) -> Optional[Dict[str, Any]]:
        """Process one run's messages until its queue is empty."""
        queue: Queue = Queue()
        queue.put(initial_msg)
        while not queue.empty():
            self._dispatch(queue.get(), queue)
        with self._results_lock:
            return self._results.get(get_run_id(initial_msg))

    def run_all(self, messages: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
        """Execute every run and return results sorted by run id."""
        if self.threads == 1 or len(messages) <= 1:
            for msg in messages:
                self.execute_run(msg)
        else:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                list(pool.map(self.execute_run, messages))

        with self._results_lock:
            return [self._results[key] for key in sorted(self._results)]

    def get_run_events(self, run_id: Optional[str] = None):
        with self._log_lock:
            if run_id is None:
                return list(self.consumers_log)
            return [m for m in self.consumers_log if m.get("run_id") == run_id]
