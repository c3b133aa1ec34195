import logging
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)

# Latest state per tracked task, keyed by task id
progress_store: Dict[str, Dict[str, Any]] = {}


class ProgressTracker:
    """Progress callback for long studies; logs percent complete"""

    def __init__(self, task_id: str):
        self.task_id = task_id
        self.progress_store = progress_store

    def update_progress(self, current: int, total: int, message: str):
        """Update progress for this task"""
        percent = (current / total * 100) if total > 0 else 0
        self.progress_store[self.task_id] = {
            "current": current,
            "total": total,
            "percent": percent,
            "message": message,
            "status": "processing",
        }
        logger.info(f"Progress for {self.task_id}: {percent:.0f}% - {message}")

    def __call__(self, current: int, total: int, message: str):
        self.update_progress(current, total, message)

    def complete(self, result: Optional[Dict[str, Any]] = None):
        """Mark task as complete"""
        self.progress_store[self.task_id] = {
            "percent": 100,
            "message": "Complete",
            "status": "complete",
            "result": result or {},
        }
        logger.info(f"Task {self.task_id} marked as complete")

    def fail(self, error: str):
        self.progress_store[self.task_id] = {"percent": 0, "message": error, "status": "error"}
        logger.error(f"Task {self.task_id} failed: {error}")
