# messages.py
import time
from typing import Any, Dict, Optional


def create_run_message(role: str, name: str, content: Dict[str, Any], run_id: Optional[str] = None):
    return {
        "type": "message",
        "role": role,            # "node" | "system"
        "name": name,            # target node
        "content": content,      # structured payload
        "metadata": {
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "run_id": run_id,
        }
    }


def get_run_id(msg):
    return msg.get("metadata", {}).get("run_id")
