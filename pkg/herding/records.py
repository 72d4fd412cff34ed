# herding/records.py
"""JSON Lines output for hypothesis sets: one record per sample."""
import json
from typing import IO, Any, Dict, Iterator, List

from herding.dynamics import HypothesisSet


def hypothesis_records(hypotheses: HypothesisSet) -> Iterator[Dict[str, Any]]:
    for index, sample in enumerate(hypotheses.samples):
        record = {
            "m": index + 1,
            "labeling": list(sample.assignment),
            "energy": hypotheses.energy_trace[index],
            "error": hypotheses.error_trace[index],
            "condition": hypotheses.condition_trace[index],
        }
        if hypotheses.inference_converged:
            record["inference_converged"] = hypotheses.inference_converged[index]
        yield record


def write_jsonl(hypotheses: HypothesisSet, handle: IO[str]) -> int:
    """Write every record as a compact JSON line; returns the number of lines"""
    count = 0
    for record in hypothesis_records(hypotheses):
        handle.write(json.dumps(record, separators=(",", ":")))
        handle.write("\n")
        count += 1
    return count


def read_jsonl(handle: IO[str]) -> List[Dict[str, Any]]:
    return [json.loads(line) for line in handle if line.strip()]
