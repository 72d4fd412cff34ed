# tools/report_writer.py
"""
Result files: versioned curve CSVs, JSON summaries and run manifests.
"""
import csv
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Any, Dict, Iterable, List, Mapping, Optional, Sequence

from config import __version__
from crf.model import CrfInstance
from tools.instance_io import instance_to_document
from utils.validation import InstanceParseError

logger = logging.getLogger(__name__)

CURVES_SCHEMA = "# herdcrf-curves v1"
CURVE_COLUMNS = [
    "run_key", "instance", "method", "moments", "eta_u", "eta_p", "lambda",
    "observed_fraction", "sigmoid_a", "sigmoid_b", "M", "oracle", "mode",
]


def format_float(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def canonical_json_bytes(payload: Any) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def config_hash(payload: Mapping[str, Any]) -> str:
    """SHA-256 over the canonical JSON of every input that shapes the output"""
    return sha256_hex(canonical_json_bytes(payload))


def instance_digest(instance: CrfInstance) -> str:
    return sha256_hex(canonical_json_bytes(instance_to_document(instance)))


def write_curves_csv(rows: Iterable[Mapping[str, Any]], handle: IO[str]) -> int:
    """Write the schema comment line, the header and one row per (run, M)"""
    handle.write(CURVES_SCHEMA + "\n")
    writer = csv.DictWriter(handle, fieldnames=CURVE_COLUMNS, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    count = 0
    for row in rows:
        writer.writerow({k: format_float(row.get(k)) for k in CURVE_COLUMNS})
        count += 1
    return count


def read_curves_csv(handle: IO[str]) -> List[Dict[str, str]]:
    """Read a curves CSV, refusing files with another schema line"""
    first = handle.readline().rstrip("\n")
    if first != CURVES_SCHEMA:
        raise InstanceParseError(f"Unexpected curves schema line: {first!r}")
    return list(csv.DictReader(handle))


def write_json(path: Path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, default=str)
        handle.write("\n")
    return path


@dataclass
class RunManifest:
    command: List[str]
    config_hash: str
    instance_digest: Optional[str] = None
    version: str = __version__
    started_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    duration_s: float = 0.0
    _clock: float = field(default_factory=time.perf_counter, repr=False)

    def finish(self) -> "RunManifest":
        self.duration_s = round(time.perf_counter() - self._clock, 6)
        return self

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.pop("_clock")
        return data


def manifest_path_for(out_path: Path) -> Path:
    out_path = Path(out_path)
    return out_path.with_name(out_path.name + ".manifest.json")


def write_manifest(manifest: RunManifest, path: Path) -> Path:
    logger.debug("Writing run manifest %s", path)
    return write_json(path, manifest.to_dict())


def build_manifest(command: Sequence[str], inputs: Mapping[str, Any],
                   instance: Optional[CrfInstance] = None) -> RunManifest:
    return RunManifest(
        command=list(command),
        config_hash=config_hash(inputs),
        instance_digest=None if instance is None else instance_digest(instance),
    )
