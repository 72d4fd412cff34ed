# tools/instance_io.py
"""
JSON instance format (UTF-8):

    {"labels": K,
     "nodes": [{"id": n, "unary_scores": [..] | null, "observed": bool,
                "gt": int | null, "color": [r, g, b] | null,
                "unary_potential": [..]}],          # optional, log-probabilities
     "edges": [{"i": a, "j": b, "similarity": s | null}]}

`unary_scores: null` marks a missing unary term. Colors are reals in [0, 1];
they are used only when every node carries one.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from crf.model import CrfGraph, CrfInstance, LabelSpace
from tools.potentials import (
    PROBABILITY_FLOOR, SEMANTIC_POTTS, PottsParams, SigmoidParams, assemble_instance,
)
from utils.logging_config import system_logger
from utils.validation import InstanceParseError, ValidationError, validate_file_path

logger = logging.getLogger(__name__)


def _optional_row(value: Any, label_count: int, field_name: str, node_id: int) -> np.ndarray:
    if value is None:
        return np.full(label_count, np.nan)
    if not isinstance(value, list):
        raise InstanceParseError(f"node {node_id}: {field_name} must be a list or null")
    try:
        row = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise InstanceParseError(f"node {node_id}: {field_name} must hold numbers")
    if row.shape != (label_count,):
        raise ValidationError(
            f"node {node_id}: {field_name} has {row.size} entries, expected {label_count}"
        )
    return row


def parse_instance(document: Dict[str, Any],
                   sigmoid: SigmoidParams = SigmoidParams(),
                   potts: PottsParams = SEMANTIC_POTTS,
                   floor: float = PROBABILITY_FLOOR) -> CrfInstance:
    """
    Build a CrfInstance from a decoded JSON document

    Raises:
        InstanceParseError: If required fields are missing or mistyped
        ValidationError: If values are structurally valid but inconsistent
    """
    if not isinstance(document, dict):
        raise InstanceParseError("Instance document must be a JSON object")
    try:
        label_count = document["labels"]
        nodes = document["nodes"]
        edges = document.get("edges", [])
    except KeyError as exc:
        raise InstanceParseError(f"Missing required field: {exc.args[0]}")

    if not isinstance(label_count, int) or isinstance(label_count, bool):
        raise InstanceParseError("'labels' must be an integer")
    if not isinstance(nodes, list) or not isinstance(edges, list) or not nodes:
        raise InstanceParseError("'nodes' must be a nonempty list and 'edges' a list")

    labels = LabelSpace(label_count, document.get("label_names"))

    try:
        ordered = sorted(nodes, key=lambda node: int(node["id"]))
    except (KeyError, TypeError, ValueError):
        raise InstanceParseError("Every node needs an integer 'id'")
    ids = [int(node["id"]) for node in ordered]
    if ids != list(range(len(ids))):
        raise ValidationError("Node ids must be exactly 0..N-1")

    n = len(ordered)
    scores = np.full((n, label_count), np.nan)
    potential = np.full((n, label_count), np.nan)
    observed = np.zeros(n, dtype=bool)
    gt = []
    colors = []
    for node_id, node in enumerate(ordered):
        scores[node_id] = _optional_row(node.get("unary_scores"), label_count, "unary_scores", node_id)
        potential[node_id] = _optional_row(node.get("unary_potential"), label_count, "unary_potential", node_id)
        observed[node_id] = bool(node.get("observed", node.get("unary_scores") is not None))
        gt.append(node.get("gt"))
        colors.append(node.get("color"))

    if all(g is not None for g in gt):
        ground_truth = [int(g) for g in gt]
    elif any(g is not None for g in gt):
        raise ValidationError("Ground truth must be given for all nodes or none")
    else:
        ground_truth = None

    color_array = None
    if all(c is not None for c in colors):
        try:
            color_array = np.asarray(colors, dtype=float)
        except (TypeError, ValueError):
            raise InstanceParseError("Node colors must be numeric [r, g, b] lists")

    try:
        pairs = [(int(e["i"]), int(e["j"])) for e in edges]
        similarity = np.asarray(
            [np.nan if e.get("similarity") is None else float(e["similarity"]) for e in edges],
            dtype=float,
        )
    except (KeyError, TypeError, ValueError):
        raise InstanceParseError("Every edge needs integer 'i' and 'j' fields")

    graph = CrfGraph(n, tuple(pairs))
    # Similarity follows the canonical (sorted) edge order
    if pairs:
        order = sorted(range(len(pairs)), key=lambda k: (min(pairs[k]), max(pairs[k])))
        similarity = similarity[order]

    return assemble_instance(
        graph, labels,
        unary_scores=scores if not np.all(np.isnan(scores)) else None,
        unary_potential=potential if not np.all(np.isnan(potential)) else None,
        observed=observed,
        colors=color_array,
        edge_similarity=similarity if pairs and not np.all(np.isnan(similarity)) else None,
        ground_truth=ground_truth,
        sigmoid=sigmoid,
        potts=potts,
        floor=floor,
    )


def load_instance(path: Union[str, Path],
                  sigmoid: SigmoidParams = SigmoidParams(),
                  potts: PottsParams = SEMANTIC_POTTS,
                  floor: float = PROBABILITY_FLOOR) -> CrfInstance:
    """Read and assemble an instance file"""
    path = validate_file_path(str(path))
    try:
        with open(path, "r", encoding="utf-8") as handle:
            document = json.load(handle)
    except json.JSONDecodeError as exc:
        system_logger.log_validation_error(str(exc), path)
        raise InstanceParseError(f"Invalid JSON in {path}: {exc}")
    except UnicodeDecodeError as exc:
        raise InstanceParseError(f"{path} is not UTF-8: {exc}")

    instance = parse_instance(document, sigmoid, potts, floor)
    logger.debug("Loaded instance %s: %d nodes, %d edges, %d labels", path,
                 instance.node_count, instance.graph.edge_count, instance.label_count)
    return instance


def instance_to_document(instance: CrfInstance) -> Dict[str, Any]:
    """Serialize an instance; unary parameters not backed by scores go to unary_potential"""
    nodes = []
    scores = instance.unary_scores
    for i in range(instance.node_count):
        has_scores = scores is not None and not np.any(np.isnan(scores[i]))
        observed = bool(instance.observed_mask[i])
        node: Dict[str, Any] = {
            "id": i,
            "unary_scores": scores[i].tolist() if has_scores and observed else None,
            "observed": observed,
            "gt": None if instance.ground_truth is None else instance.ground_truth[i],
            "color": None if instance.colors is None else instance.colors[i].tolist(),
        }
        if observed and not has_scores:
            node["unary_potential"] = instance.theta.unary[i].tolist()
        nodes.append(node)

    similarity = instance.edge_similarity
    edges = []
    for k, (i, j) in enumerate(instance.graph.edges):
        s = None
        if similarity is not None and not np.isnan(similarity[k]):
            s = float(similarity[k])
        edges.append({"i": i, "j": j, "similarity": s})

    document: Dict[str, Any] = {"labels": instance.label_count, "nodes": nodes, "edges": edges}
    if instance.labels.names is not None:
        document["label_names"] = list(instance.labels.names)
    return document


def dump_instance(instance: CrfInstance, path: Union[str, Path]) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(instance_to_document(instance), handle, indent=1)
        handle.write("\n")
    return path
