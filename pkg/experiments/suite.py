# experiments/suite.py
"""
Experiment suite configuration (JSON) and its expansion into individual runs.

A suite names a set of instances (generated from seeds or read from files),
the sampling methods with their rate grids, an optional observed-fraction
grid for interactive instances and an optional sigmoid sweep.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from crf.inference import InferenceConfig, LbpConfig
from crf.model import CrfInstance
from tools.evaluation import MetricKind
from tools.instance_generator import InstanceKind, generate_instance
from tools.instance_io import load_instance
from tools.potentials import PottsParams, SigmoidParams
from utils.validation import InstanceParseError, ValidationError, validate_fraction, validate_positive

logger = logging.getLogger(__name__)

METHODS = ("divmbest", "herding")
MOMENT_SOURCES = ("zero", "unary", "full")


@dataclass(frozen=True)
class MethodSpec:
    name: str
    moments: str
    eta_u: Tuple[float, ...]
    eta_p: Tuple[float, ...] = (0.0,)
    normalize_theta: bool = False
    label: str = ""

    def __post_init__(self):
        if self.name not in METHODS:
            raise ValidationError(f"Unknown method {self.name!r}; expected one of {METHODS}")
        if self.moments not in MOMENT_SOURCES:
            raise ValidationError(f"Unknown moments {self.moments!r}; expected one of {MOMENT_SOURCES}")
        if self.name == "divmbest" and self.moments != "zero":
            raise ValidationError("divmbest only supports zero moments")
        if not self.eta_u:
            raise ValidationError(f"Method {self.name}: empty rate grid")
        for value in self.eta_u + self.eta_p:
            validate_positive(value, "rate", allow_zero=True)
        if not self.label:
            object.__setattr__(self, "label", f"{self.name}-{self.moments}")


@dataclass(frozen=True)
class InstanceSource:
    """Either a generator recipe (kind, size, seed range) or explicit file paths"""
    kind: Optional[InstanceKind] = None
    count: int = 0
    width: int = 8
    height: int = 8
    labels: int = 4
    noise: float = 0.5
    seed: int = 0
    present_labels: Optional[int] = None
    paths: Tuple[str, ...] = ()


@dataclass(frozen=True)
class SuiteConfig:
    name: str
    metric: MetricKind
    m_max: int
    inference: InferenceConfig
    instances: InstanceSource
    methods: Tuple[MethodSpec, ...]
    observed_fractions: Tuple[Optional[float], ...] = (None,)
    mask_seed: int = 0
    sigmoids: Tuple[SigmoidParams, ...] = (SigmoidParams(),)
    potts: Optional[PottsParams] = None
    compare: Dict[str, str] = field(default_factory=dict)
    similarity_threshold: Optional[int] = None
    source: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class RunSpec:
    run_key: str
    instance_name: str
    instance_index: int
    method: str
    moments: str
    label: str
    eta_u: float
    eta_p: float
    normalize_theta: bool
    observed_fraction: Optional[float]
    sigmoid: SigmoidParams

    def to_dict(self) -> Dict[str, Any]:
        return {
            "run_key": self.run_key,
            "instance": self.instance_name,
            "method": self.method,
            "moments": self.moments,
            "label": self.label,
            "eta_u": self.eta_u,
            "eta_p": self.eta_p,
            "lambda": self.eta_u if self.method == "divmbest" else None,
            "normalize_theta": self.normalize_theta,
            "observed_fraction": self.observed_fraction,
            "sigmoid_a": self.sigmoid.a,
            "sigmoid_b": self.sigmoid.b,
        }


def _as_tuple(value: Any) -> Tuple:
    if value is None:
        return ()
    if isinstance(value, (list, tuple)):
        return tuple(value)
    return (value,)


def parse_suite(document: Dict[str, Any], base_dir: Optional[Path] = None,
                default_inference: Optional[InferenceConfig] = None) -> SuiteConfig:
    """Validate a decoded suite document"""
    if not isinstance(document, dict):
        raise InstanceParseError("Suite document must be a JSON object")
    try:
        methods_doc = document["methods"]
        instances_doc = document["instances"]
    except KeyError as exc:
        raise InstanceParseError(f"Suite is missing required field: {exc.args[0]}")

    try:
        metric = MetricKind(document.get("metric", MetricKind.PER_CLASS_ACCURACY.value))
    except ValueError:
        raise ValidationError(f"Unknown metric {document.get('metric')!r}")

    m_max = document.get("m_max", 20)
    if not isinstance(m_max, int) or m_max < 1:
        raise ValidationError(f"m_max must be a positive integer, got {m_max!r}")

    inference = default_inference or InferenceConfig()
    inference_doc = document.get("inference")
    if inference_doc is not None:
        if isinstance(inference_doc, str):
            inference_doc = {"method": inference_doc}
        lbp_doc = inference_doc.get("lbp", {})
        inference = InferenceConfig(
            method=inference_doc.get("method", inference.method),
            lbp=LbpConfig(
                lbp_doc.get("max_iterations", inference.lbp.max_iterations),
                lbp_doc.get("damping", inference.lbp.damping),
                lbp_doc.get("convergence_tol", inference.lbp.convergence_tol),
            ),
            bruteforce_limit=inference_doc.get("bruteforce_limit", inference.bruteforce_limit),
            elimination_table_limit=inference_doc.get("elimination_table_limit", inference.elimination_table_limit),
        )

    methods = []
    for entry in methods_doc:
        eta_u = _as_tuple(entry.get("lambda" if entry.get("name") == "divmbest" and "lambda" in entry else "eta_u"))
        methods.append(MethodSpec(
            name=entry.get("name", ""),
            moments=entry.get("moments", "zero"),
            eta_u=tuple(float(v) for v in eta_u),
            eta_p=tuple(float(v) for v in _as_tuple(entry.get("eta_p", 0.0))),
            normalize_theta=bool(entry.get("normalize_theta", False)),
            label=entry.get("label", ""),
        ))
    if not methods:
        raise ValidationError("Suite lists no methods")

    if "paths" in instances_doc:
        base = base_dir or Path(".")
        paths = tuple(str((base / p) if not Path(p).is_absolute() else Path(p)) for p in instances_doc["paths"])
        source = InstanceSource(paths=paths)
    else:
        generator = instances_doc.get("generator", instances_doc)
        try:
            source = InstanceSource(
                kind=InstanceKind(generator.get("kind", InstanceKind.GRID_SEMANTIC.value)),
                count=int(generator.get("count", 1)),
                width=int(generator.get("width", 8)),
                height=int(generator.get("height", 8)),
                labels=int(generator.get("labels", 4)),
                noise=float(generator.get("noise", 0.5)),
                seed=int(generator.get("seed", 0)),
                present_labels=generator.get("present_labels"),
            )
        except ValueError as exc:
            raise ValidationError(f"Invalid instance generator: {exc}")
        if source.count < 1:
            raise ValidationError("Instance generator count must be at least 1")

    fractions = _as_tuple(document.get("observed_fractions")) or (None,)
    fractions = tuple(None if f is None else validate_fraction(f) for f in fractions)

    sigmoids = tuple(SigmoidParams(float(s["a"]), float(s["b"])) for s in _as_tuple(document.get("sigmoid"))) \
        or (SigmoidParams(),)

    potts = None
    if document.get("potts"):
        potts = PottsParams(float(document["potts"]["decay"]), float(document["potts"]["weight"]))

    compare = dict(document.get("compare", {}))
    labels = {m.label for m in methods}
    for role, label in compare.items():
        if label not in labels:
            raise ValidationError(f"compare.{role} names unknown method label {label!r}")

    return SuiteConfig(
        name=str(document.get("name", "suite")),
        metric=metric,
        m_max=m_max,
        inference=inference,
        instances=source,
        methods=tuple(methods),
        observed_fractions=fractions,
        mask_seed=int(document.get("mask_seed", 0)),
        sigmoids=sigmoids,
        potts=potts,
        compare=compare,
        similarity_threshold=document.get("similarity_threshold"),
        source=document,
    )


def load_suite(path: Path, default_inference: Optional[InferenceConfig] = None) -> SuiteConfig:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as handle:
            document = json.load(handle)
    except FileNotFoundError:
        raise InstanceParseError(f"Suite file not found: {path}")
    except json.JSONDecodeError as exc:
        raise InstanceParseError(f"Invalid JSON in suite {path}: {exc}")
    return parse_suite(document, path.parent, default_inference)


def build_instances(suite: SuiteConfig) -> List[Tuple[str, CrfInstance]]:
    """Named base instances, in suite order"""
    source = suite.instances
    if source.paths:
        return [(Path(p).stem, load_instance(p, potts=suite.potts) if suite.potts else load_instance(p))
                for p in source.paths]
    width = len(str(source.count - 1))
    instances = []
    for k in range(source.count):
        seed = source.seed + k
        instances.append((
            f"i{k:0{width}d}",
            generate_instance(source.kind, source.width, source.height, source.labels, source.noise, seed,
                              present_labels=source.present_labels, potts=suite.potts),
        ))
    return instances


def _format_key_value(value: Optional[float]) -> str:
    return "na" if value is None else format(value, ".6g")


def expand_runs(suite: SuiteConfig, instance_names: Sequence[str]) -> List[RunSpec]:
    """Every (instance, method, rates, observed fraction, sigmoid) combination, sorted by run key"""
    runs = []
    for index, name in enumerate(instance_names):
        for method in suite.methods:
            eta_p_grid = (0.0,) if method.name == "divmbest" else method.eta_p
            for eta_u in method.eta_u:
                for eta_p in eta_p_grid:
                    for fraction in suite.observed_fractions:
                        for sigmoid in suite.sigmoids:
                            key = "|".join([
                                name, method.label,
                                f"eta_u={_format_key_value(eta_u)}",
                                f"eta_p={_format_key_value(eta_p)}",
                                f"obs={_format_key_value(fraction)}",
                                f"sig={_format_key_value(sigmoid.a)},{_format_key_value(sigmoid.b)}",
                            ])
                            runs.append(RunSpec(key, name, index, method.name, method.moments, method.label,
                                                eta_u, eta_p, method.normalize_theta, fraction, sigmoid))
    keys = [r.run_key for r in runs]
    if len(set(keys)) != len(keys):
        raise ValidationError("Suite expands to duplicate runs; give methods distinct labels")
    return sorted(runs, key=lambda r: r.run_key)
