# experiments/nodes.py
import time
from typing import Any, Callable, Dict, Optional

from crf.inference import InferenceConfig
from herding.dynamics import HerdingConfig, divmbest_run, herding_run, HypothesisSet
from herding.moments import build_moment_spec
from messages import create_run_message, get_run_id
from tools.evaluation import diversity_summary, evaluate
from tools.instance_generator import mask_unaries
from tools.potentials import SigmoidParams, rescore_unaries
from utils.logging_config import system_logger
from utils.validation import CapacityError, ValidationError


def _report_failure(node_name: str, msg: Dict[str, Any], error: Exception,
                    coordinator_send: Callable, start_time: float) -> None:
    """Log a failed run and forward an error record straight to the coordinator"""
    run_id = get_run_id(msg)
    run = msg["content"].get("run")
    system_logger.log_run_execution(
        method=run.method if run else node_name,
        run_id=run_id,
        execution_time=time.time() - start_time,
        success=False,
        error=f"{node_name}: {error}",
    )
    coordinator_send(create_run_message("node", "Coordinator", {
        "status": "error",
        "run": run,
        "node": node_name,
        "error": f"{type(error).__name__}: {error}",
    }, run_id))


def instance_node(msg: Dict[str, Any], coordinator_send: Callable) -> Optional[Dict[str, Any]]:
    """
    Prepare the run's CRF: apply the run's sigmoid parameters and reveal the
    observed fraction of unaries for interactive runs.
    """
    start_time = time.time()
    content = msg["content"]
    try:
        run = content["run"]
        instance = content["instance"]
        if run.sigmoid != SigmoidParams() and instance.unary_scores is not None:
            instance = rescore_unaries(instance, run.sigmoid)
        if run.observed_fraction is not None:
            instance = mask_unaries(instance, run.observed_fraction, content["mask_seed"] + run.instance_index)
        return {"content": {**content, "instance": instance}}
    except (ValidationError, CapacityError) as error:
        _report_failure("InstanceNode", msg, error, coordinator_send, start_time)
        return None


def sample_hypotheses(instance, method: str, moments: str, eta_u: float, eta_p: float,
                      num_samples: int, inference: InferenceConfig,
                      normalize_theta: bool = False) -> HypothesisSet:
    """Run divMbest or Herding on an instance"""
    if method == "divmbest":
        return divmbest_run(instance.theta, eta_u, num_samples, inference)
    spec = build_moment_spec(instance, moments, eta_u, eta_p, normalize_theta)
    return herding_run(HerdingConfig(instance.theta, spec, num_samples, inference))


def sampler_node(msg: Dict[str, Any], coordinator_send: Callable) -> Optional[Dict[str, Any]]:
    """Draw M hypotheses with the run's method and rates"""
    start_time = time.time()
    content = msg["content"]
    run = content["run"]
    try:
        hypotheses = sample_hypotheses(
            content["instance"], run.method, run.moments, run.eta_u, run.eta_p,
            content["m_max"], content["inference"], run.normalize_theta,
        )
    except (ValidationError, CapacityError) as error:
        _report_failure("SamplerNode", msg, error, coordinator_send, start_time)
        return None

    elapsed = time.time() - start_time
    system_logger.log_run_execution(run.method, get_run_id(msg), elapsed, True)
    return {"content": {**content, "hypotheses": hypotheses, "sampling_seconds": elapsed}}


def evaluator_node(msg: Dict[str, Any], coordinator_send: Callable) -> Optional[Dict[str, Any]]:
    """Score the hypotheses against ground truth"""
    start_time = time.time()
    content = msg["content"]
    try:
        hypotheses = content["hypotheses"]
        report = evaluate(hypotheses.samples, content["instance"], content["metric"])
    except (ValidationError, CapacityError) as error:
        _report_failure("EvaluatorNode", msg, error, coordinator_send, start_time)
        return None

    return {"content": {
        "status": "ok",
        "run": content["run"],
        "report": report,
        "diversity": diversity_summary(hypotheses.samples, content.get("similarity_threshold")),
        "condition_rate": sum(hypotheses.condition_trace) / len(hypotheses),
        "final_error": hypotheses.error_trace[-1],
    }}
