# experiments/graph_spec.py
from experiments.coordinator import ExperimentCoordinator
from experiments.nodes import evaluator_node, instance_node, sampler_node
from messages import get_run_id


def build_pipeline(threads: int = 1) -> ExperimentCoordinator:
    """InstanceNode -> SamplerNode -> EvaluatorNode -> Coordinator"""
    coordinator = ExperimentCoordinator(threads)

    def coordinator_node(msg, coordinator_send):
        coordinator.record_result(get_run_id(msg), msg.get("content", {}))
        return None

    coordinator.register_node("Coordinator", coordinator_node)
    coordinator.register_node("InstanceNode", instance_node)
    coordinator.register_node("SamplerNode", sampler_node)
    coordinator.register_node("EvaluatorNode", evaluator_node)

    coordinator.add_edge("InstanceNode", "SamplerNode")
    coordinator.add_edge("SamplerNode", "EvaluatorNode")
    coordinator.add_edge("EvaluatorNode", "Coordinator")

    return coordinator
