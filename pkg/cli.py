# cli.py
"""
herdcrf command line.

    python cli.py sample      --instance inst.json --method herding --moments unary --eta-u 0.5 -M 20
    python cli.py experiment  --suite suites/fig2a.suite --out-dir output/fig2a
    python cli.py convergence --instance inst.json --moments-source samples:10:0 -M 1024
    python cli.py generate    --kind grid_semantic --width 8 --height 8 --labels 4 --seed 7

Standard output carries data only; diagnostics go to standard error.
Exit codes: 0 ok, 1 unreadable input, 2 invalid input, 3 capacity guard,
4 every experiment run failed.
"""
import argparse
import contextlib
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from config.environment import ApplicationConfig, initialize_config
from crf.inference import InferenceConfig, InferenceMethod
from experiments.runner import run_experiment
from experiments.suite import MOMENT_SOURCES, load_suite
from herding.convergence import analyze_convergence, first_exact_hit, plateau_gap
from herding.dynamics import HerdingConfig, herding_run
from herding.moments import build_moment_spec, moments_from_samples, with_normalization
from herding.records import write_jsonl
from experiments.nodes import sample_hypotheses
from tools.instance_generator import InstanceKind, generate_instance, mask_unaries, random_labelings
from tools.instance_io import dump_instance, instance_to_document, load_instance
from tools.potentials import PottsParams, SigmoidParams
from tools.report_writer import build_manifest, manifest_path_for, write_manifest
from utils.error_handling import EXIT_ALL_RUNS_FAILED, EXIT_OK, handle_exceptions
from utils.logging_config import setup_logging
from utils.validation import ValidationError

logger = logging.getLogger(__name__)


@contextlib.contextmanager
def _output(path: str):
    if path == "-":
        yield sys.stdout
        sys.stdout.flush()
    else:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8", newline="") as handle:
            yield handle


def _potentials(args, cfg: ApplicationConfig, interactive: bool = False):
    seg = cfg.segmentation
    sigmoid = SigmoidParams(
        seg.sigmoid_a if args.sigmoid_a is None else args.sigmoid_a,
        seg.sigmoid_b if args.sigmoid_b is None else args.sigmoid_b,
    )
    decay = seg.interactive_potts_decay if interactive else seg.potts_decay
    weight = seg.interactive_potts_weight if interactive else seg.potts_weight
    potts = PottsParams(
        decay if args.potts_decay is None else args.potts_decay,
        weight if args.potts_weight is None else args.potts_weight,
    )
    return sigmoid, potts


def _inference(args, cfg: ApplicationConfig) -> InferenceConfig:
    return InferenceConfig.from_settings(cfg.inference, args.inference)


def _write_manifest(args, argv: Sequence[str], inputs: dict, instance) -> None:
    manifest = build_manifest(argv, inputs, instance).finish()
    if args.manifest:
        write_manifest(manifest, Path(args.manifest))
    elif args.out != "-":
        write_manifest(manifest, manifest_path_for(Path(args.out)))


def _config_inputs(args, cfg: ApplicationConfig) -> dict:
    values = {k: v for k, v in vars(args).items() if k not in ("func", "manifest", "out", "env_file")}
    return {"args": values, "inference": cfg.inference.__dict__, "segmentation": cfg.segmentation.__dict__}


@handle_exceptions()
def cmd_sample(args, cfg: ApplicationConfig, argv: Sequence[str]) -> int:
    sigmoid, potts = _potentials(args, cfg)
    instance = load_instance(args.instance, sigmoid=sigmoid, potts=potts,
                             floor=cfg.segmentation.probability_floor)
    inference = _inference(args, cfg)
    num_samples = cfg.herding.num_samples if args.num_samples is None else args.num_samples
    if num_samples < 1:
        raise ValidationError(f"num_samples must be at least 1, got {num_samples}")

    if args.method == "divmbest":
        if args.moments != "zero":
            raise ValidationError(f"divmbest takes no moments, got '{args.moments}'")
        lam = cfg.herding.divmbest_lambda if args.lam is None else args.lam
        hypotheses = sample_hypotheses(instance, "divmbest", "zero", lam, 0.0, num_samples, inference)
    else:
        eta_u = cfg.herding.eta_unary if args.eta_u is None else args.eta_u
        eta_p = cfg.herding.eta_pairwise if args.eta_p is None else args.eta_p
        spec = build_moment_spec(instance, args.moments, eta_u, eta_p,
                                 args.normalize_theta or cfg.herding.normalize_theta)
        hypotheses = herding_run(HerdingConfig(instance.theta, spec, num_samples, inference, args.norm_cap))

    with _output(args.out) as handle:
        write_jsonl(hypotheses, handle)
    _write_manifest(args, argv, _config_inputs(args, cfg), instance)
    return EXIT_OK


@handle_exceptions()
def cmd_experiment(args, cfg: ApplicationConfig, argv: Sequence[str]) -> int:
    suite = load_suite(Path(args.suite), InferenceConfig.from_settings(cfg.inference))
    if args.inference:
        suite = dataclasses.replace(suite, inference=dataclasses.replace(suite.inference, method=args.inference))
    threads = cfg.threads if args.threads is None else args.threads
    if threads < 1:
        raise ValidationError(f"threads must be at least 1, got {threads}")
    out_dir = Path(args.out_dir or Path(cfg.output_dir) / suite.name)

    summary = run_experiment(suite, out_dir, threads, argv)
    counts = summary["counts"]
    if counts["runs"] and counts["ok"] == 0:
        print(f"error: all {counts['runs']} runs failed; see {out_dir / 'summary.json'}", file=sys.stderr)
        return EXIT_ALL_RUNS_FAILED
    if counts["failed"]:
        logger.warning("%d of %d runs failed", counts["failed"], counts["runs"])
    return EXIT_OK


def _convergence_spec(args, instance, eta_u: float, eta_p: float):
    source = args.moments_source
    if source.startswith("samples:"):
        try:
            _, count, seed = source.split(":")
            count, seed = int(count), int(seed)
        except ValueError:
            raise ValidationError(f"Expected samples:K:SEED, got {source!r}")
        if count < 1:
            raise ValidationError("samples:K needs K >= 1")
        labelings = random_labelings(instance.node_count, instance.label_count, count, seed)
        spec = moments_from_samples(instance.graph, instance.labels, labelings, eta_u, eta_p,
                                    instance.theta.layout)
        return with_normalization(spec, True) if args.normalize_theta else spec
    if source not in MOMENT_SOURCES:
        raise ValidationError(f"Unknown moments source {source!r}")
    return build_moment_spec(instance, source, eta_u, eta_p, args.normalize_theta)


@handle_exceptions()
def cmd_convergence(args, cfg: ApplicationConfig, argv: Sequence[str]) -> int:
    sigmoid, potts = _potentials(args, cfg)
    instance = load_instance(args.instance, sigmoid=sigmoid, potts=potts,
                             floor=cfg.segmentation.probability_floor)
    eta_u = cfg.herding.eta_unary if args.eta_u is None else args.eta_u
    eta_p = cfg.herding.eta_pairwise if args.eta_p is None else args.eta_p
    spec = _convergence_spec(args, instance, eta_u, eta_p)

    hypotheses = herding_run(HerdingConfig(instance.theta, spec, args.num_samples,
                                           _inference(args, cfg), args.norm_cap))
    report = analyze_convergence(hypotheses, spec, args.envelope_start)
    payload = report.to_dict()
    payload.update({
        "moments_source": args.moments_source,
        "in_polytope": spec.in_polytope,
        "first_exact_hit": first_exact_hit(hypotheses.error_trace),
        "plateau_gap": plateau_gap(hypotheses.error_trace, report.residual),
    })

    with _output(args.out) as handle:
        json.dump(payload, handle, indent=1, sort_keys=True)
        handle.write("\n")
    _write_manifest(args, argv, _config_inputs(args, cfg), instance)
    return EXIT_OK


@handle_exceptions()
def cmd_generate(args, cfg: ApplicationConfig, argv: Sequence[str]) -> int:
    interactive = InstanceKind(args.kind) == InstanceKind.GRID_INTERACTIVE
    sigmoid, potts = _potentials(args, cfg, interactive)
    instance = generate_instance(args.kind, args.width, args.height, args.labels, args.noise, args.seed,
                                 present_labels=args.present_labels, sigmoid=sigmoid, potts=potts,
                                 floor=cfg.segmentation.probability_floor)
    if args.observed_fraction is not None:
        instance = mask_unaries(instance, args.observed_fraction, args.mask_seed,
                                cfg.segmentation.probability_floor)

    if args.out == "-":
        json.dump(instance_to_document(instance), sys.stdout, indent=1)
        sys.stdout.write("\n")
    else:
        dump_instance(instance, args.out)
    _write_manifest(args, argv, _config_inputs(args, cfg), instance)
    return EXIT_OK


def _add_potential_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--sigmoid-a", type=float, default=None, help="sigmoid offset a (default -7)")
    parser.add_argument("--sigmoid-b", type=float, default=None, help="sigmoid gain b (default 15)")
    parser.add_argument("--potts-decay", type=float, default=None, help="color-distance decay")
    parser.add_argument("--potts-weight", type=float, default=None, help="pairwise weight")


def _add_output_flags(parser: argparse.ArgumentParser, default_out: str = "-"):
    parser.add_argument("--out", default=default_out, help="output path, '-' for standard output")
    parser.add_argument("--manifest", default=None, help="run manifest path (default: <out>.manifest.json)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="herdcrf", description="Herding and diverse M-best sampling for pairwise CRFs")
    parser.add_argument("--env-file", default=".env", help="optional .env file with HERDCRF_* settings")
    sub = parser.add_subparsers(dest="command", required=True)
    inference_choices = [m.value for m in InferenceMethod]

    sample = sub.add_parser("sample", help="draw M hypotheses from one instance")
    sample.add_argument("--instance", required=True)
    sample.add_argument("--method", choices=["divmbest", "herding"], default="herding")
    sample.add_argument("--moments", choices=list(MOMENT_SOURCES), default="zero")
    sample.add_argument("--eta-u", type=float, default=None)
    sample.add_argument("--eta-p", type=float, default=None)
    sample.add_argument("--lambda", dest="lam", type=float, default=None)
    sample.add_argument("-M", "--num-samples", type=int, default=None)
    sample.add_argument("--inference", choices=inference_choices, default=None)
    sample.add_argument("--norm-cap", type=float, default=None)
    sample.add_argument("--normalize-theta", action="store_true")
    _add_potential_flags(sample)
    _add_output_flags(sample)
    sample.set_defaults(func=cmd_sample)

    experiment = sub.add_parser("experiment", help="run a suite of sampling experiments")
    experiment.add_argument("--suite", required=True)
    experiment.add_argument("--out-dir", default=None)
    experiment.add_argument("--threads", type=int, default=None, help="worker threads (default HERDCRF_THREADS)")
    experiment.add_argument("--inference", choices=inference_choices, default=None)
    experiment.set_defaults(func=cmd_experiment)

    convergence = sub.add_parser("convergence", help="reconstruction error trace and log-log slope")
    convergence.add_argument("--instance", required=True)
    convergence.add_argument("--moments-source", default="unary", help="zero | unary | full | samples:K:SEED")
    convergence.add_argument("--eta-u", type=float, default=None)
    convergence.add_argument("--eta-p", type=float, default=None)
    convergence.add_argument("-M", "--num-samples", type=int, default=1024)
    convergence.add_argument("--inference", choices=inference_choices, default=None)
    convergence.add_argument("--norm-cap", type=float, default=None)
    convergence.add_argument("--normalize-theta", action="store_true")
    convergence.add_argument("--envelope-start", type=int, default=16)
    _add_potential_flags(convergence)
    _add_output_flags(convergence)
    convergence.set_defaults(func=cmd_convergence)

    generate = sub.add_parser("generate", help="write a synthetic segmentation instance")
    generate.add_argument("--kind", choices=[k.value for k in InstanceKind], default=InstanceKind.GRID_SEMANTIC.value)
    generate.add_argument("--width", type=int, default=8)
    generate.add_argument("--height", type=int, default=8)
    generate.add_argument("--labels", type=int, default=4)
    generate.add_argument("--noise", type=float, default=0.5)
    generate.add_argument("--seed", type=int, default=0)
    generate.add_argument("--present-labels", type=int, default=None)
    generate.add_argument("--observed-fraction", type=float, default=None)
    generate.add_argument("--mask-seed", type=int, default=0)
    _add_potential_flags(generate)
    _add_output_flags(generate)
    generate.set_defaults(func=cmd_generate)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    code = _configure_and_run(args, argv)
    return code


@handle_exceptions()
def _configure_and_run(args, argv: Sequence[str]) -> int:
    cfg = initialize_config(args.env_file).get_config()
    setup_logging(cfg.logging.level, cfg.logging.log_dir, cfg.logging.enable_file)
    return args.func(args, cfg, ["herdcrf"] + list(argv))


if __name__ == "__main__":
    sys.exit(main())
