"""Command-line pipeline driver.

One executable, subcommand style::

    neurograph synth     --n 71 --seed 42 --out cohort/
    neurograph validate  --cohort cohort/manifest.json
    neurograph rewire    --cohort cohort/manifest.json --out work/
    neurograph encode    --graphs work/graphs --out work/encoded
    neurograph train     --cohort cohort/manifest.json --out results/
    neurograph run       --cohort cohort/manifest.json --out results/
    neurograph explain   --checkpoint results/checkpoints/fold0_seed0.npz \
                         --cohort cohort/manifest.json --patient p000 --out expl/
    neurograph export    --graph work/graphs/p000.json --format dot --out p000.dot

All randomness flows from ``--seed``; reruns with identical inputs and
flags produce byte-identical reports.  Progress and metrics go to stderr
as line-delimited JSON; human-readable summaries go to stdout.  Exit
codes: 0 success, 1 validation failure, 2 runtime/numeric failure.
``NEUROGRAPH_THREADS`` caps fold/seed worker processes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import (
    SynthConfig,
    load_cohort,
    save_cohort,
    synth_cohort,
    validate_cohort_files,
)
from .encoding import EncodingConfig, assemble_features
from .errors import DataError, IngestError, NeurographError
from .explain import centrality_report, extract_attention
from .export import (
    FORMATS,
    export_graph,
    from_band_centrality,
    from_json_str,
    from_multilayer,
    write_atomic,
)
from .graphs import FrequencyBand, MultiLayerGraph
from .model import GatModel, ModelConfig, compile_graph
from .rewiring import RewireConfig, retention_fraction, rewire_patient
from .training import TrainConfig, constant_predictor_mae, kfold_split, prepare_inputs, run_cv

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

_BAND_ALIASES = {
    "d": "delta", "delta": "delta",
    "t": "theta", "theta": "theta",
    "a1": "alpha1", "alpha1": "alpha1",
    "a2": "alpha2", "alpha2": "alpha2",
    "b1": "beta1", "beta1": "beta1",
}


def parse_bands(spec: str) -> tuple[FrequencyBand, ...]:
    bands = []
    for token in spec.split(","):
        token = token.strip().lower()
        if token not in _BAND_ALIASES:
            raise ValueError(f"unknown band {token!r}; use d,t,a1,a2,b1")
        bands.append(FrequencyBand[_BAND_ALIASES[token]])
    return tuple(bands)


def emit(event: str, **fields) -> None:
    """Line-delimited JSON progress stream on stderr."""
    print(json.dumps({"event": event, **fields}), file=sys.stderr, flush=True)


# ---------------------------------------------------------------------------
# Pipeline configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExplainOptions:
    patients: tuple[str, ...] = ()
    combine: str = "max"
    format: str = "graphml"
    layer: int = -1
    weighted_paths: bool = True

    def __post_init__(self):
        if self.combine != "max":
            raise ValueError(f"unknown band combination {self.combine!r}")
        if self.format not in FORMATS:
            raise ValueError(f"unknown export format {self.format!r}")


@dataclass(frozen=True)
class PipelineConfig:
    """Merged stage configuration; unknown keys are rejected on load."""

    seed: int = 0
    rewire: RewireConfig = RewireConfig()
    encoding: EncodingConfig = EncodingConfig()
    model: dict = field(default_factory=dict)  # ModelConfig overrides
    train: TrainConfig = TrainConfig()
    explain: ExplainOptions = ExplainOptions()

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            in_dim=self.encoding.feature_dim,
            n_pools=len(self.rewire.bands_kept),
            **self.model,
        )

    def to_dict(self) -> dict:
        rew = {
            "k": self.rewire.k,
            "quantile": self.rewire.quantile,
            "bands": [b.name for b in self.rewire.bands_kept],
        }
        enc = {"lap_dim": self.encoding.lap_dim, "rw_steps": self.encoding.rw_steps}
        trn = {k: getattr(self.train, k) for k in (
            "batch_size", "lr0", "weight_decay", "plateau_patience", "lr_factor",
            "early_stop_patience", "max_epochs", "folds", "seeds", "val_fraction",
        )}
        exp = {
            "patients": list(self.explain.patients),
            "combine": self.explain.combine,
            "format": self.explain.format,
            "layer": self.explain.layer,
            "weighted_paths": self.explain.weighted_paths,
        }
        return {"seed": self.seed, "rewire": rew, "encoding": enc,
                "model": dict(self.model), "train": trn, "explain": exp}


def _take(section: dict, allowed: set, where: str) -> dict:
    unknown = set(section) - allowed
    if unknown:
        raise ValueError(f"unknown keys in {where}: {sorted(unknown)}")
    return section


def pipeline_config_from_dict(obj: dict) -> PipelineConfig:
    _take(obj, {"seed", "rewire", "encoding", "model", "train", "explain"}, "config")
    rew = _take(dict(obj.get("rewire", {})), {"k", "quantile", "bands"}, "rewire")
    if "bands" in rew:
        rew["bands_kept"] = tuple(FrequencyBand[_BAND_ALIASES[b.lower()]] for b in rew.pop("bands"))
    enc = _take(dict(obj.get("encoding", {})), {"lap_dim", "rw_steps"}, "encoding")
    model = _take(dict(obj.get("model", {})),
                  {"hidden", "heads", "norm_groups", "leaky_slope", "dropout",
                   "mlp_hidden", "scoring"}, "model")
    trn = _take(dict(obj.get("train", {})),
                {"batch_size", "lr0", "weight_decay", "plateau_patience", "lr_factor",
                 "early_stop_patience", "max_epochs", "folds", "seeds", "val_fraction"},
                "train")
    exp = _take(dict(obj.get("explain", {})),
                {"patients", "combine", "format", "layer", "weighted_paths"}, "explain")
    if "patients" in exp:
        exp["patients"] = tuple(exp["patients"])
    return PipelineConfig(
        seed=int(obj.get("seed", 0)),
        rewire=RewireConfig(**rew),
        encoding=EncodingConfig(**enc),
        model=model,
        train=TrainConfig(**trn),
        explain=ExplainOptions(**exp),
    )


def load_pipeline_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return pipeline_config_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.n < 1:
        raise ValueError("--n must be >= 1")
    config = SynthConfig(
        lesion_size=args.lesion_size,
        lesion_offset=args.lesion_offset,
        noise=args.noise,
        severity_gain=args.severity_gain,
    )
    emit("synth.start", n=args.n, seed=args.seed)
    cohort = synth_cohort(args.n, args.seed, config)
    manifest = save_cohort(cohort, args.out)
    hist = cohort.class_histogram()
    emit("synth.done", manifest=str(manifest), classes=hist)
    print(f"wrote {len(cohort)} patients ({5 * len(cohort)} matrices) to {args.out}")
    print("severity classes: " + "  ".join(f"{k}={v}" for k, v in hist.items()))
    return EXIT_OK


def cmd_validate(args) -> int:
    summary, violations = validate_cohort_files(args.cohort)
    print(f"patients ok: {summary['patients']}   matrices ok: {summary['matrices']}")
    print("severity classes: " + "  ".join(f"{k}={v}" for k, v in summary["classes"].items()))
    if violations:
        print(f"\n{len(violations)} violation(s):")
        for v in violations:
            print(f"  - {v}")
        emit("validate.failed", violations=len(violations))
        return EXIT_VALIDATION
    emit("validate.ok", patients=summary["patients"])
    print("\ncohort is clean")
    return EXIT_OK


def _rewire_cohort(cohort, config: PipelineConfig):
    areas = list(cohort.areas)
    for patient in cohort.patients:
        yield patient, rewire_patient(patient, areas, config.rewire)


def cmd_rewire(args) -> int:
    config = load_pipeline_config(args.config)
    if args.k is not None or args.quantile is not None or args.bands is not None:
        rew = RewireConfig(
            k=args.k if args.k is not None else config.rewire.k,
            quantile=args.quantile if args.quantile is not None else config.rewire.quantile,
            bands_kept=parse_bands(args.bands) if args.bands else config.rewire.bands_kept,
        )
        config = PipelineConfig(config.seed, rew, config.encoding, config.model,
                                config.train, config.explain)
    cohort = load_cohort(args.cohort)
    out = Path(args.out)
    rows = []
    for patient, graph in _rewire_cohort(cohort, config):
        write_atomic(out / "graphs" / f"{patient.patient_id}.json", graph.to_json() + "\n")
        for layer in graph.layers:
            rows.append((patient.patient_id, layer.band.name,
                         f"{retention_fraction(layer):.6f}"))
        emit("rewire.patient", patient=patient.patient_id, nodes=graph.n_nodes)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["patient_id", "band", "retained_fraction"])
    writer.writerows(rows)
    write_atomic(out / "sparsity.csv", buf.getvalue())
    print(f"rewired {len(cohort)} patients -> {out / 'graphs'}")
    mean_frac = float(np.mean([float(r[2]) for r in rows]))
    print(f"mean retained fraction: {mean_frac:.4f}")
    return EXIT_OK


def cmd_encode(args) -> int:
    config = load_pipeline_config(args.config)
    enc = EncodingConfig(
        lap_dim=args.lap_dim if args.lap_dim is not None else config.encoding.lap_dim,
        rw_steps=args.rw_steps if args.rw_steps is not None else config.encoding.rw_steps,
    )
    graph_dir = Path(args.graphs)
    out = Path(args.out)
    paths = sorted(graph_dir.glob("*.json"))
    if not paths:
        raise NeurographError(f"no graph JSON files in {graph_dir}")
    for path in paths:
        graph = MultiLayerGraph.from_json(path.read_text())
        encoded = assemble_features(graph, enc)
        write_atomic(out / path.name, encoded.to_json() + "\n")
        emit("encode.graph", graph=path.name, feature_dim=encoded.node_features.shape[1])
    print(f"encoded {len(paths)} graphs -> {out} (feature dim {enc.feature_dim})")
    return EXIT_OK


def _apply_train_overrides(config: PipelineConfig, args) -> PipelineConfig:
    fields = {}
    for flag, key in (("folds", "folds"), ("seeds", "seeds"), ("batch", "batch_size"),
                      ("lr", "lr0"), ("wd", "weight_decay"), ("patience", "plateau_patience"),
                      ("epochs", "max_epochs")):
        value = getattr(args, flag, None)
        if value is not None:
            fields[key] = value
    if not fields and args.seed is None:
        return config
    base = config.to_dict()["train"]
    base.update(fields)
    return PipelineConfig(
        seed=args.seed if args.seed is not None else config.seed,
        rewire=config.rewire,
        encoding=config.encoding,
        model=config.model,
        train=TrainConfig(**base),
        explain=config.explain,
    )


def _train_and_report(cohort, config: PipelineConfig, out: Path, workers) -> dict:
    emit("prepare.start", patients=len(cohort))
    graphs, targets, classes = prepare_inputs(cohort, config.rewire, config.encoding)
    emit("prepare.done", nodes=graphs[0].n_nodes, feature_dim=graphs[0].features.shape[1])
    folds = kfold_split(len(cohort), config.train.folds, config.seed)
    baseline = constant_predictor_mae(targets, folds)
    result = run_cv(
        graphs, targets, classes,
        model_config=config.model_config(),
        train_config=config.train,
        base_seed=config.seed,
        workers=workers,
        checkpoint_dir=out / "checkpoints",
        log=lambda r: emit("train.fold", fold=r.fold, seed=r.seed,
                           test_mae=r.test_mae, epochs=r.stopped_epoch),
    )
    report = {
        "config": config.to_dict(),
        "cohort": {
            "patients": len(cohort),
            "classes": cohort.class_histogram(),
        },
        "constant_baseline_mae": baseline,
        **result.to_dict(),
    }
    write_atomic(out / "report.json", json.dumps(report, indent=1) + "\n")
    agg = result.aggregate
    print(f"test MAE {agg['test_mae_mean']:.3f} +/- {agg['test_mae_std']:.3f} "
          f"over {agg['runs']} runs   (constant baseline {baseline:.3f})")
    for cls, stats in agg["per_class"].items():
        if stats["mae_mean"] is not None:
            print(f"  class {cls}: {stats['mae_mean']:.3f} +/- {stats['mae_std']:.3f}")
    print(f"parameters: {agg['param_count']}   report: {out / 'report.json'}")
    return report


def cmd_train(args) -> int:
    config = _apply_train_overrides(load_pipeline_config(args.config), args)
    cohort = load_cohort(args.cohort)
    _train_and_report(cohort, config, Path(args.out), args.threads)
    return EXIT_OK


def _explain_patient(model, patient, cohort, config: PipelineConfig, out: Path) -> None:
    areas = list(cohort.areas)
    graph = assemble_features(rewire_patient(patient, areas, config.rewire), config.encoding)
    compiled = compile_graph(graph)
    report = extract_attention(model, compiled, graph, layer=config.explain.layer)
    tables = centrality_report(report, graph, weighted_paths=config.explain.weighted_paths)
    fmt = config.explain.format
    pid = patient.patient_id
    for table in tables:
        export_graph(from_band_centrality(table), fmt, out / f"{pid}_{table.band_name}.{fmt}")
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["band", "node_id", "label", "attention_in_degree", "coherence_clustering"])
    for table in tables:
        for node, label in enumerate(table.labels):
            clustering = ("" if table.coherence_clustering is None
                          else f"{table.coherence_clustering[node]:.9g}")
            writer.writerow([table.band_name, node, label,
                             f"{table.attention_in_degree[node]:.9g}", clustering])
    write_atomic(out / f"{pid}_centrality.csv", buf.getvalue())
    emit("explain.patient", patient=pid, files=len(tables) + 1)


def cmd_run(args) -> int:
    config = _apply_train_overrides(load_pipeline_config(args.config), args)
    cohort = load_cohort(args.cohort)
    out = Path(args.out)
    _train_and_report(cohort, config, out, args.threads)
    wanted = set(config.explain.patients)
    if wanted:
        by_id = {p.patient_id: p for p in cohort.patients}
        missing = wanted - set(by_id)
        if missing:
            raise NeurographError(f"explain patients not in cohort: {sorted(missing)}")
        checkpoint = out / "checkpoints" / "fold0_seed0.npz"
        model = GatModel.load(checkpoint)
        for pid in sorted(wanted):
            _explain_patient(model, by_id[pid], cohort, config, out / "explain")
    return EXIT_OK


def cmd_explain(args) -> int:
    config = load_pipeline_config(args.config)
    exp = ExplainOptions(
        patients=(args.patient,),
        combine=args.combine,
        format=args.format,
        layer=args.layer,
        weighted_paths=config.explain.weighted_paths,
    )
    if args.bands:
        rew = RewireConfig(k=config.rewire.k, quantile=config.rewire.quantile,
                           bands_kept=parse_bands(args.bands))
        config = PipelineConfig(config.seed, rew, config.encoding, config.model,
                                config.train, exp)
    else:
        config = PipelineConfig(config.seed, config.rewire, config.encoding,
                                config.model, config.train, exp)
    cohort = load_cohort(args.cohort)
    by_id = {p.patient_id: p for p in cohort.patients}
    if args.patient not in by_id:
        raise NeurographError(f"patient {args.patient!r} not in cohort")
    model = GatModel.load(args.checkpoint)
    _explain_patient(model, by_id[args.patient], cohort, config, Path(args.out))
    print(f"explanation files for {args.patient} in {args.out}")
    return EXIT_OK


def cmd_export(args) -> int:
    text = Path(args.graph).read_text()
    obj = json.loads(text)
    if "directed" in obj:
        graph = from_json_str(text)
    else:
        graph = from_multilayer(MultiLayerGraph.from_json_dict(obj))
    export_graph(graph, args.format, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neurograph",
        description="EEG brain-graph attention pipeline: synthesize or validate a "
                    "cohort, sparsify and encode graphs, train with cross-validation, "
                    "and export attention-based explanations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--lesion-size", type=int, default=SynthConfig.lesion_size)
    p.add_argument("--lesion-offset", type=int, default=SynthConfig.lesion_offset)
    p.add_argument("--noise", type=float, default=SynthConfig.noise)
    p.add_argument("--severity-gain", type=float, default=SynthConfig.severity_gain)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("validate", help="check cohort files and report violations")
    p.add_argument("--cohort", required=True)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("rewire", help="sparsify band graphs and build multi-layer graphs")
    p.add_argument("--cohort", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--k", type=int)
    p.add_argument("--quantile", type=float)
    p.add_argument("--bands", help="comma list, e.g. a1,a2,b1")
    p.set_defaults(fn=cmd_rewire)

    p = sub.add_parser("encode", help="attach positional-encoding features to graphs")
    p.add_argument("--graphs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--lap-dim", type=int)
    p.add_argument("--rw-steps", type=int)
    p.set_defaults(fn=cmd_encode)

    for name, help_text in (("train", "cross-validated training"),
                            ("run", "full pipeline: rewire, encode, train, explain")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--cohort", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--config")
        p.add_argument("--folds", type=int)
        p.add_argument("--seeds", type=int)
        p.add_argument("--batch", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--wd", type=float)
        p.add_argument("--patience", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.set_defaults(fn=cmd_train if name == "train" else cmd_run)

    p = sub.add_parser("explain", help="attention graphs and centrality tables")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cohort", required=True)
    p.add_argument("--patient", required=True)
    p.add_argument("--bands", help="comma list, e.g. a1,a2,b1")
    p.add_argument("--combine", default="max")
    p.add_argument("--format", default="graphml", choices=FORMATS)
    p.add_argument("--layer", type=int, default=-1)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_explain)

    p = sub.add_parser("export", help="convert a graph JSON to json/graphml/dot")
    p.add_argument("--graph", required=True)
    p.add_argument("--format", required=True, choices=FORMATS)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (DataError, IngestError, ValueError, OSError) as exc:
        emit("error", kind=type(exc).__name__, message=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NeurographError as exc:
        emit("error", kind=type(exc).__name__, message=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
