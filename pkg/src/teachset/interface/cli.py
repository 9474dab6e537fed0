"""Command-line entry point: ``teachset <command> ...``.

Every failure exits non-zero and prints a single ``error: ...`` line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..metrics import PhotoAnnotation, SetAnnotationSummary, correlate_descriptors, summarize_annotations
from ..recognizer import Model, evaluate, extractor_from_spec, train
from ..setdesc import SetDescriptors
from .engine import Engine
from .io import (
    ImageLoadError,
    ManifestError,
    load_config,
    load_image,
    load_manifest,
    parse_manifest,
    read_json,
    write_json,
)


class CliError(Exception):
    pass


def _config(args):
    overrides = {}
    if getattr(args, "detector", None):
        overrides.setdefault("backends", {})["detector"] = args.detector
    if getattr(args, "segmenter", None):
        overrides.setdefault("backends", {})["segmenter"] = args.segmenter
    if getattr(args, "blur_threshold", None) is not None:
        overrides.setdefault("photo", {})["blur_threshold"] = args.blur_threshold
    return load_config(args.config, overrides)


def cmd_describe(args) -> int:
    engine = Engine(_config(args))
    manifest = load_manifest(args.manifest)
    records, summary = engine.describe_manifest(manifest)
    out = Path(args.out)
    write_json(records, out / "descriptors.json")
    write_json({"label": manifest.label, **summary.to_json()}, out / "summary.json")
    print(json.dumps({"photos": len(records), "out": str(out), "unavailable": summary.unavailable}))
    return 0


def _annotation_summary(path: str) -> SetAnnotationSummary:
    data = read_json(path)
    if isinstance(data, dict) and "size_variation" in data:
        return SetAnnotationSummary.from_json(data)
    if isinstance(data, dict) and "photos" in data:
        anns = [p.annotation for p in parse_manifest(data).photos]
        if any(a is None for a in anns):
            raise CliError(f"{path}: every photo needs an annotation")
        return summarize_annotations(anns)
    if isinstance(data, list):
        return summarize_annotations([PhotoAnnotation.from_json(a) for a in data])
    raise CliError(f"{path}: not an annotation file")


def correlation_rows(pairs) -> tuple[list[list], dict]:
    results = correlate_descriptors(pairs)
    rows = [[name, "" if r.r is None else f"{r.r:.6f}", r.n, str(r.defined).lower()] for name, r in results.items()]
    return rows, results


def cmd_correlate(args) -> int:
    if len(args.pair) < 2:
        raise CliError("correlate needs at least two --pair SUMMARY ANNOTATIONS entries")
    pairs = []
    for summary_path, ann_path in args.pair:
        pairs.append((SetDescriptors.from_json(read_json(summary_path)), _annotation_summary(ann_path)))
    rows, results = correlation_rows(pairs)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["descriptor", "r", "n", "defined"])
    w.writerows(rows)
    sys.stdout.write(buf.getvalue())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "correlation.csv").write_text(buf.getvalue())
        for name, r in results.items():
            with open(out / f"scatter_{name}.csv", "w", newline="") as fh:
                sw = csv.writer(fh, lineterminator="\n")
                sw.writerow(["annotated", "estimated"])
                sw.writerows(zip(r.xs, r.ys))
    return 0


def _samples(manifest_paths: Sequence[str]):
    for mp in manifest_paths:
        m = load_manifest(mp)
        for p in m.photos:
            yield load_image(p.path), m.label_for(p), p.ref


def cmd_train(args) -> int:
    cfg = _config(args)
    extractor = extractor_from_spec(cfg.features)
    samples = [(extractor(img), label) for img, label, _ in _samples(args.manifests)]
    model = train(samples, cfg.train, extractor.spec())
    model.save(args.out)
    print(json.dumps({"model": args.out, "labels": model.labels, "samples": len(samples)}))
    return 0


def _load_model(path: Optional[str]) -> Model:
    if not path or not Path(path).exists():
        raise CliError("no model")
    try:
        return Model.load(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise CliError(f"invalid model file {path}: {exc}") from exc


def cmd_recognize(args) -> int:
    model = _load_model(args.model)
    engine = Engine(_config(args))
    pred = engine.recognize(model, load_image(args.image))
    print(json.dumps(pred.to_json()))
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    model = _load_model(args.model)
    items = list(_samples(args.manifests))
    if not items:
        raise CliError("empty test set")
    result = evaluate(model, [(img, label) for img, label, _ in items], cfg.rejection)
    print(f"accuracy,{result.accuracy:.6f}")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["photo", "label", "outcome", "correct"])
    for (_, _, ref), (label, outcome, ok) in zip(items, result.outcomes):
        w.writerow([ref, label, outcome, str(ok).lower()])
    return 0


def cmd_crosseval(args) -> int:
    cfg = _config(args)
    models = [_load_model(p) for p in args.model]
    testsets: dict[str, list] = {}
    for spec in args.testset:
        name, _, paths = spec.partition("=")
        if not paths:
            raise CliError(f"--testset expects NAME=MANIFEST[,MANIFEST...], got {spec!r}")
        testsets[name] = [(img, label) for img, label, _ in _samples(paths.split(","))]
    if args.pooled:
        testsets["pooled"] = [s for ts in list(testsets.values()) for s in ts]
    from ..recognizer import cross_evaluate

    matrix = cross_evaluate(models, testsets, cfg.rejection)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["model", *testsets])
    for path, row in zip(args.model, matrix):
        w.writerow([path, *(f"{v:.6f}" for v in row)])
    return 0


def cmd_simulate(args) -> int:
    from ..session.render import SceneSpec
    from ..session.simulate import SessionConfig, TeachingPolicy, default_objects, run_session

    policy = TeachingPolicy.from_json(read_json(args.policy)) if args.policy else TeachingPolicy()
    specs = [SceneSpec.from_json(s) for s in read_json(args.scenes)] if args.scenes else None
    if specs is None:
        specs = default_objects()[: policy.objects]
    scfg = SessionConfig()
    if args.config:
        tk = load_config(args.config)
        scfg = SessionConfig(tk.photo, tk.set, tk.train, tk.rejection, scfg.detector, scfg.segmenter)
    if args.detector:
        scfg = SessionConfig(scfg.photo, scfg.set, scfg.train, scfg.rejection, args.detector, scfg.segmenter)
    if args.segmenter:
        scfg = SessionConfig(scfg.photo, scfg.set, scfg.train, scfg.rejection, scfg.detector, args.segmenter)
    log = run_session(policy, specs, seed=args.seed, config=scfg)
    log.save(args.out)
    print(json.dumps({"out": args.out, "accuracy": log.accuracy, "sets": len(log.sets)}))
    return 0


def cmd_annotations(args) -> int:
    print(json.dumps(_annotation_summary(args.path).to_json(), indent=1, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    serve(_config(args), args.host, args.port, args.model_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="teachset", description="Inspect and replay teachable recognizer training sets.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", help="TOML or JSON toolkit config")
        sp.set_defaults(fn=fn)
        return sp

    sp = add("describe", cmd_describe, "photo- and set-level descriptors for a manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out", default=".")
    sp.add_argument("--detector", choices=["heuristic", "oracle"])
    sp.add_argument("--segmenter", choices=["chroma", "oracle"])
    sp.add_argument("--blur-threshold", type=float)

    sp = add("correlate", cmd_correlate, "Pearson r between set summaries and annotations")
    sp.add_argument("--pair", nargs=2, action="append", default=[], metavar=("SUMMARY", "ANNOTATIONS"))
    sp.add_argument("--out")

    sp = add("annotations", cmd_annotations, "summarize an annotation file")
    sp.add_argument("path")

    sp = add("train", cmd_train, "train a model from labelled manifests")
    sp.add_argument("manifests", nargs="+")
    sp.add_argument("--out", required=True)

    sp = add("recognize", cmd_recognize, "label one photo or say dont_know")
    sp.add_argument("image")
    sp.add_argument("--model")

    sp = add("evaluate", cmd_evaluate, "accuracy of a model on labelled manifests")
    sp.add_argument("manifests", nargs="+")
    sp.add_argument("--model", required=True)

    sp = add("crosseval", cmd_crosseval, "accuracy matrix of models x test sets")
    sp.add_argument("--model", action="append", required=True)
    sp.add_argument("--testset", action="append", required=True, metavar="NAME=MANIFEST[,MANIFEST]")
    sp.add_argument("--pooled", action="store_true", help="add a column pooling all test sets")

    sp = add("simulate", cmd_simulate, "replay a scripted teaching session")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--policy", help="policy JSON")
    sp.add_argument("--scenes", help="JSON list of scene specs")
    sp.add_argument("--detector", choices=["heuristic", "oracle"])
    sp.add_argument("--segmenter", choices=["chroma", "oracle"])

    sp = add("serve", cmd_serve, "run the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    sp.add_argument("--model-dir")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (CliError, ImageLoadError, ManifestError, ValueError, KeyError, OSError, RuntimeError) as exc:
        msg = str(exc).strip() or type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
