"""Command-line interface for the gaze-driven assistive pipeline."""

from __future__ import annotations

import argparse
import json
import sys
import time


def _cmd_ingest(args: argparse.Namespace) -> int:
    from .perception import (
        align_gaze_to_frames,
        ingest_detection_stream,
        ingest_gaze_stream,
        iter_lines,
        stream_stats,
    )

    gaze = ingest_gaze_stream(iter_lines(args.gaze))
    frames = ingest_detection_stream(iter_lines(args.frames))
    aligned = align_gaze_to_frames(gaze, [f.t_us for f in frames])
    stats = stream_stats(gaze, frames)
    stats["aligned_frames_with_gaze"] = sum(1 for a in aligned if a is not None)
    stats["carried_frames"] = sum(1 for a in aligned if a is not None and not a.fresh)
    print(json.dumps(stats, indent=2))
    return 0


def _cmd_features(args: argparse.Namespace) -> int:
    from .features import FeatureConfig, cut_windows, window_to_json
    from .perception import (
        align_gaze_to_frames,
        ingest_detection_stream,
        ingest_gaze_stream,
        iter_lines,
        track_objects,
    )

    gaze = ingest_gaze_stream(iter_lines(args.gaze))
    frames = ingest_detection_stream(iter_lines(args.frames))
    marks_by_frame: dict[int, tuple[bool, str | None]] = {}
    if args.marks:
        for line in iter_lines(args.marks):
            rec = json.loads(line)
            marks_by_frame[rec["frame_idx"]] = (rec["intent"], rec.get("target"))
    aligned = align_gaze_to_frames(gaze, [f.t_us for f in frames])
    config = FeatureConfig(sw=args.sw, stride=args.stride)
    tracks = track_objects(frames)
    count = 0
    with open(args.out, "w", encoding="utf-8") as fh:
        for label in sorted(tracks):
            track = tracks[label]
            marks = None
            if marks_by_frame:
                marks = [marks_by_frame.get(i, (False, None))[0]
                         and marks_by_frame.get(i, (False, None))[1] == track.label
                         for i in range(len(frames))]
            for w in cut_windows(track, aligned, config, marks=marks):
                fh.write(json.dumps(window_to_json(w)) + "\n")
                count += 1
    print(f"wrote {count} windows to {args.out}")
    return 0


def _load_windows_file(path: str):
    import numpy as np

    from .features import window_from_json

    X, y = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            w = window_from_json(json.loads(line))
            X.append(w.values)
            y.append(w.label)
    if any(v is None for v in y):
        raise SystemExit("training windows must carry labels")
    return np.stack(X), np.asarray(y, dtype=float)


def _cmd_train(args: argparse.Namespace) -> int:
    import os

    from .intentnet import ModelConfig, TrainConfig, save_checkpoint, train

    if os.path.isdir(args.data):
        from .evaluation import assemble_windows
        from .synth import load_dataset

        table = assemble_windows(load_dataset(args.data))
        X, y = table.X, table.y
    else:
        X, y = _load_windows_file(args.data)
    model_cfg = ModelConfig(seed=args.seed, dropout=args.dropout)
    train_cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                            learning_rate=args.learning_rate, seed=args.seed,
                            dtype=args.dtype)
    t0 = time.time()
    result = train(X, y, model_cfg, train_cfg)
    save_checkpoint(args.out, result.params, model_cfg)
    last = result.history[-1]
    print(f"trained on {X.shape[0]} windows in {time.time() - t0:.1f}s; "
          f"final loss {last.loss:.4f}, accuracy {last.accuracy:.4f}; "
          f"checkpoint: {args.out}")
    return 0


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    from .intentnet import ModelConfig, gradient_check, init_params

    config = ModelConfig(seed=args.seed)
    params = init_params(config)
    err = gradient_check(params, config, n_probes=args.probes, seed=args.seed)
    print(f"max relative error over {args.probes} probes: {err:.3e}")
    if args.negative_control:
        fault_err = gradient_check(params, config, n_probes=args.probes,
                                   seed=args.seed, fault="ffn")
        print(f"corrupted-gradient control: {fault_err:.3e}")
        ok = err < 1e-4 and fault_err > 1e-2
    else:
        ok = err < 1e-4
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def _cmd_demo_model(args: argparse.Namespace) -> int:
    from .demo import train_demo_classifier
    from .intentnet import save_checkpoint

    est = train_demo_classifier(seed=args.seed, epochs=args.epochs)
    save_checkpoint(args.out, est.params_, est.config_)
    print(f"demo checkpoint written to {args.out} "
          f"(train accuracy {est.history_[-1].accuracy:.4f})")
    return 0


def _cmd_gen_data(args: argparse.Namespace) -> int:
    from .synth import SyntheticProfile, generate_dataset, save_dataset

    profile = SyntheticProfile(seed=args.seed)
    dataset = generate_dataset(profile, n_subjects=args.subjects,
                               trials_per_subject=args.trials_per_subject)
    save_dataset(args.out, dataset)
    n_frames = sum(len(t.frames) for t in dataset.trials)
    print(f"wrote {len(dataset.trials)} trials ({n_frames} frames) to {args.out}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    from .evaluation import assemble_windows, run_cross_validation
    from .intentnet import IntentNetClassifier
    from .synth import load_dataset

    dataset = load_dataset(args.data)
    table = assemble_windows(dataset)
    factory = lambda: IntentNetClassifier(epochs=args.epochs, batch_size=64,
                                          seed=args.seed)
    report = run_cross_validation(dataset, args.mode, estimator_factory=factory,
                                  table=table)
    print(report.render_text())
    if args.baseline != "fixation":
        raise SystemExit(f"unknown baseline {args.baseline!r}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, indent=2)
        print(f"report written to {args.out}")
    return 0


def _cmd_system_eval(args: argparse.Namespace) -> int:
    from .demo import train_demo_classifier
    from .evaluation import run_system_eval
    from .intentnet import IntentNetClassifier, load_checkpoint
    from .scripts import default_scripts

    if args.model:
        params, config = load_checkpoint(args.model)
        est = IntentNetClassifier()
        est.params_, est.config_, est.sw_ = params, config, 30
    else:
        est = train_demo_classifier()
    report, _ = run_system_eval(default_scripts(), est, log_dir=args.log_dir)
    print(report.render_text())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, indent=2)
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .intentnet import IntentNetClassifier, load_checkpoint
    from .llm import HttpLLMClient, MockLLMClient
    from .server import create_app
    from .session import SessionConfig
    from .world import load_fixture

    params, config = load_checkpoint(args.model)
    est = IntentNetClassifier()
    est.params_, est.config_, est.sw_ = params, config, 30
    if args.llm == "mock":
        client = MockLLMClient() if not args.rules else MockLLMClient.from_json_file(args.rules)
    else:
        client = HttpLLMClient()
    host, _, port = args.bind.partition(":")
    app = create_app(est, client, SessionConfig(), logs_dir=args.logs,
                     ui_dir=args.ui_dir)
    if args.fixture:
        # eagerly validate the fixture file
        load_fixture(args.fixture)
    uvicorn.run(app, host=host, port=int(port or 8173), log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazeassist",
        description="Gaze-driven assistive pipeline: data, training, evaluation, service")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate gaze/detection streams and report stats")
    p.add_argument("--gaze", required=True)
    p.add_argument("--frames", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("features", help="dump per-object feature windows")
    p.add_argument("--frames", required=True)
    p.add_argument("--gaze", required=True)
    p.add_argument("--marks", default=None)
    p.add_argument("--sw", type=int, default=30)
    p.add_argument("--stride", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("train", help="train the intent network")
    p.add_argument("--data", required=True,
                   help="windows JSONL file or a generated dataset directory")
    p.add_argument("--out", default="model.ckpt")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("gradcheck", help="finite-difference gradient certification")
    p.add_argument("--probes", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--negative-control", action="store_true")
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("demo-model", help="train a small checkpoint on the separable fixture")
    p.add_argument("--out", default="model.ckpt")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=12)
    p.set_defaults(func=_cmd_demo_model)

    p = sub.add_parser("gen-data", help="generate the synthetic gaze dataset")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.add_argument("--subjects", type=int, default=8)
    p.add_argument("--trials-per-subject", type=int, default=10)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("eval", help="cross-validate the network against the baseline")
    p.add_argument("--mode", choices=("fivefold", "loso"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--baseline", default="fixation")
    p.add_argument("--epochs", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("system-eval", help="run the scripted task-family sessions")
    p.add_argument("--model", default=None)
    p.add_argument("--log-dir", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_system_eval)

    p = sub.add_parser("serve", help="run the HTTP session service")
    p.add_argument("--bind", default="127.0.0.1:8173")
    p.add_argument("--model", required=True)
    p.add_argument("--fixture", default=None)
    p.add_argument("--llm", choices=("mock", "http"), default="mock")
    p.add_argument("--rules", default=None, help="mock rule table JSON")
    p.add_argument("--logs", default="logs")
    p.add_argument("--ui-dir", default=None)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
