import argparse
import math
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import pandas as pd

from .config import (
    CONFIGURATION_LABELS,
    CONFIGURATIONS,
    PipelineConfig,
    apply_overrides,
    load_config,
    write_effective,
)
from .cueing import Treatment, load_memorability, review_load, select_cue_frames
from .episodes import (
    EpisodeLabel,
    episodes_to_frames,
    grid_search_window,
    read_episodes_csv,
    write_episodes_csv,
    write_episodes_json,
    write_frames,
)
from .error_handler import EXIT_OK, ErrorHandler, UsageError
from .metrics import (
    cue_similarity,
    detection_accuracy,
    detection_f1,
    load_frames,
    load_groups,
    one_way_anova,
    retrace_accuracy_case1,
    retrace_accuracy_case2,
)
from .pipeline import (
    extract,
    load_preprocessed,
    preprocess,
    profile_runtime,
    run_ablation,
    write_preprocessed,
)
from .report import EvalReport, from_ablation, summary_table, write_report
from .session_io import load_session, read_annotations, write_session
from .synth import canonical_spec, generate, load_synth_spec, write_synth_spec

# Initialize error handler
error_handler = ErrorHandler()

EPISODES_CSV = "episodes.csv"
EPISODES_JSON = "episodes.json"
FRAMES_FILE = "frames.txt"
GRID_FILE = "grid_search.csv"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cuetrace",
        description="Detect attention episodes in EEG, GSR and PPG recordings.",
    )
    parser.add_argument("--config", help="Path to a JSON pipeline configuration.")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Override one configuration value (repeatable).",
    )
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level.")
    parser.add_argument("-o", "--output", help="Output directory (default: output_dir).")

    commands = parser.add_subparsers(dest="command", required=True)

    # --- preprocess ---
    pre = commands.add_parser("preprocess", help="Align, clean and fuse a recorded session.")
    pre.add_argument("manifest", help="Path to the session manifest (session.json).")
    pre.add_argument(
        "--configuration",
        choices=list(CONFIGURATIONS),
        help="Modality configuration (default: fusion.configuration).",
    )

    # --- extract ---
    ext = commands.add_parser("extract", help="Detect and label episodes in a preprocessed session.")
    ext.add_argument("preprocessed", help="Directory written by 'preprocess'.")
    ext.add_argument("--fps", type=float, help="Emit the ERP frame list at this frame rate.")
    ext.add_argument(
        "--all-labels",
        action="store_true",
        help="Cover artifact episodes in the frame list too.",
    )
    ext.add_argument(
        "--grid-search",
        action="store_true",
        help="Sweep the CPD window over 0.1-1.0 s against the session annotations.",
    )

    # --- evaluate ---
    ev = commands.add_parser("evaluate", help="Score episodes, frames, questionnaires or configurations.")
    ev.add_argument("--episodes", help="Episode CSV to score.")
    ev.add_argument("--annotations", help="Annotation CSV the episodes are scored against.")
    ev.add_argument("--frames-a", help="Directory of cue (or first retrace) frames.")
    ev.add_argument("--frames-b", help="Directory of retraced frames.")
    ev.add_argument("--ablation", metavar="MANIFEST", help="Run every configuration on an annotated session.")
    ev.add_argument("--repetitions", type=int, default=0, help="Timed repetitions for the ablation.")
    ev.add_argument("--anova", metavar="CSV", help="Questionnaire scores with group,value columns.")
    ev.add_argument("--cue-eeg", metavar="CSV", help="Episodes from the EEG-only configuration.")
    ev.add_argument("--cue-all", metavar="CSV", help="Episodes from the full configuration.")
    ev.add_argument("--memorability", metavar="CSV", help="Per-frame memorability scores.")
    ev.add_argument("--frame-count", type=int, help="Number of video frames for cue selection.")
    ev.add_argument("--fps", type=float, default=30.0, help="Video frame rate for cue selection.")

    # --- synth ---
    syn = commands.add_parser("synth", help="Generate a synthetic session with ground truth.")
    syn.add_argument("spec", nargs="?", help="Synthetic spec JSON (default: canonical scenario).")
    syn.add_argument("--seed", type=int, help="Override the spec seed.")

    # --- profile ---
    prof = commands.add_parser("profile", help="Time every modality configuration.")
    prof.add_argument("manifest", nargs="?", help="Session manifest (default: 1-minute synthetic).")
    prof.add_argument("--repetitions", type=int, help="Repetitions per configuration (>= 5).")

    return parser


def _output_dir(args: argparse.Namespace, cfg: PipelineConfig) -> str:
    return args.output or cfg.output_dir


def cmd_preprocess(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    session = load_session(args.manifest)
    pre = preprocess(session, cfg, args.configuration)
    write_preprocessed(pre, cfg, _output_dir(args, cfg))
    return EXIT_OK


def cmd_extract(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    out = Path(_output_dir(args, cfg))
    pre = load_preprocessed(args.preprocessed)
    episodes = extract(pre, cfg)

    out.mkdir(parents=True, exist_ok=True)
    write_episodes_csv(episodes, str(out / EPISODES_CSV))
    write_episodes_json(episodes, str(out / EPISODES_JSON))

    if args.fps is not None:
        frame_count = (
            pre.video.frame_count
            if pre.video is not None
            else int(math.ceil(pre.fused.n_rows / pre.fused.fs * args.fps))
        )
        labels = None if args.all_labels else [EpisodeLabel.ERP]
        frames = episodes_to_frames(episodes, args.fps, frame_count, labels)
        write_frames(frames, str(out / FRAMES_FILE))
        error_handler.info(f"{len(frames)} of {frame_count} frames selected")

    if args.grid_search:
        if not pre.annotations:
            raise UsageError("Grid search needs a preprocessed session with annotations")
        best, scores = grid_search_window(
            pre.fused,
            pre.annotations,
            None,
            cfg.cpd,
            cfg.classifier,
            cfg.metrics.tol_s,
            pre.peripheral(),
        )
        table = pd.DataFrame({"window_s": list(scores), "f1": list(scores.values())})
        table.to_csv(out / GRID_FILE, index=False)
        print(table.to_string(index=False))
        print(f"\nBest window: {best} s")

    write_effective(cfg, str(out))
    print(f"Episodes: {episodes.n_total} ({episodes.n_erp} ERP, {episodes.n_artifact} artifact)")
    return EXIT_OK


def _cue_report(args: argparse.Namespace, cfg: PipelineConfig, report: EvalReport) -> None:
    if args.frame_count is None:
        raise UsageError("Cue selection needs --frame-count")
    episodes_eeg = read_episodes_csv(args.cue_eeg) if args.cue_eeg else None
    episodes_all = read_episodes_csv(args.cue_all) if args.cue_all else None
    scores = load_memorability(args.memorability, args.frame_count) if args.memorability else None
    for treatment in Treatment:
        try:
            frames = select_cue_frames(
                treatment.value,
                args.frame_count,
                episodes_eeg,
                episodes_all,
                scores,
                args.fps,
                cfg.seed,
            )
        except UsageError as e:
            error_handler.debug(f"Skipping treatment '{treatment.value}': {e}")
            continue
        report.review_load[treatment.value] = review_load(frames, args.frame_count)


def cmd_evaluate(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    report = EvalReport()
    modes = 0

    if args.episodes or args.annotations:
        if not (args.episodes and args.annotations):
            raise UsageError("--episodes and --annotations go together")
        episodes = read_episodes_csv(args.episodes)
        annotations = read_annotations(args.annotations)
        report.detection["episodes"] = detection_accuracy(episodes, annotations, cfg.metrics.tol_s)
        report.f1["episodes"] = detection_f1(episodes, annotations, cfg.metrics.tol_s)
        modes += 1

    if args.frames_a or args.frames_b:
        if not (args.frames_a and args.frames_b):
            raise UsageError("--frames-a and --frames-b go together")
        frames_a = load_frames(args.frames_a, cfg.metrics.frame_size)
        frames_b = load_frames(args.frames_b, cfg.metrics.frame_size)
        report.retrace.update(retrace_accuracy_case1(frames_a, frames_b))
        report.retrace["fastdtw"] = retrace_accuracy_case2(frames_a, frames_b, cfg.metrics.dtw_radius)
        report.similarity = cue_similarity(frames_a, frames_b, cfg.metrics.dtw_radius)
        modes += 1

    if args.ablation:
        rows = run_ablation(load_session(args.ablation), cfg, args.repetitions)
        ablation = from_ablation(rows)
        report.detection.update(ablation.detection)
        report.runtimes.update(ablation.runtimes)
        modes += 1

    if args.anova:
        groups = load_groups(args.anova)
        report.anova["questionnaire"] = one_way_anova(list(groups.values()))
        modes += 1

    if args.cue_eeg or args.cue_all or args.memorability:
        _cue_report(args, cfg, report)
        modes += 1

    if not modes:
        raise UsageError(
            "Nothing to evaluate: give --episodes/--annotations, --frames-a/--frames-b, "
            "--ablation, --anova or cue inputs"
        )

    out = _output_dir(args, cfg)
    write_report(report, out)
    write_effective(cfg, out)
    print(summary_table(report))
    return EXIT_OK


def cmd_synth(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    spec = load_synth_spec(args.spec) if args.spec else canonical_spec(cfg.seed)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    out = _output_dir(args, cfg)
    manifest = write_session(generate(spec), out)
    write_synth_spec(spec, str(Path(out) / "synth_spec.json"))
    print(f"Synthetic session written to {manifest}")
    return EXIT_OK


def cmd_profile(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    if args.manifest:
        session = load_session(args.manifest)
    else:
        session = generate(canonical_spec(cfg.seed, duration_s=60.0))
    stats = profile_runtime(session, cfg, args.repetitions)
    report = EvalReport(runtimes={CONFIGURATION_LABELS[k]: v for k, v in stats.items()})
    out = _output_dir(args, cfg)
    write_report(report, out)
    write_effective(cfg, out)
    print(summary_table(report))
    return EXIT_OK


COMMANDS = {
    "preprocess": cmd_preprocess,
    "extract": cmd_extract,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
    "profile": cmd_profile,
}


@error_handler.handle
def run_cli(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad usage and 0 on --help
        return int(e.code or 0)

    error_handler.set_verbose(args.verbose)
    cfg = apply_overrides(load_config(args.config), args.overrides)
    error_handler.debug(f"Running '{args.command}'")
    return COMMANDS[args.command](args, cfg)
