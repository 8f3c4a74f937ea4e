"""Command-line interface.

Subcommands: demo-attn, verify, bench, assemble, prompt (render/parse),
score-sca, score-consistency. Every subcommand accepts ``--config FILE``
pointing at a JSON object whose keys mirror the long flag names
(underscores for dashes); explicit flags win over config values, config
values win over built-in defaults.

Exit codes: 0 success, 1 verification failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Sequence

import numpy as np

from .bench import (
    BenchConfig,
    VerifyReport,
    bench_scaling,
    verify_equivalence,
    write_bench_csv,
)
from .curation import (
    DEFAULT_MAX_SHOTS,
    DEFAULT_TOLERANCE_FRACTION,
    FilterPolicy,
    HierarchicalPrompt,
    parse_hierarchical_prompt,
    read_shot_manifest,
    render_hierarchical_prompt,
    write_samples,
    assemble_samples,
    filter_shots,
    sample_record,
)
from .errors import MultishotError
from .layout import (
    FirstAndLastFrame,
    FirstFrame,
    ShotSpec,
    SummaryStrategy,
    build_token_layout,
    summary_token_indices,
)
from .metrics import (
    EmbeddingProvider,
    HashEmbeddingProvider,
    default_penalty,
    inter_shot_consistency,
    intra_shot_consistency,
    load_embeddings,
    read_cut_list,
    semantic_consistency_per_shot,
    shot_cut_accuracy,
)
from .sparse import PlanMode, build_sparse_plan, plan_manifest, plan_to_dense_mask, sparse_flops
from .window import build_cross_mask, prompt_layout_from_counts

STRATEGIES = {"first": FirstFrame, "first-last": FirstAndLastFrame}


def _strategy(name: str) -> SummaryStrategy:
    if name not in STRATEGIES:
        raise ValueError(f"strategy must be one of {sorted(STRATEGIES)}, got {name!r}")
    return STRATEGIES[name]()


def _mode(name: str) -> PlanMode:
    try:
        return PlanMode(name)
    except ValueError:
        raise ValueError(f"mode must be one of {[m.value for m in PlanMode]}, got {name!r}")


def _int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(part) for part in str(text).split(",") if part.strip() != ""]
    except ValueError:
        raise ValueError(f"{flag} expects comma-separated integers, got {text!r}")


def _shot_specs(text: str) -> list[ShotSpec]:
    """Parse 'FxT,FxT,...' (frames x tokens-per-frame per shot)."""
    specs = []
    for part in str(text).split(","):
        frames, sep, tpf = part.strip().partition("x")
        if not sep:
            raise ValueError(f"--shots expects FxT entries like '2x4', got {part!r}")
        specs.append(ShotSpec(int(frames), int(tpf)))
    return specs


def _apply_config(args: argparse.Namespace, defaults: dict) -> argparse.Namespace:
    """Fill unset (None) flags from the JSON config, then from defaults."""
    cfg = {}
    if getattr(args, "config", None) is not None:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ValueError("config file must contain a JSON object")
        unknown = sorted(set(cfg) - set(defaults))
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
    for key, default in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, cfg[key] if key in cfg else default)
    return args


def _mask_grid(mask: np.ndarray) -> str:
    return "\n".join("".join("#" if cell else "." for cell in row) for row in mask)


# ---------------------------------------------------------------- demo-attn

DEMO_DEFAULTS = {
    "shots": "2x2,2x2,2x2",
    "strategy": "first",
    "mode": "dedupe",
    "d": 8,
    "global_tokens": None,
    "shot_tokens": None,
    "delimiter_tokens": 0,
}


def cmd_demo_attn(args: argparse.Namespace) -> int:
    _apply_config(args, DEMO_DEFAULTS)
    layout = build_token_layout(_shot_specs(args.shots))
    strategy = _strategy(args.strategy)
    mode = _mode(args.mode)
    plan = build_sparse_plan(layout, strategy, mode)
    flops = sparse_flops(plan, args.d)

    print(f"layout: {layout.n_shots} shots, {layout.total_tokens} tokens")
    for i, ((start, end), spec) in enumerate(zip(layout.ranges, layout.shots)):
        print(f"  shot {i}: tokens [{start}, {end}) "
              f"({spec.frames} frames x {spec.tokens_per_frame} tokens/frame)")
    print("summary tokens per shot:")
    for i, indices in enumerate(summary_token_indices(layout, strategy)):
        print(f"  shot {i}: {list(indices)}")
    print(f"plan ({mode.value}):")
    print(plan_manifest(plan))
    if mode is PlanMode.DEDUPE and layout.total_tokens <= 64:
        print("self-attention mask (rows attend to '#'):")
        print(_mask_grid(plan_to_dense_mask(plan)))
    print(f"flops: sparse={flops.total} dense={4 * layout.total_tokens**2 * args.d} "
          f"(d={args.d}, closed_form={flops.closed_form})")

    if args.global_tokens is not None:
        shot_tokens = (
            _int_list(args.shot_tokens, "--shot-tokens")
            if args.shot_tokens is not None
            else [args.global_tokens] * layout.n_shots
        )
        prompt = prompt_layout_from_counts(
            args.global_tokens, shot_tokens, args.delimiter_tokens
        )
        print(f"prompt layout: {prompt.text_tokens} text tokens, "
              f"global span {prompt.global_range}, shot spans {list(prompt.shot_ranges)}")
        print("cross-attention mask (video rows x text columns):")
        print(_mask_grid(build_cross_mask(layout, prompt)))
    return 0


# ------------------------------------------------------------------- verify

VERIFY_DEFAULTS = {
    "seed": 0,
    "cases": 100,
    "precision": "double",
    "inject_fault": False,
}


def _print_verify(report: VerifyReport) -> None:
    for kind in ("sparse", "window"):
        diffs = [c.max_abs_diff for c in report.checks if c.kind == kind]
        if diffs:
            status = "PASS" if max(diffs) <= report.tolerance else "FAIL"
            print(f"{status} {kind}: {len(diffs)} cases, "
                  f"max abs diff {max(diffs):.3e} (tol {report.tolerance:.0e})")
    if report.fault is not None:
        print(
            f"FAIL injected fault detected: query shot {report.fault.query_shot} "
            f"lost KV index {report.fault.dropped_index} from source shot "
            f"{report.fault.source_shot} (max abs diff {report.fault.max_abs_diff:.3e})"
            if report.fault.detected
            else "FAIL injected fault NOT detected"
        )
    print("PASS" if report.passed else "FAIL")


def cmd_verify(args: argparse.Namespace) -> int:
    _apply_config(args, VERIFY_DEFAULTS)
    report = verify_equivalence(
        args.seed,
        args.cases,
        precision=args.precision,
        inject_fault=bool(args.inject_fault),
    )
    _print_verify(report)
    return 0 if report.passed else 1


# -------------------------------------------------------------------- bench

BENCH_DEFAULTS = {
    "n_shots": "2,4,8,16",
    "frames": 16,
    "tpf": 16,
    "strategy": "first",
    "mode": "dedupe",
    "d": 32,
    "precision": "double",
    "repetitions": 3,
    "seed": 0,
    "max_dense_tokens": 32768,
    "output": None,
    "plot": False,
}


def cmd_bench(args: argparse.Namespace) -> int:
    _apply_config(args, BENCH_DEFAULTS)
    if args.plot and args.output is None:
        raise ValueError("--plot needs --output, figures are written alongside the CSV")
    config = BenchConfig(
        n_shots=tuple(_int_list(args.n_shots, "--n-shots")),
        frames=args.frames,
        tokens_per_frame=args.tpf,
        strategy=_strategy(args.strategy),
        mode=_mode(args.mode),
        d=args.d,
        precision=args.precision,
        repetitions=args.repetitions,
        seed=args.seed,
        max_dense_tokens=args.max_dense_tokens,
    )
    rows = bench_scaling(config)
    if args.output is None:
        write_bench_csv(rows, sys.stdout)
        return 0
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        write_bench_csv(rows, fh)
    print(f"wrote {args.output}")
    if args.plot:
        from .plotting import save_scaling_figure

        figure_path = os.path.splitext(args.output)[0] + "_scaling.png"
        save_scaling_figure(rows, figure_path)
        print(f"wrote {figure_path}")
    return 0


# ----------------------------------------------------------------- assemble

ASSEMBLE_DEFAULTS = {
    "manifest": None,
    "target": 5.0,
    "tol": None,
    "max_shots": DEFAULT_MAX_SHOTS,
    "output": None,
    "apply_filter": False,
    "min_duration": 1.0,
    "min_luminance": 0.05,
    "min_aesthetic": 4.5,
}


def cmd_assemble(args: argparse.Namespace) -> int:
    _apply_config(args, ASSEMBLE_DEFAULTS)
    if args.manifest is None:
        raise ValueError("--manifest is required")
    shots = read_shot_manifest(args.manifest)
    if args.apply_filter:
        policy = FilterPolicy(
            min_duration_s=args.min_duration,
            min_luminance=args.min_luminance,
            min_aesthetic=args.min_aesthetic,
        )
        shots, rejected = filter_shots(shots, policy)
        for shot, reason in rejected:
            print(f"rejected {shot.id}: {reason.value}", file=sys.stderr)
    tol = args.tol if args.tol is not None else args.target * DEFAULT_TOLERANCE_FRACTION
    samples = assemble_samples(shots, args.target, tol, args.max_shots)
    if args.output is not None:
        write_samples(samples, args.output)
        print(f"wrote {len(samples)} samples to {args.output}")
    else:
        for sample in samples:
            print(json.dumps(sample_record(sample)))
    return 0


# ------------------------------------------------------------------- prompt

PROMPT_RENDER_DEFAULTS = {"global_text": None, "shot_text": None, "output": None}
PROMPT_PARSE_DEFAULTS = {"text": None, "file": None}


def cmd_prompt_render(args: argparse.Namespace) -> int:
    _apply_config(args, PROMPT_RENDER_DEFAULTS)
    if args.global_text is None or not args.shot_text:
        raise ValueError("prompt render needs --global-text and at least one --shot-text")
    rendered = render_hierarchical_prompt(
        HierarchicalPrompt(args.global_text, tuple(args.shot_text))
    )
    if args.output is not None:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(rendered + "\n")
        print(f"wrote {args.output}")
    else:
        print(rendered)
    return 0


def cmd_prompt_parse(args: argparse.Namespace) -> int:
    _apply_config(args, PROMPT_PARSE_DEFAULTS)
    if (args.text is None) == (args.file is None):
        raise ValueError("prompt parse needs exactly one of --text or --file")
    if args.file is not None:
        with open(args.file, encoding="utf-8") as fh:
            text = fh.read()
        if text.endswith("\n"):
            text = text[:-1]
    else:
        text = args.text
    prompt = parse_hierarchical_prompt(text)
    print(json.dumps({"global": prompt.global_text, "shots": list(prompt.per_shot)}))
    return 0


# ---------------------------------------------------------------- score-sca

SCA_DEFAULTS = {"pred": None, "gt": None, "penalty": None}


def cmd_score_sca(args: argparse.Namespace) -> int:
    _apply_config(args, SCA_DEFAULTS)
    if args.pred is None or args.gt is None:
        raise ValueError("score-sca needs --pred and --gt cut-list files")
    pred = read_cut_list(args.pred)
    gt = read_cut_list(args.gt)
    report = shot_cut_accuracy(pred, gt, penalty_per_unmatched=args.penalty)
    for pred_cut, gt_cut, deviation in report.pairs:
        print(f"matched pred {pred_cut} <-> gt {gt_cut} (deviation {deviation})")
    print(f"unmatched: pred={report.unmatched_pred} gt={report.unmatched_gt} "
          f"(penalty {report.penalty_per_unmatched:g} each)")
    print(f"e_matched={report.e_matched:g} e_penalty={report.e_penalty:g} "
          f"nsd={report.nsd:.6f}")
    print(f"sca={report.sca:.6f}")
    return 0


# -------------------------------------------------------- score-consistency

CONSISTENCY_DEFAULTS = {
    "kind": None,
    "embeddings": None,
    "hash_dim": 32,
    "hash_seed": 0,
    "shots": None,
    "group": None,
    "frames": None,
    "prompt_ids": None,
    "media_ids": None,
}


def _provider(args: argparse.Namespace) -> EmbeddingProvider:
    if args.embeddings is not None:
        return load_embeddings(args.embeddings)
    return HashEmbeddingProvider(dim=args.hash_dim, seed=args.hash_seed)


def _id_list(text: str, flag: str) -> list[str]:
    ids = [part.strip() for part in str(text).split(",")]
    if any(not part for part in ids):
        raise ValueError(f"{flag} has an empty segment id in {text!r}")
    return ids


def cmd_score_consistency(args: argparse.Namespace) -> int:
    _apply_config(args, CONSISTENCY_DEFAULTS)
    if args.kind not in ("inter", "intra", "semantic"):
        raise ValueError("--kind must be inter, intra, or semantic")
    provider = _provider(args)

    if args.kind == "inter":
        if not args.group:
            raise ValueError("inter needs at least one --group of segment ids")
        groups_ids = [_id_list(group, "--group") for group in args.group]
        if args.shots is not None:
            ordered = _id_list(args.shots, "--shots")
        else:
            ordered = []
            for group in groups_ids:
                ordered.extend(sid for sid in group if sid not in ordered)
        index = {sid: i for i, sid in enumerate(ordered)}
        missing = sorted({s for g in groups_ids for s in g} - set(index))
        if missing:
            raise ValueError(f"group ids missing from --shots: {missing}")
        vectors = [provider.embed(sid) for sid in ordered]
        groups = [tuple(index[sid] for sid in group) for group in groups_ids]
        score = inter_shot_consistency(vectors, groups)
    elif args.kind == "intra":
        if args.frames is None:
            raise ValueError("intra needs --frames with ordered frame segment ids")
        vectors = [provider.embed(fid) for fid in _id_list(args.frames, "--frames")]
        score = intra_shot_consistency(vectors)
    else:
        if args.prompt_ids is None or args.media_ids is None:
            raise ValueError("semantic needs --prompt-ids and --media-ids")
        prompts = [provider.embed(pid) for pid in _id_list(args.prompt_ids, "--prompt-ids")]
        media = [provider.embed(mid) for mid in _id_list(args.media_ids, "--media-ids")]
        score = semantic_consistency_per_shot(prompts, media)
    print(f"{args.kind}_consistency={score:.6f}")
    return 0


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multishot",
        description="Shot-windowed attention, curation, and scoring toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str, func) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file; explicit flags win")
        p.set_defaults(func=func)
        return p

    p = add("demo-attn", "print layouts, plans, and masks for a small setup", cmd_demo_attn)
    p.add_argument("--shots", help="per-shot FxT specs, e.g. '2x2,2x2,3x4'")
    p.add_argument("--strategy", choices=sorted(STRATEGIES))
    p.add_argument("--mode", choices=[m.value for m in PlanMode])
    p.add_argument("--d", type=int, help="head dimension for FLOP counts")
    p.add_argument("--global-tokens", type=int, help="also show the cross-attention window mask")
    p.add_argument("--shot-tokens", help="comma list of per-shot prompt token counts")
    p.add_argument("--delimiter-tokens", type=int)

    p = add("verify", "randomized equivalence checks against the dense oracle", cmd_verify)
    p.add_argument("--seed", type=int)
    p.add_argument("--cases", type=int)
    p.add_argument("--precision", choices=("double", "single"))
    p.add_argument("--inject-fault", action="store_const", const=True,
                   help="corrupt one plan to demonstrate fault localization")

    p = add("bench", "FLOP and wall-time scaling table (CSV)", cmd_bench)
    p.add_argument("--n-shots", help="comma list of shot counts, e.g. '2,4,8,16'")
    p.add_argument("--frames", type=int)
    p.add_argument("--tpf", type=int, help="tokens per frame")
    p.add_argument("--strategy", choices=sorted(STRATEGIES))
    p.add_argument("--mode", choices=[m.value for m in PlanMode])
    p.add_argument("--d", type=int)
    p.add_argument("--precision", choices=("double", "single"))
    p.add_argument("--repetitions", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-dense-tokens", type=int)
    p.add_argument("-o", "--output", help="CSV path (stdout when omitted)")
    p.add_argument("--plot", action="store_const", const=True,
                   help="also render a PNG figure next to the CSV")

    p = add("assemble", "filter a shot manifest and assemble duration-tier samples", cmd_assemble)
    p.add_argument("--manifest", help="JSONL shot manifest")
    p.add_argument("--target", type=float, help="target duration tier in seconds")
    p.add_argument("--tol", type=float, help="tolerance in seconds (default 20%% of target)")
    p.add_argument("--max-shots", type=int)
    p.add_argument("-o", "--output", help="JSONL samples path (stdout when omitted)")
    p.add_argument("--apply-filter", action="store_const", const=True,
                   help="drop too-short/too-dark/low-aesthetic shots first")
    p.add_argument("--min-duration", type=float)
    p.add_argument("--min-luminance", type=float)
    p.add_argument("--min-aesthetic", type=float)

    p = add("prompt", "render or parse the hierarchical prompt format", None)
    prompt_sub = p.add_subparsers(dest="prompt_command", required=True)
    pr = prompt_sub.add_parser("render", help="serialize global + per-shot texts")
    pr.add_argument("--config", help="JSON config file; explicit flags win")
    pr.add_argument("--global-text")
    pr.add_argument("--shot-text", action="append", help="repeat once per shot, in order")
    pr.add_argument("-o", "--output")
    pr.set_defaults(func=cmd_prompt_render)
    pp = prompt_sub.add_parser("parse", help="split serialized text back into parts")
    pp.add_argument("--config", help="JSON config file; explicit flags win")
    pp.add_argument("--text")
    pp.add_argument("--file")
    pp.set_defaults(func=cmd_prompt_parse)

    p = add("score-sca", "shot cut accuracy between two cut-list files", cmd_score_sca)
    p.add_argument("--pred", help="predicted cut list (JSON)")
    p.add_argument("--gt", help="ground-truth cut list (JSON)")
    p.add_argument("--penalty", type=float, help="per-unmatched-cut cost (default: mean gt shot length)")

    p = add("score-consistency", "embedding-based consistency scores", cmd_score_consistency)
    p.add_argument("--kind", choices=("inter", "intra", "semantic"))
    p.add_argument("--embeddings", help="JSON file of id -> unit vector")
    p.add_argument("--hash-dim", type=int, help="synthetic provider dimension")
    p.add_argument("--hash-seed", type=int)
    p.add_argument("--shots", help="ordered shot segment ids (inter)")
    p.add_argument("--group", action="append", help="comma list of shot ids sharing a character; repeatable")
    p.add_argument("--frames", help="ordered frame segment ids (intra)")
    p.add_argument("--prompt-ids", help="per-shot prompt segment ids (semantic)")
    p.add_argument("--media-ids", help="per-shot media segment ids (semantic)")

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MultishotError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
