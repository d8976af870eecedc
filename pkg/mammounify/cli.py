"""MammoUnify command line.

Subcommands:
  harmonize --dataset <cbis|tompei|vindr> [--from-store SRC] [--out DIR]
  audit     (--dataset NAME | --store DIR) [--out DIR] [--granularity image|breast]
  inject    --store SRC --out DST --p P --q Q --seed N
  validate  --store DIR [--sample N|all] [--seed N]

Exit codes: 0 ok, 2 config, 3 input data, 4 validation, 5 internal.
Logs go to standard error; summaries to standard output.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import List, Optional, Sequence

from mammounify.audit import audit_tables, corruption_prevalence, render_report
from mammounify.config import DEBUG, GRANULARITIES, INTENSITY_SCOPES, LATERALITY_SCOPES, InjectionScopes, RunConfig, load_config
from mammounify.errors import EXIT_INTERNAL, EXIT_OK, ConfigError, MammoError, ValidationFailed
from mammounify.harmonize import HarmonizeResult, harmonize, reprocess_store, store_root
from mammounify.inject import apply_injection, plan_for_store
from mammounify.model import Dataset, format_image_key, validate_record
from mammounify.store import StoreViolation, read_qc, read_store, validate_store

log = logging.getLogger("mammounify")

MAX_SHOWN = 50


def setup_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if (verbose or DEBUG) else logging.INFO
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _dataset(text: str) -> Dataset:
    try:
        return Dataset(text.upper())
    except ValueError:
        raise argparse.ArgumentTypeError(f"unknown dataset {text!r}; expected cbis, tompei or vindr") from None


def _sample(text: str) -> Optional[int]:
    if text.lower() == "all":
        return None
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--sample must be an integer or 'all', got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("--sample must be >= 0")
    return value


def _print_block(title: str, lines: Sequence[str]) -> None:
    print("=" * 60)
    print(f"  {title}")
    print("=" * 60)
    for line in lines:
        print(f"  {line}")
    print()


def _print_violations(violations: Sequence[StoreViolation]) -> None:
    for v in violations[:MAX_SHOWN]:
        print(f"  {v}")
    if len(violations) > MAX_SHOWN:
        print(f"  ... {len(violations) - MAX_SHOWN} more")


# -----------------------------
# Subcommands
# -----------------------------
def cmd_harmonize(cfg: RunConfig, dataset: Optional[Dataset], *, from_store: Optional[str] = None, out: Optional[str] = None) -> int:
    if from_store:
        dst = out or f"{os.path.normpath(from_store)}_restored"
        result: HarmonizeResult = reprocess_store(cfg, from_store, dst)
    else:
        if dataset is None:
            raise ConfigError("harmonize needs --dataset (or --from-store)", module="cli")
        result = harmonize(cfg, dataset, out)
    _print_block("MammoUnify harmonize", result.summary_lines())
    return EXIT_OK


def cmd_audit(cfg: RunConfig, root: str, *, out: Optional[str] = None, granularity: Optional[str] = None) -> int:
    records, manifest = read_store(root)
    problems = [
        StoreViolation(format_image_key(r.key), v.rule, v.field) for r in records for v in validate_record(r)
    ]
    if problems:
        print(f"store {root} is invalid: {len(problems)} violation(s)")
        _print_violations(problems)
        raise ValidationFailed(problems)
    qc = read_qc(root)
    granularity = granularity or cfg.counting_granularity
    tables = audit_tables(records, qc, dataset=manifest.dataset, granularity=granularity)
    out_dir = out or os.path.join(cfg.output_root, "audit", manifest.dataset.value.lower())
    rates = corruption_prevalence(qc)
    written = render_report(tables, out_dir, extra_json={"corruption_rates": rates})
    _print_block(
        "MammoUnify audit",
        [
            f"store               : {root}",
            f"dataset             : {manifest.dataset.value}",
            f"granularity         : {granularity}",
            f"images / patients   : {manifest.images} / {manifest.patients}",
            f"laterality flip rate: {rates['laterality_flip_rate']:.4f}",
            f"intensity flip rate : {rates['intensity_flip_rate']:.4f}",
            f"report files        : {len(written)} in {out_dir}",
        ],
    )
    return EXIT_OK


def cmd_inject(
    cfg: RunConfig,
    src: str,
    dst: str,
    p: float,
    q: float,
    seed: int,
    *,
    intensity_scope: Optional[str] = None,
    laterality_scope: Optional[str] = None,
) -> int:
    scopes = InjectionScopes(
        intensity_scope or cfg.injection.intensity_scope,
        laterality_scope or cfg.injection.laterality_scope,
    )
    plan = plan_for_store(src, p, q, seed, scopes)
    apply_injection(src, plan, dst, workers=cfg.workers, progress=True)
    _print_block(
        "MammoUnify inject",
        [
            f"source store : {src}",
            f"output store : {dst}",
            f"seed         : {seed}",
            f"intensity    : {len(plan.intensity)} {scopes.intensity_scope}(s) inverted (p={p})",
            f"laterality   : {len(plan.laterality)} {scopes.laterality_scope}(s) mirrored (q={q})",
        ],
    )
    return EXIT_OK


def cmd_validate(cfg: RunConfig, root: str, *, sample: Optional[int] = -1, seed: Optional[int] = None) -> int:
    """`sample=-1` means "use the config's orientation_sample"."""
    n = cfg.orientation_sample if sample == -1 else sample
    violations = validate_store(
        root,
        cfg.detector,
        sample=n,
        seed=cfg.validation_seed if seed is None else seed,
        progress=True,
    )
    if not violations:
        print(f"store {root}: OK (0 violations)")
        return EXIT_OK
    print(f"store {root}: {len(violations)} violation(s)")
    _print_violations(violations)
    raise ValidationFailed(violations)


# -----------------------------
# Argument parsing
# -----------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mammounify", description="Mammography dataset harmonization toolkit")
    parser.add_argument("--config", help="YAML config file (see config.example.yaml)")
    parser.add_argument("--output-root", help="Override output_root")
    parser.add_argument("--workers", type=int, help="Override workers")
    parser.add_argument("--verbose", "-v", action="store_true", help="DEBUG logging (same as DEBUG=1)")
    sub = parser.add_subparsers(dest="command", required=True)

    h = sub.add_parser("harmonize", help="Build a unified store from a raw dataset")
    h.add_argument("--dataset", type=_dataset)
    h.add_argument("--from-store", help="Reprocess an existing store instead of a raw dataset")
    h.add_argument("--out", help="Store root (default <output_root>/<dataset>)")

    a = sub.add_parser("audit", help="Bias-audit tables for a store")
    a.add_argument("--dataset", type=_dataset, help="Audit <output_root>/<dataset>")
    a.add_argument("--store", help="Store root to audit")
    a.add_argument("--out", help="Report directory (default <output_root>/audit/<dataset>)")
    a.add_argument("--granularity", choices=GRANULARITIES)

    i = sub.add_parser("inject", help="Copy a store and inject laterality/intensity defects")
    i.add_argument("--store", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--p", type=float, default=0.0, help="Fraction of patients (or images) to invert")
    i.add_argument("--q", type=float, default=0.0, help="Fraction of images (or patients) to mirror")
    i.add_argument("--seed", type=int, required=True)
    i.add_argument("--intensity-scope", choices=INTENSITY_SCOPES)
    i.add_argument("--laterality-scope", choices=LATERALITY_SCOPES)

    v = sub.add_parser("validate", help="Check a store against the layout and image rules")
    v.add_argument("--store", required=True)
    v.add_argument("--sample", type=_sample, default=-1, help="Images to spot-check for orientation/polarity, or 'all'")
    v.add_argument("--seed", type=int)
    return parser


def dispatch(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, {"output_root": args.output_root, "workers": args.workers})
    if args.command == "harmonize":
        return cmd_harmonize(cfg, args.dataset, from_store=args.from_store, out=args.out)
    if args.command == "audit":
        if not args.store and args.dataset is None:
            raise ConfigError("audit needs --store or --dataset", module="cli")
        root = args.store or store_root(cfg, args.dataset)
        return cmd_audit(cfg, root, out=args.out, granularity=args.granularity)
    if args.command == "inject":
        return cmd_inject(
            cfg, args.store, args.out, args.p, args.q, args.seed,
            intensity_scope=args.intensity_scope, laterality_scope=args.laterality_scope,
        )
    return cmd_validate(cfg, args.store, sample=args.sample, seed=args.seed)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    try:
        return dispatch(args)
    except MammoError as e:
        print(f"[{e.module}] ERROR: {e}", file=sys.stderr)
        if e.hint:
            print(f"[{e.module}] hint: {e.hint}", file=sys.stderr)
        return e.exit_code
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
