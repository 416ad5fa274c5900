"""Pipeline driver: every stage as a subcommand with a reproducible config.

    physiodrift synth    --config c.json        render synthetic session trees
    physiodrift ingest   --config c.json        validate the session inventory
    physiodrift features --config c.json        extract the per-segment feature table
    physiodrift select   --config c.json        run forward feature selection
    physiodrift fit      --config c.json -p ID  ensemble + reference model for one participant
    physiodrift eval     --config c.json ...    evaluate a saved model on a feature table
    physiodrift drift    --config c.json        stability metrics + case table, all participants
    physiodrift report   --config c.json        human-readable markdown summary

Commands are idempotent: identical inputs and config produce byte-identical
outputs, and every artifact embeds the config hash. Config values come from
defaults, then the --config file, then PHYSIODRIFT_* environment variables
(double underscore for nesting, e.g. PHYSIODRIFT_EBM__ROUNDS=200), then
flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import drift as drift_mod
from . import ebm as ebm_mod
from . import synth as synth_mod
from .config import (
    ConfigError,
    PipelineConfig,
    hashed_csv,
    hashed_json,
    load_config,
    read_embedded_hash,
)
from .features import extract_table
from .preprocess import remove_outliers_3sigma, removal_log_to_csv
from .selection import sequential_forward_select
from .signals import (
    Period,
    discover_sessions,
    extract_labeled_segments,
    load_session,
    validate_session,
    write_session,
)
from .tables import FeatureTable

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MISSING_INPUT = 2
EXIT_CONFIG = 3
EXIT_EMPTY_DATA = 4


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code = code
        self.kind = kind


def _out_dir(config: PipelineConfig) -> Path:
    out = Path(config.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise CliError(EXIT_MISSING_INPUT, "missing_input", f"{what} not found: {path}")
    return path


def _load_table(config: PipelineConfig) -> FeatureTable:
    path = _require(_out_dir(config) / "features.csv", "feature table (run `features` first)")
    return FeatureTable.from_csv(path.read_text())


def _model_features(config: PipelineConfig) -> list[str]:
    if config.features_override:
        return list(config.features_override)
    path = _require(_out_dir(config) / "selection.json", "selection.json (run `select` first)")
    return list(json.loads(path.read_text())["selected"])


def cmd_synth(config: PipelineConfig, spec_path: str | None = None) -> int:
    """Render one session directory per (participant, period).

    The truth model comes from a named preset or, when --spec is given, from
    a JSON file mirroring the generator spec.
    """
    if spec_path is not None:
        path = _require(Path(spec_path), "generator spec JSON")
        try:
            truth = synth_mod.truthspec_from_dict(json.loads(path.read_text()))
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as err:
            raise CliError(EXIT_CONFIG, "config", f"bad generator spec: {err}") from None
    else:
        preset_fn = synth_mod.PRESETS.get(config.synth.preset)
        if preset_fn is None:
            raise CliError(EXIT_CONFIG, "config",
                           f"unknown synth preset {config.synth.preset!r}; "
                           f"choose from {sorted(synth_mod.PRESETS)}")
        truth = preset_fn(seed=config.seed)
    root = Path(config.paths.sessions_root)
    manifest_rows = []
    for p_idx, pid in enumerate(sorted(config.synth.participants)):
        for period in (Period.P1, Period.P2):
            plan = synth_mod.SessionPlan(
                participant_id=pid,
                period=period,
                start_time=config.synth.start_time + p_idx * 1.0e6 + period.flag * 1.0e7,
                n_annotations=config.synth.n_annotations_per_period,
                spacing_s=config.synth.spacing_s,
                truth=truth,
                seed=config.seed,
            )
            session, truths = synth_mod.render_session(plan)
            session_dir = root / f"{pid}_{period.value}"
            write_session(session, session_dir, extra_manifest={"config_hash": config.hash})
            manifest_rows.append({
                "participant": pid,
                "period": period.value,
                "dir": str(session_dir),
                "annotations": len(truths),
                "label_rate": float(np.mean([t.label for t in truths])) if truths else None,
            })
    (_out_dir(config) / "synth_manifest.json").write_text(
        hashed_json({
            "preset": config.synth.preset if spec_path is None else None,
            "spec": synth_mod.truthspec_to_dict(truth),
            "sessions": manifest_rows,
        }, config.hash)
    )
    print(f"rendered {len(manifest_rows)} sessions under {root}")
    return EXIT_OK


def cmd_ingest(config: PipelineConfig) -> int:
    """Validate every session directory and write the inventory."""
    root = Path(config.paths.sessions_root)
    _require(root, "sessions root")
    session_dirs = discover_sessions(root)
    if not session_dirs:
        raise CliError(EXIT_EMPTY_DATA, "empty_data", f"no sessions under {root}")
    inventory = []
    for sdir in session_dirs:
        session = load_session(sdir)
        issues = validate_session(session)
        inventory.append({
            "dir": str(sdir),
            "participant": session.participant_id,
            "period": session.period.value,
            "annotations": len(session.annotations),
            "channels": {
                kind.value: {
                    "rate_hz": ch.rate,
                    "samples": int(len(ch.samples)),
                    "duration_s": ch.duration_s,
                }
                for kind, ch in sorted(session.channels.items(), key=lambda kv: kv[0].value)
            },
            "issues": [{"severity": i.severity, "message": i.message} for i in issues],
        })
    (_out_dir(config) / "inventory.json").write_text(
        hashed_json({"sessions": inventory}, config.hash)
    )
    print(f"ingested {len(inventory)} sessions")
    return EXIT_OK


def cmd_features(config: PipelineConfig) -> int:
    """Extract features for every session, remove outliers, write the table."""
    root = Path(config.paths.sessions_root)
    _require(root, "sessions root")
    session_dirs = discover_sessions(root)
    if not session_dirs:
        raise CliError(EXIT_EMPTY_DATA, "empty_data", f"no sessions under {root}")
    tables = []
    n_segments = n_rejected = 0
    for sdir in session_dirs:
        session = load_session(sdir)
        segments = extract_labeled_segments(session)
        table, rejected = extract_table(segments, config.extraction)
        n_segments += len(segments)
        n_rejected += len(rejected)
        tables.append(table)
    merged = FeatureTable.concat(tables)
    if len(merged) == 0:
        log.warning("no usable annotations; writing an empty feature table")
    cleaned, removals = remove_outliers_3sigma(merged, sigma=config.outliers.sigma)
    out = _out_dir(config)
    (out / "features.csv").write_text(hashed_csv(cleaned.to_csv(), config.hash))
    (out / "outlier_log.csv").write_text(hashed_csv(removal_log_to_csv(removals), config.hash))
    print(
        f"extracted {len(cleaned)} rows from {n_segments} segments "
        f"({n_rejected} rejected, {len(removals)} outlier values removed)"
    )
    return EXIT_OK


def cmd_select(config: PipelineConfig) -> int:
    table = _load_table(config)
    if len(table) == 0:
        raise CliError(EXIT_EMPTY_DATA, "empty_data", "feature table has no rows")
    result = sequential_forward_select(
        table,
        k=config.selection.k,
        folds=config.selection.folds,
        seed=config.seed,
        wrapper=config.selection.wrapper,
    )
    (_out_dir(config) / "selection.json").write_text(
        hashed_json(result.to_dict(), config.hash)
    )
    print("selected: " + ", ".join(result.selected))
    return EXIT_OK


def cmd_fit(config: PipelineConfig, participant: str) -> int:
    """Ensemble fit plus a reference model trained on all of one participant's rows."""
    table = _load_table(config)
    features = _model_features(config)
    rows = table.subset(table.participants == participant)
    rows = rows.subset(rows.complete_rows(features))
    if len(rows) == 0:
        raise CliError(EXIT_EMPTY_DATA, "empty_data",
                       f"no complete rows for participant {participant!r}")
    X = rows.matrix(features)
    ens = ebm_mod.fit_ensemble(
        X, rows.labels, rows.periods, features, config.ebm,
        n_repeats=config.ensemble.n_repeats,
        n_per_period=config.ensemble.n_per_period,
        grid_points=config.ensemble.grid_points,
        seed=np.random.SeedSequence([config.seed, drift_mod.participant_entropy(participant), 0]),
    )
    model = ebm_mod.fit_ebm(
        X, rows.labels, rows.periods, features, config.ebm,
        seed=np.random.SeedSequence([config.seed, drift_mod.participant_entropy(participant), 2]),
    )
    fit_dir = _out_dir(config) / f"fit_{participant}"
    fit_dir.mkdir(parents=True, exist_ok=True)
    metrics = [m for m in ens.metrics if m is not None]
    ens_payload = {
        "participant": participant,
        "features": features,
        "n_repeats": ens.n_repeats,
        "n_per_period": ens.n_per_period,
        "degraded": ens.degraded,
        "mean_test_accuracy": float(np.mean([m["accuracy"] for m in metrics])) if metrics else None,
        "mean_test_auc": (
            float(np.mean([m["auc"] for m in metrics if m["auc"] is not None]))
            if any(m["auc"] is not None for m in metrics) else None
        ),
        "curves": {
            f: {
                "grid": ens.grids[f].tolist(),
                "mean_com": ens.mean_curve(f, "com").tolist(),
                "lo_com": ens.band(f, "com")[0].tolist(),
                "hi_com": ens.band(f, "com")[1].tolist(),
                "mean_total": ens.mean_curve(f, "total").tolist(),
                "lo_total": ens.band(f, "total")[0].tolist(),
                "hi_total": ens.band(f, "total")[1].tolist(),
            }
            for f in features
        },
    }
    (fit_dir / "ensemble.json").write_text(hashed_json(ens_payload, config.hash))
    model_payload = ebm_mod.model_to_dict(model)
    (fit_dir / "model.json").write_text(hashed_json(model_payload, config.hash))
    print(f"fit {participant}: {ens.n_repeats} repeats, outputs in {fit_dir}")
    return EXIT_OK


def cmd_eval(config: PipelineConfig, model_path: str, features_csv: str | None) -> int:
    model_file = _require(Path(model_path), "model JSON")
    data = json.loads(model_file.read_text())
    data.pop("config_hash", None)
    model = ebm_mod.model_from_dict(data)
    if features_csv is None:
        table = _load_table(config)
    else:
        table = FeatureTable.from_csv(_require(Path(features_csv), "feature table").read_text())
    rows = table.subset(table.complete_rows(model.features))
    if len(rows) == 0:
        raise CliError(EXIT_EMPTY_DATA, "empty_data", "no complete rows to evaluate")
    metrics = ebm_mod.evaluate(model, rows.matrix(model.features), rows.labels, rows.periods)
    (_out_dir(config) / "eval.json").write_text(hashed_json(metrics, config.hash))
    print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


def cmd_drift(config: PipelineConfig) -> int:
    table = _load_table(config)
    if len(table) == 0:
        raise CliError(EXIT_EMPTY_DATA, "empty_data", "feature table has no rows")
    features = _model_features(config)
    report = drift_mod.analyze_drift(
        table, features, config.ebm,
        n_repeats=config.ensemble.n_repeats,
        n_per_period=config.ensemble.n_per_period,
        grid_points=config.ensemble.grid_points,
        seed=config.seed,
    )
    out = _out_dir(config)
    (out / "drift_report.json").write_text(
        hashed_json(drift_mod.report_to_dict(report), config.hash)
    )
    (out / "shapes.csv").write_text(hashed_csv(drift_mod.shapes_to_csv(report), config.hash))
    (out / "stability.csv").write_text(hashed_csv(drift_mod.stability_to_csv(report), config.hash))
    print(f"drift analysis for {len(report.participants)} participants written to {out}")
    return EXIT_OK


def cmd_report(config: PipelineConfig) -> int:
    out = _out_dir(config)
    report_path = _require(out / "drift_report.json", "drift_report.json (run `drift` first)")
    selection_path = out / "selection.json"
    texts = [report_path.read_text()]
    if selection_path.exists():
        texts.append(selection_path.read_text())
    features_path = out / "features.csv"
    if features_path.exists():
        texts.append(features_path.read_text())
    hashes = {read_embedded_hash(t) for t in texts}
    if len(hashes) > 1:
        raise CliError(EXIT_CONFIG, "config",
                       f"artifacts carry mixed config hashes: {sorted(h or '?' for h in hashes)}")
    if hashes != {config.hash}:
        raise CliError(EXIT_CONFIG, "config",
                       f"artifacts were produced with config hash {next(iter(hashes))!r}, "
                       f"current config is {config.hash!r}")
    report = json.loads(report_path.read_text())
    lines = [
        "# Drift analysis report",
        "",
        f"Config hash: `{config.hash}`",
        "",
        "## Cross-period train/test cases",
        "",
        "| participant | case | train | test | accuracy (SE) | AUC (SE) |",
        "|---|---|---|---|---|---|",
    ]
    case_desc = {"a": ("1st", "1st"), "b": ("1st", "2nd"), "c": ("2nd", "2nd"), "d": ("1st+2nd", "2nd")}
    for pid, pdata in sorted(report["participants"].items()):
        if not pdata.get("cases"):
            lines.append(f"| {pid} | - | - | - | skipped: {pdata.get('case_skip_reason')} | |")
            continue
        for case in ("a", "b", "c", "d"):
            c = pdata["cases"][case]
            train, test = case_desc[case]
            auc = "n/a" if c["auc"] is None else f"{c['auc']:.3f} ({c['auc_se']:.5f})"
            lines.append(
                f"| {pid} | ({case}) | {train} | {test} | "
                f"{c['accuracy']:.3f} ({c['accuracy_se']:.5f}) | {auc} |"
            )
    lines += [
        "",
        "## Feature stability (Pearson r between common and second-period curves)",
        "",
        "| feature | median r | mean r | q1 | q3 | n |",
        "|---|---|---|---|---|---|",
    ]
    aggregates = report["aggregates"]
    ranked = sorted(aggregates.items(), key=lambda kv: -kv[1]["median"])
    for feat, agg in ranked:
        lines.append(
            f"| {feat} | {agg['median']:.3f} | {agg['mean']:.3f} | "
            f"{agg['q1']:.3f} | {agg['q3']:.3f} | {agg['n']} |"
        )
    if ranked:
        lines += [
            "",
            f"Most stable feature: **{ranked[0][0]}**; "
            f"least stable: **{ranked[-1][0]}**.",
        ]
    lines.append("")
    (out / "report.md").write_text("\n".join(lines))
    print(f"report written to {out / 'report.md'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="physiodrift",
        description="Wearable-signal arousal pipeline with cross-period drift analysis",
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--out", help="override output directory")
    parser.add_argument("--sessions", help="override sessions root")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sy = sub.add_parser("synth", help="render synthetic session trees from the configured preset")
    sy.add_argument("--spec", help="generator spec JSON (overrides the preset)")
    sub.add_parser("ingest", help="validate sessions and write the inventory")
    sub.add_parser("features", help="extract the per-segment feature table")
    sub.add_parser("select", help="sequential forward feature selection")
    fit = sub.add_parser("fit", help="fit the ensemble for one participant")
    fit.add_argument("--participant", "-p", required=True)
    ev = sub.add_parser("eval", help="evaluate a saved model on a feature table")
    ev.add_argument("--model", required=True, help="model JSON path")
    ev.add_argument("--features-csv", help="feature table (defaults to out/features.csv)")
    sub.add_parser("drift", help="stability metrics and case tables for all participants")
    sub.add_parser("report", help="markdown summary of the drift analysis")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        overrides: dict = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["paths.out_dir"] = args.out
        if args.sessions is not None:
            overrides["paths.sessions_root"] = args.sessions
        try:
            config = load_config(args.config, overrides)
        except ConfigError as err:
            raise CliError(EXIT_CONFIG, "config", str(err)) from None
        if args.command == "synth":
            return cmd_synth(config, spec_path=args.spec)
        if args.command == "ingest":
            return cmd_ingest(config)
        if args.command == "features":
            return cmd_features(config)
        if args.command == "select":
            return cmd_select(config)
        if args.command == "fit":
            return cmd_fit(config, args.participant)
        if args.command == "eval":
            return cmd_eval(config, args.model, args.features_csv)
        if args.command == "drift":
            return cmd_drift(config)
        if args.command == "report":
            return cmd_report(config)
        raise CliError(EXIT_ERROR, "internal", f"unhandled command {args.command!r}")
    except CliError as err:
        print(json.dumps({"error": err.kind, "message": str(err)}), file=sys.stderr)
        return err.code
    except Exception as err:  # keep the exit contract machine-readable
        print(json.dumps({"error": "internal", "message": f"{type(err).__name__}: {err}"}),
              file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
