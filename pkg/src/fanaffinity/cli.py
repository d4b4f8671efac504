"""CLI entry point: validate, synth, collect and report.

Exit codes: 0 success, 1 validation failure, 2 runtime failure.
"""

import json
from pathlib import Path
from typing import NoReturn, Optional

import typer
from pydantic import ValidationError

from fanaffinity.config import RunConfig, Subcommand, configure_logging
from fanaffinity.ingest import DEFAULT_MALFORMED_THRESHOLD
from fanaffinity.metrics import Summation
from fanaffinity.models import Level, OutputFormat

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2

app = typer.Typer(help="Political-affinity metrics over follower-ID sets")


def _fail(message: str, code: int) -> NoReturn:
    typer.echo(f"Error: {message}", err=True)
    raise typer.Exit(code)


def _run_config(**fields) -> RunConfig:
    try:
        return RunConfig(**fields)
    except ValidationError as e:
        for err in e.errors():
            typer.echo(f"  {'.'.join(str(p) for p in err['loc'])}: {err['msg']}", err=True)
        _fail("invalid options", EXIT_INVALID)


@app.command()
def validate(
    manifest: Path = typer.Option(..., "-m", "--manifest", help="Dataset manifest"),
    malformed_threshold: float = typer.Option(
        DEFAULT_MALFORMED_THRESHOLD,
        "--malformed-threshold",
        help="Fatal share of malformed lines in text follower files",
    ),
):
    """Validate a manifest and every follower file it names."""
    from fanaffinity.ingest import validate_dataset

    violations = validate_dataset(manifest, malformed_threshold)
    typer.echo(
        json.dumps(
            {
                "ok": not violations,
                "violations": [v.model_dump(mode="json") for v in violations],
            },
            indent=2,
        )
    )
    raise typer.Exit(EXIT_INVALID if violations else EXIT_OK)


@app.command()
def synth(
    config: Path = typer.Argument(..., help="Synthetic dataset config (JSON)"),
    out: Path = typer.Option(..., "-o", "--out", help="Dataset output directory"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Override the config seed"),
):
    """Generate a synthetic dataset with known political lean."""
    from fanaffinity.errors import SynthConfigError
    from fanaffinity.synth import describe, generate, load_synth_config

    _run_config(subcommand=Subcommand.SYNTH, out=out, seed=seed)
    try:
        cfg = load_synth_config(config.read_text(encoding="utf-8"))
        if seed is not None:
            cfg = cfg.model_copy(update={"seed": seed})
        manifest_path, truth = generate(cfg, out)
    except SynthConfigError as e:
        for problem in e.details.get("fields", []):
            typer.echo(f"  {problem['field']}: {problem['msg']}", err=True)
        _fail(e.message, EXIT_INVALID)
    except OSError as e:
        _fail(str(e), EXIT_RUNTIME)

    typer.echo(f"Wrote {manifest_path}")
    typer.echo("Ground truth (not an input):")
    typer.echo(f"  {'state':<6} {'lean':>6} {'democrats':>10} {'republicans':>12} {'noise':>8}")
    for row in describe(truth):
        typer.echo(
            f"  {row.state:<6} {row.lean:>6.2f} {row.democrats:>10} "
            f"{row.republicans:>12} {row.noise:>8}"
        )


@app.command()
def collect(
    manifest: Path = typer.Option(..., "-m", "--manifest", help="Dataset to replay"),
    out: Path = typer.Option(..., "-o", "--out", help="Collection output directory"),
    threads: int = typer.Option(4, "--threads", min=1, help="Concurrent collection jobs"),
    seed: int = typer.Option(0, "--seed", help="Page shuffle seed"),
    page_size: int = typer.Option(5000, "--page-size", min=1, max=5000),
):
    """Demo collection: replay a dataset through the paginated collector.

    Pages are served by an in-process fake transport with a fake clock, so
    rate-limit waits are recorded but never slept.
    """
    from fanaffinity.collector import (
        FakeClock,
        RetryPolicy,
        SnapshotTransport,
        collect_all,
    )
    from fanaffinity.errors import AffinityError, CollectionAbortedError
    from fanaffinity.ingest import load_dataset

    cfg = _run_config(
        subcommand=Subcommand.COLLECT, manifest=manifest, out=out, threads=threads, seed=seed
    )
    try:
        snapshot, _ = load_dataset(cfg.manifest, cfg.threads)
    except AffinityError as e:
        _fail(e.message, EXIT_INVALID)
    except OSError as e:
        _fail(str(e), EXIT_RUNTIME)

    clock = FakeClock()
    transport = SnapshotTransport(snapshot, clock, seed=seed)
    try:
        result = collect_all(
            transport,
            snapshot.registry,
            cfg.out,
            concurrency_limit=cfg.threads,
            policy=RetryPolicy(page_size=page_size),
            clock=clock,
        )
    except CollectionAbortedError as e:
        typer.echo(json.dumps(e.as_dict(), indent=2), err=True)
        raise typer.Exit(EXIT_RUNTIME)
    except (AffinityError, OSError) as e:
        _fail(str(e), EXIT_RUNTIME)

    pages = sum(job.pages_fetched for job in result.jobs)
    waits = sum(len(job.waits) for job in result.jobs)
    typer.echo(f"Collected {len(result.jobs)} entities in {pages} pages ({waits} rate-limit waits)")
    typer.echo(f"Wrote {result.manifest_path}")


@app.command()
def report(
    manifest: Path = typer.Option(..., "-m", "--manifest", help="Dataset manifest"),
    out: Path = typer.Option(..., "-o", "--out", help="Report output directory"),
    level: Level = typer.Option(Level.STATE, "--level", help="Grouping level"),
    format: OutputFormat = typer.Option(OutputFormat.CSV, "-f", "--format", help="csv|text"),
    threads: int = typer.Option(1, "--threads", min=1, help="Worker threads"),
    malformed_threshold: float = typer.Option(
        DEFAULT_MALFORMED_THRESHOLD, "--malformed-threshold"
    ),
    summation: Summation = typer.Option(
        Summation.SEQUENTIAL,
        "--summation",
        help="sequential|compensated|auto",
    ),
    track: bool = typer.Option(False, "--track", help="Log the run to MLflow"),
    experiment: Optional[str] = typer.Option(None, "-e", "--experiment", help="MLflow experiment"),
):
    """Compute ratios, senator breakdown and CDR tables."""
    from fanaffinity.errors import AffinityError, IdSetFormatError, IngestError, RegistryError
    from fanaffinity.ingest import file_digest, load_dataset
    from fanaffinity.report import emit_report

    cfg = _run_config(
        subcommand=Subcommand.REPORT,
        manifest=manifest,
        out=out,
        level=level,
        format=format,
        threads=threads,
        malformed_threshold=malformed_threshold,
        summation=summation,
        track=track,
        experiment=experiment,
    )
    try:
        snapshot, ingest = load_dataset(cfg.manifest, cfg.threads, cfg.malformed_threshold)
    except (RegistryError, IngestError, IdSetFormatError) as e:
        _fail(e.message, EXIT_INVALID)
    except OSError as e:
        _fail(str(e), EXIT_RUNTIME)

    try:
        result = emit_report(
            snapshot, cfg.out, cfg.level, cfg.format, cfg.threads, summation=cfg.summation
        )
    except (AffinityError, OSError) as e:
        _fail(str(e), EXIT_RUNTIME)

    for path in result.files:
        typer.echo(f"Wrote {path}")
    if result.warnings:
        typer.echo(f"{len(result.warnings)} undefined row(s), see warnings", err=True)

    if cfg.track:
        from fanaffinity.tracking import DEFAULT_EXPERIMENT, ReportTracker

        tracker = ReportTracker(cfg.experiment or DEFAULT_EXPERIMENT)
        run_id = tracker.log_report(
            result,
            params={
                "level": cfg.level.value,
                "format": cfg.format.value,
                "threads": str(cfg.threads),
                "summation": cfg.summation.value,
                "manifest": str(cfg.manifest),
                "manifest_digest": file_digest(cfg.manifest),
                "entities": str(len(ingest.entries)),
            },
        )
        if run_id:
            typer.echo(f"Tracked run {run_id}")


def main():
    configure_logging()
    app()


if __name__ == "__main__":
    main()
