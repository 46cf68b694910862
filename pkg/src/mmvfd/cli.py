"""Batch command-line surface.

Commands: extract, train, eval, cmad, robust, attack, report. Every command
writes its outputs under the --out directory together with a copy of the
run config, library versions, and file checksums; wall-clock timestamps
live only in a sidecar so reruns with the same config and seed are
byte-identical. One command per output directory at a time (lock file).
The MMVFD_CACHE_ROOT environment variable overrides the configured feature
cache root.
"""

from __future__ import annotations

import hashlib
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import click

from . import __version__, configio, reporting
from .backbones import FeatureCache, make_backend
from .discrepancy import CmadReport, analyze, file_sha256
from .ingest import load_manifest, save_manifest, split_holdout
from .metrics import evaluate_manifest, per_generator_report
from .pipeline import features_for_entry
from .sweeps import (
    DEFAULT_EPSILONS,
    RobustnessReport,
    attack_sweep,
    default_perturbation_grid,
    robustness_sweep,
)
from .training import Checkpoint, TrainHistory, train

EXIT_PARTIAL = 3
CACHE_ENV = "MMVFD_CACHE_ROOT"
LOCK_NAME = ".mmvfd.lock"
SIDECAR_EXCLUDE = {LOCK_NAME, "checksums.txt", "run_sidecar.txt"}


class RunContext:
    def __init__(self, config_path: str, out: str, seed: int | None):
        self.cfg = configio.load_run_config(config_path)
        if seed is not None:
            self.cfg.seed = seed
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self._lock = self.out / LOCK_NAME
        try:
            fd = os.open(self._lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            os.write(fd, str(os.getpid()).encode())
            os.close(fd)
        except FileExistsError:
            raise click.ClickException(
                f"output dir {self.out} is locked by another command ({self._lock})"
            )
        self.backend = make_backend(self.cfg.backend)
        root = os.environ.get(CACHE_ENV, "") or self.cfg.cache_root
        self.cache = FeatureCache(root, self.backend.fingerprint) if root else None

    def default_cache(self) -> FeatureCache:
        if self.cache is None:
            self.cache = FeatureCache(self.out / "cache", self.backend.fingerprint)
        return self.cache

    def manifest(self):
        if not self.cfg.manifest:
            raise click.ClickException("config has no data.manifest")
        return load_manifest(self.cfg.manifest)

    def eval_manifest(self):
        if self.cfg.eval_manifest:
            return load_manifest(self.cfg.eval_manifest)
        _, holdout = split_holdout(self.manifest(), self.cfg.val_fraction, self.cfg.seed)
        return holdout

    def load_checkpoint(self, path: str | None) -> tuple[Checkpoint, str]:
        ckpt_path = Path(path) if path else self.out / "checkpoint.cvfd"
        if not ckpt_path.exists():
            raise click.ClickException(f"checkpoint not found: {ckpt_path}")
        return Checkpoint.load(ckpt_path), file_sha256(ckpt_path)

    def finalize(self) -> None:
        (self.out / "config.txt").write_text(
            configio.render_run_config(self.cfg), encoding="utf-8"
        )
        import numpy
        import torch

        versions = (
            f"mmvfd={__version__}\nnumpy={numpy.__version__}\ntorch={torch.__version__}\n"
        )
        (self.out / "versions.txt").write_text(versions, encoding="utf-8")
        checks = []
        for p in sorted(self.out.rglob("*")):
            if p.is_file() and p.name not in SIDECAR_EXCLUDE:
                digest = hashlib.sha256(p.read_bytes()).hexdigest()
                checks.append(f"{digest}  {p.relative_to(self.out)}")
        (self.out / "checksums.txt").write_text("\n".join(checks) + "\n", encoding="utf-8")
        stamp = datetime.now(timezone.utc).isoformat()
        (self.out / "run_sidecar.txt").write_text(f"finished={stamp}\n", encoding="utf-8")
        self._lock.unlink(missing_ok=True)

    def abort(self) -> None:
        self._lock.unlink(missing_ok=True)


def _common(fn):
    fn = click.option("--config", "-c", required=True, help="run config file")(fn)
    fn = click.option("--out", "-o", required=True, help="output directory")(fn)
    fn = click.option("--seed", type=int, default=None, help="override run seed")(fn)
    return fn


@click.group()
@click.version_option(version=__version__)
def main():
    """Multimodal video forgery detection toolkit."""


@main.command()
@_common
@click.option("--workers", type=int, default=1, help="parallel extraction workers")
def extract(config, out, seed, workers):
    """Populate the feature cache for every manifest entry (idempotent)."""
    ctx = RunContext(config, out, seed)
    try:
        cache = ctx.default_cache()
        manifests = [ctx.manifest()]
        if ctx.cfg.eval_manifest:
            manifests.append(load_manifest(ctx.cfg.eval_manifest))
        seen: set[str] = set()
        entries = [
            e for m in manifests for e in m.entries
            if not (e.id in seen or seen.add(e.id))
        ]
        failures: list[tuple[str, str]] = []

        def one(entry):
            if cache.load(entry.id, ctx.cfg.model.t) is not None:
                return "cached"
            features_for_entry(entry, ctx.backend, ctx.cfg.model.t, cache=cache)
            return "ok"

        results = []
        if workers <= 1:
            for entry in entries:
                try:
                    results.append((entry, one(entry)))
                except Exception as exc:
                    results.append((entry, f"FAILED: {exc}"))
        else:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                statuses = pool.map(
                    lambda e: _safe_status(one, e), entries
                )
                results = list(zip(entries, statuses))
        for entry, status in results:
            click.echo(f"[extract] {entry.id} {status}")
            if status.startswith("FAILED"):
                failures.append((entry.id, status))
        summary = [
            f"total={len(entries)}",
            f"succeeded={len(entries) - len(failures)}",
            f"failed={len(failures)}",
        ] + [f"failure.{vid}={msg}" for vid, msg in failures]
        (ctx.out / "extract_summary.txt").write_text("\n".join(summary) + "\n", "utf-8")
        ctx.finalize()
        if failures:
            click.echo(f"[extract] {len(failures)} failure(s); see extract_summary.txt")
            sys.exit(EXIT_PARTIAL)
    except Exception:
        ctx.abort()
        raise


def _safe_status(fn, entry):
    try:
        return fn(entry)
    except Exception as exc:
        return f"FAILED: {exc}"


@main.command(name="train")
@_common
def train_cmd(config, out, seed):
    """Train the fusion network on the manifest's holdout split."""
    ctx = RunContext(config, out, seed)
    try:
        manifest = ctx.manifest()
        train_m, val_m = split_holdout(manifest, ctx.cfg.val_fraction, ctx.cfg.seed)
        save_manifest(train_m, ctx.out / "split_train.tsv")
        save_manifest(val_m, ctx.out / "split_val.tsv")
        checkpoint, history = train(
            train_m, val_m, ctx.backend, ctx.cfg.model, ctx.cfg.train,
            cache=ctx.cache, augment_cfg=ctx.cfg.augment,
        )
        checkpoint.save(ctx.out / "checkpoint.cvfd")
        (ctx.out / "history.tsv").write_text(history.to_text(), encoding="utf-8")
        click.echo(
            f"[train] epochs={len(history.epochs)} best_val_loss={checkpoint.best_val_loss:.6f} "
            f"final_val_acc={history.val_accuracy[-1]:.4f}"
        )
        ctx.finalize()
    except Exception:
        ctx.abort()
        raise


@main.command(name="eval")
@_common
@click.option("--checkpoint", default=None, help="checkpoint path (default <out>/checkpoint.cvfd)")
@click.option("--threshold", type=float, default=0.5, show_default=True)
def eval_cmd(config, out, seed, checkpoint, threshold):
    """Score a manifest and emit per-generator metric tables."""
    ctx = RunContext(config, out, seed)
    try:
        ckpt, ckpt_hash = ctx.load_checkpoint(checkpoint)
        manifest = ctx.eval_manifest()
        model = ckpt.build()
        result = evaluate_manifest(
            model, manifest, ctx.backend, cache=ctx.cache,
            threshold=threshold, checkpoint_hash=ckpt_hash,
        )
        (ctx.out / "eval_scores.txt").write_text(result.to_text(), encoding="utf-8")
        table = per_generator_report(result)
        (ctx.out / "eval_report.tsv").write_text(table.to_text(), encoding="utf-8")
        click.echo(f"[eval] n={len(result.rows)} accuracy={result.accuracy():.4f}")
        ctx.finalize()
    except Exception:
        ctx.abort()
        raise


@main.command(name="cmad")
@_common
@click.option("--checkpoint", default=None)
def cmad_cmd(config, out, seed, checkpoint):
    """Cross-modal attention discrepancy analysis (scores + statistics)."""
    ctx = RunContext(config, out, seed)
    try:
        ckpt, ckpt_hash = ctx.load_checkpoint(checkpoint)
        manifest = ctx.eval_manifest()
        report = analyze(manifest, ckpt, ctx.backend, cache=ctx.cache, checkpoint_hash=ckpt_hash)
        (ctx.out / "cmad_report.txt").write_text(report.to_text(), encoding="utf-8")
        (ctx.out / "cmad_scores.tsv").write_text(report.scores_text(), encoding="utf-8")
        if report.available:
            click.echo(
                f"[cmad] real_mean={report.real_mean:.4f} fake_mean={report.fake_mean:.4f} "
                f"t={report.t:.2f} p={report.p_value:.3g} d={report.cohens_d:.3f}"
            )
        else:
            click.echo("[cmad] statistics unavailable (single-class manifest)")
        ctx.finalize()
    except Exception:
        ctx.abort()
        raise


@main.command(name="robust")
@_common
@click.option("--checkpoint", default=None)
@click.option("--kinds", default="", help="comma-separated perturbation kinds (default: full grid)")
def robust_cmd(config, out, seed, checkpoint, kinds):
    """Perturbation robustness sweep over the paper-parity grid."""
    ctx = RunContext(config, out, seed)
    try:
        ckpt, ckpt_hash = ctx.load_checkpoint(checkpoint)
        manifest = ctx.eval_manifest()
        specs = default_perturbation_grid(rng_seed=ctx.cfg.seed)
        if kinds:
            wanted = {k.strip() for k in kinds.split(",")}
            specs = [s for s in specs if s.kind in wanted]
        report = robustness_sweep(
            ckpt, manifest, specs, ctx.backend,
            encoder=ctx.cfg.encoder_bin, checkpoint_hash=ckpt_hash,
        )
        (ctx.out / "robustness_report.tsv").write_text(report.to_text(), encoding="utf-8")
        unavailable = sorted({r["kind"] for r in report.rows if not r["available"]})
        click.echo(f"[robust] rows={len(report.rows)} unavailable_kinds={','.join(unavailable) or 'none'}")
        ctx.finalize()
    except Exception:
        ctx.abort()
        raise


@main.command(name="attack")
@_common
@click.option("--checkpoint", default=None)
@click.option("--eps", multiple=True, type=float, help="epsilon values (default 2/255 4/255 8/255)")
@click.option("--kind", multiple=True, type=click.Choice(["fgsm", "pgd"]))
@click.option(
    "--surface", multiple=True, type=click.Choice(["appearance_only", "full_model"])
)
def attack_cmd(config, out, seed, checkpoint, eps, kind, surface):
    """FGSM / PGD-20 adversarial accuracy sweep."""
    ctx = RunContext(config, out, seed)
    try:
        ckpt, ckpt_hash = ctx.load_checkpoint(checkpoint)
        manifest = ctx.eval_manifest()
        report = attack_sweep(
            ckpt, manifest, ctx.backend,
            epsilons=tuple(eps) or DEFAULT_EPSILONS,
            kinds=tuple(kind) or ("fgsm", "pgd"),
            surfaces=tuple(surface) or ("appearance_only", "full_model"),
            checkpoint_hash=ckpt_hash,
        )
        (ctx.out / "attack_report.tsv").write_text(report.to_text(), encoding="utf-8")
        click.echo(f"[attack] rows={len(report.rows)}")
        ctx.finalize()
    except Exception:
        ctx.abort()
        raise


@main.command(name="report")
@_common
@click.option("--run", default=None, help="run directory to render (default: --out)")
def report_cmd(config, out, seed, run):
    """Render figures and plot-data files for a finished run directory."""
    ctx = RunContext(config, out, seed)
    try:
        run_dir = Path(run) if run else ctx.out
        emitted: list[Path] = []
        history_path = run_dir / "history.tsv"
        if history_path.exists():
            history = TrainHistory.from_text(history_path.read_text(encoding="utf-8"))
            emitted += reporting.emit_training_curves(history, ctx.out / "figures")
        cmad_path = run_dir / "cmad_report.txt"
        if cmad_path.exists():
            report = CmadReport.from_text(cmad_path.read_text(encoding="utf-8"))
            emitted += reporting.emit_cmad_plot(report, ctx.out / "figures")
        robust_path = run_dir / "robustness_report.tsv"
        if robust_path.exists():
            report = RobustnessReport.from_text(robust_path.read_text(encoding="utf-8"))
            emitted += reporting.emit_robustness_chart(report, ctx.out / "figures")
        for p in emitted:
            click.echo(f"[report] wrote {p}")
        if not emitted:
            click.echo("[report] nothing to render (no history/cmad/robustness artifacts)")
        ctx.finalize()
    except Exception:
        ctx.abort()
        raise


if __name__ == "__main__":
    main()
