"""
Append-only result store: configs/, runs/, summaries/, certificates/, reports/.

Every CSV row carries the config digest. Floats are written with 17
significant digits so stored values round-trip exactly.
"""

import csv
import hashlib
import json
import logging
import threading
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

from pydantic import BaseModel

from quasarbench.config import get_result_dir
from quasarbench.models import (
    CertificationReport,
    ExperimentConfig,
    ProblemSpec,
    RateFit,
    RunManifest,
    RunRecord,
    SummaryRow,
    SweepSummary,
)

logger = logging.getLogger(__name__)

RUN_COLUMNS = ["config_digest", "seed", "t", "f_gap", "grad_norm", "dist_sq"]
SUMMARY_COLUMNS = ["config_digest", "T", "statistic", "mean", "ci95", "seeds", "bound", "pass"]
COMPARISON_COLUMNS = ["T", "qc_bound", "constant_step_bound"]
SUBDIRS = ("configs", "runs", "summaries", "certificates", "reports")

# Descriptive fields that never affect numerics
_DIGEST_EXCLUDE = {"name", "claim"}


def format_value(value: Any) -> str:
    """CSV cell text: floats with 17 significant digits, None as empty."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def _canonical(payload: Dict[str, Any]) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def config_digest(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON of every numerics-affecting field."""
    payload = config.model_dump(mode="json", exclude=_DIGEST_EXCLUDE)
    return hashlib.sha256(_canonical(payload).encode()).hexdigest()


def problem_digest(spec: ProblemSpec) -> str:
    """Digest of the objective alone (no start point or certificate); keys stored certificates."""
    payload = spec.model_dump(mode="json", exclude={"certificate", "start"})
    return hashlib.sha256(_canonical(payload).encode()).hexdigest()


def run_rows(record: RunRecord) -> Iterable[List[str]]:
    """Run CSV rows of one record, one per stored iterate."""
    for t, gap, grad, dist in zip(record.t, record.f_gap, record.grad_norm, record.dist_sq):
        yield [format_value(v) for v in (record.config_digest, record.seed, t, gap, grad, dist)]


def summary_rows(summary: SweepSummary) -> Iterable[List[str]]:
    for row in summary.rows:
        yield [
            format_value(v)
            for v in (row.config_digest, row.T, row.statistic, row.mean, row.ci95, row.seeds, row.bound, row.passed)
        ]


class CsvAppender:
    """Serialized appender for one CSV file; writes the header when the file is new."""

    def __init__(self, path: Path, columns: Sequence[str]):
        self.path = path
        self.columns = list(columns)
        self.lock = threading.Lock()

    def reset(self) -> None:
        with self.lock:
            self.path.unlink(missing_ok=True)

    def append(self, rows: Iterable[Sequence[str]]) -> int:
        with self.lock:
            new = not self.path.exists()
            count = 0
            with self.path.open("a", newline="", encoding="utf-8") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                if new:
                    writer.writerow(self.columns)
                for row in rows:
                    writer.writerow(row)
                    count += 1
            return count


class ResultStore:
    """Directory-backed store rooted at QB_RESULT_DIR (./results by default)."""

    def __init__(self, root: Optional[Path] = None):
        self.root = Path(root) if root is not None else get_result_dir()
        for name in SUBDIRS:
            (self.root / name).mkdir(parents=True, exist_ok=True)

    def path(self, kind: str, name: str) -> Path:
        return self.root / kind / name

    # Configs

    def save_config(self, digest: str, config: ExperimentConfig) -> Path:
        target = self.path("configs", f"{digest}.json")
        target.write_text(config.model_dump_json(indent=2), encoding="utf-8")
        return target

    def list_configs(self) -> Dict[str, ExperimentConfig]:
        """Stored configs by digest, in digest order."""
        configs = {}
        for path in sorted((self.root / "configs").glob("*.json")):
            configs[path.stem] = ExperimentConfig.model_validate_json(path.read_text(encoding="utf-8"))
        return configs

    # Runs

    def has_runs(self, digest: str) -> bool:
        """True once a run set has finished; partial files left by an aborted run do not count."""
        return self.path("runs", f"{digest}.done.json").exists()

    def mark_runs_complete(self, digest: str, runs: int, failures: int = 0) -> RunManifest:
        manifest = RunManifest(config_digest=digest, runs=runs, failures=failures)
        self.path("runs", f"{digest}.done.json").write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
        return manifest

    def load_manifest(self, digest: str) -> Optional[RunManifest]:
        target = self.path("runs", f"{digest}.done.json")
        if not target.exists():
            return None
        return RunManifest.model_validate_json(target.read_text(encoding="utf-8"))

    def run_appender(self, digest: str) -> CsvAppender:
        return CsvAppender(self.path("runs", f"{digest}.csv"), RUN_COLUMNS)

    def clear_runs(self, digest: str) -> None:
        for suffix in (".done.json", ".csv", ".jsonl"):
            self.path("runs", f"{digest}{suffix}").unlink(missing_ok=True)

    def append_record(self, appender: CsvAppender, record: RunRecord) -> None:
        """Series rows to the run CSV, aggregates to the JSON-lines sidecar."""
        appender.append(run_rows(record))
        sidecar = self.path("runs", f"{record.config_digest}.jsonl")
        aggregates = record.model_dump(mode="json", exclude={"t", "f_gap", "grad_norm", "dist_sq"})
        with appender.lock, sidecar.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(aggregates, sort_keys=True) + "\n")

    def load_records(self, digest: str) -> List[RunRecord]:
        """Per-run aggregates (series omitted), sorted by (T, run_index)."""
        sidecar = self.path("runs", f"{digest}.jsonl")
        if not sidecar.exists():
            return []
        records = [
            RunRecord.model_validate_json(line)
            for line in sidecar.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        return sorted(records, key=lambda r: (r.T, r.run_index))

    # Summaries

    def has_summary(self, digest: str) -> bool:
        return self.path("summaries", f"{digest}.csv").exists()

    def write_summary(self, digest: str, summary: SweepSummary) -> Path:
        appender = CsvAppender(self.path("summaries", f"{digest}.csv"), SUMMARY_COLUMNS)
        appender.reset()
        appender.append(summary_rows(summary))
        logger.info(f"Wrote {len(summary.rows)} summary rows to {appender.path}")
        return appender.path

    def read_summary(self, digest: str) -> SweepSummary:
        path = self.path("summaries", f"{digest}.csv")
        with path.open(newline="", encoding="utf-8") as handle:
            rows = [
                SummaryRow(
                    config_digest=row["config_digest"],
                    T=int(row["T"]),
                    statistic=row["statistic"],
                    mean=float(row["mean"]),
                    ci95=float(row["ci95"]),
                    seeds=int(row["seeds"]),
                    bound=float(row["bound"]) if row["bound"] else None,
                    passed={"true": True, "false": False}.get(row["pass"]),
                )
                for row in csv.DictReader(handle)
            ]
        statistic = rows[0].statistic if rows else "avg-subopt"
        return SweepSummary(statistic=statistic, rows=rows)

    def write_fit(self, digest: str, payload: BaseModel) -> Path:
        target = self.path("summaries", f"{digest}.fit.json")
        target.write_text(payload.model_dump_json(indent=2), encoding="utf-8")
        return target

    def read_fit(self, digest: str) -> Optional[Dict[str, Any]]:
        target = self.path("summaries", f"{digest}.fit.json")
        if not target.exists():
            return None
        return json.loads(target.read_text(encoding="utf-8"))

    # Certificates

    def save_certificate(self, key: str, report: CertificationReport) -> Path:
        target = self.path("certificates", f"{key}.json")
        target.write_text(report.model_dump_json(indent=2), encoding="utf-8")
        return target

    def load_certificate(self, key: str) -> Optional[CertificationReport]:
        target = self.path("certificates", f"{key}.json")
        if not target.exists():
            return None
        return CertificationReport.model_validate_json(target.read_text(encoding="utf-8"))

    # Reports

    def write_comparison(self, digest: str, table: Sequence[Sequence[Any]]) -> Path:
        appender = CsvAppender(self.path("reports", f"{digest}.comparison.csv"), COMPARISON_COLUMNS)
        appender.reset()
        appender.append([format_value(v) for v in row] for row in table)
        return appender.path

    def write_report(self, text: str, name: str = "report.md") -> Path:
        target = self.path("reports", name)
        target.write_text(text, encoding="utf-8")
        return target


def load_fit(payload: Dict[str, Any]) -> Optional[RateFit]:
    """RateFit block of a stored fit document, if any."""
    fit = payload.get("fit") if payload else None
    return RateFit.model_validate(fit) if fit else None
