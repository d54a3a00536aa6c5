"""Differential execution of two compiler commands with resource caps.

Each compiler is described by a command template with an ``{input}``
placeholder.  A compile outcome is classified into one of five verdicts
(pass, reject, crash, timeout, oom); the pair of verdicts maps to exactly
one classification, and defect classifications are deduplicated through
normalized diagnostic signatures.
"""

from __future__ import annotations

import hashlib
import json
import re
import shlex
import shutil
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

try:
    import resource as _resource
except ImportError:  # pragma: no cover - non-POSIX platforms
    _resource = None

VERDICTS = ("pass", "reject", "crash", "timeout", "oom")

DEFECT_CATEGORIES = (
    "divergent-verdict-A-rejects",
    "divergent-verdict-B-rejects",
    "crash-A",
    "crash-B",
    "oom-A",
    "oom-B",
    "oom-both",
)

AGREE_CLASSIFICATIONS = ("agree-pass", "agree-reject")

DEFAULT_TIMEOUT = 60.0
DEFAULT_MEMORY_CAP = 2 * 1024 * 1024 * 1024
DEFAULT_OOM_PATTERNS = ("OutOfMemoryError", "MemoryError", "Cannot allocate memory")

KILL_GRACE_SECONDS = 2.0


class CampaignConfigError(RuntimeError):
    """Configuration problem (missing binary, bad template); not a defect."""


@dataclass(frozen=True)
class CompilerSpec:
    label: str
    command_template: str
    timeout: float = DEFAULT_TIMEOUT
    memory_cap_bytes: int = DEFAULT_MEMORY_CAP
    oom_patterns: tuple[str, ...] = DEFAULT_OOM_PATTERNS

    def __post_init__(self) -> None:
        if self.command_template.count("{input}") != 1:
            raise CampaignConfigError(
                f"compiler {self.label!r}: template must contain exactly one {{input}}"
            )
        if self.timeout <= 0:
            raise CampaignConfigError(f"compiler {self.label!r}: timeout must be positive")

    def command_for(self, input_path: str) -> list[str]:
        return [part.replace("{input}", input_path) for part in shlex.split(self.command_template)]


@dataclass(frozen=True)
class CompileOutcome:
    verdict: str
    exit_code: int
    diagnostics_digest: str
    wall_time: float
    diagnostics: tuple[str, ...] = ()


def _set_memory_cap(cap_bytes: int):
    def apply() -> None:
        _resource.setrlimit(_resource.RLIMIT_AS, (cap_bytes, cap_bytes))

    return apply


def _first_error_line(stderr: str, stdout: str) -> str:
    for stream in (stderr, stdout):
        for line in stream.splitlines():
            line = line.strip()
            if line:
                return line
    return ""


def compile_one(spec: CompilerSpec, program_path: str) -> CompileOutcome:
    """Run one compiler on one program under timeout and memory caps.

    Spawn failures (missing binary, unreadable template) raise
    :class:`CampaignConfigError`; they are campaign misconfigurations, not
    compiler defects.
    """
    command = spec.command_for(program_path)
    preexec = _set_memory_cap(spec.memory_cap_bytes) if _resource is not None else None
    started = time.monotonic()
    try:
        proc = subprocess.Popen(
            command,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            preexec_fn=preexec,
            start_new_session=True,
        )
    except (OSError, ValueError) as exc:
        raise CampaignConfigError(f"cannot spawn compiler {spec.label!r}: {exc}") from exc

    timed_out = False
    try:
        stdout, stderr = proc.communicate(timeout=spec.timeout)
    except subprocess.TimeoutExpired:
        timed_out = True
        proc.kill()
        try:
            stdout, stderr = proc.communicate(timeout=KILL_GRACE_SECONDS)
        except subprocess.TimeoutExpired:  # pragma: no cover - kill must land
            stdout, stderr = "", ""
    wall = time.monotonic() - started

    output = (stderr or "") + "\n" + (stdout or "")
    digest = _first_error_line(stderr or "", stdout or "")
    lines = tuple(line for line in (stderr or "").splitlines() if line.strip())[:10]
    oom_hit = any(pattern in output for pattern in spec.oom_patterns)

    if timed_out:
        verdict = "timeout"
    elif oom_hit:
        verdict = "oom"
    elif proc.returncode == 0:
        verdict = "pass"
    elif proc.returncode > 0 and digest:
        verdict = "reject"
    else:
        verdict = "crash"
    return CompileOutcome(verdict, proc.returncode, digest, wall, lines)


def classify(verdict_a: str, verdict_b: str) -> str:
    """Total mapping from a verdict pair to exactly one classification."""
    if verdict_a not in VERDICTS or verdict_b not in VERDICTS:
        raise ValueError(f"unknown verdicts: {verdict_a!r}, {verdict_b!r}")
    if verdict_a == "oom" and verdict_b == "oom":
        return "oom-both"
    if verdict_a == "oom":
        return "oom-A"
    if verdict_b == "oom":
        return "oom-B"
    if verdict_a in ("crash", "timeout"):
        return "crash-A"
    if verdict_b in ("crash", "timeout"):
        return "crash-B"
    if verdict_a == "pass" and verdict_b == "pass":
        return "agree-pass"
    if verdict_a == "reject" and verdict_b == "reject":
        return "agree-reject"
    if verdict_a == "reject":
        return "divergent-verdict-A-rejects"
    return "divergent-verdict-B-rejects"


def is_defect(classification: str) -> bool:
    return classification in DEFECT_CATEGORIES


@dataclass(frozen=True)
class DiffResult:
    classification: str
    outcome_a: CompileOutcome
    outcome_b: CompileOutcome

    @property
    def defect(self) -> bool:
        return is_defect(self.classification)


def differential_test(program_path: str, spec_a: CompilerSpec, spec_b: CompilerSpec) -> DiffResult:
    outcome_a = compile_one(spec_a, program_path)
    outcome_b = compile_one(spec_b, program_path)
    return DiffResult(classify(outcome_a.verdict, outcome_b.verdict), outcome_a, outcome_b)


# ---------------------------------------------------------------------------
# Defect signatures and registry

_MASK_GENERATED_NAME = re.compile(r"\b[a-z]\d+(?:_\d+)*\b")
_MASK_QUOTED = re.compile(r"'[^']*'|\"[^\"]*\"")
_MASK_NUMBER = re.compile(r"\b\d+(?:\.\d+)?\b")


def normalize_diagnostic(line: str) -> str:
    """Mask identifiers and literals so reworded twins share a signature."""
    masked = _MASK_QUOTED.sub("<lit>", line)
    masked = _MASK_GENERATED_NAME.sub("<id>", masked)
    masked = _MASK_NUMBER.sub("<n>", masked)
    return " ".join(masked.split())


def defect_signature(classification: str, result: DiffResult) -> str:
    """Stable key for deduplication: category plus masked first diagnostics."""
    if not is_defect(classification):
        raise ValueError(f"{classification!r} is not a defect classification")
    parts = [classification]
    if classification.endswith("-A-rejects") or classification in ("crash-A", "oom-A"):
        parts.append(normalize_diagnostic(result.outcome_a.diagnostics_digest))
    elif classification.endswith("-B-rejects") or classification in ("crash-B", "oom-B"):
        parts.append(normalize_diagnostic(result.outcome_b.diagnostics_digest))
    else:  # oom-both
        parts.append(normalize_diagnostic(result.outcome_a.diagnostics_digest))
        parts.append(normalize_diagnostic(result.outcome_b.diagnostics_digest))
    return "|".join(parts)


@dataclass
class DefectRecord:
    category: str
    signature: str
    reproducer_path: str
    discovered_at: float
    count: int = 1


@dataclass
class DefectRegistry:
    """First occurrence per signature is stored; duplicates only count."""

    records: dict[str, DefectRecord] = field(default_factory=dict)
    defects_dir: Optional[Path] = None

    def record(self, result: DiffResult, program_path: str, elapsed: float) -> Optional[DefectRecord]:
        """Returns the new record on first occurrence, None on duplicates."""
        if not result.defect:
            return None
        signature = defect_signature(result.classification, result)
        existing = self.records.get(signature)
        if existing is not None:
            existing.count += 1
            return None
        reproducer = program_path
        if self.defects_dir is not None:
            slug = f"{result.classification}-{hashlib.sha1(signature.encode()).hexdigest()[:10]}"
            target = self.defects_dir / slug
            target.mkdir(parents=True, exist_ok=True)
            reproducer = str(target / Path(program_path).name)
            shutil.copyfile(program_path, reproducer)
            (target / "defect.json").write_text(
                json.dumps(
                    {
                        "category": result.classification,
                        "signature": signature,
                        "discovered_at": elapsed,
                        "diagnostics_a": list(result.outcome_a.diagnostics),
                        "diagnostics_b": list(result.outcome_b.diagnostics),
                    },
                    indent=2,
                )
                + "\n",
                encoding="utf-8",
            )
        record = DefectRecord(result.classification, signature, reproducer, elapsed)
        self.records[signature] = record
        return record

    def by_category(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for record in self.records.values():
            counts[record.category] = counts.get(record.category, 0) + 1
        return counts

    def timeline(self) -> list[tuple[float, int]]:
        """Cumulative unique defects over time, starting at (0, 0)."""
        points = [(0.0, 0)]
        for index, record in enumerate(
            sorted(self.records.values(), key=lambda r: r.discovered_at), start=1
        ):
            points.append((record.discovered_at, index))
        return points

    def export(self) -> dict:
        return {
            "records": [
                {
                    "category": r.category,
                    "signature": r.signature,
                    "reproducer": r.reproducer_path,
                    "discovered_at": r.discovered_at,
                    "count": r.count,
                }
                for r in sorted(self.records.values(), key=lambda r: r.discovered_at)
            ]
        }


# ---------------------------------------------------------------------------
# Campaign metrics


def bugs_over_time_auc(timeline: Iterable[tuple[float, float]], horizon: float) -> float:
    """Normalized step integral of cumulative unique bugs over a horizon.

    ``timeline`` is a non-decreasing sequence of (time, cumulative count);
    the result is the integral of ``bugs(t) / bugs(T)`` over ``t/T`` and is
    0 when no bug was found by the horizon.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    points = list(timeline)
    for (t0, b0), (t1, b1) in zip(points, points[1:]):
        if t1 < t0 or b1 < b0:
            raise ValueError("timeline must be non-decreasing in both coordinates")
    if any(t < 0 or t > horizon for t, _ in points):
        raise ValueError("timeline times must lie within [0, horizon]")

    total = 0.0
    final = 0.0
    previous_t = 0.0
    level = 0.0
    for t, bugs in points:
        total += level * (t - previous_t)
        previous_t = t
        level = bugs
        final = bugs
    total += level * (horizon - previous_t)
    if final == 0:
        return 0.0
    return total / (final * horizon)


class SnapshotWriter:
    """Emits one snapshot per elapsed interval through a sink callable."""

    def __init__(
        self,
        interval_seconds: float,
        sink: Callable[[int, float, dict], None],
        clock: Callable[[], float] = time.monotonic,
    ):
        if interval_seconds <= 0:
            raise ValueError("interval must be positive")
        self.interval = interval_seconds
        self.sink = sink
        self.clock = clock
        self.started = clock()
        self.emitted = 0

    def poll(self, state_fn: Callable[[], dict]) -> int:
        """Emit snapshots for every interval boundary crossed so far."""
        elapsed = self.clock() - self.started
        due = int(elapsed // self.interval)
        emitted_now = 0
        while self.emitted < due:
            self.emitted += 1
            self.sink(self.emitted, self.emitted * self.interval, state_fn())
            emitted_now += 1
        return emitted_now
