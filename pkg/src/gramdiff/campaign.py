"""Campaign orchestration: run lifecycle for rs / sodga / modga.

A campaign streams every generated program through the differential-test
pipeline.  Programs are written as ``<run-dir>/<counter>.src`` with a JSON
lines metadata sidecar; every differential test appends one record to the
campaign log; defects are deduplicated into a registry with reproducers
copied under ``defects/``.  Compile jobs run in a bounded worker pool but
results are always processed in submission order, so defect discovery
order is reproducible for a fixed configuration.
"""

from __future__ import annotations

import hashlib
import json
import os
import statistics
import sys
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from gramdiff import __version__
from gramdiff.difftest import (
    CampaignConfigError,
    CompilerSpec,
    DefectRegistry,
    DiffResult,
    SnapshotWriter,
    bugs_over_time_auc,
    classify,
    compile_one,
)
from gramdiff.evolution import GAConfig, RunHooks, run_modga, run_sodga
from gramdiff.generator import SamplerConfig, run_random_search
from gramdiff.grammar import load_grammar
from gramdiff.ir import Block, feature_vector, render
from gramdiff.profiles import shipped_grammar_text, shipped_seed_text
from gramdiff.semantics import extract_context

LAYOUT_VERSION = 1

ALGORITHMS = ("rs", "sodga", "modga")


def resolve_compiler(label: str, spec: str) -> CompilerSpec:
    """Expand the ``refc-ok`` / ``refc-bug:<profile>`` shorthands.

    Anything containing ``{input}`` is taken as a raw command template.
    """
    if spec == "refc-ok":
        template = f'"{sys.executable}" -m gramdiff.refc {{input}} --profile none'
        return CompilerSpec(label, template)
    if spec.startswith("refc-bug"):
        _, _, profile = spec.partition(":")
        template = f'"{sys.executable}" -m gramdiff.refc {{input}} --profile {profile or "all"}'
        return CompilerSpec(label, template)
    if "{input}" not in spec:
        raise CampaignConfigError(
            f"compiler {label!r}: expected refc-ok, refc-bug:<profile>, or a template with {{input}}"
        )
    return CompilerSpec(label, spec)


@dataclass
class CampaignConfig:
    algorithm: str = "rs"
    budget_seconds: Optional[float] = None
    max_programs: Optional[int] = None
    max_generations: Optional[int] = None
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    ga: GAConfig = field(default_factory=GAConfig)
    compiler_a: str = "refc-ok"
    compiler_b: str = "refc-bug:all"
    compile_timeout: float = 60.0
    memory_cap_bytes: int = 2 * 1024 * 1024 * 1024
    snapshot_interval: float = 180.0
    out_dir: Path = Path("runs")
    run_id: Optional[str] = None
    workers: int = 0  # 0 = CPU count

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise CampaignConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.budget_seconds is None and self.max_programs is None and self.max_generations is None:
            raise CampaignConfigError("campaign needs a budget (seconds, programs, or generations)")
        if self.workers <= 0:
            self.workers = os.cpu_count() or 1

    def compiler_specs(self) -> tuple[CompilerSpec, CompilerSpec]:
        a = resolve_compiler("A", self.compiler_a)
        b = resolve_compiler("B", self.compiler_b)
        a = CompilerSpec(a.label, a.command_template, self.compile_timeout, self.memory_cap_bytes, a.oom_patterns)
        b = CompilerSpec(b.label, b.command_template, self.compile_timeout, self.memory_cap_bytes, b.oom_patterns)
        return a, b

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "budget_seconds": self.budget_seconds,
            "max_programs": self.max_programs,
            "max_generations": self.max_generations,
            "sampler": {
                "simplicity_bias": self.sampler.simplicity_bias,
                "max_expr_depth": self.sampler.max_expr_depth,
                "rng_seed": self.sampler.rng_seed,
                "fragment_budget": self.sampler.fragment_budget,
            },
            "ga": {
                "population_size": self.ga.population_size,
                "tournament_size": self.ga.tournament_size,
                "crossover_rate": self.ga.crossover_rate,
                "mutation_rate": self.ga.mutation_rate,
                "distance": self.ga.distance,
            },
            "compiler_a": self.compiler_a,
            "compiler_b": self.compiler_b,
            "compile_timeout": self.compile_timeout,
            "memory_cap_bytes": self.memory_cap_bytes,
            "snapshot_interval": self.snapshot_interval,
            "workers": self.workers,
        }


def config_from_dict(data: dict) -> CampaignConfig:
    sampler_data = data.get("sampler", {})
    ga_data = data.get("ga", {})
    known_sampler = {"simplicity_bias", "max_expr_depth", "rng_seed", "fragment_budget",
                     "hook_retries", "max_fun_nesting"}
    known_ga = {"population_size", "tournament_size", "crossover_rate", "mutation_rate",
                "distance", "mate_retries", "elite_carry"}
    sampler = SamplerConfig(**{k: v for k, v in sampler_data.items() if k in known_sampler})
    ga = GAConfig(**{k: v for k, v in ga_data.items() if k in known_ga})
    kwargs = {
        key: data[key]
        for key in (
            "algorithm", "budget_seconds", "max_programs", "max_generations",
            "compiler_a", "compiler_b", "compile_timeout", "memory_cap_bytes",
            "snapshot_interval", "run_id", "workers",
        )
        if key in data
    }
    if "out_dir" in data:
        kwargs["out_dir"] = Path(data["out_dir"])
    return CampaignConfig(sampler=sampler, ga=ga, **kwargs)


def load_config_file(path: str) -> CampaignConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
        data = json.loads(text)
    except OSError as exc:
        raise CampaignConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CampaignConfigError(f"config parse error in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise CampaignConfigError("config document must be a JSON object")
    return config_from_dict(data)


@dataclass
class CampaignSummary:
    run_dir: Path
    algorithm: str
    programs: int
    sizes: list[int]
    registry: DefectRegistry
    auc: float
    elapsed: float
    horizon: float

    def unique_defects(self) -> int:
        return len(self.registry.records)


class _Pipeline:
    """Bounded compile pipeline with submission-order result processing."""

    def __init__(
        self,
        run_dir: Path,
        spec_a: CompilerSpec,
        spec_b: CompilerSpec,
        workers: int,
        registry: DefectRegistry,
        clock,
        started: float,
        sampler_cfg: SamplerConfig,
    ):
        self.run_dir = run_dir
        self.spec_a = spec_a
        self.spec_b = spec_b
        self.registry = registry
        self.clock = clock
        self.started = started
        self.sampler_cfg = sampler_cfg
        self.executor = ThreadPoolExecutor(max_workers=max(1, workers))
        self.pending: deque = deque()
        self.max_inflight = max(2, workers * 4)
        self.counter = 0
        self.sizes: list[int] = []
        self.meta_log = open(run_dir / "programs.jsonl", "w", encoding="utf-8")
        self.campaign_log = open(run_dir / "campaign.jsonl", "w", encoding="utf-8")

    def emit(self, origin_index: int, block: Block) -> None:
        text = render(block)
        vector = feature_vector(block)
        index = self.counter
        self.counter += 1
        path = self.run_dir / f"{index:06d}.src"
        path.write_text(text, encoding="utf-8")
        self.sizes.append(len(text))
        self.meta_log.write(
            json.dumps(
                {
                    "program": path.name,
                    "index": index,
                    "origin_index": origin_index,
                    "rng_seed": self.sampler_cfg.rng_seed,
                    "simplicity_bias": self.sampler_cfg.simplicity_bias,
                    "size": len(text),
                    "vector": list(vector),
                    "t": self.clock() - self.started,
                }
            )
            + "\n"
        )
        fut_a = self.executor.submit(compile_one, self.spec_a, str(path))
        fut_b = self.executor.submit(compile_one, self.spec_b, str(path))
        self.pending.append((index, path, fut_a, fut_b))
        self.drain(self.max_inflight)

    def drain(self, down_to: int) -> None:
        while len(self.pending) > down_to:
            index, path, fut_a, fut_b = self.pending.popleft()
            outcome_a = fut_a.result()
            outcome_b = fut_b.result()
            result = DiffResult(classify(outcome_a.verdict, outcome_b.verdict), outcome_a, outcome_b)
            elapsed = self.clock() - self.started
            self.registry.record(result, str(path), elapsed)
            self.campaign_log.write(
                json.dumps(
                    {
                        "program": path.name,
                        "index": index,
                        "verdict_a": outcome_a.verdict,
                        "verdict_b": outcome_b.verdict,
                        "exit_a": outcome_a.exit_code,
                        "exit_b": outcome_b.exit_code,
                        "classification": result.classification,
                        "t": elapsed,
                    }
                )
                + "\n"
            )

    def close(self) -> None:
        self.drain(0)
        self.executor.shutdown(wait=True)
        self.meta_log.close()
        self.campaign_log.close()


def run_campaign(config: CampaignConfig, clock=time.monotonic) -> CampaignSummary:
    """Run one fuzzing campaign; returns the summary after writing all files."""
    grammar = load_grammar(shipped_grammar_text())
    root_ctx = extract_context(shipped_seed_text())
    spec_a, spec_b = config.compiler_specs()

    run_id = config.run_id or f"{config.algorithm}-seed{config.sampler.rng_seed}-{int(time.time())}"
    run_dir = Path(config.out_dir) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "snapshots").mkdir(exist_ok=True)

    config_echo = config.to_dict()
    manifest = {
        "layout_version": LAYOUT_VERSION,
        "tool_version": __version__,
        "run_id": run_id,
        "config": config_echo,
        "config_hash": hashlib.sha256(json.dumps(config_echo, sort_keys=True).encode()).hexdigest(),
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")

    started = clock()
    registry = DefectRegistry(defects_dir=run_dir / "defects")
    pipeline = _Pipeline(
        run_dir, spec_a, spec_b, config.workers, registry, clock, started, config.sampler
    )

    ga_state: dict = {}

    def snapshot_sink(number: int, stamp: float, state: dict) -> None:
        payload = {
            "snapshot": number,
            "t": stamp,
            "programs": pipeline.counter,
            "defects": registry.by_category(),
            "unique_defects": len(registry.records),
        }
        payload.update(state)
        path = run_dir / "snapshots" / f"{number:04d}.jsonl"
        path.write_text(json.dumps(payload) + "\n", encoding="utf-8")

    writer = SnapshotWriter(config.snapshot_interval, snapshot_sink, clock)

    def emit(origin_index: int, block: Block) -> None:
        pipeline.emit(origin_index, block)
        writer.poll(lambda: dict(ga_state))

    offered_log = None
    try:
        if config.algorithm == "rs":
            run_random_search(
                grammar,
                root_ctx,
                config.sampler,
                config.budget_seconds,
                max_programs=config.max_programs,
                on_block=emit,
                clock=clock,
            )
        else:
            def on_snapshot(stamp: float, state: dict) -> None:
                ga_state.clear()
                ga_state.update(state)

            hooks = RunHooks(
                on_block=emit,
                on_snapshot=on_snapshot,
                snapshot_interval=config.snapshot_interval,
            )
            if config.algorithm == "sodga":
                best = run_sodga(
                    grammar, root_ctx, config.sampler, config.ga,
                    config.budget_seconds, config.max_generations, hooks, clock,
                )
                _dump_population(run_dir / "population.jsonl", best)
            else:
                offered_log = open(run_dir / "offered.jsonl", "w", encoding="utf-8")

                def on_offer(generation: int, vectors) -> None:
                    offered_log.write(
                        json.dumps({"generation": generation, "vectors": [list(v) for v in vectors]}) + "\n"
                    )

                hooks.on_archive_offer = on_offer
                archive = run_modga(
                    grammar, root_ctx, config.sampler, config.ga,
                    config.budget_seconds, config.max_generations, hooks, clock,
                )
                _dump_archive(run_dir / "archive.jsonl", archive)
    finally:
        pipeline.close()
        if offered_log is not None:
            offered_log.close()

    elapsed = clock() - started
    # The drain tail can discover defects slightly past the time budget, so
    # the AUC horizon must cover every recorded timestamp.
    if config.budget_seconds:
        horizon = max(config.budget_seconds, elapsed)
    else:
        horizon = max(elapsed, 1e-9)
    auc = bugs_over_time_auc(registry.timeline(), horizon)

    (run_dir / "defects.json").write_text(
        json.dumps(registry.export(), indent=2) + "\n", encoding="utf-8"
    )
    sizes = pipeline.sizes
    summary = {
        "algorithm": config.algorithm,
        "programs": pipeline.counter,
        "mean_size": statistics.mean(sizes) if sizes else 0.0,
        "median_size": statistics.median(sizes) if sizes else 0.0,
        "unique_defects": len(registry.records),
        "defects_by_category": registry.by_category(),
        "auc": auc,
        "elapsed": elapsed,
        "horizon": horizon,
    }
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return CampaignSummary(
        run_dir, config.algorithm, pipeline.counter, sizes, registry, auc, elapsed, horizon
    )


def _dump_population(path: Path, population) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for block in population.members:
            vector = feature_vector(block)
            handle.write(json.dumps({"vector": list(vector), "size": vector[0]}) + "\n")


def _dump_archive(path: Path, archive) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for _, vector in archive.entries:
            handle.write(json.dumps({"vector": list(vector), "size": vector[0]}) + "\n")


# ---------------------------------------------------------------------------
# Reports


class ReportError(RuntimeError):
    pass


def generate_report(run_dir: Path, out_subdir: str = "report") -> Path:
    """Write CSV tables and a text summary for a finished run.

    Refuses directories whose manifest is missing or whose layout version
    does not match this tool.
    """
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.is_file():
        raise ReportError(f"{run_dir} is not a campaign run directory (no manifest.json)")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("layout_version") != LAYOUT_VERSION:
        raise ReportError(
            f"layout version mismatch: run has {manifest.get('layout_version')}, tool expects {LAYOUT_VERSION}"
        )
    summary = json.loads((run_dir / "summary.json").read_text(encoding="utf-8"))
    defects = json.loads((run_dir / "defects.json").read_text(encoding="utf-8"))

    report_dir = run_dir / out_subdir
    report_dir.mkdir(exist_ok=True)

    sizes = []
    with open(run_dir / "programs.jsonl", encoding="utf-8") as handle:
        for line in handle:
            record = json.loads(line)
            sizes.append((record["index"], record["size"]))
    with open(report_dir / "sizes.csv", "w", encoding="utf-8") as handle:
        handle.write("index,size\n")
        for index, size in sizes:
            handle.write(f"{index},{size}\n")

    by_category: dict[str, int] = {}
    for record in defects["records"]:
        by_category[record["category"]] = by_category.get(record["category"], 0) + 1
    with open(report_dir / "defects.csv", "w", encoding="utf-8") as handle:
        handle.write("category,signature,count,discovered_at,reproducer\n")
        for record in defects["records"]:
            signature = record["signature"].replace('"', "'")
            handle.write(
                f"{record['category']},\"{signature}\",{record['count']},"
                f"{record['discovered_at']:.3f},{record['reproducer']}\n"
            )

    timeline = [(0.0, 0)] + [
        (record["discovered_at"], index)
        for index, record in enumerate(
            sorted(defects["records"], key=lambda r: r["discovered_at"]), start=1
        )
    ]
    with open(report_dir / "bugs_over_time.csv", "w", encoding="utf-8") as handle:
        handle.write("t,cumulative_unique_defects\n")
        for t, count in timeline:
            handle.write(f"{t:.3f},{count}\n")

    auc = bugs_over_time_auc(timeline, summary["horizon"])
    lines = [
        f"algorithm: {summary['algorithm']}",
        f"programs: {summary['programs']}",
        f"mean size: {summary['mean_size']:.1f}",
        f"median size: {summary['median_size']:.1f}",
        f"unique defects: {summary['unique_defects']}",
        f"bugs-over-time AUC: {auc:.4f}",
        "defects by category:",
    ]
    for category in sorted(by_category):
        lines.append(f"  {category}: {by_category[category]}")
    (report_dir / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return report_dir
