"""Run configuration, dataset ingestion, result store and the pipeline commands.

A run lives in ``<output_dir>/<run_id>/`` where the run id is a hash of the
configuration snapshot, so the same configuration always lands in the same
directory and different configurations never share one. Structured records
(``records/*.jsonl``) are the source of truth; tables and feedback documents
are rendered from them.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import yaml

from . import agreement as agr
from .benchmark import (
    METHOD_LABELS,
    MaeReport,
    compare_methods,
    compare_styles,
    mae,
    read_human_scores,
    render_style_table,
    worst_case_curve,
)
from .ensemble import AggregatedGrade, EnsembleConfig, Method, aggregate_scores, run_slot
from .errors import (
    ConfigurationError,
    EnsembleFailure,
    ProbabilityExtractionError,
    SummarizationFailure,
    TransientError,
)
from .feedback import (
    GEvalConfig,
    GEvalResult,
    ProbabilitySource,
    SummaryComment,
    geval_score,
    review_queue,
    summarize_comments,
)
from .gateway import GenerationParams, ModelEndpoint, ModelGateway
from .templates import (
    ProblemSpec,
    PromptStyle,
    Submission,
    load_problem,
    load_submission,
    render_prompt,
    validate_rubric,
)
from .utils import atomic_write_text, canonical_json, sha256_hex

logger = logging.getLogger(__name__)


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    endpoints: tuple[ModelEndpoint, ...]
    dataset_root: Path
    styles: tuple[PromptStyle, ...] = (PromptStyle.ZERO_SHOT, PromptStyle.ZERO_SHOT_COT)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    generation: GenerationParams = field(default_factory=GenerationParams)
    geval: GEvalConfig = field(default_factory=GEvalConfig)
    parallelism: int = 4
    run_seed: int = 0
    output_dir: Path = Path("runs")
    cache_dir: Optional[Path] = None
    repeats: int = 20
    agreement_style: Optional[PromptStyle] = None
    curve_sizes: Optional[tuple[int, ...]] = None
    curve_trials: int = 50

    def __post_init__(self):
        if not self.endpoints:
            raise ConfigurationError("at least one endpoint is required")
        names = [e.name for e in self.endpoints]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"endpoint names must be unique: {names}")
        if self.parallelism < 1:
            raise ConfigurationError("parallelism must be >= 1")
        if not self.styles:
            raise ConfigurationError("at least one prompt style is required")
        if not Path(self.dataset_root).is_dir():
            raise ConfigurationError(f"dataset_root {self.dataset_root} does not exist")
        if self.geval.evaluator is not None and self.geval.evaluator not in names:
            raise ConfigurationError(f"G-Eval evaluator {self.geval.evaluator!r} is not a configured endpoint")

    @classmethod
    def from_dict(cls, data: dict, base: Path = Path(".")) -> "RunConfig":
        def path(value, default=None):
            if value is None:
                return default
            p = Path(value)
            return p if p.is_absolute() else (base / p)

        ens = dict(data.get("ensemble") or {})
        if "method" in ens:
            ens["method"] = Method(ens["method"])
        geval = dict(data.get("geval") or {})
        if "score_set" in geval:
            geval["score_set"] = tuple(geval["score_set"])
        agreement = data.get("agreement") or {}
        bench = data.get("benchmark") or {}
        style = agreement.get("style")
        sizes = bench.get("sizes")
        return cls(
            endpoints=tuple(ModelEndpoint.from_dict(e) for e in data.get("endpoints") or []),
            dataset_root=path(data.get("dataset_root"), base),
            styles=tuple(PromptStyle(s) for s in data.get("styles", [s.value for s in PromptStyle])),
            ensemble=EnsembleConfig(**ens),
            generation=GenerationParams(**(data.get("generation") or {})),
            geval=GEvalConfig(**geval),
            parallelism=int(data.get("parallelism", 4)),
            run_seed=int(data.get("run_seed", 0)),
            output_dir=path(data.get("output_dir"), base / "runs"),
            cache_dir=path(data.get("cache_dir")),
            repeats=int(agreement.get("repeats", 20)),
            agreement_style=PromptStyle(style) if style else None,
            curve_sizes=tuple(sizes) if sizes else None,
            curve_trials=int(bench.get("trials", 50)),
        )

    @classmethod
    def from_yaml(cls, path: Path | str) -> "RunConfig":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        return cls.from_dict(data, base=path.parent)

    def snapshot(self) -> dict:
        """Everything that can change results. Paths and parallelism are excluded."""
        return {
            "endpoints": [
                {"name": e.name, "base_url": e.base_url, "model_id": e.model_id,
                 "supports_logprobs": e.supports_logprobs}
                for e in self.endpoints
            ],
            "styles": [s.value for s in self.styles],
            "ensemble": {"size": self.ensemble.size, "method": self.ensemble.method.value,
                         "min_valid": self.ensemble.min_valid, "max_retries": self.ensemble.max_retries},
            "generation": {"temperature": self.generation.temperature, "max_tokens": self.generation.max_tokens,
                           "top_p": self.generation.top_p, "request_seed": self.generation.request_seed},
            "geval": {"score_set": list(self.geval.score_set), "evaluator": self.evaluator.name,
                      "probability_source": self.geval.probability_source.value,
                      "sample_count": self.geval.sample_count, "review_threshold": self.geval.review_threshold},
            "run_seed": self.run_seed,
            "repeats": self.repeats,
            "agreement_style": self.intra_style.value,
            "curve_sizes": list(self.sizes_for(self.ensemble.size)),
            "curve_trials": self.curve_trials,
            "dataset": self.dataset_root.name,
        }

    @property
    def run_id(self) -> str:
        return sha256_hex(canonical_json(self.snapshot()))[:12]

    @property
    def evaluator(self) -> ModelEndpoint:
        if self.geval.evaluator:
            return self.endpoint(self.geval.evaluator)
        with_logprobs = [e for e in self.endpoints if e.supports_logprobs]
        return with_logprobs[0] if with_logprobs else self.endpoints[0]

    @property
    def intra_style(self) -> PromptStyle:
        if self.agreement_style is not None:
            return self.agreement_style
        return PromptStyle.ZERO_SHOT_COT if PromptStyle.ZERO_SHOT_COT in self.styles else self.styles[0]

    def endpoint(self, name: str) -> ModelEndpoint:
        for e in self.endpoints:
            if e.name == name:
                return e
        raise ConfigurationError(f"no endpoint named {name!r}")

    def sizes_for(self, q_total: int) -> tuple[int, ...]:
        sizes = self.curve_sizes or tuple(range(1, self.ensemble.size + 1))
        return tuple(s for s in sizes if s <= q_total)


# -- dataset -----------------------------------------------------------------

@dataclass(frozen=True)
class DatasetItem:
    problem: ProblemSpec
    submission: Submission

    @property
    def submission_id(self) -> str:
        return f"{self.problem.id}/{self.submission.student_id}"


def load_dataset(root: Path) -> list[DatasetItem]:
    """Read ``<root>/problems/<pid>/...``; any problem aborts the run here."""
    problems_dir = Path(root) / "problems"
    if not problems_dir.is_dir():
        raise ConfigurationError(f"dataset {root}: missing problems/ directory")
    items = []
    for pdir in sorted(p for p in problems_dir.iterdir() if p.is_dir()):
        problem = load_problem(pdir)
        check = validate_rubric(problem.rubric)
        if not check.ok:
            raise ConfigurationError(f"{pdir}: invalid rubric: {'; '.join(check.violations)}")
        for w in check.warnings:
            logger.warning("%s: %s", pdir.name, w)
        subs_dir = pdir / "submissions"
        subs = sorted(p for p in subs_dir.iterdir() if p.is_dir()) if subs_dir.is_dir() else []
        if not subs:
            raise ConfigurationError(f"{pdir}: no submissions")
        items.extend(DatasetItem(problem, load_submission(s)) for s in subs)
    if not items:
        raise ConfigurationError(f"dataset {root}: no problems found")
    return items


# -- result store --------------------------------------------------------------

class RunStore:
    def __init__(self, output_dir: Path, run_id: str):
        self.root = Path(output_dir) / run_id
        self.run_id = run_id

    def path(self, *parts: str) -> Path:
        return self.root.joinpath(*parts)

    def write_text(self, rel: str, text: str) -> Path:
        p = self.path(rel)
        atomic_write_text(p, text)
        return p

    def write_records(self, name: str, records: Iterable[dict]) -> Path:
        text = "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in records)
        return self.write_text(f"records/{name}.jsonl", text)

    def read_records(self, name: str, stage_hint: str) -> list[dict]:
        p = self.path("records", f"{name}.jsonl")
        if not p.exists():
            raise ConfigurationError(f"run {self.run_id} has no {name} records; run `{stage_hint}` first")
        with open(p, encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]

    def manifest(self) -> dict:
        p = self.path("manifest.json")
        if p.exists():
            with open(p, encoding="utf-8") as fh:
                return json.load(fh)
        return {}

    def mark_stage(self, config: RunConfig, stage: str, info: dict, digests: Iterable[str]) -> None:
        m = self.manifest() or {"run_id": self.run_id, "config": config.snapshot(), "stages": {}, "digests": []}
        m["stages"][stage] = {"complete": True, **info}
        m["digests"] = sorted(set(m["digests"]) | set(digests))
        self.write_text("manifest.json", json.dumps(m, sort_keys=True, indent=2, ensure_ascii=False) + "\n")


@dataclass
class StageResult:
    name: str
    outputs: list[Path] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    text: str = ""


def _parallel_map(fn: Callable, items: Sequence, parallelism: int) -> list:
    if parallelism <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, items))


def _feedback_path(model: str, style: str, submission_id: str) -> str:
    return f"feedback/{model}/{style}/{submission_id}.md"


def render_feedback_document(record: dict, summary: SummaryComment) -> str:
    head = (
        f"# Feedback for {record['submission_id']}\n\n"
        f"Model: {record['model']}  \nPrompt style: {record['style']}  \n"
        f"Final score: {record['final_score']} ({record['method']} of {record['valid_count']} samples)\n\n"
    )
    return head + summary.render()


# -- commands ------------------------------------------------------------------

def cmd_grade(config: RunConfig, gateway: ModelGateway) -> StageResult:
    """Ensemble-grade every submission with every endpoint and style, then summarize comments."""
    items = load_dataset(config.dataset_root)
    store = RunStore(config.output_dir, config.run_id)
    tasks = [(ep, style, item) for ep in config.endpoints for style in config.styles for item in items]

    def work(task):
        ep, style, item = task
        sid = item.submission_id
        rec = {"model": ep.name, "style": style.value, "submission_id": sid, "problem_id": item.problem.id}
        warnings = []
        prompt = render_prompt(item.problem, item.submission, style)
        samples = [run_slot(gateway, ep, item.problem, sid, prompt, config.generation, q,
                            config.ensemble.max_retries) for q in range(config.ensemble.size)]
        try:
            grade = AggregatedGrade.from_samples(sid, samples, config.ensemble.method, config.ensemble.min_valid)
        except EnsembleFailure as exc:
            rec.update(final_score=None, method=config.ensemble.method.value, valid_count=exc.valid_count,
                       samples=[s.to_dict() for s in samples], comment_set=[], error=str(exc), summary=None)
            return rec, [f"{ep.name}/{style.value}: {exc}"]
        rec.update(final_score=grade.final_score, method=grade.method.value, valid_count=grade.valid_count,
                   samples=[s.to_dict() for s in grade.samples], comment_set=list(grade.comment_set), error=None)
        try:
            summary = summarize_comments(grade, item.problem, ep, config.generation, gateway,
                                         config.ensemble.max_retries)
            rec["summary"] = summary.to_dict()
        except (SummarizationFailure, TransientError) as exc:
            rec["summary"] = None
            warnings.append(f"{ep.name}/{style.value}/{sid}: summary failed: {exc}")
        return rec, warnings

    results = _parallel_map(work, tasks, config.parallelism)
    records = sorted((r for r, _ in results), key=lambda r: (r["model"], r["style"], r["submission_id"]))
    warnings = [w for _, ws in results for w in ws]

    result = StageResult("grade", warnings=warnings)
    result.outputs.append(store.write_records("grades", records))
    for rec in records:
        if rec.get("summary"):
            s = rec["summary"]
            summary = SummaryComment(tuple((x["criterion"], x["text"]) for x in s["sections"]),
                                     s["overview"], s["source_sample_count"])
            result.outputs.append(store.write_text(
                _feedback_path(rec["model"], rec["style"], rec["submission_id"]),
                render_feedback_document(rec, summary)))
    n_samples = sum(len(r["samples"]) for r in records)
    store.mark_stage(config, "grade", {"records": len(records), "samples": n_samples, "warnings": warnings},
                     gateway.digests)
    result.text = f"graded {len(records)} (model, style, submission) triples, {n_samples} samples\n"
    return result


def _grade_records(store: RunStore) -> list[dict]:
    return store.read_records("grades", "grade")


def _pools(records: list[dict], model: str, style: str) -> dict[str, list[int]]:
    return {
        r["submission_id"]: [s["score"] for s in r["samples"] if s["score"] is not None]
        for r in records
        if r["model"] == model and r["style"] == style and r["final_score"] is not None
    }


def cmd_benchmark(config: RunConfig, human_path: Optional[Path] = None) -> StageResult:
    """MAE per (model, style, method), method and style comparison tables, stability curves."""
    store = RunStore(config.output_dir, config.run_id)
    records = _grade_records(store)
    human_path = human_path or (config.dataset_root / "human_scores.csv")
    if not Path(human_path).exists():
        raise ConfigurationError(f"human score file {human_path} not found")
    human_all = read_human_scores(human_path)
    result = StageResult("benchmark")

    graded = sorted({r["submission_id"] for r in records})
    missing = [s for s in graded if s not in human_all]
    if missing:
        raise ConfigurationError(f"human scores missing for: {', '.join(missing)}")

    models = [e.name for e in config.endpoints]
    styles = [s.value for s in config.styles]
    reports: list[MaeReport] = []
    finals_by: dict[tuple[str, str], dict[str, int]] = {}
    tables = []
    curve_rows = []
    for style in styles:
        pools = {}
        for model in models:
            pool = _pools(records, model, style)
            if not pool:
                continue
            dropped = sorted(set(graded) - set(pool))
            if dropped:
                result.warnings.append(f"{model}/{style}: no aggregate for {', '.join(dropped)}; excluded")
            human = {k: human_all[k] for k in pool}
            pools[model] = pool
            q = max(len(v) for v in pool.values())
            for method in Method:
                finals = {sid: aggregate_scores(scores, method) for sid, scores in pool.items()}
                if method is config.ensemble.method:
                    finals_by[(model, style)] = finals
                reports.append(MaeReport(model, style, method, q, mae(finals, human), len(finals)))
            q_common = min(len(v) for v in pool.values())
            trimmed = {k: v[:q_common] for k, v in pool.items()}
            sizes = config.sizes_for(q_common)
            for method in Method:
                curve = worst_case_curve(trimmed, human, method, sizes, config.curve_trials, config.run_seed)
                for size, mean_case, worst in curve.rows():
                    curve_rows.append((model, style, method.value, size, mean_case, worst))
        if pools:
            common = set.intersection(*(set(p) for p in pools.values()))
            human = {k: human_all[k] for k in common}
            table = compare_methods({m: {k: p[k] for k in common} for m, p in pools.items()}, human)
            tables.append(f"### MAE by ensemble method ({style}, ensemble size {table.q})\n\n{table.render()}")

    if len(styles) >= 2 and PromptStyle.ZERO_SHOT.value in styles and PromptStyle.ZERO_SHOT_COT.value in styles:
        zs = {m: finals_by[(m, PromptStyle.ZERO_SHOT.value)] for m in models if (m, PromptStyle.ZERO_SHOT.value) in finals_by}
        cot = {m: finals_by[(m, PromptStyle.ZERO_SHOT_COT.value)] for m in models if (m, PromptStyle.ZERO_SHOT_COT.value) in finals_by}
        common_models = [m for m in models if m in zs and m in cot]
        rows = []
        for m in common_models:
            shared = sorted(set(zs[m]) & set(cot[m]))
            human = {k: human_all[k] for k in shared}
            rows.extend(compare_styles({m: {k: zs[m][k] for k in shared}}, {m: {k: cot[m][k] for k in shared}}, human))
        if rows:
            tables.append(f"### MAE by prompt style ({METHOD_LABELS[config.ensemble.method]})\n\n{render_style_table(rows)}")

    result.outputs.append(store.write_records("benchmark", [r.to_dict() for r in reports]))
    result.outputs.append(store.write_text("tables/benchmark.md", "\n".join(tables)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "style", "method", "ensemble_size", "mean_case_mae", "worst_case_mae"])
    for row in curve_rows:
        w.writerow([*row[:4], repr(row[4]), repr(row[5])])
    result.outputs.append(store.write_text("curves/stability.csv", buf.getvalue()))
    store.mark_stage(config, "benchmark", {"reports": len(reports), "warnings": result.warnings}, [])
    result.text = "\n".join(tables)
    return result


def _icc_table(reports: list[agr.IccReport], first_col: str) -> str:
    kind = reports[0].kind.value if reports else "ICC"
    lines = [f"| {first_col} | {kind} | F | P-value | CI95% |", "|---|---:|---:|---:|---|"]
    for r in reports:
        f = "inf" if r.f_value == float("inf") else f"{r.f_value:.2f}"
        lines.append(f"| {r.label} | {r.estimate:.3f} | {f} | {agr.format_p(r.p_value)} | "
                     f"[{r.ci95_low:.2f}, {r.ci95_high:.2f}] |")
    return "\n".join(lines) + "\n"


def cmd_agreement(config: RunConfig, gateway: Optional[ModelGateway], mode: str, repeats: Optional[int] = None,
                  matrix_path: Optional[Path] = None) -> StageResult:
    """Intra-model ICC(2,k) over repeated queries or inter-model ICC(3,k) over ensemble finals."""
    if matrix_path is not None:
        m = agr.RatingMatrix.read_csv(matrix_path)
        reports = [agr.icc_2k(m), agr.icc_3k(m)]
        lines = [f"{r.kind.value}: estimate={r.estimate:.6f} F={r.f_value:.4f} df=({r.df1}, {r.df2:g}) "
                 f"p={agr.format_p(r.p_value)} CI95=[{r.ci95_low:.6f}, {r.ci95_high:.6f}]" for r in reports]
        return StageResult("agreement", text="\n".join(lines) + "\n")

    store = RunStore(config.output_dir, config.run_id)
    result = StageResult("agreement")
    if mode == "inter":
        records = _grade_records(store)
        models = [e.name for e in config.endpoints]
        reports = []
        for style in config.styles:
            rows = [r for r in records if r["style"] == style.value]
            matrix = agr.build_inter_matrix(rows, models)
            rep = agr.icc_3k(matrix)
            reports.append(replace(rep, label=style.value))
        table = _icc_table(reports, "Prompt style")
        result.outputs.append(store.write_records("agreement_inter", [r.to_dict() for r in reports]))
        result.outputs.append(store.write_text("tables/agreement_inter.md", table))
        store.mark_stage(config, "agreement_inter", {"reports": len(reports)}, [])
        result.text = table
        return result

    if mode != "intra":
        raise ConfigurationError(f"unknown agreement mode {mode!r}")
    repeats = repeats or config.repeats
    style = config.intra_style
    items = load_dataset(config.dataset_root)
    tasks = [(ep, item, q) for ep in config.endpoints for item in items for q in range(repeats)]

    def work(task):
        ep, item, q = task
        prompt = render_prompt(item.problem, item.submission, style)
        s = run_slot(gateway, ep, item.problem, item.submission_id, prompt, config.generation, q,
                     config.ensemble.max_retries)
        return {"model": ep.name, "style": style.value, "submission_id": item.submission_id,
                "query_index": q, "score": s.response.score if s.response else None,
                "digest": s.completion_digest, "error": s.error}

    samples = _parallel_map(work, tasks, config.parallelism)
    samples.sort(key=lambda r: (r["model"], r["submission_id"], r["query_index"]))
    result.outputs.append(store.write_records("intra_samples", samples))
    reports = []
    for ep in config.endpoints:
        matrix = agr.build_intra_matrix(samples, ep.name, repeats)
        rep = agr.icc_2k(matrix)
        reports.append(replace(rep, label=ep.name))
    table = _icc_table(reports, "Model")
    result.outputs.append(store.write_records("agreement_intra", [r.to_dict() for r in reports]))
    result.outputs.append(store.write_text("tables/agreement_intra.md", table))
    store.mark_stage(config, "agreement_intra", {"reports": len(reports), "repeats": repeats, "style": style.value},
                     gateway.digests)
    result.text = table
    return result


def cmd_geval(config: RunConfig, gateway: ModelGateway) -> StageResult:
    """Score every feedback summary with the evaluator endpoint."""
    store = RunStore(config.output_dir, config.run_id)
    records = [r for r in _grade_records(store) if r.get("summary")]
    items = {i.submission_id: i for i in load_dataset(config.dataset_root)}
    evaluator = config.evaluator
    result = StageResult("geval")

    def work(rec):
        s = rec["summary"]
        summary = SummaryComment(tuple((x["criterion"], x["text"]) for x in s["sections"]),
                                 s["overview"], s["source_sample_count"])
        task = items[rec["submission_id"]].problem.statement
        gcfg = config.geval
        try:
            res = geval_score(task, summary, gcfg, evaluator, config.generation, gateway)
        except ProbabilityExtractionError as exc:
            if gcfg.probability_source is not ProbabilitySource.TOKEN_LOGPROBS:
                raise
            logger.info("%s: %s; falling back to sampling", rec["submission_id"], exc)
            fallback = GEvalConfig(gcfg.score_set, gcfg.evaluator, ProbabilitySource.EMPIRICAL_SAMPLING,
                                   gcfg.sample_count, gcfg.review_threshold)
            res = geval_score(task, summary, fallback, evaluator, config.generation, gateway)
        return {"model": rec["model"], "style": rec["style"], "submission_id": rec["submission_id"],
                "evaluator": evaluator.name, "feedback_path": _feedback_path(rec["model"], rec["style"], rec["submission_id"]),
                **res.to_dict()}

    out = _parallel_map(work, records, config.parallelism)
    out.sort(key=lambda r: (r["model"], r["style"], r["submission_id"]))
    result.outputs.append(store.write_records("geval", out))
    store.mark_stage(config, "geval", {"records": len(out)}, gateway.digests)
    flagged = sum(r["flagged_for_review"] for r in out)
    result.text = f"scored {len(out)} feedback documents with {evaluator.name}; {flagged} flagged for review\n"
    return result


def _geval_result(rec: dict) -> GEvalResult:
    return GEvalResult({int(k): v for k, v in rec["distribution"].items()}, rec["raw_score"],
                       rec["normalized"], rec["flagged_for_review"], rec.get("source", ""))


def cmd_review(config: RunConfig) -> StageResult:
    """Flagged feedback, lowest quality first."""
    store = RunStore(config.output_dir, config.run_id)
    records = store.read_records("geval", "geval")
    by_key = {f"{r['submission_id']}|{r['model']}|{r['style']}": r for r in records}
    queue = [by_key[key] for key, _ in review_queue([(key, _geval_result(r)) for key, r in by_key.items()])]
    if not queue:
        text = "nothing to review\n"
    else:
        lines = ["| # | Submission | Model | Style | Normalized | Feedback |", "|---:|---|---|---|---:|---|"]
        for i, r in enumerate(queue, 1):
            lines.append(f"| {i} | {r['submission_id']} | {r['model']} | {r['style']} | "
                         f"{r['normalized']:.3f} | {r['feedback_path']} |")
        text = "\n".join(lines) + "\n"
    result = StageResult("review", text=text)
    result.outputs.append(store.write_text("review.md", "# Feedback review queue\n\n" + text))
    return result


def cmd_report(config: RunConfig) -> StageResult:
    """Stitch every rendered table of the run into one document."""
    store = RunStore(config.output_dir, config.run_id)
    if not store.path("records", "grades.jsonl").exists():
        raise ConfigurationError(f"run {config.run_id} not found; run `grade` first")
    parts = [f"# Run {config.run_id}\n"]
    sections = [
        ("Benchmark", "tables/benchmark.md"),
        ("Intra-model agreement", "tables/agreement_intra.md"),
        ("Inter-model agreement", "tables/agreement_inter.md"),
        ("Review queue", "review.md"),
    ]
    for title, rel in sections:
        p = store.path(rel)
        if p.exists():
            body = p.read_text(encoding="utf-8")
            if body.startswith("# "):
                body = body.split("\n", 1)[1].lstrip("\n")
            parts.append(f"## {title}\n\n{body}")
    text = "\n".join(parts)
    result = StageResult("report", text=text)
    result.outputs.append(store.write_text("report.md", text))
    return result


__all__ = [
    "RunConfig", "DatasetItem", "RunStore", "StageResult", "load_dataset",
    "cmd_grade", "cmd_benchmark", "cmd_agreement", "cmd_geval", "cmd_review", "cmd_report",
]
