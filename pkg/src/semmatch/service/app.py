"""FastAPI service exposing the matching pipeline.

Endpoints map one-to-one onto the CLI subcommands. Handlers are synchronous
(FastAPI runs them in a worker threadpool) and stateless: weights are loaded
per request, the on-disk cache provides cross-request reuse, and outputs are
written atomically where it matters. Partial failures (one bad file in a
batch) are reported per item with HTTP 200; malformed requests and unusable
configs return HTTP 400.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..conditioning import save_matches
from ..errors import ContractError, SemmatchError
from ..features import GeneratorConfig, load_interchange
from ..pipeline import (
    RunConfig,
    extract_file,
    load_match_file,
    load_model,
    match_files,
    summarize_evaluations,
    sweep_thresholds,
    write_eval_csv,
)
from ..reasoning.gradcheck import standard_check
from ..supervision import (
    gt_assignment,
    load_geometry_sidecar,
    project_keypoints,
)
from ..supervision.train import TrainConfig, train, write_metrics_csv
from ..reasoning import save_weights
from ..viz import render_heatmap_svg, render_matches_svg
from . import schemas


def _run_config(model: schemas.RunConfigModel) -> RunConfig:
    try:
        return RunConfig(**model.model_dump())
    except ContractError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


def _load_model_or_400(config: RunConfig):
    try:
        return load_model(config)
    except (SemmatchError, OSError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


def _ordered_map(fn, items, jobs: int) -> list:
    """Apply fn over items, preserving input order; parallel when jobs > 1."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def create_app() -> FastAPI:
    app = FastAPI(
        title="semmatch",
        description="Semantic-conditioned local feature matching service",
        version=__version__,
    )

    @app.get("/v1/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/v1/extract", response_model=schemas.ExtractResponse)
    def extract(request: schemas.ExtractRequest) -> schemas.ExtractResponse:
        config = _run_config(request.config)
        model = _load_model_or_400(config)

        def one(path: str) -> schemas.FileExtractResult:
            try:
                res, _ = extract_file(path, config, model)
                return schemas.FileExtractResult(
                    file=res.path,
                    key=res.key,
                    n_keypoints=res.n_keypoints,
                    cache_hit=res.cache_hit,
                    timings=res.timings,
                )
            except (SemmatchError, OSError) as exc:
                return schemas.FileExtractResult(file=str(path), error=str(exc))

        results = _ordered_map(one, request.files, request.jobs)
        failed = sum(1 for r in results if r.error)
        return schemas.ExtractResponse(results=results, n_failed=failed)

    @app.post("/v1/match", response_model=schemas.MatchResponse)
    def match(request: schemas.MatchRequest) -> schemas.MatchResponse:
        config = _run_config(request.config)
        model = _load_model_or_400(config)
        out_dir = Path(request.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

        def one(pair: schemas.MatchPairSpec) -> schemas.PairMatchResult:
            try:
                matches, res_a, res_b = match_files(
                    pair.a, pair.b, config, model, texture_only=request.texture_only
                )
                out_path = out_dir / f"{pair.name}.matches.txt"
                save_matches(out_path, matches)
                return schemas.PairMatchResult(
                    name=pair.name,
                    match_file=str(out_path),
                    n_matches=len(matches),
                    key_a=res_a.key,
                    key_b=res_b.key,
                )
            except (SemmatchError, OSError) as exc:
                return schemas.PairMatchResult(name=pair.name, error=str(exc))

        results = _ordered_map(one, request.pairs, request.jobs)
        failed = sum(1 for r in results if r.error)
        return schemas.MatchResponse(results=results, n_failed=failed)

    @app.post("/v1/eval", response_model=schemas.EvalResponse)
    def evaluate(request: schemas.EvalRequest) -> schemas.EvalResponse:
        config = _run_config(request.config)
        entries = []
        for pair in request.pairs:
            try:
                matches = load_match_file(pair.matches)
                entries.append((pair.name, pair.a, pair.b, matches, pair.geometry))
            except (SemmatchError, OSError) as exc:
                raise HTTPException(
                    status_code=400, detail=f"pair {pair.name}: {exc}"
                ) from exc
        try:
            best_threshold, by_threshold = sweep_thresholds(
                entries, config, request.sampson_thresholds
            )
        except (SemmatchError, OSError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        sweep = {
            f"{thr:g}": summarize_evaluations(evals).auc.get(5.0, 0.0)
            for thr, evals in by_threshold.items()
        }
        report = summarize_evaluations(by_threshold[best_threshold])
        write_eval_csv(request.out_csv, report.pairs)
        Path(request.out_json).write_text(report.to_json() + "\n")
        return schemas.EvalResponse(
            pairs=[
                schemas.PairEvalResult(
                    name=p.name,
                    status=p.status,
                    n_matches=p.n_matches,
                    precision=p.precision,
                    recall=p.recall,
                    rotation_error_deg=p.rotation_error_deg,
                    translation_error_deg=p.translation_error_deg,
                    pose_error_deg=p.pose_error_deg,
                )
                for p in report.pairs
            ],
            auc={f"{int(k)}deg": v for k, v in report.auc.items()},
            mean_precision=report.mean_precision,
            mean_recall=report.mean_recall,
            n_pairs=report.n_pairs,
            n_gt_empty=report.n_gt_empty,
            n_pose_failed=report.n_pose_failed,
            sampson_threshold=best_threshold,
            threshold_sweep=sweep,
            out_csv=request.out_csv,
            out_json=request.out_json,
        )

    @app.post("/v1/train", response_model=schemas.TrainResponse)
    def run_training(request: schemas.TrainRequest) -> schemas.TrainResponse:
        try:
            config = TrainConfig(
                steps=request.steps,
                batch_size=request.batch_size,
                lr=request.lr,
                dim=request.dim,
                n_layers=request.n_layers,
                heads=request.heads,
                generator=GeneratorConfig(**request.generator.model_dump()),
            )
            result = train(config, request.seed)
        except ContractError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except SemmatchError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        save_weights(result.weights, request.out_weights)
        write_metrics_csv(request.out_log, result.metrics)
        return schemas.TrainResponse(
            out_weights=request.out_weights,
            out_log=request.out_log,
            steps=config.steps,
            final_loss=result.metrics[-1].loss if result.metrics else None,
            initial_precision=result.initial_precision,
            final_precision=result.final_precision,
        )

    @app.post("/v1/gradcheck", response_model=schemas.GradcheckResponse)
    def gradcheck(request: schemas.GradcheckRequest) -> schemas.GradcheckResponse:
        report = standard_check(
            seed=request.seed,
            step=request.step,
            n_keypoints=request.n_keypoints,
            dim=request.dim,
            heads=request.heads,
            n_layers=request.n_layers,
        )
        return schemas.GradcheckResponse(
            passed=report.passed(request.tolerance),
            max_rel_err=report.max_rel_err,
            worst_tensor=report.worst_tensor,
            n_parameters=report.n_parameters,
            tolerance=request.tolerance,
        )

    @app.post("/v1/viz", response_model=schemas.VizResponse)
    def viz(request: schemas.VizRequest) -> schemas.VizResponse:
        config = _run_config(request.config)
        model = _load_model_or_400(config)
        try:
            _, feat_a = extract_file(request.a, config, model)
            _, feat_b = extract_file(request.b, config, model)
            if request.mode == "heatmap":
                svg = render_heatmap_svg(
                    feat_a, feat_b, request.query_index, request.channel, request.top_k
                )
                n_lines, n_highlighted = 0, min(request.top_k, len(feat_b))
            else:
                if request.matches is None:
                    raise ContractError("matches file is required in matches mode")
                matches = load_match_file(request.matches)
                gt = None
                if request.geometry is not None:
                    kps1, _, _ = load_interchange(request.a)
                    kps2, _, _ = load_interchange(request.b)
                    geom1, geom2 = load_geometry_sidecar(request.geometry)
                    projected, valid = project_keypoints(kps1, geom1, geom2)
                    gt = gt_assignment(projected, valid, kps2, radius=config.gt_radius)
                svg = render_matches_svg(feat_a.keypoints, feat_b.keypoints, matches, gt)
                n_lines, n_highlighted = len(matches), 0
        except (SemmatchError, OSError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        Path(request.out_svg).write_text(svg + "\n")
        return schemas.VizResponse(
            out_svg=request.out_svg, n_lines=n_lines, n_highlighted=n_highlighted
        )

    return app


app = create_app()
