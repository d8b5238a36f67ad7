"""
实验编排：数据准备、网格训练评估、PDC 扫描和簇中心分析

每个网格单元 (模型, z, 折) 是 (配置, 缓存) 的纯函数，结果写入 runs/<kind>_<z>_fold<i>/：
model.txt、trace.csv、embeddings.csv、report.json（确定性内容）和 timing.json（耗时）。
"""

import asyncio
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from fusion_lab import __version__
from fusion_lab.analysis.clustering import kmeans, sample_clusters
from fusion_lab.analysis.profiles import CentroidProfile, centroid_profile, save_profiles
from fusion_lab.config import ExperimentConfig
from fusion_lab.data.cache import available_folds, dataset_hash, load_catalog, load_dataset, save_dataset
from fusion_lab.data.folds import RatingArrays, build_folds, catalog_from_link, make_tuning_split, to_arrays
from fusion_lab.data.genome import link_movies, load_genome, load_ml20m_titles
from fusion_lab.data.movielens import load_item_catalog, load_official_folds, read_rating_file
from fusion_lab.errors import DatasetIntegrityError, MissingInputError, UsageError
from fusion_lab.evaluation.metrics import prediction_metrics
from fusion_lab.evaluation.pdc import DEFAULT_THRESHOLDS, PdcResult, RatingScope, UserDistance, pdc_sweep
from fusion_lab.evaluation.report import EvalReport
from fusion_lab.harness.planning import ExperimentPlanner, GridCell, grid_rows
from fusion_lab.harness.reports import write_results
from fusion_lab.models.base import ModelKind
from fusion_lab.models.model_manager import init_model, param_count
from fusion_lab.models.serialization import load_embeddings, load_model, save_embeddings, save_model
from fusion_lab.models.tensor import TensorFusionModel
from fusion_lab.numerics import SeededRng
from fusion_lab.training.grid_search import grid_search
from fusion_lab.training.hyperparams import HyperParams
from fusion_lab.training.trainer import predict_arrays, train
from fusion_lab.utils.debug import RunEventLog

logger = logging.getLogger(__name__)

GENOME_SCORES = "genome-scores.csv"
GENOME_TAGS = "genome-tags.csv"
ML20M_MOVIES = "movies.csv"
ML100K_ITEMS = "u.item"
LINK_REPORT = "link_report.csv"


def _require_dir(path: Union[str, Path], label: str) -> Path:
    path = Path(path)
    if not path.is_dir():
        raise MissingInputError(str(path), f"{label} 目录不存在")
    return path


def cmd_prepare(ml100k_dir: Union[str, Path], ml20m_dir: Union[str, Path],
                out_dir: Union[str, Path]) -> Dict[str, Any]:
    """链接两个数据集，写出五折缓存、特征目录和链接报告"""
    ml100k_dir = _require_dir(ml100k_dir, "ML-100k")
    ml20m_dir = _require_dir(ml20m_dir, "ML-20M")
    out_dir = Path(out_dir)

    genome = load_genome(ml20m_dir / GENOME_SCORES, ml20m_dir / GENOME_TAGS)
    link_map, link_report = link_movies(ml100k_dir / ML100K_ITEMS, ml20m_dir / ML20M_MOVIES, genome)
    titles = {item_id: title for item_id, (title, _) in load_item_catalog(ml100k_dir / ML100K_ITEMS).items()}
    catalog = catalog_from_link(link_map, genome.tag_names, titles)
    folds = build_folds(load_official_folds(ml100k_dir), link_map)

    out_dir.mkdir(parents=True, exist_ok=True)
    for fold in folds:
        fold.validate(catalog)
        save_dataset(fold, catalog, out_dir)
    link_report.save_csv(out_dir / LINK_REPORT)
    logger.info(f"数据集已缓存到 {out_dir}: {len(folds)} 折，{len(catalog)} 部电影，丢弃 {link_report.dropped} 部")
    return {
        "cache_dir": str(out_dir),
        "folds": [fold.fold_id for fold in folds],
        "matched": link_report.matched,
        "dropped": link_report.dropped,
        "aliases": len(link_report.aliases),
        "dataset_hash": dataset_hash(out_dir),
    }


def _init_seed(config: ExperimentConfig, kind: ModelKind, z: int, fold_id: int) -> SeededRng:
    return SeededRng(config.seed).spawn(list(ModelKind).index(kind), z, fold_id)


def _pdc_ratings(config: ExperimentConfig, train: RatingArrays, test: RatingArrays) -> RatingArrays:
    if config.rating_scope is RatingScope.TEST:
        return test
    return RatingArrays(
        np.concatenate([train.users, test.users]),
        np.concatenate([train.items, test.items]),
        np.concatenate([train.ratings, test.ratings]),
    )


def run_cell(config_json: str, kind_value: str, z: int, fold_id: int, data_hash: str,
             hyperparams_json: Optional[str] = None, tuning_split: str = "",
             tuning_error: Optional[str] = None) -> str:
    """训练并评估一个网格单元，返回 report.json 的内容；所在行调参失败时只写出带错误的报告"""
    config = ExperimentConfig.model_validate_json(config_json)
    kind = ModelKind(kind_value)
    hp = HyperParams.model_validate_json(hyperparams_json) if hyperparams_json else config.hyperparams_for(kind)
    run_dir = Path(config.output_dir) / "runs" / f"{kind.value}_{z}_fold{fold_id}"
    run_dir.mkdir(parents=True, exist_ok=True)

    report = EvalReport(
        kind=kind.value, z=z, fold_id=fold_id, seed=config.seed,
        param_count=param_count(kind, z),
        activation=hp.activation.value, optimizer=hp.optimizer.value,
        hyperparams=hp.model_dump(mode="json"),
        clamp_predictions=config.clamp_predictions,
        d_u=config.d_u.value, rating_scope=config.rating_scope.value,
        tuning_split=tuning_split,
        config_hash=config.config_hash(), dataset_hash=data_hash, version=__version__,
    )
    if tuning_error is not None:
        logger.error(f"{report.cell_id} 跳过: 所在行调参失败")
        report = report.model_copy(update={"error": tuning_error})
        report.save(run_dir / "report.json")
        return report.to_json()

    try:
        fold, catalog = load_dataset(config.cache_dir, fold_id)
        train_arrays, test_arrays = fold.train_arrays(), fold.test_arrays()
        model = init_model(kind, z, _init_seed(config, kind, z, fold_id), hp.activation,
                           n_features=catalog.n_tags, n_users=fold.n_users)
        model, trace = train(model, train_arrays, catalog, hp)
        pred = predict_arrays(model, test_arrays, catalog)
        mae, rmse = prediction_metrics(pred, test_arrays.ratings, clamp=config.clamp_predictions)

        embeddings = model.embedding_table(fold.user_ids)
        sweep = pdc_sweep(embeddings, _pdc_ratings(config, train_arrays, test_arrays),
                          config.pdc_thresholds, d_u=config.d_u)
        report = report.model_copy(update={
            "mae": mae, "rmse": rmse,
            "pdc": {t: r.score for t, r in sweep.items()},
            "pair_counts": {t: r.pair_count for t, r in sweep.items()},
            "param_count": model.param_count,
            "params_note": model.metadata.get("params_note", ""),
            "n_train": len(fold.train), "n_test": len(fold.test),
            "model_hash": trace.model_hash,
        })
        header = {"config_hash": report.config_hash, "dataset_hash": data_hash, "version": __version__,
                  "fold_id": fold_id, "hyperparams": hp.describe()}
        save_model(model, run_dir / "model.txt", header)
        trace.save_csv(run_dir / "trace.csv")
        save_embeddings(embeddings, run_dir / "embeddings.csv")
        timing = {"wall_time": trace.wall_time, "epoch_seconds": trace.seconds}
        (run_dir / "timing.json").write_text(json.dumps(timing, indent=2) + "\n", encoding="utf-8")
        unavailable = {t: r.error for t, r in sweep.items() if not r.available}
        if unavailable:
            (run_dir / "pdc_unavailable.json").write_text(
                json.dumps(unavailable, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    except Exception as e:
        logger.error(f"{report.cell_id} 失败: {e}")
        report = report.model_copy(update={"error": f"{type(e).__name__}: {e}"})
    report.save(run_dir / "report.json")
    return report.to_json()


def tune_cell(config_json: str, kind_value: str, z: int) -> Tuple[Optional[str], str, Optional[str]]:
    """在第一个评估折的训练集上划出调参集做网格搜索

    返回 (最优超参数JSON, 调参划分说明, 错误)；调参失败时前两项为 (None, "")，
    错误会记录到该行每个单元的 report.json，网格中其他行照常运行。
    """
    config = ExperimentConfig.model_validate_json(config_json)
    kind = ModelKind(kind_value)
    try:
        fold, catalog = load_dataset(config.cache_dir, config.folds[0])
        split = make_tuning_split(fold, config.tuning_fraction, config.seed)
        results_path = Path(config.output_dir) / "tuning" / f"{kind.value}_{z}.csv"
        result = grid_search(kind, z, config.tuning_grid, split, catalog,
                             init_seed=_init_seed(config, kind, z, 0).seed,
                             clamp=config.clamp_predictions, results_path=results_path)
    except Exception as e:
        logger.error(f"{kind.value}_{z} 调参失败: {e}")
        return None, "", f"{type(e).__name__}: {e}"
    return result.best.model_dump_json(), result.tuning_split, None


async def _execute(executor: Optional[ProcessPoolExecutor], func, *args):
    if executor is None:
        return func(*args)
    loop = asyncio.get_running_loop()
    return await loop.run_in_executor(executor, func, *args)


async def cmd_run(config: ExperimentConfig, event_log: Optional[RunEventLog] = None) -> pd.DataFrame:
    """运行整个实验网格；单元失败只记录，网格继续"""
    folds_present = available_folds(config.cache_dir)
    missing = [f for f in config.folds if f not in folds_present]
    if missing:
        raise MissingInputError(str(Path(config.cache_dir) / f"fold{missing[0]}"), "缓存中缺少该折，请先运行 prepare")
    event_log = event_log or RunEventLog()
    event_log.start_new_session()
    data_hash = dataset_hash(config.cache_dir)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(
        json.dumps(config.model_dump(mode="json"), sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    config_json = config.model_dump_json()
    planner = ExperimentPlanner.from_config(config)
    logger.info(f"实验网格: {len(planner.cells)} 个单元，config_hash={config.config_hash()[:12]}")

    executor = ProcessPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        tuned: Dict[Tuple[ModelKind, int], Tuple[Optional[str], str, Optional[str]]] = {}
        if config.tuning_grid:
            rows = grid_rows(config)
            results = await asyncio.gather(
                *[_execute(executor, tune_cell, config_json, kind.value, z) for kind, z in rows]
            )
            tuned = dict(zip(rows, results))
            for (kind, z), (_, _, error) in tuned.items():
                if error is not None:
                    event_log.log_tuning_failed(f"{kind.value}_{z}", error)

        async def run_one(cell: GridCell) -> EvalReport:
            planner.start_cell(cell.id)
            event_log.log_cell_started(cell.id)
            hp_json, split_note, tuning_error = tuned.get(cell.row, (None, "", None))
            raw = await _execute(executor, run_cell, config_json, cell.kind.value, cell.z, cell.fold_id,
                                 data_hash, hp_json, split_note, tuning_error)
            report = EvalReport.model_validate_json(raw)
            if report.ok:
                planner.complete_cell(cell.id, report)
                event_log.log_cell_finished(cell.id, mae=report.mae, rmse=report.rmse)
                for t, score in report.pdc.items():
                    if score is None:
                        event_log.log_pdc_unavailable(cell.id, t, "合格用户对不足或方差为零")
            else:
                planner.fail_cell(cell.id, report.error)
                event_log.log_cell_failed(cell.id, report.error)
            return report

        reports = await asyncio.gather(*[run_one(cell) for cell in planner.ordered()])
    except Exception as e:
        event_log.log_error(e)
        event_log.save(out_dir / "events.json")
        raise
    finally:
        if executor is not None:
            executor.shutdown()

    progress = planner.get_progress()
    logger.info(f"网格完成: {progress['completed']} 成功，{progress['failed']} 失败")
    table = write_results(out_dir, reports)
    event_log.save(out_dir / "events.json")
    return table


def _ranking_catalog(cache_dir: Union[str, Path], ml20m_dir: Optional[Union[str, Path]], ml100k_only: bool):
    if ml20m_dir is None or ml100k_only:
        return load_catalog(cache_dir)
    ml20m_dir = _require_dir(ml20m_dir, "ML-20M")
    genome = load_genome(ml20m_dir / GENOME_SCORES, ml20m_dir / GENOME_TAGS)
    titles = load_ml20m_titles(ml20m_dir / ML20M_MOVIES)
    genome.titles = {int(i): titles[int(i)] for i in genome.ids if int(i) in titles}
    return genome


def _model_user_ids(header: Dict[str, str], n_users: int, cache_dir: Union[str, Path]) -> Optional[List[int]]:
    """按模型表头记录的训练折从缓存取回原始用户ID"""
    fold_id = header.get("fold_id")
    if fold_id is None or int(fold_id) not in available_folds(cache_dir):
        logger.warning(f"模型表头没有可用的训练折 (fold_id={fold_id})，clusters.csv 按 1..n 编号")
        return None
    fold, _ = load_dataset(cache_dir, int(fold_id))
    if fold.n_users != n_users:
        raise DatasetIntegrityError(f"第 {fold_id} 折有 {fold.n_users} 个用户，模型有 {n_users} 个")
    return fold.user_ids


def cmd_analyze(model_path: Union[str, Path], clusters: int, sample: int, seed: int,
                cache_dir: Union[str, Path], output_dir: Union[str, Path],
                ml20m_dir: Optional[Union[str, Path]] = None, ml100k_only: bool = False) -> List[CentroidProfile]:
    """对张量融合模型的用户嵌入聚类，输出随机抽取的若干簇中心画像"""
    model, header = load_model(model_path)
    if not isinstance(model, TensorFusionModel):
        raise UsageError(
            f"analyze 只支持张量融合模型，{model_path} 是 {model.kind.value} 模型；"
            "其他模型请使用 sensitivity(model, u, x) 查看输入敏感度"
        )
    catalog = _ranking_catalog(cache_dir, ml20m_dir, ml100k_only)
    rng = SeededRng(seed)
    user_ids = _model_user_ids(header, model.n_users, cache_dir)
    clustering = kmeans(model.embedding_table(user_ids), clusters, rng.spawn(0))
    chosen = sample_clusters(clustering, sample, rng.spawn(1))
    sizes = clustering.sizes()

    profiles = []
    for cluster_id in chosen:
        profile = centroid_profile(model, clustering.centroids[cluster_id], catalog, cluster_id=cluster_id)
        profile.size = int(sizes[cluster_id])
        profiles.append(profile)

    output_dir = Path(output_dir)
    save_profiles(profiles, output_dir)
    clustering.to_frame(user_ids).to_csv(output_dir / "clusters.csv", index=False, lineterminator="\n")
    logger.info(f"已输出 {len(profiles)} 个簇中心画像到 {output_dir}")
    return profiles


def cmd_pdc(embeddings_path: Union[str, Path], ratings_path: Union[str, Path],
            thresholds: Sequence[int] = DEFAULT_THRESHOLDS,
            d_u: UserDistance = UserDistance.MEAN_SQUARED_DIFFERENCE,
            output_path: Optional[Union[str, Path]] = None) -> Dict[int, PdcResult]:
    """对嵌入 CSV 和评分文件（u.data 格式）单独做 PDC 扫描"""
    table = load_embeddings(embeddings_path)
    records = read_rating_file(ratings_path)
    if not records:
        raise UsageError(f"{ratings_path} 中没有评分")
    user_index = {user_id: idx for idx, user_id in enumerate(table.user_ids)}
    unknown = sorted({r.user_id for r in records} - set(user_index))
    if unknown:
        raise DatasetIntegrityError(f"评分中有 {len(unknown)} 个用户没有嵌入，例如 {unknown[:5]}")
    results = pdc_sweep(table, to_arrays(records, user_index), thresholds, d_u=d_u)
    if output_path is not None:
        frame = pd.DataFrame(
            [(t, r.score, r.pair_count) for t, r in results.items()],
            columns=["threshold", "score", "pair_count"],
        )
        frame.to_csv(output_path, index=False, float_format="%.17g", lineterminator="\n")
    return results
