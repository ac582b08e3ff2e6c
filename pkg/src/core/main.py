import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd

from src.aggregate import FeatureMatrix, aggregate_table, export_matrix, import_matrix
from src.autoann import annotate_batch, load_palette
from src.core import __version__
from src.core.config_manager import DEFAULT_CONFIG_PATH, ConfigManager
from src.core.errors import AggregationError, ConfigError, DatasetError, LesionABCError, StatsError
from src.core.logger import setup_logging
from src.core.report import build_meta, write_json
from src.dataset import (
    DatasetManifest,
    Feature,
    LesionRecord,
    format_float,
    load_annotations,
    load_manifest,
    save_annotations,
    save_manifest,
    validate_dataset,
)
from src.imaging import encode_png
from src.mtl import (
    FEATURE_SIZE,
    HISTOGRAM_BINS,
    EvalReport,
    FeatureVector,
    SynthParams,
    TrainConfig,
    TrainingData,
    auc,
    build_manifest_features,
    cross_validate,
    ensemble_predict,
    generate_synthetic,
    load_model,
    load_vectors,
    render_synthetic_lesion,
    roc_curve,
    save_model,
    save_vectors,
    stratified_splits,
    train,
)
from src.stats import (
    agreement_filename,
    agreement_matrix,
    correlation_with_label,
    permute_annotations,
    raincloud_export,
    raincloud_filename,
    spread_correlation_with_label,
    write_agreement_csv,
    write_correlations_json,
    write_raincloud_csv,
)

logger = logging.getLogger("lesionabc")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2

# 输入路径参数 -> 报告中的名称
INPUT_ARGS = ("manifest", "annotations", "features", "vectors", "palette", "model")


@dataclass(frozen=True)
class RunConfig:
    """一次命令行运行的完整参数（路径在开始工作前校验）"""
    command: str
    seed: int
    out_dir: str
    inputs: Dict[str, str] = field(default_factory=dict)
    train: Optional[TrainConfig] = None
    synth: Optional[SynthParams] = None
    options: Dict[str, Any] = field(default_factory=dict)

    def validate_paths(self) -> None:
        for name, path in sorted(self.inputs.items()):
            if not os.path.isfile(path):
                raise DatasetError(f"{name} file not found: {path}")
        if os.path.exists(self.out_dir) and not os.path.isdir(self.out_dir):
            raise DatasetError(f"output path is not a directory: {self.out_dir}")

    def meta(self) -> Dict[str, Any]:
        return build_meta(self.seed, self.inputs)

    def output(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "inputs": dict(self.inputs),
            "train": self.train.to_dict() if self.train else None,
            "synth": self.synth.to_dict() if self.synth else None,
            "options": dict(self.options),
        }


def _train_section(manager: ConfigManager) -> Dict[str, Any]:
    section = dict(manager.get_config("mtl"))
    section.pop("feature_size", None)
    section.pop("histogram_bins", None)
    return section


def build_run_config(args: argparse.Namespace, manager: ConfigManager) -> RunConfig:
    """合并 config.yaml、--config 文件与命令行参数"""
    inputs = {name: getattr(args, name) for name in INPUT_ARGS if getattr(args, name, None)}
    train_config = None
    synth_params = None
    options: Dict[str, Any] = {}

    if args.command in ("train", "evaluate"):
        section = _train_section(manager)
        section.update({
            "seed": args.seed,
            "randomize_annotations": args.randomize_annotations or section.get("randomize_annotations", False),
            "ensemble": args.ensemble or section.get("ensemble", False),
        })
        for key in ("k_folds", "epochs", "learning_rate", "batch_size", "workers"):
            if getattr(args, key, None) is not None:
                section[key] = getattr(args, key)
        if args.auxiliary is not None:
            section["auxiliaries"] = args.auxiliary
        train_config = TrainConfig.from_dict(section)
        options["feature_size"] = int(manager.get("mtl.feature_size", FEATURE_SIZE))
        options["histogram_bins"] = int(manager.get("mtl.histogram_bins", HISTOGRAM_BINS))
    elif args.command == "synth":
        section = dict(manager.get_config("synth"))
        section["seed"] = args.seed
        for key in ("n", "d", "noise_cls", "noise_ann", "image_size"):
            if getattr(args, key, None) is not None:
                section[key] = getattr(args, key)
        if args.no_images:
            section["render_images"] = False
        synth_params = SynthParams.from_dict(section)
    elif args.command == "annotate":
        options["workers"] = args.workers or int(manager.get("autoann.workers", 1))
        options["annotator_id"] = str(manager.get("autoann.annotator_id", "auto:v1"))
    elif args.command == "aggregate":
        options["per_annotator"] = bool(args.per_annotator or manager.get("aggregate.per_annotator", False))
        scales = manager.get("dataset.student_scales") or {}
        try:
            options["student_scales"] = {Feature.parse(k): (float(v[0]), float(v[1])) for k, v in scales.items()}
        except (DatasetError, TypeError, ValueError, IndexError) as e:
            raise ConfigError(f"invalid dataset.student_scales: {e}") from None
    elif args.command == "analyze":
        options["bands"] = tuple(float(b) for b in manager.get("stats.bands", [0.2, 0.4, 0.6, 0.8]))
        options["kde_grid"] = int(manager.get("stats.kde_grid", 256))
        options["kde_min_points"] = int(manager.get("stats.kde_min_points", 5))

    return RunConfig(
        command=args.command,
        seed=args.seed,
        out_dir=args.out,
        inputs=inputs,
        train=train_config,
        synth=synth_params,
        options=options,
    )


def _load_matrix(path: str) -> FeatureMatrix:
    try:
        return import_matrix(path)
    except AggregationError as e:
        raise DatasetError(str(e)) from None


def _labels_for(matrix: FeatureMatrix, manifest: DatasetManifest) -> Dict[str, int]:
    labels = manifest.labels()
    for lesion_id in matrix.lesion_ids:
        if lesion_id not in labels:
            raise DatasetError(f"missing label for lesion {lesion_id}", lesion_id=lesion_id)
    return labels


def cmd_annotate(run: RunConfig, manager: ConfigManager) -> int:
    """自动标注清单中的所有病灶"""
    manifest = load_manifest(run.inputs["manifest"])
    palette = load_palette(run.inputs.get("palette"), manager.get("autoann.palette"))
    result = annotate_batch(
        manifest,
        palette=palette,
        workers=run.options["workers"],
        annotator_id=run.options["annotator_id"],
    )
    save_annotations(result.table, run.output("annotations.csv"))
    write_json(run.output("annotate_report.json"), {
        "meta": run.meta(),
        "palette": palette.to_dict(),
        "scored": len(result.table) // 3,
        "warnings": [{"lesion_id": lesion_id, "message": message} for lesion_id, message in result.warnings],
        "errors": [{"lesion_id": lesion_id, "message": message} for lesion_id, message in result.errors],
    })
    logger.info("Annotated %d lesions (%d warnings, %d errors)",
                len(result.table) // 3, len(result.warnings), len(result.errors))
    if len(result.table) == 0 and result.errors:
        logger.error("No lesion could be scored")
        return EXIT_INTERNAL
    return EXIT_OK


def cmd_aggregate(run: RunConfig, manager: ConfigManager) -> int:
    """标准化并按病灶平均原始标注"""
    table = load_annotations(run.inputs["annotations"])
    if len(table) == 0:
        raise DatasetError(f"empty annotations file: {run.inputs['annotations']}")
    lesion_ids = None
    if "manifest" in run.inputs:
        manifest = load_manifest(run.inputs["manifest"])
        report = validate_dataset(manifest, table, check_files=False,
                                  student_scales=run.options["student_scales"] or None)
        if not report.accepted:
            lesion_id, message = report.errors[0]
            raise DatasetError(f"lesion {lesion_id}: {message} ({report.summary()})", lesion_id=lesion_id)
        lesion_ids = manifest.lesion_ids
    matrix, warnings = aggregate_table(table, lesion_ids, per_annotator=run.options["per_annotator"])
    export_matrix(matrix, run.output("features.csv"))
    write_json(run.output("aggregate_report.json"), {
        "meta": run.meta(),
        "per_annotator": run.options["per_annotator"],
        "pools": {f"{s}:{f}": {"mean": m, "std": sd} for (s, f), (m, sd) in sorted(matrix.stats.items())},
        "warnings": warnings,
    })
    return EXIT_OK


def cmd_analyze(run: RunConfig, manager: ConfigManager) -> int:
    """相关性、来源一致性与雨云图数据"""
    matrix = _load_matrix(run.inputs["features"])
    manifest = load_manifest(run.inputs["manifest"])
    labels = _labels_for(matrix, manifest)
    bands = run.options["bands"]

    table = correlation_with_label(matrix, labels, bands)
    spread = spread_correlation_with_label(matrix, labels, bands)
    write_correlations_json(run.output("correlations.json"), table, run.meta(), spread=spread)

    for feature in matrix.features:
        try:
            agreement = agreement_matrix(matrix, feature, bands)
        except StatsError as e:
            logger.info("No agreement matrix for %s: %s", feature.value, e)
            continue
        write_agreement_csv(agreement_filename(run.out_dir, feature.value), agreement)

    for source, feature in matrix.pools():
        try:
            groups = raincloud_export(
                matrix, source, feature, labels,
                grid_size=run.options["kde_grid"],
                min_points=run.options["kde_min_points"],
            )
        except StatsError as e:
            logger.warning("No raincloud data for %s:%s: %s", source.value, feature.value, e)
            continue
        write_raincloud_csv(raincloud_filename(run.out_dir, source.value, feature.value), groups)
    return EXIT_OK


def _training_data(run: RunConfig) -> TrainingData:
    manifest = load_manifest(run.inputs["manifest"])
    matrix = _load_matrix(run.inputs["features"])
    _labels_for(matrix, manifest)
    lesion_ids = manifest.lesion_ids
    if "vectors" in run.inputs:
        vectors = {v.lesion_id: v for v in load_vectors(run.inputs["vectors"])}
        missing = [lesion for lesion in lesion_ids if lesion not in vectors]
        if missing:
            raise DatasetError(f"no feature vector for lesion {missing[0]}", lesion_id=missing[0])
        x = np.vstack([vectors[lesion].x for lesion in lesion_ids])
    else:
        built = build_manifest_features(manifest, run.options["feature_size"], run.options["histogram_bins"])
        x = np.vstack([v.x for v in built])
    labels = manifest.labels()
    return TrainingData(
        lesion_ids=tuple(lesion_ids),
        x=x,
        labels=np.array([labels[lesion] for lesion in lesion_ids]),
        matrix=matrix.reindexed(lesion_ids),
    )


def _write_roc(path: str, fpr: np.ndarray, tpr: np.ndarray, thresholds: np.ndarray) -> None:
    """roc_<fold>.csv：fpr,tpr,threshold"""
    frame = pd.DataFrame(
        {
            "fpr": [format_float(v) for v in fpr],
            "tpr": [format_float(v) for v in tpr],
            "threshold": [format_float(v) for v in thresholds],
        },
        columns=["fpr", "tpr", "threshold"],
    )
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


def _write_evaluation(run: RunConfig, report: EvalReport) -> None:
    payload = report.to_dict()
    payload["meta"] = run.meta()
    write_json(run.output("eval.json"), payload)
    for fold, (fpr, tpr, thresholds) in enumerate(report.roc):
        _write_roc(run.output(f"roc_{fold}.csv"), fpr, tpr, thresholds)


def cmd_evaluate(run: RunConfig, manager: ConfigManager) -> int:
    """交叉验证；给定 --model 时在全部病灶上评估已保存的模型"""
    data = _training_data(run)
    if "model" in run.inputs:
        members, _ = load_model(run.inputs["model"])
        scores = ensemble_predict([params for _, params in members], data.x)
        write_json(run.output("eval.json"), {
            "auc": auc(scores, data.labels),
            "members": [None if aux is None else aux.label for aux, _ in members],
            "n": len(data),
            "meta": run.meta(),
        })
        _write_roc(run.output("roc_all.csv"), *roc_curve(scores, data.labels))
        return EXIT_OK
    report = cross_validate(run.train, data)
    _write_evaluation(run, report)
    print(report.summary())
    return EXIT_OK


def cmd_train(run: RunConfig, manager: ConfigManager) -> int:
    """交叉验证后在第一折的 train+test 上训练最终模型并保存"""
    data = _training_data(run)
    config = run.train
    report = cross_validate(config, data)
    _write_evaluation(run, report)

    if config.randomize_annotations:
        data = data.with_matrix(permute_annotations(data.matrix, config.seed))
    split = stratified_splits(data.labels, config)[0]
    fit_rows = np.sort(np.concatenate([split.train, split.test]))
    members = []
    history = {}
    for position, auxiliary in enumerate(config.members):
        result = train(config, data, fit_rows, split.val, auxiliary=auxiliary, seed=config.seed + position)
        members.append((auxiliary, result.params))
        history["baseline" if auxiliary is None else auxiliary.label] = {
            "best_epoch": result.best_epoch,
            "epochs": [record.to_dict() for record in result.history],
        }
    save_model(run.output("model.json"), members, config=config.to_dict(), meta=run.meta())
    write_json(run.output("train.json"), {"history": history, "meta": run.meta()})
    print(report.summary())
    return EXIT_OK


def cmd_synth(run: RunConfig, manager: ConfigManager) -> int:
    """生成合成数据集及其全部中间文件"""
    params = run.synth
    dataset = generate_synthetic(params.n, params.d, params.noise_cls, params.noise_ann, params.seed)
    records = []
    if params.render_images:
        os.makedirs(run.output("images"), exist_ok=True)
        os.makedirs(run.output("masks"), exist_ok=True)
    for i, lesion_id in enumerate(dataset.lesion_ids):
        image_path = f"images/{lesion_id}.png"
        mask_path = f"masks/{lesion_id}_mask.png"
        if params.render_images:
            image, mask = render_synthetic_lesion(dataset.latent[i], params.image_size)
            with open(run.output(image_path), "wb") as f:
                f.write(encode_png(image))
            with open(run.output(mask_path), "wb") as f:
                f.write(encode_png(mask))
        records.append(LesionRecord(lesion_id, image_path, mask_path, int(dataset.labels[i])))

    manifest = DatasetManifest(tuple(records), name="manifest", base_dir=os.path.abspath(run.out_dir))
    save_manifest(manifest, run.output("manifest.csv"))
    save_annotations(dataset.table, run.output("annotations.csv"))
    export_matrix(dataset.matrix, run.output("features.csv"))
    save_vectors(
        [FeatureVector(lesion_id, row) for lesion_id, row in zip(dataset.lesion_ids, dataset.x)],
        run.output("vectors.csv"),
    )
    report = validate_dataset(manifest, dataset.table, check_files=params.render_images)
    write_json(run.output("synth.json"), {
        "meta": run.meta(),
        "params": params.to_dict(),
        "prevalence": float(dataset.labels.mean()),
        "validation": report.summary(),
    })
    logger.info("Wrote %d synthetic lesions to %s", len(dataset), run.out_dir)
    return EXIT_OK


COMMANDS = {
    "annotate": cmd_annotate,
    "aggregate": cmd_aggregate,
    "analyze": cmd_analyze,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
}


def _seed(token: str) -> int:
    value = int(token)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=0, help="随机种子（写入所有报告）")
    common.add_argument("--out", default=".", help="输出目录")
    common.add_argument("--config", help="覆盖 config.yaml 的配置文件（YAML 或 JSON）")
    common.add_argument("--log-level", default=None, help="日志级别，默认取 config.yaml")

    parser = argparse.ArgumentParser(prog="lesionabc", description="皮损 ABC 标注、统计分析与多任务训练")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("annotate", parents=[common], help="自动计算 ABC 标注")
    p.add_argument("--manifest", required=True)
    p.add_argument("--palette")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("aggregate", parents=[common], help="标准化并聚合标注")
    p.add_argument("--annotations", required=True)
    p.add_argument("--manifest")
    p.add_argument("--per-annotator", action="store_true")

    p = sub.add_parser("analyze", parents=[common], help="相关性与一致性分析")
    p.add_argument("--features", required=True)
    p.add_argument("--manifest", required=True)

    for name in ("train", "evaluate"):
        p = sub.add_parser(name, parents=[common], help="多任务模型交叉验证" if name == "evaluate" else "训练并保存模型")
        p.add_argument("--features", required=True)
        p.add_argument("--manifest", required=True)
        p.add_argument("--vectors", help="预先计算的 vectors.csv")
        p.add_argument("--auxiliary", help="辅助目标，如 auto:A 或 student:A,student:B,student:C")
        p.add_argument("--ensemble", action="store_true")
        p.add_argument("--randomize-annotations", action="store_true")
        p.add_argument("--k-folds", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--learning-rate", type=float)
        p.add_argument("--workers", type=int)
        if name == "evaluate":
            p.add_argument("--model", help="评估已保存的 model.json")

    p = sub.add_parser("synth", parents=[common], help="生成合成数据集")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--noise-cls", type=float)
    p.add_argument("--noise-ann", type=float)
    p.add_argument("--image-size", type=int)
    p.add_argument("--no-images", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """命令行入口，返回退出码"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    try:
        manager = ConfigManager(DEFAULT_CONFIG_PATH)
        if args.config:
            manager.load_overrides(args.config)
        setup_logging(args.log_level or manager.get("logging.level", "INFO"))
        run = build_run_config(args, manager)
        run.validate_paths()
        os.makedirs(run.out_dir, exist_ok=True)
        return COMMANDS[args.command](run, manager)
    except (DatasetError, ConfigError) as e:
        logger.error("%s", e)
        print(f"lesionabc: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except LesionABCError as e:
        logger.error("%s", e)
        print(f"lesionabc: error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as e:  # noqa: BLE001
        logger.exception("Unexpected failure")
        print(f"lesionabc: internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
