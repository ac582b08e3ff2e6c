class LesionABCError(Exception):
    """LesionABC 异常基类"""


class ConfigError(LesionABCError):
    """配置错误"""


class DatasetError(LesionABCError):
    """数据集读取或校验错误"""

    def __init__(self, message: str, lesion_id: str = None, row: int = None):
        self.lesion_id = lesion_id
        self.row = row
        super().__init__(message)


class ImagingError(LesionABCError):
    """图像解码或几何计算错误"""


class ScoringError(LesionABCError):
    """自动标注评分错误"""


class AggregationError(LesionABCError):
    """标准化与聚合错误"""


class StatsError(LesionABCError):
    """统计分析错误"""


class TrainingError(LesionABCError):
    """多任务训练错误"""
