from dataclasses import dataclass
from typing import List, Optional

import numpy as np


class RtmDidError(Exception):
    """rtmdid 所有异常的基类"""


class ConfigError(RtmDidError, ValueError):
    """配置缺失或取值非法"""


@dataclass(frozen=True)
class SchemaIssue:
    """面板CSV中的单条问题记录, row为CSV文件中的行号(表头为第1行)"""
    row: Optional[int]
    message: str

    def __str__(self) -> str:
        if self.row is None:
            return self.message
        return f"row {self.row}: {self.message}"


class PanelSchemaError(RtmDidError):
    """面板数据不满足长表格式约束"""

    def __init__(self, issues: List[SchemaIssue]):
        self.issues = list(issues)
        lines = "\n".join(f"  - {issue}" for issue in self.issues)
        super().__init__(f"panel schema violated ({len(self.issues)} issue(s)):\n{lines}")

    def __reduce__(self):
        return type(self), (self.issues,)


class NotPositiveDefiniteError(RtmDidError, np.linalg.LinAlgError):
    """Cholesky分解失败, pivot为失败主元的0起始下标"""

    def __init__(self, pivot: int):
        self.pivot = pivot
        super().__init__(f"matrix is not positive definite (failed at pivot {pivot})")

    def __reduce__(self):
        return type(self), (self.pivot,)


class RankDeficientError(RtmDidError, np.linalg.LinAlgError):
    """设计矩阵列秩不足, column为第一个线性相关列"""

    def __init__(self, column: int):
        self.column = column
        super().__init__(f"design matrix is rank deficient (column {column} is collinear with earlier columns)")

    def __reduce__(self):
        return type(self), (self.column,)


class EstimationError(RtmDidError):
    """某个重标记(relabelling)下估计失败"""

    def __init__(self, unit_id: str, cause: BaseException):
        self.unit_id = unit_id
        self.cause = cause
        super().__init__(f"estimation failed with unit '{unit_id}' as treated: {cause}")

    def __reduce__(self):
        return type(self), (self.unit_id, self.cause)


class AnalysisError(RtmDidError):
    """观测数据分析流水线某一阶段失败"""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")

    def __reduce__(self):
        return type(self), (self.stage, self.cause)
