"""
例外クラス定義

ツールキット全体で使う例外の階層を定義する。
呼び出し側は AdhesionModelError を捕捉すればすべての独自例外を扱える。
"""
from typing import Optional


class AdhesionModelError(Exception):
    """ツールキット独自例外の基底クラス"""


class DomainError(AdhesionModelError, ValueError):
    """引数が演算の定義域外（極、負の密度、r ≥ d での定常分布など）"""


class ParameterError(DomainError):
    """ModelParams / ScalingRegime / CirParams の不変条件違反"""


class ConvergenceError(AdhesionModelError, ArithmeticError):
    """
    級数・反復が上限に達しても収束しなかった

    Attributes:
        partial_value: 打ち切り時点の部分和
        n_terms: 評価した項数
    """

    def __init__(self, message: str, partial_value: float = float("nan"), n_terms: int = 0):
        super().__init__(message)
        self.partial_value = partial_value
        self.n_terms = n_terms


class SpectralRootError(AdhesionModelError, ArithmeticError):
    """クンマー関数の根を囲い込めなかった（index は1始まり）"""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class ConfigValidationError(AdhesionModelError, ValueError):
    """実験設定ファイルの検証エラー"""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field
