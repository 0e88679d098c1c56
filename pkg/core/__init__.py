"""
コアロジックパッケージ

接着モデルのレート計算、確率シミュレーション、極限方程式、CIR解析、
停止時間の求積など主要な数値ロジックを提供する。

各モジュールは `from core.ssa import simulate_ssa` のように直接インポートして使う。
ここでは例外クラスのみ再エクスポートする（models からも参照されるため）。
"""
from core.errors import (
    AdhesionModelError,
    DomainError,
    ParameterError,
    ConvergenceError,
    SpectralRootError,
    ConfigValidationError,
)

__all__ = [
    "AdhesionModelError",
    "DomainError",
    "ParameterError",
    "ConvergenceError",
    "SpectralRootError",
    "ConfigValidationError",
]
