"""
データモデルパッケージ

モデルパラメータ、計算結果、実験設定のデータ構造を定義する。
"""
from models.params import ModelParams, ScalingRegime, RegimeKind, CirParams
from models.results import Trajectory, SummaryStats, EquilibriumReport, SpectralExpansion, HittingTimeResult
from models.experiment import ExperimentConfig, ExperimentKind, ExperimentResult, Numerics

__all__ = [
    "ModelParams",
    "ScalingRegime",
    "RegimeKind",
    "CirParams",
    "Trajectory",
    "SummaryStats",
    "EquilibriumReport",
    "SpectralExpansion",
    "HittingTimeResult",
    "ExperimentConfig",
    "ExperimentKind",
    "ExperimentResult",
    "Numerics",
]
