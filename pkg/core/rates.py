"""
レート・ドリフト・拡散係数の計算

結合の生成率 λ(n)、解離率 μ(n)、細胞速度 V、極限SDEのドリフト b(n) と
拡散係数 σ(n) を計算する。すべてのモジュールがここを共有する。

解離の指数は n > n* で0に切り詰める（速度が0になった後もレートを全域で定義するため）。
"""
import math

import numpy as np

from core.errors import DomainError
from models.params import ModelParams


def velocity(n: float, p: ModelParams) -> float:
    """細胞速度 V = max(u − γn, 0)"""
    return max(p.u - p.gamma * n, 0.0)


def death_coefficient(n: float, p: ModelParams) -> float:
    """結合1本あたりの解離率 d·e^{α·max(u−γn, 0)}"""
    return p.d * math.exp(p.alpha * velocity(n, p))


def birth_rate(n: float, p: ModelParams) -> float:
    """
    生成率 λ(n) = c·[u ≤ u*] + r·n

    Args:
        n: 結合数 (≥0)
        p: モデルパラメータ

    Returns:
        float: 非負のレート
    """
    return p.effective_c + p.r * n


def death_rate(n: float, p: ModelParams) -> float:
    """解離率 μ(n) = n·d·e^{α·max(u−γn, 0)}"""
    if n == 0:
        return 0.0
    return n * death_coefficient(n, p)


def drift(n: float, p: ModelParams) -> float:
    """極限SDEのドリフト b(n) = c·[u≤u*] + (r − d(n))·n"""
    return p.effective_c + (p.r - death_coefficient(n, p)) * n


def diffusion_coeff(n: float, p: ModelParams) -> float:
    """
    拡散係数 σ(n) = √(2an)

    Raises:
        DomainError: n < 0 の場合
    """
    if n < 0:
        raise DomainError(f"拡散係数は n ≥ 0 でのみ定義されます: {n}")
    return math.sqrt(2 * p.a * n)


def linear_bounds(p: ModelParams) -> tuple[float, float, float]:
    """レートの線形上界 (C̄, R̄, D̄) = (c, r, d·e^{αu})"""
    return p.c, p.r, p.d * math.exp(p.alpha * p.u)


# --- 配列版（オイラー法・ODE用） ---

def velocity_array(n: np.ndarray, p: ModelParams) -> np.ndarray:
    return np.maximum(p.u - p.gamma * n, 0.0)


def drift_array(n: np.ndarray, p: ModelParams) -> np.ndarray:
    """drift のベクトル版"""
    return p.effective_c + (p.r - p.d * np.exp(p.alpha * velocity_array(n, p))) * n


def comparison_models(p: ModelParams) -> tuple[ModelParams, ModelParams, ModelParams]:
    """
    比較原理の3モデル (解離率 d 一定, 一般モデル, 解離率 d·e^{αu} 一定)

    解離が小さいほど経路は上にあり、n* への到達は早い。
    """
    _, _, d_max = linear_bounds(p)
    return p.with_(alpha=0.0), p, p.with_(alpha=0.0, d=d_max)
