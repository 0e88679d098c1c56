"""
計算結果データモデル

軌道、アンサンブル統計、平衡点の分類、スペクトル展開、到達時間サンプルなど
各モジュールの出力を構造化して扱うためのデータクラスを定義する。
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np


class StopReason(Enum):
    """軌道の終了理由"""
    HORIZON = "horizon"
    REACHED_TARGET = "reached_target"
    EVENT_CAP = "event_cap"


@dataclass
class Trajectory:
    """
    区分定数（SSA）または離散化（ODE・SDE）された経路

    times は0から始まる狭義単調増加列、states は同じ長さの非負列。
    end_time は観測の終端（到達時刻またはホライズン）で、times[-1] 以上。
    """
    times: np.ndarray
    states: np.ndarray
    stopped_reason: StopReason
    end_time: float
    hit_time: Optional[float] = None     # 目標到達時刻（到達しなければ None）
    clipped_steps: int = 0               # 負への逸脱を0に丸めた回数（ODE）

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.times.shape != self.states.shape or self.times.ndim != 1 or self.times.size == 0:
            raise ValueError("times と states は同じ長さの1次元配列である必要があります")

    def __len__(self) -> int:
        return self.times.size

    @property
    def final_state(self) -> float:
        return float(self.states[-1])

    def state_at(self, t: float) -> float:
        """時刻 t の状態（右連続の区分定数補間）"""
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.states[max(idx, 0)])

    def sample(self, t_grid) -> np.ndarray:
        """時刻グリッド上の状態をまとめて取り出す"""
        idx = np.searchsorted(self.times, np.asarray(t_grid, dtype=float), side="right") - 1
        return self.states[np.clip(idx, 0, None)]

    def velocities(self, u: float, gamma: float) -> np.ndarray:
        """観測量 V = max(u − γN, 0)"""
        return np.maximum(u - gamma * self.states, 0.0)


@dataclass
class SummaryStats:
    """アンサンブルの要約統計"""
    mean: float
    variance: float
    stderr: float
    n_samples: int
    ks_stat: Optional[float] = None

    @classmethod
    def from_samples(cls, samples, ks_stat: Optional[float] = None) -> "SummaryStats":
        """
        サンプル列から不偏分散と標準誤差を計算する

        Args:
            samples: 1次元のサンプル列（1個以上）
            ks_stat: 付随するKS統計量（任意）
        """
        values = np.asarray(samples, dtype=float)
        n = values.size
        if n < 1:
            raise ValueError("サンプルが空です")
        mean = float(np.mean(values))
        variance = float(np.var(values, ddof=1)) if n > 1 else 0.0
        return cls(
            mean=mean,
            variance=variance,
            stderr=math.sqrt(variance / n),
            n_samples=n,
            ks_stat=ks_stat,
        )

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "variance": self.variance,
            "stderr": self.stderr,
            "n_samples": self.n_samples,
            "ks_stat": self.ks_stat,
        }


class Stability(Enum):
    """平衡点の安定性"""
    STABLE = "stable"
    UNSTABLE = "unstable"
    SEMISTABLE = "semistable"


@dataclass
class Equilibrium:
    """平衡点（value=+∞ は発散の目印）"""
    value: float
    stability: Stability

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.value)

    def to_dict(self) -> dict:
        return {
            "value": None if self.is_infinite else self.value,
            "infinite": self.is_infinite,
            "stability": self.stability.value,
        }


@dataclass
class EquilibriumReport:
    """
    極限ODE n' = F(n) の定常状態の分類結果

    equilibria は昇順（+∞ の目印は最後）。
    nbar は F' の (0, 2/(αγ)) 内の根が存在する場合のみ設定される。
    """
    equilibria: list[Equilibrium]
    case_label: str
    nbar: Optional[float] = None
    F_at_nbar: Optional[float] = None

    @property
    def finite_values(self) -> list[float]:
        return [e.value for e in self.equilibria if not e.is_infinite]

    @property
    def diverges(self) -> bool:
        return any(e.is_infinite for e in self.equilibria)

    def to_dict(self) -> dict:
        return {
            "case_label": self.case_label,
            "equilibria": [e.to_dict() for e in self.equilibria],
            "nbar": self.nbar,
            "F_at_nbar": self.F_at_nbar,
        }


class SpectralMode(Enum):
    """スペクトル展開の作り方"""
    EXACT_ROOTS = "exact_roots"
    ASYMPTOTIC = "asymptotic"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class SpectralExpansion:
    """
    初到達時間密度 f(t) = Σ o_n λ_n e^{−λ_n t} の係数

    eigenvalues は正で狭義単調増加。exact_count は厳密根から得た先頭項の個数。
    """
    eigenvalues: np.ndarray
    coefficients: np.ndarray
    mode: SpectralMode
    y: float                 # 出発水準
    x: float                 # 目標水準
    exact_count: int = 0

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        coef = np.asarray(self.coefficients, dtype=float)
        if lam.ndim != 1 or lam.size < 1 or lam.shape != coef.shape:
            raise ValueError("固有値と係数は同じ長さ（1以上）である必要があります")
        if not np.all(lam > 0) or not np.all(np.diff(lam) > 0):
            raise ValueError("固有値は正で狭義単調増加である必要があります")
        lam.setflags(write=False)
        coef.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "coefficients", coef)

    @property
    def n_terms(self) -> int:
        return int(self.eigenvalues.size)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "y": self.y,
            "x": self.x,
            "exact_count": self.exact_count,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "coefficients": [float(v) for v in self.coefficients],
        }


class ZeroHitClass(Enum):
    """CIR過程が有限時間で0に到達する確率の分類"""
    CERTAIN = "certain"
    POSITIVE_PROBABILITY = "positive_probability"
    NEVER = "never"


@dataclass
class HittingTimeResult:
    """
    モンテカルロ到達時間サンプル

    times は経路番号順で、打ち切り（ホライズンまで未到達）の経路は NaN。
    すべて打ち切りの場合 stats は None。
    """
    times: np.ndarray
    n_censored: int
    horizon: float
    stats: Optional[SummaryStats] = None

    @property
    def observed(self) -> np.ndarray:
        return self.times[~np.isnan(self.times)]

    @property
    def censored_fraction(self) -> float:
        return self.n_censored / self.times.size if self.times.size else 0.0

    @property
    def all_censored(self) -> bool:
        return self.stats is None

    def to_dict(self) -> dict:
        return {
            "n_paths": int(self.times.size),
            "n_censored": self.n_censored,
            "censored_fraction": self.censored_fraction,
            "horizon": self.horizon,
            "stats": None if self.stats is None else self.stats.to_dict(),
        }


@dataclass(frozen=True)
class BerkaouiCheck:
    """対称化オイラー法の強収束条件の判定結果"""
    valid: bool
    lhs: float                 # (a/4)(c/a − 1)²
    threshold: float           # max(3P, 8a)
    lhs_margin: float          # lhs − threshold
    dt_margin: float           # 1/(2P) − dt
    near_threshold: bool = False

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "lhs": self.lhs,
            "threshold": self.threshold,
            "lhs_margin": self.lhs_margin,
            "dt_margin": self.dt_margin,
            "near_threshold": self.near_threshold,
        }


@dataclass
class MartingaleSummary:
    """
    補償過程 M_t = N_t − N_0 − ∫(λ−μ)ds のアンサンブル検査結果

    M_t の平均は0、分散は ∫(λ+μ)ds の平均に一致するはず。
    """
    t: float
    mean: float
    stderr: float
    variance: float
    quadratic_variation_mean: float
    n_samples: int

    @property
    def variance_gap(self) -> float:
        """分散と二次変分平均の相対差"""
        if self.quadratic_variation_mean == 0:
            return abs(self.variance)
        return abs(self.variance - self.quadratic_variation_mean) / self.quadratic_variation_mean

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "mean": self.mean,
            "stderr": self.stderr,
            "variance": self.variance,
            "quadratic_variation_mean": self.quadratic_variation_mean,
            "variance_gap": self.variance_gap,
            "n_samples": self.n_samples,
        }


@dataclass
class WeakConvergenceCheck:
    """
    刻み幅 dt, dt/2, dt/4 でのアンサンブル平均

    弱1次の手法なら (m_dt − m_dt/2) / (m_dt/2 − m_dt/4) ≈ 2。
    """
    dts: tuple[float, float, float]
    means: tuple[float, float, float]
    stderrs: tuple[float, float, float]

    @property
    def bias_estimate(self) -> float:
        """刻み dt でのバイアスの推定 2(m_dt − m_dt/2)"""
        return 2 * (self.means[0] - self.means[1])

    @property
    def richardson(self) -> float:
        """外挿値 2·m_dt/4 − m_dt/2"""
        return 2 * self.means[2] - self.means[1]

    def self_converged(self, k: float = 4.0) -> bool:
        """
        3点の自己収束の検査

        dt/2 と dt/4 の平均の差が、dt でのバイアスの推定（統計誤差 k 倍の幅つき）より小さいか。
        """
        noise = k * math.hypot(self.stderrs[1], self.stderrs[2])
        return abs(self.means[1] - self.means[2]) <= abs(self.bias_estimate) + noise

    def to_dict(self) -> dict:
        return {
            "dts": list(self.dts),
            "means": list(self.means),
            "stderrs": list(self.stderrs),
            "bias_estimate": self.bias_estimate,
            "richardson": self.richardson,
            "self_converged": self.self_converged(),
        }


@dataclass
class SweepPoint:
    """流速スイープの1点（失敗した点は tau=NaN でエラー内容を保持）"""
    u: float
    n_star: float
    tau: float
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        return {"u": self.u, "n_star": self.n_star, "tau": None if not self.ok else self.tau, "error": self.error}
