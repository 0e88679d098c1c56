"""
モデルパラメータ

接着モデルのスカラー定数、スケーリング則、CIR特化パラメータをデータクラスで定義する。
生成時に不変条件を検査し、違反があれば ParameterError を送出する。
"""
import math
from dataclasses import dataclass, asdict, replace
from enum import Enum
from typing import Optional

from core.errors import ParameterError


def _check_finite(name: str, value: float) -> None:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise ParameterError(f"{name} は有限の実数である必要があります: {value}")


@dataclass(frozen=True)
class ModelParams:
    """
    接着モデルのパラメータ

    単位は時間・長さとも任意（一貫していればよい）。
    u_star を省略すると +∞（生成は常にオン）として扱う。
    """
    u: float                        # 流速 (≥0)
    gamma: float                    # 結合1本あたりの摩擦係数 (>0)
    c: float                        # 自発的な結合生成率 (≥0)
    r: float                        # 結合1本あたりの増殖率 (≥0)
    d: float                        # 無負荷時の解離率 (>0)
    alpha: float                    # 解離の力感受性 (≥0)
    u_star: float = math.inf        # 生成の閾値速度 (≥0, +∞可)
    a: float = 0.0                  # 人口学的ノイズ強度 (≥0、拡散系の演算のみで使用)

    def __post_init__(self):
        for name in ("u", "gamma", "c", "r", "d", "alpha", "a"):
            _check_finite(name, getattr(self, name))
        if math.isnan(self.u_star) or self.u_star < 0:
            raise ParameterError(f"u_star は0以上である必要があります: {self.u_star}")
        for name in ("u", "c", "r", "alpha", "a"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} は0以上である必要があります: {getattr(self, name)}")
        if self.gamma <= 0:
            raise ParameterError(f"gamma は正である必要があります: {self.gamma}")
        if self.d <= 0:
            raise ParameterError(f"d は正である必要があります: {self.d}")

    @property
    def n_star(self) -> float:
        """速度が0になる結合数 u/γ"""
        return self.u / self.gamma

    @property
    def creation_on(self) -> bool:
        """生成の指示関数 [u ≤ u*]"""
        return self.u <= self.u_star

    @property
    def effective_c(self) -> float:
        """指示関数を掛けた生成率"""
        return self.c if self.creation_on else 0.0

    def with_(self, **changes) -> "ModelParams":
        """一部のフィールドを置き換えた新しいパラメータを返す"""
        return replace(self, **changes)

    def to_dict(self) -> dict:
        """辞書形式に変換（u_star=+∞ は None）"""
        data = asdict(self)
        if math.isinf(self.u_star):
            data["u_star"] = None
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        """辞書から生成（u_star が None/欠落なら +∞）"""
        values = dict(data)
        if values.get("u_star") is None:
            values["u_star"] = math.inf
        return cls(**values)


class RegimeKind(Enum):
    """再正規化のスケーリング則"""
    ACCELERATED_CREATION = "accelerated_creation"
    NON_ACCELERATED = "non_accelerated"
    ACCELERATED_DEMOGRAPHY = "accelerated_demography"


@dataclass(frozen=True)
class ScalingRegime:
    """再正規化過程 X^K = N^K / K のスケーリング"""
    kind: RegimeKind
    K: int = 1                      # スケールパラメータ (≥1)
    eta: Optional[float] = None     # 加速指数 (0,1]（accelerated_demography のみ）

    def __post_init__(self):
        if not isinstance(self.kind, RegimeKind):
            raise ParameterError(f"無効なスケーリング則: {self.kind}")
        if isinstance(self.K, bool) or not isinstance(self.K, int) or self.K < 1:
            raise ParameterError(f"K は1以上の整数である必要があります: {self.K}")
        if self.kind is RegimeKind.ACCELERATED_DEMOGRAPHY:
            if self.eta is None or not (0 < self.eta <= 1):
                raise ParameterError(f"eta は (0, 1] にある必要があります: {self.eta}")
        elif self.eta is not None and not (0 < self.eta <= 1):
            raise ParameterError(f"eta は (0, 1] にある必要があります: {self.eta}")

    def scaled_rates(self, p: ModelParams) -> tuple[float, float, float]:
        """
        スケーリング後の (生成率, 増殖率, 解離の加算分) を返す

        解離係数は d(x)+加算分 として使う。
        """
        c = p.effective_c
        if self.kind is RegimeKind.ACCELERATED_CREATION:
            return self.K * c, p.r, 0.0
        if self.kind is RegimeKind.NON_ACCELERATED:
            return c, p.r, 0.0
        boost = self.K ** self.eta * p.a
        return self.K * c, p.r + boost, boost

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "K": self.K, "eta": self.eta}

    @classmethod
    def from_dict(cls, data: dict) -> "ScalingRegime":
        try:
            kind = RegimeKind(data["kind"])
        except (KeyError, ValueError):
            raise ParameterError(f"無効なスケーリング則: {data.get('kind')}")
        return cls(kind=kind, K=data.get("K", 1), eta=data.get("eta"))


@dataclass(frozen=True)
class CirParams:
    """
    定数レート（CIR過程）のパラメータ

    dN = (c + (r−d)N) dt + √(2aN) dB
    """
    c: float
    a: float
    r: float
    d: float

    def __post_init__(self):
        for name in ("c", "a", "r", "d"):
            _check_finite(name, getattr(self, name))
        if self.c <= 0:
            raise ParameterError(f"c は正である必要があります: {self.c}")
        if self.a <= 0:
            raise ParameterError(f"a は正である必要があります: {self.a}")
        if self.r < 0 or self.d < 0:
            raise ParameterError(f"r, d は0以上である必要があります: r={self.r}, d={self.d}")

    @property
    def delta(self) -> float:
        """次元 δ = 2c/a"""
        return 2 * self.c / self.a

    @property
    def kappa(self) -> float:
        """平均回帰率 κ = (d−r)/2"""
        return (self.d - self.r) / 2

    @property
    def nu(self) -> float:
        """指数 ν = c/a − 1"""
        return self.c / self.a - 1

    @property
    def has_stationary_law(self) -> bool:
        return self.r < self.d

    def scaled_level(self, x: float) -> float:
        """水準 x を x̄ = (d−r)x/a に写す"""
        return (self.d - self.r) * x / self.a

    @classmethod
    def from_model(cls, p: ModelParams) -> "CirParams":
        """α=0 の一般モデルとして CIR パラメータを取り出す"""
        return cls(c=p.effective_c, a=p.a, r=p.r, d=p.d)

    def to_dict(self) -> dict:
        return asdict(self)
