"""
設定・環境変数管理

このファイルは環境変数を読み込み、ツールキット全体で使う数値設定の既定値を提供する。
他のモジュールから `from config import Config` でインポートして使用する。
実験ごとの設定（モデルパラメータ等）はJSON設定ファイルで与え、ここでは扱わない。
"""
import math
import os

from dotenv import load_dotenv

# .envファイルを読み込む
load_dotenv()


class Config:
    """ツールキット設定クラス"""

    # 確率シミュレーション（SSA）設定
    SSA_EVENT_CAP: int = int(os.getenv("SSA_EVENT_CAP", "10000000"))  # 1パスあたりのイベント上限

    # 特殊関数の級数設定
    SERIES_REL_TOL: float = float(os.getenv("SERIES_REL_TOL", "1e-14"))
    SERIES_MAX_TERMS: int = int(os.getenv("SERIES_MAX_TERMS", "10000"))
    # 最大項/和 がこの比を超えたら拡張精度で再計算する
    KUMMER_CANCELLATION_LIMIT: float = float(os.getenv("KUMMER_CANCELLATION_LIMIT", "1e3"))

    # 数値積分設定
    QUAD_REL_TOL: float = float(os.getenv("QUAD_REL_TOL", "1e-9"))
    QUAD_ABS_TOL: float = float(os.getenv("QUAD_ABS_TOL", "1e-8"))
    QUAD_LIMIT: int = int(os.getenv("QUAD_LIMIT", "200"))
    CHEBYSHEV_NODES: int = int(os.getenv("CHEBYSHEV_NODES", "64"))

    # 拡散近似（オイラー法）設定
    HITTING_DT: float = float(os.getenv("HITTING_DT", "1e-3"))
    CENSOR_HORIZON: float = float(os.getenv("CENSOR_HORIZON", "1e4"))
    EULER_BLOCK: int = int(os.getenv("EULER_BLOCK", "4096"))  # パスごとに一度に引く正規乱数の個数

    # スペクトル展開設定
    SPECTRAL_TERMS: int = int(os.getenv("SPECTRAL_TERMS", "50"))

    # 実行設定
    DEFAULT_THREADS: int = int(os.getenv("DEFAULT_THREADS", "1"))
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")

    @classmethod
    def validate(cls) -> list[str]:
        """
        設定値が有効範囲にあるかチェックする。

        Returns:
            list[str]: 範囲外の設定名のリスト（空なら問題なし）
        """
        errors = []
        if cls.SSA_EVENT_CAP < 1:
            errors.append("SSA_EVENT_CAP")
        if not (0 < cls.SERIES_REL_TOL < 1):
            errors.append("SERIES_REL_TOL")
        if cls.SERIES_MAX_TERMS < 1:
            errors.append("SERIES_MAX_TERMS")
        if not cls.KUMMER_CANCELLATION_LIMIT > 1:
            errors.append("KUMMER_CANCELLATION_LIMIT")
        if not (0 < cls.QUAD_REL_TOL < 1):
            errors.append("QUAD_REL_TOL")
        if cls.QUAD_ABS_TOL < 0:
            errors.append("QUAD_ABS_TOL")
        if cls.QUAD_LIMIT < 1:
            errors.append("QUAD_LIMIT")
        if cls.CHEBYSHEV_NODES < 4:
            errors.append("CHEBYSHEV_NODES")
        if not (cls.HITTING_DT > 0 and math.isfinite(cls.HITTING_DT)):
            errors.append("HITTING_DT")
        if not cls.CENSOR_HORIZON > 0:
            errors.append("CENSOR_HORIZON")
        if cls.EULER_BLOCK < 1:
            errors.append("EULER_BLOCK")
        if cls.SPECTRAL_TERMS < 1:
            errors.append("SPECTRAL_TERMS")
        if cls.DEFAULT_THREADS < 1:
            errors.append("DEFAULT_THREADS")
        if cls.LOG_LEVEL.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            errors.append("LOG_LEVEL")
        return errors
