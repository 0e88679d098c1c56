"""
結果ファイルの書き出し

実験結果を <prefix>.csv（ヘッダー行つきのデータ）と <prefix>.json（サマリー）に書き出す。
浮動小数は最短の往復可能な10進表現（repr）で書くので、同じ設定とシードなら
CSV はバイト単位で一致する。
"""
import csv
import hashlib
import io
import json
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Optional, Union

import numpy as np

from models.experiment import ExperimentConfig, ExperimentResult

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def format_value(value) -> str:
    """CSVの1セルを文字列にする"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, Enum):
        return str(value.value)
    return str(value)


def render_csv(columns: list[str], rows: list[list]) -> str:
    """ヘッダー行つきのCSV文字列を作る（改行は LF）"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"列数が一致しません: {len(row)} != {len(columns)}")
        writer.writerow([format_value(v) for v in row])
    return buffer.getvalue()


def to_json_safe(value):
    """JSON に書けない値（NaN, ±∞, numpy 型, Enum）を変換する"""
    if isinstance(value, dict):
        return {str(k): to_json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [to_json_safe(v) for v in value]
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


class ResultWriter:
    """CSV と JSON サマリーを同じ接頭辞で書き出す"""

    def __init__(self, prefix: Union[str, Path]):
        self.prefix = Path(prefix)

    @property
    def csv_path(self) -> Path:
        return self.prefix.with_name(self.prefix.name + ".csv")

    @property
    def summary_path(self) -> Path:
        return self.prefix.with_name(self.prefix.name + ".json")

    def write(self, config: ExperimentConfig, result: Optional[ExperimentResult], runtime_seconds: float,
              failures: Optional[list[dict]] = None) -> dict:
        """
        結果を書き出してサマリーの辞書を返す

        result が None（実験全体が失敗）のときは CSV を書かず、サマリーだけを書く。

        Args:
            config: 実行した設定（サマリーにそのまま載せる）
            result: 実験結果
            runtime_seconds: 実行時間
            failures: result 以外で記録する失敗
        """
        self.prefix.parent.mkdir(parents=True, exist_ok=True)
        checksums = {}
        if result is not None:
            data = render_csv(result.columns, result.rows).encode("utf-8")
            self.csv_path.write_bytes(data)
            checksums["csv"] = hashlib.sha256(data).hexdigest()
            logger.info(f"CSVを書き出しました: {self.csv_path} ({len(result.rows)}行)")

        summary = {
            "schema_version": SCHEMA_VERSION,
            "experiment": config.experiment.value,
            "config": config.to_dict(),
            "derived": result.derived if result is not None else {},
            "results": result.results if result is not None else {},
            "failures": (result.failures if result is not None else []) + list(failures or []),
            "runtime_seconds": runtime_seconds,
            "checksums": checksums,
        }
        summary = to_json_safe(summary)
        self.summary_path.write_text(json.dumps(summary, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
        logger.info(f"サマリーを書き出しました: {self.summary_path}")
        return summary
