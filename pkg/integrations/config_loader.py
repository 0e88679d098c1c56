"""
実験設定ファイルの読み込み

JSON設定ファイルを厳格に読み込み、ExperimentConfig に変換する。
重複キー、NaN/Infinity リテラル、未知のキーはすべて拒否する。
"""
import json
import logging
from pathlib import Path
from typing import Union

from core.errors import ConfigValidationError
from models.experiment import ExperimentConfig

logger = logging.getLogger(__name__)


def _no_duplicates(pairs: list[tuple]) -> dict:
    data = {}
    for key, value in pairs:
        if key in data:
            raise ConfigValidationError(f"キーが重複しています: {key}", field=key)
        data[key] = value
    return data


def _reject_constant(name: str):
    raise ConfigValidationError(f"{name} は設定ファイルでは使えません")


def parse_config(text: str) -> ExperimentConfig:
    """
    JSON文字列から実験設定を生成する

    Raises:
        ConfigValidationError: JSONとして不正、または設定の検証に失敗した場合
    """
    try:
        data = json.loads(text, object_pairs_hook=_no_duplicates, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ConfigValidationError(f"JSONの解析に失敗しました: {e}")
    return ExperimentConfig.from_dict(data)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    設定ファイルを読み込む

    Args:
        path: UTF-8 の JSON ファイル

    Returns:
        ExperimentConfig: 検証済みの設定
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigValidationError(f"設定ファイルを読み込めません: {path} ({e})", field="config")
    config = parse_config(text)
    logger.info(f"設定を読み込みました: {path} ({config.experiment.value})")
    return config
