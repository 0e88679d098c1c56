"""
外部とのファイル入出力パッケージ

実験設定（JSON）の読み込みと、結果（CSV・JSONサマリー）の書き出しを担当する。
"""
from integrations.config_loader import load_config, parse_config
from integrations.result_writer import ResultWriter, render_csv

__all__ = [
    "load_config",
    "parse_config",
    "ResultWriter",
    "render_csv",
]
