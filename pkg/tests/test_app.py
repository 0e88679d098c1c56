"""
コマンドラインと結果ファイルのテスト

サブコマンドの実行、終了コード、CSV/JSON の内容と再現性をテストする。
"""
import json
import math
import sys
import tempfile
from pathlib import Path

# プロジェクトルートをパスに追加
sys.path.insert(0, str(Path(__file__).parent.parent))

import jsonschema

import core.cir as cir_module
from app import EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, main
from integrations.result_writer import format_value, render_csv, to_json_safe


CONFIG_DIR = Path(__file__).parent.parent / "docs" / "configs"
SCHEMA = json.loads((Path(__file__).parent.parent / "docs" / "result_schema.json").read_text(encoding="utf-8"))


def test_format_value():
    """浮動小数は repr、真偽値は true/false"""
    test_cases = [
        (0.1, "0.1"),
        (16.305812540000001, repr(16.305812540000001)),
        (3, "3"),
        (True, "true"),
        (None, ""),
        (math.inf, "inf"),
        ("stable", "stable"),
    ]
    for value, expected in test_cases:
        assert format_value(value) == expected, f"{value!r}: 期待値{expected}, 実際{format_value(value)}"


def test_render_csv():
    """ヘッダー行つき、改行は LF、列数が合わなければエラー"""
    text = render_csv(["t", "N"], [[0.0, 1], [0.5, 2]])
    assert text == "t,N\n0.0,1\n0.5,2\n"
    try:
        render_csv(["t", "N"], [[0.0]])
        assert False, "ValueError が出るべき"
    except ValueError:
        pass


def test_to_json_safe():
    """NaN と ±∞ は null"""
    converted = to_json_safe({"a": math.nan, "b": [1.5, math.inf], "c": True})
    assert converted == {"a": None, "b": [1.5, None], "c": True}


def test_equilibria_run():
    """平衡点の実験は終了コード0で CSV と JSON を書き出す"""
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "eq"
        code = main(["equilibria", "--config", str(CONFIG_DIR / "equilibria_creation_off.json"), "--out", str(out)])
        assert code == EXIT_OK, f"終了コード {code}"

        lines = (Path(tmp) / "eq.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "value,stability,F,dF"
        assert len(lines) == 3
        assert lines[1].startswith("0.0,stable,")
        value, stability = lines[2].split(",")[:2]
        assert abs(float(value) - 16.3058) < 1e-4 and stability == "unstable"

        summary = json.loads((Path(tmp) / "eq.json").read_text(encoding="utf-8"))
        assert summary["schema_version"] == 1
        assert summary["experiment"] == "equilibria"
        assert summary["results"]["case_label"] == "creation_off_bistable"
        assert summary["failures"] == []
        assert summary["derived"]["creation_on"] is False
        assert len(summary["checksums"]["csv"]) == 64


def test_csv_is_reproducible():
    """同じ設定とシードなら CSV はバイト単位で一致する"""
    with tempfile.TemporaryDirectory() as tmp:
        outputs = []
        for name in ("first", "second"):
            out = Path(tmp) / name
            code = main(["ssa", "--config", str(CONFIG_DIR / "ssa_creation_off.json"), "--out", str(out), "--seed", "99"])
            assert code == EXIT_OK
            outputs.append((Path(tmp) / f"{name}.csv").read_bytes())
        assert outputs[0] == outputs[1]
        assert outputs[0].startswith(b"t,N,V\n0.0,16.0,")
        summary = json.loads((Path(tmp) / "first.json").read_text(encoding="utf-8"))
        assert summary["config"]["seed"] == 99


def test_validation_error_exit_code():
    """不正な設定は終了コード2で、結果ファイルは書かない"""
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "bad.json"
        data = json.loads((CONFIG_DIR / "equilibria_creation_off.json").read_text(encoding="utf-8"))
        data["model"]["gamma"] = -1.0
        data["output"] = str(Path(tmp) / "bad_out")
        path.write_text(json.dumps(data), encoding="utf-8")
        assert main(["equilibria", "--config", str(path)]) == EXIT_VALIDATION
        assert not (Path(tmp) / "bad_out.csv").exists()


def test_subcommand_mismatch():
    """サブコマンドと設定の実験名が違えば終了コード2"""
    with tempfile.TemporaryDirectory() as tmp:
        code = main(["ssa", "--config", str(CONFIG_DIR / "equilibria_creation_off.json"), "--out", str(Path(tmp) / "x")])
        assert code == EXIT_VALIDATION


def test_invalid_threads_and_seed():
    """--threads 0 や範囲外の --seed は終了コード2"""
    config = str(CONFIG_DIR / "equilibria_creation_off.json")
    with tempfile.TemporaryDirectory() as tmp:
        out = str(Path(tmp) / "x")
        assert main(["equilibria", "--config", config, "--out", out, "--threads", "0"]) == EXIT_VALIDATION
        assert main(["equilibria", "--config", config, "--out", out, "--seed", "-1"]) == EXIT_VALIDATION


def test_summary_matches_schema():
    """書き出したサマリーは docs/result_schema.json に従う"""
    with tempfile.TemporaryDirectory() as tmp:
        for name, experiment in (("equilibria_creation_off", "equilibria"), ("sde_symmetrized", "sde")):
            out = Path(tmp) / name
            code = main([experiment, "--config", str(CONFIG_DIR / f"{name}.json"), "--out", str(out)])
            assert code == EXIT_OK, f"{name}: 終了コード {code}"
            summary = json.loads((Path(tmp) / f"{name}.json").read_text(encoding="utf-8"))
            jsonschema.validate(summary, SCHEMA)


def test_spectral_root_failure_exit_code():
    """根が求まらなければ終了コード3で、失敗を載せたサマリーだけを書く"""
    original = cir_module.kummer_phi
    cir_module.kummer_phi = lambda s, b, z, control=None: math.nan
    try:
        with tempfile.TemporaryDirectory() as tmp:
            out = Path(tmp) / "lc"
            code = main(["laplace_check", "--config", str(CONFIG_DIR / "laplace_check.json"), "--out", str(out)])
            assert code == EXIT_NUMERICAL, f"終了コード {code}"
            assert not (Path(tmp) / "lc.csv").exists()
            summary = json.loads((Path(tmp) / "lc.json").read_text(encoding="utf-8"))
            assert summary["failures"][0]["error"] == "SpectralRootError"
            jsonschema.validate(summary, SCHEMA)
    finally:
        cir_module.kummer_phi = original


def run_tests():
    """全テストを実行"""
    tests = [
        test_format_value,
        test_render_csv,
        test_to_json_safe,
        test_equilibria_run,
        test_csv_is_reproducible,
        test_validation_error_exit_code,
        test_subcommand_mismatch,
        test_invalid_threads_and_seed,
        test_summary_matches_schema,
        test_spectral_root_failure_exit_code,
    ]

    passed = 0
    failed = 0

    for test in tests:
        try:
            test()
            print(f"[PASS] {test.__name__}")
            passed += 1
        except AssertionError as e:
            print(f"[FAIL] {test.__name__}: {e}")
            failed += 1
        except Exception as e:
            print(f"[FAIL] {test.__name__}: unexpected error - {e}")
            failed += 1

    print(f"\nResult: {passed}/{len(tests)} tests passed")

    return failed == 0


if __name__ == "__main__":
    success = run_tests()
    sys.exit(0 if success else 1)
