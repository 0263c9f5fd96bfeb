import csv
import shutil
from pathlib import Path

import pytest

from mcnet_sim.cli import main
from mcnet_sim.experiment import ARTIFACTS

PUBLISHED = Path(__file__).parent / "fixtures" / "published"
SHORT = ["--duration", "0.01", "--set", "drain_s=0.01"]


def test_run_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["run", "--config", "isolated", "--payload", "512", "--interference", "off",
                 "--out", str(out), *SHORT])
    assert code == 0
    for name in ARTIFACTS + ("scenario.txt",):
        assert (out / name).is_file(), name
    assert "isolated_512B_off" in capsys.readouterr().out
    assert "payload=512" in (out / "scenario.txt").read_text()


def test_run_from_scenario_file_with_dotted_override(tmp_path):
    scen = tmp_path / "s.txt"
    scen.write_text("config=baseline\npayload=64\n")
    out = tmp_path / "run"
    code = main(["run", "--scenario", str(scen), "--nic.coalescing_us", "0", "--trace",
                 "--out", str(out), *SHORT])
    assert code == 0
    text = (out / "scenario.txt").read_text()
    assert "nic.coalescing_us=0" in text and "config=baseline" in text
    assert (out / "trace.csv").read_text().startswith("0,")


def test_missing_scenario_file_exits_2(tmp_path):
    assert main(["run", "--scenario", str(tmp_path / "nope.txt")]) == 2


@pytest.mark.parametrize("args", [
    ["run", "--set", "nic.unknown=1"],
    ["run", "--nic.unknown", "1"],
    ["run", "--config", "baseline", "--set", "fastpath=on"],
    ["run", "--set", "novalue"],
])
def test_config_errors_exit_2(args, capsys):
    assert main(args) == 2
    assert "error" in capsys.readouterr().err


def test_verify_exit_codes(tmp_path):
    good = tmp_path / "good"
    shutil.copytree(PUBLISHED, good)
    assert main(["verify", str(good)]) == 0
    assert "Overall: PASS" in (good / "trends.md").read_text()

    bad = tmp_path / "bad"
    shutil.copytree(PUBLISHED, bad)
    (bad / "isolated" / "summary.csv").unlink()
    assert main(["verify", str(bad)]) == 1
    assert main(["verify", str(tmp_path / "absent")]) == 2


def test_sweep_all_writes_twelve_rows(tmp_path):
    out = tmp_path / "sweep"
    main(["sweep", "--all", "--out", str(out), *SHORT])
    rows = []
    for config in ("baseline", "isolated"):
        with open(out / config / "summary.csv") as fh:
            rows += list(csv.DictReader(fh))
        assert len(list((out / config).glob("*/summary.csv"))) == 6
    assert len(rows) == 12
    assert (out / "report.md").is_file()
