import json

import pytest

from privcgd.cli import main


@pytest.fixture
def chain_files(tmp_path):
    data = tmp_path / "data.csv"
    truth = tmp_path / "truth.txt"
    assert main(["sample", "--chain", "4", "--n", "2000", "--out", str(data), "--truth-out", str(truth)]) == 0
    return data, truth


def test_skeleton_and_eval(chain_files, tmp_path):
    data, truth = chain_files
    report = tmp_path / "r.json"
    assert main(["skeleton", "--data", str(data), "--truth", str(truth), "--epsilon-total", "5", "--out", str(report)]) == 0
    obj = json.loads(report.read_text())
    assert obj["format_version"] == 1 and obj["epsilon_total_spent"] <= 5
    scored = tmp_path / "e.json"
    assert main(["eval", "--estimate", str(report), "--truth", str(truth), "--out", str(scored)]) == 0
    assert json.loads(scored.read_text())["f1"] == obj["f1"]


def test_score_csv(chain_files, tmp_path):
    data, truth = chain_files
    out = tmp_path / "s.csv"
    code = main(["score", "--data", str(data), "--truth", str(truth), "--eps0", "2", "--iters", "10",
                 "--epsilon-total", "100", "--format", "csv", "--out", str(out)])
    assert code == 0
    assert out.read_text().startswith("format_version,pipeline,mode")


def test_budget_plan(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["budget-plan", "--epsilon-total", "10", "--eps0", "1", "--format", "csv", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "schedule,I,k,eps_k,cumulative"
    additive = [r.split(",") for r in rows[1:] if r.startswith("additive")]
    assert len(additive) == 7 and float(additive[-1][4]) == pytest.approx(10.0)


def test_config_errors_exit_2(chain_files, capsys):
    data, _ = chain_files
    assert main(["skeleton", "--data", str(data), "--q", "2"]) == 2
    assert main(["budget-plan", "--epsilon-total", "1", "--eps0", "0"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["skeleton", "--mode", "bogus"])
    assert exc.value.code == 2


def test_data_errors_exit_3(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,\n")
    assert main(["skeleton", "--data", str(bad)]) == 3
    assert main(["skeleton", "--data", str(tmp_path / "missing.csv")]) == 3
    assert main(["sample", "--network", "nope"]) == 3


def test_truncated_run_exits_4(chain_files):
    data, _ = chain_files
    # delta' alone uses up delta_total after order 0
    assert main(["skeleton", "--data", str(data), "--delta-total", "1e-12"]) == 4


def test_sweep_cli(tmp_path):
    out = tmp_path / "sum.csv"
    code = main(["sweep", "--epsilons", "1", "10", "--seeds", "2", "--n", "300", "--d", "3",
                 "--format", "csv", "--out", str(out), "--reports", str(tmp_path / "runs")])
    assert code == 0
    assert len(out.read_text().splitlines()) == 3
    assert len(list((tmp_path / "runs").glob("*.json"))) == 4


def test_score_budget_too_small_exits_2(chain_files):
    data, _ = chain_files
    assert main(["score", "--data", str(data), "--iters", "50", "--eps0", "0.5", "--epsilon-total", "10"]) == 2
