import csv

from mlinucb.cli import main


def test_fetch_instructions(capsys):
    assert main(["fetch-instructions"]) == 0
    assert "CNAE-9.data" in capsys.readouterr().out


def test_run_writes_outputs(tmp_path, capsys):
    rc = main(["run", "--dataset", "synthetic", "--algo", "mlinucb", "--clusters", "3",
               "--missing-rate", "0.5", "--seeds", "2", "--out-dir", str(tmp_path)])
    assert rc == 0
    rows = list(csv.DictReader((tmp_path / "summary.csv").open()))
    assert len(rows) == 1 and rows[0]["seeds"] == "2" and rows[0]["N"] == "3"
    assert len(list(tmp_path.glob("rounds-*.ndjson"))) == 2
    assert len(list(tmp_path.glob("bound-*.csv"))) == 2
    assert "accuracy=" in capsys.readouterr().out


def test_run_from_config_file_and_csv_format(tmp_path):
    conf = tmp_path / "c.yaml"
    conf.write_text("dataset: synthetic\nalgorithm: linucb\nsynth_rounds: 50\nmissing_rate: 0.1\n")
    rc = main(["run", "--config", str(conf), "--missing-rate", "0.75", "--format", "csv",
               "--out-dir", str(tmp_path / "o")])
    assert rc == 0
    rows = list(csv.DictReader((tmp_path / "o" / "summary.csv").open()))
    assert rows[0]["algo"] == "linucb" and rows[0]["missing_rate"] == "0.75"
    (rounds,) = (tmp_path / "o").glob("rounds-*.csv")
    assert len(rounds.read_text().splitlines()) == 51


def test_sweep_grid(tmp_path):
    conf = tmp_path / "c.yaml"
    conf.write_text("dataset: synthetic\nsynth_rounds: 60\n")
    rc = main(["sweep", "--config", str(conf), "--clusters", "2", "5", "--missing-rate", "0.1", "0.5",
               "--out-dir", str(tmp_path / "o")])
    assert rc == 0
    rows = list(csv.DictReader((tmp_path / "o" / "summary.csv").open()))
    assert len(rows) == 6


def test_pca_command(tmp_path, capsys):
    rc = main(["pca", "--dataset", "synthetic", "--clusters", "4", "--out-dir", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "pca-synthetic.csv").exists()
    assert "variance fraction" in capsys.readouterr().out


def test_full_recluster_flag(tmp_path):
    conf = tmp_path / "c.yaml"
    conf.write_text("dataset: synthetic\nsynth_rounds: 60\n")
    assert main(["run", "--config", str(conf), "--full-recluster", "--out-dir", str(tmp_path / "o")]) == 0
