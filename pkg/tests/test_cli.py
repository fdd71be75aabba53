import json

import pytest

from wcpg.cli import config_hash, load_config_file, main, write_csv


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert main(["train", "--episodes", "2", "--seed", "3", "--out", str(out)]) == 0
    return out


def test_train_outputs(trained):
    assert (trained / "train_log.csv").read_text().startswith("episode,")
    assert (trained / "checkpoint").is_dir()
    manifest = json.loads((trained / "run.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["config_hash"] == config_hash(manifest["config"])
    assert manifest["config"]["train"]["seed"] == 3


def test_train_rerun_is_byte_identical(trained, tmp_path):
    assert main(["train", "--episodes", "2", "--seed", "3", "--out", str(tmp_path)]) == 0
    assert _files(trained) == _files(tmp_path)


def test_eval_rerun_is_byte_identical(trained, tmp_path):
    args = ["eval", "--checkpoint", str(trained / "checkpoint"), "--trials", "3", "--alpha", "0.1", "--alpha", "1.0"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    assert a == b and set(a) == {"eval_records.csv", "eval_summary.csv", "run.json"}
    assert len(a["eval_summary.csv"].decode().splitlines()) == 3


def test_trace_and_sweep(trained, tmp_path):
    ck = str(trained / "checkpoint")
    assert main(["trace", "--checkpoint", ck, "--out", str(tmp_path)]) == 0
    assert "critic_sigma" in (tmp_path / "trace.csv").read_text().splitlines()[0]
    assert main(["alpha-sweep", "--checkpoint", ck, "--alpha", "0.5", "--trials", "2", "--out", str(tmp_path)]) == 0
    assert len((tmp_path / "alpha_sweep.csv").read_text().splitlines()) == 2


def test_oracle(tmp_path, capsys):
    assert main(["oracle", "--trials", "2000", "--grid", "8", "--alpha", "0.05", "--alpha", "1.0",
                 "--out", str(tmp_path)]) == 0
    assert "crossover alpha" in capsys.readouterr().out
    assert len((tmp_path / "oracle.csv").read_text().splitlines()) == 3


def test_gradcheck_exit_code(tmp_path):
    assert main(["gradcheck", "--points", "1", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "gradcheck.csv").read_text().splitlines()
    assert rows[0].startswith("component") and len(rows) == 5


def test_eval_requires_checkpoint(tmp_path):
    with pytest.raises(SystemExit):
        main(["eval", "--out", str(tmp_path)])


def test_unknown_command():
    with pytest.raises(SystemExit):
        main(["fly"])


def test_config_file_forms(tmp_path):
    flat = tmp_path / "flat.json"
    flat.write_text(json.dumps({"scenario": "merge", "spawn_rate": 0.05}))
    assert load_config_file(str(flat)) == {"scenario": {"scenario": "merge", "spawn_rate": 0.05}}
    nested = tmp_path / "nested.json"
    nested.write_text(json.dumps({"train": {"episodes": 1}}))
    assert load_config_file(str(nested)) == {"train": {"episodes": 1}}
    bad = tmp_path / "bad.json"
    bad.write_text("[1]")
    with pytest.raises(ValueError):
        load_config_file(str(bad))


def test_write_csv_float_repr(tmp_path):
    write_csv(tmp_path / "x.csv", [{"a": 0.1, "b": True, "c": "s"}])
    assert (tmp_path / "x.csv").read_text() == "a,b,c\n0.1,1,s\n"


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})


def test_train_checkpoint_independent_of_out_dir(trained, tmp_path):
    assert main(["train", "--episodes", "2", "--seed", "3", "--out", str(tmp_path)]) == 0
    assert _files(trained / "checkpoint") == _files(tmp_path / "checkpoint")
