import json

import numpy as np
import pytest

from patternmark import build_partition
from patternmark.cli import main
from patternmark.formats import (
    config_from_kv,
    config_to_kv,
    read_kv,
    read_partition,
    read_sequences,
    write_kv,
    write_partition,
    write_sequences,
)


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "wm.cfg"
    path.write_text("# watermark\nseed = cli-seed\nm = 5\ndelta = 3.0\na11 = 0\nfpr = 0.001\n")
    return path


def test_partition_file(tmp_path):
    out = tmp_path / "p.txt"
    assert main(["partition", "--seed", "s", "--N", "4", "--l", "2", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("patternmark-partition v1 N=4 l=2 digest=")
    assert len(lines) == 5
    assert read_partition(out) == build_partition("s", 4, 2)


def test_partition_digest_follows_seed(tmp_path):
    main(["partition", "--seed", "a", "--N", "50", "--out", str(tmp_path / "a")])
    main(["partition", "--seed", "b", "--N", "50", "--out", str(tmp_path / "b")])
    ha = (tmp_path / "a").read_text().splitlines()[0]
    hb = (tmp_path / "b").read_text().splitlines()[0]
    assert ha != hb


def test_partition_round_trip_with_exclusions(tmp_path):
    part = build_partition("s", 30, 3, exclude=[0, 29])
    write_partition(tmp_path / "p", part)
    assert read_partition(tmp_path / "p") == part


def test_partition_tampered_digest(tmp_path):
    write_partition(tmp_path / "p", build_partition("s", 6, 2))
    lines = (tmp_path / "p").read_text().splitlines()
    t, k = lines[1].split("\t")
    lines[1] = f"{t}\t{1 - int(k)}"
    (tmp_path / "p").write_text("\n".join(lines) + "\n")
    with pytest.raises(Exception, match="digest"):
        read_partition(tmp_path / "p")


def test_config_round_trip(tmp_path):
    kv = {"seed": "x", "m": "4", "delta": "1.5", "a11": "0.2", "fpr": "0.01"}
    cfg = config_from_kv(kv)
    write_kv(tmp_path / "c", config_to_kv(cfg))
    assert config_from_kv(read_kv(tmp_path / "c")) == cfg
    explicit = config_from_kv({"seed": "x", "l": "3", "m": "2", "pattern": "01,12",
                               "transition": "0,1,0;0,0,1;1,0,0", "q": "1,0,0"})
    assert explicit.patterns == ((0, 1), (1, 2))
    assert config_from_kv(config_to_kv(explicit)) == explicit


def test_sequences_round_trip(tmp_path):
    seqs = [np.array([1, 2, 3]), np.array([0]), np.array([19, 18, 17, 16])]
    write_sequences(tmp_path / "s", seqs)
    back = read_sequences(tmp_path / "s")
    assert all(np.array_equal(a, b) for a, b in zip(seqs, back)) and len(back) == 3


def test_generate_detect_pipeline(tmp_path, cfg_file, capsys):
    seqs = tmp_path / "seqs.txt"
    args = ["generate", "--config", str(cfg_file), "--n", "120", "--count", "3", "--out", str(seqs)]
    assert main(args) == 0
    assert len(seqs.read_text().splitlines()) == 3
    meta = json.loads((tmp_path / "seqs.txt.meta.json").read_text())
    assert meta["watermark"] == "watermarked" and len(meta["sequences"]) == 3
    first = seqs.read_bytes()
    assert main(args) == 0
    assert seqs.read_bytes() == first

    part = tmp_path / "part.txt"
    main(["partition", "--seed", "cli-seed", "--N", "20", "--out", str(part)])
    report = tmp_path / "report.jsonl"
    capsys.readouterr()
    assert main(["detect", "--config", str(cfg_file), "--partition", str(part),
                 "--sequences", str(seqs), "--out", str(report)]) == 0
    lines = [json.loads(x) for x in report.read_text().splitlines()]
    assert [r["index"] for r in lines[:3]] == [0, 1, 2]
    assert all(r["watermarked"] and r["n"] == 120 for r in lines[:3])
    summary = lines[-1]["summary"]
    assert list(summary["tpr"]) == ["0.1", "0.01", "0.001", "0.0001", "1e-05"]
    assert summary["tpr"]["0.001"] == 1.0


def test_generate_unwatermarked_flag(tmp_path, cfg_file):
    out = tmp_path / "s.txt"
    assert main(["generate", "--config", str(cfg_file), "--delta", "0", "--n", "10", "--out", str(out)]) == 0
    assert json.loads((tmp_path / "s.txt.meta.json").read_text())["watermark"] == "unwatermarked"


def test_generate_other_orders(tmp_path, cfg_file):
    for order in ("perm", "maskpredict"):
        out = tmp_path / f"{order}.txt"
        assert main(["generate", "--config", str(cfg_file), "--n", "30", "--order", order,
                     "--rounds", "3", "--oracle", "ctx", "--out", str(out)]) == 0


def test_missing_seed_is_printed(tmp_path, capsys):
    assert main(["partition", "--N", "10", "--out", str(tmp_path / "p")]) == 0
    err = capsys.readouterr().err
    assert err.startswith("seed: ")
    seed = err.split()[1]
    assert read_partition(tmp_path / "p") == build_partition(seed, 10, 2)


def test_detect_empty_file(tmp_path, cfg_file, capsys):
    part = tmp_path / "part.txt"
    main(["partition", "--seed", "cli-seed", "--N", "20", "--out", str(part)])
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    capsys.readouterr()
    assert main(["detect", "--config", str(cfg_file), "--partition", str(part), "--sequences", str(empty)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 1 and json.loads(out[0])["summary"]["sequences"] == 0


def test_detect_malformed_token_names_line(tmp_path, cfg_file, capsys):
    part = tmp_path / "part.txt"
    main(["partition", "--seed", "cli-seed", "--N", "20", "--out", str(part)])
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2 3\n4 five 6\n")
    assert main(["detect", "--config", str(cfg_file), "--partition", str(part), "--sequences", str(bad)]) == 2
    assert "bad.txt:2" in capsys.readouterr().err


def test_detect_out_of_vocab_names_line(tmp_path, cfg_file, capsys):
    part = tmp_path / "part.txt"
    main(["partition", "--seed", "cli-seed", "--N", "20", "--out", str(part)])
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2 3\n1 2 3\n4 25 6\n")
    assert main(["detect", "--config", str(cfg_file), "--partition", str(part), "--sequences", str(bad)]) == 2
    assert "bad.txt:3" in capsys.readouterr().err


def test_detect_text_format(tmp_path, cfg_file, capsys):
    part = tmp_path / "part.txt"
    main(["partition", "--seed", "cli-seed", "--N", "20", "--out", str(part)])
    seqs = tmp_path / "s.txt"
    seqs.write_text("1 2 3 4 5 6 7 8\n")
    capsys.readouterr()
    assert main(["detect", "--config", str(cfg_file), "--partition", str(part),
                 "--sequences", str(seqs), "--format", "text"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("index\tn\tcount\tp_value\twatermarked") and "# TPR@0.001%" in out


def test_pvalue_table(tmp_path, capsys):
    assert main(["pvalue-table", "--n", "4", "--m", "3"]) == 0
    rows = [line.split("\t") for line in capsys.readouterr().out.splitlines()[1:]]
    assert [float(r[1]) for r in rows] == [0.625, 0.25, 0.125]
    assert float(rows[0][2]) == 1.0
    assert [float(r[2]) for r in rows] == [1.0, 0.375, 0.125]


def test_pvalue_table_methods_agree(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["pvalue-table", "--n", "40", "--m", "5", "--method", "general", "--out", str(a)])
    main(["pvalue-table", "--n", "40", "--m", "5", "--method", "alternating", "--out", str(b)])
    ta = np.loadtxt(a, skiprows=1)
    tb = np.loadtxt(b, skiprows=1)
    np.testing.assert_allclose(ta, tb, rtol=0, atol=1e-12)


def test_pvalue_table_explicit_patterns(capsys):
    assert main(["pvalue-table", "--l", "3", "--n", "5", "--m", "2", "--pattern", "01,12",
                 "--format", "json"]) == 0
    rows = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    assert abs(sum(r["mass"] for r in rows) - 1) < 1e-12


def test_attack_command(tmp_path):
    src = tmp_path / "in.txt"
    rng = np.random.default_rng(0)
    write_sequences(src, [rng.integers(0, 20, 400) for _ in range(3)])
    same = tmp_path / "same.txt"
    assert main(["attack", "--sequences", str(src), "--epsilon", "0", "--seed", "k", "--out", str(same)]) == 0
    assert same.read_bytes() == src.read_bytes()
    a1, a2 = tmp_path / "a1.txt", tmp_path / "a2.txt"
    main(["attack", "--sequences", str(src), "--epsilon", "0.3", "--seed", "k", "--out", str(a1)])
    main(["attack", "--sequences", str(src), "--epsilon", "0.3", "--seed", "k", "--out", str(a2)])
    assert a1.read_bytes() == a2.read_bytes()
    for x, y in zip(read_sequences(src), read_sequences(a1)):
        assert int((x != y).sum()) == 120


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as e:
        main(["pvalue-table", "--n", "x"])
    assert e.value.code == 1
    assert main(["pvalue-table", "--l", "3", "--n", "5", "--m", "3"]) == 1


def test_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("seed = s\na11 = 1.5\n")
    assert main(["generate", "--config", str(bad), "--n", "5", "--out", str(tmp_path / "o")]) == 2
    bad.write_text("seed = s\ndelta = lots\n")
    assert main(["generate", "--config", str(bad), "--n", "5", "--out", str(tmp_path / "o")]) == 2
