import json
import warnings

import pytest

from trojanscope.benchmarks import uart
from trojanscope.cli import EXIT_CONFIG, EXIT_OK, EXIT_PARSE, EXIT_STAGE, main
from trojanscope.config import RunConfig, derive_seed
from trojanscope.errors import ConfigError
from trojanscope.injector import COMB, InjectorConfig, generate_one
from trojanscope.netlist import emit_netlist

SMALL = ["--clock", "clk", "--reset", "rst"]


@pytest.fixture(scope="module")
def suspect(tmp_path_factory):
    d = tmp_path_factory.mktemp("suspect")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        infected, ht = generate_one(uart(), COMB, 5, 99, cfg=InjectorConfig(prefix="ht_"))
    (d / "suspect.v").write_text(emit_netlist(infected))
    (d / "truth.json").write_text(json.dumps(ht.sidecar()))
    cfg = {"classes": ["comb", "seq"], "trigger_counts": [5], "instances": 8,
           "features": ["p1", "p_trans", "cc1_ns", "cc0_ns", "co_fs"], "seed": 4}
    (d / "cfg.json").write_text(json.dumps(cfg))
    return d


def test_derive_seed_stable():
    assert derive_seed(0, "inject", "comb", 5) == derive_seed(0, "inject", "comb", 5)
    assert derive_seed(0, "inject", "comb", 5) != derive_seed(0, "inject", "comb", 6)
    assert derive_seed(0, "x") != derive_seed(1, "x")
    assert 0 <= derive_seed(7, "a") < 2**63


def test_config_validation(tmp_path):
    assert RunConfig().thresholds() == (1e-4, 1e-3, 1e-2, 1e-1)
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"bogus": 1})
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"theta_l": 0.7, "theta_u": 0.6})
    with pytest.raises(ConfigError):
        RunConfig.from_mapping({"features": ["nope"]})
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"instances": 3}))
    assert RunConfig.load(str(p), {"seed": 5}).to_json()["instances"] == 3


def test_exit_codes(tmp_path, suspect, capsys):
    assert main(["extract-features", "--netlist", str(tmp_path / "missing.v"),
                 "--out", str(tmp_path / "f.csv")]) == EXIT_CONFIG
    bad = tmp_path / "bad.v"
    bad.write_text("module m (a); input a; always @(a) begin end endmodule")
    assert main(["extract-features", "--netlist", str(bad), "--out", str(tmp_path / "f.csv")]) == EXIT_PARSE
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"theta_l": 0.9}))
    assert main(["extract-features", "--config", str(cfg), "--netlist", str(suspect / "suspect.v"),
                 "--out", str(tmp_path / "f.csv")]) == EXIT_CONFIG
    assert main(["verify", "--netlist", str(suspect / "suspect.v"), "--instances", "0",
                 "--output", str(tmp_path / "run")] + SMALL) == EXIT_STAGE
    assert "[dataset]" in capsys.readouterr().err


def test_extract_features(tmp_path, suspect):
    out = tmp_path / "f.csv"
    assert main(["extract-features", "--netlist", str(suspect / "suspect.v"), "--out", str(out)]
                + SMALL) == EXIT_OK
    header = out.read_text().splitlines()[0].split(",")
    assert header[0] == "net" and "p1" in header and "dist_po" in header


def test_verify_is_deterministic(tmp_path, suspect, capsys):
    args = ["verify", "--config", str(suspect / "cfg.json"), "--netlist", str(suspect / "suspect.v"),
            "--ground-truth", str(suspect / "truth.json")] + SMALL
    assert main(args + ["--output", str(tmp_path / "a")]) == EXIT_OK
    text = capsys.readouterr().out
    assert "FP reduction" in text
    assert main(args + ["--output", str(tmp_path / "b")]) == EXIT_OK
    for rel in ("reports/report.json", "reports/predictions.json", "reports/trojan.dot",
                "models/comb_5.json", "datasets/seq_5.csv", "instances/seq_5/003.v"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel
    rep = json.loads((tmp_path / "a" / "reports/report.json").read_text())
    st = rep["stages"]
    assert len(st["fsa"]["nets"]) <= len(st["gca"]["nets"]) <= len(st["nca"]["nets"]) <= len(st["ml"]["nets"])
    assert {"tp", "fp", "fn"} <= set(st["fsa"])


def test_stagewise_commands(tmp_path, suspect):
    run = tmp_path / "run"
    common = ["--config", str(suspect / "cfg.json"), "--netlist", str(suspect / "suspect.v")] + SMALL
    assert main(["inject", "--class", "comb", "--triggers", "5", "--instances", "4",
                 "--output", str(run)] + common) == EXIT_OK
    assert len(list((run / "instances" / "comb_5").glob("*.v"))) == 4
    assert main(["train", "--class", "comb", "--triggers", "5", "--output", str(run)] + common) == EXIT_OK
    model = run / "models" / "comb_5.json"
    assert json.loads(model.read_text())["kkt_gap"] < 1e-3
    preds = tmp_path / "pred.json"
    assert main(["classify", "--model", str(model), "--out", str(preds)] + common) == EXIT_OK
    report = tmp_path / "report.json"
    assert main(["postprocess", "--predictions", str(preds), "--model", str(model),
                 "--ground-truth", str(suspect / "truth.json"), "--out", str(report),
                 "--dot", str(tmp_path / "t.dot")] + common) == EXIT_OK
    assert main(["evaluate", "--report", str(report), "--ground-truth", str(suspect / "truth.json"),
                 "--out", str(tmp_path / "m.json")]) == EXIT_OK
    rows = json.loads((tmp_path / "m.json").read_text())
    assert rows[-1]["model"] == "voted"
    assert {"fp", "fn", "tp"} <= set(rows[0]["fsa"])
    assert main(["train", "--class", "seq", "--triggers", "5", "--output", str(run)] + common) == EXIT_CONFIG
