import json

import pytest

from inventor_linker import cli
from inventor_linker.errors import StaleUpstream, UpstreamMissing
from inventor_linker.pipeline import STAGES, UPSTREAM


def test_upstream_missing(demo_pipeline):
    p = demo_pipeline()
    with pytest.raises(UpstreamMissing):
        p.run_stage("normalize")
    p.run_stage("ingest")
    p.run_stage("normalize")
    p.run_stage("homonyms")
    with pytest.raises(UpstreamMissing):
        p.run_stage("match")


def test_rerun_is_noop(demo_pipeline):
    messages = []
    p = demo_pipeline()
    p.run_all()
    p.echo = messages.append
    p.run_all()
    assert messages and all("up to date" in m for m in messages)


def test_param_change_reruns_only_downstream(demo_pipeline, tmp_path):
    p = demo_pipeline()
    p.run_all()
    p.config.score_threshold = 1000
    messages = []
    p.echo = messages.append
    p.run_all()
    rerun = {m.split("]")[1].split(":")[0].strip() for m in messages if "up to date" not in m}
    assert rerun == {"match", "geocode", "sample", "report"}


def test_tampered_upstream_is_stale(demo_pipeline):
    p = demo_pipeline()
    p.run_all()
    path = p.config.workdir / "Univ" / "clusters.jsonl"
    path.write_text(path.read_text() + "\n")
    with pytest.raises(StaleUpstream):
        p.run_stage("homonyms", "Univ")


def test_forced_rerun_is_byte_identical(demo_pipeline):
    p = demo_pipeline()
    p.run_all()
    before = (p.config.workdir / "report.json").read_bytes()
    p.run_all(force=True)
    assert (p.config.workdir / "report.json").read_bytes() == before


def test_stages_read_only_declared_upstream():
    order = {s: i for i, s in enumerate(STAGES)}
    for stage, ups in UPSTREAM.items():
        assert all(order[u] < order[stage] for u in ups)


def test_verdict_flow(demo_pipeline):
    p = demo_pipeline()
    p.run_all()
    sample = json.loads((p.config.workdir / "Univ" / "sample.json").read_text())
    cid = sample["sampled_cluster_ids"][0]
    p.record_verdict("Univ", cid, "verified")
    messages = []
    p.echo = messages.append
    p.run_all()
    assert any("report:" in m and "up to date" not in m for m in messages)
    report = json.loads((p.config.workdir / "report.json").read_text())
    univ = report["table1"]["rows"][0]
    assert univ["verified"] == 1 and univ["pending"] == univ["sample_size"] - 1


def test_cli_exit_codes(tmp_path, capsys):
    work = tmp_path / "w"
    config = cli.write_demo_config(work)
    assert cli.main(["report", "--config", str(config)]) == 4
    assert cli.main(["ingest"]) == 2
    assert cli.main(["ingest", "--config", str(config), "--ipc-prefix-len", "9"]) == 2
    assert cli.main(["run-all", "--config", str(config)]) == 0
    out = capsys.readouterr().out
    assert "Proportion matched" in out
    assert cli.main(["verdict", "nope", "verified", "--config", str(config), "--corpus", "Univ"]) == 2
    assert cli.main(["verdict", "nope", "verified", "--config", str(config)]) == 2
    assert cli.main(["report", "--config", str(config), "--format", "structured"]) == 0
    assert json.loads(capsys.readouterr().out.split("\n", 1)[1])["threshold"] == 800


def test_cli_offline_miss_is_transport_error(tmp_path):
    config = cli.write_demo_config(tmp_path / "w")
    text = config.read_text().replace("classifier = stub", "classifier = remote")
    text = text.replace("[pipeline]", "[pipeline]\noffline = true")
    config.write_text(text)
    assert cli.main(["run-all", "--config", str(config)]) == 3


def test_demo_command(tmp_path, capsys):
    assert cli.main(["demo", "--workdir", str(tmp_path / "d")]) == 0
    assert "Table 1" in capsys.readouterr().out
