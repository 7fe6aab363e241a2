import csv
import json

import pytest

from frameseq.cli import main, read_config
from frameseq.corpus import read_corpus, write_corpus
from frameseq.pipeline import parse_corpus, train_parser
from frameseq.synthetic import GeneratorConfig, generate


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "gen.cfg").write_text("n_documents = 12\nsentences_per_doc = 8\nnoise_rate = 0.1\n")
    (d / "crf.cfg").write_text("[crf]\nepochs = 8\n")
    (d / "nn.cfg").write_text("epochs = 2\nhidden = 6\nword_dim = 8\n")
    assert main(["generate", "--config", str(d / "gen.cfg"), "--out", str(d / "c.jsonl")]) == 0
    assert main(["split", "--corpus", str(d / "c.jsonl"), "--out-train", str(d / "tr.jsonl"),
                 "--out-test", str(d / "te.jsonl"), "--manifest", str(d / "m.json")]) == 0
    return d


def test_read_config_types(tmp_path):
    p = tmp_path / "x.cfg"
    p.write_text("a = 3\nb = 0.5\nc = hello\n[sec]\nd = [1, 2]\ne = true\n")
    assert read_config(p) == {"a": 3, "b": 0.5, "c": "hello", "d": [1, 2], "e": True}


def test_generate_is_deterministic(workdir, tmp_path):
    assert main(["generate", "--config", str(workdir / "gen.cfg"), "--out", str(tmp_path / "c.jsonl")]) == 0
    assert (tmp_path / "c.jsonl").read_text() == (workdir / "c.jsonl").read_text()


def test_split_manifest_no_leakage(workdir):
    m = json.loads((workdir / "m.json").read_text())
    assert not set(m["train_ids"]) & set(m["test_ids"])
    tr, te = read_corpus(workdir / "tr.jsonl"), read_corpus(workdir / "te.jsonl")
    assert {d.id for d in tr.documents} == set(m["train_ids"])
    assert {d.id for d in te.documents} == set(m["test_ids"])


@pytest.mark.parametrize("kind,cfg", [("crf", "crf.cfg"), ("bilstm", "nn.cfg")])
def test_train_parse_eval_pipeline(workdir, kind, cfg, capsys):
    model = workdir / f"{kind}.model"
    assert main(["train", "--model", kind, "--train", str(workdir / "tr.jsonl"),
                 "--hyper", str(workdir / cfg), "--out", str(model)]) == 0
    pred = workdir / f"{kind}.pred.jsonl"
    assert main(["parse", "--model", str(model), "--in", str(workdir / "te.jsonl"), "--out", str(pred)]) == 0
    report = workdir / f"{kind}.report.json"
    assert main(["eval", "--gold", str(workdir / "te.jsonl"), "--pred", str(pred), "--out", str(report)]) == 0
    data = json.loads(report.read_text())
    assert all("f1" in data["subtasks"][k] for k in ("TI", "TC", "RI", "RC"))
    curve = workdir / f"{kind}.csv"
    assert main(["curve", "--gold", str(workdir / "te.jsonl"), "--pred", str(pred), "--grid", "11",
                 "--out", str(curve)]) == 0
    assert len(list(csv.DictReader(open(curve)))) == 11


def test_eval_gold_against_itself(workdir, tmp_path):
    out = tmp_path / "r.json"
    te = str(workdir / "te.jsonl")
    assert main(["eval", "--gold", te, "--pred", te, "--out", str(out)]) == 0
    subtasks = json.loads(out.read_text())["subtasks"]
    assert all(v["f1"] == 1.0 for v in subtasks.values())


def test_curve_rows_match_grid(workdir, tmp_path):
    te = str(workdir / "te.jsonl")
    assert main(["curve", "--gold", te, "--pred", te, "--out", str(tmp_path / "c.csv"),
                 "--eer-out", str(tmp_path / "eer.json")]) == 0
    assert len(list(csv.DictReader(open(tmp_path / "c.csv")))) == 101
    assert json.loads((tmp_path / "eer.json").read_text())["RC"]["value"] == 1.0


def test_stats_json(workdir, capsys):
    assert main(["stats", "--corpus", str(workdir / "c.jsonl"), "--per-source", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["total"]["sentences"] == 96
    assert sum(v["sentences"] for v in data["per_source"].values()) == 96


def test_loop_subcommand(workdir, tmp_path):
    (tmp_path / "loop.cfg").write_text("iterations = 2\nbatch_size = 10\nbatches_per_iteration = 3\n"
                                       "k = 3\nhyper = {\"epochs\": 5}\n")
    out = tmp_path / "loop.json"
    assert main(["loop", "--pool", str(workdir / "c.jsonl"), "--config", str(tmp_path / "loop.cfg"),
                 "--out", str(out), "--csv", str(tmp_path / "loop.csv")]) == 0
    assert len(json.loads(out.read_text())["iterations"]) == 2


def test_missing_file_is_machine_readable(capsys):
    assert main(["stats", "--corpus", "/nonexistent/x.jsonl"]) != 0
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "missing_file"


def test_schema_violation_and_unknown_flag(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "d", "source": "S", "sentences": [{"tokens": 3}]}\n')
    assert main(["stats", "--corpus", str(bad)]) != 0
    assert "error" in json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert main(["stats", "--bogus"]) != 0
    assert main(["generate", "--config", str(_write(tmp_path / "g.cfg", "colour = 3\n")),
                 "--out", str(tmp_path / "x")]) != 0


def _write(path, text):
    path.write_text(text)
    return path


def test_parse_corpus_skips_pending_triggers():
    corpus = generate(GeneratorConfig(seed=2, n_documents=6, sentences_per_doc=6))
    model = train_parser("crf", corpus, {"epochs": 5})
    key, sent = next((k, s) for k, s in corpus.sentences() if s.annotated_frames)
    trig = sent.annotated_frames[0].trigger
    patched = type(sent)(sent.tokens, sent.frames, sent.source_id, frozenset({trig}))
    docs = tuple(type(d)(d.id, d.source, tuple(patched if (d.id, i) == key else s
                                               for i, s in enumerate(d.sentences))) for d in corpus.documents)
    masked = type(corpus)(docs, corpus.lu_lexicon)
    full, part = parse_corpus(model, corpus), parse_corpus(model, masked)
    assert all(f.trigger != trig for f in part.predictions[key])
    assert len(part.predictions[key]) <= len(full.predictions[key])


def test_unknown_parser_kind():
    with pytest.raises(ValueError):
        train_parser("svm", generate(GeneratorConfig(n_documents=1, sentences_per_doc=2)))


def test_parse_output_round_trips(tmp_path):
    corpus = generate(GeneratorConfig(seed=3, n_documents=4, sentences_per_doc=5))
    model = train_parser("crf", corpus, {"epochs": 5})
    out = parse_corpus(model, corpus).as_corpus(corpus)
    write_corpus(out, tmp_path / "p.jsonl")
    back = read_corpus(tmp_path / "p.jsonl")
    assert back == out
    assert all(f.score is not None for _, s in back.sentences() for f in s.frames)
