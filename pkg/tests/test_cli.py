"""End-to-end command-line tests, run in-process through main()."""

import csv
import json

import numpy as np
import pytest

from rrq import cli, codec, pgm

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    rc = cli.main(["synth", "--output-dir", str(root), "--train", "12",
                   "--test", "6", "--height", "8", "--width", "8",
                   "--seed", "11"])
    assert rc == 0
    return root


@pytest.fixture(scope="module")
def trained(tmp_path_factory, corpus_dir):
    out = tmp_path_factory.mktemp("model")
    model_path = out / "model.rrqm"
    rc = cli.main(["train", "--input", str(corpus_dir / "train"),
                   "--output", str(model_path), "-M", "4", "-L", "4",
                   "-K", "4", "--model-seed", "5"])
    assert rc == 0
    return model_path


# ---------------------------------------------------------------------------
# corpus splitting


def test_split_is_deterministic_and_disjoint():
    names = [f"img_{i:03d}.pgm" for i in range(20)]
    tr1, te1 = cli.split_corpus(names, 0.5, seed=3)
    tr2, te2 = cli.split_corpus(names, 0.5, seed=3)
    assert (tr1, te1) == (tr2, te2)
    assert sorted(tr1 + te1) == list(range(20))
    assert len(tr1) == 10
    assert cli.split_corpus(names, 0.5, seed=4) != (tr1, te1)


def test_split_stratifies_by_subject():
    names = [f"s{subj}_take{k}.pgm" for subj in (1, 2, 3) for k in range(4)]
    train, test = cli.split_corpus(names, 0.5, seed=0, subject_regex=r"(s\d+)_")
    for subj in range(3):
        members = set(range(subj * 4, subj * 4 + 4))
        assert len(members & set(train)) == 2
        assert len(members & set(test)) == 2


def test_split_keeps_singleton_subjects_in_training():
    names = ["a_1.pgm", "b_1.pgm", "b_2.pgm", "c_1.pgm"]
    train, test = cli.split_corpus(names, 0.5, seed=0, subject_regex=r"([a-z])_")
    assert 0 in train and 3 in train
    assert sorted(set(train) | set(test)) == [0, 1, 2, 3]
    assert len([i for i in (1, 2) if i in test]) == 1


def test_split_fraction_bounds():
    with pytest.raises(cli.UsageError):
        cli.split_corpus(["a.pgm", "b.pgm"], 0.0, seed=0)
    with pytest.raises(cli.UsageError):
        cli.split_corpus(["a.pgm", "b.pgm"], 1.0, seed=0)


# ---------------------------------------------------------------------------
# synth


def test_synth_writes_both_splits_as_16_bit_pgm(corpus_dir):
    train = sorted((corpus_dir / "train").glob("*.pgm"))
    test = sorted((corpus_dir / "test").glob("*.pgm"))
    assert len(train) == 12 and len(test) == 6
    assert train[0].name == "train_00000.pgm"
    header = train[0].read_bytes()[:20].split()
    assert header[0] == b"P5"
    assert b"65535" in train[0].read_bytes()[:40]
    img = pgm.read_pgm(train[0])
    assert img.shape == (8, 8)

    manifest = json.loads((corpus_dir / "manifest.json").read_text())
    assert manifest["command"] == "synth"
    assert manifest["config"]["seed"] == 11
    assert len(manifest["outputs"]) == 18


def test_synth_is_reproducible(tmp_path, corpus_dir):
    rc = cli.main(["synth", "--output-dir", str(tmp_path), "--train", "12",
                   "--test", "6", "--height", "8", "--width", "8",
                   "--seed", "11"])
    assert rc == 0
    a = (corpus_dir / "train" / "train_00003.pgm").read_bytes()
    b = (tmp_path / "train" / "train_00003.pgm").read_bytes()
    assert a == b


# ---------------------------------------------------------------------------
# train / compress / decompress


def test_train_writes_model_and_manifest(trained, corpus_dir):
    assert trained.exists()
    pre, model, digest = codec.load_model(trained)
    assert (pre.height, pre.width) == (8, 8)
    assert model.depth == 4

    manifest = json.loads((trained.parent / "model.rrqm.manifest.json").read_text())
    assert manifest["tool"] == "rrq"
    assert manifest["command"] == "train"
    assert manifest["model_sha256"] == digest.hex()
    assert manifest["generator_id"] == model.generator_id


def test_training_is_byte_reproducible(tmp_path, corpus_dir, trained):
    again = tmp_path / "again.rrqm"
    rc = cli.main(["train", "--input", str(corpus_dir / "train"),
                   "--output", str(again), "-M", "4", "-L", "4",
                   "-K", "4", "--model-seed", "5"])
    assert rc == 0
    assert again.read_bytes() == trained.read_bytes()


def test_compress_decompress_roundtrip(tmp_path, corpus_dir, trained):
    stream = tmp_path / "test.rrq"
    rc = cli.main(["compress", "--model", str(trained),
                   "--input", str(corpus_dir / "test"),
                   "--output", str(stream)])
    assert rc == 0
    manifest = json.loads((tmp_path / "test.rrq.manifest.json").read_text())
    assert manifest["config"]["layers_used"] == 4

    out = tmp_path / "recon"
    rc = cli.main(["decompress", "--model", str(trained),
                   "--input", str(stream), "--output", str(out),
                   "--maxval", "65535"])
    assert rc == 0
    files = sorted(out.glob("*.pgm"))
    assert [f.name for f in files] == [f"img_{i:05d}.pgm" for i in range(6)]

    # written pixels must match the library reconstruction up to 16-bit
    # quantization
    pre, model, _ = codec.load_model(trained)
    blob = codec.read_stream(stream, model)
    expect = codec.decompress(blob, pre, model)
    for path, ref in zip(files, expect):
        got = pgm.read_pgm(path)
        assert np.max(np.abs(got - ref)) <= 0.5 / 65535 + 1e-12


def test_compress_rejects_wrong_geometry(tmp_path, trained):
    other = tmp_path / "wide"
    cli.main(["synth", "--output-dir", str(other), "--train", "2",
              "--test", "1", "--height", "8", "--width", "16", "--seed", "0"])
    rc = cli.main(["compress", "--model", str(trained),
                   "--input", str(other / "train"),
                   "--output", str(tmp_path / "x.rrq")])
    assert rc == 2


def test_decompress_with_wrong_model_fails_clean(tmp_path, corpus_dir, trained):
    stream = tmp_path / "test.rrq"
    cli.main(["compress", "--model", str(trained),
              "--input", str(corpus_dir / "test"), "--output", str(stream)])
    other = tmp_path / "other.rrqm"
    cli.main(["train", "--input", str(corpus_dir / "train"),
              "--output", str(other), "-M", "4", "-L", "4", "-K", "4",
              "--model-seed", "6"])
    out = tmp_path / "never"
    rc = cli.main(["decompress", "--model", str(other),
                   "--input", str(stream), "--output", str(out)])
    assert rc == 3
    assert not out.exists()


def test_usage_errors_exit_2(tmp_path, corpus_dir):
    rc = cli.main(["train", "--input", str(tmp_path / "missing"),
                   "--output", str(tmp_path / "m.rrqm"), "-L", "2", "-K", "4"])
    assert rc == 2
    # 5 sub-bands cannot divide a 64-dim image
    rc = cli.main(["train", "--input", str(corpus_dir / "train"),
                   "--output", str(tmp_path / "m.rrqm"), "-M", "5",
                   "-L", "2", "-K", "4"])
    assert rc == 2
    # argparse handles missing required flags itself
    with pytest.raises(SystemExit) as exc:
        cli.main(["train", "--input", str(corpus_dir / "train")])
    assert exc.value.code == 2


# ---------------------------------------------------------------------------
# reports


def test_eval_dr_writes_csv_figure_model_and_manifest(tmp_path, corpus_dir):
    out = tmp_path / "report"
    rc = cli.main(["eval-dr", "--input", str(corpus_dir / "train"),
                   "--output-dir", str(out), "-M", "4", "-L", "4", "-K", "4",
                   "--model-seed", "5", "--split-seed", "1"])
    assert rc == 0

    rows = list(csv.reader((out / "dr_curve.csv").open()))
    assert rows[0] == ["split", "layers", "bpp", "mse", "psnr_db"]
    splits = {r[0] for r in rows[1:]}
    assert splits == {"train", "test"}
    layers = [int(r[1]) for r in rows[1:] if r[0] == "train"]
    assert layers == [1, 2, 4]
    assert all(float(r[2]) >= 0 and float(r[3]) > 0 for r in rows[1:])

    assert (out / "dr_curve.png").read_bytes().startswith(PNG_MAGIC)
    assert (out / "model.rrqm").exists()
    manifest = json.loads((out / "dr_curve.manifest.json").read_text())
    assert manifest["command"] == "eval-dr"
    assert manifest["config"]["layer_grid"] == [1, 2, 4]
    _, _, digest = codec.load_model(out / "model.rrqm")
    assert manifest["model_sha256"] == digest.hex()


def test_denoise_report_marks_best_per_noise_level(tmp_path, corpus_dir):
    out = tmp_path / "dn"
    rc = cli.main(["denoise", "--input", str(corpus_dir / "train"),
                   "--output-dir", str(out), "-M", "4", "-L", "4", "-K", "4",
                   "--dense-grid", "--sample", "3",
                   "--sigma2", "0.08", "--sigma2", "0.02"])
    assert rc == 0

    rows = list(csv.reader((out / "denoise.csv").open()))
    assert rows[0] == ["sigma2", "layers", "psnr_db", "is_best", "is_heuristic"]
    body = rows[1:]
    assert len(body) == 8  # two noise levels x four dense grid layers
    for sigma in ("0.08", "0.02"):
        group = [r for r in body if r[0] == sigma]
        assert [int(r[1]) for r in group] == [1, 2, 3, 4]
        flags = [int(r[3]) for r in group]
        assert sum(flags) == 1
        values = [float(r[2]) for r in group]
        assert flags.index(1) == values.index(max(values))

    assert (out / "denoise.png").read_bytes().startswith(PNG_MAGIC)
    manifest = json.loads((out / "denoise.manifest.json").read_text())
    assert manifest["config"]["sigma2"] == [0.08, 0.02]


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
