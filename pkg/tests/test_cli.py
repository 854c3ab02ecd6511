"""CLI contracts: subcommands, exit codes, file outputs, reproducibility."""

import json
import os

import numpy as np
import pytest

from umclust.cli import main


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture()
def synth_dir(tmp_path):
    out = tmp_path / "synth_k3"
    code = run_cli("synth", "--k", "3", "--views", "2", "--per-cluster", "30",
                   "--dims", "6", "--noise", "0.2,0.5", "--seed", "5",
                   "--out", str(out))
    assert code == 0
    return out


def small_cfg(tmp_path, dataset, **extra):
    cfg = {
        "dataset": str(dataset), "k": 3, "epochs": 2, "batch_size": 48,
        "latent_dim": 8, "hidden_widths": [16], "seed": 0, "mode": "RGs",
    }
    cfg.update(extra)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_synth_requires_seed(capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli("synth", "--k", "3", "--views", "2", "--per-cluster", "10",
                "--out", "nowhere")
    assert exc.value.code == 2


def test_synth_roundtrip_loadable(synth_dir):
    from umclust.data import load_dataset

    bundle = load_dataset(synth_dir)
    assert bundle.V == 2 and bundle.k == 3 and bundle.N == 90
    assert bundle.unpair_seed == 5


def test_train_writes_all_outputs(tmp_path, synth_dir):
    cfg = small_cfg(tmp_path, synth_dir)
    run_dir = tmp_path / "run"
    assert run_cli("train", "--config", str(cfg), "--out", str(run_dir)) == 0
    for name in ("run_manifest.json", "train_log.jsonl", "model.ckpt",
                 "assignments.csv", "metrics.json", "latents_view1.csv",
                 "latents_view2.csv"):
        assert (run_dir / name).is_file(), name
    metrics = json.loads((run_dir / "metrics.json").read_text())
    assert set(metrics["pooled"]) == {"nmi", "acc", "f1", "precision"}
    assert len(metrics["per_view"]) == 2
    log_lines = (run_dir / "train_log.jsonl").read_text().splitlines()
    assert len(log_lines) == 2
    manifest = json.loads((run_dir / "run_manifest.json").read_text())
    assert manifest["config"]["mode"] == "RGs"
    assert manifest["dataset_manifest_sha256"]
    assignments = np.loadtxt(run_dir / "assignments.csv", dtype=int)
    assert assignments.shape == (90,)


def test_train_flag_overrides_config(tmp_path, synth_dir):
    cfg = small_cfg(tmp_path, synth_dir)
    run_dir = tmp_path / "run_rg"
    assert run_cli("train", "--config", str(cfg), "--out", str(run_dir),
                   "--mode", "RG", "--lambda2", "0") == 0
    manifest = json.loads((run_dir / "run_manifest.json").read_text())
    assert manifest["config"]["mode"] == "RG"
    assert manifest["config"]["lambda2"] == 0


def test_train_rerun_byte_identical(tmp_path, synth_dir):
    cfg = small_cfg(tmp_path, synth_dir)
    r1, r2 = tmp_path / "r1", tmp_path / "r2"
    assert run_cli("train", "--config", str(cfg), "--out", str(r1)) == 0
    assert run_cli("train", "--config", str(cfg), "--out", str(r2)) == 0
    assert (r1 / "metrics.json").read_bytes() == (r2 / "metrics.json").read_bytes()
    assert (r1 / "model.ckpt").read_bytes() == (r2 / "model.ckpt").read_bytes()
    assert (r1 / "assignments.csv").read_bytes() == (r2 / "assignments.csv").read_bytes()
    assert (r1 / "train_log.jsonl").read_bytes() == (r2 / "train_log.jsonl").read_bytes()


def test_train_bad_config_exit_2(tmp_path, synth_dir, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"dataset": str(synth_dir), "k": 3, "mode": "nope"}))
    assert run_cli("train", "--config", str(path)) == 2
    path.write_text(json.dumps({"dataset": str(synth_dir), "k": 3, "bogus_key": 1}))
    assert run_cli("train", "--config", str(path)) == 2
    path.write_text("{not json")
    assert run_cli("train", "--config", str(path)) == 2


def test_train_missing_dataset_exit_3(tmp_path):
    cfg = small_cfg(tmp_path, tmp_path / "does_not_exist")
    assert run_cli("train", "--config", str(cfg), "--out", str(tmp_path / "r")) == 3


def test_eval_perfect_assignments(tmp_path, synth_dir):
    from umclust.data import load_dataset

    bundle = load_dataset(synth_dir)
    path = tmp_path / "assign.csv"
    path.write_text("".join(f"{y}\n" for y in bundle.pooled_labels()))
    out = tmp_path / "metrics.json"
    assert run_cli("eval", "--dataset", str(synth_dir), "--assignments",
                   str(path), "--out", str(out), "--no-original") == 0
    metrics = json.loads(out.read_text())
    assert all(metrics["pooled"][k] == 1.0 for k in ("nmi", "acc", "f1", "precision"))
    assert [b["view"] for b in metrics["per_view"]] == [1, 2]


def test_eval_includes_original_baseline(tmp_path, synth_dir):
    from umclust.data import load_dataset

    bundle = load_dataset(synth_dir)
    path = tmp_path / "assign.csv"
    path.write_text("".join(f"{y}\n" for y in bundle.pooled_labels()))
    out = tmp_path / "metrics.json"
    assert run_cli("eval", "--dataset", str(synth_dir), "--assignments",
                   str(path), "--out", str(out)) == 0
    metrics = json.loads(out.read_text())
    assert len(metrics["original_per_view"]) == 2
    for block in metrics["original_per_view"]:
        assert 0.0 <= block["nmi"] <= 1.0


def test_eval_from_run_and_latents(tmp_path, synth_dir):
    cfg = small_cfg(tmp_path, synth_dir)
    run_dir = tmp_path / "run"
    assert run_cli("train", "--config", str(cfg), "--out", str(run_dir)) == 0
    out1 = tmp_path / "m1.json"
    assert run_cli("eval", "--dataset", str(synth_dir), "--run", str(run_dir),
                   "--out", str(out1), "--no-original") == 0
    trained = json.loads((run_dir / "metrics.json").read_text())
    assert json.loads(out1.read_text())["pooled"] == trained["pooled"]
    out2 = tmp_path / "m2.json"
    assert run_cli("eval", "--dataset", str(synth_dir), "--latents", str(run_dir),
                   "--out", str(out2), "--no-original") == 0
    assert set(json.loads(out2.read_text())["pooled"]) == {"nmi", "acc", "f1", "precision"}


def test_eval_misaligned_lengths_exit_3(tmp_path, synth_dir):
    path = tmp_path / "assign.csv"
    path.write_text("0\n1\n")
    assert run_cli("eval", "--dataset", str(synth_dir), "--assignments",
                   str(path), "--no-original") == 3


def test_unpair_command(tmp_path):
    paired = tmp_path / "paired"
    assert run_cli("synth", "--k", "3", "--views", "2", "--per-cluster", "15",
                   "--seed", "1", "--paired", "--out", str(paired)) == 0
    out = tmp_path / "unpaired"
    assert run_cli("unpair", "--input", str(paired), "--out", str(out),
                   "--seed", "3") == 0
    from umclust.data import load_dataset

    bundle = load_dataset(out, standardize=False)
    assert bundle.unpair_seed == 3
    assert sum(bundle.counts()) == 45


def test_ablate_losses_grid(tmp_path, synth_dir):
    cfg = small_cfg(tmp_path, synth_dir, epochs=1, latent_dim=6, hidden_widths=[8])
    out = tmp_path / "ablation"
    assert run_cli("ablate", "--config", str(cfg), "--grid", "losses",
                   "--out", str(out)) == 0
    lines = (out / "summary.csv").read_text().splitlines()
    assert lines[0] == "cell,mode,orth,compact,align,nmi,acc,f1,precision"
    assert len(lines) == 13
    # line order mirrors the conventional 12-row layout: 4 no-align rows,
    # then 4 single-guide rows, then 4 multi-guide rows
    aligns = [line.split(",")[4] for line in lines[1:]]
    assert aligns == ["False"] * 4 + ["True"] * 8
    modes = [line.split(",")[1] for line in lines[1:]]
    assert modes[4:8] == ["RG"] * 4 and modes[8:] == ["RGs"] * 4


def test_ablate_weights_grid(tmp_path, synth_dir):
    cfg = small_cfg(tmp_path, synth_dir, epochs=1, latent_dim=6, hidden_widths=[8])
    out = tmp_path / "weights"
    assert run_cli("ablate", "--config", str(cfg), "--grid", "weights",
                   "--out", str(out)) == 0
    lines = (out / "summary.csv").read_text().splitlines()
    assert [line.split(",")[0] for line in lines[1:]] == ["RGs", "URGs", "NRGs"]


def test_train_numeric_failure_exit_4(tmp_path):
    # huge raw feature scale with standardization disabled overflows the
    # squared reconstruction error on the first batch
    from umclust.data import SynthSpec, save_dataset, synth_generate, unpair

    spec = SynthSpec(k=2, views=2, per_cluster=12, view_dims=[3],
                     noise=[0.0], separation=1e200, seed=1)
    save_dataset(unpair(synth_generate(spec), seed=1), tmp_path / "huge")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "dataset": str(tmp_path / "huge"), "k": 2, "epochs": 1,
        "batch_size": 24, "latent_dim": 4, "hidden_widths": [8], "seed": 0,
        "standardize": False,
    }))
    with np.errstate(over="ignore"):
        assert run_cli("train", "--config", str(cfg), "--out", str(tmp_path / "r")) == 4


def test_default_out_root_env(tmp_path, synth_dir, monkeypatch):
    monkeypatch.setenv("UMCLUST_RUNS", str(tmp_path / "root"))
    cfg = small_cfg(tmp_path, synth_dir, epochs=1, latent_dim=6, hidden_widths=[8])
    assert run_cli("train", "--config", str(cfg)) == 0
    runs = list((tmp_path / "root").iterdir())
    assert len(runs) == 1 and (runs[0] / "metrics.json").is_file()
