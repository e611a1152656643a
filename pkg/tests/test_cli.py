import csv
import json
import sys
from pathlib import Path

import numpy as np
import pytest

from pixattack.cli import main, render_pattern
from pixattack.images import Image, load_image, save_image
from pixattack.masking import PixelMask, full_mask, save_mask

from conftest import random_image

SAMPLE = str(Path(__file__).resolve().parents[1] / "data" / "sample_rgb_32.png")
LINE_ORACLE = str(Path(__file__).parent / "helpers" / "line_oracle.py")


def write_image(tmp_path, seed=7, name="img.png", **kw):
    path = tmp_path / name
    save_image(random_image(seed, **kw), path)
    return str(path)


def attack_args(image, out, extra=()):
    return [
        "attack",
        "--image", image,
        "--oracle", "toy:linear",
        "--pop", "10",
        "--budget", "200",
        "--seed", "3",
        "--out", str(out),
        *extra,
    ]


def read_front(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestAttackCommand:
    def test_smoke_run_writes_all_artifacts(self, tmp_path):
        out = tmp_path / "run"
        code = main(attack_args(SAMPLE, out))
        assert code == 0
        for artifact in ("ae.png", "perturbation.csv", "front.csv", "report.json"):
            assert (out / artifact).exists(), artifact
        assert (out / "mask.pgm").exists()

    def test_zero_budget_is_config_error(self, tmp_path, capsys):
        code = main(attack_args(SAMPLE, tmp_path / "x", extra=["--budget", "0"]))
        assert code == 1
        assert "configuration" in capsys.readouterr().err

    def test_unreachable_http_oracle_exits_1_without_front(self, tmp_path):
        out = tmp_path / "dead"
        code = main(
            [
                "attack",
                "--image", SAMPLE,
                "--oracle", "http://127.0.0.1:1",
                "--pop", "10",
                "--budget", "100",
                "--out", str(out),
            ]
        )
        assert code == 1
        assert not (out / "front.csv").exists()

    def test_failed_attack_exits_2_with_front_and_report(self, tmp_path):
        out = tmp_path / "fail"
        oracle = f"subprocess:{sys.executable} {LINE_ORACLE} constant 0.6,0.2,0.2"
        code = main(
            [
                "attack",
                "--image", SAMPLE,
                "--oracle", oracle,
                "--pop", "4",
                "--budget", "20",
                "--out", str(out),
            ]
        )
        assert code == 2
        assert (out / "front.csv").exists()
        assert json.loads((out / "report.json").read_text())["success"] is False
        assert not (out / "ae.png").exists()

    def test_seeded_runs_are_byte_identical(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(attack_args(SAMPLE, out1)) == 0
        assert main(attack_args(SAMPLE, out2)) == 0
        assert (out1 / "front.csv").read_bytes() == (out2 / "front.csv").read_bytes()
        assert (out1 / "perturbation.csv").read_bytes() == (out2 / "perturbation.csv").read_bytes()

    def test_front_csv_sorted_and_typed(self, tmp_path):
        out = tmp_path / "run"
        main(attack_args(SAMPLE, out))
        rows = read_front(out / "front.csv")
        assert rows, "front must not be empty"
        f2s = [float(r["f2"]) for r in rows]
        assert f2s == sorted(f2s)
        assert set(rows[0]) == {"f1", "f2", "predicted_class", "success", "eval_index"}

    def test_report_echoes_config(self, tmp_path):
        out = tmp_path / "run"
        main(attack_args(SAMPLE, out))
        summary = json.loads((out / "report.json").read_text())
        assert summary["config"]["pop"] == 10
        assert summary["config"]["budget"] == 200
        assert summary["config"]["seed"] == 3
        assert summary["dimension"] > 0

    def test_ablation_flags_recorded_and_reduce_dimension(self, tmp_path):
        out_full = tmp_path / "full"
        out_ablate = tmp_path / "ablate"
        main(attack_args(SAMPLE, out_full, extra=["--budget", "20", "--pop", "2"]))
        main(
            attack_args(
                SAMPLE, out_ablate, extra=["--budget", "20", "--pop", "2", "--no-parity"]
            )
        )
        d_full = json.loads((out_full / "report.json").read_text())["dimension"]
        d_ablate = json.loads((out_ablate / "report.json").read_text())["dimension"]
        assert d_full <= d_ablate

    def test_config_file_used_and_flags_win(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            f"image = {SAMPLE}\n"
            "oracle = toy:linear\n"
            "pop = 4\n"
            "budget = 40   # comment survives parsing\n"
            "seed = 9\n"
        )
        out = tmp_path / "cfgrun"
        code = main(
            ["attack", "--config", str(cfg), "--budget", "60", "--out", str(out)]
        )
        assert code == 0
        summary = json.loads((out / "report.json").read_text())
        assert summary["config"]["budget"] == 60  # flag wins
        assert summary["config"]["pop"] == 4  # file value kept
        assert summary["config"]["seed"] == 9

    def test_missing_image_argument(self, tmp_path, capsys):
        code = main(["attack", "--oracle", "toy:linear", "--out", str(tmp_path)])
        assert code == 1

    def test_attention_from_file(self, tmp_path):
        from pixattack.attention import AttentionMap, save_attention

        values = np.zeros((32, 32), dtype=np.uint8)
        values[4:10, 4:12] = 200
        amap_path = tmp_path / "map.pgm"
        save_attention(AttentionMap(values), amap_path)
        out = tmp_path / "run"
        code = main(
            attack_args(SAMPLE, out, extra=["--attention", f"file:{amap_path}"])
        )
        assert code in (0, 2)
        summary = json.loads((out / "report.json").read_text())
        # 6x8 salient block intersected with the even checkerboard, x3 channels
        assert summary["dimension"] == 24 * 3


class TestVisualizeCommand:
    def test_empty_perturbation_full_mask_uniform_dark_gray(self, tmp_path):
        img_path = write_image(tmp_path, channels=3)
        mask_path = tmp_path / "mask.pgm"
        save_mask(full_mask(16, 16), mask_path)
        pert_path = tmp_path / "p.csv"
        pert_path.write_text("l,w,c,value\n")
        out = tmp_path / "pattern.png"
        code = main(
            [
                "visualize",
                "--image", img_path,
                "--perturbation", str(pert_path),
                "--mask", str(mask_path),
                "--out", str(out),
            ]
        )
        assert code == 0
        pattern = load_image(out)
        assert (pattern.pixels == 80).all()

    def test_max_positive_change_renders_white(self, tmp_path):
        img = Image(np.full((4, 4, 1), 100, dtype=np.uint8))
        img_path = tmp_path / "img.png"
        save_image(img, img_path)
        mask_path = tmp_path / "mask.pgm"
        save_mask(full_mask(4, 4), mask_path)
        pert_path = tmp_path / "p.csv"
        pert_path.write_text("l,w,c,value\n1,2,0,127.0\n")
        out = tmp_path / "pattern.png"
        assert main(
            [
                "visualize",
                "--image", str(img_path),
                "--perturbation", str(pert_path),
                "--mask", str(mask_path),
                "--out", str(out),
            ]
        ) == 0
        pattern = load_image(out)
        assert pattern.pixels[1, 2, 0] == 255
        assert pattern.pixels[0, 0, 0] == 80

    def test_out_of_mask_pixels_light_gray(self, tmp_path):
        img_path = write_image(tmp_path, channels=1)
        bits = np.zeros((16, 16), dtype=bool)
        bits[0, 0] = True
        mask_path = tmp_path / "mask.pgm"
        save_mask(PixelMask(bits), mask_path)
        pert_path = tmp_path / "p.csv"
        pert_path.write_text("l,w,c,value\n")
        out = tmp_path / "pattern.png"
        main(
            [
                "visualize",
                "--image", img_path,
                "--perturbation", str(pert_path),
                "--mask", str(mask_path),
                "--out", str(out),
            ]
        )
        pattern = load_image(out)
        assert pattern.pixels[0, 0, 0] == 80
        assert (pattern.pixels.reshape(-1)[1:] == 200).all()

    def test_dimension_mismatch_exits_1(self, tmp_path):
        img_path = write_image(tmp_path)
        mask_path = tmp_path / "mask.pgm"
        save_mask(full_mask(4, 4), mask_path)
        pert_path = tmp_path / "p.csv"
        pert_path.write_text("l,w,c,value\n")
        code = main(
            [
                "visualize",
                "--image", img_path,
                "--perturbation", str(pert_path),
                "--mask", str(mask_path),
                "--out", str(tmp_path / "o.png"),
            ]
        )
        assert code == 1

    def test_entry_outside_mask_rejected(self, tmp_path):
        img_path = write_image(tmp_path, channels=1)
        bits = np.zeros((16, 16), dtype=bool)
        bits[0, 0] = True
        mask_path = tmp_path / "mask.pgm"
        save_mask(PixelMask(bits), mask_path)
        pert_path = tmp_path / "p.csv"
        pert_path.write_text("l,w,c,value\n5,5,0,10.0\n")
        code = main(
            [
                "visualize",
                "--image", img_path,
                "--perturbation", str(pert_path),
                "--mask", str(mask_path),
                "--out", str(tmp_path / "o.png"),
            ]
        )
        assert code == 1

    def test_render_support_equals_perturbation_support(self):
        rng = np.random.default_rng(5)
        image = random_image(1, height=10, width=10, channels=3)
        bits = rng.random((10, 10)) < 0.6
        mask_pixels = np.nonzero(bits)
        entries = []
        expected_support = set()
        for k in range(min(12, len(mask_pixels[0]))):
            l, w = int(mask_pixels[0][k]), int(mask_pixels[1][k])
            c = int(rng.integers(0, 3))
            value = float(rng.integers(1, 100))
            entries.append((l, w, c, value))
            u = float(image.pixels[l, w, c])
            if np.clip(round(u + value), 0, 255) != u:
                expected_support.add((l, w, c))
        pattern = render_pattern(image, bits, entries)
        background = render_pattern(image, bits, [])
        got_support = set(zip(*np.nonzero(pattern != background)))
        got_support = {(int(a), int(b), int(c)) for a, b, c in got_support}
        assert got_support == expected_support


class TestExportFront:
    def run_attack_once(self, tmp_path):
        out = tmp_path / "run"
        assert main(attack_args(SAMPLE, out)) == 0
        return out

    def test_reexport_matches_attack_export(self, tmp_path):
        out = self.run_attack_once(tmp_path)
        exported = tmp_path / "front2.csv"
        code = main(
            ["export-front", "--report", str(out / "report.json"), "--out", str(exported)]
        )
        assert code == 0
        assert exported.read_bytes() == (out / "front.csv").read_bytes()

    def test_rows_mutually_nondominated(self, tmp_path):
        out = self.run_attack_once(tmp_path)
        rows = read_front(out / "front.csv")
        points = [(float(r["f1"]), float(r["f2"])) for r in rows]
        for i, a in enumerate(points):
            for j, b in enumerate(points):
                if i != j:
                    strictly_better = a[0] <= b[0] and a[1] <= b[1] and a != b
                    assert not strictly_better

    def test_missing_report_exits_1(self, tmp_path):
        code = main(
            ["export-front", "--report", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o.csv")]
        )
        assert code == 1

    def test_plot_data_written(self, tmp_path):
        out = self.run_attack_once(tmp_path)
        plot = tmp_path / "front.dat"
        main(
            [
                "export-front",
                "--report", str(out / "report.json"),
                "--out", str(tmp_path / "o.csv"),
                "--plot-data", str(plot),
            ]
        )
        lines = plot.read_text().strip().splitlines()
        assert lines[0].startswith("#")
        assert len(lines) > 1


class TestGenAttention:
    def test_writes_matching_pgm(self, tmp_path):
        out = tmp_path / "map.pgm"
        code = main(
            ["gen-attention", "--image", SAMPLE, "--out", str(out), "--proxy-seed", "4"]
        )
        assert code == 0
        from pixattack.attention import load_attention

        amap = load_attention(out, 32, 32)
        assert amap.values.any()

    def test_proxy_roundtrip_through_save(self, tmp_path):
        map1 = tmp_path / "m1.pgm"
        proxy_path = tmp_path / "proxy.txt"
        main(
            [
                "gen-attention",
                "--image", SAMPLE,
                "--out", str(map1),
                "--proxy-seed", "4",
                "--save-proxy", str(proxy_path),
            ]
        )
        map2 = tmp_path / "m2.pgm"
        main(
            [
                "gen-attention",
                "--image", SAMPLE,
                "--out", str(map2),
                "--proxy-file", str(proxy_path),
            ]
        )
        assert map1.read_bytes() == map2.read_bytes()
