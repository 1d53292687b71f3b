import json

import pytest

from rosetteseg.cli import main
from rosetteseg.sceneio import canonical_dumps


def run(argv, capsys=None):
    return main(argv)


def generate(tmp_path, name="scene", plants=4, seed=0, extra=()):
    out = tmp_path / name
    code = main(["generate", "--out", str(out), "--plants", str(plants),
                 "--seed", str(seed), *extra])
    assert code == 0
    return out


class TestGenerate:
    def test_deterministic_across_runs(self, tmp_path):
        a = generate(tmp_path, "a", seed=7)
        b = generate(tmp_path, "b", seed=7)
        assert (a / "scene.json").read_bytes() == (b / "scene.json").read_bytes()
        assert (a / "gt.json").read_bytes() == (b / "gt.json").read_bytes()
        att_a = sorted(p.name for p in (a / "attention").iterdir())
        att_b = sorted(p.name for p in (b / "attention").iterdir())
        assert att_a == att_b
        for name in att_a:
            assert (a / "attention" / name).read_bytes() == \
                   (b / "attention" / name).read_bytes()

    def test_zero_plants(self, tmp_path):
        out = generate(tmp_path, "empty", plants=0)
        doc = json.loads((out / "scene.json").read_text())
        assert doc["candidates"] == []

    def test_infeasible_spec_exits_two(self, tmp_path, capsys):
        code = main(["generate", "--out", str(tmp_path / "x"),
                     "--plants", "500", "--seed", "0"])
        assert code == 2
        assert "error" in capsys.readouterr().err


class TestSegment:
    def test_result_is_deterministic(self, tmp_path):
        scene = generate(tmp_path, "scene", seed=3)
        o1, o2 = tmp_path / "r1", tmp_path / "r2"
        assert main(["segment", "--scene", str(scene), "--out", str(o1)]) == 0
        assert main(["segment", "--scene", str(scene), "--out", str(o2)]) == 0
        assert (o1 / "result.json").read_bytes() == (o2 / "result.json").read_bytes()

    def test_manifest_counts_match_result(self, tmp_path):
        scene = generate(tmp_path, "scene", seed=4)
        out = tmp_path / "res"
        assert main(["segment", "--scene", str(scene), "--out", str(out)]) == 0
        result = json.loads((out / "result.json").read_text())
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["counts"]["leaves"] == len(result["leaves"])
        assert manifest["counts"]["plants"] == len(result["plants"])
        assert manifest["config"]["eps"] == 40.0

    def test_canonical_serialization(self, tmp_path):
        scene = generate(tmp_path, "scene", seed=5)
        out = tmp_path / "res"
        main(["segment", "--scene", str(scene), "--out", str(out)])
        raw = (out / "result.json").read_bytes()
        assert canonical_dumps(json.loads(raw)).encode() == raw

    def test_missing_scene_exits_two(self, tmp_path, capsys):
        code = main(["segment", "--scene", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "o")])
        assert code == 2

    def test_bad_config_override_exits_two(self, tmp_path, capsys):
        scene = generate(tmp_path, "scene", seed=6)
        code = main(["segment", "--scene", str(scene), "--out", str(tmp_path / "o"),
                     "--set", "eps=-1"])
        assert code == 2

    def test_unknown_config_key_exits_two(self, tmp_path, capsys):
        scene = generate(tmp_path, "scene", seed=6)
        code = main(["segment", "--scene", str(scene), "--out", str(tmp_path / "o"),
                     "--set", "bogus_key=1"])
        assert code == 2

    def test_config_file_plus_override(self, tmp_path):
        scene = generate(tmp_path, "scene", seed=6)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"eps": 50.0}))
        out = tmp_path / "o"
        assert main(["segment", "--scene", str(scene), "--config", str(cfg),
                     "--set", "init_min_pts=2", "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["eps"] == 50.0
        assert manifest["config"]["init_min_pts"] == 2


class TestEval:
    def test_gt_against_itself_is_perfect(self, tmp_path, capsys):
        scene = generate(tmp_path, "scene", seed=8)
        report = tmp_path / "rep" / "report.json"
        code = main(["eval", "--pred", str(scene / "gt.json"),
                     "--gt", str(scene / "gt.json"), "--report", str(report)])
        assert code == 0
        doc = json.loads(report.read_text())
        for key in ("prec50", "rec50", "ap50", "pq_plant", "pq_leaf"):
            assert doc[key] == 1.0
        assert report.with_suffix(".csv").exists()
        assert report.with_name("report_metrics.png").exists()

    def test_csv_contains_headline_metrics(self, tmp_path):
        scene = generate(tmp_path, "scene", seed=8)
        report = tmp_path / "rep" / "report.json"
        main(["eval", "--pred", str(scene / "gt.json"),
              "--gt", str(scene / "gt.json"), "--report", str(report)])
        text = report.with_suffix(".csv").read_text()
        for name in ("prec50", "rec50", "ap50", "pq_plant", "pq_leaf", "plant_tp"):
            assert name in text

    def test_dimension_mismatch_exits_two(self, tmp_path, capsys):
        a = generate(tmp_path, "a", seed=9)
        b = generate(tmp_path, "b", seed=9, extra=("--image-size", "900"))
        code = main(["eval", "--pred", str(a / "gt.json"), "--gt", str(b / "gt.json"),
                     "--report", str(tmp_path / "rep.json")])
        assert code == 2


class TestRender:
    def test_overlay_written(self, tmp_path):
        scene = generate(tmp_path, "scene", seed=10)
        out_dir = tmp_path / "res"
        main(["segment", "--scene", str(scene), "--out", str(out_dir)])
        png = tmp_path / "overlay.png"
        code = main(["render", "--scene", str(scene),
                     "--result", str(out_dir / "result.json"), "--out", str(png)])
        assert code == 0
        assert png.stat().st_size > 0

    def test_render_empty_result(self, tmp_path):
        scene = generate(tmp_path, "scene", plants=0, seed=0)
        out_dir = tmp_path / "res"
        main(["segment", "--scene", str(scene), "--out", str(out_dir)])
        png = tmp_path / "overlay.png"
        code = main(["render", "--scene", str(scene),
                     "--result", str(out_dir / "result.json"), "--out", str(png)])
        assert code == 0


class TestVersion:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "rosetteseg" in capsys.readouterr().out
