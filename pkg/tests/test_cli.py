import csv
import json

import pytest

from multishot.cli import main
from multishot.curation import SourceShot, write_shot_manifest
from multishot.metrics import CutList, write_cut_list


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestDemoAttn:
    def test_prints_layout_plan_and_flops(self, capsys):
        code, out, _ = run(capsys, "demo-attn")
        assert code == 0
        assert "layout: 3 shots, 12 tokens" in out
        assert '"kv_indices"' in out
        assert "flops: sparse=" in out

    def test_prompt_section_appears_on_request(self, capsys):
        code, out, _ = run(
            capsys, "demo-attn", "--global-tokens", "2", "--shot-tokens", "1,1,1"
        )
        assert code == 0
        assert "cross-attention mask" in out

    def test_bad_shot_spec_is_usage_error(self, capsys):
        code, _, err = run(capsys, "demo-attn", "--shots", "2+2")
        assert code == 2
        assert "error" in err


class TestVerifyCommand:
    def test_pass_exits_zero(self, capsys):
        code, out, _ = run(capsys, "verify", "--cases", "3", "--seed", "5")
        assert code == 0
        assert "PASS sparse" in out
        assert "PASS window" in out
        assert out.strip().endswith("PASS")

    def test_injected_fault_exits_one_and_locates_pair(self, capsys):
        code, out, _ = run(capsys, "verify", "--cases", "2", "--inject-fault")
        assert code == 1
        assert "query shot 0" in out
        assert "source shot 2" in out


class TestBenchCommand:
    def test_csv_on_stdout(self, capsys):
        code, out, _ = run(
            capsys, "bench", "--n-shots", "1,2", "--frames", "2", "--tpf", "2",
            "--d", "4", "--repetitions", "1",
        )
        assert code == 0
        rows = list(csv.reader(out.strip().splitlines()))
        assert rows[0] == "n_shots,l_shot,tpf,s,d,mode,precision,flops_sparse,flops_dense,wall_ms_sparse,wall_ms_dense".split(",")
        assert len(rows) == 3
        assert rows[1][0] == "1"

    def test_output_file_and_plot(self, capsys, tmp_path):
        out_csv = tmp_path / "bench.csv"
        code, out, _ = run(
            capsys, "bench", "--n-shots", "1,2", "--frames", "1", "--tpf", "2",
            "--d", "4", "--repetitions", "1", "-o", str(out_csv), "--plot",
        )
        assert code == 0
        assert out_csv.exists()
        figure = tmp_path / "bench_scaling.png"
        assert figure.exists()
        assert figure.stat().st_size > 0
        assert str(figure) in out

    def test_plot_without_output_is_usage_error(self, capsys):
        code, _, err = run(capsys, "bench", "--plot")
        assert code == 2
        assert "error" in err

    def test_oversized_config_is_config_error(self, capsys):
        code, _, err = run(
            capsys, "bench", "--n-shots", "4", "--frames", "4", "--tpf", "4",
            "--max-dense-tokens", "10",
        )
        assert code == 2
        assert "ConfigTooLarge" in err

    def test_config_file_merge_with_flag_override(self, capsys, tmp_path):
        config = tmp_path / "bench.json"
        config.write_text(json.dumps(
            {"n_shots": "1", "frames": 2, "tpf": 2, "d": 4, "repetitions": 1}
        ))
        code, out, _ = run(capsys, "bench", "--config", str(config), "--n-shots", "2")
        assert code == 0
        lines = out.strip().splitlines()
        assert len(lines) == 2  # flag "2" overrides config "1"
        assert lines[1].startswith("2,4,2,")

    def test_unknown_config_key_rejected(self, capsys, tmp_path):
        config = tmp_path / "bench.json"
        config.write_text(json.dumps({"shots": "1"}))
        code, _, err = run(capsys, "bench", "--config", str(config))
        assert code == 2
        assert "unknown config keys" in err


class TestAssembleCommand:
    def make_manifest(self, path):
        shots = []
        cursor = 0
        for i, dur in enumerate([2, 3, 4, 6, 1]):
            frames = dur * 10
            shots.append(SourceShot(f"s{i}", "src", cursor, cursor + frames, 10.0, 0.5))
            cursor += frames
        write_shot_manifest(shots, path)

    def test_assemble_to_stdout(self, capsys, tmp_path):
        manifest = tmp_path / "shots.jsonl"
        self.make_manifest(manifest)
        code, out, _ = run(
            capsys, "assemble", "--manifest", str(manifest),
            "--target", "5", "--tol", "1",
        )
        assert code == 0
        records = [json.loads(line) for line in out.strip().splitlines()]
        assert [r["shot_ids"] for r in records] == [["s0", "s1"], ["s2"], ["s3"]]

    def test_assemble_to_file_with_filter(self, capsys, tmp_path):
        manifest = tmp_path / "shots.jsonl"
        shots = [
            SourceShot("ok", "src", 0, 50, 10.0, 0.5),
            SourceShot("dark", "src", 50, 100, 10.0, 0.01),
        ]
        write_shot_manifest(shots, manifest)
        out_path = tmp_path / "samples.jsonl"
        code, out, err = run(
            capsys, "assemble", "--manifest", str(manifest), "--target", "5",
            "--tol", "1", "--apply-filter", "-o", str(out_path),
        )
        assert code == 0
        assert "rejected dark: too_dark" in err
        records = [json.loads(line) for line in out_path.read_text().splitlines()]
        assert [r["shot_ids"] for r in records] == [["ok"]]

    def test_default_tolerance_is_a_fifth_of_target(self, capsys, tmp_path):
        manifest = tmp_path / "shots.jsonl"
        write_shot_manifest([SourceShot("a", "src", 0, 41, 10.0, 0.5)], manifest)
        code, out, _ = run(capsys, "assemble", "--manifest", str(manifest), "--target", "5")
        assert code == 0  # 4.1 s lands inside 5 +/- 1
        assert len(out.strip().splitlines()) == 1

    def test_missing_manifest_is_usage_error(self, capsys):
        code, _, err = run(capsys, "assemble", "--target", "5")
        assert code == 2
        assert "manifest" in err


class TestPromptCommands:
    def test_render_and_parse_round_trip(self, capsys):
        code, rendered, _ = run(
            capsys, "prompt", "render", "--global-text", "A heist at dawn.",
            "--shot-text", "Vault door.", "--shot-text", "Alarm bells.",
        )
        assert code == 0
        assert rendered == "A heist at dawn.\nVault door. [shot cut] Alarm bells.\n"
        code, out, _ = run(capsys, "prompt", "parse", "--text", rendered.rstrip("\n"))
        assert code == 0
        assert json.loads(out) == {
            "global": "A heist at dawn.",
            "shots": ["Vault door.", "Alarm bells."],
        }

    def test_parse_from_file(self, capsys, tmp_path):
        path = tmp_path / "prompt.txt"
        path.write_text("G.\nA. [shot cut] B.\n")
        code, out, _ = run(capsys, "prompt", "parse", "--file", str(path))
        assert code == 0
        assert json.loads(out)["shots"] == ["A.", "B."]

    def test_parse_without_newline_is_an_error(self, capsys):
        code, _, err = run(capsys, "prompt", "parse", "--text", "no separator")
        assert code == 2
        assert "MalformedPrompt" in err

    def test_render_rejects_reserved_tag(self, capsys):
        code, _, err = run(
            capsys, "prompt", "render", "--global-text", "bad [shot cut] here",
            "--shot-text", "A.",
        )
        assert code == 2
        assert "DelimiterCollision" in err

    def test_parse_needs_exactly_one_source(self, capsys):
        code, _, err = run(capsys, "prompt", "parse")
        assert code == 2


class TestScoreCommands:
    def test_score_sca(self, capsys, tmp_path):
        pred, gt = tmp_path / "pred.json", tmp_path / "gt.json"
        write_cut_list(CutList(100, (32, 60)), pred)
        write_cut_list(CutList(100, (30, 60)), gt)
        code, out, _ = run(capsys, "score-sca", "--pred", str(pred), "--gt", str(gt))
        assert code == 0
        assert "sca=0.980199" in out
        assert "matched pred 32 <-> gt 30 (deviation 2)" in out

    def test_score_sca_frame_count_mismatch(self, capsys, tmp_path):
        pred, gt = tmp_path / "pred.json", tmp_path / "gt.json"
        write_cut_list(CutList(100, ()), pred)
        write_cut_list(CutList(90, ()), gt)
        code, _, err = run(capsys, "score-sca", "--pred", str(pred), "--gt", str(gt))
        assert code == 2
        assert "FrameCountMismatch" in err

    def test_consistency_inter_with_table(self, capsys, tmp_path):
        emb = tmp_path / "emb.json"
        emb.write_text(json.dumps({
            "a": [1.0, 0.0], "b": [0.0, 1.0], "c": [0.8, 0.6], "d": [0.8, 0.6],
        }))
        code, out, _ = run(
            capsys, "score-consistency", "--kind", "inter", "--embeddings", str(emb),
            "--group", "a,c", "--group", "b,d",
        )
        assert code == 0
        assert "inter_consistency=0.700000" in out

    def test_consistency_intra_with_hash_provider(self, capsys):
        code, out, _ = run(
            capsys, "score-consistency", "--kind", "intra",
            "--frames", "f0,f0,f0", "--hash-dim", "8",
        )
        assert code == 0
        assert "intra_consistency=1.000000" in out

    def test_consistency_semantic(self, capsys, tmp_path):
        emb = tmp_path / "emb.json"
        emb.write_text(json.dumps({"p": [1.0, 0.0], "m": [0.0, 1.0]}))
        code, out, _ = run(
            capsys, "score-consistency", "--kind", "semantic",
            "--embeddings", str(emb), "--prompt-ids", "p", "--media-ids", "m",
        )
        assert code == 0
        assert "semantic_consistency=0.000000" in out

    def test_degenerate_group_is_reported(self, capsys):
        code, _, err = run(
            capsys, "score-consistency", "--kind", "inter", "--group", "solo",
        )
        assert code == 2
        assert "DegenerateGroup" in err

    def test_missing_kind_is_usage_error(self, capsys):
        code, _, err = run(capsys, "score-consistency")
        assert code == 2
