import numpy as np
import pytest

from cibse.checkpoint import synth_weights
from cibse.errors import BindingError, ShapeError
from cibse.model import (
    Model,
    VARIANTS,
    build_variant,
    conv_macs,
    count_parameters,
    estimate_flops,
    format_summary,
    normalize_variant,
    summarize,
    summary_csv,
    trace_shapes,
    weight_manifest,
)

PUBLISHED = {"yolov8n": 3_006_038, "cib-se-yolov8": 2_683_222}


@pytest.fixture(scope="module")
def graphs():
    return {v: build_variant(v, 2) for v in VARIANTS}


@pytest.fixture(scope="module")
def base_model(graphs):
    g = graphs["yolov8n"]
    return Model(g, synth_weights(g, 0))


class TestBuildVariant:
    def test_base_structure(self, graphs):
        g = graphs["yolov8n"]
        kinds = {l.index: l.kind for l in g.layers}
        assert kinds[6] == "C2f" and kinds[8] == "C2f"
        assert kinds[9] == "SPPF"
        assert g.detect_inputs == (15, 18, 21)
        assert g.layers[-1].args["strides"] == (8, 16, 32)

    def test_cib_variants_swap_backbone_layers(self, graphs):
        for v in ("yolov8n-c2fcib", "cib-se-yolov8"):
            kinds = {l.index: l.kind for l in graphs[v].layers}
            assert kinds[6] == "C2fCIB" and kinds[8] == "C2fCIB"
            assert kinds[4] == "C2f"  # untouched

    def test_se_variants_have_three_se_layers(self, graphs):
        for v in ("yolov8n-se", "cib-se-yolov8"):
            se = [l for l in graphs[v].layers if l.kind == "SE"]
            assert len(se) == 3
            assert {l.inputs[0] for l in se} == {15, 18, 21}
            assert {l.index for l in se} == {23, 24, 25}

    def test_se_rewires_all_downstream_consumers(self, graphs):
        g = graphs["cib-se-yolov8"]
        assert g.detect_inputs == (23, 24, 25)
        by_index = {l.index: l for l in g.layers}
        order = [l.index for l in g.layers]
        # the downsampling convs follow the SE nodes in execution order
        assert order.index(23) == order.index(16) - 1
        assert order.index(24) == order.index(19) - 1
        # existing layers keep their published indices
        assert set(by_index) == set(range(26))

    def test_unknown_variant(self):
        with pytest.raises(ValueError, match="unknown model variant"):
            build_variant("yolov9", 2)

    def test_aliases(self):
        assert normalize_variant("BASE") == "yolov8n"
        assert normalize_variant("cibse") == "cib-se-yolov8"

    def test_nc_validation(self):
        with pytest.raises(ValueError):
            build_variant("yolov8n", 0)


class TestCounts:
    def test_published_parameter_counts(self, graphs):
        for name, want in PUBLISHED.items():
            assert count_parameters(graphs[name]) == want

    def test_variant_algebra_identity(self, graphs):
        base = count_parameters(graphs["yolov8n"])
        se = count_parameters(graphs["yolov8n-se"])
        cib = count_parameters(graphs["yolov8n-c2fcib"])
        cibse = count_parameters(graphs["cib-se-yolov8"])
        assert cibse == base - (base - cib) + (se - base)

    def test_first_conv_block_hand_count(self, graphs):
        # deploy-form (BN-folded) counting: weight + the bias folding produces
        rows = summarize(graphs["yolov8n"])
        assert rows[0].params == 3 * 16 * 9 + 16

    def test_nc_dependence(self):
        # per scale the cls branch final conv gains 64 weights + 1 bias per class
        assert count_parameters(build_variant("yolov8n", 3)) == PUBLISHED["yolov8n"] + 3 * 65


class TestFlops:
    def test_single_pointwise_conv_hand_count(self):
        assert 2 * conv_macs(8, 8, 1, 32, 32) == 131_072

    def test_published_gflops(self, graphs):
        assert abs(estimate_flops(graphs["yolov8n"], 640) - 8.1) <= 0.03 * 8.1
        assert abs(estimate_flops(graphs["cib-se-yolov8"], 640) - 7.6) <= 0.03 * 7.6

    def test_quadratic_scaling_in_imgsz(self, graphs):
        # SE FC layers run once per image on the pooled descriptor, so their
        # cost is a constant; exact imgsz^2 scaling holds for the other layers
        # and the SE deviation must equal the constant-term prediction.
        se_gmacs = 2 * 2 * (64 * 4 + 128 * 8 + 256 * 16) / 1e9
        for name, g in graphs.items():
            f1, f2 = estimate_flops(g, 320), estimate_flops(g, 640)
            if "se" in name:
                predicted = (4.0 * (f1 - se_gmacs) + se_gmacs) / f1
                assert abs(f2 / f1 - predicted) <= 1e-9 * 4.0
            else:
                assert abs(f2 / f1 - 4.0) <= 1e-9 * 4.0

    def test_indivisible_imgsz_rejected(self, graphs):
        with pytest.raises(ShapeError):
            estimate_flops(graphs["yolov8n"], 400)


class TestSummary:
    def test_row9_is_sppf(self, graphs):
        rows = summarize(graphs["yolov8n"])
        assert rows[9].kind == "SPPF"

    def test_cibse_has_three_se_rows(self, graphs):
        rows = summarize(graphs["cib-se-yolov8"])
        assert sum(1 for r in rows if r.kind == "SE") == 3

    def test_params_column_sums_to_total(self, graphs):
        for g in graphs.values():
            rows = summarize(g)
            assert sum(r.params for r in rows) == count_parameters(g)

    def test_text_and_csv_render(self, graphs):
        rows = summarize(graphs["yolov8n"])
        text = format_summary(rows)
        assert text.splitlines()[0].split() == ["idx", "kind", "inputs", "c_out", "params"]
        assert len(text.splitlines()) == len(rows) + 1
        csv = summary_csv(rows)
        assert csv.startswith("index,kind,inputs,c_out,params\n")
        assert csv.count("\n") == len(rows) + 1


class TestTraceShapes:
    def test_detect_feed_channels(self, graphs):
        g = graphs["yolov8n"]
        shapes = trace_shapes(g, 416)
        by_index = {l.index: shapes[p] for p, l in enumerate(g.layers)}
        assert (by_index[15].c, by_index[18].c, by_index[21].c) == (64, 128, 256)
        assert (by_index[15].h, by_index[18].h, by_index[21].h) == (52, 26, 13)

    def test_se_preserves_shape(self, graphs):
        g = graphs["cib-se-yolov8"]
        shapes = trace_shapes(g, 416)
        by_index = {l.index: shapes[p] for p, l in enumerate(g.layers)}
        for src, se in ((15, 23), (18, 24), (21, 25)):
            assert by_index[src] == by_index[se]


class TestForward:
    def test_raw_map_sizes_at_416(self, base_model):
        x = np.zeros((1, 3, 416, 416), np.float32)
        outs = base_model.forward(x)
        assert [o.shape for o in outs] == [(1, 66, 52, 52), (1, 66, 26, 26), (1, 66, 13, 13)]

    def test_raw_map_sizes_at_640(self, base_model):
        x = np.zeros((1, 3, 640, 640), np.float32)
        outs = base_model.forward(x)
        assert [o.shape[2:] for o in outs] == [(80, 80), (40, 40), (20, 20)]

    def test_indivisible_input_rejected(self, base_model):
        with pytest.raises(ShapeError, match="divisible"):
            base_model.forward(np.zeros((1, 3, 400, 400), np.float32))

    def test_all_zero_weights_give_bias_valued_logits(self, graphs):
        g = graphs["yolov8n"]
        weights = {}
        for spec in weight_manifest(g):
            if spec.init in ("bn_var",):
                weights[spec.name] = np.ones(spec.shape, np.float32)
            elif spec.init == "bias_cls":
                weights[spec.name] = np.full(spec.shape, -4.6, np.float32)
            else:
                weights[spec.name] = np.zeros(spec.shape, np.float32)
        outs = Model(g, weights).forward(np.zeros((1, 3, 64, 64), np.float32))
        for o in outs:
            np.testing.assert_array_equal(o[:, :64], 0.0)  # box logits
            np.testing.assert_array_equal(o[:, 64:], np.float32(-4.6))  # class logits

    def test_deterministic_bit_identical(self, base_model):
        rng = np.random.default_rng(0)
        x = rng.random((1, 3, 64, 64), dtype=np.float32)
        a = base_model.forward(x)
        b = base_model.forward(x)
        for u, v in zip(a, b):
            np.testing.assert_array_equal(u, v)

    def test_all_variants_run(self, graphs):
        x = np.zeros((1, 3, 64, 64), np.float32)
        for v, g in graphs.items():
            outs = Model(g, synth_weights(g, 1)).forward(x)
            assert [o.shape[2] for o in outs] == [8, 4, 2]


class TestBinding:
    def test_missing_tensor_names_layer_path(self, graphs):
        g = graphs["yolov8n"]
        w = synth_weights(g, 0)
        del w["layer9.cv1.conv.weight"]
        with pytest.raises(BindingError, match="layer9.cv1.conv.weight"):
            Model(g, w)

    def test_mis_shaped_tensor_names_layer_path(self, graphs):
        g = graphs["yolov8n"]
        w = synth_weights(g, 0)
        w["layer0.conv.weight"] = np.zeros((16, 3, 1, 1), np.float32)
        with pytest.raises(BindingError, match="layer0.conv.weight"):
            Model(g, w)

    def test_extra_tensor_rejected_unless_permissive(self, graphs):
        g = graphs["yolov8n"]
        w = synth_weights(g, 0)
        w["layer99.unknown"] = np.zeros(1, np.float32)
        with pytest.raises(BindingError, match="unexpected"):
            Model(g, w)
        Model(g, w, permissive=True)  # accepted

    def test_manifest_is_complete_and_exact(self, graphs):
        for g in graphs.values():
            w = synth_weights(g, 3)
            manifest = weight_manifest(g)
            assert {m.name for m in manifest} == set(w)
            for m in manifest:
                assert tuple(w[m.name].shape) == m.shape
