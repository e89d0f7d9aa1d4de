import numpy as np
import pytest

from fusiondet import diffcore as dc
from fusiondet.dethead import (
    REG_DIM,
    Detection,
    DetectionDump,
    Detector,
    LayerPrediction,
    decode_boxes,
    decode_layer,
    encode_targets,
    forward,
    predict,
    prepare_inputs,
    read_dump,
    select_detections,
    write_dump,
)
from fusiondet.diffcore import Tensor
from fusiondet.geom import Box3D
from fusiondet.pipeline.config import ModelConfig
from fusiondet.simkit import SceneSpec, generate_scene


def _cfg(**kw):
    kw.setdefault("dtype", "float64")
    kw.setdefault("num_queries", 12)
    kw.setdefault("modalities", ("lidar", "camera", "radar"))
    return ModelConfig(**kw)


@pytest.fixture(scope="module")
def sample():
    return generate_scene(SceneSpec(seed=1, num_objects=3), 0)


def _features(model, sample):
    return model.encode(prepare_inputs(sample, model.cfg))


def _zero_reg(model):
    for block in model.blocks:
        block.reg.layers[-1].weight.data[:] = 0.0
        block.reg.layers[-1].bias.data[:] = 0.0


def test_head_widths():
    model = Detector(_cfg(num_classes=5))
    for block in model.blocks:
        assert block.reg.layers[-1].weight.shape[1] == REG_DIM == 10
        assert block.cls.layers[-1].weight.shape[1] == 5


def test_encode_decode_round_trip():
    cfg = _cfg()
    boxes = [Box3D((3.0, -4.0, 0.5), (1.9, 1.6, 4.5), 0.7, (1.0, -2.0), 1), Box3D((-10.0, 8.0, -1.0), (0.7, 1.7, 0.7), -2.5, (0.0, 0.0), 2)]
    vec = encode_targets(boxes, cfg)
    assert vec.shape == (2, REG_DIM)
    back = decode_boxes(vec, np.array([1, 2]), cfg)
    for a, b in zip(boxes, back):
        np.testing.assert_allclose(b.to_array(), a.to_array(), atol=1e-12)
    assert encode_targets([], cfg).shape == (0, REG_DIM)


def test_zero_regression_keeps_reference_points(sample):
    model = Detector(_cfg(num_layers=3))
    _zero_reg(model)
    preds = forward(model, _features(model, sample))
    assert len(preds) == 3
    init = model.initial_reference().data
    for p in preds:
        np.testing.assert_array_equal(p.ref_points, init)


def test_large_offsets_are_clamped(sample):
    model = Detector(_cfg())
    for block in model.blocks:
        block.reg.layers[-1].bias.data[:3] = [50.0, -50.0, 3.0]
    preds = forward(model, _features(model, sample))
    for p in preds:
        assert np.all((p.ref_points >= 0) & (p.ref_points <= 1))
        np.testing.assert_array_equal(p.ref_points[:, 0], 1.0)
        np.testing.assert_array_equal(p.ref_points[:, 1], 0.0)


def test_decode_layer_adds_offset_in_normalised_units(sample):
    model = Detector(_cfg())
    block = model.blocks[0]
    block.reg.layers[-1].weight.data[:] = 0.0
    block.reg.layers[-1].bias.data[:3] = [0.01, -0.02, 0.0]
    c = Tensor(np.full((model.cfg.num_queries, 3), 0.5))
    _, pred = decode_layer(block, model.query_embed, c, _features(model, sample))
    np.testing.assert_allclose(pred.ref_points, np.tile([0.51, 0.48, 0.5], (model.cfg.num_queries, 1)), atol=1e-12)
    boxes = pred.boxes(model.cfg)
    assert boxes[0].center[0] == pytest.approx(0.01 * 64.0, abs=1e-9)


def test_gradient_reaches_first_block_from_last_layer(sample):
    model = Detector(_cfg())
    preds = forward(model, _features(model, sample))
    last = preds[-1]
    loss = dc.tsum(last.box_vec * last.box_vec) + dc.tsum(last.logits)
    loss.backward()
    first = dict(model.blocks[0].named_parameters())
    for name in ("sampler.fusion.layers.0.weight", "attn.q_proj.weight", "ffn.fc1.weight"):
        assert np.linalg.norm(first[name].grad) > 0, name
    assert np.linalg.norm(model.query_embed.grad) > 0
    for enc in ("lidar_encoder", "camera_encoder", "radar_encoder"):
        grads = [p.grad for _, p in getattr(model, enc).named_parameters()]
        assert any(g is not None and np.linalg.norm(g) > 0 for g in grads), enc


def test_permutation_equivariance(sample):
    model = Detector(_cfg())
    feats = _features(model, sample)
    perm = np.random.default_rng(0).permutation(model.cfg.num_queries)
    a = forward(model, feats)
    model.query_embed.data[:] = model.query_embed.data[perm]
    model.ref_logits.data[:] = model.ref_logits.data[perm]
    b = forward(model, feats)
    for pa, pb in zip(a, b):
        np.testing.assert_allclose(pb.logits.data, pa.logits.data[perm], atol=1e-10)
        np.testing.assert_allclose(pb.box_vec.data, pa.box_vec.data[perm], atol=1e-10)


def test_unconfigured_modalities_absent():
    model = Detector(_cfg(modalities=("camera",)))
    assert not hasattr(model, "lidar_encoder") and not hasattr(model, "radar_encoder")
    assert not hasattr(model, "aux_head")
    assert hasattr(Detector(_cfg(modalities=("lidar",))), "aux_head")


# --------------------------------------------------------------- predictions


def _pred(logits):
    logits = np.asarray(logits, dtype=np.float64)
    n = len(logits)
    vec = np.zeros((n, REG_DIM))
    vec[:, :3] = 0.5
    vec[:, 7] = 1.0
    return LayerPrediction(Tensor(logits), Tensor(vec), vec[:, :3].copy())


def test_select_all_negative_infinity_is_empty():
    cfg = _cfg()
    assert select_detections(_pred(np.full((5, 3), -np.inf)), cfg, 0.05, 10) == []


def test_select_max_dets_zero_is_empty():
    cfg = _cfg()
    assert select_detections(_pred(np.zeros((5, 3))), cfg, 0.0, 0) == []


def test_select_sorted_topk_and_no_nms():
    cfg = _cfg()
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(20, 3))
    dets = select_detections(_pred(logits), cfg, 0.3, 8)
    scores = [d.score for d in dets]
    assert scores == sorted(scores, reverse=True) and len(dets) <= 8
    best = np.sort(1 / (1 + np.exp(-logits.max(axis=1))))[::-1]
    np.testing.assert_allclose(scores, best[best > 0.3][:8])
    # identical boxes at one location all survive: no suppression
    assert len({d.box.center for d in dets}) == 1


def test_predict_sorted_dump(sample):
    model = Detector(_cfg())
    dets = predict(model, sample, score_threshold=0.0, max_dets=5)
    assert len(dets) == 5
    assert all(a.score >= b.score for a, b in zip(dets, dets[1:]))
    assert all(0.0 <= d.score <= 1.0 for d in dets)


def test_dump_round_trip(tmp_path):
    dump = DetectionDump()
    dump.add("b", [Detection(1, 0.3, Box3D((1, 2, 3), (1, 2, 3), 0.5, (0.1, 0.2), 1)), Detection(0, 0.9, Box3D((0, 0, 0), (1, 1, 1), -1.0, (0, 0), 0))])
    dump.add("a", [])
    path = tmp_path / "d.txt"
    write_dump(dump, path)
    back = read_dump(path)
    assert len(back) == 2
    assert sorted(back.scenes) == ["a", "b"] and back.scenes["a"] == []
    assert [d.score for d in back.scenes["b"]] == [0.9, 0.3]
    d = back.scenes["b"][1]
    np.testing.assert_allclose(d.box.to_array(), [1, 2, 3, 1, 2, 3, 0.5, 0.1, 0.2, 1], atol=1e-6)
    write_dump(back, tmp_path / "again.txt")
    assert (tmp_path / "again.txt").read_bytes() == path.read_bytes()


def test_dump_rejects_malformed(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("s 0 0.5 1 2\n")
    with pytest.raises(ValueError, match="bad.txt:1"):
        read_dump(path)
