import math

import numpy as np
import pytest

from fusiondet import diffcore as dc
from fusiondet.dethead import REG_DIM, Detector, LayerPrediction, encode_targets, forward, prepare_inputs
from fusiondet.diffcore import Tensor
from fusiondet.geom import Box3D
from fusiondet.mafs import ModalityError
from fusiondet.pipeline.config import LossConfig, ModelConfig
from fusiondet.setloss import (
    MatchingError,
    aux_dense_loss,
    aux_targets,
    assignment_cost,
    build_cost,
    focal_loss,
    hungarian_match,
    set_loss,
)
from fusiondet.simkit import SceneSpec, generate_scene

from oracles import brute_force_min_cost, central_diff, rel_err


def _cfg(**kw):
    kw.setdefault("dtype", "float64")
    kw.setdefault("num_queries", 10)
    return ModelConfig(**kw)


def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


# ------------------------------------------------------------------ matching


def test_match_small_examples():
    a = hungarian_match(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert list(a) == [0, 1]
    assert assignment_cost(np.array([[1.0, 2.0], [2.0, 1.0]]), a) == 2.0
    m = np.ones((5, 5)) - np.eye(5)
    a = hungarian_match(m)
    assert list(a) == [0, 1, 2, 3, 4] and assignment_cost(m, a) == 0.0


def test_match_against_brute_force():
    rng = np.random.default_rng(0)
    for trial in range(500):
        n_gt = int(rng.integers(1, 8))
        n_pred = int(rng.integers(n_gt, 8))
        if trial % 3 == 0:
            cost = rng.integers(0, 4, size=(n_pred, n_gt)).astype(np.float64)  # many ties
        else:
            cost = rng.normal(size=(n_pred, n_gt))
        a = hungarian_match(cost)
        assert len(set(a.tolist())) == n_gt and a.min() >= 0 and a.max() < n_pred
        assert assignment_cost(cost, a) == brute_force_min_cost(cost), (trial, cost)


def test_match_seven_by_five():
    rng = np.random.default_rng(1)
    for _ in range(20):
        cost = rng.uniform(size=(7, 5))
        assert assignment_cost(cost, hungarian_match(cost)) == brute_force_min_cost(cost)


def test_match_invariant_to_constant_shift():
    rng = np.random.default_rng(2)
    for trial in range(200):
        n_gt = int(rng.integers(1, 7))
        n_pred = int(rng.integers(n_gt, 8))
        cost = rng.integers(0, 3, size=(n_pred, n_gt)).astype(np.float64)
        shift = float(rng.integers(-50, 50))
        assert hungarian_match(cost).tolist() == hungarian_match(cost + shift).tolist()


def test_match_ties_go_to_lowest_prediction():
    assert hungarian_match(np.zeros((4, 1))).tolist() == [0]
    assert hungarian_match(np.zeros((4, 2))).tolist() == [0, 1]


def test_match_errors():
    with pytest.raises(MatchingError):
        hungarian_match(np.zeros((2, 3)))
    with pytest.raises(MatchingError):
        hungarian_match(np.array([[np.nan, 1.0], [1.0, 1.0]]))
    with pytest.raises(MatchingError):
        hungarian_match(np.array([[np.inf], [1.0]]))
    assert hungarian_match(np.zeros((3, 0))).tolist() == []


# ---------------------------------------------------------------------- cost


def _layer(logits, vec):
    vec = np.asarray(vec, dtype=np.float64)
    return LayerPrediction(Tensor(np.asarray(logits, dtype=np.float64)), Tensor(vec), vec[:, :3].copy())


def test_cost_one_by_one_by_hand():
    cfg = _cfg(num_classes=2)
    loss = LossConfig()
    gt = Box3D((4.0, -2.0, 0.5), (2.0, 1.5, 4.0), 0.3, (1.0, 0.5), 1)
    vec = np.array([[0.55, 0.47, 0.45, 0.6, 0.4, 1.3, 0.2, 0.95, 0.8, 0.7]])
    logits = np.array([[-1.0, 0.7]])
    cost = build_cost(_layer(logits, vec), [gt], cfg, loss)
    assert cost.shape == (1, 1)
    # classification part, class 1 logit 0.7
    p = _sigmoid(0.7)
    pos = -0.25 * (1 - p) ** 2 * math.log(p)
    neg = -0.75 * p**2 * math.log(1 - p)
    # regression part against the hand-encoded target
    target = [(4 + 32) / 64, (-2 + 32) / 64, (0.5 + 3) / 8, math.log(2.0), math.log(1.5), math.log(4.0), math.sin(0.3), math.cos(0.3), 1.0, 0.5]
    # center dims weighted by the window extent (64, 64, 8 m) so they count in metres
    weights = [64.0, 64.0, 8.0] + list(loss.code_weights[3:])
    l1 = sum(w * abs(a - b) for w, a, b in zip(weights, vec[0], target))
    assert cost[0, 0] == pytest.approx(2.0 * (pos - neg) + 0.25 * l1, abs=1e-9)
    plain = build_cost(_layer(logits, vec), [gt], cfg, LossConfig(center_in_metres=False))
    l1_plain = sum(w * abs(a - b) for w, a, b in zip(loss.code_weights, vec[0], target))
    assert plain[0, 0] == pytest.approx(2.0 * (pos - neg) + 0.25 * l1_plain, abs=1e-9)


def test_center_cost_counts_in_metres():
    cfg = _cfg()
    gt = Box3D((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), 0.0, (0, 0), 0)
    vec = np.repeat(encode_targets([gt], cfg), 2, axis=0)
    vec[1, 0] += 1.0 / 64.0  # one metre along x
    cost = build_cost(_layer(np.zeros((2, 3)), vec), [gt], cfg)
    assert cost[1, 0] - cost[0, 0] == pytest.approx(0.25 * 1.0, abs=1e-12)


def test_cost_shape_and_perfect_regression():
    cfg = _cfg()
    gts = [Box3D((1.0, 2.0, 0.0), (1.0, 1.0, 1.0), 0.0, (0, 0), 0), Box3D((-5.0, 3.0, 1.0), (2.0, 1.0, 4.0), 1.0, (1, 1), 2)]
    vec = np.zeros((10, REG_DIM))
    vec[:2] = encode_targets(gts, cfg)
    cost = build_cost(_layer(np.zeros((10, 3)), vec), gts, cfg)
    assert cost.shape == (10, 2)
    # exact regression leaves only the classification part, which is the
    # same for every pair that shares the logit: pos − neg = −0.75·log(1 − σ(30))
    logits = np.full((10, 3), -30.0)
    logits[0, 0] = logits[1, 2] = 30.0
    cost = build_cost(_layer(logits, vec), gts, cfg)
    p = _sigmoid(30.0)
    log_q = -30.0 - math.log1p(math.exp(-30.0))  # log(1 − σ(30)) without cancellation
    cls_only = 2.0 * (-0.25 * (1 - p) ** 2 * math.log(p) + 0.75 * p**2 * log_q)
    assert cost[0, 0] == pytest.approx(cls_only, rel=1e-9)
    assert cost[1, 1] == pytest.approx(cls_only, rel=1e-9)
    assert np.argmin(cost[:, 0]) == 0 and np.argmin(cost[:, 1]) == 1


# --------------------------------------------------------------------- focal


def test_focal_gamma_zero_is_half_bce():
    rng = np.random.default_rng(3)
    x = rng.normal(scale=3, size=(6, 4))
    tgt = np.array([0, -1, 3, 2, -1, 1])
    got = float(focal_loss(Tensor(x), tgt, alpha=0.5, gamma=0.0, normalizer=1.0).data)
    bce = 0.0
    for i in range(6):
        for k in range(4):
            y = 1.0 if tgt[i] == k else 0.0
            p = _sigmoid(x[i, k])
            bce -= y * math.log(p) + (1 - y) * math.log(1 - p)
    assert got == pytest.approx(0.5 * bce, rel=1e-12)


def test_focal_confident_positive_vanishes():
    vals = [float(focal_loss(Tensor(np.array([[x]])), np.array([0])).data) for x in (2.0, 8.0, 20.0, 40.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-30


def test_focal_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    x = rng.normal(scale=2, size=(5, 3))
    tgt = np.array([2, -1, 0, 1, -1])
    t = Tensor(x.copy(), requires_grad=True)
    focal_loss(t, tgt).backward()
    num = central_diff(lambda v: float(focal_loss(Tensor(v), tgt).data), x)
    assert rel_err(t.grad, num) < 1e-5


# ------------------------------------------------------------------ set loss


@pytest.fixture(scope="module")
def scene():
    return generate_scene(SceneSpec(seed=2, num_objects=3), 1)


def _model_and_preds(cfg, scene):
    model = Detector(cfg)
    feats = model.encode(prepare_inputs(scene, cfg))
    return model, feats, forward(model, feats)


def test_set_loss_total_recomputes(scene):
    cfg = _cfg()
    model, feats, preds = _model_and_preds(cfg, scene)
    aux = aux_dense_loss(model, feats["lidar"], scene.gt_boxes)
    total, bd = set_loss(preds, scene.gt_boxes, cfg, LossConfig(), aux=aux)
    manual = 2.0 * sum(bd.cls) + 0.25 * sum(bd.reg) + 0.5 * bd.aux
    assert abs(float(total.data) - manual) < 1e-9
    assert abs(bd.total - manual) < 1e-9
    assert len(bd.cls) == len(bd.reg) == cfg.num_layers
    assert all(v >= 0 for v in [*bd.cls, *bd.reg, bd.aux])


def test_disabling_aux_changes_only_aux(scene):
    cfg = _cfg()
    model, feats, preds = _model_and_preds(cfg, scene)
    aux = aux_dense_loss(model, feats["lidar"], scene.gt_boxes)
    _, with_aux = set_loss(preds, scene.gt_boxes, cfg, aux=aux)
    _, without = set_loss(preds, scene.gt_boxes, cfg)
    assert with_aux.cls == without.cls and with_aux.reg == without.reg
    assert without.aux == 0.0 and with_aux.aux > 0
    assert with_aux.total - without.total == pytest.approx(0.5 * with_aux.aux, abs=1e-12)


def test_zero_gts(scene):
    cfg = _cfg()
    _, _, preds = _model_and_preds(cfg, scene)
    _, bd = set_loss(preds, [], cfg)
    assert bd.reg == [0.0] * cfg.num_layers
    assert all(c > 0 for c in bd.cls)


def test_zero_gts_push_scores_down(scene):
    cfg = _cfg()
    model, feats, _ = _model_and_preds(cfg, scene)
    last_bias = model.blocks[-1].cls.layers[-1].bias
    preds = forward(model, feats)
    total, _ = set_loss(preds, [], cfg)
    total.backward()
    assert np.all(last_bias.grad > 0)  # gradient descent lowers every class bias


def test_perfect_predictions_give_near_zero_loss():
    cfg = _cfg(num_classes=3)
    gts = [Box3D((1.0, 2.0, 0.0), (1.0, 1.0, 1.0), 0.0, (0, 0), 0), Box3D((-5.0, 3.0, 1.0), (2.0, 1.0, 4.0), 1.0, (1, 1), 2)]
    vec = np.tile(encode_targets(gts[:1], cfg), (10, 1))
    vec[:2] = encode_targets(gts, cfg)
    logits = np.full((10, 3), -40.0)
    logits[0, 0] = logits[1, 2] = 40.0
    preds = [_layer(logits, vec) for _ in range(3)]
    _, bd = set_loss(preds, gts, cfg)
    assert bd.reg == [0.0, 0.0, 0.0]
    assert max(bd.cls) < 1e-20


def test_velocity_absent_gets_no_regression_weight():
    cfg = _cfg()
    gt = [Box3D((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), 0.0, (5.0, -3.0), 0)]
    vec = encode_targets(gt, cfg)
    vec[0, 8:] = 0.0  # wrong velocity only
    preds = [_layer(np.zeros((1, 3)), vec)]
    _, with_vel = set_loss(preds, gt, cfg, velocity_available=True)
    _, no_vel = set_loss(preds, gt, cfg, velocity_available=False)
    assert with_vel.reg[0] > 0 and no_vel.reg[0] == 0.0


def test_gradient_reaches_every_layer_and_encoder(scene):
    cfg = _cfg(modalities=("lidar", "camera", "radar"))
    model, feats, preds = _model_and_preds(cfg, scene)
    aux = aux_dense_loss(model, feats["lidar"], scene.gt_boxes)
    total, _ = set_loss(preds, scene.gt_boxes, cfg, aux=aux)
    total.backward()
    for i, block in enumerate(model.blocks):
        for name in ("cls.layers.1.weight", "reg.layers.1.weight", "sampler.lid_offsets.weight", "sampler.cam_weights.weight", "sampler.rad_weights.weight", "sampler.fusion.layers.0.weight"):
            g = dict(block.named_parameters())[name].grad
            assert g is not None and np.linalg.norm(g) > 0, (i, name)
    for enc in ("lidar_encoder", "camera_encoder", "radar_encoder", "aux_head"):
        grads = [p.grad for _, p in getattr(model, enc).named_parameters()]
        assert all(g is not None and np.linalg.norm(g) > 0 for g in grads), enc
    assert np.linalg.norm(model.ref_logits.grad) > 0


# ----------------------------------------------------------------------- aux


def test_aux_targets():
    cfg = _cfg()
    assert not np.any(aux_targets([], cfg, (64, 64)))
    t = aux_targets([Box3D((3.1, -7.9, 0.0), (1, 1, 1), 0.0)], cfg, (64, 64))
    assert t.sum() == 1
    row, col = np.argwhere(t)[0]
    pitch = 64.0 / 63.0
    assert col == round((3.1 + 32) / pitch) and row == round((-7.9 + 32) / pitch)


def test_aux_requires_lidar(scene):
    cfg = _cfg(modalities=("camera",))
    model = Detector(cfg)
    with pytest.raises(ModalityError):
        aux_dense_loss(model, None, scene.gt_boxes)
