import copy
import math

import numpy as np
import pytest
import torch

from conftest import tiny_train_config
from finemanip.errors import NonFiniteLossError
from finemanip.models import GroupingCache, ModelConfig, prepare_steps
from finemanip.prompts import build_prompt_bases
from finemanip.training import (
    LOSS_TERMS,
    PROMPT_TERMS,
    LossReport,
    TrainConfig,
    build_network,
    make_optimizer,
    total_loss,
    train,
    train_step,
)
from finemanip.training.gradcheck import gradcheck_all


@pytest.fixture(scope="module")
def base(small_episodes):
    return build_prompt_bases(small_episodes)


def _setup(small_episodes, **kw):
    cfg = tiny_train_config(**kw)
    torch.manual_seed(0)
    net = build_network(cfg)
    cache = GroupingCache(net.cfg)
    steps = prepare_steps(small_episodes, cache)
    return cfg, net, cache, steps


def test_config_validation_and_roundtrip(tmp_path):
    with pytest.raises(ValueError):
        TrainConfig(w_bce=-1.0)
    with pytest.raises(ValueError):
        TrainConfig.from_json({"bogus": 1})
    off = TrainConfig(prompt_enabled=False, lambda_mm=0.5)
    assert all(off.term_weights()[t] == 0.0 for t in PROMPT_TERMS)
    assert off.with_prompts(True).lambda_mm == TrainConfig().lambda_mm
    cfg = TrainConfig(seed=3, w_rot=2.0)
    cfg.save(tmp_path / "c.json")
    again = TrainConfig.load(tmp_path / "c.json")
    assert again == cfg and again.digest() == cfg.digest()
    assert TrainConfig.load().version == cfg.version


def test_loss_report_check():
    w = {t: 1.0 for t in LOSS_TERMS}
    terms = {t: 0.5 for t in LOSS_TERMS}
    assert LossReport(terms, w, 5.0).check()
    assert not LossReport(terms, w, 5.1).check()


def test_total_loss_terms(small_episodes, base):
    cfg, net, cache, steps = _setup(small_episodes)
    batch = steps[:6]
    total, rep, extras = total_loss(net, batch, base, cfg, 0, cache)
    assert rep.check() and math.isfinite(rep.total)
    assert set(rep.terms) == set(LOSS_TERMS)
    assert all(v >= 0 for k, v in rep.terms.items() if k != "mm")
    doubled = cfg.replace(w_bce=2 * cfg.w_bce)
    total2, rep2, _ = total_loss(net, batch, base, doubled, 0, cache)
    assert rep2.total - rep.total == pytest.approx(rep.terms["bce"] * cfg.w_bce, rel=1e-5)


def test_prompts_off_is_supervised_only(small_episodes, base):
    cfg, net, cache, steps = _setup(small_episodes, prompt_enabled=False)
    _, rep, _ = total_loss(net, steps[:6], base, cfg, 0, cache)
    assert all(rep.terms[t] == 0.0 for t in PROMPT_TERMS)
    assert rep.total == pytest.approx(sum(rep.terms[t] for t in LOSS_TERMS if t not in PROMPT_TERMS), rel=1e-6)


def test_zero_lr_leaves_weights(small_episodes, base):
    cfg, net, cache, steps = _setup(small_episodes, learning_rate=0.0, weight_decay=0.0)
    before = copy.deepcopy(net.state_dict())
    train_step(net, make_optimizer(net, cfg), steps[:4], base, cfg, 0, cache)
    for k, v in net.state_dict().items():
        assert torch.equal(v, before[k]), k


def test_nonfinite_weight_raises(small_episodes, base):
    cfg, net, cache, steps = _setup(small_episodes)
    with torch.no_grad():
        net.actor.move[0].weight[0, 0] = float("nan")
    with pytest.raises(NonFiniteLossError) as info:
        train_step(net, make_optimizer(net, cfg), steps[:4], base, cfg, 0, cache)
    assert info.value.term == "move"


def test_prompt_affordance_shares_weights(small_episodes, base):
    cfg, net, cache, steps = _setup(small_episodes)
    entry = base.perception["handle"][0]
    g = [cache.get(entry.ref, entry.cloud)]
    _, f_before, _ = net.perception_prompt_features([entry], g)
    train_step(net, make_optimizer(net, cfg), steps[:4], base, cfg, 0, cache)
    f_noun, f_after, scores = net.perception_prompt_features([entry], g)
    assert not torch.equal(f_before, f_after)
    # recompute through the main modules: the prompt pass owns no separate copy
    per_point, _ = net.encode_clouds([entry.cloud], g)
    f_s = net.state(net._t(entry.agent_state[None]))
    f_L = net.encode_text(entry.high_level, fine=False)[None]
    zeros = per_point.new_zeros(1, net.affordance.prompt_dim)
    want = net.affordance(per_point, f_s, f_noun, f_L, zeros)
    torch.testing.assert_close(scores, want, rtol=0, atol=0)


def test_bit_identical_runs(small_episodes, base):
    cfg = tiny_train_config(seed=4)
    a = train(cfg, small_episodes, base, max_steps=4)
    b = train(cfg, small_episodes, base, max_steps=4)
    assert [r.total for r in a.step_reports] == [r.total for r in b.step_reports]
    for (k, v), w in zip(a.net.state_dict().items(), b.net.state_dict().values()):
        assert v.numpy().tobytes() == w.numpy().tobytes(), k
    c = train(cfg.replace(seed=5), small_episodes, base, max_steps=4)
    assert [r.total for r in c.step_reports] != [r.total for r in a.step_reports]


def test_checkpoints_written(tmp_path, small_episodes, base):
    cfg = tiny_train_config(epochs=2)
    res = train(cfg, small_episodes[:4], base, small_episodes[4:6], out_dir=tmp_path, max_steps=3)
    assert (tmp_path / "last").is_dir() and (tmp_path / "best").is_dir() and (tmp_path / "config.json").exists()
    assert len(res.history) == 1 and res.best_epoch == 0


def overfit(episodes, base, n_steps=100, seed=0):
    """Train on ``episodes`` only and return (initial, final) total loss on the full set."""
    model = ModelConfig.tiny(feature_dim=32, token_dim=32, hidden=32, state_hidden=32).to_json()
    cfg = tiny_train_config(feature_dim=32, model=model, learning_rate=3e-3, weight_decay=0.0, seed=seed)
    torch.manual_seed(seed)
    net = build_network(cfg)
    opt = make_optimizer(net, cfg)
    cache = GroupingCache(net.cfg)
    steps = prepare_steps(episodes, cache)
    reports = [train_step(net, opt, steps, base, cfg, 0, cache) for _ in range(n_steps)]
    return reports[0].total, reports[-1].total


def test_overfit_five_episodes(small_episodes, base):
    eps = small_episodes[:5]
    first, last = overfit(eps, base)
    assert last < 0.1 * first, (first, last)


def test_gradcheck_all_terms():
    for r in gradcheck_all(seed=0):
        assert r.passed(1e-4), (r.term, r.max_rel_error)
        assert r.n_inputs > 0


def test_batch_order_seeded():
    from finemanip.training.trainer import batches

    a = batches(23, 4, 0, 1)
    assert np.array_equal(np.concatenate(a), np.concatenate(batches(23, 4, 0, 1)))
    assert sorted(np.concatenate(a).tolist()) == list(range(23))
    assert not np.array_equal(np.concatenate(a), np.concatenate(batches(23, 4, 0, 2)))
