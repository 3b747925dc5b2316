from types import SimpleNamespace

import numpy as np
import pytest
import torch

from finemanip.data import DatasetSplit
from finemanip.errors import MissingKeyError, SplitLeakageError, VocabularyError
from finemanip.models import FineManipNet, GroupingCache, ModelConfig
from finemanip.prompts import (
    build_prompt_bases,
    load_prompt_bases,
    retrieve_action_prompt,
    retrieve_perception_prompt,
    sample_consistency_pairs,
)


@pytest.fixture(scope="module")
def base(small_episodes):
    return build_prompt_bases(small_episodes)


@pytest.fixture(scope="module")
def pnet():
    torch.manual_seed(0)
    return FineManipNet(ModelConfig.tiny(prompt_enabled=True)).double()


def test_counts(small_episodes, base):
    n_steps = sum(len(e.steps) for e in small_episodes)
    assert sum(len(v) for v in base.action.values()) == n_steps
    assert sum(len(v) for v in base.perception.values()) == n_steps
    verbs = {s.verb for e in small_episodes for s in e.steps}
    assert set(base.action) == verbs
    for e in small_episodes:
        for k, s in enumerate(e.steps):
            assert (e.episode_id, k) in {x.ref for x in base.action[s.verb]}
            assert (e.episode_id, k) in {x.ref for x in base.perception[s.noun]}
    refs = [x.ref for x in base.action[sorted(base.action)[0]]]
    assert refs == sorted(refs)


def test_grasp_handle_under_both_keys(small_episodes, base):
    ep = next(e for e in small_episodes if e.task == "slide-drawer-open")
    k = next(i for i, s in enumerate(ep.steps) if s.verb == "grasp")
    assert ep.steps[k].noun == "handle"
    assert (ep.episode_id, k) in {x.ref for x in base.action["grasp"]}
    assert (ep.episode_id, k) in {x.ref for x in base.perception["handle"]}


def test_leakage_guard(small_episodes):
    ids = [e.episode_id for e in small_episodes]
    split = DatasetSplit(train=ids[:6], val=ids[6:7], test=ids[7:], novel_tasks=set())
    with pytest.raises(SplitLeakageError):
        build_prompt_bases(small_episodes, split)
    b = build_prompt_bases(small_episodes[:6], split)
    assert b.episode_ids() <= set(split.train)


def test_unparseable_instruction(small_episodes):
    import copy

    ep = copy.deepcopy(small_episodes[0])
    ep.steps[0].instruction = "do something nice"
    with pytest.raises(VocabularyError):
        build_prompt_bases([ep])


def test_retrieval_rules(base, small_episodes):
    noun = "button"
    entries = base.perception[noun]
    own = entries[0].episode_id
    picks = {retrieve_perception_prompt(base, noun, own, s).episode_id for s in range(30)}
    assert own not in picks
    assert retrieve_perception_prompt(base, noun, own, 3) is retrieve_perception_prompt(base, noun, own, 3)
    # everything excluded: fall back to the full list
    all_eps = {e.episode_id for e in entries}
    assert retrieve_perception_prompt(base, noun, all_eps, 0) in entries
    with pytest.raises(MissingKeyError):
        retrieve_perception_prompt(base, "door", None, 0)
    with pytest.raises(MissingKeyError):
        retrieve_perception_prompt(base, "cup", None, 0)  # vocabulary noun absent from the base
    assert retrieve_action_prompt(base, "press", None, 1).verb == "press"
    with pytest.raises(MissingKeyError):
        retrieve_action_prompt(base, "jump", None, 0)


def test_single_entry_fallback(small_episodes):
    ep = small_episodes[0]
    b = build_prompt_bases([ep])
    noun = ep.steps[0].noun
    only = [e for e in b.perception[noun]]
    assert retrieve_perception_prompt(b, noun, ep.episode_id, 0) in only


def test_index_roundtrip(tmp_path, base, small_episodes):
    base.save(tmp_path / "p.json")
    loaded = load_prompt_bases(tmp_path / "p.json", small_episodes)
    assert loaded.index_json() == base.index_json()
    with pytest.raises(MissingKeyError):
        load_prompt_bases(tmp_path / "p.json", small_episodes[:1])


def test_consistency_pairs(base, small_episodes):
    s = lambda verb, noun, ep: SimpleNamespace(verb=verb, noun=noun, episode_id=ep)  # noqa: E731
    vp, _ = sample_consistency_pairs([s("press", "button", "x"), s("press", "button", "y")], base, 0)
    assert vp == [(0, 1)]
    assert base.action["reach"]
    vp, _ = sample_consistency_pairs([s("reach", "button", "x")], base, 0)
    assert len(vp) == 1 and vp[0][0] == 0 and vp[0][1].verb == "reach"
    single = build_prompt_bases(small_episodes[:1])
    verb = next(v for v, entries in single.action.items() if len(entries) == 1)
    vp, _ = sample_consistency_pairs([s(verb, "button", "x")], single, 0)
    assert vp == []


def test_prompt_features_shared_and_deterministic(pnet, base):
    cache = GroupingCache(pnet.cfg)
    e = base.perception["button"][0]
    g = [cache.get(e.ref, e.cloud)]
    f_noun, f_aff, scores = pnet.perception_prompt_features([e], g)
    assert f_noun.shape == (1, 8) and f_aff.shape == (1, 8) and scores.shape == (1, len(e.cloud))
    f_noun2, f_aff2, _ = pnet.perception_prompt_features([e], g)
    assert torch.equal(f_aff, f_aff2) and torch.equal(f_noun, f_noun2)
    a = base.action["press"][0]
    f_verb, f_vision, f_action = pnet.action_prompt_features([a], [cache.get(a.ref, a.cloud)])
    assert f_verb.shape == f_vision.shape == f_action.shape == (1, 8)
    assert torch.equal(f_action, pnet.action_prompt_features([a], [cache.get(a.ref, a.cloud)])[2])
    with torch.no_grad():
        pnet.affordance.net[0].weight[0, 0] += 1.0
    try:
        assert not torch.equal(f_aff, pnet.perception_prompt_features([e], g)[1])
    finally:
        with torch.no_grad():
            pnet.affordance.net[0].weight[0, 0] -= 1.0
