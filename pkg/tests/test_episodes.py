import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finemanip.data import (
    DatasetSplit,
    extract_keyframes,
    generate_instructions,
    keyframe_indices,
    load_dataset,
    load_episode,
    make_splits,
    record_episode,
    save_dataset,
    save_episode,
)
from finemanip.errors import (
    ChecksumMismatchError,
    CorruptHeaderError,
    InsufficientDataError,
    TooShortError,
    TruncatedDataError,
    VocabularyError,
)
from finemanip.evaluation import replay_episode
from finemanip.language import NOUNS, TEMPLATES, VERB_FAMILIES, parse_verb_noun
from finemanip.sim import ALL_TASKS, load_task, script_expert_demo


def brute_keyframes(vel, flags, eps):
    """Direct transcription of the keyframe rule, one candidate at a time."""
    n = len(vel)
    chosen = []
    for i in range(n):
        window = [vel[j] for j in range(i - 2, i + 3) if 0 <= j < n]
        is_min = all(vel[i] <= w for w in window)
        far_enough = len(chosen) == 0 or (i - chosen[-1]) >= 3
        cond1 = vel[i] < eps and is_min and far_enough
        cond2 = i >= 1 and flags[i] != flags[i - 1]
        if cond1 or cond2 or i == n - 1:
            chosen.append(i)
    return chosen


def random_profile(rng):
    n = int(rng.integers(2, 40))
    vel = rng.random(n) * 0.05
    vel[rng.random(n) < 0.25] = 0.0
    vel[rng.random(n) < 0.1] = 5e-4
    flags = np.ones(n, dtype=bool)
    for i in rng.choice(n, size=int(rng.integers(0, 3)), replace=False):
        flags[i:] = ~flags[i:]
    return vel, flags


def test_keyframes_match_oracle_100_profiles():
    rng = np.random.default_rng(0)
    for _ in range(100):
        vel, flags = random_profile(rng)
        assert keyframe_indices(vel, flags, 1e-3) == brute_keyframes(vel.tolist(), flags.tolist(), 1e-3)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from([0.0, 5e-4, 0.01, 0.3]), min_size=2, max_size=25), st.data())
def test_keyframes_property(vel, data):
    flags = data.draw(st.lists(st.booleans(), min_size=len(vel), max_size=len(vel)))
    got = keyframe_indices(vel, flags, 1e-3)
    assert got == brute_keyframes(vel, flags, 1e-3)
    assert got == sorted(set(got)) and got[-1] == len(vel) - 1


def test_keyframe_examples():
    assert keyframe_indices([0.5, 0.3, 0.0, 0.3, 0.5], [1] * 5, 0.01) == [2, 4]
    flags = [1] * 6 + [0] * 4
    assert keyframe_indices([0.1] * 10, flags, 0.01) == [6, 9]
    with pytest.raises(TooShortError):
        keyframe_indices([0.0], [1], 0.01)


def test_expert_keyframes_are_waypoints():
    for name in ALL_TASKS:
        traj = script_expert_demo(load_task(name), 2, n_points=64)
        assert [k.frame_index for k in extract_keyframes(traj)] == traj.waypoint_frames


def test_keyframe_quaternion_canonical():
    traj = script_expert_demo(load_task("pull-lever"), 1, n_points=64)
    for kf in extract_keyframes(traj):
        assert kf.action.a_rot[0] >= 0
        assert np.linalg.norm(kf.action.a_rot) == pytest.approx(1.0)


def test_instruction_templates_cover_vocabulary():
    for verb, family in TEMPLATES.items():
        assert len(family) >= 10
        for t in family:
            for noun in NOUNS:
                assert parse_verb_noun(t.format(obj=noun)) == (verb, noun)


def test_generate_instructions_seeded():
    spec = load_task("slide-drawer-open")
    kfs = extract_keyframes(script_expert_demo(spec, 0, n_points=64))
    a = generate_instructions(kfs, spec, 1)
    b = generate_instructions(kfs, spec, 2)
    assert a.fine_grained != b.fine_grained
    assert [parse_verb_noun(t) for t in a.fine_grained] == [parse_verb_noun(t) for t in b.fine_grained]
    assert generate_instructions(kfs, spec, 1) == a
    assert len(a.fine_grained) == len(kfs) and a.high_level == spec.high_level
    grasp = [t for t, k in zip(a.fine_grained, kfs) if k.verb == "grasp"][0]
    assert "handle" in grasp.split() and set(grasp.split()) & set(VERB_FAMILIES["grasp"])
    with pytest.raises(ValueError):
        generate_instructions([], spec, 0)
    kfs[0].verb = "juggle"
    with pytest.raises(VocabularyError):
        generate_instructions(kfs, spec, 0)


def test_episode_observations(small_episodes):
    spec = load_task("press-button")
    traj = script_expert_demo(spec, 0, n_points=128)
    ep = record_episode(spec, 0, n_points=128)
    kfs = extract_keyframes(traj)
    np.testing.assert_array_equal(ep.steps[0].observation, traj.clouds[0].astype(np.float32))
    for k in range(1, len(ep.steps)):
        np.testing.assert_array_equal(ep.steps[k].observation, traj.clouds[kfs[k - 1].frame_index].astype(np.float32))
    for s in ep.steps:
        assert parse_verb_noun(s.instruction) == (s.verb, s.noun)


def test_replay_closure_50_episodes():
    n = 0
    for name in ALL_TASKS:
        spec = load_task(name)
        for seed in range(5):
            ep = record_episode(spec.with_variation(seed), 100 + seed, n_points=64)
            assert replay_episode(ep).success
            n += 1
    assert n >= 50


def test_two_seeds_differ():
    spec = load_task("lift-block")
    a, b = record_episode(spec, 1, n_points=64), record_episode(spec, 2, n_points=64)
    assert a.task == b.task and not np.array_equal(a.steps[0].observation, b.steps[0].observation)


def _eq_episodes(a, b):
    assert a.episode_id == b.episode_id and a.instruction_set == b.instruction_set
    for s, t in zip(a.steps, b.steps):
        assert s.observation.tobytes() == t.observation.tobytes()
        assert s.agent_state.tobytes() == t.agent_state.tobytes()
        assert s.action.to_json() == t.action.to_json()
        assert (s.instruction, s.verb, s.noun) == (t.instruction, t.verb, t.noun)
        np.testing.assert_array_equal(s.contact, t.contact)


def test_roundtrip(tmp_path, small_episodes):
    for ep in small_episodes[:3]:
        d = save_episode(ep, tmp_path / ep.episode_id)
        _eq_episodes(ep, load_episode(d))


def test_dataset_roundtrip(tmp_path, small_episodes):
    save_dataset(small_episodes, tmp_path)
    loaded = {e.episode_id: e for e in load_dataset(tmp_path)}
    for ep in small_episodes:
        _eq_episodes(ep, loaded[ep.episode_id])


def test_load_errors(tmp_path, small_episodes):
    ep = small_episodes[0]
    d = save_episode(ep, tmp_path / "ep")
    frames = (d / "frames.bin").read_bytes()
    (d / "frames.bin").write_bytes(frames[:-1])
    with pytest.raises(TruncatedDataError):
        load_episode(d)
    (d / "frames.bin").write_bytes(frames[:-4] + b"\0\0\0\0")
    with pytest.raises(ChecksumMismatchError):
        load_episode(d)
    (d / "frames.bin").write_bytes(frames)
    meta = json.loads((d / "meta.json").read_text())
    meta["n_points"] += 1
    (d / "meta.json").write_text(json.dumps(meta))
    with pytest.raises(ChecksumMismatchError):
        load_episode(d)
    (d / "meta.json").write_text("{not json")
    with pytest.raises(CorruptHeaderError):
        load_episode(d)
    del meta["sha256"]
    (d / "meta.json").write_text(json.dumps(meta))
    with pytest.raises(CorruptHeaderError):
        load_episode(d)


def test_split_ratio():
    pairs = [(f"a-{i}", "a") for i in range(120)]
    s = make_splits(pairs, set(), 0)
    assert (len(s.train), len(s.val), len(s.test)) == (100, 10, 10)
    assert make_splits(pairs, set(), 0) == s
    assert make_splits(pairs, set(), 1) != s


def test_split_novel_and_errors():
    pairs = [(f"a-{i}", "a") for i in range(24)] + [(f"n-{i}", "n") for i in range(7)]
    s = make_splits(pairs, {"n"}, 3)
    assert not any(i.startswith("n-") for i in s.train)
    assert sum(i.startswith("n-") for i in s.val) == 4 and sum(i.startswith("n-") for i in s.test) == 3
    with pytest.raises(InsufficientDataError):
        make_splits([(f"a-{i}", "a") for i in range(11)], set(), 0)
    with pytest.raises(InsufficientDataError):
        make_splits(pairs, {"n", "missing"}, 0)


@settings(max_examples=30, deadline=None)
@given(st.dictionaries(st.sampled_from("abcdef"), st.integers(12, 60), min_size=1), st.integers(0, 99))
def test_split_disjoint_cover(counts, seed):
    pairs = [(f"{t}-{i}", t) for t, n in counts.items() for i in range(n)]
    s = make_splits(pairs, set(), seed)
    ids = s.train + s.val + s.test
    assert sorted(ids) == sorted(p[0] for p in pairs)
    assert DatasetSplit.from_json(s.to_json()) == s
