import pytest
from hypothesis import given
from hypothesis import strategies as st

from teachset.session.flow import (
    Capture,
    Capturing,
    Idle,
    IllegalTransition,
    Name,
    Naming,
    Ok,
    Ready,
    Recognize,
    Retrain,
    StartTraining,
    Summarizing,
    Teach,
    TeachingFlow,
    Training,
    TrainingDone,
    step,
)


def test_last_capture_moves_to_summary():
    assert step(Capturing("obj", 29), Capture()) == Summarizing("obj")
    assert step(Capturing("obj", 3), Capture()) == Capturing("obj", 4)


def test_retrain_discards_set():
    f = TeachingFlow(photos_per_object=3)
    f.handle(Teach("obj"))
    for k in range(3):
        f.handle(Capture(), f"p{k}")
    assert f.state == Summarizing("obj") and f.current_photos == ["p0", "p1", "p2"]
    f.handle(Retrain())
    assert f.state == Capturing("obj", 0)
    assert f.current_photos == []


def test_training_blocks_scan_and_teach():
    with pytest.raises(IllegalTransition):
        step(Training(), Recognize())
    with pytest.raises(IllegalTransition):
        step(Training(), Teach("x"))
    assert step(Training(), TrainingDone()) == Ready()
    assert step(Training(), TrainingDone(False)) == Idle()


def test_recognize_needs_a_model():
    with pytest.raises(IllegalTransition):
        step(Idle(), Recognize())
    assert step(Idle(), Recognize(), model_available=True) == Idle()
    assert step(Ready(), Recognize()) == Ready()


def test_full_happy_path():
    f = TeachingFlow(photos_per_object=2)
    for obj in ("a", "b"):
        f.handle(Teach(obj))
        f.handle(Capture())
        f.handle(Capture())
        f.handle(Ok())
        assert f.state == Naming(obj)
        f.handle(Name(obj.upper()))
    assert f.named == {"a": "A", "b": "B"}
    f.handle(StartTraining())
    f.handle(TrainingDone())
    assert f.state == Ready()
    f.handle(Recognize())


def test_rejected_event_leaves_state_and_logs():
    f = TeachingFlow()
    assert not f.offer(Capture())
    assert f.state == Idle()
    assert len(f.diagnostics) == 1 and "Capture" in f.diagnostics[0]
    f.handle(Teach("o"))
    for _ in range(30):
        f.handle(Capture())
    with pytest.raises(IllegalTransition):
        f.handle(Capture())
    assert f.state == Summarizing("o")


def test_empty_label_rejected():
    with pytest.raises(IllegalTransition):
        step(Naming("o"), Name("  "))


events = st.one_of(
    st.builds(Teach, st.sampled_from(["a", "b"])),
    st.just(Capture()),
    st.just(Ok()),
    st.just(Retrain()),
    st.builds(Name, st.sampled_from(["snack", ""])),
    st.just(StartTraining()),
    st.builds(TrainingDone, st.booleans()),
    st.just(Recognize()),
)


@given(st.lists(events, max_size=80), st.integers(1, 6))
def test_random_event_sequences_are_safe(seq, limit):
    f = TeachingFlow(photos_per_object=limit)
    for ev in seq:
        before = f.state
        photos_before = list(f.current_photos)
        ok = f.offer(ev, "img")
        if not ok:
            assert f.state == before
            assert f.current_photos == photos_before
        if isinstance(before, Training) and isinstance(ev, Recognize):
            assert not ok
        if isinstance(f.state, Capturing):
            assert 0 <= f.state.count <= limit
            assert len(f.current_photos) == f.state.count
        if isinstance(f.state, Summarizing):
            assert len(f.current_photos) == limit
