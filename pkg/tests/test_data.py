import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptseg import data
from promptseg.data import (
    BEGIN_KEY,
    END_KEY,
    GestureVocabulary,
    Transcript,
    TranscriptRecord,
    fixed_split,
    generate_synthetic_corpus,
    louo_splits,
    parse_transcript,
    read_features,
    read_frames,
    synthetic_vocabulary,
    to_label_stream,
    write_features,
    write_frames,
    zero_shot_filter,
)
from promptseg.errors import ParameterError, ParseError, SplitError, VocabularyError
from promptseg.sampling import FrameClip


class TestVocabulary:
    def test_placeholders_reserved(self):
        vocab = synthetic_vocabulary(4)
        assert vocab.description(BEGIN_KEY) == "Waiting and preparing for the surgery"
        assert vocab.description(END_KEY) == "Finishing the surgery"
        assert vocab.placeholder_keys == (BEGIN_KEY, END_KEY)

    def test_jigsaws_table(self):
        vocab = GestureVocabulary(data.JIGSAWS_GESTURES)
        assert vocab.description("G9") == "Using right hand to help tighten suture"
        assert len(vocab.gesture_keys) == 15
        assert vocab.n_labels == 17

    def test_unknown_index(self):
        vocab = synthetic_vocabulary(3)
        with pytest.raises(VocabularyError):
            vocab.description("G99")

    def test_round_trip_text(self):
        vocab = GestureVocabulary(data.JIGSAWS_GESTURES)
        again = GestureVocabulary.from_text(vocab.to_text())
        assert again.keys == vocab.keys
        assert again.description("G13") == vocab.description("G13")

    def test_bad_key_rejected(self):
        with pytest.raises(VocabularyError):
            GestureVocabulary({"H1": "something"})


class TestParseTranscript:
    def test_minimal_two_records(self):
        t = parse_transcript("0 9 G1\n10 19 G2", frame_count=20)
        assert len(t.records) == 2
        assert t.records[1] == TranscriptRecord(10, 19, "G2")

    def test_boundary_gaps_preserved(self):
        t = parse_transcript("5 9 G1", frame_count=12)
        assert t.records == [TranscriptRecord(5, 9, "G1")]
        stream = to_label_stream(t)
        assert stream[:5] == [BEGIN_KEY] * 5
        assert stream[10:] == [END_KEY] * 2

    def test_overlap_names_line(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_transcript("0 9 G1\n5 14 G2", frame_count=20)

    def test_interior_gap_rejected(self):
        with pytest.raises(ParseError, match="gap"):
            parse_transcript("0 4 G1\n7 9 G2", frame_count=10)

    def test_inversion_rejected(self):
        with pytest.raises(ParseError, match="line 1"):
            parse_transcript("9 0 G1", frame_count=10)

    def test_unknown_gesture_vs_vocab(self):
        vocab = synthetic_vocabulary(2)
        with pytest.raises(ParseError, match="G7"):
            parse_transcript("0 4 G7", frame_count=5, vocab=vocab)

    def test_out_of_range(self):
        with pytest.raises(ParseError):
            parse_transcript("0 10 G1", frame_count=10)


class TestLabelStream:
    def test_no_gaps(self):
        t = parse_transcript("0 9 G1", frame_count=10)
        assert to_label_stream(t) == ["G1"] * 10

    def test_forced_placeholders(self):
        t = parse_transcript("3 5 G1", frame_count=8)
        assert to_label_stream(t) == [BEGIN_KEY] * 3 + ["G1"] * 3 + [END_KEY] * 2

    @given(st.data())
    @settings(max_examples=60, deadline=None)
    def test_against_frame_loop_oracle(self, data_):
        frame_count = data_.draw(st.integers(min_value=4, max_value=60))
        head = data_.draw(st.integers(min_value=0, max_value=frame_count - 2))
        records = []
        frame = head
        gesture = 1
        while frame < frame_count - 1 and data_.draw(st.booleans()):
            end = data_.draw(st.integers(min_value=frame, max_value=frame_count - 1))
            records.append(TranscriptRecord(frame, end, f"G{gesture}"))
            gesture += 1
            frame = end + 1
        t = Transcript("v", records, frame_count, "u")
        stream = to_label_stream(t)

        expected = []
        for i in range(frame_count):
            label = None
            for r in records:
                if r.start <= i <= r.end:
                    label = r.gesture
            if label is None:
                label = BEGIN_KEY if (records and i < records[0].start) or not records else END_KEY
            expected.append(label)
        assert stream == expected
        assert len(stream) == frame_count


def _transcripts(users):
    out = []
    for i, user in enumerate(users):
        out.append(Transcript(f"v{i:02d}", [TranscriptRecord(0, 9, "G1")], 10, user))
    return out


class TestSplits:
    def test_eight_users_eight_folds(self):
        folds = louo_splits(_transcripts([f"s{i}" for i in range(8)]))
        assert len(folds) == 8

    def test_two_users_minimal(self):
        folds = louo_splits(_transcripts(["a", "b"]))
        assert folds[0] == (["v01"], ["v00"])
        assert folds[1] == (["v00"], ["v01"])

    def test_partition_property(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            users = [f"u{rng.integers(2, 6)}" for _ in range(int(rng.integers(2, 12)))]
            if len(set(users)) < 2:
                continue
            transcripts = _transcripts(users)
            folds = louo_splits(transcripts)
            all_ids = sorted(t.video_id for t in transcripts)
            tested = sorted(v for _, test in folds for v in test)
            assert tested == all_ids
            for train, test in folds:
                assert not set(train) & set(test)
                assert sorted(train + test) == all_ids

    def test_single_user_rejected(self):
        with pytest.raises(SplitError):
            louo_splits(_transcripts(["only", "only"]))

    def test_fixed_split_seeded(self):
        transcripts = _transcripts([f"u{i}" for i in range(12)])
        one = fixed_split(transcripts, n_test=4, seed=5)
        two = fixed_split(transcripts, n_test=4, seed=5)
        assert one == two
        train, test = one[0]
        assert len(test) == 4 and len(train) == 8

    def test_fixed_split_explicit(self):
        transcripts = _transcripts(["a", "b", "c"])
        [(train, test)] = fixed_split(transcripts, test_videos=["v01"])
        assert test == ["v01"] and train == ["v00", "v02"]
        with pytest.raises(SplitError):
            fixed_split(transcripts, test_videos=["nope"])


def _clip(labels):
    return FrameClip(np.zeros((16, 2, 2)), list(labels), "v", 0, 1)


class TestZeroShotFilter:
    def test_identity_when_all_allowed(self):
        clips = [_clip(["G1"] * 16), _clip(["G2"] * 8 + ["G3"] * 8)]
        assert zero_shot_filter(clips, {"G1", "G2", "G3"}) == clips

    def test_drops_out_of_subset(self):
        clip = _clip(["G1"] * 15 + ["G12"])
        assert zero_shot_filter([clip], {f"G{i}" for i in range(1, 6)}) == []

    def test_placeholders_always_allowed(self):
        clip = _clip([BEGIN_KEY] * 4 + ["G2"] * 8 + [END_KEY] * 4)
        assert zero_shot_filter([clip], {"G2"}) == [clip]

    def test_matches_scan_oracle_and_idempotent(self):
        rng = np.random.default_rng(7)
        keys = [f"G{i}" for i in range(1, 9)] + [BEGIN_KEY, END_KEY]
        clips = [_clip([keys[i] for i in rng.integers(0, len(keys), 16)]) for _ in range(60)]
        allowed = {"G1", "G3", "G5"}
        got = zero_shot_filter(clips, allowed)
        expected = []
        for clip in clips:
            ok = True
            for label in clip.labels:
                if label not in allowed and label not in (BEGIN_KEY, END_KEY):
                    ok = False
            if ok:
                expected.append(clip)
        assert got == expected
        assert zero_shot_filter(got, allowed) == got
        assert all(c in clips for c in got)

    def test_empty_allowed_rejected(self):
        with pytest.raises(ParameterError):
            zero_shot_filter([], set())


class TestSyntheticCorpus:
    def test_same_seed_bit_identical(self):
        a, _ = generate_synthetic_corpus(seed=3, n_videos=3, frames_per_video=96)
        b, _ = generate_synthetic_corpus(seed=3, n_videos=3, frames_per_video=96)
        for va, vb in zip(a, b):
            assert va.video_id == vb.video_id
            assert va.labels == vb.labels
            assert np.array_equal(va.frames, vb.frames)

    def test_zero_noise_degenerate(self):
        videos, vocab = generate_synthetic_corpus(
            seed=1, n_videos=2, frames_per_video=96, noise_level=0.0
        )
        video = videos[0]
        ids = vocab.encode(video.labels)
        for label in set(ids.tolist()):
            frames = video.frames[ids == label]
            assert np.all(frames == frames[0])

    def test_nearest_pattern_oracle(self):
        videos, vocab = generate_synthetic_corpus(seed=11, n_videos=4, frames_per_video=128)
        patterns = data.synthetic_patterns(11, vocab.n_labels)
        correct = 0
        total = 0
        for video in videos:
            ids = vocab.encode(video.labels)
            flat = video.frames.reshape(len(ids), -1)
            dists = ((flat[:, None, :] - patterns.reshape(vocab.n_labels, -1)[None]) ** 2).sum(-1)
            correct += int((dists.argmin(axis=1) == ids).sum())
            total += len(ids)
        assert correct / total >= 0.99

    def test_parameter_bounds(self):
        with pytest.raises(ParameterError):
            generate_synthetic_corpus(seed=0, n_gestures=1)
        with pytest.raises(ParameterError):
            generate_synthetic_corpus(seed=0, frames_per_video=32)

    def test_labels_cover_video(self):
        videos, _ = generate_synthetic_corpus(seed=5, n_videos=2, frames_per_video=100)
        for video in videos:
            assert len(video.labels) == 100
            assert video.labels[0] == BEGIN_KEY and video.labels[-1] == END_KEY


class TestFileFormats:
    def test_frames_round_trip(self, tmp_path):
        frames = np.random.default_rng(0).standard_normal((5, 4, 3))
        path = tmp_path / "frames.bin"
        write_frames(path, frames)
        header = path.read_bytes().split(b"\n", 1)[0]
        assert header == b"4 3 5"
        np.testing.assert_array_equal(read_frames(path), frames)

    def test_features_round_trip(self, tmp_path):
        feats = np.random.default_rng(1).standard_normal((7, 6))
        path = tmp_path / "f.bin"
        write_features(path, feats)
        assert path.read_bytes().startswith(b"7 6\n")
        np.testing.assert_array_equal(read_features(path), feats)

    def test_corpus_round_trip(self, tmp_path):
        videos, vocab = generate_synthetic_corpus(seed=2, n_videos=3, frames_per_video=96)
        data.save_corpus(videos, vocab, tmp_path / "corpus")
        loaded, loaded_vocab = data.load_corpus(tmp_path / "corpus")
        assert loaded_vocab.keys == vocab.keys
        assert [v.video_id for v in loaded] == [v.video_id for v in videos]
        for orig, back in zip(videos, loaded):
            assert back.user_id == orig.user_id
            assert back.labels == orig.labels
            np.testing.assert_array_equal(back.frames, orig.frames)
