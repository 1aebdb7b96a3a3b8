import io
import json

import pytest

from groundcap.corpus import (
    ANET_PRESET,
    FLICKR_PRESET,
    ImportConfig,
    ObjectClassSet,
    Vocabulary,
    build_vocabulary,
    corpus_stats,
    default_tagger,
    derive_object_classes,
    encode_caption,
    import_release,
    parse_annotations,
    segment_meta,
    serialize_annotations,
    video_durations,
)
from groundcap.errors import ConfigError, DataError


def record(video_id="v1", segment_index=0, total=1, caption=("a", "man", "runs"),
           mentions=None):
    return {
        "video_id": video_id,
        "segment_index": segment_index,
        "total_segments": total,
        "start_s": 0.0,
        "end_s": 5.0,
        "caption": list(caption),
        "mentions": mentions if mentions is not None else [
            {"np": "a man", "tokens": [1], "frame": 0,
             "boxes": [[10.0, 10.0, 50.0, 90.0]], "group": False, "labels": ["man"]},
        ],
    }


def stream(*records):
    return io.StringIO("\n".join(json.dumps(r) for r in records))


class TestParsing:
    def test_round_trips_canonical_record(self):
        rec = record(mentions=[
            {"np": "a man", "tokens": [1], "frame": 0,
             "boxes": [[10.0, 10.0, 50.0, 90.0]], "group": False, "labels": ["man"]},
            {"np": "the road", "tokens": [2], "frame": 1,
             "boxes": [[0.0, 0.0, 30.0, 30.0]], "group": False, "labels": ["road"]},
        ])
        segments, warnings = parse_annotations(stream(rec))
        assert len(segments) == 1 and not warnings
        assert len(segments[0].mentions) == 2
        text = serialize_annotations(segments)
        again, _ = parse_annotations(io.StringIO(text))
        assert serialize_annotations(again) == text

    def test_empty_stream(self):
        segments, warnings = parse_annotations(io.StringIO(""))
        assert segments == [] and warnings == []

    def test_shared_token_drops_second_mention(self):
        rec = record(mentions=[
            {"np": "a man", "tokens": [1], "frame": 0,
             "boxes": [[10.0, 10.0, 50.0, 90.0]], "group": False, "labels": ["man"]},
            {"np": "him", "tokens": [1], "frame": 0,
             "boxes": [[12.0, 10.0, 52.0, 90.0]], "group": False, "labels": ["him"]},
        ])
        segments, warnings = parse_annotations(stream(rec))
        assert len(segments[0].mentions) == 1
        assert len(warnings) == 1

    def test_malformed_json_names_line(self):
        bad = io.StringIO(json.dumps(record()) + "\n{not json}")
        with pytest.raises(DataError, match="line 2"):
            parse_annotations(bad)

    def test_duplicate_segment_rejected(self):
        with pytest.raises(DataError, match="duplicate"):
            parse_annotations(stream(record(), record()))

    def test_bad_segment_index_rejected(self):
        with pytest.raises(DataError):
            parse_annotations(stream(record(segment_index=2, total=2)))

    def test_degenerate_box_drops_mention(self):
        rec = record(mentions=[
            {"np": "a man", "tokens": [1], "frame": 0,
             "boxes": [[50.0, 10.0, 50.0, 90.0]], "group": False, "labels": ["man"]},
        ])
        segments, warnings = parse_annotations(stream(rec))
        assert segments[0].mentions == ()
        assert len(warnings) == 1

    def test_out_of_range_span_drops_mention(self):
        rec = record(mentions=[
            {"np": "a man", "tokens": [7], "frame": 0,
             "boxes": [[10.0, 10.0, 50.0, 90.0]], "group": False, "labels": ["man"]},
        ])
        segments, warnings = parse_annotations(stream(rec))
        assert segments[0].mentions == () and len(warnings) == 1

    def test_missing_labels_fall_back_to_tagger(self):
        rec = record(mentions=[
            {"np": "the tall man", "tokens": [1], "frame": 0,
             "boxes": [[10.0, 10.0, 50.0, 90.0]], "group": False, "labels": []},
        ])
        segments, _ = parse_annotations(stream(rec))
        assert segments[0].mentions[0].labels == ("man",)

    def test_bytes_stream(self):
        raw = io.BytesIO(json.dumps(record()).encode("utf-8"))
        segments, _ = parse_annotations(raw)
        assert segments[0].video_id == "v1"


class TestTagger:
    @pytest.mark.parametrize("np_text,expected", [
        ("a man", ["man"]),
        ("the white shirt", ["shirt"]),
        ("the woman on the right", ["woman"]),
        ("him", ["him"]),
        ("two dogs", ["dogs"]),
    ])
    def test_head_word(self, np_text, expected):
        assert default_tagger(np_text) == expected


class TestVocabulary:
    def _corpus(self, captions):
        return [
            parse_annotations(stream(record(video_id=f"v{i}", caption=c, mentions=[]))).segments[0]
            for i, c in enumerate(captions)
        ]

    def test_min_count_threshold(self):
        corpus = self._corpus([["a"] * 5 + ["b"] * 2 + ["c"] * 3])
        vocab = build_vocabulary(corpus, min_count=3, max_len=20)
        assert set(vocab.id_to_token[4:]) == {"a", "c"}
        assert vocab.id_of("b") == vocab.unk_id

    def test_empty_corpus_gives_specials_only(self):
        vocab = build_vocabulary([], min_count=3, max_len=20)
        assert len(vocab) == 4

    def test_truncation_before_counting_and_encoding(self):
        corpus = self._corpus([["w"] * 20 + ["tail"] * 5])
        vocab = build_vocabulary(corpus, min_count=3, max_len=20)
        assert vocab.id_of("tail") == vocab.unk_id  # truncated away before counting
        ids = vocab.encode(["w"] * 25)
        assert len(ids) == 21 and ids[-1] == vocab.eos_id

    def test_json_round_trip(self):
        corpus = self._corpus([["a"] * 3 + ["b"] * 3])
        vocab = build_vocabulary(corpus, min_count=3, max_len=20)
        again = Vocabulary.from_json(vocab.to_json())
        assert again.token_to_id == vocab.token_to_id
        assert again.content_hash() == vocab.content_hash()

    def test_presets(self):
        assert ANET_PRESET == {"min_count": 3, "max_len": 20, "class_threshold": 50}
        assert FLICKR_PRESET == {"min_count": 5, "max_len": 16, "class_threshold": 100}


def corpus_with_labels(label_counts):
    """One single-token-span mention per label occurrence."""
    records = []
    i = 0
    for label, count in label_counts.items():
        for _ in range(count):
            records.append(record(
                video_id=f"v{i}", caption=("a", label, "runs"),
                mentions=[{"np": f"a {label}", "tokens": [1], "frame": 0,
                           "boxes": [[0.0, 0.0, 10.0, 10.0]], "group": False,
                           "labels": [label]}],
            ))
            i += 1
    return parse_annotations(stream(*records)).segments


class TestObjectClasses:
    def test_threshold_counting(self):
        classes = derive_object_classes(corpus_with_labels({"dog": 3, "cat": 1}), 2)
        assert classes.names == ("dog",)

    def test_ordering_frequency_then_lexicographic(self):
        classes = derive_object_classes(
            corpus_with_labels({"dog": 2, "cat": 5, "ant": 2}), 2)
        assert classes.names == ("cat", "ant", "dog")

    def test_threshold_monotonicity(self):
        corpus = corpus_with_labels({"dog": 5, "cat": 3, "ant": 2, "bee": 1})
        sizes = [derive_object_classes(corpus, t).num_classes for t in range(1, 7)]
        assert sizes == sorted(sizes, reverse=True)

    def test_determinism(self):
        corpus = corpus_with_labels({"dog": 2, "cat": 2, "ant": 2})
        a = derive_object_classes(corpus, 1)
        b = derive_object_classes(list(corpus), 1)
        assert a.names == b.names and a.to_json() == b.to_json()

    def test_bad_threshold(self):
        with pytest.raises(ConfigError):
            derive_object_classes([], 0)

    def test_lemma_lookup(self):
        classes = ObjectClassSet(names=("dog", "box"))
        assert classes.class_of("dogs") == 0
        assert classes.class_of("boxes") == 1
        assert classes.class_of("cat") is None


class TestEncodeCaption:
    def _setup(self, caption, mentions, class_names=("man",)):
        seg = parse_annotations(stream(record(caption=caption, mentions=mentions))).segments[0]
        vocab = build_vocabulary([seg], min_count=1, max_len=20)
        classes = ObjectClassSet(names=class_names)
        return seg, vocab, classes

    def test_simple_mask(self):
        seg, vocab, classes = self._setup(
            ("a", "man", "runs"),
            [{"np": "a man", "tokens": [1], "frame": 0,
              "boxes": [[0.0, 0.0, 10.0, 10.0]], "group": False, "labels": ["man"]}],
        )
        enc = encode_caption(seg, vocab, classes)
        assert enc.mask == [False, True, False]
        assert len(enc.grounded) == 1
        word = enc.grounded[0]
        assert word.position == 1 and word.class_id == 0 and len(word.boxes) == 1

    def test_no_mentions_all_false(self):
        seg, vocab, classes = self._setup(("a", "man", "runs"), [])
        enc = encode_caption(seg, vocab, classes)
        assert enc.mask == [False, False, False] and enc.grounded == []

    def test_word_not_in_classes_not_groundable(self):
        seg, vocab, classes = self._setup(
            ("a", "zebra", "runs"),
            [{"np": "a zebra", "tokens": [1], "frame": 0,
              "boxes": [[0.0, 0.0, 10.0, 10.0]], "group": False, "labels": ["zebra"]}],
        )
        enc = encode_caption(seg, vocab, classes)
        assert enc.mask == [False, False, False]

    def test_mention_past_max_len_dropped(self):
        caption = tuple(["w"] * 21 + ["man"])
        seg = parse_annotations(stream(record(
            caption=caption,
            mentions=[{"np": "man", "tokens": [21], "frame": 0,
                       "boxes": [[0.0, 0.0, 10.0, 10.0]], "group": False,
                       "labels": ["man"]}],
        ))).segments[0]
        vocab = build_vocabulary([seg], min_count=1, max_len=20)
        enc = encode_caption(seg, vocab, ObjectClassSet(names=("man",)))
        assert len(enc.token_ids) == 21  # 20 tokens + EOS
        assert enc.grounded == []

    def test_every_groundable_position_has_class_and_box(self):
        seg, vocab, classes = self._setup(
            ("a", "man", "and", "a", "dog"),
            [
                {"np": "a man", "tokens": [1], "frame": 0,
                 "boxes": [[0.0, 0.0, 10.0, 10.0]], "group": False, "labels": ["man"]},
                {"np": "a dog", "tokens": [4], "frame": 1,
                 "boxes": [[0.0, 0.0, 10.0, 10.0], [20.0, 0.0, 30.0, 10.0]],
                 "group": False, "labels": ["dog"]},
            ],
            class_names=("man", "dog"),
        )
        enc = encode_caption(seg, vocab, classes)
        positions = [w.position for w in enc.grounded]
        assert positions == [1, 4]
        assert len(set(positions)) == len(positions)
        for word in enc.grounded:
            assert enc.mask[word.position]
            assert len(word.boxes) >= 1


class TestCorpusStats:
    def test_hand_computed_mean_std(self):
        records = [
            record(video_id="v1", mentions=[
                {"np": "a man", "tokens": [1], "frame": 0,
                 "boxes": [[0.0, 0.0, 10.0, 10.0]], "group": False, "labels": ["man"]}]),
            record(video_id="v2", mentions=[
                {"np": "a man", "tokens": [1], "frame": 0,
                 "boxes": [[0.0, 0.0, 10.0, 10.0], [1.0, 1.0, 5.0, 5.0],
                           [2.0, 2.0, 6.0, 6.0]],
                 "group": False, "labels": ["man"]}]),
        ]
        stats = corpus_stats(parse_annotations(stream(*records)).segments)
        assert stats.boxes_per_segment_mean == pytest.approx(2.0)
        assert stats.boxes_per_segment_std == pytest.approx(1.0)  # population std
        assert stats.box_count == 4

    def test_multi_instance_fraction(self):
        records = [
            record(video_id="v1", mentions=[
                {"np": "a man", "tokens": [1], "frame": 0,
                 "boxes": [[0.0, 0.0, 10.0, 10.0]], "group": False, "labels": ["man"]},
                {"np": "people", "tokens": [2], "frame": 0,
                 "boxes": [[0.0, 0.0, 10.0, 10.0]], "group": True, "labels": ["people"]},
            ]),
        ]
        stats = corpus_stats(parse_annotations(stream(*records)).segments)
        assert stats.multi_instance_fraction == pytest.approx(0.5)

    def test_labels_per_box(self):
        records = [
            record(video_id="v1", mentions=[
                {"np": "a man", "tokens": [1], "frame": 0,
                 "boxes": [[0.0, 0.0, 10.0, 10.0]], "group": False,
                 "labels": ["man", "person"]},
                {"np": "a dog", "tokens": [2], "frame": 0,
                 "boxes": [[0.0, 0.0, 10.0, 10.0]], "group": False, "labels": ["dog"]},
            ]),
        ]
        stats = corpus_stats(parse_annotations(stream(*records)).segments)
        assert stats.labels_per_box_mean == pytest.approx(1.5)

    def test_empty_corpus_null_fields(self):
        stats = corpus_stats([])
        assert stats.segment_count == 0
        assert stats.boxes_per_segment_mean is None
        assert stats.multi_instance_fraction is None


class TestSegmentMeta:
    def test_durations_and_scalars(self):
        segments = parse_annotations(stream(
            record(video_id="v1", segment_index=0, total=2),
            {**record(video_id="v1", segment_index=1, total=2), "start_s": 5.0, "end_s": 12.0},
        )).segments
        durations = video_durations(segments)
        assert durations["v1"] == 12.0
        meta = segment_meta(segments[1], durations["v1"])
        assert meta.segment_index == 1 and meta.duration_s == 12.0

    def test_nonpositive_duration_rejected(self):
        seg = parse_annotations(stream(record())).segments[0]
        with pytest.raises(DataError):
            segment_meta(seg, 0.0)


class TestImporter:
    def _release(self):
        return {
            "database": {
                "vidA": {
                    "duration": 30.0,
                    "timestamps": [[0.0, 10.0], [10.0, 25.0]],
                    "segments": {
                        "0": {
                            "tokens": ["a", "man", "waves"],
                            "process_bnd_box": [[1.0, 2.0, 30.0, 40.0]],
                            "process_clss": [["man"]],
                            "process_idx": [[1]],
                            "frame_ind": [3],
                            "crowds": [0],
                        },
                        "1": {
                            "tokens": ["two", "dogs", "run"],
                            "process_bnd_box": [[0.0, 0.0, 10.0, 10.0],
                                                [20.0, 0.0, 30.0, 10.0]],
                            "process_clss": [["dog"], ["dog"]],
                            "process_idx": [[1], [1]],
                            "frame_ind": [2, 2],
                            "crowds": [0, 0],
                        },
                    },
                },
            }
        }

    def test_import_basic(self):
        segments, warnings = import_release(self._release())
        assert len(segments) == 2 and not warnings
        first = segments[0]
        assert first.video_id == "vidA" and first.total_segments == 2
        assert first.start_s == 0.0 and first.end_s == 10.0
        assert first.mentions[0].labels == ("man",)
        # two boxes sharing a token span merge into one mention
        second = segments[1]
        assert len(second.mentions) == 1
        assert len(second.mentions[0].boxes) == 2

    def test_import_config_key_remap(self):
        release = {"vids": {"v": {"segs": {"0": {
            "words": ["a", "cat"],
            "bb": [[0.0, 0.0, 5.0, 5.0]],
            "cls": [["cat"]],
            "idx": [[1]],
            "fr": [0],
            "crowd": [0],
        }}}}}
        config = ImportConfig(
            database_key="vids", segments_key="segs", tokens_key="words",
            boxes_key="bb", classes_key="cls", token_idx_key="idx",
            frame_key="fr", crowd_key="crowd",
        )
        segments, _ = import_release(release, config)
        assert segments[0].caption == ("a", "cat")
        assert segments[0].mentions[0].labels == ("cat",)

    def test_unknown_config_key_rejected(self):
        with pytest.raises(ConfigError):
            ImportConfig.from_json('{"bogus": 1}')
