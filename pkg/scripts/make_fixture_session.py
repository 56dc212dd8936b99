"""Build a deterministic three-minute recording with known trigger times.

Scene plan (fps 4, one frame every 250 ms, 720 frames, frames byte-identical
within a scene):

    A  frames 000..239   t 0      .. 59750    lakeside path
    B  frames 240..479   t 60000  .. 119750   pavilion lawn
    C  frames 480..719   t 120000 .. 179750   sculpture garden

With the content-hash image embedder sampled at 4 Hz and the default window
(16 slots, 0.8 changed fraction, cosine threshold 0.6, 12 s interval), the
derivation goes:

 - The window first fills at frame 15 (t 3750) and becomes the reference.
 - Scene B starts at t 60000; the 13th B sample lands at t 63000, which is
   the first moment 13 of 16 index-aligned pairs disagree with the all-A
   reference. Constant-sensing trigger at t 63000; the reference becomes
   the 3-A-plus-13-B window, and an all-B current window never has more
   than 3 disagreements with it.
 - Gaze alternates between two far-apart corners every ~33 ms (so no
   accidental fixation survives two samples) except for a planted cluster
   at (0.5, 0.5) covering t 90000..91500. The next wandering sample breaks
   the cluster; 1500 ms >= 1000 ms, so a fixation ending at t 91500 fires
   (28.5 s after the last trigger, clearing the 12 s interval) and the
   reference becomes an all-B window.
 - Scene C starts at t 120000; the 13th C sample lands at t 123000 and
   fires the second constant-sensing trigger.
 - One typed query arrives at t 150000 and always fires.

So a full replay delivers on exactly four triggers: ConstantSensing@63000,
Fixation@91500, ConstantSensing@123000, UserQuery@150000.

The module also carries the scripted chat fixtures for those four pipeline
rounds, so an end-to-end replay is deterministic down to the byte. Run as a
script to materialize the recording plus a profile file.
"""

from __future__ import annotations

import argparse
import io
import itertools
import json
from pathlib import Path

from PIL import Image, ImageDraw

from fieldlens.providers.mock import (
    CombinedHashEmbedder,
    HashImageEmbedder,
    HashTextEmbedder,
    ScriptedChatProvider,
    ScriptRule,
)

SESSION_ID = "fixture-lakeside-01"
START_WALLCLOCK = "2024-05-18T10:30:00+08:00"
LOCATION = "lakeside park"
FPS = 4.0
FRAME_COUNT = 720
SCENE_BOUNDARIES = (240, 480)  # first frame index of scenes B and C

GAZE_HZ = 30
GAZE_COUNT = 5400
CLUSTER_FIRST_K = 2700  # t 90000
CLUSTER_LAST_K = 2745  # t 91500

QUERY_T_MS = 150000
QUERY_TEXT = "What is the tall structure on the far shore?"

# What a default-config replay (sample_hz forced to 4.0 so every frame is
# sampled) must produce, in order.
EXPECTED_TRIGGERS = (
    ("ConstantSensing", 63000),
    ("Fixation", 91500),
    ("ConstantSensing", 123000),
    ("UserQuery", 150000),
)
CONFIG_OVERRIDES = {"sample_hz": 4.0}

PROFILE = {
    "Values/Interest": [
        "urban ecology",
        "local history",
        "architecture",
        "birdwatching",
        "photography",
        "public art",
        "walking routes",
    ],
    "Age": "29",
    "Gender": "non-binary",
    "Citizenship": "Singapore",
    "Residence": "Singapore",
    "Education": "MSc environmental engineering",
    "Occupation": "water systems analyst",
    "Preferred Language": "en",
}


def _scene_png(background: tuple[int, int, int], blocks) -> bytes:
    img = Image.new("RGB", (128, 72), background)
    draw = ImageDraw.Draw(img)
    for (x0, y0, x1, y1), color in blocks:
        draw.rectangle((x0, y0, x1, y1), fill=color)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def scene_images() -> tuple[bytes, bytes, bytes]:
    a = _scene_png((70, 110, 160), [((10, 40, 60, 70), (50, 90, 40)), ((80, 10, 120, 30), (200, 200, 210))])
    b = _scene_png((120, 140, 90), [((30, 20, 90, 60), (150, 60, 40)), ((0, 60, 127, 71), (90, 120, 60))])
    c = _scene_png((150, 150, 150), [((50, 10, 75, 65), (60, 60, 70)), ((10, 55, 40, 70), (170, 140, 90))])
    return a, b, c


def gaze_rows() -> list[dict]:
    rows = []
    for k in range(GAZE_COUNT):
        t = round(k * 1000.0 / GAZE_HZ)
        if CLUSTER_FIRST_K <= k <= CLUSTER_LAST_K:
            x, y, conf = 0.5, 0.5, 0.95
        else:
            x, y = (0.15, 0.2) if k % 2 == 0 else (0.85, 0.8)
            # A sprinkle of below-gate confidences; dropping them leaves at
            # most two same-corner samples in a row (66 ms), far under the
            # duration threshold.
            conf = 0.2 if k % 100 == 50 else 0.95
        rows.append({"t_ms": t, "x": x, "y": y, "confidence": conf})
    return rows


def build_session(session_dir: Path) -> Path:
    frames_dir = session_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "session_id": SESSION_ID,
        "start_wallclock": START_WALLCLOCK,
        "location": LOCATION,
        "geometry": {"hfov_deg": 139.0, "vfov_deg": 83.0},
        "fps": FPS,
    }
    (session_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")

    a, b, c = scene_images()
    for index in range(FRAME_COUNT):
        if index < SCENE_BOUNDARIES[0]:
            data = a
        elif index < SCENE_BOUNDARIES[1]:
            data = b
        else:
            data = c
        (frames_dir / f"{index:06d}.png").write_bytes(data)

    with (session_dir / "gaze.jsonl").open("w", encoding="utf-8") as fh:
        for row in gaze_rows():
            fh.write(json.dumps(row) + "\n")
    with (session_dir / "queries.jsonl").open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"t_ms": QUERY_T_MS, "text": QUERY_TEXT}) + "\n")
    return session_dir


def build_fixture(root: Path) -> tuple[Path, Path]:
    """Returns (session directory, profile file path)."""
    root = Path(root)
    session_dir = build_session(root / "session")
    profile_path = root / "profile.json"
    profile_path.write_text(json.dumps(PROFILE, indent=2) + "\n", encoding="utf-8")
    verify_assumptions(session_dir)
    return session_dir, profile_path


# -- scripted pipeline fixtures ------------------------------------------

# Pipeline rounds are told apart by strings only that round's prompt can
# contain: the trigger wallclock for the scene changes, the fixation
# duration line, and the query text. Context activities then key the
# generation rounds, and first-item content keys the presentation rounds.
_WALLCLOCK_CS1 = "T10:31:03"  # start + 63000 ms
_WALLCLOCK_CS2 = "T10:32:03"  # start + 123000 ms

_CONTEXTS = {
    "cs1": {
        "activity": "strolling along the lakeside path",
        "gaze_mode": "QuickBrowse",
        "primary_entities": ["pavilion"],
        "peripheral_entities": ["willow tree"],
        "predicted_desires": ["learn what the pavilion is for"],
        "familiarity_notes": [["pavilion", "new"]],
    },
    "fix": {
        "activity": "watching the grey heron",
        "gaze_mode": "Focused",
        "primary_entities": ["heron"],
        "peripheral_entities": ["reed bed"],
        "predicted_desires": ["identify the bird"],
        "familiarity_notes": [["heron", "new"]],
    },
    "cs2": {
        "activity": "entering the sculpture garden",
        "gaze_mode": "QuickBrowse",
        "primary_entities": ["bronze sculpture"],
        "peripheral_entities": ["gravel path"],
        "predicted_desires": ["know who made the sculpture"],
        "familiarity_notes": [["bronze sculpture", "new"]],
    },
    "query": {
        "activity": "pausing to look across the water",
        "gaze_mode": "QuickBrowse",
        "primary_entities": ["tower"],
        "peripheral_entities": ["shoreline"],
        "predicted_desires": ["name the tall structure"],
        "familiarity_notes": [["tower", "new"]],
    },
}

# (content, knowledge_type, entities, factors) per generation round; two
# candidates each, pairwise dissimilar so the 0.75 dedup keeps them all.
_CANDIDATES = {
    "cs1": [
        (
            "The octagonal pavilion doubles as a rain shelter and was rebuilt after the 2011 storm.",
            "Factual",
            ["pavilion"],
            {"novelty": 1, "interest_alignment": 1, "usefulness": 1, "unexpectedness": 1},
        ),
        (
            "Willows this close to water grow roots that filter runoff before it reaches the lake.",
            "Conceptual",
            ["willow tree"],
            {"novelty": 1, "interest_alignment": 1, "usefulness": 0, "unexpectedness": 1},
        ),
    ],
    "fix": [
        (
            "Grey herons hunt by standing motionless, and this reed bed hides their favorite perch.",
            "Factual",
            ["heron", "reed bed"],
            {"novelty": 1, "interest_alignment": 1, "usefulness": 1, "unexpectedness": 1},
        ),
        (
            "Reed beds oxygenate shallow margins, which is why dragonflies swarm here at dusk.",
            "Conceptual",
            ["reed bed"],
            {"novelty": 1, "interest_alignment": 0, "usefulness": 1, "unexpectedness": 0},
        ),
    ],
    "cs2": [
        (
            "The bronze sculpture ahead is cast from recycled ship propellers donated by the port.",
            "Factual",
            ["bronze sculpture"],
            {"novelty": 1, "interest_alignment": 1, "usefulness": 0, "unexpectedness": 1},
        ),
        (
            "Gravel paths drain faster than paved ones, so this loop stays open after heavy rain.",
            "Procedural",
            ["gravel path"],
            {"novelty": 1, "interest_alignment": 1, "usefulness": 1, "unexpectedness": 0},
        ),
    ],
    "query": [
        (
            "That is the old waterworks tower, and its observation deck opens on weekend mornings.",
            "Factual",
            ["tower"],
            {"novelty": 1, "interest_alignment": 1, "usefulness": 1, "unexpectedness": 0},
        ),
        (
            "The shoreline promenade below it follows the city's first flood embankment.",
            "Factual",
            ["shoreline", "tower"],
            {"novelty": 1, "interest_alignment": 1, "usefulness": 0, "unexpectedness": 1},
        ),
    ],
}

# Snippets unique to each round's first candidate, used to key the
# transform and image rounds of that delivery.
_ROUND_SNIPPET = {
    "cs1": "octagonal pavilion",
    "fix": "standing motionless",
    "cs2": "recycled ship propellers",
    "query": "old waterworks tower",
}

_TRANSFORMS = {
    "cs1": [
        {"keyword_emoji_pairs": [["Pavilion", "⛩️"], ["Storm-proof", "🌧️"]], "voiceover_text": "That pavilion doubles as a rain shelter, rebuilt after the 2011 storm."},
        {"keyword_emoji_pairs": [["Willow roots", "🌿"]], "voiceover_text": "The willows here filter runoff before it reaches the lake."},
    ],
    "fix": [
        {"keyword_emoji_pairs": [["Heron", "🪶"], ["Perch", "👀"]], "voiceover_text": "Grey herons hunt motionless, and this reed bed hides their favorite perch."},
        {"keyword_emoji_pairs": [["Reed oxygen", "💧"]], "voiceover_text": "Reed beds oxygenate the shallows, which draws dusk dragonflies."},
    ],
    "cs2": [
        {"keyword_emoji_pairs": [["Propeller bronze", "⚓"]], "voiceover_text": "The sculpture ahead is cast from recycled ship propellers."},
        {"keyword_emoji_pairs": [["Gravel drains", "🪨"]], "voiceover_text": "Gravel paths drain fast, so this loop stays open after rain."},
    ],
    "query": [
        {"keyword_emoji_pairs": [["Waterworks tower", "🗼"]], "voiceover_text": "That is the old waterworks tower; its deck opens weekend mornings."},
        {"keyword_emoji_pairs": [["Embankment walk", "🌊"]], "voiceover_text": "The promenade below follows the city's first flood embankment."},
    ],
}

# chosen_frame_t_ms is the newest frame in that round's evidence window;
# the cs1 box overflows the unit square on purpose to exercise clamping.
_IMAGE_REFS = {
    "cs1": {"chosen_frame_t_ms": 63000, "boxes": [{"entity": "pavilion", "x": 0.8, "y": 0.7, "w": 0.4, "h": 0.25}]},
    "fix": {"chosen_frame_t_ms": 91500, "boxes": [{"entity": "heron", "x": 0.45, "y": 0.4, "w": 0.1, "h": 0.2}]},
    "cs2": {"chosen_frame_t_ms": 123000, "boxes": [{"entity": "bronze sculpture", "x": 0.35, "y": 0.1, "w": 0.2, "h": 0.75}]},
    "query": {"chosen_frame_t_ms": 150000, "boxes": [{"entity": "tower", "x": 0.6, "y": 0.05, "w": 0.12, "h": 0.5}]},
}


def _fence(fmt: str, payload: dict) -> str:
    return f"```{fmt}\n{json.dumps(payload, indent=1)}\n```"


def _candidates_payload(round_key: str) -> dict:
    rows = []
    for content, ktype, entities, factors in _CANDIDATES[round_key]:
        rows.append(
            {
                "content": content,
                "knowledge_type": ktype,
                "entities": entities,
                "factors": factors,
                "factor_reasoning": {k: f"{k} call for the {round_key} round" for k in factors},
            }
        )
    return {"candidates": rows}


def fast_rules() -> list[ScriptRule]:
    rules = [
        ScriptRule("context/1", _fence("context/1", _CONTEXTS["cs1"]), contains=_WALLCLOCK_CS1),
        ScriptRule("context/1", _fence("context/1", _CONTEXTS["fix"]), contains="fixated for 1500 ms"),
        ScriptRule("context/1", _fence("context/1", _CONTEXTS["cs2"]), contains=_WALLCLOCK_CS2),
        ScriptRule("context/1", _fence("context/1", _CONTEXTS["query"]), contains=QUERY_TEXT),
    ]
    for key, snippet in _ROUND_SNIPPET.items():
        rules.append(ScriptRule("transform/1", _fence("transform/1", {"items": _TRANSFORMS[key]}), contains=snippet))
        rules.append(ScriptRule("image_ref/1", _fence("image_ref/1", _IMAGE_REFS[key]), contains=snippet))
    return rules


def strong_rules() -> list[ScriptRule]:
    rules = []
    for key in ("cs1", "fix", "cs2"):
        rules.append(
            ScriptRule(
                "candidates/1",
                _fence("candidates/1", _candidates_payload(key)),
                contains=_CONTEXTS[key]["activity"],
            )
        )
    rules.append(
        ScriptRule("candidates/1", _fence("candidates/1", _candidates_payload("query")), contains=QUERY_TEXT)
    )
    return rules


def fixture_chat_providers() -> tuple[ScriptedChatProvider, ScriptedChatProvider]:
    """(fast, strong) providers covering exactly the four expected rounds."""
    return ScriptedChatProvider(rules=fast_rules()), ScriptedChatProvider(rules=strong_rules())


def fixture_embedder() -> CombinedHashEmbedder:
    return CombinedHashEmbedder()


# -- self checks ---------------------------------------------------------


def verify_assumptions(session_dir: Path) -> None:
    """Fail loudly if the hash embedders break the derivation above."""
    import numpy as np

    image_embedder = HashImageEmbedder()
    frames_dir = session_dir / "frames"
    vecs = [
        image_embedder.embed_image(str(frames_dir / f"{i:06d}.png"))
        for i in (0, SCENE_BOUNDARIES[0], SCENE_BOUNDARIES[1])
    ]
    for i, j in itertools.combinations(range(3), 2):
        cos = float(np.dot(vecs[i], vecs[j]))
        if cos >= 0.6:
            raise AssertionError(f"scene pair {i},{j} too similar: cosine {cos:.3f}")

    text_embedder = HashTextEmbedder()
    contents = [c for rounds in _CANDIDATES.values() for c, *_rest in rounds]
    content_vecs = [text_embedder.embed_text(c) for c in contents]
    for i, j in itertools.combinations(range(len(contents)), 2):
        cos = float(np.dot(content_vecs[i], content_vecs[j]))
        if cos >= 0.75:
            raise AssertionError(f"candidate pair {i},{j} too similar: cosine {cos:.3f}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="./fixture", help="output directory")
    args = parser.parse_args()
    session_dir, profile_path = build_fixture(Path(args.out))
    print(f"session: {session_dir}")
    print(f"profile: {profile_path}")
    for kind, t in EXPECTED_TRIGGERS:
        print(f"expect {kind} at t={t} ms")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
