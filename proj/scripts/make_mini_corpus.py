#!/usr/bin/env python3
"""Writes the bundled mini-corpus: 20 synthetic telephone dialogues in the
raw transcript format plus choice-point annotations."""

import argparse
import json
import random
from pathlib import Path

SUBJECTS = [
    "My wife and I", "Most of our neighbors", "I really", "My brother usually", "We just",
    "The people at work", "Our oldest daughter", "A friend of mine", "My parents always",
    "The kids next door", "Everybody I know", "The company I work for",
]
VERBS = ["bought", "tried", "started", "liked", "found", "wanted", "decided", "spent", "kept", "thought"]
REST = [
    "a used car last spring because the old one kept breaking down on the highway.",
    "to plant tomatoes in the back yard but the deer got to them first.",
    "going to the lake every summer when the weather is nice enough.",
    "that the schools around here are a lot better than they used to be.",
    "a whole weekend trying to fix the roof before the rain came in.",
    "about moving closer to the city so the commute would be shorter.",
    "the recycling program was a good idea even though nobody sorts anything.",
    "watching the news at night but lately it is just too depressing.",
    "more money on groceries this year than we did on the house payment.",
    "to learn how to cook something other than spaghetti and hamburgers.",
    "the new day care center down the street for our youngest one.",
    "fishing with his friends up north almost every single weekend in the fall.",
]
QUESTIONS = [
    ("Do you", "think", "the government should do more about the crime problem in the big cities?"),
    ("Have you ever", "tried", "camping out in the mountains during the winter time?"),
    ("Did your kids", "like", "the public schools where you live now or not really?"),
    ("Do you guys", "spend", "a lot of time working in the garden when it gets warm?"),
]
BACKCHANNELS = ["Uh-huh.", "Yeah.", "Right.", "Oh, really?", "Sure."]
FOLLOW_UPS = [
    "I don't know, it just seemed like the right thing to do at the time.",
    "It was a lot of work but I think it paid off in the end.",
    "Anyway that's what we ended up doing.",
    "You know how it is with the prices these days.",
]
ACTS_STATEMENT = ["sd", "sv"]
ACTS_QUESTION = ["qy", "qo"]


def words(s):
    return s.split()


def no_adjacent_repeat(ws):
    return all(a.lower() != b.lower() for a, b in zip(ws, ws[1:]))


def decorate(sentence, rng):
    """Adds transcription markup that the cleaner strips without moving words."""
    ws = words(sentence)
    if rng.random() < 0.3:
        i = rng.randrange(1, len(ws))
        ws.insert(i, "<laughter>")
    if rng.random() < 0.3:
        i = rng.randrange(1, len(ws))
        ws.insert(i, "{F uh, }")
    text = " ".join(ws)
    if rng.random() < 0.5:
        text += " /"
    return text


def target_sentence(rng):
    while True:
        if rng.random() < 0.8:
            subj, verb, rest = rng.choice(SUBJECTS), rng.choice(VERBS), rng.choice(REST)
            act = rng.choice(ACTS_STATEMENT)
        else:
            subj, verb, rest = rng.choice(QUESTIONS)
            act = rng.choice(ACTS_QUESTION)
        ws = words(subj) + [verb] + words(rest)
        if 10 <= len(ws) <= 30 and no_adjacent_repeat(ws):
            return " ".join(ws), len(words(subj)), act


def dialogue(idx, rng):
    did = f"mini{idx:03d}"
    rows, notes = [], []
    turn = 0
    speaker = "A"
    for _ in range(rng.randint(4, 6)):
        sentence, cp, act = target_sentence(rng)
        text = decorate(sentence, rng)
        if rng.random() < 0.4:
            text += " " + rng.choice(FOLLOW_UPS)
        rows.append({"dialogue_id": did, "turn_index": turn, "speaker": speaker, "text": text, "act_tag": act})
        notes.append({"key": f"{did}:{turn}", "choice_point_index": cp})
        turn += 1
        if rng.random() < 0.3:
            rows.append({"dialogue_id": did, "turn_index": turn, "speaker": speaker,
                         "text": rng.choice(FOLLOW_UPS), "act_tag": "sd"})
            turn += 1
        other = "B" if speaker == "A" else "A"
        if rng.random() < 0.35:
            rows.append({"dialogue_id": did, "turn_index": turn, "speaker": other,
                         "text": rng.choice(BACKCHANNELS), "act_tag": "b"})
            turn += 1
            rows.append({"dialogue_id": did, "turn_index": turn, "speaker": speaker,
                         "text": rng.choice(FOLLOW_UPS), "act_tag": "sd"})
            turn += 1
        speaker = other
    return rows, notes


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "mini"))
    ap.add_argument("--dialogues", type=int, default=20)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    transcripts, annotations = [], []
    for i in range(args.dialogues):
        rows, notes = dialogue(i, rng)
        transcripts += rows
        annotations += notes
    with open(out / "transcripts.jsonl", "w") as f:
        for r in transcripts:
            f.write(json.dumps(r) + "\n")
    with open(out / "annotations.jsonl", "w") as f:
        for r in annotations:
            f.write(json.dumps(r) + "\n")


if __name__ == "__main__":
    main()
