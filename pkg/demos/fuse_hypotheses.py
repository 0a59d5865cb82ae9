"""Combine recognizer outputs by alignment and weighted voting.

Three mock systems transcribe the same utterance with different
mistakes. Folding them into a word transition network and voting per
slot recovers the majority reading; the alpha knob trades vote counts
against confidence scores, and the null confidence decides whether a
word nobody else saw survives.
"""

import farfield as ff


def main():
    systems = [
        ["the", "cat", "sat", "on", "a", "mat"],
        ["the", "cat", "sat", "an", "the", "mat"],
        ["a", "cat", "sat", "on", "the", "mat"],
    ]
    fused = ff.rover(systems)
    print("count voting:", " ".join(fused))

    # insertions appear as null arcs: a word only one system heard must
    # beat the empty alternative to make it into the output
    with_insertion = [
        ["move", "the", "big", "box"],
        ["move", "the", "box"],
        ["move", "the", "box"],
    ]
    print("insertion outvoted:", " ".join(ff.rover(with_insertion)))

    # confidence scores flip a 2-1 count vote when alpha leans on them
    scored = [
        [("yes", 0.9)],
        [("no", 0.2)],
        [("no", 0.3)],
    ]
    for alpha in (1.0, 0.5, 0.0):
        fused = ff.rover(scored, alpha=alpha)
        print(f"alpha={alpha:3.1f}: {' '.join(fused)}")

    # null_conf is the standing score of "output nothing"; a low-score
    # word only one system heard survives only while it beats the null
    minority = [["ok", ("then", 0.3)], ["ok"], ["ok"]]
    for null_conf in (0.1, 0.5):
        fused = ff.rover(minority, alpha=0.0, null_conf=null_conf)
        print(f"null_conf={null_conf}: {' '.join(fused)}")


if __name__ == "__main__":
    main()
