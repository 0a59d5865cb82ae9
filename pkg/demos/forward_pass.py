"""Reference forward passes: encoder blocks, cross-modal fusion, CTC.

All parameters come from a deterministic xorshift64* draw, so every run
prints the same numbers. The script pushes a feature sequence through a
two-branch encoder block (attention + gated convolution), fuses audio
and video streams with cross-attention, scores a label sequence with
CTC, and round-trips the fused features through the flat tensor format.
"""

import numpy as np

import farfield as ff


def main():
    gen = ff.ParamSeed(7).generator()

    # 1. two-branch encoder block, plain and extended variants
    x = ff.FeatureSequence(gen.draw(12, 8), "audio")
    plain = ff.BlockParams.seeded(ff.ParamSeed(1).generator(), dim=8, heads=2, width=3)
    extended = ff.BlockParams.seeded(
        ff.ParamSeed(1).generator(), dim=8, heads=2, width=3, variant="e-branchformer"
    )
    out_plain = ff.branchformer_block(x, plain)
    out_ext = ff.branchformer_block(x, extended)
    print(f"block output norms: plain {np.linalg.norm(out_plain.frames):.4f}, "
          f"e-branchformer {np.linalg.norm(out_ext.frames):.4f}")

    # 2. audio-video fusion: each stream attends to the other, the video
    # context is resampled to the audio frame rate, outputs concatenate
    audio = ff.FeatureSequence(gen.draw(24, 8), "audio")
    video = ff.FeatureSequence(gen.draw(10, 8), "video")
    params = ff.CrossFusionParams.seeded(ff.ParamSeed(2).generator(), dim=8, heads=2)
    fused = ff.cross_modal_fuse(audio, video, params)
    print(f"fused: {fused.length} frames x {fused.dim} dims "
          f"(audio {audio.length}, video {video.length})")

    # 3. CTC loss of a label sequence under a toy classifier
    logits = fused.frames @ gen.draw(fused.dim, 5)
    log_probs = logits - np.logaddexp.reduce(logits, axis=1, keepdims=True)
    loss = ff.ctc_loss(log_probs, (1, 2, 3))
    print(f"ctc loss for labels (1, 2, 3): {loss:.6f}")

    # uniform posteriors have a closed form: 10 of 81 paths survive
    uniform = np.full((4, 3), np.log(1.0 / 3.0))
    print(f"uniform T=4 V=3 single label: {ff.ctc_loss(uniform, (1,)):.6f} "
          f"(= -log(10/81) = {-np.log(10 / 81):.6f})")

    # 4. persist and reload the fused features
    import tempfile
    from pathlib import Path

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "fused.ftoy"
        ff.write_ftoy(path, [fused.frames])
        (back,) = ff.read_ftoy(path)
        print(f"ftoy round trip exact: {np.array_equal(back, fused.frames)}")


if __name__ == "__main__":
    main()
