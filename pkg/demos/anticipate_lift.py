"""Train a small model on synthetic lifts, then watch the engine anticipate a lift.

The engine predicts the next 1.5 s of motion every 10 ms, tracks the action
and scores the predicted lift with the lifting index.  The printout samples
the record stream every quarter second; the alert column shows when the
haptic cue would fire.  The model is deliberately small so the script runs
in about ten seconds; an occasional ``inf`` means a prediction put the hands
beyond the horizontal reach limit, where no weight is recommended.
"""
import time

from liftrisk.engine import HapticLevel, NioshContext, run_engine
from liftrisk.gmoe import GmoeModel
from liftrisk.synth import generate_dataset, generate_lift, task_script
from liftrisk.training import TrainConfig, WindowSet, make_training_targets, train


def windows(sequences):
    return WindowSet.concat([make_training_targets(s) for s in sequences])


def main():
    t0 = time.perf_counter()
    ds = generate_dataset(16, seed=5)
    config = TrainConfig(max_epochs=6, patience=2, learning_rate=3e-3, anchor_stride=6, seed=0)
    model, report = train(GmoeModel.initialize(0, hidden=32), windows(ds.train),
                          windows(ds.val).subsample(4), config)
    print(f"trained {report.stop_epoch} epochs in {time.perf_counter() - t0:.0f} s")

    lift = generate_lift(task_script(2, seed=3))
    frames = lift.frames()
    records = [r for r in run_engine(frames, model, context=NioshContext(payload=7.0))
               if hasattr(r, "risk")]
    truth = {round(f.t, 2): f.label.text for f in frames}

    print(f"\n{'t s':>5}  {'true':<9} {'tracked':<9} {'max LI':>6}  alert")
    alerted = False
    for rec in records:
        if round(rec.t * 100) % 25 or not 3.5 <= rec.t <= 9.0:
            continue
        alert = rec.haptic.level >= HapticLevel.SLIGHT
        mark = "<- first alert" if alert and not alerted else ("on" if alert else "")
        alerted = alerted or alert
        print(f"{rec.t:5.2f}  {truth[round(rec.t, 2)]:<9} {rec.action.text:<9} "
              f"{rec.risk.max_li:6.2f}  {mark}")


if __name__ == "__main__":
    main()
