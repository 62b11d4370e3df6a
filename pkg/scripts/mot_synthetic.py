"""Run box association on the three-object synthetic sequence and print the metrics.

    python scripts/mot_synthetic.py --similarity rsm --occlusion 40 50
    python scripts/mot_synthetic.py --no-motion --miss-rate 0.1 --position-sigma 1.5
"""
import argparse
import dataclasses

from trackheads.associate import AssocConfig, run_sequence
from trackheads.features import FeatureSource
from trackheads.metrics import TrackSet, evaluate, format_report
from trackheads.similarity import SIMILARITY_MODES
from trackheads.synth import render, three_object_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-frames", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--similarity", choices=SIMILARITY_MODES, default="rsm")
    ap.add_argument("--no-motion", action="store_true")
    ap.add_argument("--occlusion", type=int, nargs=2, metavar=("START", "END"),
                    help="frames [START, END) without detections for the first object")
    ap.add_argument("--miss-rate", type=float, default=0.0)
    ap.add_argument("--position-sigma", type=float, default=0.0)
    args = ap.parse_args()

    sc = three_object_scenario(args.n_frames, args.seed, args.occlusion)
    sc = dataclasses.replace(sc, miss_rate=args.miss_rate, position_sigma=args.position_sigma)
    seq = render(sc)
    src = FeatureSource()
    cfg = AssocConfig(similarity=args.similarity, use_motion=not args.no_motion)
    out = run_sequence([(f, src(img), seq.detections[f]) for f, img in enumerate(seq.frames, start=1)], cfg)
    pred = TrackSet()
    for o in out:
        pred.add(o.frame, o.track_id, o.box)
    print(format_report(evaluate(seq.gt, pred)), end="")


if __name__ == "__main__":
    main()
