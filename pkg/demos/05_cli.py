"""
The command line, end to end
============================

Every step writes its outputs into a directory, echoes the resolved config and
seed, and gives the same bytes when re-run with the same arguments.  This
script drives the CLI through data generation, detection, forecasting,
SNLDS fit/segment/generate and evaluation.
"""

import json
import os
import sys
import tempfile

from switchssm.cli import main


def run(*argv):
    print("$ switchssm", " ".join(argv))
    code = main(list(argv))
    if code:
        sys.exit(code)


with tempfile.TemporaryDirectory() as tmp:
    out = lambda name: os.path.join(tmp, name)  # noqa: E731

    run("gen", "switching", "--seed", "0", "--output", out("gen"))
    run("detect", "--input", out("gen/data.csv"), "--scores", "--output", out("detect"))
    with open(out("detect/report.json")) as f:
        print("change points:", json.load(f)["change_points"])

    run("split-predict", "--input", out("gen/data.csv"), "--output", out("split"))
    with open(out("split/report.json")) as f:
        print("test MSE:", json.load(f)["mse"])

    run("gen", "slds", "--seed", "1", "--output", out("slds"))
    run("snlds", "fit", "--input", out("slds/data.csv"), "--output", out("fit"))
    run("snlds", "segment", "--input", out("slds/data.csv"),
        "--checkpoint", out("fit/checkpoint.json"), "--output", out("seg"))
    run("eval", "--pred", "snlds=" + out("seg/labels.csv"), "--truth", out("slds/data.csv"),
        "--metric", "segmentation-accuracy", "--output", out("eval"))
    with open(out("eval/metrics.json")) as f:
        print("segmentation accuracy:", json.load(f)["results"])

    run("snlds", "generate", "--checkpoint", out("fit/checkpoint.json"), "--seed", "7",
        "--output", out("sample"))
    run("snlds", "generate", "--checkpoint", out("fit/checkpoint.json"), "--seed", "7",
        "--output", out("sample2"))
    same = open(out("sample/trajectory.csv"), "rb").read() == \
        open(out("sample2/trajectory.csv"), "rb").read()
    print("generate is reproducible:", same)
