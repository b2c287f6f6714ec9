"""The two evaluation protocols side by side, driven through the CLI.

multi-gt: several scripts per video, top-15% frames per script, F averaged
per video, then over videos. single-gt: one ground truth per video, a
knapsack summary, plus rank correlations against frame importance.
"""
import json
import tempfile
from pathlib import Path

from sdmvsum.cli import main

work = Path(tempfile.mkdtemp(prefix="sdmvsum-demo-"))
manifest = work / "corpus" / "manifest.json"

main(["synth", "--out", str(work / "corpus"), "--videos", "10", "--dim", "16", "--seed", "2"])
main(["train", "--manifest", str(manifest), "--out", str(work / "run"), "--heads", "4",
      "--epochs", "10", "--lr", "1e-3", "--dropout", "0.1"])

for protocol in ("multi-gt", "single-gt"):
    out = work / f"eval-{protocol}"
    print(f"\n== {protocol}")
    main(["evaluate", "--manifest", str(manifest), "--checkpoint", str(work / "run" / "checkpoint"),
          "--out", str(out), "--protocol", protocol, "--split", "test"])
    per_video = json.loads((out / "report.json").read_text())["per_video"]
    for v in per_video:
        tau = "N/A" if v["tau"] is None else f"{v['tau']:.3f}"
        print(f"   {v['video_id']}: F {100 * v['f_score']:.1f}  tau {tau}  pairs {v['pairs']}")

main(["summarize", "--manifest", str(manifest), "--checkpoint", str(work / "run" / "checkpoint"),
      "--out", str(work / "summaries"), "--split", "test"])
print(f"\noutputs under {work}")
