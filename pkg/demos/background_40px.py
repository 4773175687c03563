# Background method on a meter that is only 40 px wide in the wide shot.
# The meter itself gives almost no features at that size; the wall around it does.
import sys
from pathlib import Path

from gaugescout.detect_background import coarse_localize, detect_background, make_annotation
from gaugescout.imgcore import iou, write_png
from gaugescout.ptzsim import SimulatedCamera, perturb_pose
from gaugescout.scene import generate_scene
from gaugescout.template import make_template

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/background")
out.mkdir(parents=True, exist_ok=True)
seed = 0

scene, gt = generate_scene(seed, "circle", 40)
tmpl = make_template(scene.meter("m0"))
# registration visit: wide shot from the nominal pose, box marked from ground truth
ann = make_annotation(scene, "m0", seed=[seed, 2])
ann.save(out / "annotation.json")
print("template features:", len(tmpl.features), " surround features:", len(ann.features))

# the robot comes back with some pose error
pose = perturb_pose(scene.nominal_pose, seed)
print(f"pose error: dx={pose.x - scene.nominal_pose.x:+.3f} m dy={pose.y - scene.nominal_pose.y:+.3f} m")
cam = SimulatedCamera(scene, pose, seed=seed)

wide = cam.capture()
r, H = coarse_localize(wide, ann)
t = cam.truth("m0")
print(f"coarse box  ({r.x:.1f}, {r.y:.1f}, {r.w:.1f}, {r.h:.1f})  truth ({t.x:.1f}, {t.y:.1f}, {t.w:.1f}, {t.h:.1f})"
      f"  IoU {iou(r, t):.2f}")

cam = SimulatedCamera(scene, pose, seed=seed)
res = detect_background(cam, scene.nominal_pose, ann, tmpl)
cam.move(res.ptz)
print(f"found={res.found} reason={res.reason} zoom={res.ptz.zoom:.2f} confidence={res.confidence:.2f}")
print(f"final IoU {iou(res.region, cam.truth('m0')):.3f}")
for k, (p, img) in enumerate(cam.frames):
    write_png(out / f"frame{k}_z{p.zoom:.1f}.png", img)
print("views written to", out)
