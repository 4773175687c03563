# Hough proposals + template check as the meter shrinks in the wide shot.
from gaugescout.detect_shape import detect_shape
from gaugescout.imgcore import iou
from gaugescout.ptzsim import SimulatedCamera, perturb_pose
from gaugescout.scene import generate_scene
from gaugescout.template import make_template

print("shape    d   seed  found  IoU    reason")
for shape in ("circle", "rect"):
    for d in (160, 100, 60, 40):
        for seed in range(2):
            scene, _ = generate_scene(seed, shape, d)
            cam = SimulatedCamera(scene, perturb_pose(scene.nominal_pose, seed), seed=seed)
            res = detect_shape(cam.capture(), make_template(scene.meter("m0")))
            v = iou(res.region, cam.truth("m0")) if res.found else 0.0
            print(f"{shape:7s} {d:4d}  {seed:3d}  {str(res.found):5s}  {v:.3f}  {res.reason or ''}")
