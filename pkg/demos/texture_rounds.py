# How the pose-candidate weights evolve over the zoom rounds of the texture method.
import numpy as np

from gaugescout.detect_texture import MeterMapEntry, TextureConfig, detect_texture
from gaugescout.imgcore import iou
from gaugescout.ptzsim import SimulatedCamera, perturb_pose
from gaugescout.scene import generate_scene
from gaugescout.template import make_template

for shape, d in [("circle", 160), ("circle", 60), ("rect", 100)]:
    seed = 1
    scene, _ = generate_scene(seed, shape, d)
    pose = perturb_pose(scene.nominal_pose, seed)
    cam = SimulatedCamera(scene, pose, seed=seed)
    res = detect_texture(cam, scene.nominal_pose, make_template(scene.meter("m0")),
                         MeterMapEntry.from_scene(scene), TextureConfig(seed=[seed, 1]))
    print(f"\n{shape} {d}px  true offset ({pose.x - scene.nominal_pose.x:+.3f}, {pose.y - scene.nominal_pose.y:+.3f}) m")
    for t in res.trace[:-1]:
        w = np.sort(t["weights"])[::-1]
        lead = t["lead"]
        print(f"  round {t['round']} zoom {t['ptz'].zoom:5.2f}  matches {t['matches']:3d}  in box {t['inside']:3d}  "
              f"top weights {np.round(w[:3], 3)}  lead offset ({lead.x - scene.nominal_pose.x:+.3f}, "
              f"{lead.y - scene.nominal_pose.y:+.3f})")
    if res.found:
        cam.move(res.ptz)
        print(f"  found, IoU {iou(res.region, cam.truth('m0')):.3f}")
    else:
        print("  not found:", res.reason)
