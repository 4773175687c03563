"""Meter-region detection for PTZ inspection cameras, with a planar-wall simulator.

Three detectors share one result type: a Hough-circle proposal method
(``detect_shape``), a pose-candidate method driven by template matches
(``detect_texture``) and a surround-image registration method
(``detect_background``). ``bench`` runs them over synthetic scenes.
"""
from .imgcore import Region, iou
from .ptzsim import CameraConfig, PtzState, RobotPose, SensorModel, SimulatedCamera
from .scene import SceneSpec, generate_scene
from .template import DetectionResult, MeterTemplate, make_template

__all__ = ["Region", "iou", "CameraConfig", "PtzState", "RobotPose", "SensorModel", "SimulatedCamera", "SceneSpec",
           "generate_scene", "DetectionResult", "MeterTemplate", "make_template"]
__version__ = "0.1.0"
